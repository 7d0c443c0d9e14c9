#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vsfa/errors.hpp"
#include "vsfa/util.hpp"

namespace vsfa::atom {

struct FeedEntry {
    std::string entry_id;
    std::string title;
    std::string summary;
    std::vector<std::string> categories;
    std::string published;

    bool operator==(const FeedEntry&) const = default;
};

class AtomParseError : public Error {
public:
    AtomParseError(size_t offset, const std::string& msg)
        : Error(ErrorKind::data_integrity,
                msg + " (byte " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    size_t byte_offset;
};

struct ParsedFeed {
    std::vector<FeedEntry> entries;
    std::vector<std::string> warnings;
};

namespace detail {

// Minimal XML scanner covering what Atom feeds actually use: elements,
// attributes, character data, entity references, CDATA, comments, and
// processing instructions. Namespace prefixes are stripped to local names.
class AtomScanner {
public:
    explicit AtomScanner(std::string_view xml) : xml_(xml) {}

    ParsedFeed run() {
        skip_bom();
        skip_misc();
        if (eof()) throw AtomParseError(pos_, "empty document");
        parse_element(/*depth=*/0);
        skip_misc();
        if (!eof()) throw AtomParseError(pos_, "trailing content after root element");
        return std::move(feed_);
    }

private:
    std::string_view xml_;
    size_t pos_ = 0;
    std::vector<std::string> path_;
    ParsedFeed feed_;

    // per-entry accumulation
    FeedEntry current_;
    bool saw_summary_ = false;
    std::string text_;  // chardata for the captured field currently open

    bool eof() const { return pos_ >= xml_.size(); }
    char peek() const { return xml_[pos_]; }
    bool starts_with(std::string_view s) const { return xml_.substr(pos_, s.size()) == s; }

    void skip_bom() {
        if (starts_with("\xEF\xBB\xBF")) pos_ += 3;
    }

    void skip_ws() {
        while (!eof() && is_ascii_space(peek())) ++pos_;
    }

    // whitespace, comments, processing instructions, doctype
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<?")) {
                size_t end = xml_.find("?>", pos_);
                if (end == std::string_view::npos)
                    throw AtomParseError(pos_, "unterminated processing instruction");
                pos_ = end + 2;
            } else if (starts_with("<!--")) {
                skip_comment();
            } else if (starts_with("<!DOCTYPE")) {
                size_t end = xml_.find('>', pos_);
                if (end == std::string_view::npos)
                    throw AtomParseError(pos_, "unterminated doctype");
                pos_ = end + 1;
            } else {
                return;
            }
        }
    }

    void skip_comment() {
        size_t end = xml_.find("-->", pos_ + 4);
        if (end == std::string_view::npos) throw AtomParseError(pos_, "unterminated comment");
        pos_ = end + 3;
    }

    static std::string local_name(std::string_view qname) {
        size_t colon = qname.rfind(':');
        return std::string(colon == std::string_view::npos ? qname : qname.substr(colon + 1));
    }

    std::string read_name() {
        size_t start = pos_;
        while (!eof() && !is_ascii_space(peek()) && peek() != '>' && peek() != '/' &&
               peek() != '=') {
            ++pos_;
        }
        if (pos_ == start) throw AtomParseError(pos_, "expected a name");
        return std::string(xml_.substr(start, pos_ - start));
    }

    std::string decode_entities(std::string_view raw, size_t base_offset) {
        std::string out;
        out.reserve(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] != '&') {
                out.push_back(raw[i]);
                continue;
            }
            size_t semi = raw.find(';', i);
            if (semi == std::string_view::npos)
                throw AtomParseError(base_offset + i, "unterminated entity reference");
            std::string_view name = raw.substr(i + 1, semi - i - 1);
            if (name == "amp") out.push_back('&');
            else if (name == "lt") out.push_back('<');
            else if (name == "gt") out.push_back('>');
            else if (name == "quot") out.push_back('"');
            else if (name == "apos") out.push_back('\'');
            else if (!name.empty() && name[0] == '#') append_codepoint(out, name, base_offset + i);
            else throw AtomParseError(base_offset + i,
                                      "unknown entity &" + std::string(name) + ";");
            i = semi;
        }
        return out;
    }

    static void append_codepoint(std::string& out, std::string_view name, size_t offset) {
        uint32_t cp = 0;
        bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
        std::string_view digits = name.substr(hex ? 2 : 1);
        if (digits.empty()) throw AtomParseError(offset, "empty character reference");
        for (char c : digits) {
            uint32_t d;
            if (c >= '0' && c <= '9') d = static_cast<uint32_t>(c - '0');
            else if (hex && c >= 'a' && c <= 'f') d = static_cast<uint32_t>(c - 'a' + 10);
            else if (hex && c >= 'A' && c <= 'F') d = static_cast<uint32_t>(c - 'A' + 10);
            else throw AtomParseError(offset, "bad character reference");
            cp = cp * (hex ? 16 : 10) + d;
        }
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    // Parses one element starting at '<'. Returns after the matching close.
    void parse_element(int depth) {
        if (eof() || peek() != '<') throw AtomParseError(pos_, "expected element");
        size_t open_offset = pos_;
        ++pos_;  // consume '<'
        std::string name = local_name(read_name());
        if (depth == 0 && name != "feed")
            throw AtomParseError(open_offset, "root element is not <feed>");

        std::vector<std::pair<std::string, std::string>> attrs;
        bool self_closing = false;
        for (;;) {
            skip_ws();
            if (eof()) throw AtomParseError(pos_, "unterminated start tag <" + name + ">");
            if (peek() == '>') {
                ++pos_;
                break;
            }
            if (starts_with("/>")) {
                pos_ += 2;
                self_closing = true;
                break;
            }
            std::string attr_name = local_name(read_name());
            skip_ws();
            if (eof() || peek() != '=')
                throw AtomParseError(pos_, "expected '=' after attribute " + attr_name);
            ++pos_;
            skip_ws();
            if (eof() || (peek() != '"' && peek() != '\''))
                throw AtomParseError(pos_, "attribute value must be quoted");
            char quote = peek();
            ++pos_;
            size_t vstart = pos_;
            size_t vend = xml_.find(quote, pos_);
            if (vend == std::string_view::npos)
                throw AtomParseError(vstart, "unterminated attribute value");
            attrs.emplace_back(attr_name,
                               decode_entities(xml_.substr(vstart, vend - vstart), vstart));
            pos_ = vend + 1;
        }

        path_.push_back(name);
        on_open(attrs);
        if (!self_closing) {
            parse_content(name);
        }
        on_close();
        path_.pop_back();
    }

    void parse_content(const std::string& name) {
        for (;;) {
            if (eof()) throw AtomParseError(pos_, "unexpected end inside <" + name + ">");
            if (starts_with("</")) {
                size_t close_offset = pos_;
                pos_ += 2;
                std::string close = local_name(read_name());
                skip_ws();
                if (eof() || peek() != '>')
                    throw AtomParseError(pos_, "unterminated end tag </" + close + ">");
                ++pos_;
                if (close != name)
                    throw AtomParseError(close_offset, "mismatched end tag </" + close +
                                                           "> for <" + name + ">");
                return;
            }
            if (starts_with("<!--")) {
                skip_comment();
            } else if (starts_with("<![CDATA[")) {
                size_t start = pos_ + 9;
                size_t end = xml_.find("]]>", start);
                if (end == std::string_view::npos)
                    throw AtomParseError(pos_, "unterminated CDATA section");
                on_text(std::string(xml_.substr(start, end - start)));
                pos_ = end + 3;
            } else if (starts_with("<?")) {
                size_t end = xml_.find("?>", pos_);
                if (end == std::string_view::npos)
                    throw AtomParseError(pos_, "unterminated processing instruction");
                pos_ = end + 2;
            } else if (peek() == '<') {
                parse_element(static_cast<int>(path_.size()));
            } else {
                size_t start = pos_;
                size_t lt = xml_.find('<', pos_);
                if (lt == std::string_view::npos)
                    throw AtomParseError(start, "unexpected end inside <" + name + ">");
                on_text(decode_entities(xml_.substr(start, lt - start), start));
                pos_ = lt;
            }
        }
    }

    bool in_entry() const { return path_.size() >= 2 && path_[0] == "feed" && path_[1] == "entry"; }

    // The chardata sink is active while an entry field element is open; text
    // in nested markup (e.g. typed titles) accumulates into the same field.
    const std::string* captured_field() const {
        if (path_.size() < 3 || !in_entry()) return nullptr;
        static const std::string fields[] = {"id", "title", "summary", "published"};
        for (const auto& f : fields) {
            if (path_[2] == f) return &f;
        }
        return nullptr;
    }

    void on_open(const std::vector<std::pair<std::string, std::string>>& attrs) {
        if (path_.size() == 2 && in_entry()) {
            current_ = FeedEntry{};
            saw_summary_ = false;
        } else if (path_.size() == 3 && in_entry()) {
            text_.clear();
            if (path_[2] == "summary") saw_summary_ = true;
            if (path_[2] == "category") {
                for (const auto& [k, v] : attrs) {
                    if (k == "term") current_.categories.push_back(v);
                }
            }
        }
    }

    void on_text(const std::string& text) {
        if (captured_field()) text_ += text;
    }

    void on_close() {
        if (path_.size() == 3 && captured_field()) {
            const std::string& field = path_[2];
            if (field == "id") current_.entry_id = normalize_ws(text_);
            else if (field == "title") current_.title = normalize_ws(text_);
            else if (field == "summary") current_.summary = normalize_ws(text_);
            else if (field == "published") current_.published = normalize_ws(text_);
        } else if (path_.size() == 2 && in_entry()) {
            finish_entry();
        }
    }

    void finish_entry() {
        size_t ordinal = feed_.entries.size() + feed_.warnings.size() + 1;
        if (!saw_summary_ || current_.summary.empty()) {
            feed_.warnings.push_back("entry " + std::to_string(ordinal) + " (" +
                                     (current_.entry_id.empty() ? "<no id>" : current_.entry_id) +
                                     ") has no summary; skipped");
            return;
        }
        if (current_.entry_id.empty()) {
            feed_.warnings.push_back("entry " + std::to_string(ordinal) +
                                     " has no id; skipped");
            return;
        }
        feed_.entries.push_back(std::move(current_));
    }
};

}  // namespace detail

/// Parses an Atom feed document. Entries without a usable summary are skipped
/// and reported in the warnings list; malformed XML throws AtomParseError.
inline ParsedFeed parse_atom_feed(std::string_view xml) {
    return detail::AtomScanner(xml).run();
}

}  // namespace vsfa::atom
