#pragma once

#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "vsfa/assets.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/gateway.hpp"
#include "vsfa/rng.hpp"
#include "vsfa/types.hpp"

namespace vsfa::forge {

struct ForgeOptions {
    std::string model_name = "gpt-4o-mini";
    double temperature = 0.7;
    int max_tokens = 0;
};

// ---------------------------------------------------------------------------
// Concept extraction

namespace detail {

inline std::string strip_bullet(std::string_view line) {
    std::string s = normalize_ws(line);
    while (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '>')) {
        s.erase(0, 1);
        s = normalize_ws(s);
    }
    return s;
}

inline std::vector<std::string> split_items(const std::string& section) {
    std::vector<std::string> items;
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= section.size()) {
        size_t nl = section.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(section.substr(start));
            break;
        }
        lines.push_back(section.substr(start, nl - start));
        start = nl + 1;
    }
    for (auto& raw : lines) {
        std::string line = strip_bullet(raw);
        if (line.empty()) continue;
        size_t pos = 0;
        while (pos <= line.size()) {
            size_t sep = line.find_first_of(",;", pos);
            std::string item = normalize_ws(
                line.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos));
            if (!item.empty()) items.push_back(item);
            if (sep == std::string::npos) break;
            pos = sep + 1;
        }
    }
    return items;
}

// Pulls the text of numbered sections "1." .. "5." (or "1)" style) out of a
// model reply. Returns false when any marker is missing.
inline bool split_numbered_sections(const std::string& reply,
                                    std::array<std::string, 5>& sections) {
    std::array<size_t, 6> marks{};
    size_t cursor = 0;
    for (int i = 1; i <= 5; ++i) {
        size_t found = std::string::npos;
        for (size_t pos = cursor; pos < reply.size(); ++pos) {
            if (reply[pos] != static_cast<char>('0' + i)) continue;
            if (pos + 1 >= reply.size() || (reply[pos + 1] != '.' && reply[pos + 1] != ')'))
                continue;
            bool at_line_start = true;
            for (size_t b = pos; b-- > 0;) {
                if (reply[b] == '\n') break;
                if (!is_ascii_space(reply[b])) {
                    at_line_start = false;
                    break;
                }
            }
            if (!at_line_start) continue;
            found = pos;
            break;
        }
        if (found == std::string::npos) return false;
        marks[static_cast<size_t>(i - 1)] = found;
        cursor = found + 2;
    }
    marks[5] = reply.size();
    for (int i = 0; i < 5; ++i) {
        size_t body = marks[static_cast<size_t>(i)] + 2;  // skip "N."
        sections[static_cast<size_t>(i)] =
            reply.substr(body, marks[static_cast<size_t>(i + 1)] - body);
    }
    return true;
}

// Section bodies usually open with the label echoed back ("Key visual
// concepts: ...", "Important objects, settings, or scenarios: ..."); drop it
// when the text before the first colon looks like a short wordy label.
inline std::string strip_label(const std::string& section) {
    size_t colon = section.find(':');
    if (colon == std::string::npos || colon >= 64) return section;
    std::string head = section.substr(0, colon);
    if (head.find('\n') != std::string::npos) return section;
    if (word_count(head) > 8) return section;
    for (char c : head) {
        if (c >= '0' && c <= '9') return section;  // "ratio 3:2" is content
    }
    return section.substr(colon + 1);
}

}  // namespace detail

inline bool parse_concept_reply(const std::string& reply, ConceptRecord& out) {
    std::array<std::string, 5> sections;
    if (!detail::split_numbered_sections(reply, sections)) return false;
    out.key_concepts = detail::split_items(detail::strip_label(sections[0]));
    out.atmosphere = detail::split_items(detail::strip_label(sections[1]));
    out.visual_elements = detail::split_items(detail::strip_label(sections[2]));
    out.style_suggestions = detail::split_items(detail::strip_label(sections[3]));
    out.objects_settings = detail::split_items(detail::strip_label(sections[4]));
    return !out.all_empty();
}

/// Sends the concept-extraction prompt with the abstract as user content and
/// parses the five lists; one stricter re-ask on an unparseable reply.
inline ConceptRecord extract_concepts(Gateway& gateway, const PaperAbstract& abstract,
                                      const ForgeOptions& opts = {}) {
    ChatRequest req;
    req.role_system = std::string(assets::kConceptExtractionPrompt);
    req.role_user = abstract.abstract;
    req.model_name = opts.model_name;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;

    ConceptRecord rec;
    if (!parse_concept_reply(gateway.chat(req), rec)) {
        req.role_system += std::string(assets::kConceptRetrySuffix);
        if (!parse_concept_reply(gateway.chat(req), rec)) {
            throw Error(ErrorKind::external_service,
                        "concept extraction reply unparseable for abstract " + abstract.id);
        }
    }
    rec.source_id = abstract.id;
    return rec;
}

// ---------------------------------------------------------------------------
// Style/environment combination allocation

inline const Variation& default_variation() {
    static const Variation v{"daylight", "eye-level"};
    return v;
}

/// Allocates (style, environment, variation) draws without repetition: the
/// first 180 draws cover every base pair once in a seeded shuffle order; later
/// draws revisit base pairs with fresh lighting/camera variations.
class CombinationTracker {
public:
    explicit CombinationTracker(uint64_t seed) : seed_(seed) {
        const auto& styles = assets::visual_styles();
        const auto& envs = assets::scene_environments();
        for (size_t s = 0; s < styles.size(); ++s) {
            for (size_t e = 0; e < envs.size(); ++e) order_.emplace_back(s, e);
        }
        SplitMix64 rng(seed);
        deterministic_shuffle(order_, rng);
    }

    struct Draw {
        std::string style;
        std::string environment;
        Variation variation;
    };

    Draw next() {
        size_t idx = draw_count_ % order_.size();
        size_t round = draw_count_ / order_.size();
        ++draw_count_;
        auto [s, e] = order_[idx];
        Draw draw;
        draw.style = assets::visual_styles()[s];
        draw.environment = assets::scene_environments()[e];
        draw.variation = round == 0 ? default_variation() : variation_for(s, e, round);
        used_base_.insert({s, e});
        used_full_.insert({s, e, draw.variation.lighting, draw.variation.camera_angle});
        return draw;
    }

    size_t used_base_count() const { return used_base_.size(); }
    size_t used_full_count() const { return used_full_.size(); }
    uint64_t seed() const { return seed_; }

private:
    // Per-pair variation order is derived from (seed, pair) alone, so it does
    // not depend on how draws interleave across pairs.
    Variation variation_for(size_t s, size_t e, size_t round) const {
        const auto& lights = assets::lighting_options();
        const auto& cams = assets::camera_angle_options();
        std::vector<Variation> pool;
        for (const auto& l : lights) {
            for (const auto& c : cams) {
                if (l == default_variation().lighting && c == default_variation().camera_angle)
                    continue;
                pool.push_back({l, c});
            }
        }
        SplitMix64 rng(seed_ ^ (0x9E3779B9ULL + s * 131 + e));
        deterministic_shuffle(pool, rng);
        size_t k = round - 1;
        Variation v = pool[k % pool.size()];
        size_t cycle = k / pool.size();
        if (cycle > 0) v.lighting += " #" + std::to_string(cycle + 1);
        return v;
    }

    uint64_t seed_;
    std::vector<std::pair<size_t, size_t>> order_;
    size_t draw_count_ = 0;
    std::set<std::pair<size_t, size_t>> used_base_;
    std::set<std::tuple<size_t, size_t, std::string, std::string>> used_full_;
};

// ---------------------------------------------------------------------------
// Prompt composition

namespace detail {

inline bool token_ends_sentence(std::string_view token) {
    size_t end = token.size();
    while (end > 0 && (token[end - 1] == '"' || token[end - 1] == '\'' ||
                       token[end - 1] == ')' || token[end - 1] == ']')) {
        --end;
    }
    if (end == 0) return false;
    char c = token[end - 1];
    return c == '.' || c == '!' || c == '?';
}

/// Truncates to at most max_words, cutting at the last sentence end before the
/// limit when one exists.
inline std::string truncate_at_sentence(const std::string& text, size_t max_words) {
    auto words = split_words(text);
    if (words.size() <= max_words) return text;
    size_t cut_index = max_words - 1;  // fallback: hard cut at the limit
    for (size_t i = max_words; i-- > 0;) {
        if (token_ends_sentence(words[i])) {
            cut_index = i;
            break;
        }
    }
    const char* begin = text.data();
    const char* end = words[cut_index].data() + words[cut_index].size();
    return std::string(begin, static_cast<size_t>(end - begin));
}

inline std::vector<std::string> modifiers_present(const std::string& text) {
    std::vector<std::string> found;
    for (const auto& m : assets::threat_modifiers()) {
        if (contains_whole_word(text, m)) found.push_back(m);
    }
    return found;
}

inline std::string render_concepts(const ConceptRecord& concepts) {
    auto line = [](const char* label, const std::vector<std::string>& items) {
        std::string out = label;
        for (size_t i = 0; i < items.size(); ++i) {
            out += (i ? ", " : " ") + items[i];
        }
        return out + "\n";
    };
    std::string out = "Concepts extracted from the source text:\n";
    out += line("Key concepts:", concepts.key_concepts);
    out += line("Visual elements:", concepts.visual_elements);
    out += line("Atmosphere:", concepts.atmosphere);
    out += line("Style suggestions:", concepts.style_suggestions);
    out += line("Objects and settings:", concepts.objects_settings);
    return out;
}

}  // namespace detail

/// Composes one image prompt for the given concepts and combination draw.
/// The reply is post-processed: truncated at a sentence boundary to at most
/// 200 words, and a threat modifier is appended when the model omitted one.
inline ImagePrompt compose_prompt(Gateway& gateway, const ConceptRecord& concepts,
                                  const std::string& style, const std::string& environment,
                                  const Variation& variation, const ForgeOptions& opts = {}) {
    if (concepts.all_empty())
        throw Error(ErrorKind::precondition, "cannot compose a prompt from empty concepts");

    ChatRequest req;
    req.role_system = std::string(assets::kPromptGenerationPrompt);
    req.role_user = detail::render_concepts(concepts) + "\nStyle: " + style +
                    "\nEnvironment: " + environment + "\nLighting: " + variation.lighting +
                    "\nCamera angle: " + variation.camera_angle;
    req.model_name = opts.model_name;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;

    std::string text = normalize_ws(gateway.chat(req));
    text = detail::truncate_at_sentence(text, 200);
    if (detail::modifiers_present(text).empty()) {
        // leave room for the injected tail so the limit still holds
        text = detail::truncate_at_sentence(text, 198);
        text += "; ominous atmosphere";
    }

    ImagePrompt prompt;
    prompt.concept_ref = concepts.source_id;
    prompt.prompt_text = text;
    prompt.style = style;
    prompt.environment = environment;
    prompt.modifiers = detail::modifiers_present(text);
    prompt.variation = variation;
    prompt.word_count = static_cast<int>(word_count(text));
    prompt.id = content_id("prompt", prompt);
    return prompt;
}

}  // namespace vsfa::forge
