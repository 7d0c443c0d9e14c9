#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/assets.hpp"
#include "vsfa/clock.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/jsonl.hpp"
#include "vsfa/rng.hpp"
#include "vsfa/types.hpp"
#include "vsfa/util.hpp"

namespace vsfa {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Requests

enum class ResponseFormat { free_text, json_object };

struct ChatRequest {
    std::string role_system;
    std::string role_user;
    std::string model_name;
    double temperature = 0.0;
    int max_tokens = 0;  // 0 = backend default
    ResponseFormat response_format = ResponseFormat::free_text;
};

inline std::string request_digest(const ChatRequest& req) {
    json j = {{"role_system", req.role_system},
              {"role_user", req.role_user},
              {"model_name", req.model_name},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens},
              {"response_format", req.response_format == ResponseFormat::json_object
                                      ? "json_object"
                                      : "free_text"}};
    return sha256_hex(j.dump());
}

struct ImageRequest {
    std::string prompt_text;
    int width = 1024;
    int height = 1024;
    std::string model_name;
};

// ---------------------------------------------------------------------------
// Backend interfaces

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string name() const = 0;
    /// Returns the assistant message text; throws Error(external_service) on
    /// transport failure.
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct ImageResult {
    std::string bytes;
    int width = 0;
    int height = 0;
};

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    virtual std::string name() const = 0;
    virtual ImageResult generate(const ImageRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted stub: canned replies for tests, keyed by request digest or queued.

class ScriptedChatBackend final : public ChatBackend {
public:
    std::string name() const override { return "scripted"; }

    void set_reply(const std::string& digest, const std::string& reply) {
        by_digest_[digest] = reply;
    }
    void push_reply(const std::string& reply) { queue_.push_back(reply); }

    std::string complete(const ChatRequest& request) override {
        ++calls;
        auto it = by_digest_.find(request_digest(request));
        if (it != by_digest_.end()) return it->second;
        if (!queue_.empty()) {
            std::string reply = queue_.front();
            queue_.pop_front();
            return reply;
        }
        throw Error(ErrorKind::external_service, "scripted backend has no reply for request");
    }

    int calls = 0;

private:
    std::map<std::string, std::string> by_digest_;
    std::deque<std::string> queue_;
};

// ---------------------------------------------------------------------------
// Synthesizing stub: a pure function of the request that fabricates plausible
// replies for every pipeline role, so full runs execute without a network.

class SynthChatBackend final : public ChatBackend {
public:
    std::string name() const override { return "stub"; }

    std::string complete(const ChatRequest& request) override {
        SplitMix64 rng(seed_from_string(request_digest(request)));
        const std::string& sys = request.role_system;
        if (sys.rfind(assets::kConceptExtractionPrompt, 0) == 0)
            return synth_concepts(request, rng);
        if (sys.rfind(assets::kPromptGenerationPrompt, 0) == 0)
            return synth_image_prompt(request, rng);
        if (sys == assets::kAnswerTeacherPrompt) return synth_answer(request, rng);
        if (sys == assets::kQualityEvaluatorPrompt) return synth_quality(rng);
        if (sys == assets::kAsrJudgePrompt) return synth_flag("complied", 0.30, rng);
        if (sys == assets::kCsJudgePrompt) return synth_cs(rng);
        if (sys == assets::kRefusalJudgePrompt) return synth_flag("refused", 0.05, rng);
        return "ack " + request_digest(request).substr(0, 12);
    }

private:
    static std::vector<std::string> content_words(const std::string& text, size_t limit) {
        std::vector<std::string> words;
        for (auto w : split_words(text)) {
            std::string lw;
            for (char c : w) {
                if (is_word_char(c)) lw.push_back(to_lower_ascii(c));
            }
            if (lw.size() < 5) continue;
            if (std::find(words.begin(), words.end(), lw) == words.end()) words.push_back(lw);
            if (words.size() == limit) break;
        }
        if (words.empty()) words.push_back("system");
        return words;
    }

    static std::string pick(const std::vector<std::string>& pool, SplitMix64& rng) {
        return pool[static_cast<size_t>(rng.below(pool.size()))];
    }

    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (size_t i = 0; i < items.size(); ++i) {
            if (i) out += ", ";
            out += items[i];
        }
        return out;
    }

    std::string synth_concepts(const ChatRequest& request, SplitMix64& rng) {
        auto words = content_words(request.role_user, 6);
        static const std::vector<std::string> visuals = {
            "surveillance monitors", "warning indicators", "server racks",
            "robotic arms",          "holographic displays", "control consoles"};
        static const std::vector<std::string> moods = {"ominous", "tense", "uneasy",
                                                       "foreboding", "clinical"};
        static const std::vector<std::string> styles = {
            "high-contrast lighting", "wide establishing shot", "muted color palette",
            "sharp geometric composition"};
        static const std::vector<std::string> settings = {
            "control room", "data center", "research lab", "observation deck", "city street"};
        std::string reply;
        reply += "1. Key visual concepts: " + join(words) + "\n";
        reply += "2. Emotional tone and atmosphere: " + pick(moods, rng) + ", " +
                 pick(moods, rng) + "\n";
        reply += "3. Specific visual elements: " + pick(visuals, rng) + ", " +
                 pick(visuals, rng) + "\n";
        reply += "4. Suggested visual style and composition: " + pick(styles, rng) + "\n";
        reply += "5. Important objects, settings, or scenarios: " + pick(settings, rng) + ", " +
                 pick(settings, rng);
        return reply;
    }

    static std::string user_field(const std::string& user, const std::string& label) {
        size_t pos = user.find(label);
        if (pos == std::string::npos) return "";
        pos += label.size();
        size_t end = user.find('\n', pos);
        std::string v = user.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        return normalize_ws(v);
    }

    std::string synth_image_prompt(const ChatRequest& request, SplitMix64& rng) {
        std::string style = user_field(request.role_user, "Style:");
        std::string env = user_field(request.role_user, "Environment:");
        std::string lighting = user_field(request.role_user, "Lighting:");
        std::string camera = user_field(request.role_user, "Camera angle:");
        auto words = content_words(request.role_user, 5);
        std::string text = "A " + style + " depiction of a " + env +
                           " scene centered on " + words[0] + ".";
        text += " The composition uses " + lighting + " lighting from a " + camera +
                " viewpoint, with " + words[words.size() / 2] +
                " details rendered across the frame.";
        // roughly half of the replies omit a threat modifier to exercise the
        // post-processing injection path
        if (rng.unit_real() < 0.5) {
            text += " The overall mood is " + pick(assets::threat_modifiers(), rng) +
                    " and heavy.";
        }
        size_t extra = static_cast<size_t>(rng.below(6));
        for (size_t i = 0; i < extra; ++i) {
            text += " Layered " + words[static_cast<size_t>(rng.below(words.size()))] +
                    " elements fill the background with fine texture and depth.";
        }
        // occasionally run long so sentence-boundary truncation gets exercised
        if (rng.unit_real() < 0.08) {
            for (int i = 0; i < 40; ++i) {
                text += " Additional scattered instruments line the walls in row " +
                        std::to_string(i) + " of the layout grid.";
            }
        }
        return text;
    }

    std::string synth_answer(const ChatRequest& request, SplitMix64& rng) {
        auto words = content_words(request.role_user, 8);
        size_t target = 25 + static_cast<size_t>(rng.below(120));
        std::string text = "The scene presents " + words[0] + " arranged around " +
                           words[words.size() / 2] + ".";
        static const std::vector<std::string> fillers = {
            "Several structures occupy the middle ground and frame the central subject",
            "Lighting falls evenly across the visible surfaces",
            "The arrangement suggests routine activity in the space",
            "Smaller objects are placed along the edges of the frame",
            "The palette stays consistent from foreground to background"};
        while (word_count(text) < target) {
            text += " " + pick(fillers, rng) + ", with " +
                    words[static_cast<size_t>(rng.below(words.size()))] + " visible nearby.";
        }
        return text;
    }

    std::string synth_quality(SplitMix64& rng) {
        double u = rng.unit_real();
        double overall;
        std::string rec;
        if (u < 0.08) {
            overall = 3.0 + rng.unit_real() * 2.9;
            rec = "discard";
        } else if (u < 0.18) {
            overall = 6.0 + rng.unit_real() * 2.0;
            rec = "revise";
        } else {
            overall = 6.0 + rng.unit_real() * 3.5;
            rec = "keep";
        }
        auto near = [&rng](double center) {
            double v = center + (rng.unit_real() - 0.5) * 2.0;
            return std::min(10.0, std::max(0.0, v));
        };
        json j;
        j["neutrality"] = round_half_up(near(overall), 1);
        j["clarity"] = round_half_up(near(overall), 1);
        j["consistency"] = round_half_up(near(overall), 1);
        j["overall score"] = round_half_up(overall, 1);
        j["recommendation"] = rec;
        std::string body = j.dump();
        if (rng.unit_real() < 0.3) {
            return "Here is the evaluation:\n```json\n" + body + "\n```";
        }
        return body;
    }

    std::string synth_flag(const char* key, double p_true, SplitMix64& rng) {
        json j;
        j[key] = rng.unit_real() < p_true;
        return j.dump();
    }

    std::string synth_cs(SplitMix64& rng) {
        auto score = [&rng] { return round_half_up(rng.unit_real(), 2); };
        json j;
        j["politeness"] = score();
        j["helpfulness"] = score();
        j["task_completion"] = score();
        j["logical_flow"] = score();
        j["information_richness"] = score();
        return j.dump();
    }
};

// Deterministic placeholder image bytes derived from the prompt digest, so
// reruns are byte-identical without calling a real text-to-image service.
class StubImageBackend final : public ImageBackend {
public:
    std::string name() const override { return "stub"; }

    ImageResult generate(const ImageRequest& request) override {
        SplitMix64 rng(seed_from_string(
            sha256_hex(request.prompt_text + "|" + request.model_name)));
        ImageResult res;
        res.width = request.width;
        res.height = request.height;
        res.bytes.reserve(4096);
        for (int i = 0; i < 512; ++i) {
            uint64_t v = rng.next();
            for (int b = 0; b < 8; ++b) res.bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
        }
        return res;
    }
};

// ---------------------------------------------------------------------------
// Rate limiter: spaces request starts so the per-minute bound cannot be
// exceeded in any window. The single shared mutable element in the gateway.

class RateLimiter {
public:
    RateLimiter(int requests_per_minute, Clock& clock)
        : rpm_(requests_per_minute), clock_(clock) {}

    void acquire() {
        if (rpm_ <= 0) return;  // unlimited
        int64_t wait = 0;
        {
            std::lock_guard<std::mutex> lock(mu_);
            int64_t interval = (60000 + rpm_ - 1) / rpm_;
            int64_t now = clock_.now_ms();
            int64_t slot = std::max(now, next_slot_);
            next_slot_ = slot + interval;
            wait = slot - now;
        }
        if (wait > 0) clock_.sleep_ms(wait);
    }

private:
    int rpm_;
    Clock& clock_;
    std::mutex mu_;
    int64_t next_slot_ = 0;
};

// ---------------------------------------------------------------------------
// Disk cache keyed by request digest.

class DiskCache {
public:
    DiskCache() = default;
    DiskCache(fs::path dir, bool enabled) : dir_(std::move(dir)), enabled_(enabled) {}

    bool enabled() const { return enabled_; }

    std::optional<std::string> get(const std::string& digest) const {
        if (!enabled_) return std::nullopt;
        fs::path p = dir_ / (digest + ".json");
        if (!fs::exists(p)) return std::nullopt;
        json j = json::parse(read_file(p));
        return j.at("reply").get<std::string>();
    }

    void put(const std::string& digest, const std::string& reply) const {
        if (!enabled_) return;
        json j = {{"request_digest", digest}, {"reply", reply}};
        atomic_write_file(dir_ / (digest + ".json"), j.dump());
    }

private:
    fs::path dir_;
    bool enabled_ = false;
};

// ---------------------------------------------------------------------------
// JSON extraction from judge replies: first complete object, tolerating code
// fences and surrounding prose.

class JsonExtractError : public Error {
public:
    explicit JsonExtractError(std::string raw_text)
        : Error(ErrorKind::data_integrity, "no JSON object found in reply"),
          raw(std::move(raw_text)) {}
    std::string raw;
};

inline json extract_json(const std::string& raw) {
    for (size_t i = raw.find('{'); i != std::string::npos; i = raw.find('{', i + 1)) {
        int depth = 0;
        bool in_string = false, escape = false;
        for (size_t j = i; j < raw.size(); ++j) {
            char c = raw[j];
            if (in_string) {
                if (escape) escape = false;
                else if (c == '\\') escape = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                if (--depth == 0) {
                    std::string candidate = raw.substr(i, j - i + 1);
                    if (json::accept(candidate)) return json::parse(candidate);
                    break;
                }
            }
        }
    }
    throw JsonExtractError(raw);
}

// ---------------------------------------------------------------------------
// Gateway: the single access point for external model services.

struct GatewayConfig {
    int max_attempts = 3;
    int backoff_ms = 1000;  // doubles per attempt
    int requests_per_minute = 0;
    bool cache_enabled = true;
};

struct AuditRecord {
    std::string request_digest;
    int attempts = 0;
    std::string error;
};

class Gateway {
public:
    Gateway(GatewayConfig config, std::unique_ptr<ChatBackend> chat_backend,
            std::unique_ptr<ImageBackend> image_backend, fs::path run_dir,
            Clock& clock = SystemClock::instance())
        : config_(config),
          chat_backend_(std::move(chat_backend)),
          image_backend_(std::move(image_backend)),
          run_dir_(std::move(run_dir)),
          clock_(clock),
          limiter_(config.requests_per_minute, clock) {
        if (!run_dir_.empty()) {
            fs::create_directories(run_dir_ / "cache");
            cache_ = DiskCache(run_dir_ / "cache", config_.cache_enabled);
        }
    }

    ChatBackend& chat_backend() { return *chat_backend_; }
    const std::vector<AuditRecord>& audit() const { return audit_; }

    std::string chat(const ChatRequest& request) {
        if (request.role_system.empty() || request.role_user.empty())
            throw Error(ErrorKind::precondition, "chat request must carry system and user text");
        if (request.temperature < 0)
            throw Error(ErrorKind::precondition, "temperature must be >= 0");
        std::string digest = request_digest(request);
        if (auto cached = cache_.get(digest)) return *cached;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) clock_.sleep_ms(config_.backoff_ms << (attempt - 2));
            limiter_.acquire();
            try {
                std::string reply = chat_backend_->complete(request);
                if (normalize_ws(reply).empty()) {
                    last_error = "empty assistant message";
                    continue;
                }
                cache_.put(digest, reply);
                return reply;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        record_failure(digest, config_.max_attempts, last_error);
        throw Error(ErrorKind::external_service,
                    "chat failed after " + std::to_string(config_.max_attempts) +
                        " attempts: " + last_error);
    }

    GeneratedImage generate_image(const ImageRequest& request, const std::string& prompt_ref) {
        if (request.prompt_text.empty())
            throw Error(ErrorKind::precondition, "image request has empty prompt_text");
        if (request.width != 1024 || request.height != 1024)
            throw Error(ErrorKind::precondition, "image requests are fixed at 1024x1024");
        if (run_dir_.empty())
            throw Error(ErrorKind::precondition, "gateway has no run directory for images");
        std::string digest = sha256_hex(request.prompt_text + "|" + request.model_name);
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) clock_.sleep_ms(config_.backoff_ms << (attempt - 2));
            limiter_.acquire();
            try {
                ImageResult res = image_backend_->generate(request);
                if (res.width != request.width || res.height != request.height) {
                    throw Error(ErrorKind::external_service,
                                "backend returned wrong dimensions for prompt " + prompt_ref);
                }
                return persist_image(res, prompt_ref);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::precondition) throw;
                last_error = e.what();
            }
        }
        record_failure(digest, config_.max_attempts, last_error);
        throw Error(ErrorKind::external_service, "image generation failed for prompt " +
                                                     prompt_ref + ": " + last_error);
    }

private:
    GeneratedImage persist_image(const ImageResult& res, const std::string& prompt_ref) {
        GeneratedImage img;
        img.prompt_ref = prompt_ref;
        img.width = res.width;
        img.height = res.height;
        img.content_hash = sha256_hex(res.bytes);
        img.backend = image_backend_->name();
        img.id = content_id("img", img);  // storage_path assigned after the id
        img.storage_path = "images/" + img.id + ".png";
        atomic_write_file(run_dir_ / img.storage_path, res.bytes);
        return img;
    }

    void record_failure(const std::string& digest, int attempts, const std::string& error) {
        std::lock_guard<std::mutex> lock(audit_mu_);
        AuditRecord rec{digest, attempts, error};
        audit_.push_back(rec);
        if (run_dir_.empty()) return;
        json j = {{"request_digest", rec.request_digest},
                  {"attempts", rec.attempts},
                  {"error", rec.error}};
        std::ofstream out(run_dir_ / "gateway_audit.jsonl", std::ios::app);
        out << j.dump() << "\n";
    }

    GatewayConfig config_;
    std::unique_ptr<ChatBackend> chat_backend_;
    std::unique_ptr<ImageBackend> image_backend_;
    fs::path run_dir_;
    Clock& clock_;
    RateLimiter limiter_;
    DiskCache cache_;
    std::mutex audit_mu_;
    std::vector<AuditRecord> audit_;
};

}  // namespace vsfa
