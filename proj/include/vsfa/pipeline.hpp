#pragma once

#include <cerrno>
#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsfa/arxiv.hpp"
#include "vsfa/assets.hpp"
#include "vsfa/emitter.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/eval.hpp"
#include "vsfa/gateway.hpp"
#include "vsfa/jsonl.hpp"
#include "vsfa/live_backends.hpp"
#include "vsfa/prompt_forge.hpp"
#include "vsfa/quality_gate.hpp"
#include "vsfa/sae.hpp"
#include "vsfa/types.hpp"
#include "vsfa/vqa.hpp"

namespace vsfa::pipeline {

namespace fs = std::filesystem;

enum class BackendMode { stub, live };

// ---------------------------------------------------------------------------
// Configuration: one file, sections per module, defaults matching the desk
// preset (10 images). Secrets come from the environment, never from here.

struct PipelineConfig {
    std::string preset = "desk";  // desk | full

    struct Pipe {
        size_t image_count = 10;
        uint64_t seed = 42;
    } pipe;

    arxiv::HarvestConfig harvest;

    struct GatewaySection {
        std::string chat_model = "gpt-4o-mini";
        std::string judge_model = "gpt-4o";
        std::string t2i_model = "doubao-seedream-3-0-t2i-250415";
        double temperature_creative = 0.7;
        double temperature_judge = 0.0;
        int max_tokens = 0;
        int requests_per_minute = 0;
        bool cache_enabled = true;
        int max_attempts = 3;
        int backoff_ms = 1000;
        std::string chat_base_url = "https://api.openai.com";
        std::string t2i_base_url = "https://ark.cn-beijing.volces.com";
        std::string arxiv_base_url = "https://export.arxiv.org";
    } gateway;

    gate::GatePolicy gate_policy;

    struct VqaSection {
        // when set, the teacher instruction is read from this file instead of
        // the built-in asset
        std::string teacher_instruction_path;
    } vqa;

    struct SaeSection {
        size_t top_n = 1000;
        size_t top_tokens_latents = 10;
        size_t top_tokens_k = 7;
    } sae;
};

inline json config_to_json(const PipelineConfig& c) {
    json recs = json::array();
    for (const auto& r : c.gate_policy.allowed_recommendations) recs.push_back(to_string(r));
    return json{
        {"preset", c.preset},
        {"pipeline", {{"image_count", c.pipe.image_count}, {"seed", c.pipe.seed}}},
        {"harvest",
         {{"search_terms", c.harvest.search_terms},
          {"max_per_term", c.harvest.max_per_term},
          {"categories", c.harvest.categories},
          {"max_attempts", c.harvest.max_attempts},
          {"backoff_ms", c.harvest.backoff_ms},
          {"concurrency", c.harvest.concurrency}}},
        {"gateway",
         {{"chat_model", c.gateway.chat_model},
          {"judge_model", c.gateway.judge_model},
          {"t2i_model", c.gateway.t2i_model},
          {"temperature_creative", c.gateway.temperature_creative},
          {"temperature_judge", c.gateway.temperature_judge},
          {"max_tokens", c.gateway.max_tokens},
          {"requests_per_minute", c.gateway.requests_per_minute},
          {"cache_enabled", c.gateway.cache_enabled},
          {"max_attempts", c.gateway.max_attempts},
          {"backoff_ms", c.gateway.backoff_ms},
          {"chat_base_url", c.gateway.chat_base_url},
          {"t2i_base_url", c.gateway.t2i_base_url},
          {"arxiv_base_url", c.gateway.arxiv_base_url}}},
        {"gate",
         {{"min_overall", c.gate_policy.min_overall},
          {"allowed_recommendations", recs},
          {"forbidden_value_terms", c.gate_policy.forbidden_value_terms},
          {"forbidden_safety_terms", c.gate_policy.forbidden_safety_terms}}},
        {"vqa", {{"teacher_instruction_path", c.vqa.teacher_instruction_path}}},
        {"sae",
         {{"top_n", c.sae.top_n},
          {"top_tokens_latents", c.sae.top_tokens_latents},
          {"top_tokens_k", c.sae.top_tokens_k}}}};
}

/// Overlays the sections present in the file onto the defaults. The "full"
/// preset switches image_count to 700 unless the file pins it explicitly.
inline PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.preset = j.value("preset", c.preset);
    if (c.preset == "full") c.pipe.image_count = 700;
    else if (c.preset != "desk")
        throw Error(ErrorKind::precondition, "unknown preset: " + c.preset);

    if (j.contains("pipeline")) {
        const json& p = j.at("pipeline");
        c.pipe.image_count = p.value("image_count", c.pipe.image_count);
        c.pipe.seed = p.value("seed", c.pipe.seed);
    }
    if (j.contains("harvest")) {
        const json& h = j.at("harvest");
        if (h.contains("search_terms")) h.at("search_terms").get_to(c.harvest.search_terms);
        c.harvest.max_per_term = h.value("max_per_term", c.harvest.max_per_term);
        if (h.contains("categories")) h.at("categories").get_to(c.harvest.categories);
        c.harvest.max_attempts = h.value("max_attempts", c.harvest.max_attempts);
        c.harvest.backoff_ms = h.value("backoff_ms", c.harvest.backoff_ms);
        c.harvest.concurrency = h.value("concurrency", c.harvest.concurrency);
    }
    if (j.contains("gateway")) {
        const json& g = j.at("gateway");
        auto& gw = c.gateway;
        gw.chat_model = g.value("chat_model", gw.chat_model);
        gw.judge_model = g.value("judge_model", gw.judge_model);
        gw.t2i_model = g.value("t2i_model", gw.t2i_model);
        gw.temperature_creative = g.value("temperature_creative", gw.temperature_creative);
        gw.temperature_judge = g.value("temperature_judge", gw.temperature_judge);
        gw.max_tokens = g.value("max_tokens", gw.max_tokens);
        gw.requests_per_minute = g.value("requests_per_minute", gw.requests_per_minute);
        gw.cache_enabled = g.value("cache_enabled", gw.cache_enabled);
        gw.max_attempts = g.value("max_attempts", gw.max_attempts);
        gw.backoff_ms = g.value("backoff_ms", gw.backoff_ms);
        gw.chat_base_url = g.value("chat_base_url", gw.chat_base_url);
        gw.t2i_base_url = g.value("t2i_base_url", gw.t2i_base_url);
        gw.arxiv_base_url = g.value("arxiv_base_url", gw.arxiv_base_url);
    }
    if (j.contains("gate")) {
        const json& g = j.at("gate");
        c.gate_policy.min_overall = g.value("min_overall", c.gate_policy.min_overall);
        if (g.contains("allowed_recommendations")) {
            c.gate_policy.allowed_recommendations.clear();
            for (const auto& r : g.at("allowed_recommendations")) {
                c.gate_policy.allowed_recommendations.insert(
                    recommendation_from_string(r.get<std::string>()));
            }
        }
        if (g.contains("forbidden_value_terms"))
            g.at("forbidden_value_terms").get_to(c.gate_policy.forbidden_value_terms);
        if (g.contains("forbidden_safety_terms"))
            g.at("forbidden_safety_terms").get_to(c.gate_policy.forbidden_safety_terms);
    }
    if (j.contains("vqa")) {
        c.vqa.teacher_instruction_path =
            j.at("vqa").value("teacher_instruction_path", c.vqa.teacher_instruction_path);
    }
    if (j.contains("sae")) {
        const json& s = j.at("sae");
        c.sae.top_n = s.value("top_n", c.sae.top_n);
        c.sae.top_tokens_latents = s.value("top_tokens_latents", c.sae.top_tokens_latents);
        c.sae.top_tokens_k = s.value("top_tokens_k", c.sae.top_tokens_k);
    }
    return c;
}

inline PipelineConfig load_config(const fs::path& path) {
    return config_from_json(json::parse(read_file(path)));
}

inline std::string config_digest(const PipelineConfig& c) {
    return sha256_hex(config_to_json(c).dump());
}

// ---------------------------------------------------------------------------
// Pipeline state

struct StageCounter {
    size_t processed = 0;
    size_t total = 0;
};

struct PipelineState {
    std::string run_id;
    std::vector<std::string> completed_stages;
    std::string config_digest;
    std::map<std::string, StageCounter> counters;

    bool completed(const std::string& stage) const {
        return std::find(completed_stages.begin(), completed_stages.end(), stage) !=
               completed_stages.end();
    }
};

inline void to_json(json& j, const StageCounter& c) {
    j = json{{"processed", c.processed}, {"total", c.total}};
}

inline void from_json(const json& j, StageCounter& c) {
    j.at("processed").get_to(c.processed);
    j.at("total").get_to(c.total);
}

inline void to_json(json& j, const PipelineState& s) {
    j = json{{"run_id", s.run_id},
             {"completed_stages", s.completed_stages},
             {"config_digest", s.config_digest},
             {"counters", s.counters}};
}

inline void from_json(const json& j, PipelineState& s) {
    j.at("run_id").get_to(s.run_id);
    j.at("completed_stages").get_to(s.completed_stages);
    j.at("config_digest").get_to(s.config_digest);
    s.counters.clear();
    for (const auto& [k, v] : j.at("counters").items()) s.counters[k] = v.get<StageCounter>();
}

inline const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {"harvest", "concepts", "prompts", "images",
                                                   "vqa",     "qc",       "emit"};
    return order;
}

// ---------------------------------------------------------------------------
// Run directory lock: one active stage per run directory. A lock left behind
// by a dead process is reclaimed.

class RunLock {
public:
    explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
        fs::create_directories(run_dir);
        fd_ = try_acquire();
        if (fd_ < 0 && holder_is_dead()) {
            std::error_code ec;
            fs::remove(path_, ec);
            fd_ = try_acquire();
        }
        if (fd_ < 0)
            throw Error(ErrorKind::precondition,
                        "run directory is locked by another process: " + path_.string());
        std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
    }

    ~RunLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }

    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int try_acquire() { return ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644); }

    bool holder_is_dead() const {
        std::ifstream in(path_);
        long pid = 0;
        if (!(in >> pid) || pid <= 0) return true;  // unreadable lock counts as stale
        if (pid == static_cast<long>(::getpid())) return false;
        return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
    }

    fs::path path_;
    int fd_ = -1;
};

// ---------------------------------------------------------------------------
// The orchestrator

class Run {
public:
    Run(fs::path run_dir, PipelineConfig config, BackendMode mode,
        std::optional<fs::path> harvest_fixtures = std::nullopt,
        Clock& clock = SystemClock::instance())
        : run_dir_(std::move(run_dir)),
          config_(std::move(config)),
          mode_(mode),
          harvest_fixtures_(std::move(harvest_fixtures)),
          clock_(clock) {
        fs::create_directories(run_dir_);
        fs::create_directories(run_dir_ / "out");
        gateway_ = make_gateway();
    }

    const fs::path& dir() const { return run_dir_; }
    const PipelineConfig& config() const { return config_; }
    Gateway& gateway() { return *gateway_; }

    PipelineState state() const {
        fs::path p = state_path();
        if (!fs::exists(p)) {
            PipelineState s;
            s.run_id = run_dir_.filename().string();
            s.config_digest = config_digest(config_);
            return s;
        }
        return json::parse(read_file(p)).get<PipelineState>();
    }

    /// Runs one stage: prior stages must be complete, the config must match
    /// the run, and a completed stage is a no-op without force.
    void run_stage(const std::string& stage, bool force = false) {
        const auto& order = stage_order();
        auto it = std::find(order.begin(), order.end(), stage);
        if (it == order.end())
            throw Error(ErrorKind::precondition, "unknown stage: " + stage);

        PipelineState st = state();
        if (st.config_digest != config_digest(config_))
            throw Error(ErrorKind::precondition,
                        "config drift: run " + st.run_id + " was started with a different config");
        for (auto prior = order.begin(); prior != it; ++prior) {
            if (!st.completed(*prior))
                throw Error(ErrorKind::precondition,
                            "stage \"" + stage + "\" requires completed stage \"" + *prior + "\"");
        }
        if (st.completed(stage) && !force) {
            log(stage, "already complete; skipping (use force to rerun)");
            return;
        }

        StageCounter counter;
        if (stage == "harvest") counter = stage_harvest();
        else if (stage == "concepts") counter = stage_concepts();
        else if (stage == "prompts") counter = stage_prompts();
        else if (stage == "images") counter = stage_images();
        else if (stage == "vqa") counter = stage_vqa();
        else if (stage == "qc") counter = stage_qc();
        else if (stage == "emit") counter = stage_emit();

        if (!st.completed(stage)) st.completed_stages.push_back(stage);
        st.counters[stage] = counter;
        save_state(st);
        log(stage, "complete: " + std::to_string(counter.processed) + "/" +
                       std::to_string(counter.total));
    }

    void run_all(bool force = false) {
        for (const auto& stage : stage_order()) run_stage(stage, force);
    }

    // ------------------------------------------------------------------
    // eval: judges externally produced responses and writes metrics

    struct EvalOutcome {
        json metrics;
        std::string tables;
        std::vector<std::string> warnings;
    };

    EvalOutcome evaluate(const std::vector<fs::path>& responses_files) {
        EvalOutcome outcome;
        eval::EvalJudgeOptions judge_opts;
        judge_opts.model_name = config_.gateway.judge_model;
        judge_opts.temperature = config_.gateway.temperature_judge;
        judge_opts.max_tokens = config_.gateway.max_tokens;

        std::map<std::string, eval::SafetyCells> cells;
        std::map<std::string, json> per_benchmark;
        std::vector<JudgeVerdict> all_verdicts;
        std::string model_tag;

        for (const auto& path : responses_files) {
            eval::BenchmarkRun run = eval::load_benchmark_run(path);
            model_tag = run.model_tag;
            if (eval::safety_benchmarks().count(run.benchmark)) {
                auto judged = eval::judge_safety_run(*gateway_, run, judge_opts);
                append(outcome.warnings, judged.warnings);
                double asr = eval::compute_asr(judged.verdicts);
                std::vector<CsDimensions> dims;
                for (const auto& v : judged.verdicts) {
                    if (v.cs_dimensions) dims.push_back(*v.cs_dimensions);
                }
                double cs = eval::compute_cs(dims);
                cells[run.benchmark] = {asr, cs};
                per_benchmark[run.benchmark] = {{"asr", asr},
                                                {"cs", cs},
                                                {"responses", run.responses.size()},
                                                {"judged_cs", dims.size()}};
                append(all_verdicts, judged.verdicts);
            } else if (run.benchmark == "mm-vet") {
                auto judged = eval::judge_refusal_run(*gateway_, run, judge_opts);
                append(outcome.warnings, judged.warnings);
                double refusal = eval::compute_refusal_rate(judged.verdicts);
                std::vector<eval::ScoredEntry> scored;
                for (const auto& e : run.responses) {
                    if (!e.score)
                        throw Error(ErrorKind::precondition,
                                    "mm-vet entry " + e.sample_id + " carries no score");
                    scored.push_back({e.sample_id, *e.score, e.capabilities});
                }
                auto agg = eval::aggregate_capabilities(scored);
                append(outcome.warnings, agg.warnings);
                per_benchmark["mm-vet"] = {{"refusal_rate", refusal},
                                           {"capabilities", agg.per_capability},
                                           {"total", agg.total}};
                outcome.tables +=
                    eval::render_capability_table(run.model_tag, agg, refusal) + "\n";
                append(all_verdicts, judged.verdicts);
            } else {
                throw Error(ErrorKind::precondition, "unknown benchmark: " + run.benchmark);
            }
        }

        outcome.metrics["benchmarks"] = per_benchmark;
        bool have_all_safety = true;
        for (const auto& b : eval::safety_benchmarks()) have_all_safety &= cells.count(b) > 0;
        if (have_all_safety) {
            auto avg = eval::aggregate_benchmarks(cells);
            outcome.metrics["averages"] = {{"asr", avg.asr_avg}, {"cs", avg.cs_avg}};
            outcome.tables =
                eval::render_safety_table(model_tag, cells, avg) + "\n" + outcome.tables;
        } else if (!cells.empty()) {
            outcome.warnings.push_back(
                "not all three safety benchmarks present; averages omitted");
        }

        write_jsonl(run_dir_ / "verdicts.jsonl", all_verdicts);
        atomic_write_file(run_dir_ / "out" / "metrics.json", outcome.metrics.dump(2) + "\n");
        atomic_write_file(run_dir_ / "out" / "tables.txt", outcome.tables);
        for (const auto& w : outcome.warnings) log("eval", w);
        return outcome;
    }

    // ------------------------------------------------------------------
    // sae-diff: model diffing over exported activations

    struct SaeDiffArgs {
        fs::path sae_weights;
        fs::path activations_original;
        fs::path activations_finetuned;
        std::optional<fs::path> vocab;
        std::optional<fs::path> outcomes;  // SteeringOutcome list (JSON array)
        std::vector<sae::SteeringSpec> steer;
    };

    json sae_diff(const SaeDiffArgs& args) {
        sae::SaeParams params = sae::load_sae(args.sae_weights);
        sae::ActivationDump original = sae::load_activations(args.activations_original);
        sae::ActivationDump finetuned = sae::load_activations(args.activations_finetuned);
        if (original.layer_index != finetuned.layer_index)
            throw Error(ErrorKind::precondition,
                        "activation dumps come from different layers");

        auto mean_original = sae::mean_latent_activation(original, params);
        auto mean_finetuned = sae::mean_latent_activation(finetuned, params);
        auto diffs = sae::latent_diff(mean_original, mean_finetuned, config_.sae.top_n);

        std::optional<std::vector<size_t>> qualifying;
        if (args.outcomes) {
            auto outcomes =
                json::parse(read_file(*args.outcomes)).get<std::vector<sae::SteeringOutcome>>();
            qualifying = sae::classify_bidirectional(outcomes);
        }
        sae::write_latent_diff_report(run_dir_ / "out" / "latent_diff_report.json", diffs,
                                      qualifying ? &*qualifying : nullptr);

        if (args.vocab) {
            sae::VocabEmbeddings vocab = sae::load_vocab(*args.vocab);
            json top_tokens = json::array();
            size_t n = std::min(config_.sae.top_tokens_latents, diffs.size());
            for (size_t i = 0; i < n; ++i) {
                auto tokens = sae::logit_lens_top_tokens(diffs[i].latent_index, params, vocab,
                                                         config_.sae.top_tokens_k);
                top_tokens.push_back(
                    {{"latent_index", diffs[i].latent_index}, {"tokens", tokens}});
            }
            atomic_write_file(run_dir_ / "out" / "top_tokens.json",
                              json{{"latents", top_tokens}}.dump(2) + "\n");
        }

        for (const auto& spec : args.steer) {
            sae::export_steering_vector(spec, params, run_dir_ / "out");
        }

        json summary = {{"latents_reported", diffs.size()},
                        {"layer_index", original.layer_index}};
        if (qualifying) summary["qualifying_latents"] = *qualifying;
        log("sae-diff", "reported " + std::to_string(diffs.size()) + " latents");
        return summary;
    }

    // ------------------------------------------------------------------
    // report

    std::string report() const {
        PipelineState st = state();
        std::string out = "Run " + st.run_id + "\n";
        out += "Stages:\n";
        for (const auto& stage : stage_order()) {
            auto c = st.counters.find(stage);
            out += "  " + stage + ": " + (st.completed(stage) ? "complete" : "pending");
            if (c != st.counters.end()) {
                out += " (" + std::to_string(c->second.processed) + "/" +
                       std::to_string(c->second.total) + ")";
            }
            out += "\n";
        }
        if (fs::exists(run_dir_ / "images.jsonl")) {
            auto images = read_jsonl<GeneratedImage>(run_dir_ / "images.jsonl");
            out += "Images: " + std::to_string(images.size()) + "\n";
        }
        if (fs::exists(run_dir_ / "vqa.jsonl")) {
            auto samples = read_jsonl<VqaSample>(run_dir_ / "vqa.jsonl");
            size_t kept = 0, discarded = 0;
            for (const auto& s : samples) {
                kept += s.gate_status == GateStatus::kept;
                discarded += s.gate_status == GateStatus::discarded;
            }
            out += "VQA pairs: " + std::to_string(samples.size()) + " (kept " +
                   std::to_string(kept) + ", discarded " + std::to_string(discarded) + ")\n";
        }
        if (fs::exists(run_dir_ / "out" / "tables.txt")) {
            out += "\n" + read_file(run_dir_ / "out" / "tables.txt");
        }
        return out;
    }

private:
    fs::path state_path() const { return run_dir_ / "state.json"; }

    void save_state(const PipelineState& st) const {
        json j = st;
        atomic_write_file(state_path(), j.dump(2) + "\n");
    }

    void log(const std::string& stage, const std::string& message) const {
        std::ofstream out(run_dir_ / "run.log", std::ios::app);
        out << iso8601_utc(std::chrono::system_clock::now()) << " [" << stage << "] " << message
            << "\n";
    }

    template <typename T>
    static void append(std::vector<T>& dst, const std::vector<T>& src) {
        dst.insert(dst.end(), src.begin(), src.end());
    }

    std::unique_ptr<Gateway> make_gateway();  // defined with the live backends

    forge::ForgeOptions forge_options() const {
        return {config_.gateway.chat_model, config_.gateway.temperature_creative,
                config_.gateway.max_tokens};
    }

    // ------------------------------------------------------------------
    // stage bodies

    StageCounter stage_harvest() {
        std::unique_ptr<arxiv::FeedBackend> backend;
        std::string retrieved_at;
        if (mode_ == BackendMode::stub) {
            if (harvest_fixtures_)
                backend = std::make_unique<arxiv::FixtureFeedBackend>(*harvest_fixtures_);
            else
                backend = std::make_unique<arxiv::SynthFeedBackend>();
            retrieved_at = "2025-01-01T00:00:00Z";  // fixed so reruns are identical
        } else {
            backend = make_live_feed_backend();
            retrieved_at = iso8601_utc(std::chrono::system_clock::now());
        }
        auto result = arxiv::fetch_abstracts(*backend, config_.harvest, retrieved_at, clock_);
        for (const auto& w : result.warnings) log("harvest", w);
        write_jsonl(run_dir_ / "abstracts.jsonl", result.abstracts);
        return {result.abstracts.size(), result.abstracts.size()};
    }

    StageCounter stage_concepts() {
        auto abstracts = read_jsonl<PaperAbstract>(run_dir_ / "abstracts.jsonl");
        std::vector<ConceptRecord> concepts;
        concepts.reserve(abstracts.size());
        for (const auto& a : abstracts) {
            concepts.push_back(forge::extract_concepts(*gateway_, a, forge_options()));
        }
        write_jsonl(run_dir_ / "concepts.jsonl", concepts);
        return {concepts.size(), abstracts.size()};
    }

    StageCounter stage_prompts() {
        auto concepts = read_jsonl<ConceptRecord>(run_dir_ / "concepts.jsonl");
        if (concepts.empty())
            throw Error(ErrorKind::precondition, "no concept records; harvest produced nothing");
        forge::CombinationTracker tracker(config_.pipe.seed);
        std::vector<ImagePrompt> prompts;
        prompts.reserve(config_.pipe.image_count);
        // round-robin over concept records until the configured image count
        for (size_t i = 0; i < config_.pipe.image_count; ++i) {
            const auto& concept_rec = concepts[i % concepts.size()];
            auto draw = tracker.next();
            prompts.push_back(forge::compose_prompt(*gateway_, concept_rec, draw.style,
                                                    draw.environment, draw.variation,
                                                    forge_options()));
        }
        write_jsonl(run_dir_ / "prompts.jsonl", prompts);
        return {prompts.size(), config_.pipe.image_count};
    }

    StageCounter stage_images() {
        auto prompts = read_jsonl<ImagePrompt>(run_dir_ / "prompts.jsonl");
        std::vector<GeneratedImage> images;
        images.reserve(prompts.size());
        for (const auto& p : prompts) {
            ImageRequest req;
            req.prompt_text = p.prompt_text;
            req.model_name = config_.gateway.t2i_model;
            images.push_back(gateway_->generate_image(req, p.id));
        }
        write_jsonl(run_dir_ / "images.jsonl", images);
        return {images.size(), prompts.size()};
    }

    StageCounter stage_vqa() {
        auto prompts = read_jsonl<ImagePrompt>(run_dir_ / "prompts.jsonl");
        auto images = read_jsonl<GeneratedImage>(run_dir_ / "images.jsonl");
        std::map<std::string, const ImagePrompt*> by_id;
        for (const auto& p : prompts) by_id[p.id] = &p;
        vqa::TeacherOptions teacher{config_.gateway.chat_model,
                                    config_.gateway.temperature_creative,
                                    config_.gateway.max_tokens};
        if (!config_.vqa.teacher_instruction_path.empty()) {
            teacher.instruction = read_file(config_.vqa.teacher_instruction_path);
        }
        std::vector<VqaSample> samples;
        samples.reserve(images.size() * 6);
        for (const auto& img : images) {
            auto it = by_id.find(img.prompt_ref);
            if (it == by_id.end())
                throw Error(ErrorKind::data_integrity,
                            "image " + img.id + " references missing prompt " + img.prompt_ref);
            auto batch =
                vqa::build_samples(*gateway_, img, *it->second, config_.pipe.seed, teacher);
            append(samples, batch);
        }
        write_jsonl(run_dir_ / "vqa.jsonl", samples);
        return {samples.size(), images.size() * 6};
    }

    StageCounter stage_qc() {
        auto samples = read_jsonl<VqaSample>(run_dir_ / "vqa.jsonl");
        gate::JudgeOptions judge{config_.gateway.judge_model, config_.gateway.temperature_judge,
                                 config_.gateway.max_tokens};
        size_t lexical_discards = 0;
        for (auto& s : samples) {
            // the lexical pre-filter runs first and short-circuits to discard
            auto lex = gate::lexical_neutrality_check(s.question, config_.gate_policy);
            if (!lex.pass) {
                s.gate_status = GateStatus::discarded;
                ++lexical_discards;
                std::string terms;
                for (const auto& t : lex.offending_terms) terms += t + " ";
                log("qc", "sample " + s.id + " failed lexical neutrality: " + terms);
                continue;
            }
            s.quality = gate::judge_quality(*gateway_, s, judge);
            s.gate_status = gate::apply_gate(*s.quality, config_.gate_policy);
        }
        write_jsonl(run_dir_ / "vqa.jsonl", samples);
        if (lexical_discards > 0)
            log("qc", std::to_string(lexical_discards) + " samples discarded by lexical check");
        return {samples.size(), samples.size()};
    }

    StageCounter stage_emit() {
        auto samples = read_jsonl<VqaSample>(run_dir_ / "vqa.jsonl");
        auto images = read_jsonl<GeneratedImage>(run_dir_ / "images.jsonl");
        std::vector<VqaSample> kept;
        for (const auto& s : samples) {
            if (s.gate_status == GateStatus::kept) kept.push_back(s);
        }
        emit::emit_dataset(kept, images, run_dir_, run_dir_ / "out" / "dataset.json");
        emit::emit_train_config(run_dir_ / "out" / "train_config.toml");

        auto pre_stats = emit::compute_stats(samples);
        auto post_stats = emit::compute_stats(kept);
        std::string report =
            emit::render_stats_report(pre_stats, "Pre-gate dataset statistics") + "\n" +
            emit::render_stats_report(post_stats, "Post-gate dataset statistics") + "\n";
        report += "Gating\n======\n";
        report += "Kept: " + std::to_string(kept.size()) + "\n";
        report += "Discarded: " + std::to_string(samples.size() - kept.size()) + "\n";
        atomic_write_file(run_dir_ / "out" / "stats_report.txt", report);
        return {kept.size(), samples.size()};
    }

    std::unique_ptr<arxiv::FeedBackend> make_live_feed_backend() {
        return std::make_unique<live::HttpFeedBackend>(config_.gateway.arxiv_base_url);
    }

    fs::path run_dir_;
    PipelineConfig config_;
    BackendMode mode_;
    std::optional<fs::path> harvest_fixtures_;
    Clock& clock_;
    std::unique_ptr<Gateway> gateway_;
};

inline std::unique_ptr<Gateway> Run::make_gateway() {
    GatewayConfig gw_config;
    gw_config.max_attempts = config_.gateway.max_attempts;
    gw_config.backoff_ms = config_.gateway.backoff_ms;
    // the request bound protects live services; in-process stubs have none
    gw_config.requests_per_minute =
        mode_ == BackendMode::stub ? 0 : config_.gateway.requests_per_minute;
    gw_config.cache_enabled = config_.gateway.cache_enabled;

    std::unique_ptr<ChatBackend> chat_backend;
    std::unique_ptr<ImageBackend> image_backend;
    if (mode_ == BackendMode::stub) {
        chat_backend = std::make_unique<SynthChatBackend>();
        image_backend = std::make_unique<StubImageBackend>();
    } else {
        chat_backend = std::make_unique<live::HttpChatBackend>(
            config_.gateway.chat_base_url, live::env_or_empty("VSFA_CHAT_KEY"));
        image_backend = std::make_unique<live::HttpImageBackend>(
            config_.gateway.t2i_base_url, live::env_or_empty("VSFA_T2I_KEY"));
    }
    return std::make_unique<Gateway>(gw_config, std::move(chat_backend),
                                     std::move(image_backend), run_dir_, clock_);
}

}  // namespace vsfa::pipeline
