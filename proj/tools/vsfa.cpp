// Command-line front end for the VSFA pipeline: resumable dataset-construction
// stages over a run directory, response evaluation, and SAE model-diffing.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vsfa/pipeline.hpp"

namespace {

using vsfa::Error;
using vsfa::pipeline::BackendMode;
using vsfa::pipeline::PipelineConfig;
using vsfa::pipeline::Run;
using vsfa::pipeline::RunLock;

struct CommonArgs {
    std::string run_dir;
    std::string config_path;
    std::string backend = "stub";
    std::string fixtures;
    std::optional<uint64_t> seed;
    bool force = false;
};

PipelineConfig build_config(const CommonArgs& args) {
    PipelineConfig config = args.config_path.empty()
                                ? PipelineConfig{}
                                : vsfa::pipeline::load_config(args.config_path);
    if (args.seed) config.pipe.seed = *args.seed;
    return config;
}

BackendMode mode_of(const CommonArgs& args) {
    if (args.backend == "stub") return BackendMode::stub;
    if (args.backend == "live") return BackendMode::live;
    throw Error(vsfa::ErrorKind::precondition, "backend must be stub or live");
}

Run make_run(const CommonArgs& args) {
    std::optional<std::filesystem::path> fixtures;
    if (!args.fixtures.empty()) fixtures = args.fixtures;
    return Run(args.run_dir, build_config(args), mode_of(args), fixtures);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VSFA toolkit: threat-image VQA dataset construction, safety-metric "
                 "evaluation, and TopK-SAE model diffing"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonArgs common;
    app.add_option("--run-dir", common.run_dir, "run directory")->required();
    app.add_option("--config", common.config_path, "config file (JSON, sections per module)");
    app.add_option("--backend", common.backend, "stub or live")
        ->check(CLI::IsMember({"stub", "live"}));
    app.add_option("--seed", common.seed, "override the run seed");
    app.add_option("--fixtures", common.fixtures, "fixture feed directory for harvest");
    app.add_flag("--force", common.force, "rerun a completed stage");

    // one subcommand per pipeline stage, plus orchestration
    struct StageCmd {
        const char* name;
        const char* stage;
        const char* help;
    };
    const std::vector<StageCmd> stage_cmds = {
        {"harvest", "harvest", "fetch abstracts from the arXiv API"},
        {"concepts", "concepts", "extract visual concepts from abstracts"},
        {"prompts", "prompts", "compose image-generation prompts"},
        {"gen-images", "images", "generate images for every prompt"},
        {"build-vqa", "vqa", "attach six neutral questions per image and answer them"},
        {"qc", "qc", "run the quality gate over the VQA samples"},
        {"emit", "emit", "emit dataset.json, train_config.toml, and stats_report.txt"},
    };
    for (const auto& cmd : stage_cmds) app.add_subcommand(cmd.name, cmd.help);
    app.add_subcommand("run-all", "run every pipeline stage in order");

    auto* eval_cmd = app.add_subcommand("eval", "judge benchmark responses and write metrics");
    std::vector<std::string> responses_files;
    eval_cmd->add_option("--responses", responses_files, "responses.jsonl file (repeatable)")
        ->required();

    auto* sae_cmd = app.add_subcommand("sae-diff", "model-diffing over exported activations");
    std::string sae_weights, acts_original, acts_finetuned, vocab_path, outcomes_path;
    std::vector<std::string> steer_specs;
    int target_layer = 0;
    sae_cmd->add_option("--sae", sae_weights, "sae_weights.bin")->required();
    sae_cmd->add_option("--original", acts_original, "activations_original.bin")->required();
    sae_cmd->add_option("--finetuned", acts_finetuned, "activations_finetuned.bin")->required();
    sae_cmd->add_option("--vocab", vocab_path, "vocab_embeddings.bin for logit-lens tokens");
    sae_cmd->add_option("--outcomes", outcomes_path,
                        "steering outcome records for the bidirectional criterion");
    sae_cmd->add_option("--steer", steer_specs, "latent=coefficient to export (repeatable)");
    sae_cmd->add_option("--target-layer", target_layer, "layer index recorded in manifests");

    app.add_subcommand("report", "print a human-readable run summary");

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& cmd : stage_cmds) {
            if (app.got_subcommand(cmd.name)) {
                RunLock lock(common.run_dir);
                make_run(common).run_stage(cmd.stage, common.force);
                std::cout << "stage " << cmd.stage << " done\n";
                return 0;
            }
        }
        if (app.got_subcommand("run-all")) {
            RunLock lock(common.run_dir);
            Run run = make_run(common);
            run.run_all(common.force);
            std::cout << run.report();
            return 0;
        }
        if (app.got_subcommand("eval")) {
            RunLock lock(common.run_dir);
            Run run = make_run(common);
            std::vector<std::filesystem::path> paths(responses_files.begin(),
                                                     responses_files.end());
            auto outcome = run.evaluate(paths);
            std::cout << outcome.tables;
            for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
            return 0;
        }
        if (app.got_subcommand("sae-diff")) {
            RunLock lock(common.run_dir);
            Run run = make_run(common);
            Run::SaeDiffArgs args;
            args.sae_weights = sae_weights;
            args.activations_original = acts_original;
            args.activations_finetuned = acts_finetuned;
            if (!vocab_path.empty()) args.vocab = vocab_path;
            if (!outcomes_path.empty()) args.outcomes = outcomes_path;
            for (const auto& s : steer_specs) {
                size_t eq = s.find('=');
                if (eq == std::string::npos)
                    throw Error(vsfa::ErrorKind::precondition,
                                "--steer expects latent=coefficient, got: " + s);
                vsfa::sae::SteeringSpec spec;
                spec.latent_index = std::stoul(s.substr(0, eq));
                spec.coefficient = std::stod(s.substr(eq + 1));
                spec.target_layer = target_layer;
                args.steer.push_back(spec);
            }
            std::cout << run.sae_diff(args).dump(2) << "\n";
            return 0;
        }
        if (app.got_subcommand("report")) {
            if (!std::filesystem::exists(std::filesystem::path(common.run_dir) / "state.json"))
                throw Error(vsfa::ErrorKind::precondition,
                            "unknown run: " + common.run_dir + " has no state");
            std::cout << make_run(common).report();
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vsfa::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
