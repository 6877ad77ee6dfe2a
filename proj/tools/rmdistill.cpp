// rmdistill: preference-data synthesis and reward-model training pipeline.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rmdistill/core/config.hpp"
#include "rmdistill/pipeline/commands.hpp"
// after Eigen: <resolv.h> defines a _res macro
#include "rmdistill/llm/http_transport.hpp"

namespace fs = std::filesystem;
using namespace rmd;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> pairs_per_instruction;
    bool mock = false;
    bool verbose = false;
    std::string out = "run";
};

pipeline::RunContext context(const Globals& g) {
    PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.pairs_per_instruction) cfg.synthesis.pairs_per_instruction = *g.pairs_per_instruction;
    validate(cfg);
    std::shared_ptr<llm::Transport> transport;
    if (!g.mock) transport = std::make_shared<llm::HttplibTransport>();
    return pipeline::make_context(std::move(cfg), g.out, g.mock, g.verbose, transport);
}

int report(const pipeline::StageOutcome& o) {
    std::cout << o.report.dump(2) << std::endl;
    return o.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-model distillation pipeline"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--pairs-per-instruction", g.pairs_per_instruction, "Override synthesis.pairs_per_instruction");
    app.add_flag("--mock", g.mock, "Use the built-in deterministic mock for every model");
    app.add_flag("-v,--verbose", g.verbose, "Log each request");
    app.add_option("--out", g.out, "Output directory");

    std::string instructions, pools, annotations, refined, filtered, teacher_responses, dataset, checkpoint, pairs, gold;
    std::size_t synthetic = 200, eval_pairs = 500;

    auto* generate = app.add_subcommand("generate", "Sample one response per candidate model");
    generate->add_option("--instructions", instructions, "Instructions JSONL")->required();

    auto* annotate = app.add_subcommand("annotate", "Sample and score response pairs");
    annotate->add_option("--pools", pools, "Response pools JSONL");
    annotate->add_option("--gold", gold, "Externally labeled pairs JSONL");
    annotate->require_option(1);

    auto* refine = app.add_subcommand("refine", "Refine rejected responses and rescore them");
    refine->add_option("--annotations", annotations, "Annotated pairs JSONL")->required();

    auto* filter = app.add_subcommand("filter", "Apply edit-distance and score-margin thresholds");
    filter->add_option("--refined", refined, "Refined pairs JSONL")->required();

    auto* build = app.add_subcommand("build", "Merge sampled and refined pairs into the training set");
    build->add_option("--annotations", annotations, "Annotated pairs JSONL")->required();
    build->add_option("--filtered", filtered, "Filtered refined pairs JSONL")->required();
    build->add_option("--teacher-responses", teacher_responses, "Teacher responses JSONL");

    auto* train = app.add_subcommand("train", "Train the reward model");
    train->add_option("--dataset", dataset, "Dataset JSONL")->required();

    auto* eval = app.add_subcommand("eval", "Pairwise accuracy of a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    eval->add_option("--pairs", pairs, "Eval pairs JSONL (instruction, better, worse)")->required();

    auto* e2e = app.add_subcommand("e2e", "Run every stage");
    e2e->add_option("--instructions", instructions, "Instructions JSONL");
    e2e->add_option("--gold", gold, "Labeled pairs JSONL (skips generation)");
    e2e->add_option("--synthetic", synthetic, "Synthetic instruction count in mock mode");
    e2e->add_option("--pairs", pairs, "Eval pairs JSONL");
    e2e->add_option("--eval-pairs", eval_pairs, "Synthetic hard eval pairs in mock mode");

    // missing files surface later as IoError (exit 3); usage errors exit 1
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? pipeline::kOk : pipeline::kFatalValidation;
    }

    auto logger = spdlog::stderr_color_mt("rmdistill");
    spdlog::set_default_logger(logger);
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        const auto ctx = context(g);
        fs::create_directories(ctx.out_dir);
        if (*generate) return report(pipeline::cmd_generate(ctx, instructions));
        if (*annotate) return report(gold.empty() ? pipeline::cmd_annotate(ctx, pools) : pipeline::cmd_annotate(ctx, gold, true));
        if (*refine) return report(pipeline::cmd_refine(ctx, annotations));
        if (*filter) return report(pipeline::cmd_filter(ctx, refined));
        if (*build) {
            std::optional<fs::path> tr;
            if (!teacher_responses.empty()) tr = teacher_responses;
            return report(pipeline::cmd_build(ctx, annotations, filtered, tr));
        }
        if (*train) return report(pipeline::cmd_train(ctx, dataset));
        if (*eval) return report(pipeline::cmd_eval(ctx, checkpoint, pairs));
        if (*e2e) {
            pipeline::E2EOptions opt;
            if (!instructions.empty()) opt.instructions = instructions;
            if (!gold.empty()) opt.gold = gold;
            if (!pairs.empty()) opt.eval_pairs = pairs;
            opt.synthetic_instructions = synthetic;
            opt.mock_eval_pairs = eval_pairs;
            return report(pipeline::cmd_e2e(ctx, opt));
        }
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return pipeline::kIoFailure;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return pipeline::kIoFailure;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return pipeline::kFatalValidation;
    }
    return pipeline::kOk;
}
