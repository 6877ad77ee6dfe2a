#include <catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "rmdistill/pipeline/commands.hpp"

using namespace rmd;
using namespace rmd::pipeline;
namespace fs = std::filesystem;

namespace {

/// Forwards to the mock and counts calls.
class CountingClient : public llm::ChatClient {
public:
    explicit CountingClient(std::shared_ptr<llm::MockTeacher> inner) : inner_(std::move(inner)) {}

    std::string complete_chat(const llm::EndpointConfig& e, std::span<const llm::ChatMessage> m) override {
        ++chat_calls;
        if (fail_model == e.model) throw llm::TransportError("scripted outage");
        return inner_->complete_chat(e, m);
    }
    std::vector<llm::TokenDistribution> teacher_token_distributions(const llm::EndpointConfig& e, std::string_view p,
                                                                    std::string_view c) override {
        if (!distributions) throw llm::UnsupportedCapability("disabled");
        return inner_->teacher_token_distributions(e, p, c);
    }

    std::atomic<int> chat_calls{0};
    std::string fail_model;
    bool distributions = true;

private:
    std::shared_ptr<llm::MockTeacher> inner_;
};

PipelineConfig small_config() {
    PipelineConfig c;
    for (const char* m : {"cand-a", "cand-b", "cand-c", "cand-d"})
        c.candidates.push_back({"http://localhost:1", m, "", llm::candidate_decoding()});
    c.seed = 5;
    c.concurrency = 2;
    c.train.learning_rate = 1.0;
    c.train.epochs = 1;
    return c;
}

fs::path fresh(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("rmd_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Fixture {
    fs::path dir;
    std::shared_ptr<CountingClient> client;
    RunContext ctx;
    fs::path instructions;

    Fixture(const std::string& name, std::size_t n, PipelineConfig cfg = small_config()) : dir(fresh(name)) {
        client = std::make_shared<CountingClient>(std::make_shared<llm::MockTeacher>(cfg.seed, cfg.teacher.model));
        ctx = RunContext{cfg, dir / "run", false, false, client};
        instructions = dir / "instructions.jsonl";
        write_records(instructions, llm::synthetic_instructions(n, cfg.seed, "p", 6, 8));
        fs::create_directories(ctx.out_dir);
    }
};

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

} // namespace

TEST_CASE("generate needs candidates") {
    auto cfg = small_config();
    cfg.candidates.clear();
    Fixture f("nocand", 3, cfg);
    CHECK_THROWS_AS(cmd_generate(f.ctx, f.instructions), ValidationError);
}

TEST_CASE("stages resume without repeating teacher calls") {
    Fixture f("resume", 12);
    const RunPaths paths{f.ctx.out_dir};
    REQUIRE(cmd_generate(f.ctx, f.instructions).exit_code == kOk);
    const int after_generate = f.client->chat_calls;
    CHECK(after_generate == 12 * 4);
    REQUIRE(cmd_annotate(f.ctx, paths.pools()).exit_code == kOk);
    REQUIRE(cmd_refine(f.ctx, paths.annotations()).exit_code == kOk);
    const std::string pools = read_file(paths.pools()), refined = read_file(paths.refined());

    const int before = f.client->chat_calls;
    cmd_generate(f.ctx, f.instructions);
    cmd_annotate(f.ctx, paths.pools());
    cmd_refine(f.ctx, paths.annotations());
    CHECK(f.client->chat_calls == before);
    CHECK(read_file(paths.pools()) == pools);
    CHECK(read_file(paths.refined()) == refined);
}

TEST_CASE("a partially written checkpoint only redoes the missing items") {
    Fixture f("partial", 10);
    const RunPaths paths{f.ctx.out_dir};
    cmd_generate(f.ctx, f.instructions);
    const auto logs = std::vector<fs::directory_entry>(fs::directory_iterator(paths.checkpoints()), {});
    REQUIRE(logs.size() == 1);
    // keep the first 6 records, as if the process died
    std::ifstream in(logs[0].path());
    std::string kept, line;
    for (int i = 0; i < 6 && std::getline(in, line); ++i) kept += line + "\n";
    in.close();
    write_file_atomic(logs[0].path(), kept);
    const int before = f.client->chat_calls;
    cmd_generate(f.ctx, f.instructions);
    CHECK(f.client->chat_calls - before == 4 * 4);
    CHECK(line_count(paths.pools()) == 10);
}

TEST_CASE("candidate outages map to the partial failure exit code") {
    Fixture f("outage", 10);
    f.client->fail_model = "cand-b";
    const auto out = cmd_generate(f.ctx, f.instructions);
    CHECK(out.exit_code == kPartialFailure);
    CHECK(out.report["failed"] == 10);
    // failed items are retried once the endpoint recovers
    f.client->fail_model.clear();
    const auto again = cmd_generate(f.ctx, f.instructions);
    CHECK(again.exit_code == kOk);
    CHECK(again.report["pools"] == 10);
    CHECK(failure_exit_code(1, 10) == kOk);
    CHECK(failure_exit_code(2, 10) == kPartialFailure);
}

TEST_CASE("pools whose responses all tie are skipped") {
    Fixture f("ties", 1);
    const Instruction x{"t1", "How do lomari and vesuka fit in?"};
    const ResponsePool pool{x, {{"a", "same text ok"}, {"b", "other text ok"}, {"c", "third text ok"}}};
    write_records(f.dir / "pools.jsonl", std::vector<ResponsePool>{pool});
    const auto out = cmd_annotate(f.ctx, f.dir / "pools.jsonl");
    CHECK(out.exit_code == kOk);
    CHECK(out.report["pairs"] == 0);
    CHECK(out.report["skipped_tie"] == 1);
    // two draws before the slot is abandoned
    CHECK(f.client->chat_calls == 2);

    const ResponsePool tiny{Instruction{"t2", "q"}, {{"a", "only"}}};
    write_records(f.dir / "tiny.jsonl", std::vector<ResponsePool>{tiny});
    CHECK(cmd_annotate(f.ctx, f.dir / "tiny.jsonl").report["skipped_pool_too_small"] == 1);
}

TEST_CASE("labeled annotation keeps only pairs the teacher agrees with") {
    Fixture f("labeled", 1);
    const Instruction x{"g", "How do lomari and vesuka fit in?"};
    std::vector<nlohmann::json> gold{
        {{"instruction", {{"id", "g1"}, {"text", x.text}}}, {"chosen", "lomari vesuka ok"}, {"rejected", "ERR ok"}},
        {{"instruction", {{"id", "g2"}, {"text", x.text}}}, {"chosen", "ERR ok"}, {"rejected", "lomari vesuka ok"}}};
    write_jsonl(f.dir / "gold.jsonl", gold);
    const auto out = cmd_annotate(f.ctx, f.dir / "gold.jsonl", true);
    CHECK(out.report["pairs"] == 1);
    CHECK(out.report["skipped_inconsistent"] == 1);
}

TEST_CASE("training falls back to beta 0 without teacher distributions") {
    Fixture f("beta0", 15);
    f.client->distributions = false;
    REQUIRE(cmd_e2e(f.ctx, {f.instructions, 0, std::nullopt, std::nullopt, 0}).exit_code == kOk);
    const auto rep = nlohmann::json::parse(read_file(RunPaths{f.ctx.out_dir}.train_report()));
    CHECK(rep["beta_requested"] == 0.2);
    CHECK(rep["beta_effective"] == 0.0);
}

TEST_CASE("e2e is deterministic and skips finished stages") {
    auto cfg = small_config();
    Fixture a("e2e_a", 20, cfg), b("e2e_b", 20, cfg);
    const E2EOptions opt{std::nullopt, 0, std::nullopt, std::nullopt, 0};
    E2EOptions oa = opt, ob = opt;
    oa.instructions = a.instructions;
    ob.instructions = b.instructions;
    const auto ra = cmd_e2e(a.ctx, oa), rb = cmd_e2e(b.ctx, ob);
    REQUIRE(ra.exit_code == kOk);
    REQUIRE(rb.exit_code == kOk);
    CHECK(ra.report["dataset_sha256"] == rb.report["dataset_sha256"]);
    CHECK(ra.report["checkpoint_sha256"] == rb.report["checkpoint_sha256"]);

    const auto manifest = nlohmann::json::parse(read_file(RunPaths{a.ctx.out_dir}.manifest()));
    for (const char* s : {"generate", "annotate", "refine", "filter", "build", "train"}) CHECK(manifest["stages"][s]["status"] == "done");
    CHECK(manifest["stages"]["eval"]["status"] == "skipped");
    CHECK(manifest["config_hash"] == config_hash(cfg));

    const int before = a.client->chat_calls;
    const auto again = cmd_e2e(a.ctx, oa);
    CHECK(a.client->chat_calls == before);
    CHECK(again.report["checkpoint_sha256"] == ra.report["checkpoint_sha256"]);

    // a damaged output reruns its stage and everything after it
    fs::remove(RunPaths{a.ctx.out_dir}.dataset());
    CHECK(cmd_e2e(a.ctx, oa).report["checkpoint_sha256"] == ra.report["checkpoint_sha256"]);
}

TEST_CASE("mock e2e writes every artifact") {
    auto cfg = small_config();
    cfg.concurrency = 1;
    const auto dir = fresh("mock");
    auto ctx = make_context(cfg, dir, true, false);
    const auto out = cmd_e2e(ctx, {std::nullopt, 25, std::nullopt, std::nullopt, 40});
    REQUIRE(out.exit_code == kOk);
    const RunPaths p{dir};
    for (const auto& f : {p.instructions(), p.pools(), p.annotations(), p.teacher_responses(), p.refined(), p.filtered(),
                          p.filter_report(), p.dataset(), p.checkpoint(), p.loss_csv(), p.train_report(), p.eval_pairs(),
                          p.eval_report(), p.manifest()})
        CHECK(fs::exists(f));
    const auto filter = nlohmann::json::parse(read_file(p.filter_report()));
    CHECK(filter["kept"].get<int>() + filter["dropped_edit"].get<int>() + filter["dropped_order"].get<int>() +
              filter["dropped_margin"].get<int>() ==
          filter["total_in"].get<int>());
    CHECK(line_count(p.eval_pairs()) == 40);
    CHECK_THROWS_AS(make_context(cfg, dir, false, false), ValidationError);
}

TEST_CASE("malformed inputs surface as typed errors") {
    Fixture f("bad", 2);
    {
        std::ofstream out(f.dir / "dup.jsonl");
        out << R"({"id":"a","text":"x"})" << "\n" << R"({"id":"a","text":"y"})" << "\n";
    }
    CHECK_THROWS_AS(cmd_generate(f.ctx, f.dir / "dup.jsonl"), ValidationError);
    CHECK_THROWS_AS(cmd_generate(f.ctx, f.dir / "absent.jsonl"), IoError);
}
