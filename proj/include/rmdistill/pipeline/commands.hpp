#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmdistill/core/config.hpp"
#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/hash.hpp"
#include "rmdistill/core/rng.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/dataset/dataset.hpp"
#include "rmdistill/dataset/jsonl.hpp"
#include "rmdistill/llm/client.hpp"
#include "rmdistill/llm/mock.hpp"
#include "rmdistill/pipeline/parallel.hpp"
#include "rmdistill/synthesis/synthesis.hpp"
#include "rmdistill/trainer/checkpoint.hpp"
#include "rmdistill/trainer/train.hpp"

namespace rmd::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFatalValidation = 1, kPartialFailure = 2, kIoFailure = 3 };

/// A stage fails as a whole when more than this fraction of its items fail.
inline constexpr double kMaxFailureFraction = 0.10;

/// Everything a command needs besides its input files.
struct RunContext {
    PipelineConfig config;
    fs::path out_dir = "run";
    bool mock = false;
    bool verbose = false;
    std::shared_ptr<llm::ChatClient> client;

    synth::Teacher teacher() const {
        return {client.get(), config.teacher, config.synthesis.strict_parse, config.synthesis.retry_parse};
    }
};

/// Builds the context; `--mock` swaps every endpoint for the seeded mock.
inline RunContext make_context(PipelineConfig config, fs::path out_dir, bool mock, bool verbose,
                               std::shared_ptr<llm::Transport> transport = nullptr) {
    RunContext ctx{std::move(config), std::move(out_dir), mock, verbose, nullptr};
    if (mock) {
        ctx.client = std::make_shared<llm::MockTeacher>(ctx.config.seed, ctx.config.teacher.model);
    } else {
        if (!transport) throw ValidationError("transport", "a transport is required outside mock mode");
        ctx.client = std::make_shared<llm::HttpChatClient>(transport, ctx.config.retry, ctx.config.concurrency,
                                                           llm::real_sleep, verbose);
    }
    return ctx;
}

/// Standard file names inside the output directory.
struct RunPaths {
    fs::path dir;

    fs::path instructions() const { return dir / "instructions.jsonl"; }
    fs::path pools() const { return dir / "pools.jsonl"; }
    fs::path annotations() const { return dir / "annotations.jsonl"; }
    fs::path teacher_responses() const { return dir / "teacher_responses.jsonl"; }
    fs::path refined() const { return dir / "refined.jsonl"; }
    fs::path filtered() const { return dir / "filtered.jsonl"; }
    fs::path filter_report() const { return dir / "filter_report.json"; }
    fs::path dataset() const { return dir / "dataset.jsonl"; }
    fs::path checkpoint() const { return dir / "checkpoint.json"; }
    fs::path loss_csv() const { return dir / "loss.csv"; }
    fs::path train_report() const { return dir / "train_report.json"; }
    fs::path eval_pairs() const { return dir / "eval_pairs.jsonl"; }
    fs::path eval_report() const { return dir / "eval_report.json"; }
    fs::path manifest() const { return dir / "manifest.json"; }
    fs::path checkpoints() const { return dir / ".checkpoints"; }
};

struct StageOutcome {
    int exit_code = kOk;
    nlohmann::json report = nlohmann::json::object();
    std::vector<fs::path> outputs;
};

// ---------------------------------------------------------------------------
// Checkpointed per-item execution
// ---------------------------------------------------------------------------

inline std::string stage_fingerprint(const std::string& stage, const nlohmann::json& relevant, const std::vector<fs::path>& inputs) {
    nlohmann::json material{{"stage", stage}, {"config", relevant}};
    for (const auto& p : inputs) material["inputs"].push_back(file_sha256_hex(p));
    return sha256_hex(material.dump()).substr(0, 16);
}

/// Runs `task(i)` for every item whose id has no final record in the
/// checkpoint log, appending each new record as soon as it completes. Records
/// with status "failed" are retried. Returns records in item order.
inline std::vector<nlohmann::json> run_checkpointed(const fs::path& ckpt, const std::vector<std::string>& ids,
                                                    std::size_t workers,
                                                    const std::function<nlohmann::json(std::size_t)>& task) {
    std::unordered_map<std::string, nlohmann::json> done;
    if (fs::exists(ckpt)) {
        for_each_jsonl(ckpt, [&](const nlohmann::json& j, std::size_t) {
            if (j.value("status", "") != "failed") done[j.value("id", "")] = j;
        });
    }
    std::vector<nlohmann::json> results(ids.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = done.find(ids[i]);
        if (it != done.end()) results[i] = it->second;
        else pending.push_back(i);
    }
    if (!pending.empty()) {
        JsonlAppender log(ckpt);
        std::mutex mu;
        parallel_for(pending.size(), workers, [&](std::size_t k) {
            const std::size_t i = pending[k];
            nlohmann::json rec = task(i);
            rec["id"] = ids[i];
            std::lock_guard lock(mu);
            log.append(rec);
            results[i] = std::move(rec);
        });
    }
    return results;
}

inline nlohmann::json failed_record(const std::exception& e) { return {{"status", "failed"}, {"error", e.what()}}; }

inline int failure_exit_code(std::size_t failed, std::size_t total) {
    return total > 0 && static_cast<double>(failed) > kMaxFailureFraction * static_cast<double>(total) ? kPartialFailure : kOk;
}

inline std::vector<Instruction> read_instructions(const fs::path& path) {
    auto xs = read_records<Instruction>(path, instruction_from_json);
    std::set<std::string> seen;
    for (const auto& x : xs)
        if (!seen.insert(x.id).second) throw ValidationError("instruction.id", "duplicate id " + x.id);
    return xs;
}

inline nlohmann::json endpoint_json(const llm::EndpointConfig& e) { return config_detail::to_json(e); }

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// One response per candidate endpoint for every instruction.
inline StageOutcome cmd_generate(const RunContext& ctx, const fs::path& instructions_path) {
    if (ctx.config.candidates.empty()) throw ValidationError("candidates", "at least one candidate endpoint is required");
    const RunPaths paths{ctx.out_dir};
    const auto xs = read_instructions(instructions_path);
    nlohmann::json relevant{{"mock", ctx.mock}, {"seed", ctx.config.seed}};
    for (const auto& c : ctx.config.candidates) relevant["candidates"].push_back(endpoint_json(c));
    const fs::path ckpt = paths.checkpoints() / ("generate-" + stage_fingerprint("generate", relevant, {instructions_path}) + ".jsonl");

    std::vector<std::string> ids;
    for (const auto& x : xs) ids.push_back(x.id);
    const auto records = run_checkpointed(ckpt, ids, static_cast<std::size_t>(ctx.config.concurrency), [&](std::size_t i) {
        try {
            ResponsePool pool{xs[i], {}};
            for (const auto& cand : ctx.config.candidates) {
                const std::vector<llm::ChatMessage> msgs{llm::user_message(xs[i].text)};
                pool.responses.push_back({cand.model, ctx.client->complete_chat(cand, msgs)});
            }
            return nlohmann::json{{"status", "ok"}, {"pool", to_json(pool)}};
        } catch (const std::exception& e) {
            spdlog::warn("generate {}: {}", xs[i].id, e.what());
            return failed_record(e);
        }
    });

    std::vector<nlohmann::json> pools;
    std::size_t failed = 0;
    for (const auto& r : records) {
        if (r.at("status") == "ok") pools.push_back(r.at("pool"));
        else ++failed;
    }
    write_jsonl(paths.pools(), pools);
    StageOutcome out;
    out.outputs = {paths.pools()};
    out.report = {{"stage", "generate"}, {"instructions", xs.size()}, {"pools", pools.size()}, {"failed", failed}};
    out.exit_code = failure_exit_code(failed, xs.size());
    return out;
}

// ---------------------------------------------------------------------------
// annotate
// ---------------------------------------------------------------------------

inline synth::GoldPair gold_from_json(const nlohmann::json& j, std::size_t line) {
    const auto& inst = jsonl_detail::field(j, "instruction", line);
    if (!inst.is_object()) throw SchemaError(line, "\"instruction\" must be an object");
    return {instruction_from_json(inst, line), jsonl_detail::str(j, "chosen", line), jsonl_detail::str(j, "rejected", line)};
}

/// Samples and annotates pairs from each pool. A tied pair is re-drawn once
/// from the remaining pairs before the slot is given up. With a gold file the
/// labeled pairs are annotated instead and kept only when the teacher agrees.
inline StageOutcome cmd_annotate(const RunContext& ctx, const fs::path& input_path, bool labeled = false) {
    const RunPaths paths{ctx.out_dir};
    const synth::Teacher teacher = ctx.teacher();
    const nlohmann::json relevant{{"mock", ctx.mock},
                                  {"seed", ctx.config.seed},
                                  {"teacher", endpoint_json(ctx.config.teacher)},
                                  {"labeled", labeled},
                                  {"pairs_per_instruction", ctx.config.synthesis.pairs_per_instruction},
                                  {"strict_parse", ctx.config.synthesis.strict_parse}};
    const fs::path ckpt = paths.checkpoints() / ("annotate-" + stage_fingerprint("annotate", relevant, {input_path}) + ".jsonl");
    const Rng root(ctx.config.seed);

    std::vector<std::string> ids;
    std::function<nlohmann::json(std::size_t)> task;
    std::vector<ResponsePool> pools;
    std::vector<synth::GoldPair> gold;

    if (labeled) {
        gold = read_records<synth::GoldPair>(input_path, gold_from_json);
        for (const auto& g : gold) ids.push_back(g.instruction.id);
        task = [&](std::size_t i) -> nlohmann::json {
            try {
                const auto& g = gold[i];
                Rng rng = root.fork("annotate/" + g.instruction.id);
                const bool swap = rng.coin();
                const auto ann = synth::annotate_pair(g.instruction, swap ? g.rejected : g.chosen, swap ? g.chosen : g.rejected, teacher);
                if (std::holds_alternative<synth::Tie>(ann)) return {{"status", "skipped"}, {"reason", "tie"}};
                const auto& pair = std::get<AnnotatedPair>(ann);
                if (!synth::consistency_filter(g, pair)) return {{"status", "skipped"}, {"reason", "inconsistent"}};
                return {{"status", "ok"}, {"pairs", nlohmann::json::array({to_json(pair)})}};
            } catch (const std::exception& e) {
                spdlog::warn("annotate {}: {}", gold[i].instruction.id, e.what());
                return failed_record(e);
            }
        };
    } else {
        pools = read_records<ResponsePool>(input_path, pool_from_json);
        for (const auto& p : pools) ids.push_back(p.instruction.id);
        task = [&](std::size_t i) -> nlohmann::json {
            const auto& pool = pools[i];
            try {
                Rng rng = root.fork("annotate/" + pool.instruction.id);
                std::set<synth::IndexPair> used;
                nlohmann::json pairs = nlohmann::json::array();
                std::size_t ties = 0;
                auto mark = [&](synth::IndexPair p) { used.insert({std::min(p.first, p.second), std::max(p.first, p.second)}); };
                for (std::int64_t slot = 0; slot < ctx.config.synthesis.pairs_per_instruction; ++slot) {
                    for (int draw = 0; draw < 2; ++draw) {
                        const auto idx = synth::sample_pair_indices(pool.responses.size(), rng, used);
                        mark(idx);
                        const auto ann = synth::annotate_pair(pool.instruction, pool.responses[idx.first].text,
                                                              pool.responses[idx.second].text, teacher);
                        if (const auto* pair = std::get_if<AnnotatedPair>(&ann)) {
                            pairs.push_back(to_json(*pair));
                            break;
                        }
                        ++ties;
                        if (used.size() * 2 >= pool.responses.size() * (pool.responses.size() - 1)) break;
                    }
                    if (used.size() * 2 >= pool.responses.size() * (pool.responses.size() - 1)) break;
                }
                if (pairs.empty()) return {{"status", "skipped"}, {"reason", "tie"}, {"ties", ties}};
                return {{"status", "ok"}, {"pairs", pairs}, {"ties", ties}};
            } catch (const synth::PoolTooSmall& e) {
                return {{"status", "skipped"}, {"reason", "pool-too-small"}};
            } catch (const std::exception& e) {
                spdlog::warn("annotate {}: {}", pool.instruction.id, e.what());
                return failed_record(e);
            }
        };
    }

    const auto records = run_checkpointed(ckpt, ids, static_cast<std::size_t>(ctx.config.concurrency), task);
    std::vector<nlohmann::json> out_pairs;
    std::size_t failed = 0, skipped_tie = 0, skipped_inconsistent = 0, skipped_small = 0;
    for (const auto& r : records) {
        const std::string status = r.at("status");
        if (status == "ok") {
            for (const auto& p : r.at("pairs")) out_pairs.push_back(p);
        } else if (status == "failed") {
            ++failed;
        } else {
            const std::string reason = r.value("reason", "");
            if (reason == "tie") ++skipped_tie;
            else if (reason == "inconsistent") ++skipped_inconsistent;
            else ++skipped_small;
        }
    }
    write_jsonl(paths.annotations(), out_pairs);
    StageOutcome out;
    out.outputs = {paths.annotations()};
    out.report = {{"stage", "annotate"},
                  {"mode", labeled ? "labeled" : "unlabeled"},
                  {"instructions", ids.size()},
                  {"pairs", out_pairs.size()},
                  {"skipped_tie", skipped_tie},
                  {"skipped_inconsistent", skipped_inconsistent},
                  {"skipped_pool_too_small", skipped_small},
                  {"failed", failed}};
    out.exit_code = failure_exit_code(failed, ids.size());
    return out;
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

/// Generates the teacher reference once per instruction, then refines and
/// calibrates every annotated pair of that instruction. Replies that fail to
/// parse are skipped and logged.
inline StageOutcome cmd_refine(const RunContext& ctx, const fs::path& annotations_path) {
    const RunPaths paths{ctx.out_dir};
    const synth::Teacher teacher = ctx.teacher();
    const auto pairs = read_records<AnnotatedPair>(annotations_path, annotated_from_json);

    std::vector<std::string> ids;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& id = pairs[i].instruction().id;
        if (!groups.count(id)) ids.push_back(id);
        groups[id].push_back(i);
    }
    const nlohmann::json relevant{{"mock", ctx.mock},
                                  {"teacher", endpoint_json(ctx.config.teacher)},
                                  {"strict_parse", ctx.config.synthesis.strict_parse},
                                  {"retry_parse", ctx.config.synthesis.retry_parse}};
    const fs::path ckpt = paths.checkpoints() / ("refine-" + stage_fingerprint("refine", relevant, {annotations_path}) + ".jsonl");

    const auto records = run_checkpointed(ckpt, ids, static_cast<std::size_t>(ctx.config.concurrency), [&](std::size_t i) {
        const auto& members = groups.at(ids[i]);
        try {
            const std::string y_t = synth::generate_teacher_response(pairs[members.front()].instruction(), teacher);
            nlohmann::json refined = nlohmann::json::array();
            nlohmann::json skipped = nlohmann::json::array();
            for (std::size_t m : members) {
                try {
                    refined.push_back(to_json(synth::refine_pair(pairs[m], y_t, teacher)));
                } catch (const ParseError& e) {
                    spdlog::warn("refine {}: skipping pair: {}", ids[i], e.what());
                    skipped.push_back(e.what());
                }
            }
            return nlohmann::json{{"status", "ok"}, {"teacher_response", y_t}, {"refined", refined}, {"skipped", skipped}};
        } catch (const std::exception& e) {
            spdlog::warn("refine {}: {}", ids[i], e.what());
            return failed_record(e);
        }
    });

    std::vector<nlohmann::json> refined, teacher_responses;
    std::size_t failed = 0, parse_skipped = 0;
    for (const auto& r : records) {
        if (r.at("status") != "ok") {
            ++failed;
            continue;
        }
        teacher_responses.push_back({{"instruction_id", r.at("id")}, {"text", r.at("teacher_response")}});
        for (const auto& p : r.at("refined")) refined.push_back(p);
        parse_skipped += r.at("skipped").size();
    }
    write_jsonl(paths.refined(), refined);
    write_jsonl(paths.teacher_responses(), teacher_responses);
    StageOutcome out;
    out.outputs = {paths.refined(), paths.teacher_responses()};
    out.report = {{"stage", "refine"},
                  {"instructions", ids.size()},
                  {"pairs_in", pairs.size()},
                  {"refined", refined.size()},
                  {"parse_skipped", parse_skipped},
                  {"failed", failed}};
    out.exit_code = failure_exit_code(failed, ids.size());
    return out;
}

// ---------------------------------------------------------------------------
// filter / build
// ---------------------------------------------------------------------------

inline StageOutcome cmd_filter(const RunContext& ctx, const fs::path& refined_path) {
    const RunPaths paths{ctx.out_dir};
    const auto pairs = read_records<RefinedPair>(refined_path, refined_from_json);
    const auto [kept, report] = filter_refined(pairs, ctx.config.tau_e, ctx.config.tau_s);
    write_records(paths.filtered(), kept);
    nlohmann::json rep = to_json(report);
    rep["tau_e"] = ctx.config.tau_e;
    rep["tau_s"] = ctx.config.tau_s;
    write_file_atomic(paths.filter_report(), rep.dump(2) + "\n");
    StageOutcome out;
    out.outputs = {paths.filtered(), paths.filter_report()};
    out.report = rep;
    out.report["stage"] = "filter";
    return out;
}

inline std::map<std::string, std::string> read_teacher_responses(const fs::path& path) {
    std::map<std::string, std::string> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
        out[jsonl_detail::str(j, "instruction_id", line)] = jsonl_detail::str(j, "text", line);
    });
    return out;
}

inline StageOutcome cmd_build(const RunContext& ctx, const fs::path& annotations_path, const fs::path& filtered_path,
                              const std::optional<fs::path>& teacher_responses_path = std::nullopt) {
    const RunPaths paths{ctx.out_dir};
    const auto sampled = read_records<AnnotatedPair>(annotations_path, annotated_from_json);
    const auto refined = read_records<RefinedPair>(filtered_path, refined_from_json);
    const fs::path tr_path = teacher_responses_path.value_or(paths.teacher_responses());
    std::map<std::string, std::string> teacher;
    if (fs::exists(tr_path)) teacher = read_teacher_responses(tr_path);
    const bool require = ctx.config.alpha + ctx.config.beta > 0;
    const auto entries = merge_datasets(sampled, refined, teacher, require);
    write_dataset(entries, paths.dataset());
    StageOutcome out;
    out.outputs = {paths.dataset()};
    out.report = {{"stage", "build"},
                  {"entries", entries.size()},
                  {"sampled", sampled.size()},
                  {"refined", refined.size()},
                  {"dataset_sha256", file_sha256_hex(paths.dataset())}};
    return out;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

/// Resolves beta against the teacher's capabilities and trains the student.
inline StageOutcome cmd_train(const RunContext& ctx, const fs::path& dataset_path) {
    const RunPaths paths{ctx.out_dir};
    const auto data = read_dataset(dataset_path);
    if (data.empty()) throw ValidationError("dataset", "is empty");
    const train::TrainConfig tc = ctx.config.train_config();

    bool dists_available = false;
    if (ctx.config.beta > 0) {
        try {
            ctx.client->teacher_token_distributions(ctx.config.teacher, "probe", "p");
            dists_available = true;
        } catch (const llm::UnsupportedCapability& e) {
            spdlog::info("teacher distributions unavailable ({}); training with beta = 0", e.what());
        }
    }
    const auto weights = train::resolve_weights(ctx.config.alpha, ctx.config.beta, dists_available);
    train::TeacherDistProvider provider;
    if (weights.beta > 0) {
        provider = [&](const DatasetEntry& e) {
            return ctx.client->teacher_token_distributions(ctx.config.teacher, e.instruction(), *e.teacher_response());
        };
    }
    const auto result = train::train(data, tc, weights, provider);
    write_file_atomic(paths.checkpoint(), train::checkpoint_json(result.params, tc.seed));
    write_file_atomic(paths.loss_csv(), train::loss_csv(result.log));
    const std::string hash = train::params_hash(result.params);
    nlohmann::json rep{{"stage", "train"},
                       {"entries", data.size()},
                       {"steps", result.log.size()},
                       {"objective", std::string(train::to_string(tc.objective))},
                       {"alpha", weights.alpha},
                       {"beta_requested", ctx.config.beta},
                       {"beta_effective", weights.beta},
                       {"first_loss", result.log.front().loss},
                       {"final_loss", result.log.back().loss},
                       {"checkpoint_hash", hash}};
    write_file_atomic(paths.train_report(), rep.dump(2) + "\n");
    StageOutcome out;
    out.outputs = {paths.checkpoint(), paths.loss_csv(), paths.train_report()};
    out.report = rep;
    return out;
}

inline nlohmann::json to_json(const train::EvalPair& p) {
    return {{"instruction", p.instruction}, {"better", p.better}, {"worse", p.worse}};
}

inline train::EvalPair eval_pair_from_json(const nlohmann::json& j, std::size_t line) {
    return {jsonl_detail::str(j, "instruction", line), jsonl_detail::str(j, "better", line), jsonl_detail::str(j, "worse", line)};
}

inline StageOutcome cmd_eval(const RunContext& ctx, const fs::path& checkpoint_path, const fs::path& pairs_path) {
    const RunPaths paths{ctx.out_dir};
    const auto ckpt = train::load_checkpoint(checkpoint_path);
    const auto pairs = read_records<train::EvalPair>(pairs_path, eval_pair_from_json);
    const double acc = train::eval_pairwise_accuracy(ckpt.params, pairs, ctx.config.train.max_seq_len);
    nlohmann::json rep{{"stage", "eval"}, {"pairs", pairs.size()}, {"accuracy", acc}, {"checkpoint_hash", ckpt.hash}};
    write_file_atomic(paths.eval_report(), rep.dump(2) + "\n");
    StageOutcome out;
    out.outputs = {paths.eval_report()};
    out.report = rep;
    return out;
}

// ---------------------------------------------------------------------------
// Mock corpora
// ---------------------------------------------------------------------------

/// Held-out pairs that differ only by ERR -> FIX substitutions.
inline std::vector<train::EvalPair> mock_hard_pairs(std::size_t n, std::uint64_t seed, const llm::MockTeacher& mock) {
    const auto xs = llm::synthetic_instructions(n, seed, "heldout");
    std::vector<train::EvalPair> out;
    out.reserve(n);
    for (const auto& x : xs) {
        std::string worse = mock.candidate_answer("heldout-candidate", x.text);
        if (llm::count_err_tokens(worse) == 0) worse = std::string(llm::kErrToken) + " " + worse;
        out.push_back({x.text, llm::fix_err_tokens(worse), worse});
    }
    return out;
}

// ---------------------------------------------------------------------------
// e2e
// ---------------------------------------------------------------------------

struct E2EOptions {
    std::optional<fs::path> instructions;
    std::size_t synthetic_instructions = 200;
    std::optional<fs::path> gold;
    std::optional<fs::path> eval_pairs;
    std::size_t mock_eval_pairs = 500;
};

/// Chains every stage, recording progress in manifest.json. A stage already
/// marked done with the same key and unchanged outputs is skipped. Stops at the
/// first stage that does not succeed.
inline StageOutcome cmd_e2e(const RunContext& ctx, const E2EOptions& opt = {}) {
    const RunPaths paths{ctx.out_dir};
    fs::create_directories(paths.dir);
    const std::string cfg_hash = config_hash(ctx.config);

    nlohmann::json manifest = nlohmann::json::object();
    if (fs::exists(paths.manifest())) {
        try {
            manifest = nlohmann::json::parse(read_file(paths.manifest()));
        } catch (const nlohmann::json::exception&) {
            manifest = nlohmann::json::object();
        }
    }
    manifest["config_hash"] = cfg_hash;
    manifest["mock"] = ctx.mock;
    manifest["seed"] = ctx.config.seed;
    if (!manifest.contains("stages")) manifest["stages"] = nlohmann::json::object();
    for (const char* s : {"generate", "annotate", "refine", "filter", "build", "train", "eval"})
        if (!manifest["stages"].contains(s)) manifest["stages"][s] = {{"status", "pending"}};
    auto save = [&] { write_file_atomic(paths.manifest(), manifest.dump(2) + "\n"); };

    // Inputs
    fs::path instructions_path;
    if (opt.instructions) {
        instructions_path = *opt.instructions;
    } else if (!opt.gold) {
        if (!ctx.mock) throw ValidationError("instructions", "an instructions file is required outside mock mode");
        write_records(paths.instructions(), llm::synthetic_instructions(opt.synthetic_instructions, ctx.config.seed));
        instructions_path = paths.instructions();
    }
    fs::path eval_path;
    if (opt.eval_pairs) {
        eval_path = *opt.eval_pairs;
    } else if (ctx.mock) {
        const auto& mock = dynamic_cast<const llm::MockTeacher&>(*ctx.client);
        std::vector<nlohmann::json> recs;
        for (const auto& p : mock_hard_pairs(opt.mock_eval_pairs, ctx.config.seed, mock)) recs.push_back(to_json(p));
        write_jsonl(paths.eval_pairs(), recs);
        eval_path = paths.eval_pairs();
    }
    {
        std::string inputs;
        if (!instructions_path.empty()) inputs += file_sha256_hex(instructions_path);
        if (opt.gold) inputs += file_sha256_hex(*opt.gold);
        manifest["run_id"] = sha256_hex(cfg_hash + inputs + (ctx.mock ? "mock" : "live")).substr(0, 12);
    }
    save();

    StageOutcome total;
    auto run = [&](const std::string& name, const std::vector<fs::path>& inputs, const std::function<StageOutcome()>& fn) -> bool {
        auto& st = manifest["stages"][name];
        nlohmann::json key_material{{"config", cfg_hash}, {"mock", ctx.mock}};
        for (const auto& p : inputs) key_material["inputs"].push_back(file_sha256_hex(p));
        const std::string key = sha256_hex(key_material.dump());
        if (st.value("status", "") == "done" && st.value("key", "") == key) {
            bool intact = true;
            for (const auto& [path, hash] : st.at("output_sha256").items())
                intact = intact && fs::exists(path) && file_sha256_hex(path) == hash.get<std::string>();
            if (intact) {
                spdlog::info("{}: up to date, skipping", name);
                total.report[name] = st.at("report");
                return true;
            }
        }
        StageOutcome o;
        try {
            o = fn();
        } catch (const IoError& e) {
            o.exit_code = kIoFailure;
            o.report = {{"error", e.what()}};
        } catch (const std::exception& e) {
            o.exit_code = kFatalValidation;
            o.report = {{"error", e.what()}};
        }
        nlohmann::json hashes = nlohmann::json::object();
        if (o.exit_code == kOk)
            for (const auto& p : o.outputs) hashes[p.string()] = file_sha256_hex(p);
        st = {{"status", o.exit_code == kOk ? "done" : "failed"},
              {"key", key},
              {"exit_code", o.exit_code},
              {"report", o.report},
              {"output_sha256", hashes}};
        save();
        total.report[name] = o.report;
        if (o.exit_code != kOk) {
            total.exit_code = o.exit_code;
            spdlog::error("{} failed: {}", name, o.report.dump());
            return false;
        }
        spdlog::info("{}: {}", name, o.report.dump());
        return true;
    };

    const bool labeled = opt.gold.has_value();
    if (!labeled) {
        if (!run("generate", {instructions_path}, [&] { return cmd_generate(ctx, instructions_path); })) return total;
    } else {
        manifest["stages"]["generate"] = {{"status", "skipped"}, {"reason", "labeled scenario"}};
    }
    const fs::path annotate_in = labeled ? *opt.gold : paths.pools();
    if (!run("annotate", {annotate_in}, [&] { return cmd_annotate(ctx, annotate_in, labeled); })) return total;
    if (!run("refine", {paths.annotations()}, [&] { return cmd_refine(ctx, paths.annotations()); })) return total;
    if (!run("filter", {paths.refined()}, [&] { return cmd_filter(ctx, paths.refined()); })) return total;
    if (!run("build", {paths.annotations(), paths.filtered(), paths.teacher_responses()},
             [&] { return cmd_build(ctx, paths.annotations(), paths.filtered(), paths.teacher_responses()); }))
        return total;
    if (!run("train", {paths.dataset()}, [&] { return cmd_train(ctx, paths.dataset()); })) return total;
    if (!eval_path.empty()) {
        if (!run("eval", {paths.checkpoint(), eval_path}, [&] { return cmd_eval(ctx, paths.checkpoint(), eval_path); }))
            return total;
    } else {
        manifest["stages"]["eval"] = {{"status", "skipped"}, {"reason", "no eval pairs"}};
    }
    manifest["dataset_sha256"] = file_sha256_hex(paths.dataset());
    manifest["checkpoint_sha256"] = file_sha256_hex(paths.checkpoint());
    save();
    total.report["manifest"] = paths.manifest().string();
    total.report["dataset_sha256"] = manifest["dataset_sha256"];
    total.report["checkpoint_sha256"] = manifest["checkpoint_sha256"];
    total.outputs = {paths.manifest(), paths.dataset(), paths.checkpoint()};
    return total;
}

} // namespace rmd::pipeline
