#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <set>

#include "rmdistill/core/config.hpp"
#include "rmdistill/core/hash.hpp"
#include "rmdistill/core/rng.hpp"
#include "rmdistill/core/types.hpp"

using namespace rmd;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("sha256 matches published test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("rng is reproducible and forks are independent of draw count") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    Rng c(7);
    const auto before = c.fork("k").next_u64();
    for (int i = 0; i < 10; ++i) c.next_u64();
    CHECK(c.fork("k").next_u64() == before);
    CHECK(Rng(7).fork("k").seed() != Rng(7).fork("j").seed());
    CHECK(Rng(7).fork("k").seed() != Rng(8).fork("k").seed());
}

TEST_CASE("rng uniform_int passes a chi-squared test") {
    Rng rng(123);
    constexpr int kBins = 10;
    constexpr int kDraws = 100000;
    std::array<int, kBins> counts{};
    for (int i = 0; i < kDraws; ++i) {
        const auto v = rng.uniform_int(0, kBins - 1);
        REQUIRE(v >= 0);
        REQUIRE(v < kBins);
        ++counts[static_cast<std::size_t>(v)];
    }
    const double expected = static_cast<double>(kDraws) / kBins;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 9 degrees of freedom, p = 0.001
    CHECK(chi2 < 27.88);
}

TEST_CASE("score range and record validation") {
    CHECK(score_in_range(1.0));
    CHECK(score_in_range(10.0));
    CHECK_FALSE(score_in_range(0.5));
    CHECK_FALSE(score_in_range(std::nan("")));

    const Instruction x{"i1", "What is 2+2?"};
    CHECK_THROWS_AS(validate(Instruction{"", "t"}), ValidationError);
    CHECK_THROWS_AS(validate(Instruction{"i", ""}), ValidationError);

    CHECK_NOTHROW(AnnotatedPair(x, "4", "5", 9, 2));
    CHECK_THROWS_AS(AnnotatedPair(x, "4", "5", 2, 2), ValidationError);
    CHECK_THROWS_AS(AnnotatedPair(x, "4", "4", 9, 2), ValidationError);
    CHECK_THROWS_AS(AnnotatedPair(x, "4", "5", 11, 2), ValidationError);

    const RefinedPair r(x, "It is 5.", "It is 4.", "arithmetic slip", 2, 8);
    CHECK(r.edit_distance() == 1);
    CHECK(r.score_margin() == 6);
    CHECK_THROWS_AS(RefinedPair(x, "a", "b", "", 0, 8), ValidationError);

    CHECK_THROWS_AS(DatasetEntry("x", "a", "b", 3, 3, std::nullopt, Source::sampled), ValidationError);
    CHECK(source_from_string("refined") == Source::refined);
    CHECK_THROWS_AS(source_from_string("other"), ValidationError);
}

TEST_CASE("config defaults follow the published recipe") {
    const PipelineConfig c;
    CHECK(c.tau_e == 0);
    CHECK(c.tau_s == 3.0);
    CHECK(c.alpha == 0.2);
    CHECK(c.beta == 0.2);
    CHECK(c.margin_weight() == Catch::Approx(0.6));
    CHECK(c.teacher.decoding.temperature == 0.7);
    CHECK(c.teacher.decoding.top_p == 0.8);
    CHECK(c.teacher.decoding.top_k == 20);
    CHECK(c.teacher.decoding.min_p == 0.0);
    CHECK(c.train.learning_rate == 1e-5);
    CHECK(c.train.batch_size == 16);
    CHECK(c.train.epochs == 1);
    CHECK(c.train.max_seq_len == 1024);
    CHECK(llm::candidate_decoding().temperature == 0.0);
    CHECK(llm::candidate_decoding().top_p == 1.0);
}

TEST_CASE("config round-trips through JSON") {
    PipelineConfig c;
    c.candidates.push_back({"https://api.example.com/v1", "m1", "KEY", llm::candidate_decoding()});
    c.tau_e = 2;
    c.tau_s = 3.5;
    c.seed = 7;
    c.train.objective = train::PairObjective::lsam;
    c.synthesis.strict_parse = true;
    const auto back = parse_config(to_json(c).dump());
    CHECK(back == c);
    CHECK(config_hash(back) == config_hash(c));

    const auto path = std::filesystem::temp_directory_path() / "rmd_cfg_roundtrip.json";
    save_config(c, path);
    CHECK(load_config(path) == c);
    std::filesystem::remove(path);
}

TEST_CASE("config hash tracks every field") {
    const PipelineConfig base;
    const auto h = config_hash(base);
    std::set<std::string> seen{h};
    auto differs = [&](PipelineConfig c) { return seen.insert(config_hash(c)).second; };
    PipelineConfig c = base;
    c.tau_s = 2;
    CHECK(differs(c));
    c = base;
    c.tau_e = 1;
    CHECK(differs(c));
    c = base;
    c.alpha = 0.1;
    CHECK(differs(c));
    c = base;
    c.seed = 1;
    CHECK(differs(c));
    c = base;
    c.teacher.model = "other";
    CHECK(differs(c));
    c = base;
    c.train.epochs = 3;
    CHECK(differs(c));
}

TEST_CASE("config validation names the offending field") {
    auto field_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    CHECK(field_of(R"({"loss": {"alpha": 0.6, "beta": 0.4}})") == "loss.alpha+beta");
    CHECK(field_of(R"({"loss": {"alpha": -0.1}})") == "loss.alpha");
    CHECK(field_of(R"({"filter": {"tau_s": -1}})") == "filter.tau_s");
    CHECK(field_of(R"({"filter": {"tau_e": -1}})") == "filter.tau_e");
    CHECK(field_of(R"({"train": {"batch_size": 0}})") == "train.batch_size");
    CHECK(field_of(R"({"teacher": {"base_url": "ftp://x"}})") == "teacher.base_url");
    CHECK(field_of(R"({"concurrency": 0})") == "concurrency");
    CHECK_THROWS_WITH(parse_config(R"({"bogus": 1})"), ContainsSubstring("bogus"));
    CHECK_THROWS_WITH(parse_config(R"({"train": {"lr": 1}})"), ContainsSubstring("lr"));
    CHECK_THROWS_AS(parse_config("{not json"), ParseError);
    CHECK_NOTHROW(parse_config(R"({"train": {"learning_rate": 0}})"));
}

TEST_CASE("base url parsing") {
    const auto u = llm::parse_base_url("https://api.example.com:8443/v1/");
    CHECK(u.scheme == "https");
    CHECK(u.host == "api.example.com");
    CHECK(u.port == 8443);
    CHECK(u.path_prefix == "/v1");
    CHECK(llm::parse_base_url("http://localhost").port == 80);
    CHECK(llm::parse_base_url("https://h").port == 443);
    CHECK_THROWS_AS(llm::parse_base_url("localhost:80"), ValidationError);
    CHECK_THROWS_AS(llm::parse_base_url("http://:80"), ValidationError);
    CHECK_THROWS_AS(llm::parse_base_url("http://h:99999"), ValidationError);
}
