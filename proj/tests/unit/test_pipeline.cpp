#include <recbm/error.hpp>
#include <recbm/pipeline.hpp>
#include <recbm/synthetic.hpp>
#include <recbm/util.hpp>

#include "scratch.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <chrono>

using namespace recbm;
namespace fs = std::filesystem;

namespace {

synthetic::ConceptDataSpec small_spec() {
    synthetic::ConceptDataSpec spec;
    spec.train = 300;
    spec.test = 100;
    spec.concepts = 20;
    spec.distractors = 5;
    spec.dim = 32;
    spec.seed = 3;
    return spec;
}

}  // namespace

TEST(RunConfig, ParsesAndResolvesPaths) {
    const auto cfg = parse_run_config(R"({"train_manifest": "a/train.json", "bank": "/abs/bank.emb", "m": 12,
                                          "atoms": 32, "lr": 0.01, "prompt_version": "v1"})",
                                      "/base");
    EXPECT_EQ(cfg.train_manifest, fs::path("/base/a/train.json"));
    EXPECT_EQ(cfg.bank, fs::path("/abs/bank.emb"));
    EXPECT_EQ(cfg.m, 12u);
    EXPECT_EQ(cfg.atoms, 32u);
    EXPECT_DOUBLE_EQ(cfg.lr, 0.01);
    EXPECT_EQ(cfg.n, 32u);
    EXPECT_EQ(cfg.top_k, 10u);
    EXPECT_EQ(cfg.score_threshold, 6);
}

TEST(RunConfig, Errors) {
    EXPECT_THROW(parse_run_config("{", "."), ConfigError);
    EXPECT_THROW(parse_run_config("[]", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"mm": 3})", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"m": "three"})", "."), ConfigError);
    EXPECT_THROW(parse_run_config(R"({"prompt_version": "v0"})", "."), ConfigError);
}

TEST(RunConfig, JsonRoundTrip) {
    RunConfig cfg;
    cfg.train_manifest = "/x/train.json";
    cfg.bank = "/x/bank.emb";
    cfg.m = 7;
    cfg.atoms = 16;
    cfg.weight_decay = 0.5;
    const auto back = parse_run_config(run_config_json(cfg), "/elsewhere");
    EXPECT_EQ(back.train_manifest, cfg.train_manifest);
    EXPECT_EQ(back.m, 7u);
    EXPECT_EQ(back.atoms, 16u);
    EXPECT_DOUBLE_EQ(back.weight_decay, 0.5);
}

TEST(Pipeline, FixtureRunsAndIsReproducible) {
    Scratch dir;
    synthetic::write_fixture(dir.path(), small_spec());
    auto cfg = load_run_config(dir / "run_config.json");
    cfg.atoms = 32;
    cfg.sae_epochs = 10;

    const auto start = std::chrono::steady_clock::now();
    const auto summary = run_pipeline(cfg);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);

    for (const char* name : {"dictionary.atoms.emb", "dictionary.encoder.emb", "dictionary.json", "candidates.json",
                             "candidates_scored.json", "selection.json", "selection_trace.csv", "concepts.emb",
                             "concepts.txt", "codes.txt", "head.json", "head.emb", "explanations.json", "run.json"}) {
        EXPECT_TRUE(fs::exists(cfg.out_dir / name)) << name;
        EXPECT_NE(std::find(summary.artifacts.begin(), summary.artifacts.end(), name), summary.artifacts.end()) << name;
    }
    EXPECT_GT(summary.metrics.at("selected_concepts"), 0.0);
    EXPECT_GT(summary.metrics.at("eval_accuracy"), 0.5);

    const auto run = nlohmann::json::parse(read_file(cfg.out_dir / "run.json"));
    EXPECT_EQ(run["config_hash"], summary.config_hash);
    EXPECT_EQ(summary.config_hash, config_hash(cfg));

    cfg.out_dir = dir / "second";
    cfg.threads = 2;
    const auto again = run_pipeline(cfg);
    EXPECT_EQ(again.config_hash, summary.config_hash);
    for (const auto& a : summary.artifacts) {
        EXPECT_EQ(sha256_file(summary.out_dir / a), sha256_file(again.out_dir / a)) << a;
    }
}

TEST(Pipeline, ExternalBankWithoutLabeler) {
    Scratch dir;
    synthetic::write_fixture(dir.path(), small_spec());
    auto cfg = load_run_config(dir / "run_config.json");
    cfg.mock_transcript.clear();
    cfg.m = 10;
    cfg.sae_epochs = 2;
    cfg.atoms = 8;
    const auto summary = run_pipeline(cfg);
    EXPECT_DOUBLE_EQ(summary.metrics.at("selected_concepts"), 10.0);
    EXPECT_FALSE(fs::exists(cfg.out_dir / "candidates_scored.json"));
}

TEST(Pipeline, HashChangesWithInputs) {
    Scratch dir;
    synthetic::write_fixture(dir.path(), small_spec());
    auto cfg = load_run_config(dir / "run_config.json");
    const auto h = config_hash(cfg);
    cfg.out_dir = "/somewhere/else";
    cfg.threads = 8;
    EXPECT_EQ(config_hash(cfg), h);
    cfg.m = 3;
    EXPECT_NE(config_hash(cfg), h);
    cfg.m = 20;
    write_file(dir / "names.txt", read_file(dir / "names.txt") + "\n");
    EXPECT_NE(config_hash(cfg), h);
}

TEST(Pipeline, MissingEmbeddingsNameStageAndPath) {
    Scratch dir;
    synthetic::write_fixture(dir.path(), small_spec());
    fs::remove(dir / "train.emb");
    const auto cfg = load_run_config(dir / "run_config.json");
    try {
        run_pipeline(cfg);
        FAIL() << "expected a StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "embkit");
        EXPECT_NE(std::string(e.what()).find("train.emb"), std::string::npos) << e.what();
    }
}

TEST(Pipeline, BankNameCountMismatch) {
    Scratch dir;
    synthetic::write_fixture(dir.path(), small_spec());
    write_file(dir / "names.txt", "only one\n");
    const auto cfg = load_run_config(dir / "run_config.json");
    try {
        run_pipeline(cfg);
        FAIL() << "expected a StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "embkit");
    }
}
