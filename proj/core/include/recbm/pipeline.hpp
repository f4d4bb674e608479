#pragma once

// End-to-end run: extract -> label (or external bank) -> select -> decompose
// -> head -> explain, writing every artifact into one output directory.

#include "recbm/error.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace recbm {

struct RunConfig {
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;   // optional
    std::filesystem::path bank;            // concept text embeddings (.emb)
    std::filesystem::path bank_names;      // one name per bank row
    std::filesystem::path class_prompts;   // optional; zero-shot init when set
    std::filesystem::path out_dir = "run";

    // extract
    std::optional<std::size_t> atoms;
    double penalty = 0.1;
    std::size_t sae_epochs = 50;
    std::size_t sae_batch = 32;
    double sae_lr = 0.05;
    std::size_t probe_images = 0;          // 0 = every training image

    // label
    std::string endpoint;
    std::filesystem::path mock_transcript;
    std::string model = "default";
    std::size_t top_k = 10;
    int score_threshold = 6;
    std::string task = "image";
    std::filesystem::path description_cache;  // optional

    // select, decompose
    std::size_t m = 300;
    std::size_t n = 32;

    // head
    std::size_t epochs = 50;
    std::size_t batch = 64;
    double lr = 5e-5;
    double weight_decay = 0.0;
    std::size_t explain_top = 3;

    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& cfg);

/// SHA-256 over every knob except out_dir and threads, plus the checksums of
/// the input files, so moving a fixture does not change the hash.
std::string config_hash(const RunConfig& cfg);

/// A pipeline failure, tagged with the stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct RunSummary {
    std::filesystem::path out_dir;
    std::string config_hash;
    std::map<std::string, double> metrics;
    std::vector<std::string> artifacts;  // relative to out_dir, sorted
    std::vector<std::string> warnings;
};

/// Artifacts written so far are kept when a stage fails.
RunSummary run_pipeline(const RunConfig& cfg);

}  // namespace recbm
