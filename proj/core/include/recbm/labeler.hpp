#pragma once

// Turns dictionary atoms into named, scored candidate concepts:
//   top-K activating images -> describe each -> summarize into candidates
//   -> score candidates -> filter by threshold.

#include "recbm/chat.hpp"
#include "recbm/saedict.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace recbm {

namespace prompts {
const std::string& describe_template();
const std::string& summarize_template();
const std::string& score_template();
inline constexpr const char* kVersion = "v1";
}  // namespace prompts

struct CandidateConcept {
    std::string name;
    std::string description;
    std::optional<int> score;               // 1..10 once scored
    bool score_flagged = false;             // score could not be parsed; defaulted to 1
    std::optional<std::size_t> source_atom; // nullopt = external
    std::vector<float> text_embedding;      // joined later by name; empty when absent
};

/// Thread-safe description cache keyed by (model, image hash, prompt hash),
/// optionally persisted as JSON.
class DescriptionCache {
public:
    DescriptionCache() = default;
    explicit DescriptionCache(std::filesystem::path file);

    static std::string key(const std::string& model, const std::string& image_hash, const std::string& prompt);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& description);
    std::size_t size() const;
    /// No-op for an in-memory cache.
    void save() const;

private:
    std::optional<std::filesystem::path> file_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::string> entries_;
};

std::string fill_template(std::string text, const std::map<std::string, std::string>& values);

std::string describe_prompt(const std::string& task);
std::string summarize_prompt(const std::vector<std::string>& descriptions, const std::string& task);
std::string score_prompt(const std::vector<CandidateConcept>& candidates, const std::string& task);

std::vector<std::string> describe_images(ChatClient& client, const ChatEndpointConfig& cfg,
                                         const std::vector<std::filesystem::path>& images, const std::string& task,
                                         DescriptionCache* cache = nullptr);

struct SummaryResult {
    std::vector<CandidateConcept> candidates;
    std::vector<std::string> warnings;
};

/// Parses "1. name: description" / "- name" style lists.
SummaryResult parse_candidate_list(const std::string& text);

SummaryResult summarize_concept(ChatClient& client, const ChatEndpointConfig& cfg,
                                const std::vector<std::string>& descriptions, const std::string& task);

/// Every input candidate comes back with a score, in input order. Lines that
/// are missing, unparseable or out of range give score 1 and set the flag.
std::vector<CandidateConcept> parse_scores(const std::string& text, std::vector<CandidateConcept> candidates);

std::vector<CandidateConcept> score_concepts(ChatClient& client, const ChatEndpointConfig& cfg,
                                             const std::vector<CandidateConcept>& candidates, const std::string& task);

/// Keeps score >= threshold, drops case-insensitive duplicate names (first wins).
std::vector<CandidateConcept> filter_candidates(const std::vector<CandidateConcept>& candidates, int threshold);

struct LabelOptions {
    std::size_t top_k = 10;          // images per atom
    int score_threshold = 6;
    std::size_t score_batch = 40;    // candidates per scoring request
    std::string task = "image";
};

struct LabelResult {
    std::vector<CandidateConcept> scored;  // everything the endpoint proposed, with scores
    std::vector<CandidateConcept> kept;    // after filtering
    std::vector<std::string> warnings;
};

/// Runs the whole labeling chain over every atom of `dict`, probing with
/// `probe_images` (rows aligned with `image_paths`).
LabelResult label_atoms(ChatClient& client, const ChatEndpointConfig& cfg, const SparseDictionary& dict,
                        const Eigen::MatrixXd& probe_images, const std::vector<std::filesystem::path>& image_paths,
                        const LabelOptions& opts, DescriptionCache* cache = nullptr);

std::string candidates_json(const std::vector<CandidateConcept>& candidates, const std::string& config_hash = {});
std::vector<CandidateConcept> parse_candidates_json(const std::string& text);

}  // namespace recbm
