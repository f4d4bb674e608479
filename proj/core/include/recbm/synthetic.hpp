#pragma once

// Seeded synthetic fixtures: concept banks, sparse concept mixtures and a
// labelled dataset whose images are sparse sums of concept embeddings.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace recbm::synthetic {

/// Unit rows; when max_coherence < 1 every pair satisfies |<a, b>| < max_coherence.
Eigen::MatrixXd random_unit_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng, double max_coherence = 1.0);

/// Largest |<a_i, a_j>| over distinct unit rows.
double mutual_coherence(const Eigen::MatrixXd& unit_rows);

struct SparseMixture {
    Eigen::VectorXd vector;
    std::vector<std::size_t> support;  // ascending
    std::vector<double> coefficients;  // aligned with support
};

/// Sum of `sparsity` distinct rows of `bank` with coefficients uniform in [lo, hi].
SparseMixture sparse_mixture(const Eigen::MatrixXd& bank, std::size_t sparsity, double lo, double hi,
                             std::mt19937_64& rng);

struct ConceptDataSpec {
    std::size_t classes = 5;
    std::size_t concepts = 40;
    std::size_t distractors = 0;      // extra bank entries never used by images
    std::size_t dim = 64;
    std::size_t sparsity = 4;         // concepts per image
    std::size_t own_concepts = 3;     // how many of those come from the class's own concepts
    double noise = 0.05;              // relative L2 noise
    double coef_lo = 0.5;
    double coef_hi = 1.5;
    std::size_t train = 2000;
    std::size_t test = 500;
    std::uint64_t seed = 0;
};

struct ConceptData {
    Eigen::MatrixXd concepts;             // concepts x dim, unit rows
    Eigen::MatrixXd distractors;          // distractors x dim, unit rows
    std::vector<std::string> concept_names;
    std::vector<std::string> distractor_names;
    Eigen::MatrixXd train;                // unit rows
    Eigen::MatrixXd test;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    Eigen::MatrixXd class_prompts;        // classes x dim, unit rows
    std::vector<std::string> class_names;

    /// concepts followed by distractors.
    Eigen::MatrixXd bank() const;
    std::vector<std::string> bank_names() const;
};

/// Concepts are split evenly across classes; an image of class y mixes
/// `own_concepts` of y's concepts with the rest drawn from other classes.
ConceptData make_concept_data(const ConceptDataSpec& spec);

/// Human-readable, distinct concept names.
std::vector<std::string> concept_names(std::size_t count, std::size_t offset = 0);

/// Writes a complete on-disk fixture: train/test manifests and embeddings,
/// concept bank and names, class prompts, placeholder image files, a mock
/// chat transcript and a run configuration (`run_config.json`).
void write_fixture(const std::filesystem::path& dir, const ConceptDataSpec& spec);

}  // namespace recbm::synthetic
