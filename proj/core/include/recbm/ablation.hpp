#pragma once

// Ablation drivers: bottleneck-size sweeps over different concept selection
// strategies, and decomposition scores vs similarity scores.
//
// Selection strategies only ever see probing embeddings and the pool; labels
// enter afterwards, when the downstream head is trained and evaluated.

#include "recbm/decomposer.hpp"
#include "recbm/head.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace recbm {

enum class SelectionStrategy { Greedy, Random, KMeans };

std::string to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(const std::string& s);

/// Pool rows chosen by `strategy`: greedy reconstruction-guided selection,
/// a seeded uniform sample, or the pool concepts nearest to k-means centroids
/// of the pool (k = m, one distinct medoid per centroid).
std::vector<std::size_t> select_by_strategy(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool,
                                            std::size_t m, SelectionStrategy strategy, std::uint64_t seed);

std::vector<std::size_t> kmeans_medoids(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                                        std::size_t iterations = 50);

/// ||X - X P||_F^2 with P the projector onto span of the chosen rows.
/// Dependent rows are tolerated (rank-revealing factorisation).
double subset_residual(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool, const std::vector<std::size_t>& rows);

struct LabelledSplit {
    Eigen::MatrixXd embeddings;
    std::vector<int> labels;
};

struct DownstreamOptions {
    OmpOptions omp;
    TrainOptions train;
    std::size_t classes = 0;
    std::size_t threads = 1;
    /// Optional class prompts (classes x d); zero-shot initialisation when present.
    Eigen::MatrixXd class_prompts;
};

struct SweepPoint {
    SelectionStrategy strategy = SelectionStrategy::Greedy;
    std::size_t m = 0;
    std::size_t selected = 0;     // may be < m when the pool is exhausted
    double residual = 0.0;
    double relative_residual = 0.0;
    double accuracy = 0.0;
};

/// For every m in the grid: select, decompose train/test with the selection,
/// train a head on the reconstructions and report test accuracy.
std::vector<SweepPoint> ablate_selection(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool,
                                         const LabelledSplit& train, const LabelledSplit& test,
                                         const std::vector<std::size_t>& m_grid, SelectionStrategy strategy,
                                         const DownstreamOptions& opts, std::uint64_t seed);

std::string sweep_csv(const std::vector<SweepPoint>& points);

/// Accuracy of a head trained and evaluated on reconstructed embeddings.
double reconstructed_accuracy(const Eigen::MatrixXd& bank, const LabelledSplit& train, const LabelledSplit& test,
                              const DownstreamOptions& opts);

/// Accuracy of the same head trained directly on the original embeddings.
double linear_probe_accuracy(const LabelledSplit& train, const LabelledSplit& test, const DownstreamOptions& opts);

struct AssociationResult {
    double decomposition_accuracy = 0.0;  // arm A: sparse coefficients as concept scores
    double similarity_accuracy = 0.0;     // arm B: cosine(I, c_j) as dense concept scores
};

/// Both arms feed an m-input linear head (zero initialised) trained with
/// `opts.train`.
AssociationResult ablate_association(const Eigen::MatrixXd& bank, const LabelledSplit& train,
                                     const LabelledSplit& test, const DownstreamOptions& opts);

std::string association_csv(const AssociationResult& result);

/// m-dimensional coefficient vectors (one row per code).
Eigen::MatrixXd dense_scores(const std::vector<SparseCode>& codes, std::size_t concepts);

}  // namespace recbm
