#pragma once

// Reconstruction-guided concept selection.
//
// Greedily picks concepts whose text embeddings best reconstruct a set of
// probing image embeddings X (N x d). With P the orthogonal projector onto
// the span of the selected embeddings, the objective after each pick is the
// residual energy ||X (E - P)||_F^2. Candidates whose embedding is (numerically)
// inside the current span are pruned.

#include "recbm/embkit.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace recbm {

struct PrunedCandidate {
    std::size_t index = 0;  // pool row
    std::string name;
    std::size_t step = 0;   // 1-based greedy step at which it was found dependent
    double z = 0.0;         // t^T (E - P) t at that step
};

enum class StopReason { ReachedTarget, PoolExhausted };

std::string to_string(StopReason r);

struct SelectionReport {
    std::vector<std::size_t> selected;      // pool rows in pick order
    std::vector<std::string> names;         // aligned with `selected` (empty if no names given)
    std::vector<double> residual_trace;     // ||X(E-P)||_F^2 after each pick
    double initial_energy = 0.0;            // ||X||_F^2
    std::vector<PrunedCandidate> pruned;
    StopReason stop = StopReason::ReachedTarget;
};

struct SelectionOptions {
    std::size_t target = 300;         // m
    double dependence_tol = 1e-8;     // relative to ||t||^2
    std::size_t threads = 1;
};

/// Orthogonal projector onto the row span of `selected` (k x d). Computed from
/// a Householder QR of the transpose. Throws InvariantError when rows are
/// linearly dependent.
Eigen::MatrixXd projection_of(const Eigen::MatrixXd& selected);

/// Projector onto span(P) + {t}, built as PQP - QP - PQ + P + Q with
/// Q = t t^T / z. Requires z = t^T (E - P) t > 0 (DependenceError otherwise).
Eigen::MatrixXd augmented_projection(const Eigen::MatrixXd& projector, const Eigen::VectorXd& t, double z);

/// ||X (E - P)||_F^2, evaluated directly.
double residual_energy(const Eigen::MatrixXd& images, const Eigen::MatrixXd& projector);

/// Labels are deliberately absent from this signature: selection is unsupervised.
SelectionReport select_concepts(const EmbeddingMatrix& images, const EmbeddingMatrix& pool,
                                const SelectionOptions& opts, const std::vector<std::string>& names = {});

SelectionReport select_concepts(const Eigen::MatrixXd& images, const Eigen::MatrixXd& pool,
                                const SelectionOptions& opts, const std::vector<std::string>& names = {});

std::string selection_report_json(const SelectionReport& report, const std::string& config_hash = {});
std::string selection_trace_csv(const SelectionReport& report);

}  // namespace recbm
