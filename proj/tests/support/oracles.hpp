#pragma once

// Reference implementations for tests. Deliberately naive: they share no code
// with the library and favour obviously-correct over fast.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

/// Least-squares coefficients of x over the rows of `atoms` via SVD
/// pseudo-inverse (minimum-norm solution).
Eigen::VectorXd lstsq(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& x);

/// sum_i ||x_i - proj_{span(rows)} x_i||^2, computed row by row with lstsq.
double lstsq_residual(const Eigen::MatrixXd& images, const Eigen::MatrixXd& rows);

/// Numerical rank through singular values above tol * largest.
std::size_t svd_rank(const Eigen::MatrixXd& m, double tol = 1e-10);

struct GreedyStep {
    std::size_t pick;
    double residual;
    std::vector<std::size_t> dependent;  // candidates skipped because they add no rank
};

/// At each step solve a full least-squares problem for every remaining
/// candidate and take the argmin residual (lowest index on ties).
std::vector<GreedyStep> greedy_selection(const Eigen::MatrixXd& images, const Eigen::MatrixXd& pool, std::size_t m,
                                         double dependence_tol = 1e-8);

/// Minimum-cost perfect assignment of rows to columns (rows <= cols).
/// Returns the column assigned to each row.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

struct BestSupport {
    std::vector<std::size_t> support;  // ascending
    double residual_norm;
};

/// Exhaustive search over every n-subset of bank rows.
BestSupport best_support(const Eigen::MatrixXd& bank, const Eigen::VectorXd& x, std::size_t n);

/// Central differences of a scalar function over every entry of `at`.
Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& at,
                                   double step);

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
Eigen::MatrixXd unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace oracle
