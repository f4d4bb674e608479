#include "oracles.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace oracle {

Eigen::VectorXd lstsq(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& x) {
    // x ~ atoms^T w
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(atoms.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    return svd.solve(x);
}

double lstsq_residual(const Eigen::MatrixXd& images, const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) return images.squaredNorm();
    // One factorisation, every image as a right-hand side.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    const Eigen::MatrixXd w = svd.solve(images.transpose());
    return (images.transpose() - rows.transpose() * w).squaredNorm();
}

std::size_t svd_rank(const Eigen::MatrixXd& m, double tol) {
    if (m.size() == 0) return 0;
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    std::size_t r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) ++r;
    return r;
}

namespace {

Eigen::MatrixXd stack(const Eigen::MatrixXd& pool, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(idx.size(), pool.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = pool.row(idx[i]);
    return out;
}

// Squared distance of t from span(rows), relative to ||t||^2.
double relative_distance(const Eigen::MatrixXd& rows, const Eigen::VectorXd& t) {
    if (rows.rows() == 0) return 1.0;
    const Eigen::VectorXd w = lstsq(rows, t);
    return (t - rows.transpose() * w).squaredNorm() / t.squaredNorm();
}

}  // namespace

std::vector<GreedyStep> greedy_selection(const Eigen::MatrixXd& images, const Eigen::MatrixXd& pool, std::size_t m,
                                         double dependence_tol) {
    std::vector<GreedyStep> steps;
    std::vector<std::size_t> chosen;
    std::vector<bool> gone(pool.rows(), false);
    while (steps.size() < m) {
        GreedyStep step{0, std::numeric_limits<double>::infinity(), {}};
        bool found = false;
        const Eigen::MatrixXd current = stack(pool, chosen);
        for (Eigen::Index c = 0; c < pool.rows(); ++c) {
            if (gone[c]) continue;
            if (relative_distance(current, pool.row(c).transpose()) <= dependence_tol) {
                step.dependent.push_back(c);
                gone[c] = true;
                continue;
            }
            auto trial = chosen;
            trial.push_back(c);
            const double r = lstsq_residual(images, stack(pool, trial));
            if (r < step.residual) {
                step.residual = r;
                step.pick = c;
                found = true;
            }
        }
        if (!found) break;
        chosen.push_back(step.pick);
        gone[step.pick] = true;
        steps.push_back(step);
    }
    return steps;
}

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
    // Classic O(n^2 m) potentials method, 1-based internally.
    const std::size_t n = cost.rows(), m = cost.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) assignment[p[j] - 1] = j - 1;
    return assignment;
}

BestSupport best_support(const Eigen::MatrixXd& bank, const Eigen::VectorXd& x, std::size_t n) {
    const std::size_t m = bank.rows();
    BestSupport best{{}, std::numeric_limits<double>::infinity()};
    std::vector<bool> mask(m, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), true);
    do {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < m; ++i)
            if (mask[i]) idx.push_back(i);
        const Eigen::MatrixXd rows = stack(bank, idx);
        const double r = (x - rows.transpose() * lstsq(rows, x)).norm();
        if (r < best.residual_norm) best = {idx, r};
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return best;
}

Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f, const Eigen::MatrixXd& at,
                                   double step) {
    Eigen::MatrixXd grad(at.rows(), at.cols());
    for (Eigen::Index i = 0; i < at.rows(); ++i) {
        for (Eigen::Index j = 0; j < at.cols(); ++j) {
            Eigen::MatrixXd plus = at, minus = at;
            plus(i, j) += step;
            minus(i, j) -= step;
            grad(i, j) = (f(plus) - f(minus)) / (2.0 * step);
        }
    }
    return grad;
}

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
    return m;
}

Eigen::MatrixXd unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Eigen::MatrixXd m = gaussian(rows, cols, rng);
    m.rowwise().normalize();
    return m;
}

}  // namespace oracle
