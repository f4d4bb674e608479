#include "recbm/ablation.hpp"

#include "recbm/error.hpp"
#include "recbm/selector.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace recbm {

namespace {

std::vector<std::string> placeholder_classes(std::size_t n) {
    std::vector<std::string> names(n);
    for (std::size_t i = 0; i < n; ++i) names[i] = fmt::format("class_{}", i);
    return names;
}

LinearHead initial_head(std::size_t dim, const DownstreamOptions& opts) {
    if (opts.classes == 0) throw ConfigError("downstream evaluation needs the class count");
    const auto names = placeholder_classes(opts.classes);
    if (opts.class_prompts.size() > 0) {
        return init_zeroshot(EmbeddingMatrix::from_eigen(opts.class_prompts), names);
    }
    return init_zeros(dim, names);
}

double fit_and_score(LinearHead head, const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                     const Eigen::MatrixXd& test_x, const std::vector<int>& test_y, const TrainOptions& train_opts) {
    if (train_opts.epochs > 0) {
        head = train(head, EmbeddingMatrix::from_eigen(train_x), train_y, train_opts).head;
    }
    return accuracy(head, EmbeddingMatrix::from_eigen(test_x), test_y);
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& pool, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(rows.size(), pool.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = pool.row(rows[i]);
    return out;
}

Eigen::MatrixXd reconstruct(const ConceptDictionary& dict, const Eigen::MatrixXd& x, const DownstreamOptions& opts) {
    return decompose_batch(EmbeddingMatrix::from_eigen(x), dict, opts.omp, opts.threads).reconstructed.to_eigen();
}

}  // namespace

std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Greedy: return "greedy";
        case SelectionStrategy::Random: return "random";
        case SelectionStrategy::KMeans: return "kmeans";
    }
    return "unknown";
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
    if (s == "greedy") return SelectionStrategy::Greedy;
    if (s == "random") return SelectionStrategy::Random;
    if (s == "kmeans") return SelectionStrategy::KMeans;
    throw ConfigError(fmt::format("unknown selection strategy '{}'", s));
}

std::vector<std::size_t> kmeans_medoids(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                                        std::size_t iterations) {
    const std::size_t n = points.rows();
    if (k == 0 || k > n) throw ConfigError(fmt::format("k-means needs 1 <= k <= {}, got {}", n, k));
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    Eigen::MatrixXd centroids(k, points.cols());
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));
    Eigen::VectorXd nearest_sq = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (std::size_t c = 1; c < k; ++c) {
        const double total = nearest_sq.sum();
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                target -= nearest_sq(pick);
                if (target <= 0.0) break;
            }
        }
        centroids.row(c) = points.row(pick);
        nearest_sq = nearest_sq.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<std::size_t> assign(n, 0);
    for (std::size_t it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (assign[i] != static_cast<std::size_t>(best) || it == 0) changed |= assign[i] != static_cast<std::size_t>(best);
            assign[i] = best;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(assign[i]) += points.row(i);
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = (points.row(i) - centroids.row(assign[i])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centroids.row(c) = points.row(far);
            changed = true;
        }
        if (!changed && it > 0) break;
    }

    std::vector<std::size_t> medoids;
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t best = n;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        used[best] = true;
        medoids.push_back(best);
    }
    return medoids;
}

std::vector<std::size_t> select_by_strategy(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool,
                                            std::size_t m, SelectionStrategy strategy, std::uint64_t seed) {
    if (m == 0) throw ConfigError("bottleneck size m must be at least 1");
    const std::size_t take = std::min<std::size_t>(m, pool.rows());
    switch (strategy) {
        case SelectionStrategy::Greedy: {
            SelectionOptions opts;
            opts.target = m;
            return select_concepts(probe, pool, opts).selected;
        }
        case SelectionStrategy::Random: {
            std::vector<std::size_t> idx(pool.rows());
            std::iota(idx.begin(), idx.end(), 0);
            std::mt19937_64 rng(seed);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(take);
            return idx;
        }
        case SelectionStrategy::KMeans: return kmeans_medoids(pool, take, seed);
    }
    return {};
}

double subset_residual(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool, const std::vector<std::size_t>& rows) {
    if (rows.empty()) return probe.squaredNorm();
    const Eigen::MatrixXd chosen = rows_of(pool, rows);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(chosen.transpose());
    const Eigen::Index rank = qr.rank();
    const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(pool.cols(), rank);
    return (probe - (probe * basis) * basis.transpose()).squaredNorm();
}

double reconstructed_accuracy(const Eigen::MatrixXd& bank, const LabelledSplit& train, const LabelledSplit& test,
                              const DownstreamOptions& opts) {
    const ConceptDictionary dict(bank);
    const Eigen::MatrixXd train_hat = reconstruct(dict, train.embeddings, opts);
    const Eigen::MatrixXd test_hat = reconstruct(dict, test.embeddings, opts);
    return fit_and_score(initial_head(bank.cols(), opts), train_hat, train.labels, test_hat, test.labels, opts.train);
}

double linear_probe_accuracy(const LabelledSplit& train, const LabelledSplit& test, const DownstreamOptions& opts) {
    return fit_and_score(initial_head(train.embeddings.cols(), opts), train.embeddings, train.labels, test.embeddings,
                         test.labels, opts.train);
}

std::vector<SweepPoint> ablate_selection(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& pool,
                                         const LabelledSplit& train, const LabelledSplit& test,
                                         const std::vector<std::size_t>& m_grid, SelectionStrategy strategy,
                                         const DownstreamOptions& opts, std::uint64_t seed) {
    if (m_grid.empty()) throw ConfigError("ablation grid is empty");
    std::vector<SweepPoint> points;
    const double energy = probe.squaredNorm();
    for (std::size_t m : m_grid) {
        const auto rows = select_by_strategy(probe, pool, m, strategy, seed);
        SweepPoint p;
        p.strategy = strategy;
        p.m = m;
        p.selected = rows.size();
        p.residual = subset_residual(probe, pool, rows);
        p.relative_residual = energy > 0.0 ? p.residual / energy : 0.0;
        p.accuracy = reconstructed_accuracy(rows_of(pool, rows), train, test, opts);
        points.push_back(p);
    }
    return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out = "strategy,m,selected,residual,relative_residual,accuracy\n";
    for (const auto& p : points) {
        out += fmt::format("{},{},{},{},{},{}\n", to_string(p.strategy), p.m, p.selected, format_double(p.residual),
                           format_double(p.relative_residual), format_double(p.accuracy));
    }
    return out;
}

Eigen::MatrixXd dense_scores(const std::vector<SparseCode>& codes, std::size_t concepts) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(codes.size(), concepts);
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t k = 0; k < codes[i].support.size(); ++k) out(i, codes[i].support[k]) = codes[i].coefficients[k];
    return out;
}

AssociationResult ablate_association(const Eigen::MatrixXd& bank, const LabelledSplit& train,
                                     const LabelledSplit& test, const DownstreamOptions& opts) {
    if (bank.rows() == 0) throw ConfigError("empty concept bank");
    const ConceptDictionary dict(bank);
    const std::size_t m = dict.size();
    const auto names = placeholder_classes(opts.classes);

    auto codes_of = [&](const Eigen::MatrixXd& x) {
        return decompose_batch(EmbeddingMatrix::from_eigen(x), dict, opts.omp, opts.threads).codes;
    };
    // Rows are unit-normalised on both sides, so dot products are cosines.
    auto cosine_of = [&](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd unit = x;
        unit.rowwise().normalize();
        return Eigen::MatrixXd(unit * dict.atoms().transpose());
    };

    AssociationResult r;
    r.decomposition_accuracy = fit_and_score(init_zeros(m, names), dense_scores(codes_of(train.embeddings), m),
                                             train.labels, dense_scores(codes_of(test.embeddings), m), test.labels,
                                             opts.train);
    r.similarity_accuracy = fit_and_score(init_zeros(m, names), cosine_of(train.embeddings), train.labels,
                                          cosine_of(test.embeddings), test.labels, opts.train);
    return r;
}

std::string association_csv(const AssociationResult& result) {
    return fmt::format("arm,accuracy\ndecomposition,{}\nsimilarity,{}\n", format_double(result.decomposition_accuracy),
                       format_double(result.similarity_accuracy));
}

}  // namespace recbm
