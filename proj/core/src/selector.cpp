#include "recbm/selector.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace recbm {

namespace {

// Orthonormal basis (d x k) for the row span of `selected`.
Eigen::MatrixXd row_span_basis(const Eigen::MatrixXd& selected) {
    const Eigen::Index d = selected.cols();
    const Eigen::Index k = selected.rows();
    if (k == 0) return Eigen::MatrixXd(d, 0);
    if (k > d) throw InvariantError(fmt::format("{} rows cannot be independent in dimension {}", k, d));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(selected.transpose());
    if (qr.rank() < k) {
        throw InvariantError(fmt::format("selected rows are rank deficient (rank {} < {})", qr.rank(), k));
    }
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string to_string(StopReason r) {
    return r == StopReason::ReachedTarget ? "reached m" : "pool exhausted";
}

Eigen::MatrixXd projection_of(const Eigen::MatrixXd& selected) {
    const Eigen::MatrixXd basis = row_span_basis(selected);
    return basis * basis.transpose();
}

Eigen::MatrixXd augmented_projection(const Eigen::MatrixXd& projector, const Eigen::VectorXd& t, double z) {
    if (projector.rows() != projector.cols() || projector.rows() != t.size()) {
        throw ShapeError(fmt::format("projector {}x{} does not match vector of length {}", projector.rows(),
                                     projector.cols(), t.size()));
    }
    if (!(z > 0.0)) throw DependenceError(fmt::format("candidate is dependent on the selection (z = {})", z));
    const Eigen::MatrixXd q = t * t.transpose() / z;
    const Eigen::MatrixXd pq = projector * q;
    const Eigen::MatrixXd qp = q * projector;
    return pq * projector - qp - pq + projector + q;
}

double residual_energy(const Eigen::MatrixXd& images, const Eigen::MatrixXd& projector) {
    return (images - images * projector).squaredNorm();
}

SelectionReport select_concepts(const EmbeddingMatrix& images, const EmbeddingMatrix& pool,
                                const SelectionOptions& opts, const std::vector<std::string>& names) {
    return select_concepts(images.to_eigen(), pool.to_eigen(), opts, names);
}

SelectionReport select_concepts(const Eigen::MatrixXd& images, const Eigen::MatrixXd& pool,
                                const SelectionOptions& opts, const std::vector<std::string>& names) {
    if (images.rows() == 0) throw ConfigError("no probing images");
    if (pool.rows() == 0) throw ConfigError("empty concept pool");
    if (opts.target == 0) throw ConfigError("selection target m must be at least 1");
    if (images.cols() != pool.cols()) {
        throw ShapeError(fmt::format("image dim {} does not match concept dim {}", images.cols(), pool.cols()));
    }
    if (!names.empty() && names.size() != static_cast<std::size_t>(pool.rows())) {
        throw ShapeError(fmt::format("{} names for {} pool rows", names.size(), pool.rows()));
    }
    const std::size_t pool_size = pool.rows();
    const Eigen::VectorXd sq_norms = pool.rowwise().squaredNorm();
    for (std::size_t c = 0; c < pool_size; ++c) {
        if (sq_norms(c) == 0.0) throw ConfigError(fmt::format("concept {} has a zero embedding", c));
    }

    SelectionReport report;
    report.initial_energy = images.squaredNorm();

    std::vector<bool> alive(pool_size, true);
    std::size_t alive_count = pool_size;
    Eigen::MatrixXd chosen(0, pool.cols());
    Eigen::MatrixXd basis(pool.cols(), 0);
    Eigen::MatrixXd unexplained = images;  // X (E - P)
    double energy = report.initial_energy;

    constexpr double kNotScored = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> scores(pool_size);
    std::vector<double> z_values(pool_size);

    while (report.selected.size() < opts.target) {
        const std::size_t step = report.selected.size() + 1;
        parallel_for(pool_size, opts.threads, [&](std::size_t c) {
            scores[c] = kNotScored;
            if (!alive[c]) return;
            const Eigen::VectorXd t = pool.row(c).transpose();
            const Eigen::VectorXd orth = t - basis * (basis.transpose() * t);  // (E - P) t
            const double z = orth.squaredNorm();
            z_values[c] = z;
            if (z <= opts.dependence_tol * sq_norms(c)) return;
            // ||X(E - L(c))||^2 = ||X(E - P)||^2 - ||X(E - P) t||^2 / z
            scores[c] = energy - (unexplained * t).squaredNorm() / z;
        });

        std::size_t best = pool_size;
        for (std::size_t c = 0; c < pool_size; ++c) {
            if (!alive[c]) continue;
            if (std::isnan(scores[c])) {
                alive[c] = false;
                --alive_count;
                report.pruned.push_back({c, names.empty() ? std::string{} : names[c], step, z_values[c]});
                continue;
            }
            if (best == pool_size || scores[c] < scores[best]) best = c;
        }
        if (best == pool_size) {
            report.stop = StopReason::PoolExhausted;
            return report;
        }

        alive[best] = false;
        --alive_count;
        report.selected.push_back(best);
        if (!names.empty()) report.names.push_back(names[best]);

        chosen.conservativeResize(chosen.rows() + 1, Eigen::NoChange);
        chosen.row(chosen.rows() - 1) = pool.row(best);
        basis = row_span_basis(chosen);
        unexplained = images - (images * basis) * basis.transpose();
        energy = unexplained.squaredNorm();
        report.residual_trace.push_back(energy);

        if (alive_count == 0 && report.selected.size() < opts.target) {
            report.stop = StopReason::PoolExhausted;
            return report;
        }
    }
    report.stop = StopReason::ReachedTarget;
    return report;
}

std::string selection_report_json(const SelectionReport& report, const std::string& config_hash) {
    nlohmann::json doc;
    doc["selected"] = report.selected;
    doc["names"] = report.names;
    doc["initial_energy"] = report.initial_energy;
    doc["residual_trace"] = report.residual_trace;
    doc["stop_reason"] = to_string(report.stop);
    doc["first_pick_rule"] = "argmin residual (max captured energy)";
    auto pruned = nlohmann::json::array();
    for (const auto& p : report.pruned) pruned.push_back({{"index", p.index}, {"name", p.name}, {"step", p.step}, {"z", p.z}});
    doc["pruned_dependent"] = pruned;
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    return doc.dump(2) + "\n";
}

std::string selection_trace_csv(const SelectionReport& report) {
    std::string out = "step,concept_index,name,residual\n";
    for (std::size_t i = 0; i < report.selected.size(); ++i) {
        const std::string name = i < report.names.size() ? csv_field(report.names[i]) : std::string{};
        out += fmt::format("{},{},{},{}\n", i + 1, report.selected[i], name, format_double(report.residual_trace[i]));
    }
    return out;
}

}  // namespace recbm
