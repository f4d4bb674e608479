#include "recbm/decomposer.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace recbm {

ConceptDictionary::ConceptDictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {
    if (atoms_.rows() == 0) throw ConfigError("empty concept bank");
    for (Eigen::Index j = 0; j < atoms_.rows(); ++j) {
        const double n = atoms_.row(j).norm();
        if (n == 0.0) throw ConfigError(fmt::format("concept {} has a zero embedding", j));
        atoms_.row(j) /= n;
    }
}

SparseCode omp_decompose(const Eigen::VectorXd& image, const ConceptDictionary& bank, const OmpOptions& opts) {
    if (opts.sparsity == 0) throw ConfigError("sparsity n must be at least 1");
    if (static_cast<std::size_t>(image.size()) != bank.dim()) {
        throw ShapeError(fmt::format("image dim {} does not match bank dim {}", image.size(), bank.dim()));
    }
    const Eigen::MatrixXd& atoms = bank.atoms();
    SparseCode code;
    code.reconstructed = Eigen::VectorXd::Zero(image.size());
    const double image_norm = image.norm();
    code.residual_norm = image_norm;
    if (image_norm == 0.0) return code;

    const std::size_t max_picks = std::min({opts.sparsity, bank.size(), bank.dim()});
    const Eigen::VectorXd image_corr = atoms * image;  // <c_j, I>

    std::vector<bool> used(bank.size(), false);
    Eigen::MatrixXd chol(max_picks, max_picks);  // lower Cholesky factor of the support Gram matrix
    chol.setZero();
    Eigen::VectorXd rhs(max_picks);
    Eigen::VectorXd coef;
    Eigen::VectorXd residual = image;

    for (std::size_t k = 0; k < max_picks; ++k) {
        const Eigen::VectorXd corr = atoms * residual;
        std::size_t pick = bank.size();
        double best = 0.0;
        for (std::size_t j = 0; j < bank.size(); ++j) {
            if (used[j]) continue;
            const double a = std::abs(corr(j));
            if (pick == bank.size() || a > best) {
                pick = j;
                best = a;
            }
        }
        if (pick == bank.size() || best <= 1e-14 * image_norm) break;

        // Extend the Cholesky factor with the new atom; stop if it is dependent.
        const auto k_idx = static_cast<Eigen::Index>(k);
        Eigen::VectorXd cross(k);
        for (std::size_t i = 0; i < k; ++i) cross(i) = atoms.row(code.support[i]).dot(atoms.row(pick));
        Eigen::VectorXd w = cross;
        if (k > 0) chol.topLeftCorner(k_idx, k_idx).triangularView<Eigen::Lower>().solveInPlace(w);
        const double pivot_sq = atoms.row(pick).squaredNorm() - w.squaredNorm();
        if (pivot_sq <= 1e-12) break;
        if (k > 0) chol.row(k_idx).head(k_idx) = w.transpose();
        chol(k_idx, k_idx) = std::sqrt(pivot_sq);

        used[pick] = true;
        code.support.push_back(pick);
        rhs(k_idx) = image_corr(pick);

        const auto size = k_idx + 1;
        const auto lower = chol.topLeftCorner(size, size).triangularView<Eigen::Lower>();
        coef = lower.solve(rhs.head(size));
        lower.transpose().solveInPlace(coef);

        code.reconstructed.setZero();
        for (Eigen::Index i = 0; i < size; ++i) code.reconstructed += coef(i) * atoms.row(code.support[i]).transpose();
        residual = image - code.reconstructed;
        code.residual_norm = residual.norm();
        code.residual_history.push_back(code.residual_norm);
        if (code.residual_norm <= opts.stop_tol * image_norm) break;
    }
    code.coefficients.assign(coef.data(), coef.data() + coef.size());
    return code;
}

BatchDecomposition decompose_batch(const EmbeddingMatrix& images, const ConceptDictionary& bank,
                                   const OmpOptions& opts, std::size_t threads) {
    if (images.dim() != bank.dim()) {
        throw ShapeError(fmt::format("image dim {} does not match bank dim {}", images.dim(), bank.dim()));
    }
    if (auto r = first_zero_row(images)) throw ConfigError(fmt::format("degenerate embedding at row {}", *r));

    BatchDecomposition out;
    out.codes.resize(images.rows());
    parallel_for(images.rows(), threads, [&](std::size_t r) {
        try {
            out.codes[r] = omp_decompose(images.row_eigen(r), bank, opts);
        } catch (const Error& e) {
            throw Error(fmt::format("row {}: {}", r, e.what()));
        }
    });
    Eigen::MatrixXd fitted(images.rows(), images.dim());
    for (std::size_t r = 0; r < images.rows(); ++r) fitted.row(r) = out.codes[r].reconstructed.transpose();
    out.reconstructed = EmbeddingMatrix::from_eigen(fitted, "reconstructed");
    return out;
}

std::string format_codes(const std::vector<SparseCode>& codes, const std::string& config_hash) {
    std::string out;
    if (!config_hash.empty()) out += fmt::format("# config_hash={}\n", config_hash);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        out += fmt::format("{}\t", i);
        for (std::size_t k = 0; k < codes[i].support.size(); ++k) {
            if (k > 0) out += ' ';
            out += fmt::format("{}:{}", codes[i].support[k], format_double(codes[i].coefficients[k]));
        }
        out += fmt::format("\t{}\n", format_double(codes[i].residual_norm));
    }
    return out;
}

std::vector<SparseCode> parse_codes(const std::string& text, const ConceptDictionary& bank) {
    std::size_t line_no = 0;
    auto number = [&](const std::string& s, auto convert) {
        try {
            std::size_t used = 0;
            auto v = convert(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::logic_error&) {
            throw FormatError(fmt::format("codes line {}: bad number '{}'", line_no, s));
        }
    };
    auto to_index = [&](const std::string& s) {
        return number(s, [](const std::string& t, std::size_t* u) { return std::stoul(t, u); });
    };
    auto to_double = [&](const std::string& s) {
        return number(s, [](const std::string& t, std::size_t* u) { return std::stod(t, u); });
    };
    std::vector<SparseCode> codes;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = line.rfind('\t');
        if (tab1 == std::string::npos || tab1 == tab2) throw FormatError(fmt::format("codes line {} malformed", line_no));
        if (to_index(line.substr(0, tab1)) != codes.size()) {
            throw FormatError(fmt::format("codes line {} is out of order", line_no));
        }
        SparseCode code;
        code.reconstructed = Eigen::VectorXd::Zero(bank.dim());
        std::istringstream pairs(line.substr(tab1 + 1, tab2 - tab1 - 1));
        std::string pair;
        while (pairs >> pair) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos) throw FormatError(fmt::format("codes line {} malformed", line_no));
            const std::size_t idx = to_index(pair.substr(0, colon));
            if (idx >= bank.size()) throw IndexError(fmt::format("codes line {} references concept {}", line_no, idx));
            const double w = to_double(pair.substr(colon + 1));
            code.support.push_back(idx);
            code.coefficients.push_back(w);
            code.reconstructed += w * bank.atoms().row(idx).transpose();
        }
        code.residual_norm = to_double(line.substr(tab2 + 1));
        codes.push_back(std::move(code));
    }
    return codes;
}

}  // namespace recbm
