#pragma once

// Sparse decomposition of image embeddings over a concept bank by orthogonal
// matching pursuit. Only the fitted part I_hat = sum_j w_j c_j is kept
// downstream; the residue is reported but otherwise discarded.

#include "recbm/embkit.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace recbm {

struct SparseCode {
    std::vector<std::size_t> support;    // bank rows in pick order
    std::vector<double> coefficients;    // aligned with support
    double residual_norm = 0.0;
    std::vector<double> residual_history;  // ||residual|| after each pick
    Eigen::VectorXd reconstructed;
};

struct OmpOptions {
    std::size_t sparsity = 32;   // n
    double stop_tol = 1e-6;      // relative to ||I||
};

/// Precomputed view of a concept bank (m x d, rows unit-normalised).
class ConceptDictionary {
public:
    explicit ConceptDictionary(Eigen::MatrixXd atoms);
    explicit ConceptDictionary(const EmbeddingMatrix& atoms) : ConceptDictionary(atoms.to_eigen()) {}

    const Eigen::MatrixXd& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.rows(); }
    std::size_t dim() const { return atoms_.cols(); }

private:
    Eigen::MatrixXd atoms_;
};

SparseCode omp_decompose(const Eigen::VectorXd& image, const ConceptDictionary& bank, const OmpOptions& opts);

struct BatchDecomposition {
    std::vector<SparseCode> codes;
    EmbeddingMatrix reconstructed;
};

/// Per-row decomposition. Rows must be non-zero; the error names the row.
BatchDecomposition decompose_batch(const EmbeddingMatrix& images, const ConceptDictionary& bank,
                                   const OmpOptions& opts, std::size_t threads = 1);

/// Text codes file, one line per image:
///   <image index>\t<concept>:<coef> <concept>:<coef> ...\t<residual norm>
std::string format_codes(const std::vector<SparseCode>& codes, const std::string& config_hash = {});
std::vector<SparseCode> parse_codes(const std::string& text, const ConceptDictionary& bank);

}  // namespace recbm
