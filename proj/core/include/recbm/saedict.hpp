#pragma once

// Sparse autoencoder dictionary over image embeddings.
//
//   u = relu(W_enc I + b_enc)        (k activations)
//   I ~ V u                          (V: d x k, unit-norm columns = atoms)
//
// Trained by minibatch SGD on mean ||I - V u||^2 + lambda ||u||_1 with
// hand-derived gradients.

#include "recbm/embkit.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace recbm {

struct DictionaryOptions {
    std::optional<std::size_t> atoms;  // k; unset selects default_atom_count(d)
    double penalty = 0.1;           // lambda
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;    // decayed x0.1 at 80% of the epochs
    std::uint64_t seed = 0;
};

/// 8 d / max(1, d / 64).
std::size_t default_atom_count(std::size_t dim);

struct SparseDictionary {
    Eigen::MatrixXd atoms;           // d x k
    Eigen::MatrixXd encoder_weights; // k x d
    Eigen::VectorXd encoder_bias;    // k
    double penalty = 0.0;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double initial_loss = 0.0;       // objective before the first update
    std::vector<double> loss_trace;  // full-set objective after each epoch

    std::size_t size() const { return atoms.cols(); }
    std::size_t dim() const { return atoms.rows(); }
};

struct ActivationVector {
    Eigen::VectorXd values;
    double sparsity = 0.0;  // fraction of entries below 1e-4
};

/// Mean over rows of ||I - V u||^2 + lambda ||u||_1.
double dictionary_objective(const SparseDictionary& dict, const Eigen::MatrixXd& images);
double reconstruction_error(const SparseDictionary& dict, const Eigen::MatrixXd& images);

SparseDictionary train_dictionary(const EmbeddingMatrix& images, const DictionaryOptions& opts);
SparseDictionary train_dictionary(const Eigen::MatrixXd& images, const DictionaryOptions& opts);

ActivationVector encode(const SparseDictionary& dict, const Eigen::VectorXd& image);
Eigen::VectorXd decode(const SparseDictionary& dict, const Eigen::VectorXd& activations);

/// rows x k activation matrix.
Eigen::MatrixXd encode_all(const SparseDictionary& dict, const Eigen::MatrixXd& images);

/// Indices of the `count` rows with the largest activation of `atom`,
/// descending; ties go to the lower row index.
std::vector<std::size_t> top_activating_images(const SparseDictionary& dict, const Eigen::MatrixXd& images,
                                               std::size_t atom, std::size_t count);
std::vector<std::size_t> top_indices(const Eigen::VectorXd& scores, std::size_t count);

/// `<stem>.atoms.emb` (k x d), `<stem>.encoder.emb` (k x d), `<stem>.json`.
void save_dictionary(const SparseDictionary& dict, const std::filesystem::path& stem,
                     const std::string& config_hash = {});
SparseDictionary load_dictionary(const std::filesystem::path& stem);

}  // namespace recbm
