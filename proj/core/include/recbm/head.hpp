#pragma once

// Linear label predictor over (reconstructed) embeddings.
//
// logits = W^T x + b with W of shape d x |Y|. Because every reconstructed
// embedding is a sparse sum of concept embeddings, the same logits factor as
// sum_j w_j (W^T c_j) + b: concept scores times a class-concept weight matrix.

#include "recbm/decomposer.hpp"
#include "recbm/embkit.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace recbm {

enum class InitMode { ZeroshotPrompt, Zeros };

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& s);

inline constexpr const char* kDefaultPromptTemplate = "This is a photo of [cls]";

struct LinearHead {
    Eigen::MatrixXd weights;  // d x classes
    Eigen::VectorXd bias;     // classes
    std::vector<std::string> class_names;
    InitMode init_mode = InitMode::Zeros;

    std::size_t dim() const { return weights.rows(); }
    std::size_t classes() const { return weights.cols(); }
};

/// Columns of W are the unit-normalised class-prompt embeddings; b = 0.
LinearHead init_zeroshot(const EmbeddingMatrix& class_prompts, const std::vector<std::string>& class_names);
LinearHead init_zeros(std::size_t dim, const std::vector<std::string>& class_names);

struct Prediction {
    std::size_t label = 0;
    Eigen::VectorXd logits;
};

/// Argmax with lowest-index tie-break.
std::size_t argmax(const Eigen::VectorXd& v);

Prediction predict(const LinearHead& head, const Eigen::VectorXd& embedding);
std::vector<std::size_t> predict_all(const LinearHead& head, const EmbeddingMatrix& embeddings);
double accuracy(const LinearHead& head, const EmbeddingMatrix& embeddings, const std::vector<int>& labels);

/// m x classes matrix with entry (j, y) = <W_y, c_j>.
Eigen::MatrixXd concept_weights(const LinearHead& head, const Eigen::MatrixXd& bank);

/// sum_j w_j (W^T c_j) + b, summed concept by concept.
Eigen::VectorXd concept_logits(const LinearHead& head, const Eigen::MatrixXd& concept_weight_matrix,
                               const SparseCode& code);

struct LossGradient {
    double loss = 0.0;         // mean softmax cross-entropy (+ L2 term when enabled)
    Eigen::MatrixXd d_weights;
    Eigen::VectorXd d_bias;
};

/// Rows of `inputs` are examples.
LossGradient loss_and_gradient(const LinearHead& head, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                               double weight_decay = 0.0);

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // optional L2 penalty
    std::uint64_t seed = 0;
};

struct TrainResult {
    LinearHead head;
    std::vector<double> loss_trace;  // full-dataset loss at the end of each epoch
};

/// Adam on softmax cross-entropy. Shuffles with a seeded generator each epoch.
TrainResult train(const LinearHead& initial, const EmbeddingMatrix& inputs, const std::vector<int>& labels,
                  const TrainOptions& opts);

/// Indices of up to `shots` examples per class, drawn with a seeded shuffle
/// and returned in ascending order.
std::vector<std::size_t> few_shot_subset(const std::vector<int>& labels, std::size_t shots, std::uint64_t seed);

/// W stored transposed (one row per class) as `<stem>.emb`; names, bias and
/// metadata in `<stem>.json`.
void save_head(const LinearHead& head, const std::filesystem::path& stem, const std::string& metadata_json = "{}");
LinearHead load_head(const std::filesystem::path& stem);

}  // namespace recbm
