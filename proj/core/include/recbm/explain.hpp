#pragma once

#include "recbm/decomposer.hpp"
#include "recbm/head.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace recbm {

struct ConceptContribution {
    std::size_t concept_index = 0;
    std::string name;
    double coefficient = 0.0;    // w_j
    double contribution = 0.0;   // w_j * <W_y, c_j> for the predicted class y
};

struct Explanation {
    std::size_t image_index = 0;
    std::size_t predicted = 0;
    double predicted_logit = 0.0;
    double bias = 0.0;                       // b_y
    std::vector<ConceptContribution> contributions;  // descending
    bool complete = true;                    // false when truncated by `top`
    double residual_norm = 0.0;
    std::string note;
};

/// Explains one image through the concept form of the head. Contributions are
/// sorted by value, ties by concept index; with `complete` set they sum with
/// the bias to the predicted logit.
Explanation explain(const LinearHead& head, const Eigen::MatrixXd& bank, const SparseCode& code, std::size_t top,
                    const std::vector<std::string>& names = {}, std::size_t image_index = 0);

std::string explanations_json(const std::vector<Explanation>& explanations, const std::vector<std::string>& classes,
                              const std::string& config_hash = {});

}  // namespace recbm
