#include "recbm/explain.hpp"

#include "recbm/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>

namespace recbm {

Explanation explain(const LinearHead& head, const Eigen::MatrixXd& bank, const SparseCode& code, std::size_t top,
                    const std::vector<std::string>& names, std::size_t image_index) {
    if (!names.empty() && names.size() != static_cast<std::size_t>(bank.rows())) {
        throw ShapeError(fmt::format("{} names for {} concepts", names.size(), bank.rows()));
    }
    for (std::size_t idx : code.support) {
        if (idx >= static_cast<std::size_t>(bank.rows())) {
            throw IndexError(fmt::format("code references concept {} outside a bank of {}", idx, bank.rows()));
        }
    }
    const Eigen::MatrixXd weights = concept_weights(head, bank);
    const Eigen::VectorXd logits = concept_logits(head, weights, code);

    Explanation ex;
    ex.image_index = image_index;
    ex.predicted = argmax(logits);
    ex.predicted_logit = logits(ex.predicted);
    ex.bias = head.bias(ex.predicted);
    ex.residual_norm = code.residual_norm;
    if (code.support.empty()) {
        ex.note = "reconstruction degenerate";
        return ex;
    }
    for (std::size_t k = 0; k < code.support.size(); ++k) {
        const std::size_t j = code.support[k];
        ex.contributions.push_back({j, names.empty() ? std::string{} : names[j], code.coefficients[k],
                                    code.coefficients[k] * weights(j, ex.predicted)});
    }
    std::sort(ex.contributions.begin(), ex.contributions.end(), [](const auto& a, const auto& b) {
        return a.contribution > b.contribution || (a.contribution == b.contribution && a.concept_index < b.concept_index);
    });
    if (ex.contributions.size() > top) {
        ex.contributions.resize(top);
        ex.complete = false;
        ex.note = "partial";
    }
    return ex;
}

std::string explanations_json(const std::vector<Explanation>& explanations, const std::vector<std::string>& classes,
                              const std::string& config_hash) {
    nlohmann::json doc;
    auto list = nlohmann::json::array();
    for (const auto& ex : explanations) {
        nlohmann::json item;
        item["image"] = ex.image_index;
        item["predicted"] = ex.predicted;
        if (ex.predicted < classes.size()) item["predicted_class"] = classes[ex.predicted];
        item["logit"] = ex.predicted_logit;
        item["bias"] = ex.bias;
        item["residual_norm"] = ex.residual_norm;
        item["complete"] = ex.complete;
        if (!ex.note.empty()) item["note"] = ex.note;
        auto contributions = nlohmann::json::array();
        for (const auto& c : ex.contributions) {
            contributions.push_back({{"concept", c.concept_index},
                                     {"name", c.name},
                                     {"coefficient", c.coefficient},
                                     {"contribution", c.contribution}});
        }
        item["contributions"] = std::move(contributions);
        list.push_back(std::move(item));
    }
    doc["explanations"] = std::move(list);
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    return doc.dump(2) + "\n";
}

}  // namespace recbm
