#include "recbm/head.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace recbm {

namespace {

void check_labels(const std::vector<int>& labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw ShapeError(fmt::format("{} labels for {} rows", labels.size(), rows));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw ConfigError(fmt::format("label {} at row {} is outside the {} classes", labels[i], i, classes));
        }
    }
}

}  // namespace

std::string to_string(InitMode mode) { return mode == InitMode::ZeroshotPrompt ? "zeroshot-prompt" : "zeros"; }

InitMode init_mode_from_string(const std::string& s) {
    if (s == "zeroshot-prompt") return InitMode::ZeroshotPrompt;
    if (s == "zeros") return InitMode::Zeros;
    throw ConfigError(fmt::format("unknown init mode '{}'", s));
}

LinearHead init_zeroshot(const EmbeddingMatrix& class_prompts, const std::vector<std::string>& class_names) {
    if (class_prompts.rows() == 0 || class_names.empty()) throw ConfigError("zero-shot head needs at least one class");
    if (class_prompts.rows() != class_names.size()) {
        throw ConfigError(fmt::format("{} prompt embeddings for {} classes", class_prompts.rows(), class_names.size()));
    }
    LinearHead head;
    head.weights = normalize_rows(class_prompts).to_eigen().transpose();
    head.bias = Eigen::VectorXd::Zero(class_names.size());
    head.class_names = class_names;
    head.init_mode = InitMode::ZeroshotPrompt;
    return head;
}

LinearHead init_zeros(std::size_t dim, const std::vector<std::string>& class_names) {
    if (dim == 0 || class_names.empty()) throw ConfigError("head needs a positive dimension and at least one class");
    LinearHead head;
    head.weights = Eigen::MatrixXd::Zero(dim, class_names.size());
    head.bias = Eigen::VectorXd::Zero(class_names.size());
    head.class_names = class_names;
    head.init_mode = InitMode::Zeros;
    return head;
}

std::size_t argmax(const Eigen::VectorXd& v) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

Prediction predict(const LinearHead& head, const Eigen::VectorXd& embedding) {
    if (static_cast<std::size_t>(embedding.size()) != head.dim()) {
        throw ShapeError(fmt::format("embedding dim {} does not match head dim {}", embedding.size(), head.dim()));
    }
    Prediction p;
    p.logits = head.weights.transpose() * embedding + head.bias;
    p.label = argmax(p.logits);
    return p;
}

std::vector<std::size_t> predict_all(const LinearHead& head, const EmbeddingMatrix& embeddings) {
    if (embeddings.dim() != head.dim()) {
        throw ShapeError(fmt::format("embedding dim {} does not match head dim {}", embeddings.dim(), head.dim()));
    }
    const Eigen::MatrixXd logits = (embeddings.to_eigen() * head.weights).rowwise() + head.bias.transpose();
    std::vector<std::size_t> out(embeddings.rows());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = argmax(logits.row(r).transpose());
    return out;
}

double accuracy(const LinearHead& head, const EmbeddingMatrix& embeddings, const std::vector<int>& labels) {
    check_labels(labels, embeddings.rows(), head.classes());
    if (labels.empty()) return 0.0;
    const auto preds = predict_all(head, embeddings);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == static_cast<std::size_t>(labels[i]);
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

Eigen::MatrixXd concept_weights(const LinearHead& head, const Eigen::MatrixXd& bank) {
    if (static_cast<std::size_t>(bank.cols()) != head.dim()) {
        throw ShapeError(fmt::format("bank dim {} does not match head dim {}", bank.cols(), head.dim()));
    }
    return bank * head.weights;
}

Eigen::VectorXd concept_logits(const LinearHead& head, const Eigen::MatrixXd& concept_weight_matrix,
                               const SparseCode& code) {
    if (static_cast<std::size_t>(concept_weight_matrix.cols()) != head.classes()) {
        throw ShapeError("concept weight matrix does not match the head's class count");
    }
    Eigen::VectorXd logits = head.bias;
    for (std::size_t k = 0; k < code.support.size(); ++k) {
        if (code.support[k] >= static_cast<std::size_t>(concept_weight_matrix.rows())) {
            throw IndexError(fmt::format("concept {} outside the weight matrix", code.support[k]));
        }
        logits += code.coefficients[k] * concept_weight_matrix.row(code.support[k]).transpose();
    }
    return logits;
}

LossGradient loss_and_gradient(const LinearHead& head, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                               double weight_decay) {
    check_labels(labels, inputs.rows(), head.classes());
    if (static_cast<std::size_t>(inputs.cols()) != head.dim()) {
        throw ShapeError(fmt::format("input dim {} does not match head dim {}", inputs.cols(), head.dim()));
    }
    const auto n = static_cast<double>(inputs.rows());
    Eigen::MatrixXd probs = (inputs * head.weights).rowwise() + head.bias.transpose();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double peak = probs.row(i).maxCoeff();
        probs.row(i).array() = (probs.row(i).array() - peak).exp();
        const double total = probs.row(i).sum();
        probs.row(i) /= total;
        loss -= std::log(probs(i, labels[i]));
    }
    LossGradient g;
    g.loss = loss / n + 0.5 * weight_decay * head.weights.squaredNorm();
    for (Eigen::Index i = 0; i < probs.rows(); ++i) probs(i, labels[i]) -= 1.0;
    probs /= n;
    g.d_weights = inputs.transpose() * probs + weight_decay * head.weights;
    g.d_bias = probs.colwise().sum().transpose();
    return g;
}

TrainResult train(const LinearHead& initial, const EmbeddingMatrix& inputs, const std::vector<int>& labels,
                  const TrainOptions& opts) {
    if (inputs.rows() == 0 || labels.empty()) throw ConfigError("empty training set");
    if (opts.batch_size == 0) throw ConfigError("batch size must be at least 1");
    check_labels(labels, inputs.rows(), initial.classes());
    if (inputs.dim() != initial.dim()) {
        throw ShapeError(fmt::format("input dim {} does not match head dim {}", inputs.dim(), initial.dim()));
    }

    TrainResult result{initial, {}};
    LinearHead& head = result.head;
    const Eigen::MatrixXd x = inputs.to_eigen();

    Eigen::MatrixXd m_w = Eigen::MatrixXd::Zero(head.weights.rows(), head.weights.cols());
    Eigen::MatrixXd v_w = m_w;
    Eigen::VectorXd m_b = Eigen::VectorXd::Zero(head.bias.size());
    Eigen::VectorXd v_b = m_b;
    std::uint64_t step = 0;

    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opts.batch_size);
            Eigen::MatrixXd batch(stop - start, x.cols());
            std::vector<int> batch_labels(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.row(i - start) = x.row(order[i]);
                batch_labels[i - start] = labels[order[i]];
            }
            const LossGradient g = loss_and_gradient(head, batch, batch_labels, opts.weight_decay);

            ++step;
            const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
            m_w = opts.beta1 * m_w + (1.0 - opts.beta1) * g.d_weights;
            v_w = opts.beta2 * v_w + (1.0 - opts.beta2) * g.d_weights.cwiseProduct(g.d_weights);
            m_b = opts.beta1 * m_b + (1.0 - opts.beta1) * g.d_bias;
            v_b = opts.beta2 * v_b + (1.0 - opts.beta2) * g.d_bias.cwiseProduct(g.d_bias);
            head.weights.array() -=
                opts.learning_rate * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + opts.epsilon);
            head.bias.array() -= opts.learning_rate * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + opts.epsilon);
        }
        result.loss_trace.push_back(loss_and_gradient(head, x, labels, opts.weight_decay).loss);
    }
    return result;
}

std::vector<std::size_t> few_shot_subset(const std::vector<int>& labels, std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw ConfigError("few-shot subset needs at least one shot per class");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out;
    for (auto& [label, rows] : by_class) {
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(std::min(rows.size(), shots));
        out.insert(out.end(), rows.begin(), rows.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void save_head(const LinearHead& head, const std::filesystem::path& stem, const std::string& metadata_json) {
    auto emb_path = stem;
    emb_path += ".emb";
    auto json_path = stem;
    json_path += ".json";
    write_matrix(EmbeddingMatrix::from_eigen(head.weights.transpose(), "head"), emb_path);
    nlohmann::json doc;
    doc["classes"] = head.class_names;
    doc["bias"] = std::vector<double>(head.bias.data(), head.bias.data() + head.bias.size());
    doc["init_mode"] = to_string(head.init_mode);
    doc["weights"] = emb_path.filename().string();
    doc["metadata"] = nlohmann::json::parse(metadata_json);
    write_file(json_path, doc.dump(2) + "\n");
}

LinearHead load_head(const std::filesystem::path& stem) {
    auto emb_path = stem;
    emb_path += ".emb";
    auto json_path = stem;
    json_path += ".json";
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("head sidecar {} is not valid JSON: {}", json_path.string(), e.what()));
    }
    LinearHead head;
    head.weights = read_matrix(emb_path, {.reject_zero_rows = false}).to_eigen().transpose();
    head.class_names = doc.at("classes").get<std::vector<std::string>>();
    const auto bias = doc.at("bias").get<std::vector<double>>();
    head.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    head.init_mode = init_mode_from_string(doc.at("init_mode").get<std::string>());
    if (head.class_names.size() != head.classes() || bias.size() != head.classes()) {
        throw FormatError(fmt::format("head {} has inconsistent class counts", stem.string()));
    }
    return head;
}

}  // namespace recbm
