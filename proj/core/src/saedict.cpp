#include "recbm/saedict.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <random>

namespace recbm {

namespace {

Eigen::MatrixXd activations(const SparseDictionary& dict, const Eigen::MatrixXd& images) {
    return ((images * dict.encoder_weights.transpose()).rowwise() + dict.encoder_bias.transpose()).cwiseMax(0.0);
}

// Rescales atom columns to unit norm and folds the scale into the encoder so
// that the reconstruction V u is unchanged (relu is positively homogeneous).
void renormalize_atoms(SparseDictionary& dict) {
    for (Eigen::Index j = 0; j < dict.atoms.cols(); ++j) {
        const double s = dict.atoms.col(j).norm();
        if (s == 0.0) continue;
        dict.atoms.col(j) /= s;
        dict.encoder_weights.row(j) *= s;
        dict.encoder_bias(j) *= s;
    }
}

}  // namespace

std::size_t default_atom_count(std::size_t dim) { return 8 * dim / std::max<std::size_t>(1, dim / 64); }

double dictionary_objective(const SparseDictionary& dict, const Eigen::MatrixXd& images) {
    const Eigen::MatrixXd u = activations(dict, images);
    const double recon = (u * dict.atoms.transpose() - images).squaredNorm();
    return (recon + dict.penalty * u.sum()) / static_cast<double>(images.rows());
}

double reconstruction_error(const SparseDictionary& dict, const Eigen::MatrixXd& images) {
    const Eigen::MatrixXd u = activations(dict, images);
    return (u * dict.atoms.transpose() - images).squaredNorm() / static_cast<double>(images.rows());
}

SparseDictionary train_dictionary(const EmbeddingMatrix& images, const DictionaryOptions& opts) {
    if (images.empty()) throw ConfigError("cannot train a dictionary on an empty matrix");
    return train_dictionary(images.to_eigen(), opts);
}

SparseDictionary train_dictionary(const Eigen::MatrixXd& images, const DictionaryOptions& opts) {
    if (images.rows() == 0 || images.cols() == 0) throw ConfigError("cannot train a dictionary on an empty matrix");
    if (opts.penalty < 0.0) throw ConfigError(fmt::format("penalty must be non-negative, got {}", opts.penalty));
    if (opts.batch_size == 0) throw ConfigError("batch size must be at least 1");
    const std::size_t d = images.cols();
    const std::size_t k = opts.atoms.value_or(default_atom_count(d));
    if (k == 0) throw ConfigError("dictionary needs at least one atom");

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SparseDictionary dict;
    dict.penalty = opts.penalty;
    dict.seed = opts.seed;
    dict.epochs = opts.epochs;
    dict.atoms.resize(d, k);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < d; ++i) dict.atoms(i, j) = gauss(rng);
    dict.atoms.colwise().normalize();
    dict.encoder_weights = dict.atoms.transpose();
    dict.encoder_bias = Eigen::VectorXd::Zero(k);

    dict.initial_loss = dictionary_objective(dict, images);

    std::vector<std::size_t> order(images.rows());
    std::iota(order.begin(), order.end(), 0);
    const auto decay_epoch = static_cast<std::size_t>(0.8 * static_cast<double>(opts.epochs));

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        const double lr = epoch < decay_epoch ? opts.learning_rate : 0.1 * opts.learning_rate;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opts.batch_size);
            const auto b = static_cast<Eigen::Index>(stop - start);
            Eigen::MatrixXd batch(b, d);
            for (std::size_t i = start; i < stop; ++i) batch.row(i - start) = images.row(order[i]);

            const Eigen::MatrixXd pre =
                (batch * dict.encoder_weights.transpose()).rowwise() + dict.encoder_bias.transpose();
            const Eigen::MatrixXd u = pre.cwiseMax(0.0);
            const Eigen::MatrixXd resid = u * dict.atoms.transpose() - batch;  // b x d

            const double scale = 2.0 / static_cast<double>(b);
            const Eigen::MatrixXd grad_atoms = scale * resid.transpose() * u;
            Eigen::MatrixXd grad_pre = scale * resid * dict.atoms;
            grad_pre.array() += dict.penalty / static_cast<double>(b);
            grad_pre = (pre.array() > 0.0).select(grad_pre, 0.0);

            dict.atoms -= lr * grad_atoms;
            dict.encoder_weights -= lr * grad_pre.transpose() * batch;
            dict.encoder_bias -= lr * grad_pre.colwise().sum().transpose();
        }
        renormalize_atoms(dict);
        dict.loss_trace.push_back(dictionary_objective(dict, images));
    }
    return dict;
}

ActivationVector encode(const SparseDictionary& dict, const Eigen::VectorXd& image) {
    if (static_cast<std::size_t>(image.size()) != dict.dim()) {
        throw ShapeError(fmt::format("image dim {} does not match dictionary dim {}", image.size(), dict.dim()));
    }
    ActivationVector out;
    out.values = (dict.encoder_weights * image + dict.encoder_bias).cwiseMax(0.0);
    const auto small = (out.values.array() < 1e-4).count();
    out.sparsity = out.values.size() == 0 ? 0.0 : static_cast<double>(small) / static_cast<double>(out.values.size());
    return out;
}

Eigen::VectorXd decode(const SparseDictionary& dict, const Eigen::VectorXd& activations) {
    if (static_cast<std::size_t>(activations.size()) != dict.size()) {
        throw ShapeError(fmt::format("{} activations for {} atoms", activations.size(), dict.size()));
    }
    return dict.atoms * activations;
}

Eigen::MatrixXd encode_all(const SparseDictionary& dict, const Eigen::MatrixXd& images) {
    if (static_cast<std::size_t>(images.cols()) != dict.dim()) {
        throw ShapeError(fmt::format("image dim {} does not match dictionary dim {}", images.cols(), dict.dim()));
    }
    return activations(dict, images);
}

std::vector<std::size_t> top_indices(const Eigen::VectorXd& scores, std::size_t count) {
    if (count > static_cast<std::size_t>(scores.size())) {
        throw ConfigError(fmt::format("requested top {} of only {} entries", count, scores.size()));
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores(a) > scores(b) || (scores(a) == scores(b) && a < b); });
    idx.resize(count);
    return idx;
}

std::vector<std::size_t> top_activating_images(const SparseDictionary& dict, const Eigen::MatrixXd& images,
                                               std::size_t atom, std::size_t count) {
    if (atom >= dict.size()) throw IndexError(fmt::format("atom {} out of range (k = {})", atom, dict.size()));
    const Eigen::MatrixXd u = encode_all(dict, images);
    return top_indices(u.col(atom), count);
}

void save_dictionary(const SparseDictionary& dict, const std::filesystem::path& stem, const std::string& config_hash) {
    auto with = [&](const char* suffix) {
        auto p = stem;
        p += suffix;
        return p;
    };
    write_matrix(EmbeddingMatrix::from_eigen(dict.atoms.transpose(), "atoms"), with(".atoms.emb"));
    write_matrix(EmbeddingMatrix::from_eigen(dict.encoder_weights, "encoder"), with(".encoder.emb"));
    nlohmann::json doc;
    doc["k"] = dict.size();
    doc["d"] = dict.dim();
    doc["lambda"] = dict.penalty;
    doc["seed"] = dict.seed;
    doc["epochs"] = dict.epochs;
    doc["initial_loss"] = dict.initial_loss;
    doc["loss_trace"] = dict.loss_trace;
    doc["encoder_bias"] = std::vector<double>(dict.encoder_bias.data(), dict.encoder_bias.data() + dict.encoder_bias.size());
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    write_file(with(".json"), doc.dump(2) + "\n");
}

SparseDictionary load_dictionary(const std::filesystem::path& stem) {
    auto with = [&](const char* suffix) {
        auto p = stem;
        p += suffix;
        return p;
    };
    SparseDictionary dict;
    const ReadOptions params{.reject_zero_rows = false};
    dict.atoms = read_matrix(with(".atoms.emb"), params).to_eigen().transpose();
    dict.encoder_weights = read_matrix(with(".encoder.emb"), params).to_eigen();
    const auto doc = nlohmann::json::parse(read_file(with(".json")));
    const auto bias = doc.at("encoder_bias").get<std::vector<double>>();
    dict.encoder_bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    dict.penalty = doc.at("lambda").get<double>();
    dict.seed = doc.at("seed").get<std::uint64_t>();
    dict.epochs = doc.at("epochs").get<std::size_t>();
    dict.initial_loss = doc.value("initial_loss", 0.0);
    dict.loss_trace = doc.at("loss_trace").get<std::vector<double>>();
    if (dict.encoder_weights.rows() != dict.atoms.cols() || dict.encoder_weights.cols() != dict.atoms.rows() ||
        static_cast<std::size_t>(bias.size()) != dict.size()) {
        throw FormatError(fmt::format("dictionary {} has inconsistent shapes", stem.string()));
    }
    return dict;
}

}  // namespace recbm
