#include "recbm/synthetic.hpp"

#include "recbm/chat.hpp"
#include "recbm/embkit.hpp"
#include "recbm/error.hpp"
#include "recbm/pipeline.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <numeric>

namespace recbm::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 10> kAdjectives{"red",    "striped", "spotted", "long",   "curved",
                                                  "glossy", "pale",    "forked",  "hooked", "webbed"};
constexpr std::array<const char*, 12> kNouns{"beak", "wing", "tail",  "crest", "throat", "breast",
                                             "leg",  "eye",  "crown", "nape",  "belly",  "feather"};
constexpr std::array<const char*, 6> kBackgrounds{"grassy", "sandy", "leafy", "blue sky", "water", "blurry"};

Eigen::VectorXd gaussian(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (std::size_t i = 0; i < dim; ++i) v(i) = normal(rng);
    return v;
}

std::vector<std::size_t> pick_distinct(std::vector<std::size_t> from, std::size_t count, std::mt19937_64& rng) {
    if (count > from.size()) throw ConfigError(fmt::format("cannot draw {} of {} concepts", count, from.size()));
    std::shuffle(from.begin(), from.end(), rng);
    from.resize(count);
    return from;
}

void make_split(const ConceptData& data, const ConceptDataSpec& spec, std::size_t count, std::mt19937_64& rng,
                Eigen::MatrixXd& out, std::vector<int>& labels) {
    std::vector<std::vector<std::size_t>> own(spec.classes), other(spec.classes);
    for (std::size_t j = 0; j < spec.concepts; ++j)
        for (std::size_t y = 0; y < spec.classes; ++y) (j % spec.classes == y ? own[y] : other[y]).push_back(j);

    std::uniform_int_distribution<std::size_t> pick_class(0, spec.classes - 1);
    std::uniform_real_distribution<double> coef(spec.coef_lo, spec.coef_hi);
    out.resize(count, spec.dim);
    labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t y = pick_class(rng);
        auto chosen = pick_distinct(own[y], spec.own_concepts, rng);
        for (std::size_t j : pick_distinct(other[y], spec.sparsity - spec.own_concepts, rng)) chosen.push_back(j);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(spec.dim);
        for (std::size_t j : chosen) x += coef(rng) * data.concepts.row(j).transpose();
        if (spec.noise > 0.0) x += spec.noise * x.norm() * gaussian(spec.dim, rng).normalized();
        out.row(i) = x.normalized();
        labels[i] = static_cast<int>(y);
    }
}

// Index of the concept carrying the most weight in a (noisy) image.
std::size_t dominant_concept(const Eigen::MatrixXd& concepts, const Eigen::VectorXd& image) {
    Eigen::Index best = 0;
    (concepts * image).maxCoeff(&best);
    return best;
}

std::string ppm_image(std::size_t index) {
    // 2x2 RGB image; the comment keeps every file's bytes distinct.
    std::string out = fmt::format("P6\n# synthetic image {}\n2 2\n255\n", index);
    for (int p = 0; p < 4; ++p) {
        out.push_back(static_cast<char>((index * 37 + p * 11) % 256));
        out.push_back(static_cast<char>((index * 91 + p * 7) % 256));
        out.push_back(static_cast<char>((index * 13 + p * 53) % 256));
    }
    return out;
}

nlohmann::json content(const std::string& text) { return {{"content", text}}; }

}  // namespace

Eigen::MatrixXd random_unit_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng, double max_coherence) {
    if (dim == 0) throw ConfigError("dimension must be positive");
    Eigen::MatrixXd out(rows, dim);
    constexpr std::size_t kMaxAttempts = 100000;
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t attempts = 0;
        while (true) {
            const Eigen::VectorXd v = gaussian(dim, rng).normalized();
            const bool ok = max_coherence >= 1.0 || r == 0 ||
                            (out.topRows(r) * v).cwiseAbs().maxCoeff() < max_coherence;
            if (ok) {
                out.row(r) = v;
                break;
            }
            if (++attempts == kMaxAttempts) {
                throw ConfigError(fmt::format("could not place {} unit vectors in dimension {} below coherence {}",
                                              rows, dim, max_coherence));
            }
        }
    }
    return out;
}

double mutual_coherence(const Eigen::MatrixXd& unit_rows) {
    if (unit_rows.rows() < 2) return 0.0;
    Eigen::MatrixXd gram = (unit_rows * unit_rows.transpose()).cwiseAbs();
    gram.diagonal().setZero();
    return gram.maxCoeff();
}

SparseMixture sparse_mixture(const Eigen::MatrixXd& bank, std::size_t sparsity, double lo, double hi,
                             std::mt19937_64& rng) {
    std::vector<std::size_t> all(bank.rows());
    std::iota(all.begin(), all.end(), 0);
    SparseMixture mix;
    mix.support = pick_distinct(std::move(all), sparsity, rng);
    std::sort(mix.support.begin(), mix.support.end());
    std::uniform_real_distribution<double> coef(lo, hi);
    mix.vector = Eigen::VectorXd::Zero(bank.cols());
    for (std::size_t j : mix.support) {
        mix.coefficients.push_back(coef(rng));
        mix.vector += mix.coefficients.back() * bank.row(j).transpose();
    }
    return mix;
}

std::vector<std::string> concept_names(std::size_t count, std::size_t offset) {
    std::vector<std::string> names;
    const std::size_t grid = kAdjectives.size() * kNouns.size();
    for (std::size_t i = offset; i < offset + count; ++i) {
        std::string name = fmt::format("{} {}", kAdjectives[i % kAdjectives.size()],
                                       kNouns[(i / kAdjectives.size()) % kNouns.size()]);
        if (i >= grid) name += fmt::format(" {}", i / grid + 1);
        names.push_back(std::move(name));
    }
    return names;
}

Eigen::MatrixXd ConceptData::bank() const {
    Eigen::MatrixXd out(concepts.rows() + distractors.rows(), concepts.cols());
    out << concepts, distractors;
    return out;
}

std::vector<std::string> ConceptData::bank_names() const {
    auto out = concept_names;
    out.insert(out.end(), distractor_names.begin(), distractor_names.end());
    return out;
}

ConceptData make_concept_data(const ConceptDataSpec& spec) {
    if (spec.classes == 0 || spec.concepts == 0 || spec.dim == 0) throw ConfigError("empty synthetic spec");
    if (spec.own_concepts > spec.sparsity) throw ConfigError("own_concepts exceeds sparsity");
    if (spec.concepts / spec.classes < spec.own_concepts)
        throw ConfigError("too few concepts per class for own_concepts");

    std::mt19937_64 rng(spec.seed);
    ConceptData data;
    const Eigen::MatrixXd all = random_unit_rows(spec.concepts + spec.distractors, spec.dim, rng);
    data.concepts = all.topRows(spec.concepts);
    data.distractors = all.bottomRows(spec.distractors);
    data.concept_names = concept_names(spec.concepts);
    data.distractor_names = concept_names(spec.distractors, spec.concepts);

    data.class_prompts = Eigen::MatrixXd::Zero(spec.classes, spec.dim);
    for (std::size_t j = 0; j < spec.concepts; ++j) data.class_prompts.row(j % spec.classes) += data.concepts.row(j);
    data.class_prompts.rowwise().normalize();
    for (std::size_t y = 0; y < spec.classes; ++y) data.class_names.push_back(fmt::format("class {}", y));

    make_split(data, spec, spec.train, rng, data.train, data.train_labels);
    make_split(data, spec, spec.test, rng, data.test, data.test_labels);
    return data;
}

void write_fixture(const fs::path& dir, const ConceptDataSpec& spec) {
    const ConceptData data = make_concept_data(spec);
    fs::create_directories(dir / "images");

    write_matrix(EmbeddingMatrix::from_eigen(data.train, "train"), dir / "train.emb");
    write_matrix(EmbeddingMatrix::from_eigen(data.test, "test"), dir / "test.emb");
    write_matrix(EmbeddingMatrix::from_eigen(data.bank(), "concepts"), dir / "bank.emb");
    write_matrix(EmbeddingMatrix::from_eigen(data.class_prompts, "prompts"), dir / "class_prompts.emb");
    write_labels(data.train_labels, dir / "train_labels.txt");
    write_labels(data.test_labels, dir / "test_labels.txt");
    write_lines(data.bank_names(), dir / "names.txt");
    write_lines(data.class_names, dir / "classes.txt");

    std::vector<std::string> image_list;
    for (Eigen::Index i = 0; i < data.train.rows(); ++i) {
        const std::string rel = fmt::format("images/img_{:05}.ppm", i);
        write_file(dir / rel, ppm_image(i));
        image_list.push_back(rel);
    }
    write_lines(image_list, dir / "images.txt");

    write_manifest({"train.emb", "train_labels.txt", data.class_names, "train", fs::path("images.txt")},
                   dir / "train_manifest.json");
    write_manifest({"test.emb", "test_labels.txt", data.class_names, "test", std::nullopt}, dir / "test_manifest.json");

    // Mock endpoint: each image is described by its dominant concept; a
    // summary names that concept plus a background shortcut; scoring rates
    // real concepts high and backgrounds low.
    auto rules = nlohmann::json::array();
    for (Eigen::Index i = 0; i < data.train.rows(); ++i) {
        const auto& name = data.concept_names[dominant_concept(data.concepts, data.train.row(i).transpose())];
        rules.push_back({{"stage", "describe"},
                         {"image_sha256", image_hash(dir / image_list[i])},
                         {"response", content(fmt::format("A close-up photo dominated by {}.", name))}});
    }
    std::vector<std::string> backgrounds;
    for (const char* b : kBackgrounds) backgrounds.push_back(fmt::format("{} background", b));
    for (std::size_t j = 0; j < data.concept_names.size(); ++j) {
        const auto& name = data.concept_names[j];
        const auto& bg = backgrounds[j % backgrounds.size()];
        rules.push_back({{"stage", "summarize"},
                         {"contains", fmt::format("dominated by {}.", name)},
                         {"response", content(fmt::format("1. {}: a distinctive {}\n2. {}: scene context\n", name,
                                                          name, bg))}});
    }
    rules.push_back({{"stage", "summarize"}, {"response", content("1. blurry background: scene context\n")}});
    std::string scores;
    for (const auto& name : data.bank_names()) scores += fmt::format("- {}: 8\n", name);
    for (const auto& bg : backgrounds) scores += fmt::format("- {}: 2\n", bg);
    rules.push_back({{"stage", "score"}, {"response", content(scores)}});
    write_file(dir / "mock_transcript.json", nlohmann::json{{"rules", rules}}.dump(1) + "\n");

    RunConfig cfg;
    cfg.train_manifest = "train_manifest.json";
    cfg.test_manifest = "test_manifest.json";
    cfg.bank = "bank.emb";
    cfg.bank_names = "names.txt";
    cfg.class_prompts = "class_prompts.emb";
    cfg.mock_transcript = "mock_transcript.json";
    cfg.out_dir = "run";
    cfg.atoms = 64;
    cfg.sae_epochs = 20;
    cfg.probe_images = 500;
    cfg.m = spec.concepts;
    cfg.n = spec.sparsity * 2;
    cfg.seed = spec.seed;
    write_file(dir / "run_config.json", run_config_json(cfg));
}

}  // namespace recbm::synthetic
