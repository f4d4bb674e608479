#include "recbm/pipeline.hpp"

#include "recbm/chat.hpp"
#include "recbm/decomposer.hpp"
#include "recbm/embkit.hpp"
#include "recbm/explain.hpp"
#include "recbm/head.hpp"
#include "recbm/labeler.hpp"
#include "recbm/saedict.hpp"
#include "recbm/selector.hpp"
#include "recbm/util.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <iostream>
#include <unordered_map>

namespace recbm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

json knobs(const RunConfig& cfg) {
    json j;
    j["atoms"] = cfg.atoms ? json(*cfg.atoms) : json(nullptr);
    j["penalty"] = cfg.penalty;
    j["sae_epochs"] = cfg.sae_epochs;
    j["sae_batch"] = cfg.sae_batch;
    j["sae_lr"] = cfg.sae_lr;
    j["probe_images"] = cfg.probe_images;
    j["endpoint"] = cfg.endpoint;
    j["model"] = cfg.model;
    j["top_k"] = cfg.top_k;
    j["score_threshold"] = cfg.score_threshold;
    j["task"] = cfg.task;
    j["prompt_version"] = prompts::kVersion;
    j["m"] = cfg.m;
    j["n"] = cfg.n;
    j["epochs"] = cfg.epochs;
    j["batch"] = cfg.batch;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["explain_top"] = cfg.explain_top;
    j["seed"] = cfg.seed;
    return j;
}

json config_document(const RunConfig& cfg) {
    json j = knobs(cfg);
    j["train_manifest"] = cfg.train_manifest.string();
    j["test_manifest"] = cfg.test_manifest.string();
    j["bank"] = cfg.bank.string();
    j["bank_names"] = cfg.bank_names.string();
    j["class_prompts"] = cfg.class_prompts.string();
    j["mock_transcript"] = cfg.mock_transcript.string();
    j["description_cache"] = cfg.description_cache.string();
    j["out_dir"] = cfg.out_dir.string();
    j["threads"] = cfg.threads;
    return j;
}

void hash_manifest(json& inputs, const std::string& role, const fs::path& path) {
    inputs[role] = sha256_file(path);
    const auto manifest = read_manifest(path);
    inputs[role + ".embeddings"] = sha256_file(manifest.embeddings);
    inputs[role + ".labels"] = sha256_file(manifest.labels);
    if (manifest.images) inputs[role + ".images"] = sha256_file(*manifest.images);
}

// Runs one stage, tagging any failure with its name.
template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

Eigen::MatrixXd first_rows(const Eigen::MatrixXd& m, std::size_t count) {
    if (count == 0 || count >= static_cast<std::size_t>(m.rows())) return m;
    return m.topRows(count);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("run config is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    static const std::vector<std::string> known{
        "train_manifest", "test_manifest", "bank",   "bank_names", "class_prompts", "out_dir",  "atoms",
        "penalty",        "sae_epochs",    "sae_batch", "sae_lr",   "probe_images",  "endpoint", "mock_transcript",
        "model",          "top_k",         "score_threshold", "task", "description_cache", "m", "n",
        "epochs",         "batch",         "lr",     "weight_decay", "explain_top", "seed", "threads",
        "prompt_version"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError(fmt::format("unknown run config key '{}'", key));
    }

    RunConfig cfg;
    try {
        auto path = [&](const char* key, fs::path& out) {
            if (j.contains(key)) out = resolve(base_dir, j[key].get<std::string>());
        };
        path("train_manifest", cfg.train_manifest);
        path("test_manifest", cfg.test_manifest);
        path("bank", cfg.bank);
        path("bank_names", cfg.bank_names);
        path("class_prompts", cfg.class_prompts);
        path("out_dir", cfg.out_dir);
        path("mock_transcript", cfg.mock_transcript);
        path("description_cache", cfg.description_cache);
        if (j.contains("atoms") && !j["atoms"].is_null()) cfg.atoms = j["atoms"].get<std::size_t>();
        cfg.penalty = j.value("penalty", cfg.penalty);
        cfg.sae_epochs = j.value("sae_epochs", cfg.sae_epochs);
        cfg.sae_batch = j.value("sae_batch", cfg.sae_batch);
        cfg.sae_lr = j.value("sae_lr", cfg.sae_lr);
        cfg.probe_images = j.value("probe_images", cfg.probe_images);
        cfg.endpoint = j.value("endpoint", cfg.endpoint);
        cfg.model = j.value("model", cfg.model);
        cfg.top_k = j.value("top_k", cfg.top_k);
        cfg.score_threshold = j.value("score_threshold", cfg.score_threshold);
        cfg.task = j.value("task", cfg.task);
        cfg.m = j.value("m", cfg.m);
        cfg.n = j.value("n", cfg.n);
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.batch = j.value("batch", cfg.batch);
        cfg.lr = j.value("lr", cfg.lr);
        cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
        cfg.explain_top = j.value("explain_top", cfg.explain_top);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.threads = j.value("threads", cfg.threads);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("run config has a value of the wrong type: {}", e.what()));
    }
    if (j.contains("prompt_version") && j["prompt_version"] != prompts::kVersion) {
        throw ConfigError(fmt::format("run config asks for prompt version {}, this build ships {}",
                                      j["prompt_version"].dump(), prompts::kVersion));
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path), path.parent_path()); }

std::string run_config_json(const RunConfig& cfg) { return config_document(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
    json inputs = json::object();
    hash_manifest(inputs, "train", cfg.train_manifest);
    if (!cfg.test_manifest.empty()) hash_manifest(inputs, "test", cfg.test_manifest);
    inputs["bank"] = sha256_file(cfg.bank);
    inputs["bank_names"] = sha256_file(cfg.bank_names);
    if (!cfg.class_prompts.empty()) inputs["class_prompts"] = sha256_file(cfg.class_prompts);
    if (!cfg.mock_transcript.empty()) inputs["mock_transcript"] = sha256_file(cfg.mock_transcript);
    return sha256_hex(json{{"knobs", knobs(cfg)}, {"inputs", inputs}}.dump());
}

RunSummary run_pipeline(const RunConfig& cfg) {
    RunSummary summary;
    summary.out_dir = cfg.out_dir;
    std::vector<std::string> artifacts;
    auto out = [&](const std::string& name) {
        artifacts.push_back(name);
        return cfg.out_dir / name;
    };
    auto warn = [&](const std::string& w) {
        std::clog << "[recbm] " << w << '\n';
        summary.warnings.push_back(w);
    };

    struct Inputs {
        Dataset train;
        std::optional<Dataset> test;
        EmbeddingMatrix bank;
        std::vector<std::string> names;
        std::optional<EmbeddingMatrix> prompts;
    };
    Inputs in = stage("embkit", [&] {
        if (cfg.train_manifest.empty()) throw ConfigError("run config has no train_manifest");
        if (cfg.bank.empty() || cfg.bank_names.empty()) throw ConfigError("run config needs bank and bank_names");
        if (cfg.m == 0) throw ConfigError("bottleneck size m must be at least 1");
        if (cfg.n == 0) throw ConfigError("sparsity n must be at least 1");
        Inputs r{load_dataset(read_manifest(cfg.train_manifest)), std::nullopt,
                 normalize_rows(read_matrix(cfg.bank)), read_lines(cfg.bank_names), std::nullopt};
        if (!cfg.test_manifest.empty()) r.test = load_dataset(read_manifest(cfg.test_manifest));
        if (r.names.size() != r.bank.rows()) {
            throw ShapeError(fmt::format("{} has {} names for {} bank rows", cfg.bank_names.string(), r.names.size(),
                                         r.bank.rows()));
        }
        if (r.bank.dim() != r.train.embeddings.dim()) {
            throw ShapeError(fmt::format("bank dimension {} differs from image dimension {}", r.bank.dim(),
                                         r.train.embeddings.dim()));
        }
        if (r.test && r.test->embeddings.dim() != r.train.embeddings.dim())
            throw ShapeError("train and test embeddings differ in dimension");
        if (!cfg.class_prompts.empty()) {
            r.prompts = read_matrix(cfg.class_prompts);
            if (r.prompts->rows() != r.train.classes.size())
                throw ShapeError(fmt::format("{} class prompts for {} classes", r.prompts->rows(), r.train.classes.size()));
        }
        fs::create_directories(cfg.out_dir);
        return r;
    });
    const std::string hash = stage("embkit", [&] { return config_hash(cfg); });
    summary.config_hash = hash;

    const Eigen::MatrixXd train_x = in.train.embeddings.to_eigen();
    const Eigen::MatrixXd probe = first_rows(train_x, cfg.probe_images);

    const SparseDictionary dict = stage("extract", [&] {
        DictionaryOptions opts;
        opts.atoms = cfg.atoms;
        opts.penalty = cfg.penalty;
        opts.epochs = cfg.sae_epochs;
        opts.batch_size = cfg.sae_batch;
        opts.learning_rate = cfg.sae_lr;
        opts.seed = cfg.seed;
        auto d = train_dictionary(probe, opts);
        save_dictionary(d, out("dictionary"), hash);
        artifacts.pop_back();
        artifacts.insert(artifacts.end(), {"dictionary.json", "dictionary.atoms.emb", "dictionary.encoder.emb"});
        return d;
    });

    std::vector<CandidateConcept> kept = stage("label", [&] {
        std::vector<CandidateConcept> result;
        const bool have_endpoint = !cfg.endpoint.empty() || !cfg.mock_transcript.empty();
        if (have_endpoint && !in.train.images.empty()) {
            ChatEndpointConfig chat;
            chat.base_url = cfg.endpoint;
            chat.model = cfg.model;
            if (!cfg.mock_transcript.empty()) chat.mock_transcript = cfg.mock_transcript;
            chat.max_in_flight = std::max<std::size_t>(1, cfg.threads);
            auto client = make_chat_client(chat);
            std::optional<DescriptionCache> cache;
            if (!cfg.description_cache.empty()) cache.emplace(cfg.description_cache);
            const std::vector<fs::path> paths(in.train.images.begin(),
                                              in.train.images.begin() + static_cast<std::ptrdiff_t>(probe.rows()));
            LabelOptions opts;
            opts.top_k = cfg.top_k;
            opts.score_threshold = cfg.score_threshold;
            opts.task = cfg.task;
            auto labelled = label_atoms(*client, chat, dict, probe, paths, opts, cache ? &*cache : nullptr);
            for (const auto& w : labelled.warnings) warn(w);
            write_file(out("candidates_scored.json"), candidates_json(labelled.scored, hash));
            result = std::move(labelled.kept);
        } else {
            if (have_endpoint) warn("training manifest lists no images; using the external concept bank");
            std::unordered_map<std::string, bool> seen;
            for (const auto& name : in.names) {
                if (!seen.emplace(lower(name), true).second) continue;
                CandidateConcept c;
                c.name = name;
                result.push_back(std::move(c));
            }
        }
        write_file(out("candidates.json"), candidates_json(result, hash));
        return result;
    });

    struct Pool {
        Eigen::MatrixXd rows;
        std::vector<std::string> names;
    };
    const Pool pool = stage("label", [&] {
        std::unordered_map<std::string, std::size_t> by_name;
        for (std::size_t i = 0; i < in.names.size(); ++i) by_name.emplace(lower(in.names[i]), i);
        std::vector<std::size_t> rows;
        Pool p;
        for (const auto& c : kept) {
            auto it = by_name.find(lower(c.name));
            if (it == by_name.end()) {
                warn(fmt::format("concept '{}' has no text embedding in the bank; skipped", c.name));
                continue;
            }
            rows.push_back(it->second);
            p.names.push_back(in.names[it->second]);
        }
        if (rows.empty()) throw ConfigError("no kept concept has a text embedding in the bank");
        const Eigen::MatrixXd bank = in.bank.to_eigen();
        p.rows.resize(rows.size(), bank.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) p.rows.row(i) = bank.row(rows[i]);
        return p;
    });

    struct Selected {
        Eigen::MatrixXd bank;
        std::vector<std::string> names;
    };
    const Selected selected = stage("select", [&] {
        SelectionOptions opts;
        opts.target = cfg.m;
        opts.threads = cfg.threads;
        const auto report = select_concepts(probe, pool.rows, opts, pool.names);
        write_file(out("selection.json"), selection_report_json(report, hash));
        write_file(out("selection_trace.csv"), selection_trace_csv(report));
        Selected s;
        s.bank.resize(report.selected.size(), pool.rows.cols());
        for (std::size_t i = 0; i < report.selected.size(); ++i) s.bank.row(i) = pool.rows.row(report.selected[i]);
        s.names = report.names;
        write_matrix(EmbeddingMatrix::from_eigen(s.bank, "concepts"), out("concepts.emb"));
        write_lines(s.names, out("concepts.txt"));
        summary.metrics["selected_concepts"] = static_cast<double>(s.names.size());
        summary.metrics["selection_relative_residual"] =
            report.initial_energy > 0.0 ? report.residual_trace.back() / report.initial_energy : 0.0;
        return s;
    });

    const ConceptDictionary concepts(selected.bank);
    const Dataset& eval = in.test ? *in.test : in.train;
    OmpOptions omp;
    omp.sparsity = cfg.n;
    struct Decomposed {
        BatchDecomposition train;
        BatchDecomposition eval;
    };
    const Decomposed dec = stage("decompose", [&] {
        Decomposed d{decompose_batch(in.train.embeddings, concepts, omp, cfg.threads),
                     decompose_batch(eval.embeddings, concepts, omp, cfg.threads)};
        write_file(out("codes.txt"), format_codes(d.eval.codes, hash));
        return d;
    });

    const LinearHead head = stage("head", [&] {
        LinearHead h = in.prompts ? init_zeroshot(*in.prompts, in.train.classes) : init_zeros(in.train.embeddings.dim(), in.train.classes);
        json meta;
        meta["config_hash"] = hash;
        if (in.prompts) {
            summary.metrics["zeroshot_accuracy"] = accuracy(h, eval.embeddings, eval.labels);
            summary.metrics["zeroshot_accuracy_reconstructed"] = accuracy(h, dec.eval.reconstructed, eval.labels);
        }
        if (cfg.epochs > 0) {
            TrainOptions opts;
            opts.epochs = cfg.epochs;
            opts.batch_size = cfg.batch;
            opts.learning_rate = cfg.lr;
            opts.weight_decay = cfg.weight_decay;
            opts.seed = cfg.seed;
            auto trained = train(h, dec.train.reconstructed, in.train.labels, opts);
            h = std::move(trained.head);
            meta["loss_trace"] = trained.loss_trace;
        }
        summary.metrics["train_accuracy"] = accuracy(h, dec.train.reconstructed, in.train.labels);
        summary.metrics["eval_accuracy"] = accuracy(h, dec.eval.reconstructed, eval.labels);
        save_head(h, out("head"), meta.dump());
        artifacts.pop_back();
        artifacts.insert(artifacts.end(), {"head.json", "head.emb"});
        return h;
    });

    stage("explain", [&] {
        std::vector<Explanation> list;
        for (std::size_t i = 0; i < dec.eval.codes.size(); ++i)
            list.push_back(explain(head, selected.bank, dec.eval.codes[i], cfg.explain_top, selected.names, i));
        write_file(out("explanations.json"), explanations_json(list, head.class_names, hash));
        return 0;
    });

    std::sort(artifacts.begin(), artifacts.end());
    json checksums = json::object();
    for (const auto& a : artifacts) checksums[a] = sha256_file(cfg.out_dir / a);
    json run;
    run["config"] = config_document(cfg);
    run["config_hash"] = hash;
    run["metrics"] = summary.metrics;
    run["artifacts"] = checksums;
    run["warnings"] = summary.warnings;
    run["config"].erase("out_dir");
    run["config"].erase("threads");
    write_file(cfg.out_dir / "run.json", run.dump(2) + "\n");
    artifacts.push_back("run.json");
    std::sort(artifacts.begin(), artifacts.end());
    summary.artifacts = artifacts;
    return summary;
}

}  // namespace recbm
