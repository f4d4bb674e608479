#include <recbm/ablation.hpp>
#include <recbm/chat.hpp>
#include <recbm/decomposer.hpp>
#include <recbm/embkit.hpp>
#include <recbm/error.hpp>
#include <recbm/explain.hpp>
#include <recbm/head.hpp>
#include <recbm/labeler.hpp>
#include <recbm/pipeline.hpp>
#include <recbm/saedict.hpp>
#include <recbm/selector.hpp>
#include <recbm/synthetic.hpp>
#include <recbm/util.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace recbm;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out_dir;
    std::string config;
};

// Relative outputs land under --out-dir when it is given.
fs::path output(const Globals& g, const std::string& p) {
    fs::path path = (g.out_dir.empty() || fs::path(p).is_absolute()) ? fs::path(p) : fs::path(g.out_dir) / p;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    return path;
}

Dataset dataset_from(const std::string& manifest) { return load_dataset(read_manifest(manifest)); }

LabelledSplit split_of(const Dataset& d) { return {d.embeddings.to_eigen(), d.labels}; }

std::vector<std::size_t> parse_grid(const std::string& text) {
    std::vector<std::size_t> grid;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(start, comma - start);
        if (!item.empty()) {
            try {
                grid.push_back(std::stoul(item));
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("bad grid entry '{}'", item));
            }
        }
        start = comma + 1;
    }
    return grid;
}

TrainOptions train_options(std::size_t epochs, std::size_t batch, double lr, double wd, std::uint64_t seed) {
    TrainOptions t;
    t.epochs = epochs;
    t.batch_size = batch;
    t.learning_rate = lr;
    t.weight_decay = wd;
    t.seed = seed;
    return t;
}

int export_check(const std::vector<std::string>& files, bool allow_zero_rows) {
    int failures = 0;
    for (const auto& f : files) {
        try {
            if (fs::path(f).extension() == ".json") {
                const auto ds = dataset_from(f);
                fmt::print("OK {}: manifest, {} rows x {} dims, {} classes{}\n", f, ds.embeddings.rows(),
                           ds.embeddings.dim(), ds.classes.size(),
                           ds.images.empty() ? "" : fmt::format(", {} images", ds.images.size()));
            } else {
                ReadOptions opts;
                opts.reject_zero_rows = !allow_zero_rows;
                const auto m = read_matrix(f, opts);
                fmt::print("OK {}: {} rows x {} dims\n", f, m.rows(), m.dim());
            }
        } catch (const Error& e) {
            fmt::print("FAIL {}: {}\n", f, e.what());
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recbm: retrofit concept bottlenecks onto frozen image embeddings"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Directory for relative output paths");
    app.add_option("--config", g.config, "Run configuration (JSON)");

    std::function<int()> action;

    // export-check
    auto* check = app.add_subcommand("export-check", "Validate .emb files and dataset manifests");
    std::vector<std::string> check_files;
    bool allow_zero = false;
    check->add_option("files", check_files, "Files to validate")->required()->check(CLI::ExistingFile);
    check->add_flag("--allow-zero-rows", allow_zero, "Accept all-zero rows in .emb files");
    check->callback([&] { action = [&] { return export_check(check_files, allow_zero); }; });

    // extract-atoms
    auto* extract = app.add_subcommand("extract-atoms", "Train a sparse autoencoder dictionary on probing images");
    std::string ex_images, ex_out = "dictionary";
    std::optional<std::size_t> ex_atoms;
    DictionaryOptions ex_opts;
    std::size_t ex_probe = 0;
    extract->add_option("--images", ex_images, "Probing image embeddings (.emb)")->required();
    extract->add_option("-k,--atoms", ex_atoms, "Dictionary size (default 8d / max(1, d/64))");
    extract->add_option("--lambda", ex_opts.penalty, "L1 penalty")->capture_default_str();
    extract->add_option("--epochs", ex_opts.epochs, "Training epochs")->capture_default_str();
    extract->add_option("--batch", ex_opts.batch_size, "Minibatch size")->capture_default_str();
    extract->add_option("--lr", ex_opts.learning_rate, "SGD learning rate")->capture_default_str();
    extract->add_option("--probe", ex_probe, "Use only the first N rows (0 = all)")->capture_default_str();
    extract->add_option("--out", ex_out, "Output stem")->capture_default_str();
    extract->callback([&] {
        action = [&] {
            Eigen::MatrixXd x = normalize_rows(read_matrix(ex_images)).to_eigen();
            if (ex_probe > 0 && ex_probe < static_cast<std::size_t>(x.rows())) x = x.topRows(ex_probe).eval();
            ex_opts.atoms = ex_atoms;
            ex_opts.seed = g.seed;
            const auto dict = train_dictionary(x, ex_opts);
            save_dictionary(dict, output(g, ex_out));
            fmt::print("{} atoms over {} images; objective {} -> {}\n", dict.size(), x.rows(),
                       format_double(dict.initial_loss),
                       format_double(dict.loss_trace.empty() ? dict.initial_loss : dict.loss_trace.back()));
            return 0;
        };
    });

    // label-concepts
    auto* label = app.add_subcommand("label-concepts", "Name dictionary atoms through a chat endpoint");
    std::string lb_dict, lb_manifest, lb_endpoint, lb_mock, lb_cache, lb_out = "candidates.json", lb_scored;
    std::string lb_model = "default";
    LabelOptions lb_opts;
    std::size_t lb_probe = 0;
    label->add_option("--dictionary", lb_dict, "Dictionary stem from extract-atoms")->required();
    label->add_option("--manifest", lb_manifest, "Dataset manifest with an image list")->required();
    label->add_option("--endpoint", lb_endpoint, "Chat endpoint URL (live mode)");
    label->add_option("--mock-transcript", lb_mock, "Replay transcript (mock mode)");
    label->add_option("--model", lb_model, "Model identifier sent to the endpoint")->capture_default_str();
    label->add_option("--top-k", lb_opts.top_k, "Top activating images per atom")->capture_default_str();
    label->add_option("--score-threshold", lb_opts.score_threshold, "Keep candidates scoring at least this")
        ->capture_default_str();
    label->add_option("--task", lb_opts.task, "Task description used in prompts")->capture_default_str();
    label->add_option("--cache", lb_cache, "Description cache file");
    label->add_option("--probe", lb_probe, "Use only the first N images (0 = all)")->capture_default_str();
    label->add_option("--out", lb_out, "Kept candidates (JSON)")->capture_default_str();
    label->add_option("--scored-out", lb_scored, "Every scored candidate (JSON)");
    label->callback([&] {
        action = [&] {
            ChatEndpointConfig chat;
            chat.base_url = lb_endpoint;
            chat.model = lb_model;
            if (!lb_mock.empty()) chat.mock_transcript = lb_mock;
            chat.max_in_flight = g.threads;
            auto client = make_chat_client(chat);
            const auto dict = load_dictionary(lb_dict);
            const auto ds = dataset_from(lb_manifest);
            if (ds.images.empty()) throw ConfigError(fmt::format("{} lists no images", lb_manifest));
            std::size_t n = ds.embeddings.rows();
            if (lb_probe > 0) n = std::min(n, lb_probe);
            const Eigen::MatrixXd probe = ds.embeddings.to_eigen().topRows(n);
            const std::vector<fs::path> paths(ds.images.begin(), ds.images.begin() + static_cast<std::ptrdiff_t>(n));
            std::optional<DescriptionCache> cache;
            if (!lb_cache.empty()) cache.emplace(lb_cache);
            const auto result = label_atoms(*client, chat, dict, probe, paths, lb_opts, cache ? &*cache : nullptr);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
            write_file(output(g, lb_out), candidates_json(result.kept));
            if (!lb_scored.empty()) write_file(output(g, lb_scored), candidates_json(result.scored));
            fmt::print("{} candidates proposed, {} kept at threshold {} ({} requests)\n", result.scored.size(),
                       result.kept.size(), lb_opts.score_threshold, client->request_count());
            return 0;
        };
    });

    // select
    auto* select = app.add_subcommand("select", "Greedy reconstruction-guided concept selection");
    std::string sel_images, sel_pool, sel_names, sel_report = "selection.json", sel_trace, sel_concepts;
    SelectionOptions sel_opts;
    select->add_option("--images", sel_images, "Probing image embeddings (.emb)")->required();
    select->add_option("--pool", sel_pool, "Candidate concept embeddings (.emb)")->required();
    select->add_option("--names", sel_names, "Candidate names, one per line");
    select->add_option("-m", sel_opts.target, "Concepts to select")->capture_default_str();
    select->add_option("--tol", sel_opts.dependence_tol, "Relative dependence tolerance")->capture_default_str();
    select->add_option("--report", sel_report, "Selection report (JSON)")->capture_default_str();
    select->add_option("--trace", sel_trace, "Residual trace (CSV)");
    select->add_option("--out-concepts", sel_concepts, "Write the selected bank as <stem>.emb and <stem>.txt");
    select->callback([&] {
        action = [&] {
            const auto images = normalize_rows(read_matrix(sel_images));
            const auto pool = read_matrix(sel_pool);
            std::vector<std::string> names;
            if (!sel_names.empty()) names = read_lines(sel_names);
            sel_opts.threads = g.threads;
            const auto report = select_concepts(images, pool, sel_opts, names);
            write_file(output(g, sel_report), selection_report_json(report));
            if (!sel_trace.empty()) write_file(output(g, sel_trace), selection_trace_csv(report));
            if (!sel_concepts.empty()) {
                const Eigen::MatrixXd p = normalize_rows(pool).to_eigen();
                Eigen::MatrixXd chosen(report.selected.size(), p.cols());
                for (std::size_t i = 0; i < report.selected.size(); ++i) chosen.row(i) = p.row(report.selected[i]);
                write_matrix(EmbeddingMatrix::from_eigen(chosen), output(g, sel_concepts + ".emb"));
                if (!report.names.empty()) write_lines(report.names, output(g, sel_concepts + ".txt"));
            }
            fmt::print("selected {} of {} concepts ({}); relative residual {}; {} pruned as dependent\n",
                       report.selected.size(), pool.rows(), to_string(report.stop),
                       format_double(report.residual_trace.empty() || report.initial_energy == 0.0
                                         ? 1.0
                                         : report.residual_trace.back() / report.initial_energy),
                       report.pruned.size());
            return 0;
        };
    });

    // decompose
    auto* decompose = app.add_subcommand("decompose", "Sparse-code image embeddings over a concept bank");
    std::string dc_images, dc_bank, dc_out = "codes.txt", dc_recon;
    OmpOptions dc_opts;
    decompose->add_option("--images", dc_images, "Image embeddings (.emb)")->required();
    decompose->add_option("--bank", dc_bank, "Concept bank (.emb)")->required();
    decompose->add_option("-n,--sparsity", dc_opts.sparsity, "Concepts per image")->capture_default_str();
    decompose->add_option("--stop-tol", dc_opts.stop_tol, "Relative residual stop")->capture_default_str();
    decompose->add_option("--out", dc_out, "Codes file")->capture_default_str();
    decompose->add_option("--reconstructed", dc_recon, "Reconstructed embeddings (.emb)");
    decompose->callback([&] {
        action = [&] {
            const ConceptDictionary bank(read_matrix(dc_bank));
            const auto images = normalize_rows(read_matrix(dc_images));
            const auto batch = decompose_batch(images, bank, dc_opts, g.threads);
            write_file(output(g, dc_out), format_codes(batch.codes));
            if (!dc_recon.empty()) write_matrix(batch.reconstructed, output(g, dc_recon));
            double mean = 0.0;
            for (const auto& c : batch.codes) mean += c.residual_norm;
            fmt::print("{} images decomposed; mean residual norm {}\n", batch.codes.size(),
                       format_double(batch.codes.empty() ? 0.0 : mean / batch.codes.size()));
            return 0;
        };
    });

    // train-head
    auto* train_head = app.add_subcommand("train-head", "Train the linear head on (reconstructed) embeddings");
    std::string th_emb, th_labels, th_classes, th_prompts, th_init = "auto", th_out = "head";
    std::size_t th_epochs = 50, th_batch = 64, th_shots = 0;
    double th_lr = 5e-5, th_wd = 0.0;
    train_head->add_option("--embeddings", th_emb, "Training embeddings (.emb)")->required();
    train_head->add_option("--labels", th_labels, "Label file")->required();
    train_head->add_option("--classes", th_classes, "Class names, one per line")->required();
    train_head->add_option("--prompts", th_prompts, "Class-prompt embeddings for zero-shot init");
    train_head->add_option("--init", th_init, "zeroshot-prompt | zeros | auto")->capture_default_str();
    train_head->add_option("--epochs", th_epochs)->capture_default_str();
    train_head->add_option("--batch", th_batch)->capture_default_str();
    train_head->add_option("--lr", th_lr)->capture_default_str();
    train_head->add_option("--weight-decay", th_wd, "Optional L2 penalty")->capture_default_str();
    train_head->add_option("--shots", th_shots, "Few-shot: examples per class (0 = all)")->capture_default_str();
    train_head->add_option("--out", th_out, "Output stem")->capture_default_str();
    train_head->callback([&] {
        action = [&] {
            const auto x = normalize_rows(read_matrix(th_emb));
            auto labels = read_labels(th_labels);
            const auto classes = read_lines(th_classes);
            if (labels.size() != x.rows())
                throw ShapeError(fmt::format("{} labels for {} embeddings", labels.size(), x.rows()));
            const bool zeroshot = th_init == "auto" ? !th_prompts.empty()
                                                    : init_mode_from_string(th_init) == InitMode::ZeroshotPrompt;
            if (zeroshot && th_prompts.empty()) throw ConfigError("zero-shot init needs --prompts");
            LinearHead head = zeroshot ? init_zeroshot(read_matrix(th_prompts), classes) : init_zeros(x.dim(), classes);
            Eigen::MatrixXd train_x = x.to_eigen();
            if (th_shots > 0) {
                const auto rows = few_shot_subset(labels, th_shots, g.seed);
                Eigen::MatrixXd sub(rows.size(), train_x.cols());
                std::vector<int> sub_labels;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    sub.row(i) = train_x.row(rows[i]);
                    sub_labels.push_back(labels[rows[i]]);
                }
                train_x = std::move(sub);
                labels = std::move(sub_labels);
            }
            const auto result =
                train(head, EmbeddingMatrix::from_eigen(train_x), labels, train_options(th_epochs, th_batch, th_lr, th_wd, g.seed));
            save_head(result.head, output(g, th_out), fmt::format(R"({{"epochs":{},"examples":{}}})", th_epochs, labels.size()));
            fmt::print("trained on {} examples; final loss {}; train accuracy {}\n", labels.size(),
                       format_double(result.loss_trace.empty() ? 0.0 : result.loss_trace.back()),
                       format_double(accuracy(result.head, EmbeddingMatrix::from_eigen(train_x), labels)));
            return 0;
        };
    });

    // zeroshot
    auto* zeroshot = app.add_subcommand("zeroshot", "Build a head from class-prompt embeddings without training");
    std::string zs_prompts, zs_classes, zs_out = "head", zs_emb, zs_labels;
    zeroshot->add_option("--prompts", zs_prompts, "Class-prompt embeddings (.emb)")->required();
    zeroshot->add_option("--classes", zs_classes, "Class names, one per line")->required();
    zeroshot->add_option("--out", zs_out, "Output stem")->capture_default_str();
    zeroshot->add_option("--embeddings", zs_emb, "Optional evaluation embeddings");
    zeroshot->add_option("--labels", zs_labels, "Labels for the evaluation embeddings");
    zeroshot->callback([&] {
        action = [&] {
            const auto head = init_zeroshot(read_matrix(zs_prompts), read_lines(zs_classes));
            save_head(head, output(g, zs_out));
            if (!zs_emb.empty() && !zs_labels.empty()) {
                fmt::print("zero-shot accuracy {}\n",
                           format_double(accuracy(head, normalize_rows(read_matrix(zs_emb)), read_labels(zs_labels))));
            }
            return 0;
        };
    });

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Predict classes with a saved head");
    std::string pr_head, pr_emb, pr_labels, pr_out;
    predict_cmd->add_option("--head", pr_head, "Head stem")->required();
    predict_cmd->add_option("--embeddings", pr_emb, "Embeddings (.emb)")->required();
    predict_cmd->add_option("--labels", pr_labels, "Optional labels; prints accuracy");
    predict_cmd->add_option("--out", pr_out, "Write predictions here instead of stdout");
    predict_cmd->callback([&] {
        action = [&] {
            const auto head = load_head(pr_head);
            const auto x = normalize_rows(read_matrix(pr_emb));
            std::string lines;
            const auto preds = predict_all(head, x);
            for (std::size_t i = 0; i < preds.size(); ++i)
                lines += fmt::format("{}\t{}\n", i, head.class_names.at(preds[i]));
            if (pr_out.empty()) {
                std::cout << lines;
            } else {
                write_file(output(g, pr_out), lines);
            }
            if (!pr_labels.empty())
                std::cerr << fmt::format("accuracy {}\n", format_double(accuracy(head, x, read_labels(pr_labels))));
            return 0;
        };
    });

    // explain
    auto* explain_cmd = app.add_subcommand("explain", "Top contributing concepts per image");
    std::string xp_head, xp_bank, xp_names, xp_codes, xp_out = "explanations.json";
    std::size_t xp_top = 3;
    std::optional<std::size_t> xp_image;
    explain_cmd->add_option("--head", xp_head, "Head stem")->required();
    explain_cmd->add_option("--bank", xp_bank, "Concept bank used for decomposition (.emb)")->required();
    explain_cmd->add_option("--names", xp_names, "Concept names, one per line");
    explain_cmd->add_option("--codes", xp_codes, "Codes file from decompose")->required();
    explain_cmd->add_option("--top", xp_top, "Concepts listed per image")->capture_default_str();
    explain_cmd->add_option("--image", xp_image, "Explain only this image index");
    explain_cmd->add_option("--out", xp_out)->capture_default_str();
    explain_cmd->callback([&] {
        action = [&] {
            const auto head = load_head(xp_head);
            const ConceptDictionary bank(read_matrix(xp_bank));
            std::vector<std::string> names;
            if (!xp_names.empty()) names = read_lines(xp_names);
            const auto codes = parse_codes(read_file(xp_codes), bank);
            std::vector<Explanation> list;
            for (std::size_t i = 0; i < codes.size(); ++i) {
                if (xp_image && *xp_image != i) continue;
                list.push_back(explain(head, bank.atoms(), codes[i], xp_top, names, i));
            }
            if (xp_image && list.empty()) throw IndexError(fmt::format("no code for image {}", *xp_image));
            write_file(output(g, xp_out), explanations_json(list, head.class_names));
            for (const auto& ex : list) {
                std::string parts;
                for (const auto& c : ex.contributions)
                    parts += fmt::format(" {}={}", c.name.empty() ? std::to_string(c.concept_index) : c.name,
                                         format_double(c.contribution));
                fmt::print("{}\t{}\t{}\n", ex.image_index, head.class_names.at(ex.predicted), parts);
            }
            return 0;
        };
    });

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Ablation drivers");
    ablate->require_subcommand(1);
    std::string ab_train, ab_test, ab_prompts, ab_out;
    std::size_t ab_n = 32, ab_epochs = 50, ab_batch = 64;
    double ab_lr = 5e-5;
    auto add_downstream = [&](CLI::App* cmd) {
        cmd->add_option("--train-manifest", ab_train, "Labelled training split")->required();
        cmd->add_option("--test-manifest", ab_test, "Labelled evaluation split")->required();
        cmd->add_option("-n,--sparsity", ab_n)->capture_default_str();
        cmd->add_option("--epochs", ab_epochs)->capture_default_str();
        cmd->add_option("--batch", ab_batch)->capture_default_str();
        cmd->add_option("--lr", ab_lr)->capture_default_str();
        cmd->add_option("--out", ab_out, "CSV output (stdout when absent)");
    };
    auto downstream = [&](const Dataset& train_ds) {
        DownstreamOptions d;
        d.omp.sparsity = ab_n;
        d.train = train_options(ab_epochs, ab_batch, ab_lr, 0.0, g.seed);
        d.classes = train_ds.classes.size();
        d.threads = g.threads;
        if (!ab_prompts.empty()) d.class_prompts = read_matrix(ab_prompts).to_eigen();
        return d;
    };
    auto emit = [&](const std::string& csv) {
        if (ab_out.empty()) {
            std::cout << csv;
        } else {
            write_file(output(g, ab_out), csv);
        }
    };

    auto* ab_sel = ablate->add_subcommand("selection", "Bottleneck-size sweep for a selection strategy");
    std::string as_probe, as_pool, as_grid = "8,16,32,64", as_strategy = "all";
    ab_sel->add_option("--probe", as_probe, "Probing embeddings; defaults to the training split");
    ab_sel->add_option("--pool", as_pool, "Candidate concept embeddings (.emb)")->required();
    ab_sel->add_option("--grid", as_grid, "Comma-separated bottleneck sizes")->capture_default_str();
    ab_sel->add_option("--strategy", as_strategy, "greedy | random | kmeans | all")->capture_default_str();
    ab_sel->add_option("--prompts", ab_prompts, "Class prompts for zero-shot head init");
    add_downstream(ab_sel);
    ab_sel->callback([&] {
        action = [&] {
            const auto train_ds = dataset_from(ab_train);
            const auto test_ds = dataset_from(ab_test);
            const Eigen::MatrixXd probe =
                as_probe.empty() ? train_ds.embeddings.to_eigen() : normalize_rows(read_matrix(as_probe)).to_eigen();
            const Eigen::MatrixXd pool = normalize_rows(read_matrix(as_pool)).to_eigen();
            std::vector<SelectionStrategy> strategies;
            if (as_strategy == "all") {
                strategies = {SelectionStrategy::Greedy, SelectionStrategy::Random, SelectionStrategy::KMeans};
            } else {
                strategies = {selection_strategy_from_string(as_strategy)};
            }
            std::vector<SweepPoint> points;
            for (auto s : strategies) {
                auto part = ablate_selection(probe, pool, split_of(train_ds), split_of(test_ds), parse_grid(as_grid), s,
                                             downstream(train_ds), g.seed);
                points.insert(points.end(), part.begin(), part.end());
            }
            emit(sweep_csv(points));
            return 0;
        };
    });

    auto* ab_assoc = ablate->add_subcommand("association", "Decomposition scores vs similarity scores");
    std::string aa_bank;
    ab_assoc->add_option("--bank", aa_bank, "Concept bank (.emb)")->required();
    add_downstream(ab_assoc);
    ab_assoc->callback([&] {
        action = [&] {
            const auto train_ds = dataset_from(ab_train);
            const auto test_ds = dataset_from(ab_test);
            const auto result = ablate_association(normalize_rows(read_matrix(aa_bank)).to_eigen(), split_of(train_ds),
                                                   split_of(test_ds), downstream(train_ds));
            emit(association_csv(result));
            return 0;
        };
    });

    // run
    auto* run = app.add_subcommand("run", "Full pipeline from a run configuration");
    std::string run_config;
    run->add_option("config", run_config, "Run configuration (JSON); --config also works");
    run->callback([&] {
        action = [&] {
            const std::string path = run_config.empty() ? g.config : run_config;
            if (path.empty()) throw ConfigError("run needs a configuration file");
            RunConfig cfg = load_run_config(path);
            if (app.count("--seed")) cfg.seed = g.seed;
            if (app.count("--threads")) cfg.threads = g.threads;
            if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
            const auto summary = run_pipeline(cfg);
            fmt::print("run {} -> {}\n", summary.config_hash, summary.out_dir.string());
            for (const auto& [k, v] : summary.metrics) fmt::print("  {} = {}\n", k, format_double(v));
            fmt::print("  {} artifacts, {} warnings\n", summary.artifacts.size(), summary.warnings.size());
            return 0;
        };
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic fixture (dataset, bank, mock transcript, config)");
    std::string sy_out = "fixture";
    synthetic::ConceptDataSpec sy_spec;
    synth->add_option("--out", sy_out, "Fixture directory")->capture_default_str();
    synth->add_option("--classes", sy_spec.classes)->capture_default_str();
    synth->add_option("--concepts", sy_spec.concepts)->capture_default_str();
    synth->add_option("--distractors", sy_spec.distractors)->capture_default_str();
    synth->add_option("--dim", sy_spec.dim)->capture_default_str();
    synth->add_option("--sparsity", sy_spec.sparsity)->capture_default_str();
    synth->add_option("--noise", sy_spec.noise)->capture_default_str();
    synth->add_option("--train", sy_spec.train)->capture_default_str();
    synth->add_option("--test", sy_spec.test)->capture_default_str();
    synth->callback([&] {
        action = [&] {
            sy_spec.seed = g.seed;
            const fs::path dir = output(g, sy_out);
            synthetic::write_fixture(dir, sy_spec);
            fmt::print("fixture written to {}\n", dir.string());
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return action ? action() : 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
