#include <recbm/decomposer.hpp>
#include <recbm/error.hpp>
#include <recbm/head.hpp>

#include "oracles.hpp"
#include "scratch.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace recbm;

namespace {

const std::vector<std::string> kThree{"a", "b", "c"};

LinearHead random_head(std::size_t d, std::size_t classes, std::mt19937_64& rng) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < classes; ++i) names.push_back(std::to_string(i));
    LinearHead h = init_zeros(d, names);
    h.weights = oracle::gaussian(d, classes, rng);
    h.bias = oracle::gaussian(classes, 1, rng);
    return h;
}

}  // namespace

TEST(ZeroShot, OrthonormalPromptsBecomeColumns) {
    const auto prompts = EmbeddingMatrix::from_eigen(Eigen::MatrixXd::Identity(3, 5));
    const auto h = init_zeroshot(prompts, kThree);
    EXPECT_EQ(h.weights, Eigen::MatrixXd::Identity(5, 3));
    EXPECT_EQ(h.bias, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(h.init_mode, InitMode::ZeroshotPrompt);
}

TEST(ZeroShot, PromptsAreNormalised) {
    Eigen::MatrixXd p(2, 2);
    p << 3, 4, 0, 5;
    const auto h = init_zeroshot(EmbeddingMatrix::from_eigen(p), {"x", "y"});
    EXPECT_NEAR(h.weights(0, 0), 0.6, 1e-7);
    EXPECT_NEAR(h.weights(1, 0), 0.8, 1e-7);
    EXPECT_NEAR(h.weights(1, 1), 1.0, 1e-7);
}

TEST(ZeroShot, Validation) {
    EXPECT_THROW(init_zeroshot(EmbeddingMatrix{}, {}), ConfigError);
    EXPECT_THROW(init_zeroshot(EmbeddingMatrix::from_eigen(Eigen::MatrixXd::Identity(2, 3)), kThree), ConfigError);
    EXPECT_THROW(init_zeros(3, {}), ConfigError);
}

TEST(Predict, OrthonormalClassTwo) {
    const auto h = init_zeroshot(EmbeddingMatrix::from_eigen(Eigen::MatrixXd::Identity(3, 4)), kThree);
    const auto p = predict(h, Eigen::Vector4d(0, 0, 1, 0));
    EXPECT_EQ(p.label, 2u);
    EXPECT_DOUBLE_EQ(p.logits(2), 1.0);
}

TEST(Predict, ZeroInputTiesToClassZero) {
    const auto h = init_zeroshot(EmbeddingMatrix::from_eigen(Eigen::MatrixXd::Identity(3, 4)), kThree);
    const auto p = predict(h, Eigen::Vector4d::Zero());
    EXPECT_EQ(p.logits, h.bias);
    EXPECT_EQ(p.label, 0u);
}

TEST(Predict, ShapeMismatch) {
    const auto h = init_zeros(4, kThree);
    EXPECT_THROW(predict(h, Eigen::Vector3d::Zero()), ShapeError);
}

TEST(ConceptForm, MatchesEmbeddingFormOnSeededCodes) {
    std::mt19937_64 rng(31);
    int compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto head = random_head(16, 4, rng);
        const Eigen::MatrixXd bank = oracle::unit_rows(30, 16, rng);
        const ConceptDictionary dict(bank);
        OmpOptions o;
        o.sparsity = 5;
        const auto code = omp_decompose(oracle::gaussian(16, 1, rng), dict, o);
        const Eigen::VectorXd embedding_form = predict(head, code.reconstructed).logits;
        const Eigen::VectorXd concept_form = concept_logits(head, concept_weights(head, dict.atoms()), code);
        EXPECT_LE((embedding_form - concept_form).cwiseAbs().maxCoeff(), 1e-5);
        Eigen::VectorXd sorted = embedding_form;
        std::sort(sorted.data(), sorted.data() + sorted.size(), std::greater<>());
        if (sorted(0) - sorted(1) > 1e-4) {
            EXPECT_EQ(argmax(embedding_form), argmax(concept_form));
            ++compared;
        }
    }
    EXPECT_GT(compared, 90);
}

TEST(ConceptWeights, IdentityBlockForOrthonormalColumns) {
    const Eigen::MatrixXd bank = Eigen::MatrixXd::Identity(5, 5);
    const auto h = init_zeroshot(EmbeddingMatrix::from_eigen(bank.topRows(3)), kThree);
    const Eigen::MatrixXd cw = concept_weights(h, bank);
    EXPECT_EQ(cw.topRows(3), Eigen::MatrixXd::Identity(3, 3));
    EXPECT_EQ(cw.bottomRows(2), Eigen::MatrixXd::Zero(2, 3));
}

TEST(ConceptWeights, BilinearAndMatchesPerEntryLoop) {
    std::mt19937_64 rng(8);
    const auto h = random_head(6, 3, rng);
    Eigen::MatrixXd bank = oracle::gaussian(4, 6, rng);
    const Eigen::MatrixXd cw = concept_weights(h, bank);
    for (int j = 0; j < 4; ++j) {
        for (int y = 0; y < 3; ++y) {
            double dot = 0.0;
            for (int k = 0; k < 6; ++k) dot += h.weights(k, y) * bank(j, k);
            EXPECT_NEAR(cw(j, y), dot, 1e-12);
        }
    }
    bank.row(2) *= 2.0;
    const Eigen::MatrixXd doubled = concept_weights(h, bank);
    EXPECT_LE((doubled.row(2) - 2.0 * cw.row(2)).norm(), 1e-12);
    EXPECT_THROW(concept_weights(h, Eigen::MatrixXd::Ones(2, 5)), ShapeError);
}

TEST(Gradient, MatchesCentralDifferences) {
    std::mt19937_64 rng(5);
    const auto head = random_head(5, 3, rng);
    const Eigen::MatrixXd x = oracle::gaussian(12, 5, rng);
    std::vector<int> y(12);
    for (int i = 0; i < 12; ++i) y[i] = i % 3;
    for (double wd : {0.0, 0.1}) {
        const auto g = loss_and_gradient(head, x, y, wd);
        const Eigen::MatrixXd num_w = oracle::central_difference(
            [&](const Eigen::MatrixXd& w) {
                LinearHead h = head;
                h.weights = w;
                return loss_and_gradient(h, x, y, wd).loss;
            },
            head.weights, 1e-5);
        const Eigen::MatrixXd num_b = oracle::central_difference(
            [&](const Eigen::MatrixXd& b) {
                LinearHead h = head;
                h.bias = b;
                return loss_and_gradient(h, x, y, wd).loss;
            },
            head.bias, 1e-5);
        const double err_w = (g.d_weights - num_w).cwiseAbs().maxCoeff() / num_w.cwiseAbs().maxCoeff();
        const double err_b = (g.d_bias - num_b).cwiseAbs().maxCoeff() / num_b.cwiseAbs().maxCoeff();
        EXPECT_LE(err_w, 1e-4);
        EXPECT_LE(err_b, 1e-4);
    }
}

TEST(Train, SeparableReachesFullAccuracy) {
    std::mt19937_64 rng(17);
    const Eigen::VectorXd normal = oracle::gaussian(8, 1, rng).normalized();
    Eigen::MatrixXd x(200, 8);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd v = oracle::gaussian(8, 1, rng);
        const int label = i % 2;
        v += ((label == 1 ? 1.0 : -1.0) * 0.5 - v.dot(normal)) * normal;  // margin 0.5 either side
        x.row(i) = v.normalized();
        y[i] = label;
    }
    TrainOptions opts;
    opts.epochs = 200;
    opts.learning_rate = 1e-2;
    const auto result = train(init_zeros(8, {"neg", "pos"}), EmbeddingMatrix::from_eigen(x), y, opts);
    EXPECT_DOUBLE_EQ(accuracy(result.head, EmbeddingMatrix::from_eigen(x), y), 1.0);
    EXPECT_EQ(result.loss_trace.size(), 200u);
}

TEST(Train, ZeroEpochsIsNoOp) {
    std::mt19937_64 rng(2);
    const auto head = random_head(4, 3, rng);
    TrainOptions opts;
    opts.epochs = 0;
    const auto result = train(head, EmbeddingMatrix::from_eigen(oracle::gaussian(6, 4, rng)), {0, 1, 2, 0, 1, 2}, opts);
    EXPECT_EQ(result.head.weights, head.weights);
    EXPECT_EQ(result.head.bias, head.bias);
    EXPECT_TRUE(result.loss_trace.empty());
}

TEST(Train, FullBatchTraceNonIncreasing) {
    std::mt19937_64 rng(23);
    const Eigen::MatrixXd x = oracle::unit_rows(60, 10, rng);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) y[i] = (x(i, 0) > 0) + (x(i, 1) > 0);
    TrainOptions opts;
    opts.batch_size = 60;
    opts.epochs = 100;
    const auto r = train(init_zeros(10, kThree), EmbeddingMatrix::from_eigen(x), y, opts);
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1] + 1e-9);
}

TEST(Train, DeterministicUnderSeed) {
    std::mt19937_64 rng(29);
    const auto x = EmbeddingMatrix::from_eigen(oracle::unit_rows(100, 6, rng));
    std::vector<int> y(100);
    for (int i = 0; i < 100; ++i) y[i] = i % 3;
    TrainOptions opts;
    opts.epochs = 5;
    opts.learning_rate = 1e-3;
    opts.seed = 4;
    const auto a = train(init_zeros(6, kThree), x, y, opts);
    const auto b = train(init_zeros(6, kThree), x, y, opts);
    EXPECT_EQ(a.head.weights, b.head.weights);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    opts.seed = 5;
    const auto c = train(init_zeros(6, kThree), x, y, opts);
    EXPECT_NE(a.head.weights, c.head.weights);
}

TEST(Train, Validation) {
    const auto h = init_zeros(2, {"a", "b"});
    EXPECT_THROW(train(h, EmbeddingMatrix{}, {}, TrainOptions{}), ConfigError);
    const EmbeddingMatrix x(2, 2, {1, 0, 0, 1});
    EXPECT_THROW(train(h, x, {0}, TrainOptions{}), ShapeError);
    EXPECT_THROW(train(h, x, {0, 5}, TrainOptions{}), ConfigError);
}

TEST(FewShot, PerClassCountsAndDeterminism) {
    std::vector<int> labels;
    for (int i = 0; i < 50; ++i) labels.push_back(i % 5);
    labels.push_back(5);  // a class with a single example
    for (std::size_t shots : {1, 2, 4, 8, 16}) {
        const auto rows = few_shot_subset(labels, shots, 3);
        EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end()));
        std::map<int, std::size_t> per;
        for (auto r : rows) ++per[labels[r]];
        for (int c = 0; c < 5; ++c) EXPECT_EQ(per[c], std::min<std::size_t>(shots, 10));
        EXPECT_EQ(per[5], 1u);
        EXPECT_EQ(rows, few_shot_subset(labels, shots, 3));
    }
    EXPECT_THROW(few_shot_subset(labels, 0, 1), ConfigError);
}

TEST(HeadFile, SaveLoadRoundTrip) {
    Scratch dir;
    std::mt19937_64 rng(1);
    auto h = random_head(7, 3, rng);
    h.init_mode = InitMode::ZeroshotPrompt;
    save_head(h, dir / "head", R"({"note":"x"})");
    const auto back = load_head(dir / "head");
    EXPECT_EQ(back.class_names, h.class_names);
    EXPECT_EQ(back.init_mode, InitMode::ZeroshotPrompt);
    EXPECT_LE((back.weights - h.weights).cwiseAbs().maxCoeff(), 1e-6);  // stored as f32
    EXPECT_EQ(back.bias, h.bias);

    save_head(init_zeros(4, kThree), dir / "zeros");
    EXPECT_EQ(load_head(dir / "zeros").weights, Eigen::MatrixXd::Zero(4, 3));
}

TEST(InitMode, Strings) {
    EXPECT_EQ(to_string(InitMode::ZeroshotPrompt), "zeroshot-prompt");
    EXPECT_EQ(init_mode_from_string("zeros"), InitMode::Zeros);
    EXPECT_THROW(init_mode_from_string("random"), ConfigError);
}
