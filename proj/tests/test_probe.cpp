#include <cmath>

#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "test_support.hpp"
#include "wordlens/error.hpp"
#include "wordlens/probe.hpp"

using namespace wordlens;
using testsupport::Gen;

namespace {

struct Instance {
    Eigen::MatrixXd X;
    std::vector<int> y;
};

// Random small problem with both classes present and overlapping classes.
Instance random_instance(Gen& g, std::size_t max_n = 32, std::size_t max_d = 8) {
    Instance in;
    const auto n = g.range(4, max_n);
    const auto d = g.range(1, max_d);
    in.X = g.matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) in.y.push_back(g.uniform() < 0.5 ? 0 : 1);
    in.y[0] = 0;
    in.y[1] = 1;
    return in;
}

std::vector<int> flipped(const std::vector<int>& y) {
    std::vector<int> out;
    for (int v : y) out.push_back(1 - v);
    return out;
}

}  // namespace

TEST(Probe, OneDimensionalFixedPointMatchesBisection) {
    Eigen::MatrixXd X(2, 1);
    X << 1.0, -1.0;
    const std::vector<int> y{1, 0};
    // dJ/dw = -2 sigma(-w) + w for this data at C = 1.
    const double expected = oracle::bisect([](double w) { return w - 2.0 / (1.0 + std::exp(w)); }, 0.0, 2.0);
    EXPECT_NEAR(expected, 0.6748316143, 1e-9);
    const ProbeModel m = fit_probe(X, y);
    ASSERT_TRUE(m.fit_report.converged);
    EXPECT_NEAR(m.weights[0], expected, 1e-8);
}

TEST(Probe, SymmetricDataGivesZeroWeights) {
    Eigen::MatrixXd X(4, 1);
    X << 1.0, -1.0, 1.0, -1.0;
    const std::vector<int> y{1, 1, 0, 0};
    const ProbeModel m = fit_probe(X, y);
    EXPECT_NEAR(m.weights[0], 0.0, 1e-12);
}

TEST(Probe, GradientMatchesFiniteDifferences) {
    Gen g(21);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance in = random_instance(g);
        const Eigen::VectorXd w = g.vector(in.X.cols());
        const double C = 0.1 + 10 * g.uniform();
        const Eigen::VectorXd analytic = probe_gradient(in.X, in.y, w, C);
        const auto fd = oracle::finite_difference(
            [&](const oracle::Vec& v) {
                return probe_objective(in.X, in.y, Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()), C);
            },
            testsupport::to_std(w));
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double scale = std::max(1.0, std::fabs(fd[i]));
            ASSERT_LE(std::fabs(analytic[i] - fd[i]) / scale, 1e-5) << "trial " << trial;
        }
    }
}

TEST(Probe, ObjectiveMatchesDefinition) {
    Eigen::MatrixXd X(3, 2);
    X << 1, 2, -1, 0.5, 0, -3;
    const std::vector<int> y{1, 0, 1};
    Eigen::VectorXd w(2);
    w << 0.3, -0.2;
    double expected = (0.09 + 0.04) / (2 * 2.0);
    for (int i = 0; i < 3; ++i) {
        const double s = 2.0 * y[i] - 1;
        expected += std::log1p(std::exp(-s * X.row(i).dot(w)));
    }
    EXPECT_NEAR(probe_objective(X, y, w, 2.0), expected, 1e-14);
}

TEST(Probe, StationarityAtSolution) {
    Gen g(22);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance in = random_instance(g);
        const ProbeModel m = fit_probe(in.X, in.y);
        ASSERT_TRUE(m.fit_report.converged) << "trial " << trial;
        EXPECT_LE(m.fit_report.final_grad_norm, 1e-8);
        EXPECT_LE(probe_gradient(in.X, in.y, m.weights, 1.0).norm(), 1e-8);
    }
}

TEST(Probe, SeparableDataStillConverges) {
    Eigen::MatrixXd X(6, 2);
    X << 5, 0, 4, 1, 6, -1, -5, 0, -4, 1, -6, -1;
    const std::vector<int> y{1, 1, 1, 0, 0, 0};
    const ProbeModel m = fit_probe(X, y, {.reg_c = 100.0});
    EXPECT_TRUE(m.fit_report.converged);
    EXPECT_LE(probe_gradient(X, y, m.weights, 100.0).norm(), 1e-8);
}

TEST(Probe, LabelFlipNegatesWeights) {
    Gen g(23);
    for (int trial = 0; trial < 30; ++trial) {
        const Instance in = random_instance(g);
        const auto a = fit_probe(in.X, in.y);
        const auto b = fit_probe(in.X, flipped(in.y));
        for (Eigen::Index i = 0; i < a.weights.size(); ++i) ASSERT_NEAR(a.weights[i], -b.weights[i], 1e-6);
    }
}

TEST(Probe, RegularizationMonotonicity) {
    Gen g(24);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance in = random_instance(g);
        const double n1 = fit_probe(in.X, in.y, {.reg_c = 0.01}).weights.norm();
        const double n2 = fit_probe(in.X, in.y, {.reg_c = 1.0}).weights.norm();
        const double n3 = fit_probe(in.X, in.y, {.reg_c = 100.0}).weights.norm();
        EXPECT_LE(n1, n2 + 1e-12);
        EXPECT_LE(n2, n3 + 1e-12);
    }
}

TEST(Probe, DeterministicBitwise) {
    Gen g(25);
    const Instance in = random_instance(g);
    const auto a = fit_probe(in.X, in.y);
    const auto b = fit_probe(in.X, in.y);
    ASSERT_EQ(a.weights.size(), b.weights.size());
    for (Eigen::Index i = 0; i < a.weights.size(); ++i) EXPECT_EQ(a.weights[i], b.weights[i]);
}

TEST(Probe, Errors) {
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    EXPECT_THROW(fit_probe(X, std::vector<int>{1, 1}), ValidationError);
    EXPECT_THROW(fit_probe(X, std::vector<int>{1}), ValidationError);
    EXPECT_THROW(fit_probe(X, std::vector<int>{1, 0}, {.reg_c = 0.0}), ValidationError);
}

TEST(Probe, NonConvergenceIsFlaggedNotThrown) {
    Gen g(26);
    const Instance in = random_instance(g);
    const auto m = fit_probe(in.X, in.y, {.reg_c = 1.0, .tol = 1e-8, .max_iter = 0});
    EXPECT_FALSE(m.fit_report.converged);
    EXPECT_GT(m.fit_report.final_grad_norm, 1e-8);
}

TEST(Probe, EmbeddingOverloadJoinsById) {
    EmbeddingMatrix X({"b", "a"}, 1, {-1.0f, 1.0f});
    LabelSet y;
    y.entries = {{"a", 1}, {"b", 0}};
    const auto m = fit_probe(X, y);
    EXPECT_NEAR(m.weights[0], 0.6748316143, 1e-8);
    LabelSet missing;
    missing.entries = {{"a", 1}};
    EXPECT_THROW(fit_probe(X, missing), ValidationError);
}

TEST(Predict, ScoresFollowSigmoid) {
    ProbeModel m;
    m.weights = Eigen::VectorXd::Zero(2);
    EmbeddingMatrix X({"p", "q"}, 2, {1.0f, 2.0f, -3.0f, 4.0f});
    for (const auto& [id, s] : predict_scores(m, X)) EXPECT_EQ(s, 0.5);

    m.weights = Eigen::VectorXd::Zero(1);
    m.weights[0] = std::log(3.0);
    EmbeddingMatrix one({"z"}, 1, {1.0f});
    EXPECT_NEAR(predict_scores(m, one).at("z"), 0.75, 1e-12);

    m.weights = Eigen::VectorXd::Constant(2, 0.7);
    EmbeddingMatrix mirrored({"x", "neg"}, 2, {0.3f, -1.2f, -0.3f, 1.2f});
    const auto s = predict_scores(m, mirrored);
    EXPECT_NEAR(s.at("x") + s.at("neg"), 1.0, 1e-15);

    EXPECT_THROW(predict_scores(m, one), ValidationError);
}

TEST(Predict, SigmoidIsStableAtExtremes) {
    EXPECT_EQ(sigmoid(-1000), 0.0);
    EXPECT_EQ(sigmoid(1000), 1.0);
    EXPECT_NEAR(sigmoid(-40) + sigmoid(40), 1.0, 1e-15);
}

TEST(Binarize, ThresholdRule) {
    const auto b = binarize({{"a", 0.5}, {"b", 0.4999}, {"c", 0.9}});
    EXPECT_EQ(b.at("a"), 1);
    EXPECT_EQ(b.at("b"), 0);
    EXPECT_EQ(b.at("c"), 1);
    EXPECT_TRUE(binarize({}).empty());
}

TEST(ProbeArtifact, JsonRoundTrip) {
    Gen g(27);
    const Instance in = random_instance(g);
    const auto m = fit_probe(in.X, in.y, {.reg_c = 3.5});
    const std::string text = probe_to_json(m, "abc");
    const auto j = nlohmann::json::parse(text);
    EXPECT_EQ(j.at("format"), "probe-v1");
    EXPECT_EQ(j.at("manifest_hash"), "abc");
    EXPECT_EQ(j.at("weights").size(), static_cast<std::size_t>(m.weights.size()));
    const auto back = probe_from_json(text);
    EXPECT_EQ(back.reg_c, 3.5);
    EXPECT_EQ(back.normalize_inputs, m.normalize_inputs);
    ASSERT_EQ(back.weights.size(), m.weights.size());
    for (Eigen::Index i = 0; i < m.weights.size(); ++i) EXPECT_EQ(back.weights[i], m.weights[i]);
    EXPECT_THROW(probe_from_json(R"({"format":"probe-v2"})"), ValidationError);
}
