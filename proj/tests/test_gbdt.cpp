#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <ringscan/gbdt.hpp>

#include "support/fixtures.hpp"

using namespace ringscan;

namespace {

struct Xy {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
};

/// 200 points uniform on the unit square, label = (x0 > .5) xor (x1 > .5).
Xy xor_data(std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Xy d;
    for (int i = 0; i < 200; ++i) {
        const double a = u(rng), b = u(rng);
        d.x.push_back({a, b});
        d.y.push_back((a > 0.5) != (b > 0.5) ? 1 : 0);
    }
    return d;
}

Xy gaussian_data(std::size_t n, std::size_t p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Xy d;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(p);
        for (auto& v : row) v = z(rng);
        d.y.push_back(row[0] + 0.5 * row[1] + 0.8 * z(rng) > 0.6 ? 1 : 0);
        d.x.push_back(std::move(row));
    }
    return d;
}

int max_split_depth(const gbdt::RegressionTree& t) { return t.depth(); }

} // namespace

TEST(GbdtConfig, DefaultsAndSummary) {
    gbdt::Config c;
    EXPECT_EQ(c.n_trees, 500);
    EXPECT_EQ(c.max_depth, 5);
    EXPECT_DOUBLE_EQ(c.row_sample_rate, 0.6);
    EXPECT_DOUBLE_EQ(c.feature_sample_rate, 0.7);
    EXPECT_DOUBLE_EQ(c.learning_rate, 0.009);
    EXPECT_EQ(c.summary(), "500 trees, depth 5, row 0.6, feat 0.7, lr 0.009");
}

TEST(GbdtConfig, InvalidRejected) {
    gbdt::Config c;
    c.n_trees = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.row_sample_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.feature_sample_rate = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(GbdtFit, ConstantFeatureMostlyNegative) {
    // All-zero labels are a single class; one positive in 200 is the closest valid input.
    std::vector<std::vector<double>> x(200, std::vector<double>{3.0});
    std::vector<int> y(200, 0);
    y[0] = 1;
    const auto m = gbdt::fit(x, y, {});
    for (double v : {-10.0, 0.0, 3.0, 50.0}) EXPECT_LE(m.predict(std::vector<double>{v}), 0.01);
    for (const auto& t : m.trees) EXPECT_EQ(t.nodes.size(), 1u);
}

TEST(GbdtFit, SingleClassIsError) {
    std::vector<std::vector<double>> x(10, std::vector<double>{1.0});
    EXPECT_THROW(gbdt::fit(x, std::vector<int>(10, 0), {}), ValidationError);
    EXPECT_THROW(gbdt::fit(x, std::vector<int>(10, 1), {}), ValidationError);
}

TEST(GbdtFit, BadInputsRejected) {
    std::vector<std::vector<double>> x{{1.0}, {2.0}};
    EXPECT_THROW(gbdt::fit(x, {0}, {}), ValidationError);
    EXPECT_THROW(gbdt::fit(x, {0, 2}, {}), ValidationError);
    EXPECT_THROW(gbdt::fit({{1.0}, {2.0, 3.0}}, {0, 1}, {}), ValidationError);
}

TEST(GbdtFit, XorTrainingAccuracy) {
    const auto d = xor_data();
    // both features in every tree; at 0.7 each tree sees only one of two
    gbdt::Config cfg;
    cfg.feature_sample_rate = 1.0;
    const auto m = gbdt::fit(d.x, d.y, cfg);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.x.size(); ++i) correct += (m.predict(d.x[i]) > 0.5) == (d.y[i] == 1) ? 1 : 0;
    EXPECT_GE(static_cast<double>(correct) / 200.0, 0.95);
    EXPECT_GT(m.predict(std::vector<double>{1.0, 0.0}), 0.5);
    EXPECT_LT(m.predict(std::vector<double>{1.0, 1.0}), 0.5);
}

TEST(GbdtFit, LossTraceNonincreasing) {
    const auto d = gaussian_data(400, 6, 1);
    std::vector<double> trace;
    gbdt::fit(d.x, d.y, {}, &trace);
    ASSERT_EQ(trace.size(), 501u);
    for (std::size_t r = 1; r < trace.size(); ++r) EXPECT_LE(trace[r], trace[r - 1] + 1e-15) << "round " << r;
    EXPECT_LT(trace.back(), trace.front());
}

TEST(GbdtFit, LossTraceMatchesRecomputation) {
    const auto d = gaussian_data(150, 3, 2);
    gbdt::Config cfg;
    cfg.n_trees = 20;
    std::vector<double> trace;
    const auto m = gbdt::fit(d.x, d.y, cfg, &trace);
    double s = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const double p = m.predict(d.x[i]);
        s += d.y[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    EXPECT_NEAR(trace.back(), s / 150.0, 1e-12);
}

TEST(GbdtFit, TreesRespectDepthAndFeatureSubset) {
    const auto d = gaussian_data(300, 10, 3);
    gbdt::Config cfg;
    cfg.n_trees = 60;
    cfg.max_depth = 3;
    cfg.learning_rate = 0.1;
    const auto m = gbdt::fit(d.x, d.y, cfg);
    for (const auto& t : m.trees) {
        EXPECT_LE(max_split_depth(t), 3);
        EXPECT_EQ(t.feature_subset.size(), 7u);
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                EXPECT_TRUE(std::isfinite(n.value));
            } else {
                EXPECT_NE(std::find(t.feature_subset.begin(), t.feature_subset.end(), n.feature), t.feature_subset.end());
            }
        }
    }
}

TEST(GbdtFit, Deterministic) {
    const auto d = gaussian_data(200, 4, 4);
    gbdt::Config cfg;
    cfg.n_trees = 30;
    cfg.seed = 11;
    EXPECT_TRUE(gbdt::fit(d.x, d.y, cfg) == gbdt::fit(d.x, d.y, cfg));
    auto other = cfg;
    other.seed = 12;
    EXPECT_FALSE(gbdt::fit(d.x, d.y, cfg) == gbdt::fit(d.x, d.y, other));
}

TEST(GbdtPredict, ZeroTreesGivesPositiveRate) {
    const auto d = gaussian_data(200, 2, 5);
    auto m = gbdt::fit(d.x, d.y, {});
    m.trees.clear();
    const double rate = static_cast<double>(std::count(d.y.begin(), d.y.end(), 1)) / 200.0;
    EXPECT_NEAR(m.predict(d.x[0]), rate, 1e-12);
}

TEST(GbdtPredict, BatchEqualsPointwise) {
    const auto d = gaussian_data(100, 3, 6);
    gbdt::Config cfg;
    cfg.n_trees = 25;
    const auto m = gbdt::fit(d.x, d.y, cfg);
    const auto batch = m.predict_batch(d.x);
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        EXPECT_EQ(batch[i], m.predict(d.x[i]));
        EXPECT_GT(batch[i], 0.0);
        EXPECT_LT(batch[i], 1.0);
    }
}

TEST(GbdtPredict, LengthMismatch) {
    const auto d = gaussian_data(50, 3, 7);
    gbdt::Config cfg;
    cfg.n_trees = 2;
    const auto m = gbdt::fit(d.x, d.y, cfg);
    EXPECT_THROW(m.predict(std::vector<double>{1.0, 2.0}), ValidationError);
}

TEST(GbdtFile, RoundTripExact) {
    const auto d = gaussian_data(120, 4, 8);
    gbdt::Config cfg;
    cfg.n_trees = 15;
    const auto m = gbdt::fit(d.x, d.y, cfg);
    auto dir = fixture::temp_dir("gbdt_rt");
    gbdt::save_model(m, (dir / "m.txt").string());
    const auto back = gbdt::load_model((dir / "m.txt").string());
    EXPECT_TRUE(back == m);
    for (const auto& row : d.x) EXPECT_EQ(back.predict(row), m.predict(row));
    gbdt::save_model(back, (dir / "m2.txt").string());
    EXPECT_EQ(fixture::slurp(dir / "m.txt"), fixture::slurp(dir / "m2.txt"));
}

TEST(GbdtFile, CorruptRejected) {
    auto dir = fixture::temp_dir("gbdt_bad");
    fixture::write_text(dir / "a.txt", "not-a-model 1\n");
    EXPECT_THROW(gbdt::load_model((dir / "a.txt").string()), ParseError);
    const auto d = gaussian_data(60, 2, 9);
    gbdt::Config cfg;
    cfg.n_trees = 3;
    gbdt::save_model(gbdt::fit(d.x, d.y, cfg), (dir / "b.txt").string());
    auto text = fixture::slurp(dir / "b.txt");
    fixture::write_text(dir / "c.txt", text.substr(0, text.size() / 2));
    EXPECT_THROW(gbdt::load_model((dir / "c.txt").string()), ParseError);
}
