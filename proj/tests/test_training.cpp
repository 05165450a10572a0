#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include <ringscan/evaluation.hpp>
#include <ringscan/pipelines.hpp>
#include <ringscan/synth.hpp>
#include <ringscan/training.hpp>

#include "support/fixtures.hpp"

using namespace ringscan;

namespace {

/// One ring of 4 accounts on 2 devices plus 5 regular accounts with private
/// devices; ring members are HighRisk.
LabeledDataset tiny_dataset() {
    std::vector<std::string> accounts{"r0", "r1", "r2", "r3", "g0", "g1", "g2", "g3", "g4"};
    std::vector<std::string> devices{"rd0", "rd1", "gd0", "gd1", "gd2", "gd3", "gd4"};
    std::vector<std::pair<std::string, std::string>> links;
    for (int i = 0; i < 4; ++i) {
        links.emplace_back("r" + std::to_string(i), "rd0");
        links.emplace_back("r" + std::to_string(i), "rd1");
    }
    for (int i = 0; i < 5; ++i) links.emplace_back("g" + std::to_string(i), "gd" + std::to_string(i));
    auto ds = fixture::dataset(fixture::graph(accounts, devices, links), 4, {0, 1, 2, 3}, 17);
    for (std::size_t a = 0; a < 4; ++a) ds.records.at(a).features[0] += 1.0;
    return ds;
}

/// n_regular NoObservableRisk accounts (private devices) plus 2 HighRisk.
LabeledDataset pool_dataset(std::size_t n_regular) {
    std::vector<std::string> accounts{"h0", "h1"}, devices;
    std::vector<std::pair<std::string, std::string>> links;
    for (std::size_t i = 0; i < n_regular; ++i) accounts.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i < accounts.size(); ++i) {
        devices.push_back("d" + std::to_string(i));
        links.emplace_back(accounts[i], devices.back());
    }
    return fixture::dataset(fixture::graph(accounts, devices, links), 1, {0, 1}, 0);
}

} // namespace

TEST(SampleNegatives, RateOneTakesAll) {
    auto ds = pool_dataset(30);
    std::mt19937_64 rng(0);
    EXPECT_EQ(sample_negatives(ds, 1.0, rng), ds.tagged(RiskTag::NoObservableRisk, Split::Train));
}

TEST(SampleNegatives, QuarterOfHundredIsExactlyTwentyFive) {
    auto ds = pool_dataset(100);
    for (std::uint64_t s = 0; s < 10; ++s) {
        std::mt19937_64 rng(s);
        const auto got = sample_negatives(ds, 0.25, rng);
        EXPECT_EQ(got.size(), 25u);
        EXPECT_EQ(std::set<std::size_t>(got.begin(), got.end()).size(), 25u);
        for (auto a : got) EXPECT_EQ(ds.records.at(a).tag, RiskTag::NoObservableRisk);
    }
}

TEST(SampleNegatives, DeterministicGivenRngState) {
    auto ds = pool_dataset(100);
    std::mt19937_64 a(5), b(5), c(6);
    const auto x = sample_negatives(ds, 0.25, a);
    EXPECT_EQ(x, sample_negatives(ds, 0.25, b));
    EXPECT_NE(x, sample_negatives(ds, 0.25, c));
}

TEST(SampleNegatives, ExcludesTestSplitAndValidates) {
    auto ds = pool_dataset(10);
    for (std::size_t i = 2; i < 7; ++i) ds.split[i] = Split::Test;
    std::mt19937_64 rng(0);
    for (auto a : sample_negatives(ds, 1.0, rng)) EXPECT_EQ(ds.split.at(a), Split::Train);
    EXPECT_THROW(sample_negatives(ds, 0.0, rng), ConfigError);
    EXPECT_THROW(sample_negatives(ds, 1.5, rng), ConfigError);
    auto none = pool_dataset(0);
    EXPECT_THROW(sample_negatives(none, 0.5, rng), ValidationError);
}

TEST(Loss, HalfProbabilities) {
    std::map<std::size_t, double> p{{0, 0.5}, {1, 0.5}, {2, 0.5}, {3, 0.5}};
    EXPECT_NEAR(bce_loss(p, {0, 1}, {2, 3}), 4.0 * std::log(2.0), 1e-15);
}

TEST(Loss, PerfectPredictionsNearZero) {
    std::map<std::size_t, double> p{{0, 1.0}, {1, 0.0}};
    EXPECT_LE(bce_loss(p, {0}, {1}), 1e-10);
    std::map<std::size_t, double> q{{0, 0.0}, {1, 1.0}};
    EXPECT_TRUE(std::isfinite(bce_loss(q, {0}, {1})));
}

TEST(Loss, MatchesScalarRecomputation) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.001, 0.999);
    std::map<std::size_t, double> p;
    for (std::size_t i = 0; i < 40; ++i) p[i] = u(rng);
    std::vector<std::size_t> pos, neg;
    double expect = 0;
    for (std::size_t i = 0; i < 40; ++i) {
        if (i % 3 == 0) {
            pos.push_back(i);
            expect += -std::log(p[i]);
        } else if (i % 3 == 1) {
            neg.push_back(i);
            expect += -std::log(1.0 - p[i]);
        }
    }
    EXPECT_NEAR(bce_loss(p, pos, neg), expect, 1e-12);
}

TEST(Loss, OverlapIsError) {
    std::map<std::size_t, double> p{{0, 0.3}};
    EXPECT_THROW(bce_loss(p, {0}, {0}), ValidationError);
}

TEST(Loss, ObjectiveAgreesWithBceLoss) {
    auto ds = tiny_dataset();
    const auto params = geniepath::Params::init(4, 4, 2, 0);
    const auto fp = geniepath::forward(params, ds.graph, feature_matrix(ds));
    std::map<std::size_t, double> probs;
    for (auto a : ds.graph.account_indices()) probs[a] = fp.prob_of(a);
    const std::vector<std::size_t> pos{0, 1}, neg{4, 5, 6};
    EXPECT_NEAR(bce_objective(fp, pos, neg).loss, bce_loss(probs, pos, neg), 1e-12);
}

TEST(Train, ZeroLearningRateLeavesParamsAndLossFlat) {
    auto ds = tiny_dataset();
    const auto init = geniepath::Params::init(4, 4, 2, 3);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    cfg.resample_each_epoch = false;
    TrainReport rep;
    const auto out = train(ds, init, cfg, &rep);
    const auto a = geniepath::blocks(init);
    const auto b = geniepath::blocks(out);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_TRUE(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin())) << a[i].name;
    ASSERT_EQ(rep.loss_history.size(), 5u);
    for (double l : rep.loss_history) EXPECT_EQ(l, rep.loss_history[0]);
}

TEST(Train, TinyDatasetLossDecreases) {
    auto ds = tiny_dataset();
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.negative_sample_rate = 1.0;
    TrainReport rep;
    train(ds, geniepath::Params::init(4, 4, 2, 1), cfg, &rep);
    ASSERT_EQ(rep.loss_history.size(), 200u);
    EXPECT_LT(rep.loss_history.back(), rep.loss_history.front());
    EXPECT_EQ(rep.sampled_negative_counts.front(), 5u);
}

TEST(Train, SgdSmallStepDescendsOnFixedBatch) {
    auto ds = tiny_dataset();
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 10;
    cfg.resample_each_epoch = false;
    TrainReport rep;
    train(ds, geniepath::Params::init(4, 4, 2, 2), cfg, &rep);
    for (std::size_t e = 1; e < rep.loss_history.size(); ++e) EXPECT_LE(rep.loss_history[e], rep.loss_history[e - 1]);
}

TEST(Train, DeterministicGivenSeed) {
    auto ds = tiny_dataset();
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 4;
    TrainReport r1, r2;
    const auto a = train(ds, geniepath::Params::init(4, 4, 2, 1), cfg, &r1);
    const auto b = train(ds, geniepath::Params::init(4, 4, 2, 1), cfg, &r2);
    EXPECT_EQ(r1.loss_history, r2.loss_history);
    EXPECT_EQ(a.w_in, b.w_in);
}

TEST(Train, LossInvariantUnderAccountRelabeling) {
    auto ds = tiny_dataset();
    // Same graph with accounts listed in reverse order.
    std::vector<NodeRef> nodes;
    std::vector<std::size_t> map(ds.graph.node_count());
    const auto na = ds.graph.account_count();
    for (std::size_t u = 0; u < ds.graph.node_count(); ++u) map[u] = u < na ? na - 1 - u : u;
    nodes.resize(map.size());
    for (std::size_t u = 0; u < map.size(); ++u) nodes[map[u]] = {map[u], ds.graph.node(u).kind, ds.graph.node(u).external_id};
    std::vector<Edge> edges;
    for (auto [a, b] : ds.graph.edges()) edges.emplace_back(map[a], map[b]);
    LabeledDataset ds2;
    ds2.graph = DeviceSharingGraph::from_edges(nodes, edges);
    ds2.feature_dim = ds.feature_dim;
    for (const auto& [idx, rec] : ds.records) ds2.records.emplace(map[idx], AccountRecord{map[idx], rec.features, rec.tag});
    ds2.split = all_train(ds2.graph);
    const auto params = geniepath::Params::init(4, 4, 2, 6);
    std::vector<std::size_t> pos{0, 2}, neg{5, 7}, pos2, neg2;
    for (auto v : pos) pos2.push_back(map[v]);
    for (auto v : neg) neg2.push_back(map[v]);
    const double l1 = bce_objective(geniepath::forward(params, ds.graph, feature_matrix(ds)), pos, neg).loss;
    const double l2 = bce_objective(geniepath::forward(params, ds2.graph, feature_matrix(ds2)), pos2, neg2).loss;
    EXPECT_NEAR(l1, l2, 1e-12);
}

TEST(Train, ErrorsNameTheProblem) {
    auto ds = tiny_dataset();
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train(ds, geniepath::Params::init(4, 4, 2, 0), cfg), ConfigError);
    cfg.epochs = 3;
    ds.records.at(0).features[1] = std::nan("");
    try {
        train(ds, geniepath::Params::init(4, 4, 2, 0), cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
}

TEST(Train, ReportFileFormat) {
    auto dir = fixture::temp_dir("train_report");
    TrainReport rep{{1.5, 1.25}, {3, 4}};
    write_train_report(rep, (dir / "r.tsv").string());
    EXPECT_EQ(fixture::slurp(dir / "r.tsv"), "epoch\tloss\tn_sampled_neg\n1\t1.5\t3\n2\t1.25\t4\n");
}

TEST(Train, DefaultSyntheticBeatsUntrainedModel) {
    auto syn = generate(SynthConfig{});
    const auto ds = prepare_dataset(syn.dataset, 0.3, 0);
    const auto test = ds.accounts(Split::Test);
    const auto labels = eval::test_labels(ds, eval::LabelSource::Tags);
    GnnConfig cfg;
    const auto untrained = geniepath::Params::init(ds.feature_dim, cfg.hidden_dim, cfg.depth, cfg.init_seed);
    const auto trained = fit_gnn(ds, cfg);
    const double f0 = eval::best_f1_point(score_accounts(untrained, ds, test), labels).f1;
    const double f1 = eval::best_f1_point(score_accounts(trained, ds, test), labels).f1;
    EXPECT_GT(f1, f0);
}
