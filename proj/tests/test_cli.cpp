#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include <ringscan/checkpoint.hpp>
#include <ringscan/features.hpp>
#include <ringscan/gbdt.hpp>

#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out; // stdout and stderr
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(RINGSCAN_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

// Small dataset shared by the train/evaluate tests: generated once.
const fs::path& small_data() {
    static const fs::path dir = [] {
        auto d = fixture::temp_dir("cli_small_data");
        auto r = cli("synth --out " + d.string() + " --seed 3 --regular-accounts 200 --rings 5");
        if (r.code != 0) throw std::runtime_error(r.out);
        return d;
    }();
    return dir;
}

const char* kQuickGnn = " --epochs 30";
const char* kQuickGbdt = " --trees 40";
const char* kQuickN2v = " --trees 40 --walks-per-node 2 --n2v-epochs 1";

} // namespace

TEST(CliSynth, TwiceIsByteIdentical) {
    auto a = fixture::temp_dir("cli_synth_a");
    auto b = fixture::temp_dir("cli_synth_b");
    ASSERT_EQ(cli("synth --seed 7 --regular-accounts 150 --out " + a.string()).code, 0);
    ASSERT_EQ(cli("synth --seed 7 --regular-accounts 150 --out " + b.string()).code, 0);
    for (const char* f : {"graph.tsv", "features.tsv", "ground_truth.tsv", "claims.tsv", "logins.tsv"}) {
        EXPECT_FALSE(fixture::slurp(a / f).empty()) << f;
        EXPECT_EQ(fixture::slurp(a / f), fixture::slurp(b / f)) << f;
    }
}

TEST(CliSynth, MissingOutIsUsageError) {
    auto r = cli("synth --seed 7");
    EXPECT_EQ(r.code, 1);
    EXPECT_TRUE(contains(r.out, "--out")) << r.out;
}

TEST(CliSynth, BadValuesAreUsageErrors) {
    auto d = fixture::temp_dir("cli_synth_bad");
    EXPECT_EQ(cli("synth --out " + d.string() + " --tag-miss-rate 1.5").code, 1);
    EXPECT_EQ(cli("synth --out " + d.string() + " --rings abc").code, 1);
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
}

TEST(CliSynth, PruneDropsSingletonComponents) {
    auto d = fixture::temp_dir("cli_synth_prune");
    ASSERT_EQ(cli("synth --seed 1 --regular-accounts 200 --prune --out " + d.string()).code, 0);
    auto g = ringscan::load_graph((d / "graph.tsv").string());
    EXPECT_EQ(ringscan::prune_singletons(g), g);
    EXPECT_NO_THROW(ringscan::load_dataset(d));
}

TEST(CliBuildGraph, DefaultSynthOutputIsLoadable) {
    auto d = fixture::temp_dir("cli_build_synth");
    ASSERT_EQ(cli("synth --out " + d.string()).code, 0);
    auto r = cli("build-graph --claims " + (d / "claims.tsv").string() + " --logins " + (d / "logins.tsv").string() +
                 " --out " + (d / "rebuilt.tsv").string());
    ASSERT_EQ(r.code, 0) << r.out;
    auto rebuilt = ringscan::load_graph((d / "rebuilt.tsv").string());
    EXPECT_EQ(rebuilt, ringscan::prune_singletons(ringscan::load_graph((d / "graph.tsv").string())));
}

TEST(CliBuildGraph, ToyLogsCountsAndNoPrune) {
    auto d = fixture::temp_dir("cli_build_toy");
    // Reference time defaults to the latest claim + 1 = 10000001.
    // a1,a2 share dev1; a3 alone on dev2; a4's login is older than 40 days; a5 never claimed.
    fixture::write_text(d / "claims.tsv", "a1\t9999000\na2\t9999500\na3\t10000000\na4\t9999999\n");
    fixture::write_text(d / "logins.tsv", "a1\tdev1\t9990000\na2\tdev1\t9995000\na3\tdev2\t9996000\n"
                                          "a4\tdev3\t100\na5\tdev1\t9997000\n");
    auto r = cli("build-graph --claims " + (d / "claims.tsv").string() + " --logins " + (d / "logins.tsv").string() +
                 " --out " + (d / "g.tsv").string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(contains(r.out, "built: accounts 4, devices 2, edges 3")) << r.out;
    EXPECT_TRUE(contains(r.out, "pruned components 2 (accounts 2, devices 1)")) << r.out;
    EXPECT_TRUE(contains(r.out, "graph: accounts 2, devices 1, edges 2")) << r.out;
    auto g = ringscan::load_graph((d / "g.tsv").string());
    EXPECT_EQ(g.node_count(), 3u);

    r = cli("build-graph --no-prune --claims " + (d / "claims.tsv").string() + " --logins " +
            (d / "logins.tsv").string() + " --out " + (d / "g2.tsv").string());
    ASSERT_EQ(r.code, 0);
    EXPECT_FALSE(contains(r.out, "pruned components"));
    EXPECT_EQ(ringscan::load_graph((d / "g2.tsv").string()).node_count(), 6u);
}

TEST(CliBuildGraph, EmptyLogsWarn) {
    auto d = fixture::temp_dir("cli_build_empty");
    fixture::write_text(d / "claims.tsv", "");
    fixture::write_text(d / "logins.tsv", "");
    auto r = cli("build-graph --claims " + (d / "claims.tsv").string() + " --logins " + (d / "logins.tsv").string() +
                 " --out " + (d / "g.tsv").string());
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(contains(r.out, "warning")) << r.out;
    EXPECT_EQ(ringscan::load_graph((d / "g.tsv").string()).node_count(), 0u);
}

TEST(CliBuildGraph, UnreadableInputNamesPath) {
    auto d = fixture::temp_dir("cli_build_missing");
    auto r = cli("build-graph --claims " + (d / "nope.tsv").string() + " --logins " + (d / "nope2.tsv").string() +
                 " --out " + (d / "g.tsv").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(contains(r.out, "nope.tsv")) << r.out;
}

TEST(CliTrain, GnnLossDecreasesAndIsDeterministic) {
    auto a = fixture::temp_dir("cli_train_gnn_a");
    auto b = fixture::temp_dir("cli_train_gnn_b");
    const std::string base = "train gnn --seed 1 --data " + small_data().string() + kQuickGnn;
    auto r = cli(base + " --checkpoint-every 10 --out " + a.string());
    ASSERT_EQ(r.code, 0) << r.out;
    ASSERT_EQ(cli(base + " --out " + b.string()).code, 0);
    EXPECT_EQ(fixture::slurp(a / "gnn.ckpt"), fixture::slurp(b / "gnn.ckpt"));
    EXPECT_EQ(fixture::slurp(a / "gnn_train_report.tsv"), fixture::slurp(b / "gnn_train_report.tsv"));
    EXPECT_TRUE(fs::exists(a / "gnn_epoch10.ckpt"));
    EXPECT_TRUE(fs::exists(a / "gnn_epoch30.ckpt"));
    EXPECT_EQ(fixture::slurp(a / "gnn_epoch30.ckpt"), fixture::slurp(a / "gnn.ckpt"));

    std::istringstream rep(fixture::slurp(a / "gnn_train_report.tsv"));
    std::string line;
    std::getline(rep, line);
    EXPECT_EQ(line, "epoch\tloss\tn_sampled_neg");
    std::vector<double> losses;
    while (std::getline(rep, line)) losses.push_back(std::stod(line.substr(line.find('\t') + 1)));
    ASSERT_EQ(losses.size(), 30u);
    EXPECT_LT(losses.back(), losses.front());
    EXPECT_NO_THROW(ringscan::geniepath::load_checkpoint((a / "gnn.ckpt").string()));
}

TEST(CliTrain, GbdtEchoesDefaults) {
    auto d = fixture::temp_dir("cli_train_gbdt");
    auto r = cli("train gbdt --data " + small_data().string() + " --out " + d.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(contains(r.out, "500 trees, depth 5, row 0.6, feat 0.7, lr 0.009")) << r.out;
    EXPECT_EQ(ringscan::gbdt::load_model((d / "gbdt.model").string()).trees.size(), 500u);
}

TEST(CliTrain, InvalidModelIsUsageError) {
    auto d = fixture::temp_dir("cli_train_bad");
    EXPECT_EQ(cli("train svm --data " + small_data().string() + " --out " + d.string()).code, 1);
}

TEST(CliTrain, ConflictingSplitInSameDirectoryRejected) {
    auto d = fixture::temp_dir("cli_train_split");
    ASSERT_EQ(cli("train gbdt --seed 1 --data " + small_data().string() + kQuickGbdt + " --out " + d.string()).code, 0);
    auto r = cli("train gbdt --seed 2 --data " + small_data().string() + kQuickGbdt + " --out " + d.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(contains(r.out, "split")) << r.out;
}

TEST(CliEvaluate, ThreeRowsAuditAndDeterminism) {
    auto m = fixture::temp_dir("cli_eval_models");
    const std::string data = " --data " + small_data().string() + " --out " + m.string();
    ASSERT_EQ(cli("train gnn" + data + kQuickGnn).code, 0);
    ASSERT_EQ(cli("train gbdt" + data + kQuickGbdt).code, 0);
    auto n2v = cli("train node2vec-gbdt" + data + kQuickN2v);
    ASSERT_EQ(n2v.code, 0) << n2v.out;
    EXPECT_TRUE(fs::exists(m / "embeddings.tsv"));

    auto o1 = fixture::temp_dir("cli_eval_out1");
    auto o2 = fixture::temp_dir("cli_eval_out2");
    const std::string base = "evaluate --data " + small_data().string() + " --models " + m.string();
    auto r = cli(base + " --out " + o1.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto report = fixture::slurp(o1 / "report.tsv");
    EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 4) << report;
    EXPECT_EQ(report.rfind("model\tthreshold\tprecision\trecall\tf1\tde\n", 0), 0u);
    EXPECT_TRUE(contains(report, "\ngnn\t"));
    EXPECT_TRUE(contains(report, "\ngbdt\t"));
    EXPECT_TRUE(contains(report, "\nnode2vec-gbdt\t"));
    EXPECT_TRUE(contains(fixture::slurp(o1 / "pr_curve.tsv"), "model\tthreshold\tprecision\trecall\n"));
    EXPECT_TRUE(contains(fixture::slurp(o1 / "hop_histograms.tsv"), "fraudulent\taccounts\t2\t"));

    auto g = cli(base + " --labels ground-truth --out " + o2.string());
    ASSERT_EQ(g.code, 0) << g.out;
    EXPECT_TRUE(contains(g.out, "audit: ")) << g.out;
    EXPECT_TRUE(contains(g.out, "disagrees with ground truth"));

    auto o3 = fixture::temp_dir("cli_eval_out3");
    ASSERT_EQ(cli(base + " --out " + o3.string()).code, 0);
    for (const char* f : {"report.tsv", "pr_curve.tsv", "hop_histograms.tsv"})
        EXPECT_EQ(fixture::slurp(o1 / f), fixture::slurp(o3 / f)) << f;
}

TEST(CliEvaluate, MissingModelWarnsAndExitsZero) {
    auto m = fixture::temp_dir("cli_eval_partial");
    ASSERT_EQ(cli("train gbdt --data " + small_data().string() + kQuickGbdt + " --out " + m.string()).code, 0);
    auto o = fixture::temp_dir("cli_eval_partial_out");
    auto r = cli("evaluate --data " + small_data().string() + " --models " + m.string() + " --out " + o.string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(contains(r.out, "warning: model 'gnn' missing")) << r.out;
    const auto report = fixture::slurp(o / "report.tsv");
    EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 2);
}

TEST(CliEvaluate, ShapeMismatchNamesShapes) {
    auto m = fixture::temp_dir("cli_eval_shape");
    ASSERT_EQ(cli("train gbdt --data " + small_data().string() + kQuickGbdt + " --out " + m.string()).code, 0);
    // A checkpoint for 5 input features against a 12-feature dataset.
    ringscan::geniepath::save_checkpoint(ringscan::geniepath::Params::init(5, 4, 2, 0), (m / "gnn.ckpt").string());
    auto o = fixture::temp_dir("cli_eval_shape_out");
    auto r = cli("evaluate --data " + small_data().string() + " --models " + m.string() + " --out " + o.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(contains(r.out, "12x")) << r.out;
    EXPECT_TRUE(contains(r.out, "5x")) << r.out;
}

TEST(CliGradCheck, DefaultsPassQuickly) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = cli("grad-check");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(contains(r.out, "max relative error")) << r.out;
    EXPECT_LT(secs, 10.0);
}

TEST(CliGradCheck, CorruptFails) {
    auto r = cli("grad-check --corrupt ws");
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_TRUE(contains(r.out, "w_s")) << r.out;
}

TEST(CliGradCheck, LargeEpsStillReported) {
    auto r = cli("grad-check --eps 1e-3");
    EXPECT_TRUE(r.code == 0 || r.code == 3) << r.out;
    const auto pos = r.out.find("max relative error ");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_TRUE(std::isfinite(std::stod(r.out.substr(pos + 19))));
}

TEST(CliExportDot, RedHighRiskNode) {
    auto d = fixture::temp_dir("cli_dot");
    auto ds = fixture::dataset(fixture::graph({"acc1", "acc2"}, {"dev1"}, {{"acc1", "dev1"}, {"acc2", "dev1"}}), 1, {0}, 0);
    ringscan::save_dataset(ds, d);
    auto r = cli("export-dot --graph " + (d / "graph.tsv").string() + " --features " + (d / "features.tsv").string() +
                 " --out " + (d / "g.dot").string());
    ASSERT_EQ(r.code, 0) << r.out;
    const auto dot = fixture::slurp(d / "g.dot");
    EXPECT_TRUE(contains(dot, "red")) << dot;
    EXPECT_EQ(std::count(dot.begin(), dot.end(), '-'), 4) << dot; // two "--" edges
    ASSERT_EQ(cli("export-dot --graph " + (d / "graph.tsv").string() + " --out " + (d / "h.dot").string()).code, 0);
    EXPECT_FALSE(contains(fixture::slurp(d / "h.dot"), "red"));
}

TEST(CliConfig, FileValuesAndFlagOverride) {
    auto d = fixture::temp_dir("cli_config");
    fixture::write_text(d / "c.json", R"({"synth": {"seed": 7, "regular-accounts": 120, "rings": 3, "ring-size": [4, 6]}})");
    auto a = d / "a";
    auto b = d / "b";
    auto c = d / "c";
    ASSERT_EQ(cli("--config " + (d / "c.json").string() + " synth --out " + a.string()).code, 0);
    ASSERT_EQ(cli("synth --seed 7 --regular-accounts 120 --rings 3 --ring-size 4 6 --out " + b.string()).code, 0);
    EXPECT_EQ(fixture::slurp(a / "graph.tsv"), fixture::slurp(b / "graph.tsv"));
    ASSERT_EQ(cli("synth --config " + (d / "c.json").string() + " --rings 4 --out " + c.string()).code, 0);
    EXPECT_NE(fixture::slurp(a / "graph.tsv"), fixture::slurp(c / "graph.tsv"));
    auto direct = d / "direct";
    ASSERT_EQ(cli("synth --seed 7 --regular-accounts 120 --rings 4 --ring-size 4 6 --out " + direct.string()).code, 0);
    EXPECT_EQ(fixture::slurp(c / "graph.tsv"), fixture::slurp(direct / "graph.tsv"));
}

TEST(CliConfig, RepositoryDefaultsFileMatchesBuiltIns) {
    const fs::path cfg = fs::path(RINGSCAN_SOURCE_DIR) / "configs" / "default.json";
    ASSERT_TRUE(fs::exists(cfg));
    auto d = fixture::temp_dir("cli_config_defaults");
    ASSERT_EQ(cli("--config " + cfg.string() + " synth --regular-accounts 100 --out " + (d / "a").string()).code, 0);
    ASSERT_EQ(cli("synth --regular-accounts 100 --out " + (d / "b").string()).code, 0);
    EXPECT_EQ(fixture::slurp(d / "a" / "features.tsv"), fixture::slurp(d / "b" / "features.tsv"));
    auto r = cli("--config " + cfg.string() + " grad-check");
    EXPECT_EQ(r.code, 0) << r.out;
}

TEST(CliConfig, BadConfigIsUsageError) {
    auto d = fixture::temp_dir("cli_config_bad");
    fixture::write_text(d / "c.json", "{not json");
    EXPECT_EQ(cli("--config " + (d / "c.json").string() + " grad-check").code, 1);
    fixture::write_text(d / "u.json", R"({"synth": {"no-such-flag": 1}})");
    EXPECT_EQ(cli("--config " + (d / "u.json").string() + " synth --out " + d.string()).code, 1);
}

TEST(CliHelp, ListsDefaults) {
    auto r = cli("train --help");
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(contains(r.out, "500")) << r.out;
    EXPECT_TRUE(contains(r.out, "0.009")) << r.out;
    EXPECT_TRUE(contains(r.out, "0.25")) << r.out;
    auto s = cli("synth --help");
    EXPECT_TRUE(contains(s.out, "2000")) << s.out;
    auto g = cli("grad-check --help");
    EXPECT_FALSE(contains(g.out, "--corrupt")) << g.out;
}
