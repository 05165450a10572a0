// ringscan: synth, build-graph, train, evaluate, grad-check, export-dot.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <ringscan/checkpoint.hpp>
#include <ringscan/dot.hpp>
#include <ringscan/events.hpp>
#include <ringscan/gradient_check.hpp>
#include <ringscan/graph_io.hpp>
#include <ringscan/pipelines.hpp>
#include <ringscan/synth.hpp>

namespace fs = std::filesystem;
using namespace ringscan;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

constexpr double kGradCheckTolerance = 1e-4;

namespace files {
constexpr const char* split = "split.tsv";
constexpr const char* gnn = "gnn.ckpt";
constexpr const char* gnn_report = "gnn_train_report.tsv";
constexpr const char* gbdt = "gbdt.model";
constexpr const char* n2v_gbdt = "node2vec_gbdt.model";
constexpr const char* embeddings = "embeddings.tsv";
constexpr const char* report = "report.tsv";
constexpr const char* pr_curve = "pr_curve.tsv";
constexpr const char* hops = "hop_histograms.tsv";
} // namespace files

std::string fmt(double v, int digits = 6) { return tsv::format_sig(v, digits); }

void write_stream(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    auto out = tsv::open_out(path.string());
    body(out);
    if (!out) throw IoError("write failed: " + path.string());
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    std::string out;
    bool prune = false;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    auto* c = app.add_subcommand("synth", "Generate a synthetic claims dataset with planted fraud rings");
    c->add_option("--out", a.out, "Output directory")->required();
    c->add_option("--seed", a.cfg.seed, "Random seed");
    c->add_option("--regular-accounts", a.cfg.n_regular_accounts, "Number of regular accounts");
    c->add_option("--rings", a.cfg.n_rings, "Number of fraud rings");
    c->add_option("--ring-size", a.cfg.ring_size_range, "Accounts per ring (min max)");
    c->add_option("--devices-per-ring", a.cfg.devices_per_ring_range, "Shared devices per ring (min max)");
    c->add_option("--regular-devices", a.cfg.regular_devices_per_account_range, "Devices per regular account (min max)");
    c->add_option("--family-share", a.cfg.family_share_prob, "Probability a regular account shares a device");
    c->add_option("--tag-miss-rate", a.cfg.tag_miss_rate, "Probability a ring member is left untagged");
    c->add_option("--feature-dim", a.cfg.feature_dim, "Feature columns per account");
    c->add_option("--fraud-shift", a.cfg.fraud_feature_shift, "Mean shift of fraud accounts on the shifted columns");
    c->add_option("--ring-offset-scale", a.cfg.ring_offset_scale, "Std of the per-ring feature offset");
    c->add_flag("--prune", a.prune, "Drop components with fewer than two accounts before writing");
}

int run_synth(const SynthArgs& a) {
    auto r = generate(a.cfg);
    if (a.prune) r.dataset = restrict_to_graph(r.dataset, prune_singletons(r.dataset.graph));
    emit(r, a.out);
    const auto& g = r.dataset.graph;
    std::size_t fraud = 0;
    for (const auto& [idx, y] : *r.dataset.ground_truth) fraud += y ? 1 : 0;
    std::cout << "accounts " << g.account_count() << " (fraudulent " << fraud << ", tagged high-risk "
              << r.dataset.tagged(RiskTag::HighRisk).size() << "), devices " << g.device_count() << ", edges "
              << g.edge_count() << "\n";
    std::cout << "claims " << r.claims.size() << ", logins " << r.logins.size() << ", singleton-component accounts "
              << (a.prune ? 0 : r.prunable_accounts) << "\n";
    std::cout << "wrote " << a.out << "\n";
    return kOk;
}

// --- build-graph -----------------------------------------------------------

struct BuildArgs {
    std::string claims, logins, out;
    std::optional<std::int64_t> reference_time;
    WindowConfig window;
    bool no_prune = false;
};

void add_build(CLI::App& app, BuildArgs& a) {
    auto* c = app.add_subcommand("build-graph", "Build the account/device graph from claim and login logs");
    c->add_option("--claims", a.claims, "Claims TSV (account_id, timestamp)")->required();
    c->add_option("--logins", a.logins, "Logins TSV (account_id, device_umid, timestamp)")->required();
    c->add_option("--out", a.out, "Output graph file")->required();
    c->add_option("--reference-time", a.reference_time, "Window end, unix seconds (default: latest claim + 1)");
    c->add_option("--claim-window-days", a.window.claim_window_days, "Claim window length in days");
    c->add_option("--device-window-days", a.window.device_window_days, "Device window length in days");
    c->add_flag("--no-prune", a.no_prune, "Keep components with fewer than two accounts");
}

int run_build(BuildArgs a) {
    const auto claims = read_claims(a.claims);
    const auto logins = read_logins(a.logins);
    if (a.reference_time) {
        a.window.reference_time = *a.reference_time;
    } else {
        std::int64_t latest = -1;
        for (const auto& c : claims) latest = std::max(latest, c.timestamp);
        a.window.reference_time = latest + 1;
    }
    auto g = build_graph(claims, logins, a.window);
    std::cout << "built: accounts " << g.account_count() << ", devices " << g.device_count() << ", edges "
              << g.edge_count() << "\n";
    if (!a.no_prune) {
        auto pr = prune_singletons_detailed(g);
        std::cout << "pruned components " << pr.removed_components << " (accounts " << pr.removed_accounts
                  << ", devices " << pr.removed_devices << ")\n";
        g = std::move(pr.graph);
    }
    std::cout << "graph: accounts " << g.account_count() << ", devices " << g.device_count() << ", edges "
              << g.edge_count() << "\n";
    if (g.node_count() == 0) std::cerr << "warning: graph is empty\n";
    save_graph(g, a.out);
    std::cout << "wrote " << a.out << "\n";
    return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string model, data, out;
    std::uint64_t seed = 0;
    ComparisonConfig cc;
    int checkpoint_every = 0;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* c = app.add_subcommand("train", "Train one model: gnn, gbdt or node2vec-gbdt");
    c->add_option("model", a.model, "Model to train")
        ->required()
        ->check(CLI::IsMember({kModelGnn, kModelGbdt, kModelNode2vecGbdt}));
    c->add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    c->add_option("--out", a.out, "Model directory")->required();
    c->add_option("--seed", a.seed, "Run seed (split, init, sampling)");
    c->add_option("--test-fraction", a.cc.test_fraction, "Fraction of each tag class held out for Test");
    c->add_option("--negative-rate", a.cc.negative_rate, "Fraction of NoObservableRisk Train accounts sampled as negatives");

    auto& gnn = a.cc.gnn;
    c->add_option("--hidden", gnn.hidden_dim, "GNN hidden width K")->group("GNN");
    c->add_option("--depth", gnn.depth, "GNN layers T")->group("GNN");
    c->add_option("--epochs", gnn.train.epochs, "GNN epochs")->group("GNN");
    c->add_option("--lr", gnn.train.learning_rate, "GNN Adam learning rate")->group("GNN");
    c->add_option("--checkpoint-every", a.checkpoint_every, "Also write gnn_epoch<N>.ckpt every N epochs (0 = off)")
        ->group("GNN");

    auto& gb = a.cc.gbdt;
    c->add_option("--trees", gb.n_trees, "GBDT rounds")->group("GBDT");
    c->add_option("--max-depth", gb.max_depth, "GBDT tree depth")->group("GBDT");
    c->add_option("--row-rate", gb.row_sample_rate, "GBDT row sampling rate")->group("GBDT");
    c->add_option("--feature-rate", gb.feature_sample_rate, "GBDT feature sampling rate")->group("GBDT");
    c->add_option("--gbdt-lr", gb.learning_rate, "GBDT shrinkage")->group("GBDT");
    c->add_option("--min-leaf", gb.min_samples_leaf, "GBDT minimum rows per leaf")->group("GBDT");

    auto& nv = a.cc.node2vec;
    c->add_option("--dimensions", nv.dimensions, "Embedding size")->group("node2vec");
    c->add_option("--walk-length", nv.walk_length, "Nodes per walk")->group("node2vec");
    c->add_option("--walks-per-node", nv.walks_per_node, "Walks started at every node")->group("node2vec");
    c->add_option("--window", nv.window, "Skip-gram window")->group("node2vec");
    c->add_option("--p", nv.return_param, "Return parameter")->group("node2vec");
    c->add_option("--q", nv.inout_param, "In-out parameter")->group("node2vec");
    c->add_option("--negatives", nv.negative_samples, "Negative samples per pair")->group("node2vec");
    c->add_option("--n2v-epochs", nv.epochs, "Passes over the walks")->group("node2vec");
    c->add_option("--n2v-step", nv.initial_step, "Initial SGD step")->group("node2vec");
}

/// Splits with the run seed; a model directory keeps one split for all its models.
LabeledDataset split_for_training(LabeledDataset raw, const TrainArgs& a) {
    auto ds = split_train_test(std::move(raw), a.cc.test_fraction, a.seed);
    const auto path = fs::path(a.out) / files::split;
    if (fs::exists(path)) {
        if (load_split(path.string(), ds.graph) != ds.split) {
            throw ValidationError(path.string() + " holds a different Train/Test split (other seed or "
                                  "--test-fraction); use a fresh --out directory");
        }
    } else {
        save_split(ds, path.string());
    }
    return normalize_features(std::move(ds));
}

int run_train(TrainArgs a) {
    a.cc.reseed(a.seed);
    fs::create_directories(a.out);
    const auto ds = split_for_training(load_dataset(a.data), a);
    const fs::path out(a.out);
    std::cout << "train accounts " << ds.accounts(Split::Train).size() << " (high-risk "
              << ds.tagged(RiskTag::HighRisk, Split::Train).size() << "), test accounts "
              << ds.accounts(Split::Test).size() << "\n";

    if (a.model == kModelGnn) {
        auto gnn = a.cc.gnn;
        gnn.train.negative_sample_rate = a.cc.negative_rate;
        std::cout << "gnn: hidden " << gnn.hidden_dim << ", depth " << gnn.depth << ", epochs " << gnn.train.epochs
                  << ", lr " << gnn.train.learning_rate << ", negative rate " << gnn.train.negative_sample_rate << "\n";
        TrainReport rep;
        EpochCallback cb;
        if (a.checkpoint_every > 0) {
            cb = [&](int epoch, const geniepath::Params& p) {
                if (epoch % a.checkpoint_every == 0) {
                    geniepath::save_checkpoint(p, (out / ("gnn_epoch" + std::to_string(epoch) + ".ckpt")).string());
                }
            };
        }
        const auto params = fit_gnn(ds, gnn, &rep, cb);
        geniepath::save_checkpoint(params, (out / files::gnn).string());
        write_train_report(rep, (out / files::gnn_report).string());
        std::cout << "loss: epoch 1 " << fmt(rep.loss_history.front()) << ", epoch " << rep.loss_history.size() << " "
                  << fmt(rep.loss_history.back()) << "\n";
        std::cout << "wrote " << (out / files::gnn).string() << "\n";
    } else if (a.model == kModelGbdt) {
        std::cout << "gbdt: " << a.cc.gbdt.summary() << "\n";
        std::vector<double> trace;
        const auto m = fit_feature_gbdt(ds, a.cc.negative_rate, a.cc.gbdt, &trace);
        gbdt::save_model(m, (out / files::gbdt).string());
        std::cout << "training loss: start " << fmt(trace.front()) << ", end " << fmt(trace.back()) << "\n";
        std::cout << "wrote " << (out / files::gbdt).string() << "\n";
    } else {
        const auto& nv = a.cc.node2vec;
        std::cout << "node2vec: dimensions " << nv.dimensions << ", walk length " << nv.walk_length << ", walks/node "
                  << nv.walks_per_node << ", window " << nv.window << ", p " << nv.return_param << ", q "
                  << nv.inout_param << "\n";
        std::cout << "gbdt: " << a.cc.gbdt.summary() << "\n";
        const auto m = embed_concat_fit(ds, nv, a.cc.gbdt, a.cc.negative_rate);
        node2vec::save_embeddings(m.embeddings, ds.graph, (out / files::embeddings).string());
        gbdt::save_model(m.classifier, (out / files::n2v_gbdt).string());
        std::cout << "embedding loss: epoch 1 " << fmt(m.embeddings.epoch_loss.front()) << ", epoch "
                  << m.embeddings.epoch_loss.size() << " " << fmt(m.embeddings.epoch_loss.back()) << "\n";
        std::cout << "wrote " << (out / files::n2v_gbdt).string() << "\n";
    }
    return kOk;
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
    std::string data, models, out, labels = "tags";
};

void add_evaluate(CLI::App& app, EvalArgs& a) {
    auto* c = app.add_subcommand("evaluate", "Score the Test split with every trained model and compare");
    c->add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    c->add_option("--models", a.models, "Model directory written by train")->required()->check(CLI::ExistingDirectory);
    c->add_option("--labels", a.labels, "Evaluation labels")->check(CLI::IsMember({"tags", "ground-truth"}));
    c->add_option("--out", a.out, "Report directory")->required();
}

int run_evaluate(const EvalArgs& a) {
    const fs::path models(a.models);
    auto raw = load_dataset(a.data);
    const auto split_path = models / files::split;
    if (!fs::exists(split_path)) throw ValidationError("no " + split_path.string() + "; run train first");
    raw.split = load_split(split_path.string(), raw.graph);
    const auto ds = normalize_features(std::move(raw));
    const auto test = ds.accounts(Split::Test);

    eval::ModelScores scores;
    const auto gnn_path = models / files::gnn;
    scores.emplace_back(kModelGnn, fs::exists(gnn_path)
                                       ? std::optional(score_accounts(geniepath::load_checkpoint(gnn_path.string()), ds, test))
                                       : std::nullopt);
    const auto gbdt_path = models / files::gbdt;
    scores.emplace_back(kModelGbdt, fs::exists(gbdt_path)
                                        ? std::optional(score_feature_gbdt(gbdt::load_model(gbdt_path.string()), ds, test))
                                        : std::nullopt);
    const auto n2v_path = models / files::n2v_gbdt;
    const auto emb_path = models / files::embeddings;
    std::optional<eval::Scores> n2v;
    if (fs::exists(n2v_path) && fs::exists(emb_path)) {
        EmbeddingModel m{node2vec::load_embeddings(emb_path.string(), ds.graph), gbdt::load_model(n2v_path.string())};
        n2v = score_embedding_model(m, ds, test);
    }
    scores.emplace_back(kModelNode2vecGbdt, std::move(n2v));

    const auto source = a.labels == "tags" ? eval::LabelSource::Tags : eval::LabelSource::GroundTruth;
    const auto report = eval::compare_models(ds, scores, source);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

    const fs::path out(a.out);
    fs::create_directories(out);
    write_stream(out / files::report, [&](std::ostream& s) { eval::write_report(report, s); });
    write_stream(out / files::pr_curve, [&](std::ostream& s) { eval::write_pr_curves(report, s); });
    write_stream(out / files::hops, [&](std::ostream& s) { eval::write_hop_histograms(report, s); });

    std::cout << "labels: " << a.labels << ", test accounts " << report.evaluated_accounts << "\n";
    if (report.tag_truth_disagreements) {
        std::cout << "audit: " << *report.tag_truth_disagreements << " of " << report.evaluated_accounts
                  << " test accounts have a rule tag that disagrees with ground truth\n";
    }
    eval::write_report(report, std::cout);
    std::cout << "wrote " << (out / files::report).string() << "\n";
    return kOk;
}

// --- grad-check ------------------------------------------------------------

struct GradArgs {
    std::size_t hidden = 4, depth = 2, nodes = 12, features = 3;
    std::uint64_t seed = 1;
    double eps = 1e-5;
    std::string corrupt;
};

void add_grad_check(CLI::App& app, GradArgs& a) {
    auto* c = app.add_subcommand("grad-check", "Compare analytic GNN gradients with central finite differences");
    c->add_option("--hidden", a.hidden, "Hidden width K");
    c->add_option("--depth", a.depth, "Layers T");
    c->add_option("--nodes", a.nodes, "Nodes in the random graph");
    c->add_option("--features", a.features, "Feature columns");
    c->add_option("--seed", a.seed, "Seed for graph and parameters");
    c->add_option("--eps", a.eps, "Finite-difference step")->check(CLI::PositiveNumber);
    c->add_option("--corrupt", a.corrupt, "")->check(CLI::IsMember({"ws"}))->group("");
}

int run_grad_check(const GradArgs& a) {
    const auto ds = random_check_dataset(a.nodes, a.features, a.seed);
    const auto params = random_check_params(a.features, a.hidden, a.depth, a.seed);
    const auto r = gradient_check(params, ds, a.eps,
                                  a.corrupt == "ws" ? GradientCorruption::ScaleWs : GradientCorruption::None);
    std::cout << "parameters checked " << r.checked << "\n";
    std::cout << "max relative error " << fmt(r.max_relative_error, 6) << " at " << r.worst_parameter << "\n";
    if (!(r.max_relative_error <= kGradCheckTolerance)) {
        std::cout << "FAIL: exceeds " << fmt(kGradCheckTolerance) << "\n";
        return kNumeric;
    }
    std::cout << "OK: within " << fmt(kGradCheckTolerance) << "\n";
    return kOk;
}

// --- export-dot ------------------------------------------------------------

struct DotArgs {
    std::string graph, features, out;
};

void add_export_dot(CLI::App& app, DotArgs& a) {
    auto* c = app.add_subcommand("export-dot", "Write the graph as Graphviz DOT, HighRisk accounts in red");
    c->add_option("--graph", a.graph, "Graph file")->required();
    c->add_option("--features", a.features, "Features file supplying rule tags (optional)");
    c->add_option("--out", a.out, "Output DOT file")->required();
}

int run_export_dot(const DotArgs& a) {
    const auto g = load_graph(a.graph);
    if (a.features.empty()) {
        export_dot(g, nullptr, a.out);
    } else {
        const auto tags = tags_of(load_features(a.features, g));
        export_dot(g, &tags, a.out);
    }
    std::cout << "wrote " << a.out << " (" << g.node_count() << " nodes, " << g.edge_count() << " edges)\n";
    return kOk;
}

// --- JSON config -----------------------------------------------------------

std::vector<std::string> json_to_args(const nlohmann::json& section) {
    std::vector<std::string> args;
    for (const auto& [key, value] : section.items()) {
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_array()) {
            args.push_back(flag);
            for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else if (value.is_string()) {
            args.push_back(flag);
            args.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            args.push_back(flag);
            args.push_back(value.dump());
        } else {
            throw ConfigError("config key '" + key + "' must be a number, string, boolean or array");
        }
    }
    return args;
}

/// Removes --config FILE from argv and splices that file's section for the
/// chosen subcommand in right after the subcommand name, so flags given on
/// the command line come later and win.
std::vector<std::string> expand_config(std::vector<std::string> args, const std::vector<std::string>& commands) {
    std::optional<std::string> path;
    for (std::size_t i = 1; i < args.size();) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    if (!path) return args;
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config file: " + *path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(*path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(*path + ": top level must be an object keyed by command");
    for (const auto& [key, value] : doc.items()) {
        if (std::find(commands.begin(), commands.end(), key) == commands.end()) {
            throw ConfigError(*path + ": unknown command section '" + key + "'");
        }
        if (!value.is_object()) throw ConfigError(*path + ": section '" + key + "' must be an object");
    }
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (std::find(commands.begin(), commands.end(), args[i]) == commands.end()) continue;
        if (!doc.contains(args[i])) break;
        const auto extra = json_to_args(doc[args[i]]);
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(i + 1), extra.begin(), extra.end());
        break;
    }
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fraud-ring detection on account/device graphs"};
    app.name("ringscan");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config; keys are command names, values map flag names to values. "
                                            "Command-line flags override the file.");

    SynthArgs synth;
    BuildArgs build;
    TrainArgs train_args;
    EvalArgs evaluate;
    GradArgs grad;
    DotArgs dot;
    add_synth(app, synth);
    add_build(app, build);
    add_train(app, train_args);
    add_evaluate(app, evaluate);
    add_grad_check(app, grad);
    add_export_dot(app, dot);

    std::vector<std::string> commands;
    for (const auto* sub : app.get_subcommands([](CLI::App*) { return true; })) commands.push_back(sub->get_name());

    try {
        std::vector<std::string> args(argv, argv + argc);
        args = expand_config(std::move(args), commands);
        std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
        app.parse(rest);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }

    try {
        if (app.got_subcommand("synth")) return run_synth(synth);
        if (app.got_subcommand("build-graph")) return run_build(build);
        if (app.got_subcommand("train")) return run_train(train_args);
        if (app.got_subcommand("evaluate")) return run_evaluate(evaluate);
        if (app.got_subcommand("grad-check")) return run_grad_check(grad);
        if (app.got_subcommand("export-dot")) return run_export_dot(dot);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
