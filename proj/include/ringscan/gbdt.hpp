#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "tsv.hpp"

namespace ringscan::gbdt {

struct Config {
    int n_trees = 500;
    int max_depth = 5;
    double row_sample_rate = 0.6;
    double feature_sample_rate = 0.7;
    double learning_rate = 0.009;
    int min_samples_leaf = 5;
    double l2_reg = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
        if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
        if (!(row_sample_rate > 0.0 && row_sample_rate <= 1.0)) throw ConfigError("row_sample_rate must be in (0, 1]");
        if (!(feature_sample_rate > 0.0 && feature_sample_rate <= 1.0)) {
            throw ConfigError("feature_sample_rate must be in (0, 1]");
        }
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
        if (!(l2_reg >= 0.0)) throw ConfigError("l2_reg must be >= 0");
    }

    std::string summary() const {
        std::ostringstream s;
        s << n_trees << " trees, depth " << max_depth << ", row " << row_sample_rate << ", feat "
          << feature_sample_rate << ", lr " << learning_rate;
        return s.str();
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;

    bool is_leaf() const { return feature < 0; }
};

/// Axis-aligned regression tree; nodes stored in preorder, root first.
/// Rows with x[feature] < threshold go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;
    std::vector<int> feature_subset; // features this tree was allowed to split on

    int leaf_of(std::span<const double> x) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return i;
    }
    double predict(std::span<const double> x) const { return nodes[static_cast<std::size_t>(leaf_of(x))].value; }

    int depth() const { return depth_from(0); }

private:
    int depth_from(int i) const {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth_from(n.left), depth_from(n.right));
    }
};

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct Model {
    std::size_t n_features = 0;
    double learning_rate = 0.0;
    double base_score = 0.0; // log-odds of the training positive rate
    std::vector<RegressionTree> trees;

    double raw_score(std::span<const double> x) const {
        if (x.size() != n_features) {
            throw ValidationError("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                                  std::to_string(n_features));
        }
        double s = 0.0;
        for (const auto& t : trees) s += t.predict(x);
        return base_score + learning_rate * s;
    }

    double predict(std::span<const double> x) const { return sigmoid(raw_score(x)); }

    std::vector<double> predict_batch(const std::vector<std::vector<double>>& rows) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(predict(r));
        return out;
    }

    friend bool operator==(const Model& a, const Model& b) {
        if (a.n_features != b.n_features || a.learning_rate != b.learning_rate || a.base_score != b.base_score ||
            a.trees.size() != b.trees.size()) {
            return false;
        }
        for (std::size_t t = 0; t < a.trees.size(); ++t) {
            const auto& x = a.trees[t];
            const auto& y = b.trees[t];
            if (x.feature_subset != y.feature_subset || x.nodes.size() != y.nodes.size()) return false;
            for (std::size_t i = 0; i < x.nodes.size(); ++i) {
                const auto& p = x.nodes[i];
                const auto& q = y.nodes[i];
                if (p.feature != q.feature || p.left != q.left || p.right != q.right ||
                    (p.is_leaf() ? p.value != q.value : p.threshold != q.threshold)) {
                    return false;
                }
            }
        }
        return true;
    }
};

inline double logistic_loss(double raw, int label) {
    // log(1 + exp(-y' f)) with y' in {-1, +1}
    const double m = label ? -raw : raw;
    return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

namespace detail {

struct Builder {
    const std::vector<std::vector<double>>& x;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const Config& cfg;
    const std::vector<int>& features;
    RegressionTree tree;

    int build(std::vector<std::size_t> rows, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const auto min_leaf = static_cast<std::size_t>(cfg.min_samples_leaf);
        if (depth >= cfg.max_depth || rows.size() < 2 * min_leaf) return id;

        double g_total = 0.0, h_total = 0.0;
        for (auto r : rows) {
            g_total += grad[r];
            h_total += hess[r];
        }
        const double parent = g_total * g_total / (h_total + cfg.l2_reg);
        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::size_t> sorted = rows;
        for (int f : features) {
            const auto fi = static_cast<std::size_t>(f);
            std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                return x[a][fi] < x[b][fi] || (x[a][fi] == x[b][fi] && a < b);
            });
            double gl = 0.0, hl = 0.0;
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                gl += grad[sorted[i]];
                hl += hess[sorted[i]];
                const double lo = x[sorted[i]][fi];
                const double hi = x[sorted[i + 1]][fi];
                if (!(lo < hi)) continue;
                if (i + 1 < min_leaf || sorted.size() - i - 1 < min_leaf) continue;
                const double gr = g_total - gl, hr = h_total - hl;
                const double gain = gl * gl / (hl + cfg.l2_reg) + gr * gr / (hr + cfg.l2_reg) - parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = lo + (hi - lo) / 2.0;
                    if (!(lo < best_threshold)) best_threshold = hi;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            (x[r][static_cast<std::size_t>(best_feature)] < best_threshold ? left : right).push_back(r);
        }
        tree.nodes[static_cast<std::size_t>(id)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

} // namespace detail

/// Boosted logistic-loss ensemble. Each round draws a row subsample and a
/// feature subsample, grows a tree greedily on the subsample's
/// gradient/hessian statistics, then sets every leaf to one Newton step over
/// all training rows routed to it. `loss_trace`, when given, receives the
/// mean training loss before the first round and after every round.
inline Model fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const Config& cfg,
                 std::vector<double>* loss_trace = nullptr) {
    cfg.validate();
    if (x.size() != y.size()) throw ValidationError("feature rows and labels differ in length");
    if (x.empty()) throw ValidationError("no training rows");
    const std::size_t n = x.size();
    const std::size_t p = x.front().size();
    if (p == 0) throw ValidationError("training rows have no features");
    for (const auto& row : x) {
        if (row.size() != p) throw ValidationError("ragged feature matrix");
    }
    const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (positives + static_cast<std::size_t>(std::count(y.begin(), y.end(), 0)) != n) {
        throw ValidationError("labels must be 0 or 1");
    }
    if (positives == 0 || positives == n) throw ValidationError("GBDT needs at least one sample of each class");

    Model model;
    model.n_features = p;
    model.learning_rate = cfg.learning_rate;
    const double rate = static_cast<double>(positives) / static_cast<double>(n);
    model.base_score = std::log(rate / (1.0 - rate));

    std::vector<double> raw(n, model.base_score), grad(n), hess(n);
    auto mean_loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += logistic_loss(raw[i], y[i]);
        return s / static_cast<double>(n);
    };
    if (loss_trace) {
        loss_trace->clear();
        loss_trace->push_back(mean_loss());
    }

    std::mt19937_64 rng(cfg.seed);
    const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.row_sample_rate * static_cast<double>(n))));
    const auto n_feats = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.feature_sample_rate * static_cast<double>(p))));
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<int> all_feats(p);
    std::iota(all_feats.begin(), all_feats.end(), 0);

    for (int round = 0; round < cfg.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double prob = sigmoid(raw[i]);
            grad[i] = prob - y[i];
            hess[i] = prob * (1.0 - prob);
        }
        std::shuffle(all_rows.begin(), all_rows.end(), rng);
        std::vector<std::size_t> rows(all_rows.begin(), all_rows.begin() + static_cast<std::ptrdiff_t>(n_rows));
        std::sort(rows.begin(), rows.end());
        std::shuffle(all_feats.begin(), all_feats.end(), rng);
        std::vector<int> feats(all_feats.begin(), all_feats.begin() + static_cast<std::ptrdiff_t>(n_feats));
        std::sort(feats.begin(), feats.end());

        detail::Builder b{x, grad, hess, cfg, feats, {}};
        b.build(std::move(rows), 0);
        auto tree = std::move(b.tree);
        tree.feature_subset = feats;

        std::vector<double> g_leaf(tree.nodes.size(), 0.0), h_leaf(tree.nodes.size(), 0.0);
        std::vector<int> leaf_of(n);
        for (std::size_t i = 0; i < n; ++i) {
            leaf_of[i] = tree.leaf_of(x[i]);
            g_leaf[static_cast<std::size_t>(leaf_of[i])] += grad[i];
            h_leaf[static_cast<std::size_t>(leaf_of[i])] += hess[i];
        }
        for (std::size_t j = 0; j < tree.nodes.size(); ++j) {
            if (tree.nodes[j].is_leaf()) tree.nodes[j].value = -g_leaf[j] / (h_leaf[j] + cfg.l2_reg);
        }
        for (std::size_t i = 0; i < n; ++i) {
            raw[i] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(leaf_of[i])].value;
        }
        model.trees.push_back(std::move(tree));
        if (loss_trace) loss_trace->push_back(mean_loss());
    }
    return model;
}

// Model file:
//
//   ringscan-gbdt 1
//   n_features <P>
//   learning_rate <lr>
//   base_score <f>
//   n_trees <N>
//   tree <i> <comma separated feature subset>
//   split <feature> <threshold>     (preorder; left subtree then right)
//   leaf <value>
//   ...
//   end

inline constexpr const char* kModelMagic = "ringscan-gbdt";

inline void write_model(const Model& m, std::ostream& out) {
    out << kModelMagic << " 1\n";
    out << "n_features " << m.n_features << '\n';
    out << "learning_rate " << tsv::format_exact(m.learning_rate) << '\n';
    out << "base_score " << tsv::format_exact(m.base_score) << '\n';
    out << "n_trees " << m.trees.size() << '\n';
    for (std::size_t t = 0; t < m.trees.size(); ++t) {
        const auto& tree = m.trees[t];
        out << "tree " << t << ' ';
        for (std::size_t i = 0; i < tree.feature_subset.size(); ++i) out << (i ? "," : "") << tree.feature_subset[i];
        out << '\n';
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const auto& node = tree.nodes[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            if (node.is_leaf()) {
                out << "leaf " << tsv::format_exact(node.value) << '\n';
            } else {
                out << "split " << node.feature << ' ' << tsv::format_exact(node.threshold) << '\n';
                stack.push_back(node.right);
                stack.push_back(node.left);
            }
        }
    }
    out << "end\n";
}

inline void save_model(const Model& m, const std::string& path) {
    auto out = tsv::open_out(path);
    write_model(m, out);
    if (!out) throw IoError("write failed: " + path);
}

inline Model load_model(const std::string& path) {
    auto in = tsv::open_in(path);
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() {
        if (!std::getline(in, line)) throw ParseError(path + ": unexpected end of model after line " + std::to_string(line_no));
        ++line_no;
        tsv::strip_cr(line);
        return tsv::split(line, ' ');
    };
    auto expect = [&](const char* key) {
        const auto w = next();
        if (w.size() != 2 || w[0] != key) throw ParseError(tsv::where(path, line_no) + ": expected '" + key + " <value>'");
        return w[1];
    };
    {
        const auto w = next();
        if (w.size() != 2 || w[0] != kModelMagic || w[1] != "1") throw ParseError(tsv::where(path, line_no) + ": not a GBDT model file");
    }
    Model m;
    m.n_features = tsv::parse_int<std::size_t>(expect("n_features"), path, line_no);
    m.learning_rate = tsv::parse_real(expect("learning_rate"), path, line_no);
    m.base_score = tsv::parse_real(expect("base_score"), path, line_no);
    const auto n_trees = tsv::parse_int<std::size_t>(expect("n_trees"), path, line_no);

    for (std::size_t t = 0; t < n_trees; ++t) {
        const auto hdr = next();
        if (hdr.size() != 3 || hdr[0] != "tree") throw ParseError(tsv::where(path, line_no) + ": expected 'tree <i> <features>'");
        RegressionTree tree;
        for (auto f : tsv::split(hdr[2], ',')) {
            const auto feature = tsv::parse_int<int>(f, path, line_no);
            if (feature < 0 || static_cast<std::size_t>(feature) >= m.n_features) {
                throw ValidationError(tsv::where(path, line_no) + ": feature index out of range");
            }
            tree.feature_subset.push_back(feature);
        }
        // Preorder decode: each open split waits for its left, then right child.
        struct Pending { int node; bool left_done; };
        std::vector<Pending> open;
        do {
            const auto w = next();
            TreeNode node;
            if (w.size() == 2 && w[0] == "leaf") {
                node.value = tsv::parse_real(w[1], path, line_no);
            } else if (w.size() == 3 && w[0] == "split") {
                node.feature = tsv::parse_int<int>(w[1], path, line_no);
                node.threshold = tsv::parse_real(w[2], path, line_no);
                if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= m.n_features) {
                    throw ValidationError(tsv::where(path, line_no) + ": split feature out of range");
                }
            } else {
                throw ParseError(tsv::where(path, line_no) + ": expected 'split <f> <t>' or 'leaf <v>'");
            }
            const int id = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(node);
            if (!open.empty()) {
                auto& parent = open.back();
                auto& pn = tree.nodes[static_cast<std::size_t>(parent.node)];
                if (!parent.left_done) {
                    pn.left = id;
                    parent.left_done = true;
                } else {
                    pn.right = id;
                    open.pop_back();
                }
            }
            if (!node.is_leaf()) open.push_back({id, false});
        } while (!open.empty());
        m.trees.push_back(std::move(tree));
    }
    if (next() != std::vector<std::string_view>{"end"}) throw ParseError(tsv::where(path, line_no) + ": expected 'end'");
    return m;
}

} // namespace ringscan::gbdt
