#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "graph.hpp"
#include "tsv.hpp"

namespace ringscan::node2vec {

struct Config {
    int dimensions = 16;
    int walk_length = 20;
    int walks_per_node = 10;
    int window = 5;
    double return_param = 1.0; // p
    double inout_param = 1.0;  // q
    int negative_samples = 5;
    int epochs = 3;
    double initial_step = 0.025;
    std::uint64_t seed = 0;

    void validate() const {
        if (dimensions < 1 || walk_length < 1 || walks_per_node < 1 || window < 1 || negative_samples < 1 ||
            epochs < 1) {
            throw ConfigError("node2vec dimensions, walk_length, walks_per_node, window, negative_samples and "
                              "epochs must all be positive");
        }
        if (!(return_param > 0.0) || !(inout_param > 0.0) || !(initial_step > 0.0)) {
            throw ConfigError("node2vec p, q and initial step must be positive");
        }
    }
};

/// Walker/Vose alias table: O(1) draws from a fixed discrete distribution.
class AliasTable {
public:
    AliasTable() = default;

    explicit AliasTable(std::span<const double> weights) {
        const std::size_t n = weights.size();
        if (n == 0) return;
        double total = 0.0;
        for (double w : weights) total += w;
        prob_.resize(n);
        alias_.assign(n, 0);
        std::vector<double> scaled(n);
        std::vector<std::size_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = weights[i] * static_cast<double>(n) / total;
            (scaled[i] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            const auto s = small.back();
            small.pop_back();
            const auto l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (auto i : large) prob_[i] = 1.0;
        for (auto i : small) prob_[i] = 1.0;
    }

    std::size_t size() const { return prob_.size(); }

    template <class Rng>
    std::size_t sample(Rng& rng) const {
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, prob_.size() - 1)(rng);
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob_[i] ? i : alias_[i];
    }

private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

/// Unnormalized second-order weight of stepping v -> x after arriving from t.
inline double transition_weight(const AdjacencyView& adj, std::size_t t, std::size_t x, double p, double q) {
    if (x == t) return 1.0 / p;
    const auto nt = adj[t];
    if (std::find(nt.begin(), nt.end(), x) != nt.end()) return 1.0;
    return 1.0 / q;
}

/// One alias table per directed edge (t -> v) over the neighbors of v.
class TransitionSampler {
public:
    TransitionSampler(const AdjacencyView& adj, double p, double q) : adj_(adj) {
        tables_.resize(adj.neighbors.size());
        std::vector<double> w;
        for (std::size_t t = 0; t < adj.node_count(); ++t) {
            const auto nt = adj[t];
            for (std::size_t e = 0; e < nt.size(); ++e) {
                const auto v = nt[e];
                w.clear();
                for (auto x : adj[v]) w.push_back(transition_weight(adj, t, x, p, q));
                tables_[adj.offsets[t] + e] = AliasTable(w);
            }
        }
    }

    template <class Rng>
    std::size_t next(std::size_t t, std::size_t v, Rng& rng) const {
        const auto nt = adj_[t];
        const auto e = static_cast<std::size_t>(std::find(nt.begin(), nt.end(), v) - nt.begin());
        return adj_[v][tables_[adj_.offsets[t] + e].sample(rng)];
    }

private:
    AdjacencyView adj_;
    std::vector<AliasTable> tables_;
};

using Walk = std::vector<std::size_t>;

/// walks_per_node passes; each pass starts one walk at every node in index
/// order. Walks hold at most walk_length nodes and stop early at a node with
/// no neighbors.
inline std::vector<Walk> biased_walks(const AdjacencyView& adj, const Config& cfg) {
    cfg.validate();
    const auto n = adj.node_count();
    TransitionSampler sampler(adj, cfg.return_param, cfg.inout_param);
    std::mt19937_64 rng(cfg.seed);
    std::vector<Walk> walks;
    walks.reserve(n * static_cast<std::size_t>(cfg.walks_per_node));
    for (int pass = 0; pass < cfg.walks_per_node; ++pass) {
        for (std::size_t start = 0; start < n; ++start) {
            Walk w{start};
            w.reserve(static_cast<std::size_t>(cfg.walk_length));
            while (w.size() < static_cast<std::size_t>(cfg.walk_length)) {
                const auto cur = w.back();
                const auto nbrs = adj[cur];
                if (nbrs.empty()) break;
                if (w.size() == 1) {
                    w.push_back(nbrs[std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(rng)]);
                } else {
                    w.push_back(sampler.next(w[w.size() - 2], cur, rng));
                }
            }
            walks.push_back(std::move(w));
        }
    }
    return walks;
}

inline std::vector<Walk> biased_walks(const DeviceSharingGraph& g, const Config& cfg) {
    return biased_walks(g.adjacency(), cfg);
}

struct Embeddings {
    Eigen::MatrixXd vectors;         // dimensions x n, one column per node
    std::vector<double> epoch_loss;  // mean SGNS loss per (center, context) pair, per epoch
};

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

/// Skip-gram with negative sampling over walk windows. Negatives come from
/// the unigram distribution raised to 3/4; the step size decays linearly to
/// 1e-4 of its initial value.
inline Embeddings train_embeddings(const std::vector<Walk>& walks, std::size_t n_nodes, const Config& cfg) {
    cfg.validate();
    if (walks.empty()) throw ValidationError("no walks to train on");
    const auto d = static_cast<Eigen::Index>(cfg.dimensions);
    const auto n = static_cast<Eigen::Index>(n_nodes);
    std::mt19937_64 rng(cfg.seed);

    std::vector<double> freq(n_nodes, 0.0);
    std::size_t tokens = 0;
    for (const auto& w : walks) {
        for (auto v : w) {
            if (v >= n_nodes) throw ValidationError("walk references node outside the graph");
            freq[v] += 1.0;
            ++tokens;
        }
    }
    for (auto& f : freq) f = std::pow(f, 0.75);
    const AliasTable noise(freq);

    Embeddings out;
    Eigen::MatrixXd& in = out.vectors;
    in.resize(d, n);
    std::uniform_real_distribution<double> init(-0.5, 0.5);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = init(rng) / static_cast<double>(d);
    Eigen::MatrixXd ctx = Eigen::MatrixXd::Zero(d, n);

    const double total_steps = static_cast<double>(tokens) * cfg.epochs;
    double done = 0.0;
    Eigen::VectorXd grad_in(d);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0.0;
        std::size_t pairs = 0;
        for (const auto& w : walks) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double lr = cfg.initial_step * std::max(1e-4, 1.0 - done / total_steps);
                done += 1.0;
                const auto center = static_cast<Eigen::Index>(w[i]);
                const std::size_t lo = i >= static_cast<std::size_t>(cfg.window) ? i - static_cast<std::size_t>(cfg.window) : 0;
                const std::size_t hi = std::min(w.size() - 1, i + static_cast<std::size_t>(cfg.window));
                for (std::size_t j = lo; j <= hi; ++j) {
                    if (j == i) continue;
                    grad_in.setZero();
                    for (int s = 0; s <= cfg.negative_samples; ++s) {
                        const bool positive = s == 0;
                        const auto target = static_cast<Eigen::Index>(positive ? w[j] : noise.sample(rng));
                        const double score = in.col(center).dot(ctx.col(target));
                        loss -= log_sigmoid(positive ? score : -score);
                        const double g = lr * ((positive ? 1.0 : 0.0) - 1.0 / (1.0 + std::exp(-score)));
                        grad_in += g * ctx.col(target);
                        ctx.col(target) += g * in.col(center);
                    }
                    in.col(center) += grad_in;
                    ++pairs;
                }
            }
        }
        out.epoch_loss.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
    }
    return out;
}

inline void save_embeddings(const Embeddings& e, const DeviceSharingGraph& g, const std::string& path) {
    auto out = tsv::open_out(path);
    for (std::size_t u = 0; u < g.node_count(); ++u) {
        out << g.node(u).external_id;
        for (Eigen::Index k = 0; k < e.vectors.rows(); ++k) {
            out << '\t' << tsv::format_exact(e.vectors(k, static_cast<Eigen::Index>(u)));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

/// Reads an embeddings file; rows are matched by external id. Account and
/// device ids may collide, so the file is read in graph node order.
inline Embeddings load_embeddings(const std::string& path, const DeviceSharingGraph& g) {
    auto in = tsv::open_in(path);
    Embeddings e;
    std::string line;
    std::size_t line_no = 0;
    Eigen::Index dims = -1;
    std::size_t u = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty()) continue;
        const auto f = tsv::split(line);
        if (u >= g.node_count()) throw ValidationError(tsv::where(path, line_no) + ": more rows than graph nodes");
        if (f[0] != g.node(u).external_id) {
            throw ValidationError(tsv::where(path, line_no) + ": expected node '" + g.node(u).external_id + "', found '" +
                                  std::string(f[0]) + "'");
        }
        if (dims < 0) {
            dims = static_cast<Eigen::Index>(f.size() - 1);
            e.vectors.resize(dims, static_cast<Eigen::Index>(g.node_count()));
        } else if (static_cast<Eigen::Index>(f.size() - 1) != dims) {
            throw ParseError(tsv::where(path, line_no) + ": expected " + std::to_string(dims) + " values");
        }
        for (Eigen::Index k = 0; k < dims; ++k) {
            e.vectors(k, static_cast<Eigen::Index>(u)) = tsv::parse_real(f[static_cast<std::size_t>(k + 1)], path, line_no);
        }
        ++u;
    }
    if (u != g.node_count()) {
        throw ValidationError(path + ": " + std::to_string(u) + " rows for " + std::to_string(g.node_count()) + " nodes");
    }
    return e;
}

} // namespace ringscan::node2vec
