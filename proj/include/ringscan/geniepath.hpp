#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "graph.hpp"

namespace ringscan::geniepath {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One adaptive breadth layer: h'_u = tanh(W_t sum_v a_uv h_v) with
/// a_uv = softmax_v(mu . tanh(W_s h_u + W_d h_v)) over v in N(u) + {u}.
struct BreadthParams {
    Matrix w_t, w_s, w_d;
    Vector mu;
};

/// Single-layer LSTM, hidden size K. w_* act on the input, u_* on the previous hidden state.
struct LstmParams {
    Matrix w_i, w_f, w_o, w_g;
    Matrix u_i, u_f, u_o, u_g;
    Vector b_i, b_f, b_o, b_g;
};

struct Params {
    std::size_t input_dim = 0;  // P
    std::size_t hidden_dim = 0; // K
    std::size_t depth = 0;      // T
    Matrix w_in;                // K x P
    std::vector<BreadthParams> layers;
    LstmParams lstm;
    Vector w_out;
    double b_out = 0.0;

    static Params zeros(std::size_t P, std::size_t K, std::size_t T) {
        const auto k = static_cast<Eigen::Index>(K);
        Params p;
        p.input_dim = P;
        p.hidden_dim = K;
        p.depth = T;
        p.w_in = Matrix::Zero(k, static_cast<Eigen::Index>(P));
        p.layers.resize(T);
        for (auto& l : p.layers) {
            l.w_t = Matrix::Zero(k, k);
            l.w_s = Matrix::Zero(k, k);
            l.w_d = Matrix::Zero(k, k);
            l.mu = Vector::Zero(k);
        }
        for (Matrix* m : {&p.lstm.w_i, &p.lstm.w_f, &p.lstm.w_o, &p.lstm.w_g, &p.lstm.u_i, &p.lstm.u_f, &p.lstm.u_o,
                          &p.lstm.u_g}) {
            *m = Matrix::Zero(k, k);
        }
        for (Vector* b : {&p.lstm.b_i, &p.lstm.b_f, &p.lstm.b_o, &p.lstm.b_g}) *b = Vector::Zero(k);
        p.w_out = Vector::Zero(k);
        return p;
    }

    /// Glorot-uniform matrices and mu/w_out, zero biases except the LSTM
    /// forget bias (+1).
    static Params init(std::size_t P, std::size_t K, std::size_t T, std::uint64_t seed) {
        if (P == 0 || K == 0) throw ConfigError("input and hidden dimensions must be positive");
        Params p = zeros(P, K, T);
        std::mt19937_64 rng(seed);
        auto glorot = [&](auto& m) {
            const double a = std::sqrt(6.0 / static_cast<double>(m.cols() + m.rows()));
            std::uniform_real_distribution<double> u(-a, a);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
        };
        glorot(p.w_in);
        for (auto& l : p.layers) {
            glorot(l.w_t);
            glorot(l.w_s);
            glorot(l.w_d);
            glorot(l.mu);
        }
        for (Matrix* m : {&p.lstm.w_i, &p.lstm.w_f, &p.lstm.w_o, &p.lstm.w_g, &p.lstm.u_i, &p.lstm.u_f, &p.lstm.u_o,
                          &p.lstm.u_g}) {
            glorot(*m);
        }
        p.lstm.b_f.setOnes();
        glorot(p.w_out);
        return p;
    }
};

template <class Value>
struct BasicParamBlock {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<Value> values; // column-major (Eigen storage)
};

using ParamBlock = BasicParamBlock<double>;
using ConstParamBlock = BasicParamBlock<const double>;

/// Every trainable tensor in a fixed order.
template <class P>
    requires std::is_same_v<std::remove_const_t<P>, Params>
auto blocks(P& p) {
    using Value = std::conditional_t<std::is_const_v<P>, const double, double>;
    std::vector<BasicParamBlock<Value>> out;
    auto add = [&](std::string name, auto& m) {
        out.push_back({std::move(name), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                       std::span<Value>(m.data(), static_cast<std::size_t>(m.size()))});
    };
    add("w_in", p.w_in);
    for (std::size_t t = 0; t < p.layers.size(); ++t) {
        const auto prefix = "layer" + std::to_string(t) + ".";
        add(prefix + "w_t", p.layers[t].w_t);
        add(prefix + "w_s", p.layers[t].w_s);
        add(prefix + "w_d", p.layers[t].w_d);
        add(prefix + "mu", p.layers[t].mu);
    }
    add("lstm.w_i", p.lstm.w_i);
    add("lstm.w_f", p.lstm.w_f);
    add("lstm.w_o", p.lstm.w_o);
    add("lstm.w_g", p.lstm.w_g);
    add("lstm.u_i", p.lstm.u_i);
    add("lstm.u_f", p.lstm.u_f);
    add("lstm.u_o", p.lstm.u_o);
    add("lstm.u_g", p.lstm.u_g);
    add("lstm.b_i", p.lstm.b_i);
    add("lstm.b_f", p.lstm.b_f);
    add("lstm.b_o", p.lstm.b_o);
    add("lstm.b_g", p.lstm.b_g);
    add("w_out", p.w_out);
    out.push_back({"b_out", 1, 1, std::span<Value>(&p.b_out, 1)});
    return out;
}

inline std::size_t parameter_count(const Params& p) {
    std::size_t n = 0;
    for (const auto& b : blocks(p)) n += b.values.size();
    return n;
}

inline bool all_finite(const Params& p) {
    for (const auto& b : blocks(p)) {
        for (double v : b.values) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

// --- breadth aggregation ---------------------------------------------------

/// Softmax attention of u over `candidates` (which must include u itself for
/// the breadth layer). Returned in candidate order.
inline Vector attention_weights(const BreadthParams& layer, const Vector& h_u,
                                const std::vector<Vector>& candidates) {
    const Vector a = layer.w_s * h_u;
    Vector scores(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        scores[static_cast<Eigen::Index>(i)] = layer.mu.dot((a + layer.w_d * candidates[i]).array().tanh().matrix());
    }
    const double m = scores.maxCoeff();
    Vector w = (scores.array() - m).exp();
    return w / w.sum();
}

/// Per-layer intermediates kept for the backward pass. Slots for node u are
/// [offset(u), offset(u) + deg(u) + 1): u itself first, then its neighbors in
/// adjacency order.
struct LayerCache {
    Matrix a;     // W_s h_u, K x n
    Matrix b;     // W_d h_v, K x n
    Matrix z;     // tanh(a_u + b_v) per slot, K x slots
    Vector alpha; // attention per slot
    Matrix ctx;   // sum_v alpha_uv h_v, K x n
};

inline std::size_t slot_offset(const AdjacencyView& adj, std::size_t u) { return adj.offsets[u] + u; }

template <class Fn>
void for_each_slot(const AdjacencyView& adj, std::size_t u, Fn&& fn) {
    std::size_t s = slot_offset(adj, u);
    fn(s++, u);
    for (auto v : adj[u]) fn(s++, v);
}

/// H (K x n, one column per node) -> next layer embeddings.
inline Matrix breadth_layer(const BreadthParams& layer, const AdjacencyView& adj, const Matrix& h,
                            LayerCache* cache = nullptr) {
    const auto n = adj.node_count();
    const auto k = h.rows();
    const std::size_t slots = adj.neighbors.size() + n;
    LayerCache local;
    LayerCache& c = cache ? *cache : local;
    c.a = layer.w_s * h;
    c.b = layer.w_d * h;
    c.z.resize(k, static_cast<Eigen::Index>(slots));
    c.alpha.resize(static_cast<Eigen::Index>(slots));
    c.ctx.setZero(k, static_cast<Eigen::Index>(n));
    Matrix out(k, static_cast<Eigen::Index>(n));
    for (std::size_t u = 0; u < n; ++u) {
        const auto cu = static_cast<Eigen::Index>(u);
        double max_score = -std::numeric_limits<double>::infinity();
        for_each_slot(adj, u, [&](std::size_t s, std::size_t v) {
            const auto cs = static_cast<Eigen::Index>(s);
            c.z.col(cs) = (c.a.col(cu) + c.b.col(static_cast<Eigen::Index>(v))).array().tanh();
            c.alpha[cs] = layer.mu.dot(c.z.col(cs));
            max_score = std::max(max_score, c.alpha[cs]);
        });
        const auto first = static_cast<Eigen::Index>(slot_offset(adj, u));
        const auto count = static_cast<Eigen::Index>(adj.degree(u) + 1);
        auto seg = c.alpha.segment(first, count);
        seg = (seg.array() - max_score).exp();
        seg /= seg.sum();
        for_each_slot(adj, u, [&](std::size_t s, std::size_t v) {
            c.ctx.col(cu) += c.alpha[static_cast<Eigen::Index>(s)] * h.col(static_cast<Eigen::Index>(v));
        });
        out.col(cu) = (layer.w_t * c.ctx.col(cu)).array().tanh();
    }
    return out;
}

// --- depth aggregation -----------------------------------------------------

struct LstmStep {
    Vector i, f, o, g, c, h;
};

/// Standard LSTM from zero state over `sequence`; returns every step.
inline std::vector<LstmStep> lstm_run(const LstmParams& p, const std::vector<Vector>& sequence) {
    const auto k = p.b_i.size();
    std::vector<LstmStep> steps;
    steps.reserve(sequence.size());
    Vector h_prev = Vector::Zero(k), c_prev = Vector::Zero(k);
    for (const auto& x : sequence) {
        LstmStep s;
        s.i = sigmoid(Vector(p.w_i * x + p.u_i * h_prev + p.b_i));
        s.f = sigmoid(Vector(p.w_f * x + p.u_f * h_prev + p.b_f));
        s.o = sigmoid(Vector(p.w_o * x + p.u_o * h_prev + p.b_o));
        s.g = (p.w_g * x + p.u_g * h_prev + p.b_g).array().tanh();
        s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
        s.h = s.o.cwiseProduct(Vector(s.c.array().tanh()));
        h_prev = s.h;
        c_prev = s.c;
        steps.push_back(std::move(s));
    }
    return steps;
}

/// Final hidden state of the LSTM over the per-depth embeddings.
inline Vector depth_layer(const LstmParams& p, const std::vector<Vector>& sequence) {
    if (sequence.empty()) throw ConfigError("depth aggregation needs at least one embedding");
    return lstm_run(p, sequence).back().h;
}

// --- full model ------------------------------------------------------------

/// Intermediates of one full-graph forward pass.
struct ForwardPass {
    std::vector<Matrix> h;          // T+1 matrices, K x n
    std::vector<LayerCache> layers; // T caches
    std::vector<std::size_t> accounts;
    std::vector<std::vector<LstmStep>> lstm; // per account
    Vector logits;                           // per account, same order as `accounts`
    Vector probs;
    Vector account_position; // node index -> position in accounts, or -1

    double prob_of(std::size_t node) const {
        const auto pos = account_position[static_cast<Eigen::Index>(node)];
        if (pos < 0) throw ValidationError("node " + std::to_string(node) + " is not an Account");
        return probs[static_cast<Eigen::Index>(pos)];
    }
};

/// `features` is P x n; columns of device nodes are ignored (their h^(0) is 0).
inline ForwardPass forward(const Params& p, const DeviceSharingGraph& g, const Matrix& features) {
    if (static_cast<std::size_t>(features.rows()) != p.input_dim ||
        static_cast<std::size_t>(features.cols()) != g.node_count()) {
        throw ValidationError("feature matrix is " + std::to_string(features.rows()) + "x" +
                              std::to_string(features.cols()) + " but model expects " + std::to_string(p.input_dim) +
                              "x" + std::to_string(g.node_count()));
    }
    const auto n = g.node_count();
    const auto k = static_cast<Eigen::Index>(p.hidden_dim);
    const auto adj = g.adjacency();
    ForwardPass fp;
    fp.accounts = g.account_indices();
    fp.account_position = Vector::Constant(static_cast<Eigen::Index>(n), -1.0);
    for (std::size_t i = 0; i < fp.accounts.size(); ++i) {
        fp.account_position[static_cast<Eigen::Index>(fp.accounts[i])] = static_cast<double>(i);
    }

    Matrix h0 = Matrix::Zero(k, static_cast<Eigen::Index>(n));
    for (auto u : fp.accounts) {
        const auto cu = static_cast<Eigen::Index>(u);
        h0.col(cu) = (p.w_in * features.col(cu)).array().tanh();
    }
    fp.h.push_back(std::move(h0));
    fp.layers.resize(p.depth);
    for (std::size_t t = 0; t < p.depth; ++t) {
        fp.h.push_back(breadth_layer(p.layers[t], adj, fp.h[t], &fp.layers[t]));
    }

    const auto m = static_cast<Eigen::Index>(fp.accounts.size());
    fp.logits.resize(m);
    fp.probs.resize(m);
    fp.lstm.resize(fp.accounts.size());
    std::vector<Vector> seq(p.depth + 1);
    for (std::size_t i = 0; i < fp.accounts.size(); ++i) {
        const auto cu = static_cast<Eigen::Index>(fp.accounts[i]);
        for (std::size_t t = 0; t <= p.depth; ++t) seq[t] = fp.h[t].col(cu);
        fp.lstm[i] = lstm_run(p.lstm, seq);
        const double logit = p.w_out.dot(fp.lstm[i].back().h) + p.b_out;
        fp.logits[static_cast<Eigen::Index>(i)] = logit;
        fp.probs[static_cast<Eigen::Index>(i)] = sigmoid(logit);
    }
    return fp;
}

/// Reverse-mode gradients of a scalar loss given dL/dp for every account
/// (same order as fp.accounts). Accounts outside the loss carry 0.
inline Params backward(const Params& p, const DeviceSharingGraph& g, const Matrix& features, const ForwardPass& fp,
                       const Vector& dloss_dprob) {
    if (dloss_dprob.size() != static_cast<Eigen::Index>(fp.accounts.size())) {
        throw ValidationError("loss gradient has " + std::to_string(dloss_dprob.size()) + " entries, expected " +
                              std::to_string(fp.accounts.size()));
    }
    const auto n = g.node_count();
    const auto k = static_cast<Eigen::Index>(p.hidden_dim);
    const auto adj = g.adjacency();
    Params grad = Params::zeros(p.input_dim, p.hidden_dim, p.depth);
    std::vector<Matrix> dh(p.depth + 1, Matrix::Zero(k, static_cast<Eigen::Index>(n)));

    // Head and LSTM, per account.
    const auto& L = p.lstm;
    auto& dL = grad.lstm;
    const Vector zero = Vector::Zero(k);
    for (std::size_t idx = 0; idx < fp.accounts.size(); ++idx) {
        const auto i = static_cast<Eigen::Index>(idx);
        if (dloss_dprob[i] == 0.0) continue;
        const double prob = fp.probs[i];
        const double dlogit = dloss_dprob[i] * prob * (1.0 - prob);
        const auto& steps = fp.lstm[idx];
        grad.w_out += dlogit * steps.back().h;
        grad.b_out += dlogit;
        Vector dh_next = dlogit * p.w_out;
        Vector dc_next = Vector::Zero(k);
        const auto cu = static_cast<Eigen::Index>(fp.accounts[idx]);
        for (std::size_t s = steps.size(); s-- > 0;) {
            const auto& st = steps[s];
            const Vector& c_prev = s > 0 ? steps[s - 1].c : zero;
            const Vector& h_prev = s > 0 ? steps[s - 1].h : zero;
            const Vector tanh_c = st.c.array().tanh();
            const Vector d_o = dh_next.cwiseProduct(tanh_c);
            const Vector dc = dc_next + dh_next.cwiseProduct(st.o).cwiseProduct(Vector(1.0 - tanh_c.array().square()));
            const Vector da_i = dc.cwiseProduct(st.g).cwiseProduct(Vector(st.i.array() * (1.0 - st.i.array())));
            const Vector da_f = dc.cwiseProduct(c_prev).cwiseProduct(Vector(st.f.array() * (1.0 - st.f.array())));
            const Vector da_o = d_o.cwiseProduct(Vector(st.o.array() * (1.0 - st.o.array())));
            const Vector da_g = dc.cwiseProduct(st.i).cwiseProduct(Vector(1.0 - st.g.array().square()));
            dc_next = dc.cwiseProduct(st.f);
            const Vector x = fp.h[s].col(cu);
            dL.w_i += da_i * x.transpose();
            dL.w_f += da_f * x.transpose();
            dL.w_o += da_o * x.transpose();
            dL.w_g += da_g * x.transpose();
            dL.u_i += da_i * h_prev.transpose();
            dL.u_f += da_f * h_prev.transpose();
            dL.u_o += da_o * h_prev.transpose();
            dL.u_g += da_g * h_prev.transpose();
            dL.b_i += da_i;
            dL.b_f += da_f;
            dL.b_o += da_o;
            dL.b_g += da_g;
            dh[s].col(cu) += L.w_i.transpose() * da_i + L.w_f.transpose() * da_f + L.w_o.transpose() * da_o +
                             L.w_g.transpose() * da_g;
            dh_next = L.u_i.transpose() * da_i + L.u_f.transpose() * da_f + L.u_o.transpose() * da_o +
                      L.u_g.transpose() * da_g;
        }
    }

    // Breadth layers, last to first. dh[t+1] is complete once layer t+1 is done.
    for (std::size_t t = p.depth; t-- > 0;) {
        const auto& layer = p.layers[t];
        const auto& cache = fp.layers[t];
        const Matrix& h_in = fp.h[t];
        const Matrix& h_out = fp.h[t + 1];
        auto& gl = grad.layers[t];
        Matrix& dh_in = dh[t];
        Matrix da = Matrix::Zero(k, static_cast<Eigen::Index>(n));
        Matrix db = Matrix::Zero(k, static_cast<Eigen::Index>(n));
        std::vector<double> dalpha;
        for (std::size_t u = 0; u < n; ++u) {
            const auto cu = static_cast<Eigen::Index>(u);
            const Vector dpre = dh[t + 1].col(cu).cwiseProduct(Vector(1.0 - h_out.col(cu).array().square()));
            if (dpre.isZero(0.0)) continue;
            gl.w_t += dpre * cache.ctx.col(cu).transpose();
            const Vector dctx = layer.w_t.transpose() * dpre;
            dalpha.clear();
            double weighted = 0.0;
            for_each_slot(adj, u, [&](std::size_t s, std::size_t v) {
                const auto cs = static_cast<Eigen::Index>(s);
                const auto cv = static_cast<Eigen::Index>(v);
                const double d = dctx.dot(h_in.col(cv));
                dalpha.push_back(d);
                weighted += cache.alpha[cs] * d;
                dh_in.col(cv) += cache.alpha[cs] * dctx;
            });
            std::size_t j = 0;
            for_each_slot(adj, u, [&](std::size_t s, std::size_t v) {
                const auto cs = static_cast<Eigen::Index>(s);
                const double dscore = cache.alpha[cs] * (dalpha[j++] - weighted);
                gl.mu += dscore * cache.z.col(cs);
                const Vector dz = (dscore * layer.mu).cwiseProduct(Vector(1.0 - cache.z.col(cs).array().square()));
                da.col(cu) += dz;
                db.col(static_cast<Eigen::Index>(v)) += dz;
            });
        }
        gl.w_s += da * h_in.transpose();
        gl.w_d += db * h_in.transpose();
        dh_in += layer.w_s.transpose() * da + layer.w_d.transpose() * db;
    }

    // Input projection; device h^(0) is constant.
    for (auto u : fp.accounts) {
        const auto cu = static_cast<Eigen::Index>(u);
        const Vector dpre = dh[0].col(cu).cwiseProduct(Vector(1.0 - fp.h[0].col(cu).array().square()));
        grad.w_in += dpre * features.col(cu).transpose();
    }
    return grad;
}

} // namespace ringscan::geniepath
