#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "features.hpp"
#include "geniepath.hpp"
#include "training.hpp"

namespace ringscan {

enum class GradientCorruption { None, ScaleWs };

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares backward() against central differences of the full-batch loss
/// (HighRisk positives, every other account negative) for every parameter.
/// `corruption` perturbs the analytic gradient and exists to prove the check
/// can fail.
inline GradientCheckResult gradient_check(const geniepath::Params& params, const LabeledDataset& ds, double eps,
                                          GradientCorruption corruption = GradientCorruption::None) {
    const auto positives = ds.tagged(RiskTag::HighRisk);
    const auto negatives = ds.tagged(RiskTag::NoObservableRisk);
    const auto x = feature_matrix(ds);
    auto loss_at = [&](const geniepath::Params& p) {
        return bce_objective(geniepath::forward(p, ds.graph, x), positives, negatives).loss;
    };

    const auto fp = geniepath::forward(params, ds.graph, x);
    const auto obj = bce_objective(fp, positives, negatives);
    auto grad = geniepath::backward(params, ds.graph, x, fp, obj.dprob);
    if (corruption == GradientCorruption::ScaleWs) {
        for (auto& layer : grad.layers) layer.w_s *= 1.5;
    }

    GradientCheckResult result;
    geniepath::Params probe = params;
    auto probe_blocks = geniepath::blocks(probe);
    const auto grad_blocks = geniepath::blocks(std::as_const(grad));
    for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
        auto values = probe_blocks[b].values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss_at(probe);
            values[i] = saved - eps;
            const double down = loss_at(probe);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = relative_error(grad_blocks[b].values[i], numeric);
            ++result.checked;
            if (err > result.max_relative_error || result.checked == 1) {
                result.max_relative_error = err;
                result.worst_parameter = probe_blocks[b].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

/// Small random bipartite instance for gradient checking: ceil(n/2)
/// accounts, the rest devices, each device joined to 1..3 accounts; tags
/// random with both classes present.
inline LabeledDataset random_check_dataset(std::size_t n_nodes, std::size_t feature_dim, std::uint64_t seed) {
    if (n_nodes < 3) throw ConfigError("gradient check graph needs at least 3 nodes");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    std::mt19937_64 rng(seed);
    const std::size_t n_accounts = (n_nodes + 1) / 2;
    std::vector<NodeRef> nodes;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const bool account = i < n_accounts;
        nodes.push_back({i, account ? NodeKind::Account : NodeKind::Device,
                         (account ? "a" : "d") + std::to_string(account ? i : i - n_accounts)});
    }
    std::vector<Edge> edges;
    std::uniform_int_distribution<std::size_t> pick_account(0, n_accounts - 1);
    std::uniform_int_distribution<int> fanout(1, 3);
    for (std::size_t d = n_accounts; d < n_nodes; ++d) {
        for (int e = fanout(rng); e > 0; --e) edges.emplace_back(pick_account(rng), d);
    }
    LabeledDataset ds;
    ds.graph = DeviceSharingGraph::from_edges(std::move(nodes), std::move(edges));
    ds.feature_dim = feature_dim;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.4);
    for (std::size_t a = 0; a < n_accounts; ++a) {
        AccountRecord rec{a, std::vector<double>(feature_dim), coin(rng) ? RiskTag::HighRisk : RiskTag::NoObservableRisk};
        for (auto& v : rec.features) v = normal(rng);
        ds.records.emplace(a, std::move(rec));
    }
    ds.records.at(0).tag = RiskTag::HighRisk;
    ds.records.at(n_accounts - 1).tag = RiskTag::NoObservableRisk;
    ds.split = all_train(ds.graph);
    return ds;
}

/// Standard initialization with every bias also drawn at random, so no
/// gradient path is trivially zero.
inline geniepath::Params random_check_params(std::size_t P, std::size_t K, std::size_t T, std::uint64_t seed) {
    auto p = geniepath::Params::init(P, K, T, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto* b : {&p.lstm.b_i, &p.lstm.b_f, &p.lstm.b_o, &p.lstm.b_g}) {
        for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] += u(rng);
    }
    p.b_out = u(rng);
    return p;
}

} // namespace ringscan
