#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "geniepath.hpp"
#include "tsv.hpp"

namespace ringscan {

/// P x n matrix of account features; device columns are zero.
inline geniepath::Matrix feature_matrix(const LabeledDataset& ds) {
    geniepath::Matrix x = geniepath::Matrix::Zero(static_cast<Eigen::Index>(ds.feature_dim),
                                                  static_cast<Eigen::Index>(ds.graph.node_count()));
    for (const auto& [idx, rec] : ds.records) {
        for (std::size_t j = 0; j < ds.feature_dim; ++j) {
            x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(idx)) = rec.features[j];
        }
    }
    return x;
}

/// Uniform sample without replacement of round(rate * |pool|) NoObservableRisk
/// Train accounts. Returned sorted.
template <class Rng>
std::vector<std::size_t> sample_negatives(const LabeledDataset& ds, double rate, Rng& rng) {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("negative sample rate must be in (0, 1]");
    auto pool = ds.tagged(RiskTag::NoObservableRisk, Split::Train);
    if (pool.empty()) throw ValidationError("no NoObservableRisk accounts in the Train split to sample from");
    const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(pool.size())));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline void require_disjoint(std::vector<std::size_t> a, std::vector<std::size_t> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) {
        throw ValidationError("positive and negative sets overlap at account " + std::to_string(both.front()));
    }
}

/// Binary cross-entropy summed over positives and sampled negatives.
inline double bce_loss(const std::map<std::size_t, double>& probs, const std::vector<std::size_t>& positives,
                       const std::vector<std::size_t>& negatives) {
    require_disjoint(positives, negatives);
    double loss = 0.0;
    for (auto v : positives) loss -= std::log(clamp_prob(probs.at(v)));
    for (auto v : negatives) loss -= std::log(1.0 - clamp_prob(probs.at(v)));
    return loss;
}

struct Objective {
    double loss = 0.0;
    geniepath::Vector dprob; // dL/dp per account, in ForwardPass::accounts order
};

/// Loss and its gradient with respect to each account probability.
inline Objective bce_objective(const geniepath::ForwardPass& fp, const std::vector<std::size_t>& positives,
                               const std::vector<std::size_t>& negatives) {
    require_disjoint(positives, negatives);
    Objective obj;
    obj.dprob = geniepath::Vector::Zero(static_cast<Eigen::Index>(fp.accounts.size()));
    auto position = [&](std::size_t node) {
        const auto pos = fp.account_position[static_cast<Eigen::Index>(node)];
        if (pos < 0) throw ValidationError("node " + std::to_string(node) + " is not an Account");
        return static_cast<Eigen::Index>(pos);
    };
    for (auto v : positives) {
        const auto i = position(v);
        const double p = fp.probs[i];
        obj.loss -= std::log(clamp_prob(p));
        if (p > kProbClamp) obj.dprob[i] -= 1.0 / p;
    }
    for (auto v : negatives) {
        const auto i = position(v);
        const double p = fp.probs[i];
        obj.loss -= std::log(1.0 - clamp_prob(p));
        if (p < 1.0 - kProbClamp) obj.dprob[i] += 1.0 / (1.0 - p);
    }
    return obj;
}

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    double negative_sample_rate = 0.25;
    int epochs = 60;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool resample_each_epoch = true;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
        if (!(negative_sample_rate > 0.0 && negative_sample_rate <= 1.0)) {
            throw ConfigError("negative_sample_rate must be in (0, 1]");
        }
    }
};

struct TrainReport {
    std::vector<double> loss_history;
    std::vector<std::size_t> sampled_negative_counts;
};

/// First-order optimizer over the flattened parameter blocks.
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const geniepath::Params& shape)
        : cfg_(cfg), m_(geniepath::Params::zeros(shape.input_dim, shape.hidden_dim, shape.depth)),
          v_(geniepath::Params::zeros(shape.input_dim, shape.hidden_dim, shape.depth)) {}

    void step(geniepath::Params& params, const geniepath::Params& grad) {
        ++t_;
        auto pb = geniepath::blocks(params);
        const auto gb = geniepath::blocks(grad);
        auto mb = geniepath::blocks(m_);
        auto vb = geniepath::blocks(v_);
        const double lr = cfg_.learning_rate;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t b = 0; b < pb.size(); ++b) {
            auto w = pb[b].values;
            const auto g = gb[b].values;
            if (cfg_.optimizer == OptimizerKind::Sgd) {
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
                continue;
            }
            auto m = mb[b].values;
            auto v = vb[b].values;
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_epsilon);
            }
        }
    }

private:
    TrainConfig cfg_;
    geniepath::Params m_, v_;
    long t_ = 0;
};

using EpochCallback = std::function<void(int epoch, const geniepath::Params&)>;

/// Full-graph training under the downsampled objective: HighRisk Train
/// accounts are positives, a random fraction of NoObservableRisk Train
/// accounts are negatives.
inline geniepath::Params train(const LabeledDataset& ds, geniepath::Params params, const TrainConfig& cfg,
                               TrainReport* report = nullptr, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const auto positives = ds.tagged(RiskTag::HighRisk, Split::Train);
    if (positives.empty()) throw ValidationError("Train split has no HighRisk accounts");
    const auto x = feature_matrix(ds);
    std::mt19937_64 rng(cfg.seed);
    Optimizer opt(cfg, params);
    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep = {};
    std::vector<std::size_t> negatives = sample_negatives(ds, cfg.negative_sample_rate, rng);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.resample_each_epoch && epoch > 1) negatives = sample_negatives(ds, cfg.negative_sample_rate, rng);
        const auto fp = geniepath::forward(params, ds.graph, x);
        const auto obj = bce_objective(fp, positives, negatives);
        if (!std::isfinite(obj.loss)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        const auto grad = geniepath::backward(params, ds.graph, x, fp, obj.dprob);
        if (!geniepath::all_finite(grad)) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
        rep.loss_history.push_back(obj.loss);
        rep.sampled_negative_counts.push_back(negatives.size());
        opt.step(params, grad);
        if (!geniepath::all_finite(params)) throw NumericError("non-finite parameters after epoch " + std::to_string(epoch));
        if (on_epoch) on_epoch(epoch, params);
    }
    return params;
}

/// Probability for every account in `accounts`.
inline std::map<std::size_t, double> score_accounts(const geniepath::Params& params, const LabeledDataset& ds,
                                                    const std::vector<std::size_t>& accounts) {
    const auto fp = geniepath::forward(params, ds.graph, feature_matrix(ds));
    std::map<std::size_t, double> out;
    for (auto a : accounts) out[a] = fp.prob_of(a);
    return out;
}

inline void write_train_report(const TrainReport& r, const std::string& path) {
    auto out = tsv::open_out(path);
    out << "epoch\tloss\tn_sampled_neg\n";
    for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
        out << (e + 1) << '\t' << tsv::format_exact(r.loss_history[e]) << '\t' << r.sampled_negative_counts[e] << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

} // namespace ringscan
