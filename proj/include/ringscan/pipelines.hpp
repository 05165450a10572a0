#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evaluation.hpp"
#include "features.hpp"
#include "gbdt.hpp"
#include "geniepath.hpp"
#include "node2vec.hpp"
#include "training.hpp"

namespace ringscan {

/// Split then standardize with Train statistics.
inline LabeledDataset prepare_dataset(LabeledDataset ds, double test_fraction, std::uint64_t seed) {
    return normalize_features(split_train_test(std::move(ds), test_fraction, seed));
}

/// HighRisk Train accounts labeled 1, a downsampled set of NoObservableRisk
/// Train accounts labeled 0: the same objective the GNN optimizes.
struct TrainingRows {
    std::vector<std::size_t> accounts;
    std::vector<int> labels;
};

inline TrainingRows downsampled_rows(const LabeledDataset& ds, double negative_rate, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TrainingRows rows;
    for (auto idx : ds.tagged(RiskTag::HighRisk, Split::Train)) {
        rows.accounts.push_back(idx);
        rows.labels.push_back(1);
    }
    for (auto idx : sample_negatives(ds, negative_rate, rng)) {
        rows.accounts.push_back(idx);
        rows.labels.push_back(0);
    }
    return rows;
}

// --- feature-only GBDT -----------------------------------------------------

inline gbdt::Model fit_feature_gbdt(const LabeledDataset& ds, double negative_rate, const gbdt::Config& cfg,
                                    std::vector<double>* loss_trace = nullptr) {
    const auto rows = downsampled_rows(ds, negative_rate, cfg.seed);
    std::vector<std::vector<double>> x;
    x.reserve(rows.accounts.size());
    for (auto idx : rows.accounts) x.push_back(ds.records.at(idx).features);
    return gbdt::fit(x, rows.labels, cfg, loss_trace);
}

inline eval::Scores score_feature_gbdt(const gbdt::Model& m, const LabeledDataset& ds,
                                       const std::vector<std::size_t>& accounts) {
    eval::Scores out;
    for (auto idx : accounts) out[idx] = m.predict(ds.records.at(idx).features);
    return out;
}

// --- node2vec embeddings + GBDT ---------------------------------------------

/// [embedding | features], embedding first.
inline std::vector<double> concat_row(const node2vec::Embeddings& emb, const LabeledDataset& ds, std::size_t idx) {
    if (static_cast<std::size_t>(emb.vectors.cols()) != ds.graph.node_count()) {
        throw ValidationError("embeddings cover " + std::to_string(emb.vectors.cols()) + " nodes, graph has " +
                              std::to_string(ds.graph.node_count()));
    }
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(emb.vectors.rows()) + ds.feature_dim);
    for (Eigen::Index k = 0; k < emb.vectors.rows(); ++k) row.push_back(emb.vectors(k, static_cast<Eigen::Index>(idx)));
    const auto& f = ds.records.at(idx).features;
    row.insert(row.end(), f.begin(), f.end());
    return row;
}

struct EmbeddingModel {
    node2vec::Embeddings embeddings;
    gbdt::Model classifier;
};

inline EmbeddingModel embed_concat_fit(const LabeledDataset& ds, const node2vec::Config& n2v, const gbdt::Config& cfg,
                                       double negative_rate) {
    n2v.validate();
    EmbeddingModel m;
    m.embeddings = node2vec::train_embeddings(node2vec::biased_walks(ds.graph, n2v), ds.graph.node_count(), n2v);
    const auto rows = downsampled_rows(ds, negative_rate, cfg.seed);
    std::vector<std::vector<double>> x;
    x.reserve(rows.accounts.size());
    for (auto idx : rows.accounts) x.push_back(concat_row(m.embeddings, ds, idx));
    m.classifier = gbdt::fit(x, rows.labels, cfg);
    return m;
}

inline eval::Scores score_embedding_model(const EmbeddingModel& m, const LabeledDataset& ds,
                                          const std::vector<std::size_t>& accounts) {
    eval::Scores out;
    for (auto idx : accounts) out[idx] = m.classifier.predict(concat_row(m.embeddings, ds, idx));
    return out;
}

// --- GNN -------------------------------------------------------------------

struct GnnConfig {
    std::size_t hidden_dim = 16;
    std::size_t depth = 2;
    std::uint64_t init_seed = 0;
    TrainConfig train;
};

inline geniepath::Params fit_gnn(const LabeledDataset& ds, const GnnConfig& cfg, TrainReport* report = nullptr,
                                 const EpochCallback& on_epoch = {}) {
    auto init = geniepath::Params::init(ds.feature_dim, cfg.hidden_dim, cfg.depth, cfg.init_seed);
    return train(ds, std::move(init), cfg.train, report, on_epoch);
}

// --- side-by-side run --------------------------------------------------------

struct ComparisonConfig {
    double test_fraction = 0.3;
    double negative_rate = 0.25;
    GnnConfig gnn;
    gbdt::Config gbdt;
    node2vec::Config node2vec;
    bool include_node2vec = true;

    /// Derives every component seed from one run seed.
    void reseed(std::uint64_t seed) {
        gnn.init_seed = seed;
        gnn.train.seed = seed + 1;
        gbdt.seed = seed + 2;
        node2vec.seed = seed + 3;
        split_seed = seed;
    }
    std::uint64_t split_seed = 0;
};

inline constexpr const char* kModelGnn = "gnn";
inline constexpr const char* kModelGbdt = "gbdt";
inline constexpr const char* kModelNode2vecGbdt = "node2vec-gbdt";

struct ScoredRun {
    LabeledDataset dataset; // split and standardized
    eval::ModelScores scores;
};

/// Trains all three models on one prepared dataset and scores the Test split.
inline ScoredRun score_models(const LabeledDataset& raw, const ComparisonConfig& cfg) {
    cfg.gnn.train.validate();
    ScoredRun run{prepare_dataset(raw, cfg.test_fraction, cfg.split_seed), {}};
    const auto& ds = run.dataset;
    const auto test = ds.accounts(Split::Test);
    GnnConfig gnn = cfg.gnn;
    gnn.train.negative_sample_rate = cfg.negative_rate;
    const auto params = fit_gnn(ds, gnn);
    const auto gb = fit_feature_gbdt(ds, cfg.negative_rate, cfg.gbdt);
    run.scores.emplace_back(kModelGnn, score_accounts(params, ds, test));
    run.scores.emplace_back(kModelGbdt, score_feature_gbdt(gb, ds, test));
    if (cfg.include_node2vec) {
        const auto emb = embed_concat_fit(ds, cfg.node2vec, cfg.gbdt, cfg.negative_rate);
        run.scores.emplace_back(kModelNode2vecGbdt, score_embedding_model(emb, ds, test));
    }
    return run;
}

inline eval::EvalReport run_comparison(const LabeledDataset& raw, const ComparisonConfig& cfg,
                                       eval::LabelSource source = eval::LabelSource::Tags) {
    const auto run = score_models(raw, cfg);
    return eval::compare_models(run.dataset, run.scores, source);
}

} // namespace ringscan
