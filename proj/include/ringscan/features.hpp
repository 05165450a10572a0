#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "graph_io.hpp"
#include "tsv.hpp"

namespace ringscan {

enum class RiskTag { HighRisk, NoObservableRisk };
enum class Split { Train, Test };

inline const char* tag_name(RiskTag t) { return t == RiskTag::HighRisk ? "HIGH_RISK" : "NO_OBSERVABLE_RISK"; }

struct AccountRecord {
    std::size_t account_index = 0;
    std::vector<double> features;
    RiskTag tag = RiskTag::NoObservableRisk;

    friend bool operator==(const AccountRecord&, const AccountRecord&) = default;
};

/// Graph plus per-account features, rule tags, split assignment and (for
/// synthetic data) the true fraud status. Ground truth is for evaluation only.
struct LabeledDataset {
    DeviceSharingGraph graph;
    std::size_t feature_dim = 0;
    std::map<std::size_t, AccountRecord> records;
    std::map<std::size_t, Split> split;
    std::optional<std::map<std::size_t, bool>> ground_truth;

    void validate() const {
        for (const auto& node : graph.nodes()) {
            if (node.kind != NodeKind::Account) continue;
            const auto it = records.find(node.index);
            if (it == records.end()) {
                throw ValidationError("account '" + node.external_id + "' has no feature record");
            }
            if (it->second.features.size() != feature_dim) {
                throw ValidationError("account '" + node.external_id + "' has " +
                                      std::to_string(it->second.features.size()) + " features, expected " +
                                      std::to_string(feature_dim));
            }
            if (!split.contains(node.index)) {
                throw ValidationError("account '" + node.external_id + "' has no split assignment");
            }
        }
        for (const auto& [idx, rec] : records) {
            if (idx >= graph.node_count() || !graph.is_account(idx)) {
                throw ValidationError("record for node " + std::to_string(idx) + " which is not an Account");
            }
        }
    }

    std::vector<std::size_t> accounts(std::optional<Split> which = std::nullopt) const {
        std::vector<std::size_t> out;
        for (const auto& [idx, s] : split) {
            if (!which || s == *which) out.push_back(idx);
        }
        return out;
    }

    std::vector<std::size_t> tagged(RiskTag tag, std::optional<Split> which = std::nullopt) const {
        std::vector<std::size_t> out;
        for (const auto& [idx, s] : split) {
            if ((!which || s == *which) && records.at(idx).tag == tag) out.push_back(idx);
        }
        return out;
    }

    bool is_fraud_truth(std::size_t idx) const { return ground_truth.value().at(idx); }
};

inline std::map<std::size_t, Split> all_train(const DeviceSharingGraph& g) {
    std::map<std::size_t, Split> s;
    for (auto idx : g.account_indices()) s.emplace(idx, Split::Train);
    return s;
}

/// Per-dimension standardization statistics (population std).
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    static FeatureScaler fit(const LabeledDataset& ds) {
        FeatureScaler s;
        s.mean.assign(ds.feature_dim, 0.0);
        s.stddev.assign(ds.feature_dim, 0.0);
        const auto train = ds.accounts(Split::Train);
        if (train.empty()) return s;
        const double n = static_cast<double>(train.size());
        for (auto idx : train) {
            const auto& f = ds.records.at(idx).features;
            for (std::size_t j = 0; j < ds.feature_dim; ++j) s.mean[j] += f[j];
        }
        for (auto& m : s.mean) m /= n;
        for (auto idx : train) {
            const auto& f = ds.records.at(idx).features;
            for (std::size_t j = 0; j < ds.feature_dim; ++j) s.stddev[j] += (f[j] - s.mean[j]) * (f[j] - s.mean[j]);
        }
        for (auto& v : s.stddev) v = std::sqrt(v / n);
        return s;
    }

    // Zero-variance columns map to 0.
    void apply(std::vector<double>& x) const {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = stddev[j] > 0.0 ? (x[j] - mean[j]) / stddev[j] : 0.0;
    }

    // Exact inverse on non-constant columns; constant columns restore the mean.
    void invert(std::vector<double>& x) const {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = stddev[j] > 0.0 ? x[j] * stddev[j] + mean[j] : mean[j];
    }
};

/// Standardizes every account with statistics from the Train split.
inline LabeledDataset normalize_features(LabeledDataset ds) {
    const auto scaler = FeatureScaler::fit(ds);
    for (auto& [idx, rec] : ds.records) scaler.apply(rec.features);
    return ds;
}

/// Stratified by tag: each class sends floor(size * test_fraction) members to
/// Test, the rest to Train.
inline LabeledDataset split_train_test(LabeledDataset ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
    std::mt19937_64 rng(seed);
    ds.split.clear();
    for (auto tag : {RiskTag::HighRisk, RiskTag::NoObservableRisk}) {
        std::vector<std::size_t> members;
        for (const auto& [idx, rec] : ds.records) {
            if (rec.tag == tag) members.push_back(idx);
        }
        if (members.size() < 2) {
            throw ValidationError(std::string("cannot stratify: tag ") + tag_name(tag) + " has " +
                                  std::to_string(members.size()) + " account(s)");
        }
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * test_fraction + 1e-9));
        for (std::size_t i = 0; i < members.size(); ++i) ds.split[members[i]] = i < n_test ? Split::Test : Split::Train;
    }
    return ds;
}

// --- files -----------------------------------------------------------------

inline void save_features(const LabeledDataset& ds, const std::string& path) {
    auto out = tsv::open_out(path);
    out << "account_id\ttag";
    for (std::size_t j = 0; j < ds.feature_dim; ++j) out << "\tf" << j;
    out << '\n';
    for (const auto& [idx, rec] : ds.records) {
        out << ds.graph.node(idx).external_id << '\t' << tag_name(rec.tag);
        for (double v : rec.features) out << '\t' << tsv::format_sig(v, 9);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

/// Reads a features file against `graph`. Every account in the graph must
/// appear exactly once. The split defaults to all-Train.
inline LabeledDataset load_features(const std::string& path, const DeviceSharingGraph& graph) {
    auto in = tsv::open_in(path);
    LabeledDataset ds;
    ds.graph = graph;
    const auto by_id = graph.index_by_id(NodeKind::Account);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty()) continue;
        const auto f = tsv::split(line);
        if (!header) {
            if (f.size() < 3 || f[0] != "account_id" || f[1] != "tag") {
                throw ParseError(tsv::where(path, line_no) + ": expected header account_id<TAB>tag<TAB>f0...");
            }
            ds.feature_dim = f.size() - 2;
            header = true;
            continue;
        }
        if (f.size() != ds.feature_dim + 2) {
            throw ParseError(tsv::where(path, line_no) + ": expected " + std::to_string(ds.feature_dim) +
                             " feature values, found " + std::to_string(f.size() < 2 ? 0 : f.size() - 2));
        }
        const std::string id(f[0]);
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError(tsv::where(path, line_no) + ": unknown account id '" + id + "'");
        AccountRecord rec;
        rec.account_index = it->second;
        if (f[1] == "HIGH_RISK") rec.tag = RiskTag::HighRisk;
        else if (f[1] == "NO_OBSERVABLE_RISK") rec.tag = RiskTag::NoObservableRisk;
        else throw ParseError(tsv::where(path, line_no) + ": unknown tag '" + std::string(f[1]) + "'");
        rec.features.reserve(ds.feature_dim);
        for (std::size_t j = 0; j < ds.feature_dim; ++j) rec.features.push_back(tsv::parse_real(f[j + 2], path, line_no));
        if (!ds.records.emplace(rec.account_index, std::move(rec)).second) {
            throw ValidationError(tsv::where(path, line_no) + ": duplicate row for account '" + id + "'");
        }
    }
    if (!header && graph.account_count() > 0) throw ParseError(path + ": missing header");
    ds.split = all_train(graph);
    ds.validate();
    return ds;
}

inline void save_ground_truth(const LabeledDataset& ds, const std::string& path) {
    auto out = tsv::open_out(path);
    for (const auto& [idx, fraud] : ds.ground_truth.value()) {
        out << ds.graph.node(idx).external_id << '\t' << (fraud ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline std::map<std::size_t, bool> load_ground_truth(const std::string& path, const DeviceSharingGraph& graph) {
    auto in = tsv::open_in(path);
    const auto by_id = graph.index_by_id(NodeKind::Account);
    std::map<std::size_t, bool> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty()) continue;
        const auto f = tsv::split(line);
        if (f.size() != 2 || (f[1] != "0" && f[1] != "1")) {
            throw ParseError(tsv::where(path, line_no) + ": expected account_id<TAB>0|1");
        }
        const auto it = by_id.find(std::string(f[0]));
        if (it == by_id.end()) {
            throw ValidationError(tsv::where(path, line_no) + ": unknown account id '" + std::string(f[0]) + "'");
        }
        if (!out.emplace(it->second, f[1] == "1").second) {
            throw ValidationError(tsv::where(path, line_no) + ": duplicate row for account '" + std::string(f[0]) + "'");
        }
    }
    if (out.size() != graph.account_count()) {
        throw ValidationError(path + ": ground truth covers " + std::to_string(out.size()) + " of " +
                              std::to_string(graph.account_count()) + " accounts");
    }
    return out;
}

// Split file: account_id<TAB>train|test, one row per account.
inline void save_split(const LabeledDataset& ds, const std::string& path) {
    auto out = tsv::open_out(path);
    for (const auto& [idx, s] : ds.split) {
        out << ds.graph.node(idx).external_id << '\t' << (s == Split::Test ? "test" : "train") << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline std::map<std::size_t, Split> load_split(const std::string& path, const DeviceSharingGraph& graph) {
    auto in = tsv::open_in(path);
    const auto by_id = graph.index_by_id(NodeKind::Account);
    std::map<std::size_t, Split> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty()) continue;
        const auto f = tsv::split(line);
        if (f.size() != 2 || (f[1] != "train" && f[1] != "test")) {
            throw ParseError(tsv::where(path, line_no) + ": expected account_id<TAB>train|test");
        }
        const auto it = by_id.find(std::string(f[0]));
        if (it == by_id.end()) {
            throw ValidationError(tsv::where(path, line_no) + ": unknown account id '" + std::string(f[0]) + "'");
        }
        if (!out.emplace(it->second, f[1] == "test" ? Split::Test : Split::Train).second) {
            throw ValidationError(tsv::where(path, line_no) + ": duplicate row for account '" + std::string(f[0]) + "'");
        }
    }
    if (out.size() != graph.account_count()) {
        throw ValidationError(path + ": split covers " + std::to_string(out.size()) + " of " +
                              std::to_string(graph.account_count()) + " accounts");
    }
    return out;
}

// Dataset directory: graph.tsv, features.tsv, optional ground_truth.tsv.
namespace dataset_files {
inline constexpr const char* graph = "graph.tsv";
inline constexpr const char* features = "features.tsv";
inline constexpr const char* ground_truth = "ground_truth.tsv";
} // namespace dataset_files

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_graph(ds.graph, (dir / dataset_files::graph).string());
    save_features(ds, (dir / dataset_files::features).string());
    if (ds.ground_truth) save_ground_truth(ds, (dir / dataset_files::ground_truth).string());
}

inline LabeledDataset load_dataset(const std::filesystem::path& dir) {
    auto graph = load_graph((dir / dataset_files::graph).string());
    auto ds = load_features((dir / dataset_files::features).string(), graph);
    const auto gt = dir / dataset_files::ground_truth;
    if (std::filesystem::exists(gt)) ds.ground_truth = load_ground_truth(gt.string(), ds.graph);
    return ds;
}

/// Restricts a dataset to the nodes of `pruned`, matching accounts by external id.
inline LabeledDataset restrict_to_graph(const LabeledDataset& ds, const DeviceSharingGraph& pruned) {
    LabeledDataset out;
    out.graph = pruned;
    out.feature_dim = ds.feature_dim;
    const auto old_ids = ds.graph.index_by_id(NodeKind::Account);
    for (auto idx : pruned.account_indices()) {
        const auto old = old_ids.at(pruned.node(idx).external_id);
        auto rec = ds.records.at(old);
        rec.account_index = idx;
        out.records.emplace(idx, std::move(rec));
        out.split[idx] = ds.split.at(old);
        if (ds.ground_truth) {
            if (!out.ground_truth) out.ground_truth.emplace();
            (*out.ground_truth)[idx] = ds.ground_truth->at(old);
        }
    }
    return out;
}

} // namespace ringscan
