#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <ringscan/features.hpp>
#include <ringscan/graph.hpp>

namespace fixture {

/// Graph from account ids, device ids and (account id, device id) pairs.
/// Accounts get the first indices in the given order.
inline ringscan::DeviceSharingGraph graph(const std::vector<std::string>& accounts, const std::vector<std::string>& devices,
                                          const std::vector<std::pair<std::string, std::string>>& links) {
    std::vector<ringscan::NodeRef> nodes;
    for (const auto& a : accounts) nodes.push_back({nodes.size(), ringscan::NodeKind::Account, a});
    for (const auto& d : devices) nodes.push_back({nodes.size(), ringscan::NodeKind::Device, d});
    auto index_of = [&](const std::string& id, ringscan::NodeKind kind) {
        for (const auto& n : nodes)
            if (n.kind == kind && n.external_id == id) return n.index;
        throw std::runtime_error("fixture: unknown id " + id);
    };
    std::vector<ringscan::Edge> edges;
    for (const auto& [a, d] : links) {
        edges.emplace_back(index_of(a, ringscan::NodeKind::Account), index_of(d, ringscan::NodeKind::Device));
    }
    return ringscan::DeviceSharingGraph::from_edges(std::move(nodes), std::move(edges));
}

/// Dataset over `g` with standard-normal features; accounts in `high_risk`
/// (by index) are tagged HighRisk. Everything Train.
inline ringscan::LabeledDataset dataset(ringscan::DeviceSharingGraph g, std::size_t p,
                                        const std::vector<std::size_t>& high_risk, std::uint64_t seed) {
    ringscan::LabeledDataset ds;
    ds.graph = std::move(g);
    ds.feature_dim = p;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto a : ds.graph.account_indices()) {
        ringscan::AccountRecord rec{a, std::vector<double>(p), ringscan::RiskTag::NoObservableRisk};
        for (auto& v : rec.features) v = normal(rng);
        ds.records.emplace(a, std::move(rec));
    }
    for (auto a : high_risk) ds.records.at(a).tag = ringscan::RiskTag::HighRisk;
    ds.split = ringscan::all_train(ds.graph);
    return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ringscan_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

} // namespace fixture
