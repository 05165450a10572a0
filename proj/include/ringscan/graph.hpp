#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace ringscan {

enum class NodeKind : std::uint8_t { Account, Device };

inline const char* kind_name(NodeKind k) { return k == NodeKind::Account ? "Account" : "Device"; }

struct NodeRef {
    std::size_t index = 0;
    NodeKind kind = NodeKind::Account;
    std::string external_id;

    friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Read-only compressed sparse row view: neighbors of u are
/// neighbors[offsets[u] .. offsets[u+1]).
struct AdjacencyView {
    std::span<const std::size_t> offsets;
    std::span<const std::size_t> neighbors;

    std::size_t node_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t degree(std::size_t u) const { return offsets[u + 1] - offsets[u]; }
    std::span<const std::size_t> operator[](std::size_t u) const {
        return neighbors.subspan(offsets[u], offsets[u + 1] - offsets[u]);
    }
};

/// Owning CSR adjacency for arbitrary undirected graphs. Neighbor lists are
/// kept in insertion order so callers can exercise order sensitivity.
struct CsrAdjacency {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> neighbors;

    static CsrAdjacency from_lists(const std::vector<std::vector<std::size_t>>& lists) {
        CsrAdjacency a;
        a.offsets.assign(1, 0);
        for (const auto& l : lists) {
            a.neighbors.insert(a.neighbors.end(), l.begin(), l.end());
            a.offsets.push_back(a.neighbors.size());
        }
        return a;
    }

    static CsrAdjacency from_undirected_edges(std::size_t n, const std::vector<Edge>& edges) {
        std::vector<std::vector<std::size_t>> lists(n);
        for (const auto& [a, b] : edges) {
            lists[a].push_back(b);
            lists[b].push_back(a);
        }
        for (auto& l : lists) std::sort(l.begin(), l.end());
        return from_lists(lists);
    }

    AdjacencyView view() const { return {offsets, neighbors}; }
};

/// Bipartite account/device graph. Immutable once constructed; every edge
/// joins one Account and one Device, adjacency lists are sorted and
/// duplicate free.
class DeviceSharingGraph {
public:
    DeviceSharingGraph() = default;

    /// Validates and builds. Duplicate edges collapse; self-loops, out of range
    /// indices and same-kind edges throw ValidationError.
    static DeviceSharingGraph from_edges(std::vector<NodeRef> nodes, std::vector<Edge> edges) {
        DeviceSharingGraph g;
        std::set<std::string> seen[2];
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].index != i) {
                throw ValidationError("node index " + std::to_string(nodes[i].index) +
                                      " at position " + std::to_string(i) + " is not dense");
            }
            auto& ids = seen[nodes[i].kind == NodeKind::Account ? 0 : 1];
            if (!ids.insert(nodes[i].external_id).second) {
                throw ValidationError(std::string("duplicate ") + kind_name(nodes[i].kind) +
                                      " external id '" + nodes[i].external_id + "'");
            }
        }
        const std::size_t n = nodes.size();
        for (auto& [a, b] : edges) {
            if (a >= n || b >= n) {
                throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                      ") references a node outside 0.." + std::to_string(n));
            }
            if (a == b) throw ValidationError("self-loop on node " + std::to_string(a));
            if (nodes[a].kind == nodes[b].kind) {
                throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                      ") joins two " + kind_name(nodes[a].kind) +
                                      " nodes; graph must be bipartite");
            }
            if (a > b) std::swap(a, b);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

        std::vector<std::size_t> degree(n, 0);
        for (const auto& [a, b] : edges) {
            ++degree[a];
            ++degree[b];
        }
        g.offsets_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
        g.neighbors_.resize(g.offsets_[n]);
        std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
        for (const auto& [a, b] : edges) {
            g.neighbors_[fill[a]++] = b;
            g.neighbors_[fill[b]++] = a;
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::sort(g.neighbors_.begin() + g.offsets_[i], g.neighbors_.begin() + g.offsets_[i + 1]);
        }
        g.edge_count_ = edges.size();
        g.nodes_ = std::move(nodes);
        for (const auto& node : g.nodes_) {
            if (node.kind == NodeKind::Account) ++g.account_count_;
        }
        return g;
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edge_count_; }
    std::size_t account_count() const { return account_count_; }
    std::size_t device_count() const { return nodes_.size() - account_count_; }

    const std::vector<NodeRef>& nodes() const { return nodes_; }
    const NodeRef& node(std::size_t u) const { return nodes_.at(u); }
    bool is_account(std::size_t u) const { return nodes_[u].kind == NodeKind::Account; }

    std::span<const std::size_t> neighbors(std::size_t u) const {
        return std::span<const std::size_t>(neighbors_).subspan(offsets_[u], offsets_[u + 1] - offsets_[u]);
    }
    std::size_t degree(std::size_t u) const { return offsets_[u + 1] - offsets_[u]; }
    bool has_edge(std::size_t u, std::size_t v) const {
        const auto adj = neighbors(u);
        return std::binary_search(adj.begin(), adj.end(), v);
    }

    AdjacencyView adjacency() const {
        if (nodes_.empty()) return {};
        return {offsets_, neighbors_};
    }

    /// Canonical edge list, each edge once with src < dst, sorted.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(edge_count_);
        for (std::size_t u = 0; u < nodes_.size(); ++u) {
            for (auto v : neighbors(u)) {
                if (u < v) out.emplace_back(u, v);
            }
        }
        return out;
    }

    std::vector<std::size_t> account_indices() const {
        std::vector<std::size_t> out;
        out.reserve(account_count_);
        for (const auto& node : nodes_) {
            if (node.kind == NodeKind::Account) out.push_back(node.index);
        }
        return out;
    }

    std::optional<std::size_t> find(NodeKind kind, const std::string& external_id) const {
        for (const auto& node : nodes_) {
            if (node.kind == kind && node.external_id == external_id) return node.index;
        }
        return std::nullopt;
    }

    /// external id -> index, for bulk lookups.
    std::map<std::string, std::size_t> index_by_id(NodeKind kind) const {
        std::map<std::string, std::size_t> out;
        for (const auto& node : nodes_) {
            if (node.kind == kind) out.emplace(node.external_id, node.index);
        }
        return out;
    }

    friend bool operator==(const DeviceSharingGraph& a, const DeviceSharingGraph& b) {
        return a.nodes_ == b.nodes_ && a.offsets_ == b.offsets_ && a.neighbors_ == b.neighbors_;
    }

private:
    std::vector<NodeRef> nodes_;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::size_t> neighbors_;
    std::size_t edge_count_ = 0;
    std::size_t account_count_ = 0;
};

/// Partition of node indices into connected components. Each set is sorted;
/// sets are ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> connected_components(const DeviceSharingGraph& g) {
    const std::size_t n = g.node_count();
    std::vector<std::vector<std::size_t>> out;
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> comp;
        seen[s] = true;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (auto v : g.neighbors(u)) {
                if (!seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

/// Subgraph induced by `keep` (relative order preserved, indices re-densified).
inline DeviceSharingGraph induced_subgraph(const DeviceSharingGraph& g, const std::vector<bool>& keep) {
    constexpr auto npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> remap(g.node_count(), npos);
    std::vector<NodeRef> nodes;
    for (std::size_t u = 0; u < g.node_count(); ++u) {
        if (!keep[u]) continue;
        remap[u] = nodes.size();
        NodeRef ref = g.node(u);
        ref.index = nodes.size();
        nodes.push_back(std::move(ref));
    }
    std::vector<Edge> edges;
    for (const auto& [a, b] : g.edges()) {
        if (remap[a] != npos && remap[b] != npos) edges.emplace_back(remap[a], remap[b]);
    }
    return DeviceSharingGraph::from_edges(std::move(nodes), std::move(edges));
}

struct PruneResult {
    DeviceSharingGraph graph;
    std::size_t removed_components = 0;
    std::size_t removed_accounts = 0;
    std::size_t removed_devices = 0;
};

/// Drops every connected component with fewer than two Account nodes.
inline PruneResult prune_singletons_detailed(const DeviceSharingGraph& g) {
    PruneResult r;
    std::vector<bool> keep(g.node_count(), false);
    for (const auto& comp : connected_components(g)) {
        const auto accounts = std::count_if(comp.begin(), comp.end(),
                                            [&](std::size_t u) { return g.is_account(u); });
        if (accounts >= 2) {
            for (auto u : comp) keep[u] = true;
        } else {
            ++r.removed_components;
            r.removed_accounts += static_cast<std::size_t>(accounts);
            r.removed_devices += comp.size() - static_cast<std::size_t>(accounts);
        }
    }
    r.graph = induced_subgraph(g, keep);
    return r;
}

inline DeviceSharingGraph prune_singletons(const DeviceSharingGraph& g) {
    return prune_singletons_detailed(g).graph;
}

enum class CountKind { All, AccountOnly };

/// Shortest-path distances from `source`; unreachable nodes (and nodes past
/// max_hop) are left at -1.
inline std::vector<int> bfs_distances(const DeviceSharingGraph& g, std::size_t source, int max_hop) {
    std::vector<int> dist(g.node_count(), -1);
    std::queue<std::size_t> q;
    dist[source] = 0;
    q.push(source);
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        if (dist[u] == max_hop) continue;
        for (auto v : g.neighbors(u)) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }
    return dist;
}

/// Element h-1 is the mean, over seeds, of the number of nodes at shortest-path
/// distance exactly h that satisfy `counted`.
inline std::vector<double> khop_counts_matching(const DeviceSharingGraph& g, std::span<const std::size_t> seeds,
                                                int max_hop, const std::function<bool(std::size_t)>& counted) {
    if (seeds.empty()) throw ConfigError("khop counts need at least one seed");
    if (max_hop < 1) throw ConfigError("max_hop must be >= 1");
    for (auto s : seeds) {
        if (s >= g.node_count() || !g.is_account(s)) {
            throw ValidationError("seed " + std::to_string(s) + " is not an Account node");
        }
    }
    std::vector<double> totals(static_cast<std::size_t>(max_hop), 0.0);
    for (auto s : seeds) {
        const auto dist = bfs_distances(g, s, max_hop);
        for (std::size_t v = 0; v < dist.size(); ++v) {
            if (dist[v] >= 1 && counted(v)) totals[static_cast<std::size_t>(dist[v] - 1)] += 1.0;
        }
    }
    for (auto& t : totals) t /= static_cast<double>(seeds.size());
    return totals;
}

inline std::vector<double> khop_neighbor_counts(const DeviceSharingGraph& g, std::span<const std::size_t> seeds,
                                                int max_hop, CountKind kind) {
    if (kind == CountKind::All) {
        return khop_counts_matching(g, seeds, max_hop, [](std::size_t) { return true; });
    }
    return khop_counts_matching(g, seeds, max_hop, [&](std::size_t v) { return g.is_account(v); });
}

} // namespace ringscan
