#pragma once

#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "tsv.hpp"

namespace ringscan {

// Graph file layout:
//
//   #nodes
//   <index>\t<A|D>\t<external_id>
//   ...
//   <blank line>
//   #edges
//   <src>\t<dst>          (src < dst, sorted)
//
// Output is canonical: saving a loaded graph reproduces the input bytes.

inline void write_graph(const DeviceSharingGraph& g, std::ostream& out) {
    out << "#nodes\n";
    for (const auto& node : g.nodes()) {
        out << node.index << '\t' << (node.kind == NodeKind::Account ? 'A' : 'D') << '\t' << node.external_id << '\n';
    }
    out << "\n#edges\n";
    for (const auto& [a, b] : g.edges()) out << a << '\t' << b << '\n';
}

inline void save_graph(const DeviceSharingGraph& g, const std::string& path) {
    auto out = tsv::open_out(path);
    write_graph(g, out);
    if (!out) throw IoError("write failed: " + path);
}

inline DeviceSharingGraph load_graph(const std::string& path) {
    auto in = tsv::open_in(path);
    enum class Section { None, Nodes, Edges } section = Section::None;
    std::vector<NodeRef> nodes;
    std::vector<Edge> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty()) continue;
        if (line == "#nodes") {
            section = Section::Nodes;
            continue;
        }
        if (line == "#edges") {
            section = Section::Edges;
            continue;
        }
        const auto f = tsv::split(line);
        switch (section) {
        case Section::None:
            throw ParseError(tsv::where(path, line_no) + ": expected '#nodes' header");
        case Section::Nodes: {
            if (f.size() != 3) throw ParseError(tsv::where(path, line_no) + ": expected index<TAB>kind<TAB>external_id");
            const auto idx = tsv::parse_int<std::size_t>(f[0], path, line_no);
            if (idx != nodes.size()) {
                throw ParseError(tsv::where(path, line_no) + ": node index " + std::to_string(idx) +
                                 " out of sequence (expected " + std::to_string(nodes.size()) + ")");
            }
            NodeKind kind;
            if (f[1] == "A") kind = NodeKind::Account;
            else if (f[1] == "D") kind = NodeKind::Device;
            else throw ParseError(tsv::where(path, line_no) + ": node kind must be A or D");
            if (f[2].empty()) throw ParseError(tsv::where(path, line_no) + ": empty external id");
            nodes.push_back({idx, kind, std::string(f[2])});
            break;
        }
        case Section::Edges: {
            if (f.size() != 2) throw ParseError(tsv::where(path, line_no) + ": expected src<TAB>dst");
            const auto a = tsv::parse_int<std::size_t>(f[0], path, line_no);
            const auto b = tsv::parse_int<std::size_t>(f[1], path, line_no);
            if (a >= b) throw ParseError(tsv::where(path, line_no) + ": edge rows need src < dst");
            if (b >= nodes.size()) {
                throw ValidationError(tsv::where(path, line_no) + ": edge references unknown node " + std::to_string(b));
            }
            if (nodes[a].kind == nodes[b].kind) {
                throw ValidationError(tsv::where(path, line_no) + ": edge joins two " + kind_name(nodes[a].kind) +
                                      " nodes; graph must be bipartite");
            }
            edges.emplace_back(a, b);
            break;
        }
        }
    }
    if (section == Section::None && line_no > 0) throw ParseError(path + ": missing '#nodes' section");
    return DeviceSharingGraph::from_edges(std::move(nodes), std::move(edges));
}

} // namespace ringscan
