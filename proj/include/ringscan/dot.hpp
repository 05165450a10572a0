#pragma once

#include <map>
#include <ostream>
#include <string>

#include "features.hpp"
#include "graph.hpp"
#include "tsv.hpp"

namespace ringscan {

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

/// Accounts are ellipses, devices boxes; HighRisk accounts are filled red.
inline void write_dot(const DeviceSharingGraph& g, const std::map<std::size_t, RiskTag>* tags, std::ostream& out) {
    out << "graph device_sharing {\n";
    out << "  node [fontsize=10];\n";
    for (const auto& node : g.nodes()) {
        out << "  n" << node.index << " [label=" << dot_quote(node.external_id);
        if (node.kind == NodeKind::Account) {
            out << ", shape=ellipse";
            if (tags) {
                const auto it = tags->find(node.index);
                if (it != tags->end() && it->second == RiskTag::HighRisk) out << ", style=filled, fillcolor=red";
            }
        } else {
            out << ", shape=box, style=filled, fillcolor=lightgray";
        }
        out << "];\n";
    }
    for (const auto& [a, b] : g.edges()) out << "  n" << a << " -- n" << b << ";\n";
    out << "}\n";
}

inline void export_dot(const DeviceSharingGraph& g, const std::map<std::size_t, RiskTag>* tags, const std::string& path) {
    auto out = tsv::open_out(path);
    write_dot(g, tags, out);
    if (!out) throw IoError("write failed: " + path);
}

inline std::map<std::size_t, RiskTag> tags_of(const LabeledDataset& ds) {
    std::map<std::size_t, RiskTag> out;
    for (const auto& [idx, rec] : ds.records) out.emplace(idx, rec.tag);
    return out;
}

} // namespace ringscan
