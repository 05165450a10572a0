#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "tsv.hpp"

namespace ringscan {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct LoginEvent {
    std::string account_external_id;
    std::string device_umid;
    std::int64_t timestamp = 0;
};

struct ClaimEvent {
    std::string account_external_id;
    std::int64_t timestamp = 0;
};

/// Both windows are half-open and end at reference_time:
/// an event is inside iff reference_time - days*86400 <= t < reference_time.
struct WindowConfig {
    std::int64_t reference_time = 0;
    int claim_window_days = 30;
    int device_window_days = 40;

    void validate() const {
        if (claim_window_days <= 0 || device_window_days <= 0) {
            throw ConfigError("claim and device windows must be positive");
        }
    }
    bool in_claim_window(std::int64_t t) const {
        return t >= reference_time - claim_window_days * kSecondsPerDay && t < reference_time;
    }
    bool in_device_window(std::int64_t t) const {
        return t >= reference_time - device_window_days * kSecondsPerDay && t < reference_time;
    }
};

/// Accounts that claimed inside the claim window, joined to every device they
/// logged into inside the device window. Accounts come first ordered by
/// (first claim time, id); devices follow ordered by (first login time, id).
inline DeviceSharingGraph build_graph(const std::vector<ClaimEvent>& claims, const std::vector<LoginEvent>& logins,
                                      const WindowConfig& window) {
    window.validate();
    for (const auto& c : claims) {
        if (c.timestamp < 0) throw ValidationError("negative claim timestamp for " + c.account_external_id);
    }
    for (const auto& l : logins) {
        if (l.timestamp < 0) throw ValidationError("negative login timestamp for " + l.account_external_id);
    }

    std::map<std::string, std::int64_t> first_claim;
    for (const auto& c : claims) {
        if (!window.in_claim_window(c.timestamp)) continue;
        auto [it, inserted] = first_claim.emplace(c.account_external_id, c.timestamp);
        if (!inserted) it->second = std::min(it->second, c.timestamp);
    }

    std::map<std::string, std::int64_t> first_login;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& l : logins) {
        if (!window.in_device_window(l.timestamp) || !first_claim.contains(l.account_external_id)) continue;
        auto [it, inserted] = first_login.emplace(l.device_umid, l.timestamp);
        if (!inserted) it->second = std::min(it->second, l.timestamp);
        pairs.emplace_back(l.account_external_id, l.device_umid);
    }

    using Keyed = std::tuple<std::int64_t, std::string>;
    std::vector<Keyed> accounts;
    for (const auto& [id, t] : first_claim) accounts.emplace_back(t, id);
    std::sort(accounts.begin(), accounts.end());
    std::vector<Keyed> devices;
    for (const auto& [id, t] : first_login) devices.emplace_back(t, id);
    std::sort(devices.begin(), devices.end());

    std::vector<NodeRef> nodes;
    nodes.reserve(accounts.size() + devices.size());
    std::map<std::string, std::size_t> account_index, device_index;
    for (const auto& [t, id] : accounts) {
        account_index[id] = nodes.size();
        nodes.push_back({nodes.size(), NodeKind::Account, id});
    }
    for (const auto& [t, id] : devices) {
        device_index[id] = nodes.size();
        nodes.push_back({nodes.size(), NodeKind::Device, id});
    }
    std::vector<Edge> edges;
    edges.reserve(pairs.size());
    for (const auto& [acct, dev] : pairs) edges.emplace_back(account_index.at(acct), device_index.at(dev));
    return DeviceSharingGraph::from_edges(std::move(nodes), std::move(edges));
}

inline std::vector<LoginEvent> read_logins(const std::string& path) {
    auto in = tsv::open_in(path);
    std::vector<LoginEvent> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const auto f = tsv::split(line);
        if (f.size() != 3) {
            throw ParseError(tsv::where(path, line_no) + ": expected account_id<TAB>umid<TAB>unix_seconds");
        }
        const auto t = tsv::parse_int<std::int64_t>(f[2], path, line_no);
        if (t < 0) throw ParseError(tsv::where(path, line_no) + ": negative timestamp");
        out.push_back({std::string(f[0]), std::string(f[1]), t});
    }
    return out;
}

inline std::vector<ClaimEvent> read_claims(const std::string& path) {
    auto in = tsv::open_in(path);
    std::vector<ClaimEvent> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        tsv::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const auto f = tsv::split(line);
        if (f.size() != 2) {
            throw ParseError(tsv::where(path, line_no) + ": expected account_id<TAB>unix_seconds");
        }
        const auto t = tsv::parse_int<std::int64_t>(f[1], path, line_no);
        if (t < 0) throw ParseError(tsv::where(path, line_no) + ": negative timestamp");
        out.push_back({std::string(f[0]), t});
    }
    return out;
}

inline void write_logins(const std::vector<LoginEvent>& logins, const std::string& path) {
    auto out = tsv::open_out(path);
    for (const auto& l : logins) out << l.account_external_id << '\t' << l.device_umid << '\t' << l.timestamp << '\n';
    if (!out) throw IoError("write failed: " + path);
}

inline void write_claims(const std::vector<ClaimEvent>& claims, const std::string& path) {
    auto out = tsv::open_out(path);
    for (const auto& c : claims) out << c.account_external_id << '\t' << c.timestamp << '\n';
    if (!out) throw IoError("write failed: " + path);
}

} // namespace ringscan
