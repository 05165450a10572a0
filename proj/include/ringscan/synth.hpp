#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "events.hpp"
#include "features.hpp"
#include "graph.hpp"

namespace ringscan {

using IntRange = std::pair<int, int>;

struct SynthConfig {
    int n_regular_accounts = 2000;
    int n_rings = 20;
    IntRange ring_size_range{8, 8};
    IntRange devices_per_ring_range{2, 4};
    IntRange regular_devices_per_account_range{1, 2};
    double family_share_prob = 0.2;
    double tag_miss_rate = 0.3;
    int feature_dim = 12;
    double fraud_feature_shift = 1.5;
    // Standard deviation of the per-ring offset added on top of the shift.
    double ring_offset_scale = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        auto check_range = [](const IntRange& r, int lo, const char* name) {
            if (r.first < lo || r.second < r.first) {
                throw ConfigError(std::string(name) + " must satisfy " + std::to_string(lo) + " <= min <= max");
            }
        };
        if (n_regular_accounts < 0 || n_rings < 0) throw ConfigError("account and ring counts must be non-negative");
        check_range(ring_size_range, 1, "ring_size_range");
        check_range(devices_per_ring_range, 1, "devices_per_ring_range");
        check_range(regular_devices_per_account_range, 0, "regular_devices_per_account_range");
        if (!(family_share_prob >= 0.0 && family_share_prob <= 1.0)) throw ConfigError("family_share_prob must be in [0, 1]");
        if (!(tag_miss_rate >= 0.0 && tag_miss_rate < 1.0)) throw ConfigError("tag_miss_rate must be in [0, 1)");
        if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
        if (!std::isfinite(fraud_feature_shift) || !(ring_offset_scale >= 0.0)) {
            throw ConfigError("fraud_feature_shift must be finite and ring_offset_scale >= 0");
        }
        if (n_regular_accounts == 0 && n_rings == 0) throw ConfigError("configuration yields zero accounts");
    }

    // Dimensions [0, shifted_dims()) carry the fraud mean shift.
    int shifted_dims() const { return (feature_dim + 2) / 3; }
};

struct SynthResult {
    LabeledDataset dataset;
    std::vector<ClaimEvent> claims;
    std::vector<LoginEvent> logins;
    WindowConfig window;
    // Account indices (in dataset.graph) of each ring.
    std::vector<std::vector<std::size_t>> rings;
    // Accounts that prune_singletons would remove.
    std::size_t prunable_accounts = 0;
};

inline constexpr std::int64_t kSynthReferenceTime = 1700000000;

/// Colluder rings (k accounts fully joined to m shared devices) plus regular
/// accounts with private devices and occasional two-account family sharing.
/// The graph is produced by build_graph over generated event logs.
inline SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    auto uniform_int = [&](IntRange r) { return std::uniform_int_distribution<int>(r.first, r.second)(rng); };

    // Accounts 0..n_fraud-1 are ring members, the rest regular (internal numbering only).
    std::vector<int> ring_of;
    std::vector<std::vector<int>> account_devices;
    int n_devices = 0;
    for (int r = 0; r < cfg.n_rings; ++r) {
        const int k = uniform_int(cfg.ring_size_range);
        const int m = uniform_int(cfg.devices_per_ring_range);
        std::vector<int> devs(static_cast<std::size_t>(m));
        for (auto& d : devs) d = n_devices++;
        for (int i = 0; i < k; ++i) {
            ring_of.push_back(r);
            account_devices.push_back(devs);
        }
    }
    const int n_fraud = static_cast<int>(ring_of.size());
    for (int i = 0; i < cfg.n_regular_accounts; ++i) {
        ring_of.push_back(-1);
        std::vector<int> devs(static_cast<std::size_t>(uniform_int(cfg.regular_devices_per_account_range)));
        for (auto& d : devs) d = n_devices++;
        account_devices.push_back(std::move(devs));
    }
    const int n_accounts = static_cast<int>(ring_of.size());
    if (cfg.n_regular_accounts >= 2) {
        std::bernoulli_distribution share(cfg.family_share_prob);
        std::uniform_int_distribution<int> other(0, cfg.n_regular_accounts - 2);
        for (int i = 0; i < cfg.n_regular_accounts; ++i) {
            if (!share(rng)) continue;
            int j = other(rng);
            if (j >= i) ++j;
            const int dev = n_devices++;
            account_devices[static_cast<std::size_t>(n_fraud + i)].push_back(dev);
            account_devices[static_cast<std::size_t>(n_fraud + j)].push_back(dev);
        }
    }

    // Public ids are a random relabeling so files do not reveal ring membership.
    auto shuffled_names = [&](int n, const char* prefix) {
        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::string> names;
        names.reserve(perm.size());
        char buf[32];
        for (int p : perm) {
            std::snprintf(buf, sizeof buf, "%s%06d", prefix, p);
            names.emplace_back(buf);
        }
        return names;
    };
    const auto account_names = shuffled_names(n_accounts, "acct");
    const auto device_names = shuffled_names(n_devices, "umid");

    const int shifted = cfg.shifted_dims();
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> ring_offsets(static_cast<std::size_t>(cfg.n_rings));
    for (auto& off : ring_offsets) {
        off.resize(static_cast<std::size_t>(shifted));
        for (auto& v : off) v = cfg.ring_offset_scale * normal(rng);
    }
    std::vector<std::vector<double>> features(static_cast<std::size_t>(n_accounts));
    for (int a = 0; a < n_accounts; ++a) {
        auto& f = features[static_cast<std::size_t>(a)];
        f.resize(static_cast<std::size_t>(cfg.feature_dim));
        for (auto& v : f) v = normal(rng);
        const int r = ring_of[static_cast<std::size_t>(a)];
        if (r >= 0) {
            for (int j = 0; j < shifted; ++j) {
                f[static_cast<std::size_t>(j)] += cfg.fraud_feature_shift + ring_offsets[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
            }
        }
        // Stored at file precision so emitted data reloads bit-identically.
        for (auto& v : f) v = tsv::round_sig(v, 9);
    }
    std::bernoulli_distribution missed(cfg.tag_miss_rate);
    std::vector<RiskTag> tags(static_cast<std::size_t>(n_accounts), RiskTag::NoObservableRisk);
    for (int a = 0; a < n_fraud; ++a) {
        tags[static_cast<std::size_t>(a)] = missed(rng) ? RiskTag::NoObservableRisk : RiskTag::HighRisk;
    }

    SynthResult out;
    out.window.reference_time = kSynthReferenceTime;
    const std::int64_t ref = kSynthReferenceTime;
    std::uniform_int_distribution<std::int64_t> claim_time(ref - out.window.claim_window_days * kSecondsPerDay, ref - 1);
    std::uniform_int_distribution<std::int64_t> login_time(ref - out.window.device_window_days * kSecondsPerDay, ref - 1);
    std::uniform_int_distribution<int> claim_count(1, 2), login_count(1, 3);
    for (int a = 0; a < n_accounts; ++a) {
        const auto& name = account_names[static_cast<std::size_t>(a)];
        for (int c = claim_count(rng); c > 0; --c) out.claims.push_back({name, claim_time(rng)});
        for (int d : account_devices[static_cast<std::size_t>(a)]) {
            for (int l = login_count(rng); l > 0; --l) {
                out.logins.push_back({name, device_names[static_cast<std::size_t>(d)], login_time(rng)});
            }
        }
    }

    auto& ds = out.dataset;
    ds.graph = build_graph(out.claims, out.logins, out.window);
    ds.feature_dim = static_cast<std::size_t>(cfg.feature_dim);
    ds.ground_truth.emplace();
    const auto index_of = ds.graph.index_by_id(NodeKind::Account);
    out.rings.resize(static_cast<std::size_t>(cfg.n_rings));
    for (int a = 0; a < n_accounts; ++a) {
        const auto idx = index_of.at(account_names[static_cast<std::size_t>(a)]);
        ds.records.emplace(idx, AccountRecord{idx, features[static_cast<std::size_t>(a)], tags[static_cast<std::size_t>(a)]});
        const int r = ring_of[static_cast<std::size_t>(a)];
        (*ds.ground_truth)[idx] = r >= 0;
        if (r >= 0) out.rings[static_cast<std::size_t>(r)].push_back(idx);
    }
    for (auto& ring : out.rings) std::sort(ring.begin(), ring.end());
    ds.split = all_train(ds.graph);
    ds.validate();
    out.prunable_accounts = prune_singletons_detailed(ds.graph).removed_accounts;
    return out;
}

namespace synth_files {
inline constexpr const char* claims = "claims.tsv";
inline constexpr const char* logins = "logins.tsv";
} // namespace synth_files

/// Writes the dataset files plus the raw event logs it was built from.
inline void emit(const SynthResult& r, const std::filesystem::path& out_dir) {
    save_dataset(r.dataset, out_dir);
    write_claims(r.claims, (out_dir / synth_files::claims).string());
    write_logins(r.logins, (out_dir / synth_files::logins).string());
}

} // namespace ringscan
