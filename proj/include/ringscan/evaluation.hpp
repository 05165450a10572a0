#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "graph.hpp"
#include "tsv.hpp"

namespace ringscan::eval {

using Scores = std::map<std::size_t, double>;
using Labels = std::map<std::size_t, bool>;

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline void require_same_keys(const Scores& scores, const Labels& labels) {
    if (scores.size() != labels.size() ||
        !std::equal(scores.begin(), scores.end(), labels.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
        throw ValidationError("scores and labels cover different accounts");
    }
}

/// An account is predicted positive iff its score >= threshold.
inline ConfusionCounts confusion(const Scores& scores, const Labels& labels, double threshold) {
    require_same_keys(scores, labels);
    ConfusionCounts c;
    auto lit = labels.begin();
    for (const auto& [id, s] : scores) {
        const bool predicted = s >= threshold;
        const bool actual = (lit++)->second;
        if (predicted) (actual ? c.tp : c.fp)++;
        else (actual ? c.fn : c.tn)++;
    }
    return c;
}

// Degenerate denominators give 0 by convention.
inline double precision(const ConfusionCounts& c) {
    return c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
}
inline double recall(const ConfusionCounts& c) {
    return c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
}
inline double f1(const ConfusionCounts& c) {
    if (c.tp == 0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

/// (FP + TP + FN) / (TP + FN): how far the flagged set expands the labeled
/// fraud set.
inline double detection_expansion(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) throw ValidationError("detection expansion undefined: no positive labels");
    return static_cast<double>(c.fp + c.tp + c.fn) / static_cast<double>(c.tp + c.fn);
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Points at distinct score values in decreasing order. With max_points set
/// and fewer than the number of distinct scores, thresholds are spread evenly
/// over the distinct scores, always keeping the lowest (recall 1).
inline std::vector<PrPoint> pr_curve(const Scores& scores, const Labels& labels,
                                     std::optional<std::size_t> max_points = std::nullopt) {
    require_same_keys(scores, labels);
    std::vector<std::pair<double, bool>> rows;
    rows.reserve(scores.size());
    std::size_t positives = 0;
    auto lit = labels.begin();
    for (const auto& [id, s] : scores) {
        rows.emplace_back(s, (lit++)->second);
        positives += rows.back().second ? 1 : 0;
    }
    if (positives == 0) throw ValidationError("PR curve needs at least one positive label");
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<PrPoint> all;
    std::size_t tp = 0, flagged = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ++flagged;
        tp += rows[i].second ? 1 : 0;
        if (i + 1 < rows.size() && rows[i + 1].first == rows[i].first) continue;
        all.push_back({rows[i].first, static_cast<double>(tp) / static_cast<double>(flagged),
                       static_cast<double>(tp) / static_cast<double>(positives)});
    }
    if (!max_points || *max_points >= all.size() || *max_points == 0) return all;
    std::vector<PrPoint> out;
    const std::size_t m = *max_points;
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t idx = m == 1 ? all.size() - 1 : k * (all.size() - 1) / (m - 1);
        if (out.empty() || out.back().threshold != all[idx].threshold) out.push_back(all[idx]);
    }
    return out;
}

struct OperatingPoint {
    double threshold = 0.0;
    ConfusionCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double detection_expansion = 0.0;
};

/// Threshold (among distinct scores) maximizing F1; ties keep the higher
/// threshold.
inline OperatingPoint best_f1_point(const Scores& scores, const Labels& labels) {
    const auto curve = pr_curve(scores, labels);
    OperatingPoint best;
    bool first = true;
    for (const auto& pt : curve) {
        const auto c = confusion(scores, labels, pt.threshold);
        const double f = f1(c);
        if (first || f > best.f1) {
            best = {pt.threshold, c, precision(c), recall(c), f, detection_expansion(c)};
            first = false;
        }
    }
    return best;
}

struct ModelRow {
    std::string model;
    OperatingPoint point;
    std::vector<PrPoint> curve;
};

enum class LabelSource { Tags, GroundTruth };

/// Mean number of `counted` nodes at each hop distance around a seed group.
struct HopHistogram {
    std::string seeds;   // "fraudulent" or "regular"
    std::string counted; // "all", "accounts" or "fraudulent"
    std::vector<double> mean_counts; // element h-1 is hop h
};

inline constexpr int kHopHistogramMaxHop = 4;

struct EvalReport {
    LabelSource label_source = LabelSource::Tags;
    std::vector<ModelRow> rows;
    std::vector<HopHistogram> hop_histograms;
    std::vector<std::string> warnings;
    // Test accounts whose rule tag disagrees with ground truth (when available).
    std::optional<std::size_t> tag_truth_disagreements;
    std::size_t evaluated_accounts = 0;
};

/// Labels for the Test split from rule tags (HighRisk = positive) or from
/// ground truth.
inline Labels test_labels(const LabeledDataset& ds, LabelSource source) {
    Labels out;
    for (auto idx : ds.accounts(Split::Test)) {
        if (source == LabelSource::Tags) {
            out[idx] = ds.records.at(idx).tag == RiskTag::HighRisk;
        } else {
            if (!ds.ground_truth) throw ValidationError("dataset has no ground truth");
            out[idx] = ds.ground_truth->at(idx);
        }
    }
    return out;
}

/// Whether each account is fraudulent under `source`, over every account.
inline Labels all_labels(const LabeledDataset& ds, LabelSource source) {
    Labels out;
    for (const auto& [idx, rec] : ds.records) {
        if (source == LabelSource::Tags) {
            out[idx] = rec.tag == RiskTag::HighRisk;
        } else {
            if (!ds.ground_truth) throw ValidationError("dataset has no ground truth");
            out[idx] = ds.ground_truth->at(idx);
        }
    }
    return out;
}

/// Neighborhood size per hop around fraudulent vs regular accounts, over the
/// whole graph. Empty seed groups are skipped.
inline std::vector<HopHistogram> hop_histograms(const LabeledDataset& ds, LabelSource source, int max_hop) {
    const auto labels = all_labels(ds, source);
    std::vector<std::size_t> fraud, regular;
    for (const auto& [idx, y] : labels) (y ? fraud : regular).push_back(idx);
    const auto& g = ds.graph;
    const std::vector<std::pair<std::string, std::function<bool(std::size_t)>>> counters{
        {"all", [](std::size_t) { return true; }},
        {"accounts", [&](std::size_t v) { return g.is_account(v); }},
        {"fraudulent", [&](std::size_t v) { return g.is_account(v) && labels.at(v); }},
    };
    std::vector<HopHistogram> out;
    for (const auto& [group, seeds] : {std::pair<std::string, const std::vector<std::size_t>*>{"fraudulent", &fraud},
                                       std::pair<std::string, const std::vector<std::size_t>*>{"regular", &regular}}) {
        if (seeds->empty()) continue;
        for (const auto& [name, pred] : counters) {
            out.push_back({group, name, khop_counts_matching(g, *seeds, max_hop, pred)});
        }
    }
    return out;
}

using ModelScores = std::vector<std::pair<std::string, std::optional<Scores>>>;

/// Table-style comparison at each model's F1-maximizing Test threshold.
/// Models without scores are omitted with a warning.
inline EvalReport compare_models(const LabeledDataset& ds, const ModelScores& models,
                                 LabelSource source = LabelSource::Tags) {
    EvalReport report;
    report.label_source = source;
    const auto labels = test_labels(ds, source);
    report.evaluated_accounts = labels.size();
    if (ds.ground_truth) {
        std::size_t diff = 0;
        for (auto idx : ds.accounts(Split::Test)) {
            diff += (ds.records.at(idx).tag == RiskTag::HighRisk) != ds.ground_truth->at(idx) ? 1 : 0;
        }
        report.tag_truth_disagreements = diff;
    }
    for (const auto& [name, scores] : models) {
        if (!scores) {
            report.warnings.push_back("model '" + name + "' missing; column omitted");
            continue;
        }
        report.rows.push_back({name, best_f1_point(*scores, labels), pr_curve(*scores, labels)});
    }
    report.hop_histograms = hop_histograms(ds, source, kHopHistogramMaxHop);
    return report;
}

inline void write_report(const EvalReport& r, std::ostream& out) {
    out << "model\tthreshold\tprecision\trecall\tf1\tde\n";
    for (const auto& row : r.rows) {
        const auto& p = row.point;
        out << row.model << '\t' << tsv::format_exact(p.threshold) << '\t' << tsv::format_sig(p.precision, 6) << '\t'
            << tsv::format_sig(p.recall, 6) << '\t' << tsv::format_sig(p.f1, 6) << '\t'
            << tsv::format_sig(p.detection_expansion, 6) << '\n';
    }
}

inline void write_pr_curves(const EvalReport& r, std::ostream& out) {
    out << "model\tthreshold\tprecision\trecall\n";
    for (const auto& row : r.rows) {
        for (const auto& pt : row.curve) {
            out << row.model << '\t' << tsv::format_exact(pt.threshold) << '\t' << tsv::format_sig(pt.precision, 9)
                << '\t' << tsv::format_sig(pt.recall, 9) << '\n';
        }
    }
}

inline void write_hop_histograms(const EvalReport& r, std::ostream& out) {
    out << "seeds\tcounted\thop\tmean_count\n";
    for (const auto& h : r.hop_histograms) {
        for (std::size_t i = 0; i < h.mean_counts.size(); ++i) {
            out << h.seeds << '\t' << h.counted << '\t' << (i + 1) << '\t' << tsv::format_sig(h.mean_counts[i], 9) << '\n';
        }
    }
}

} // namespace ringscan::eval
