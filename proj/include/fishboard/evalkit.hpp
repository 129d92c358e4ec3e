// evalkit.hpp - detection, classification and regression metrics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fishboard/common.hpp"
#include "fishboard/mask.hpp"

namespace fishboard {

// ---------------------------------------------------------------------------
// Instance matching

struct MatchedPair {
    std::size_t pred_index = 0;
    std::size_t truth_index = 0;
    double iou = 0.0;
};

struct Matching {
    std::vector<MatchedPair> pairs;
    std::vector<std::size_t> unmatched_pred;
    std::vector<std::size_t> unmatched_truth;
};

// Greedy one-to-one matching by descending IoU; candidate pairs below the
// threshold never match, ties resolve by (pred index, truth index).
inline Matching match_instances(const std::vector<Mask>& pred, const std::vector<Mask>& truth,
                                double iou_threshold) {
    struct Candidate {
        double iou;
        std::size_t p, t;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < pred.size(); ++p)
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (pred[p].empty() || truth[t].empty()) continue;
            const double iou = mask_iou(pred[p], truth[t]);
            if (iou >= iou_threshold && iou > 0.0) candidates.push_back({iou, p, t});
        }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.p != b.p) return a.p < b.p;
        return a.t < b.t;
    });
    Matching m;
    std::vector<bool> used_pred(pred.size(), false), used_truth(truth.size(), false);
    for (const Candidate& c : candidates) {
        if (used_pred[c.p] || used_truth[c.t]) continue;
        used_pred[c.p] = true;
        used_truth[c.t] = true;
        m.pairs.push_back({c.p, c.t, c.iou});
    }
    for (std::size_t p = 0; p < pred.size(); ++p)
        if (!used_pred[p]) m.unmatched_pred.push_back(p);
    for (std::size_t t = 0; t < truth.size(); ++t)
        if (!used_truth[t]) m.unmatched_truth.push_back(t);
    return m;
}

// ---------------------------------------------------------------------------
// Count agreement

struct CountConfusion {
    std::vector<std::vector<std::int64_t>> matrix;  // [true][detected], 0..max
    std::int64_t n_scenes = 0;
    double agreement_rate = 0.0;
    double over_rate = 0.0;
    double under_rate = 0.0;
};

inline CountConfusion count_confusion(const std::vector<int>& true_counts,
                                      const std::vector<int>& detected_counts) {
    if (true_counts.size() != detected_counts.size())
        throw DataError("count_confusion: list length mismatch");
    if (true_counts.empty()) throw DataError("count_confusion: empty input");
    int max_count = 0;
    for (std::size_t i = 0; i < true_counts.size(); ++i) {
        if (true_counts[i] < 0 || detected_counts[i] < 0)
            throw DataError("count_confusion: negative count");
        max_count = std::max({max_count, true_counts[i], detected_counts[i]});
    }
    CountConfusion c;
    c.n_scenes = static_cast<std::int64_t>(true_counts.size());
    c.matrix.assign(static_cast<std::size_t>(max_count) + 1,
                    std::vector<std::int64_t>(static_cast<std::size_t>(max_count) + 1, 0));
    std::int64_t agree = 0, over = 0, under = 0;
    for (std::size_t i = 0; i < true_counts.size(); ++i) {
        c.matrix[static_cast<std::size_t>(true_counts[i])]
                [static_cast<std::size_t>(detected_counts[i])] += 1;
        if (detected_counts[i] == true_counts[i]) ++agree;
        else if (detected_counts[i] > true_counts[i]) ++over;
        else ++under;
    }
    c.agreement_rate = static_cast<double>(agree) / static_cast<double>(c.n_scenes);
    c.over_rate = static_cast<double>(over) / static_cast<double>(c.n_scenes);
    c.under_rate = static_cast<double>(under) / static_cast<double>(c.n_scenes);
    return c;
}

// ---------------------------------------------------------------------------
// Regression metrics

struct RegressionReport {
    double mae_cm = 0.0;
    double r2 = 0.0;
    double mean_relative_error = 0.0;
    std::vector<double> relative_errors;   // (pred - truth) / truth
    std::vector<double> decile_edges_cm;   // 11 edges over the truth range
    std::vector<double> decile_mae_cm;     // MAE inside each truth decile
    std::vector<std::int64_t> decile_counts;
};

inline RegressionReport regression_metrics(const std::vector<double>& preds,
                                           const std::vector<double>& truths) {
    if (preds.size() != truths.size()) throw DataError("regression_metrics: length mismatch");
    if (preds.empty()) throw DataError("regression_metrics: empty input");
    RegressionReport r;
    double truth_mean = 0.0;
    for (double t : truths) truth_mean += t;
    truth_mean /= static_cast<double>(truths.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        r.mae_cm += std::abs(preds[i] - truths[i]);
        sse += (preds[i] - truths[i]) * (preds[i] - truths[i]);
        sst += (truths[i] - truth_mean) * (truths[i] - truth_mean);
        r.relative_errors.push_back((preds[i] - truths[i]) / truths[i]);
        r.mean_relative_error += r.relative_errors.back();
    }
    r.mae_cm /= static_cast<double>(preds.size());
    r.mean_relative_error /= static_cast<double>(preds.size());
    if (sst <= 0.0) throw DataError("regression_metrics: zero truth variance, R2 undefined");
    r.r2 = 1.0 - sse / sst;

    // per-decile MAE over the truth distribution
    std::vector<double> sorted(truths);
    std::sort(sorted.begin(), sorted.end());
    r.decile_edges_cm.resize(11);
    for (int d = 0; d <= 10; ++d) {
        const double q = d / 10.0;
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        r.decile_edges_cm[static_cast<std::size_t>(d)] =
            sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    }
    r.decile_mae_cm.assign(10, 0.0);
    r.decile_counts.assign(10, 0);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        int bin = 9;
        for (int d = 0; d < 10; ++d) {
            if (truths[i] <= r.decile_edges_cm[static_cast<std::size_t>(d + 1)]) {
                bin = d;
                break;
            }
        }
        r.decile_mae_cm[static_cast<std::size_t>(bin)] += std::abs(preds[i] - truths[i]);
        r.decile_counts[static_cast<std::size_t>(bin)] += 1;
    }
    for (int d = 0; d < 10; ++d)
        if (r.decile_counts[static_cast<std::size_t>(d)] > 0)
            r.decile_mae_cm[static_cast<std::size_t>(d)] /=
                static_cast<double>(r.decile_counts[static_cast<std::size_t>(d)]);
    return r;
}

// ---------------------------------------------------------------------------
// Distribution comparison: two-sample Kolmogorov-Smirnov statistic.

inline double ks_distance(const std::vector<double>& sample_a,
                          const std::vector<double>& sample_b) {
    if (sample_a.empty() || sample_b.empty()) throw DataError("ks_distance: empty sample");
    std::vector<double> a(sample_a), b(sample_b);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// ---------------------------------------------------------------------------
// IoU summaries

struct IouSummary {
    std::int64_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

namespace detail {
// linear-interpolation quantile over a sorted sample
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}
}  // namespace detail

inline IouSummary iou_summary(const std::vector<double>& ious) {
    if (ious.empty()) throw DataError("iou_summary: empty input");
    std::vector<double> sorted(ious);
    std::sort(sorted.begin(), sorted.end());
    IouSummary s;
    s.count = static_cast<std::int64_t>(sorted.size());
    for (double v : sorted) s.mean += v;
    s.mean /= static_cast<double>(sorted.size());
    s.min = sorted.front();
    s.max = sorted.back();
    s.q1 = detail::quantile_sorted(sorted, 0.25);
    s.median = detail::quantile_sorted(sorted, 0.5);
    s.q3 = detail::quantile_sorted(sorted, 0.75);
    return s;
}

inline std::map<std::string, IouSummary> iou_summary_per_class(
    const std::vector<std::pair<ObjectClass, double>>& matched) {
    if (matched.empty()) throw DataError("iou_summary_per_class: empty input");
    std::map<std::string, std::vector<double>> per_class;
    for (const auto& [cls, iou] : matched) per_class[to_string(cls)].push_back(iou);
    std::map<std::string, IouSummary> out;
    for (const auto& [name, ious] : per_class) out[name] = iou_summary(ious);
    return out;
}

}  // namespace fishboard
