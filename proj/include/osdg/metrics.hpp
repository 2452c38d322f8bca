#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/io.hpp"

namespace osdg {

struct ScoredEntry {
    double ood_score = 0.0;
    bool is_ood = false;
    int true_label = 0;      // compact ID label; ignored for OOD entries
    int predicted_label = 0; // always a closed-set class
};

using ScoredTestSet = std::vector<ScoredEntry>;

namespace detail {

inline void require_both_classes(const ScoredTestSet& entries, const char* metric) {
    bool has_id = false, has_ood = false;
    for (const ScoredEntry& e : entries) (e.is_ood ? has_ood : has_id) = true;
    if (!has_id || !has_ood)
        throw MetricError(std::string(metric) +
                          " undefined: need at least one ID and one OOD entry");
}

} // namespace detail

// P(score_ood > score_id) + 1/2 P(score_ood == score_id) over all ID x OOD
// pairs, computed via midranks. With OOD as the positive class this is the
// Mann-Whitney AUROC; ties get half credit.
inline double auroc(const ScoredTestSet& entries) {
    detail::require_both_classes(entries, "auroc");
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return entries[a].ood_score < entries[b].ood_score;
    });

    double ood_rank_sum = 0.0;
    std::size_t n_ood = 0, n_id = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() &&
               entries[order[j]].ood_score == entries[order[i]].ood_score)
            ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j); // 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (entries[order[t]].is_ood) {
                ood_rank_sum += midrank;
                ++n_ood;
            } else {
                ++n_id;
            }
        }
        i = j;
    }
    const double u = ood_rank_sum -
                     static_cast<double>(n_ood) * static_cast<double>(n_ood + 1) / 2.0;
    return u / (static_cast<double>(n_id) * static_cast<double>(n_ood));
}

// Average precision with OOD positive: descending-score sweep, one threshold
// per distinct score, AP = sum over thresholds of (recall step) * precision.
inline double aupr(const ScoredTestSet& entries) {
    detail::require_both_classes(entries, "aupr");
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return entries[a].ood_score > entries[b].ood_score;
    });

    std::size_t total_pos = 0;
    for (const ScoredEntry& e : entries) total_pos += e.is_ood ? 1 : 0;

    double ap = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i, group_pos = 0;
        while (j < order.size() &&
               entries[order[j]].ood_score == entries[order[i]].ood_score) {
            group_pos += entries[order[j]].is_ood ? 1 : 0;
            ++j;
        }
        tp += group_pos;
        fp += (j - i) - group_pos;
        if (group_pos > 0) {
            const double precision =
                static_cast<double>(tp) / static_cast<double>(tp + fp);
            const double recall_step =
                static_cast<double>(group_pos) / static_cast<double>(total_pos);
            ap += recall_step * precision;
        }
        i = j;
    }
    return ap;
}

// Fraction of ID entries classified correctly; OOD entries are excluded.
inline double id_accuracy(const ScoredTestSet& entries) {
    std::size_t n_id = 0, correct = 0;
    for (const ScoredEntry& e : entries) {
        if (e.is_ood) continue;
        ++n_id;
        correct += e.predicted_label == e.true_label ? 1 : 0;
    }
    if (n_id == 0)
        throw MetricError("id_accuracy undefined: no ID entries");
    return static_cast<double>(correct) / static_cast<double>(n_id);
}

struct MetricsRow {
    double auroc = 0.0;
    double aupr = 0.0;
    double id_accuracy = 0.0;
    std::size_t n_id = 0;
    std::size_t n_ood = 0;
};

inline MetricsRow compute_metrics(const ScoredTestSet& entries) {
    MetricsRow row;
    row.auroc = auroc(entries);
    row.aupr = aupr(entries);
    row.id_accuracy = id_accuracy(entries);
    for (const ScoredEntry& e : entries) (e.is_ood ? row.n_ood : row.n_id) += 1;
    return row;
}

// Mean and sample standard deviation (n - 1 denominator, 0 for one value).
struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
    if (values.empty()) throw MetricError("aggregate undefined: no values");
    Aggregate a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

struct LabeledMetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::vector<int> ood_classes;
    std::string detector;
    MetricsRow metrics;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string ood_classes_field(const std::vector<int>& classes) {
    std::string out;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i) out += '|';
        out += std::to_string(classes[i]);
    }
    return out;
}

// One row per (run, detector); ood classes are '|'-separated inside the cell.
inline constexpr const char* kMetricsCsvHeader =
    "run_id,seed,ood_classes,detector,auroc,aupr,id_accuracy,n_id,n_ood";

inline void write_metrics_csv(const std::string& path,
                              const std::vector<LabeledMetricsRow>& rows) {
    auto os = open_output(path);
    os << kMetricsCsvHeader << '\n';
    for (const LabeledMetricsRow& r : rows) {
        os << r.run_id << ',' << r.seed << ',' << ood_classes_field(r.ood_classes)
           << ',' << r.detector << ',' << format_double(r.metrics.auroc) << ','
           << format_double(r.metrics.aupr) << ','
           << format_double(r.metrics.id_accuracy) << ',' << r.metrics.n_id << ','
           << r.metrics.n_ood << '\n';
    }
    if (!os) throw FormatError("write_metrics_csv: write to '" + path + "' failed");
}

} // namespace osdg
