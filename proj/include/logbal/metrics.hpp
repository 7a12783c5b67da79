#pragma once

// Confusion counts and the four evaluation measures (accuracy, precision,
// recall, F-measure), reported once per label. Undefined metrics surface
// as "n/a", never as a silent 0 or 1.

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "logbal/corpus.hpp"
#include "logbal/errors.hpp"

namespace logbal {

struct ConfusionCounts {
    uint64_t tp = 0;
    uint64_t tn = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;

    uint64_t total() const { return tp + tn + fp + fn; }
};

inline double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw UndefinedMetricError("accuracy: no evaluated records");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

inline double precision(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) throw UndefinedMetricError("precision: no positive predictions");
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline double recall(const ConfusionCounts& c) {
    if (c.tp + c.fn == 0) throw UndefinedMetricError("recall: no positive instances");
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

/// Harmonic mean 2PR/(P+R).
inline double f_measure(double p, double r) {
    if (p + r == 0.0) throw UndefinedMetricError("f_measure: precision + recall is zero");
    return 2.0 * p * r / (p + r);
}

struct LabelRow {
    int label = 0; // 0 = negative, 1 = positive
    ConfusionCounts counts;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f_measure;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<LabelRow> rows; // exactly labels {0, 1}
};

struct PredictionPair {
    int predicted = 0;
    int truth = 0;
};

/// Computes counts per label (treating that label as the positive class),
/// then precision/recall/F per label and overall accuracy once.
inline MetricsReport per_label_report(const std::vector<PredictionPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("per_label_report: empty input");
    MetricsReport report;
    uint64_t correct = 0;
    for (const auto& p : pairs)
        if (p.predicted == p.truth) ++correct;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());

    for (int label : {0, 1}) {
        LabelRow row;
        row.label = label;
        for (const auto& p : pairs) {
            const bool pred_pos = p.predicted == label;
            const bool true_pos = p.truth == label;
            if (pred_pos && true_pos)
                ++row.counts.tp;
            else if (pred_pos && !true_pos)
                ++row.counts.fp;
            else if (!pred_pos && true_pos)
                ++row.counts.fn;
            else
                ++row.counts.tn;
        }
        if (row.counts.tp + row.counts.fp > 0) row.precision = precision(row.counts);
        if (row.counts.tp + row.counts.fn > 0) row.recall = recall(row.counts);
        if (row.precision && row.recall && (*row.precision + *row.recall) > 0.0)
            row.f_measure = f_measure(*row.precision, *row.recall);
        report.rows.push_back(row);
    }
    return report;
}

/// "99.6%" -- one decimal place, the print precision of the report tables.
inline std::string format_percent(std::optional<double> value) {
    if (!value) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << (*value * 100.0) << '%';
    return os.str();
}

inline std::string format_fixed(double value, int decimals) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << value;
    return os.str();
}

} // namespace logbal
