#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/symbolic.hpp"

namespace agckan {

/// Counts or percentages; metrics are the same either way.
struct ConfusionMatrix {
    double tp = 0.0;
    double tn = 0.0;
    double fp = 0.0;
    double fn = 0.0;

    double total() const { return tp + tn + fp + fn; }
    /// Each cell as a percentage of the total.
    ConfusionMatrix percentages() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Predictions and labels must be 0 or 1 and equally long.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

/// Zero denominators give 0. Throws InvalidArgument on an empty matrix.
Metrics metrics(const ConfusionMatrix& cm);

/// Half-up rounding of a fraction to a percentage with `digits` decimals.
double percent(double fraction, int digits = 2);

inline constexpr double kGapThreshold = 2.0;  ///< percentage points

struct EvaluationReport {
    std::string experiment;  ///< "experiment1" or "experiment2"
    ConfusionMatrix model_cm;
    ConfusionMatrix xi_cm;
    Metrics model;
    Metrics xi;
    std::vector<SymbolicEdge> edges;
    std::string formula;
    std::string legend;
    std::string manifest_digest;

    /// |acc_model - acc_xi| in percentage points.
    double gap() const;
    bool gap_flagged() const { return gap() > kGapThreshold; }
};

EvaluationReport make_report(std::string experiment, std::span<const int> model_pred,
                             std::span<const int> xi_pred, std::span<const int> labels,
                             const SymbolicModel& model);

nlohmann::json to_json(const EvaluationReport& r);
/// approach,experiment,accuracy,precision,recall,f1 (percent, 2 decimals).
void write_metrics_csv(const EvaluationReport& r, std::ostream& os);
/// Writes report.json and metrics.csv into dir.
void write_report(const EvaluationReport& r, const std::filesystem::path& dir);

}  // namespace agckan
