#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/sim.hpp"

namespace agckan {

inline constexpr std::size_t kStatsPerSignal = 6;
inline constexpr std::size_t kNumFeatures = kNumSignals * kStatsPerSignal;

/// x1..x18: (mean, std, min, max, skew, kurtosis) of ΔP_tie, then ΔF1, then ΔF2.
using FeatureVector = std::array<double, kNumFeatures>;

struct SeriesStats {
    double mean = 0.0;
    double std = 0.0;   ///< divisor n-1
    double min = 0.0;
    double max = 0.0;
    double skew = 0.0;  ///< Fisher-Pearson g1, central moments with divisor n
    double kurt = 0.0;  ///< excess kurtosis g2
};

/// Constant series yield skew = kurt = 0. Throws InvalidArgument on non-finite input
/// or fewer than two values.
SeriesStats series_stats(std::span<const double> values);

FeatureVector extract_features(const TimeSeriesSample& sample);

/// CSV column name of feature i (0-based), e.g. "ptie_mean", "df2_kurt".
std::string feature_column(std::size_t i);
/// Human-readable name of feature i, e.g. "kurtosis of ΔF2".
std::string feature_label(std::size_t i);
std::vector<std::string> feature_columns();

struct StandardizerStats {
    FeatureVector mean{};
    FeatureVector std{};  ///< population std; 1 for zero-variance features

    bool operator==(const StandardizerStats&) const = default;
};

StandardizerStats fit_standardizer(std::span<const FeatureVector> train);
FeatureVector standardize(const FeatureVector& fv, const StandardizerStats& stats);
FeatureVector unstandardize(const FeatureVector& z, const StandardizerStats& stats);

/// A table of feature rows and labels, as stored in the features CSV.
struct FeatureTable {
    std::vector<FeatureVector> rows;
    std::vector<int> labels;
};

FeatureTable extract_table(const std::vector<TimeSeriesSample>& samples);

/// 18 named columns plus `label`, 17 significant digits.
void write_features_csv(const FeatureTable& table, std::ostream& os);
/// Throws FormatError if the header does not match the frozen column layout.
FeatureTable read_features_csv(std::istream& is);

void to_json(nlohmann::json& j, const StandardizerStats& s);
void from_json(const nlohmann::json& j, StandardizerStats& s);

}  // namespace agckan
