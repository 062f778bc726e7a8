#include "agckan/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr std::array<std::string_view, kStatsPerSignal> kStatIds{"mean", "std", "min",
                                                                 "max",  "skew", "kurt"};
constexpr std::array<std::string_view, kStatsPerSignal> kStatLabels{
    "mean", "std", "min", "max", "skew", "kurtosis"};

}  // namespace

SeriesStats series_stats(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) throw InvalidArgument("series_stats: need at least two values");
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument("series_stats: non-finite value");

    SeriesStats s;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;
    if (s.min == s.max) {
        s.mean = s.min;
        return s;
    }

    double sum = 0.0;
    for (double x : v) sum += x;
    const double nd = static_cast<double>(n);
    s.mean = std::clamp(sum / nd, s.min, s.max);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - s.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    s.std = std::sqrt(m2 / (nd - 1.0));
    m2 /= nd;
    m3 /= nd;
    m4 /= nd;
    if (m2 > 0.0) {
        s.skew = m3 / std::pow(m2, 1.5);
        s.kurt = m4 / (m2 * m2) - 3.0;
    }
    return s;
}

FeatureVector extract_features(const TimeSeriesSample& sample) {
    FeatureVector fv{};
    for (std::size_t s = 0; s < kNumSignals; ++s) {
        const SeriesStats st = series_stats(sample.signals[s]);
        const std::size_t o = s * kStatsPerSignal;
        fv[o + 0] = st.mean;
        fv[o + 1] = st.std;
        fv[o + 2] = st.min;
        fv[o + 3] = st.max;
        fv[o + 4] = st.skew;
        fv[o + 5] = st.kurt;
    }
    return fv;
}

std::string feature_column(std::size_t i) {
    if (i >= kNumFeatures) throw InvalidArgument("feature index out of range");
    return std::string(signal_id(kAllSignals[i / kStatsPerSignal])) + "_" +
           std::string(kStatIds[i % kStatsPerSignal]);
}

std::string feature_label(std::size_t i) {
    if (i >= kNumFeatures) throw InvalidArgument("feature index out of range");
    return std::string(kStatLabels[i % kStatsPerSignal]) + " of " +
           std::string(signal_label(kAllSignals[i / kStatsPerSignal]));
}

std::vector<std::string> feature_columns() {
    std::vector<std::string> cols;
    for (std::size_t i = 0; i < kNumFeatures; ++i) cols.push_back(feature_column(i));
    return cols;
}

StandardizerStats fit_standardizer(std::span<const FeatureVector> train) {
    if (train.empty()) throw InvalidArgument("fit_standardizer: empty training set");
    StandardizerStats st;
    const double n = static_cast<double>(train.size());
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        double sum = 0.0, lo = train[0][f], hi = train[0][f];
        for (const auto& row : train) {
            sum += row[f];
            lo = std::min(lo, row[f]);
            hi = std::max(hi, row[f]);
        }
        if (lo == hi) {
            st.mean[f] = lo;
            st.std[f] = 1.0;
            continue;
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& row : train) ss += (row[f] - mean) * (row[f] - mean);
        const double sd = std::sqrt(ss / n);
        st.mean[f] = mean;
        st.std[f] = sd > 0.0 ? sd : 1.0;
    }
    return st;
}

FeatureVector standardize(const FeatureVector& fv, const StandardizerStats& stats) {
    FeatureVector z;
    for (std::size_t f = 0; f < kNumFeatures; ++f) z[f] = (fv[f] - stats.mean[f]) / stats.std[f];
    return z;
}

FeatureVector unstandardize(const FeatureVector& z, const StandardizerStats& stats) {
    FeatureVector fv;
    for (std::size_t f = 0; f < kNumFeatures; ++f) fv[f] = z[f] * stats.std[f] + stats.mean[f];
    return fv;
}

FeatureTable extract_table(const std::vector<TimeSeriesSample>& samples) {
    FeatureTable t;
    t.rows.reserve(samples.size());
    t.labels.reserve(samples.size());
    for (const auto& s : samples) {
        t.rows.push_back(extract_features(s));
        t.labels.push_back(s.label);
    }
    return t;
}

void write_features_csv(const FeatureTable& table, std::ostream& os) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) os << feature_column(i) << ',';
    os << "label\n";
    char buf[40];
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (double v : table.rows[r]) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            os << buf;
        }
        os << table.labels[r] << '\n';
    }
}

FeatureTable read_features_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("features CSV: missing header");
    std::string expected;
    for (std::size_t i = 0; i < kNumFeatures; ++i) expected += feature_column(i) + ",";
    expected += "label";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected)
        throw FormatError("features CSV: column layout does not match the 18-feature schema");

    FeatureTable t;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        FeatureVector fv;
        std::string cell;
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            if (!std::getline(ls, cell, ','))
                throw FormatError("features CSV: short row at line " + std::to_string(lineno));
            try {
                fv[i] = std::stod(cell);
            } catch (const std::exception&) {
                throw FormatError("features CSV: bad number at line " + std::to_string(lineno));
            }
        }
        if (!std::getline(ls, cell)) throw FormatError("features CSV: missing label");
        const int label = std::atoi(cell.c_str());
        if (label != 0 && label != 1)
            throw FormatError("features CSV: label must be 0 or 1 at line " + std::to_string(lineno));
        t.rows.push_back(fv);
        t.labels.push_back(label);
    }
    return t;
}

void to_json(nlohmann::json& j, const StandardizerStats& s) {
    j = nlohmann::json{{"mean", s.mean}, {"std", s.std}};
}

void from_json(const nlohmann::json& j, StandardizerStats& s) {
    j.at("mean").get_to(s.mean);
    j.at("std").get_to(s.std);
}

}  // namespace agckan
