#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "agckan/dataset.hpp"
#include "agckan/errors.hpp"
#include "agckan/features.hpp"
#include "oracles.hpp"

using namespace agckan;
using Catch::Approx;

namespace {

bool close(double got, long double want, double tol) {
    return std::abs(static_cast<long double>(got) - want) <= tol * std::max(1.0L, std::abs(want));
}

std::vector<double> random_series(Rng& rng, std::size_t n) {
    const double scale = std::pow(10.0, rng.uniform(-4.0, 1.0));
    const double shift = rng.uniform(-1.0, 1.0) * scale;
    std::vector<double> v(n);
    const int shape = static_cast<int>(rng.index(3));
    for (auto& x : v) {
        double z = rng.normal();
        if (shape == 1) z = std::exp(z);         // skewed
        if (shape == 2) z = z * z * z;           // heavy tailed
        x = shift + scale * z;
    }
    return v;
}

}  // namespace

TEST_CASE("series stats match the direct formulas on random series", "[features]") {
    Rng rng(314);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto v = random_series(rng, 2 + rng.index(400));
        const SeriesStats s = series_stats(v);
        const oracle::Stats o = oracle::stats(v);
        const double unit = static_cast<double>(o.std);  // location/scale of the series
        INFO("trial " << trial);
        REQUIRE(std::abs(s.mean - o.mean) <= 1e-12 * std::max(unit, std::abs((double)o.mean)));
        REQUIRE(close(s.std, o.std, 1e-12));
        REQUIRE(s.min == o.min);
        REQUIRE(s.max == o.max);
        REQUIRE(close(s.skew, o.skew, 1e-10));
        REQUIRE(close(s.kurt, o.kurt, 1e-10));
    }
}

TEST_CASE("hand-computed small series", "[features]") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 10.0};
    const SeriesStats s = series_stats(v);
    CHECK(s.mean == Approx(4.0));
    CHECK(s.std == Approx(std::sqrt(50.0 / 4.0)));
    CHECK(s.min == 1.0);
    CHECK(s.max == 10.0);
    // m2 = 10, m3 = 30*... computed directly below
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        m2 += (x - 4) * (x - 4) / 5;
        m3 += (x - 4) * (x - 4) * (x - 4) / 5;
        m4 += std::pow(x - 4, 4) / 5;
    }
    CHECK(s.skew == Approx(m3 / std::pow(m2, 1.5)));
    CHECK(s.kurt == Approx(m4 / (m2 * m2) - 3.0));
}

TEST_CASE("constant series have zero spread and shape", "[features]") {
    const std::vector<double> v(300, 0.0042);
    const SeriesStats s = series_stats(v);
    CHECK(s.mean == 0.0042);
    CHECK(s.std == 0.0);
    CHECK(s.min == 0.0042);
    CHECK(s.max == 0.0042);
    CHECK(s.skew == 0.0);
    CHECK(s.kurt == 0.0);
}

TEST_CASE("invalid series", "[features]") {
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(series_stats(one), InvalidArgument);
    const std::vector<double> bad{1.0, NAN, 2.0};
    CHECK_THROWS_AS(series_stats(bad), InvalidArgument);
    const std::vector<double> inf{1.0, INFINITY};
    CHECK_THROWS_AS(series_stats(inf), InvalidArgument);
}

TEST_CASE("affine maps move location and scale but not shape", "[features]") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto v = random_series(rng, 300);
        const double a = rng.uniform(0.5, 4.0), b = rng.uniform(-1.0, 1.0);
        std::vector<double> w(v.size()), neg(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            w[i] = a * v[i] + b;
            neg[i] = -v[i];
        }
        const SeriesStats s = series_stats(v), t = series_stats(w), n = series_stats(neg);
        CHECK(t.mean == Approx(a * s.mean + b).margin(1e-12));
        CHECK(t.std == Approx(a * s.std).epsilon(1e-9));
        CHECK(t.skew == Approx(s.skew).margin(1e-8));
        CHECK(t.kurt == Approx(s.kurt).margin(1e-8));
        CHECK(n.skew == Approx(-s.skew).margin(1e-8));
        CHECK(n.kurt == Approx(s.kurt).margin(1e-8));
    }
}

TEST_CASE("feature vector layout", "[features]") {
    const Dataset d = generate_dataset(4, 0.5, SimConfig{}, AttackConfig{}, 2, {}, 1);
    for (const auto& s : d.samples) {
        const FeatureVector fv = extract_features(s);
        for (std::size_t k = 0; k < kNumSignals; ++k) {
            const auto& sig = s.signals[k];
            const auto o = oracle::stats(sig);
            const double* f = fv.data() + k * kStatsPerSignal;
            CHECK(f[0] == Approx((double)o.mean).margin(1e-15));
            CHECK(f[1] == Approx((double)o.std).epsilon(1e-12));
            CHECK(f[2] == (double)o.min);
            CHECK(f[3] == (double)o.max);
            CHECK(f[4] == Approx((double)o.skew).margin(1e-9));
            CHECK(f[5] == Approx((double)o.kurt).margin(1e-9));
        }
    }
    CHECK(feature_column(0) == "ptie_mean");
    CHECK(feature_column(17) == "df2_kurt");
    CHECK(feature_label(17) == "kurtosis of ΔF2");
    CHECK(feature_columns().size() == 18);
    CHECK_THROWS_AS(feature_column(18), InvalidArgument);
}

TEST_CASE("standardizer uses population statistics", "[features]") {
    std::vector<FeatureVector> rows(3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t f = 0; f < kNumFeatures; ++f) rows[r][f] = f == 5 ? 7.0 : double(r) * (f + 1);
    const auto st = fit_standardizer(rows);
    CHECK(st.mean[0] == Approx(1.0));
    CHECK(st.std[0] == Approx(std::sqrt(2.0 / 3.0)));
    CHECK(st.std[5] == 1.0);  // zero variance
    const auto z = standardize(rows[2], st);
    CHECK(z[0] == Approx(1.0 / std::sqrt(2.0 / 3.0)));
    CHECK(z[5] == 0.0);
    const auto back = unstandardize(z, st);
    for (std::size_t f = 0; f < kNumFeatures; ++f) CHECK(back[f] == Approx(rows[2][f]));
    CHECK_THROWS_AS(fit_standardizer(std::span<const FeatureVector>{}), InvalidArgument);
}

TEST_CASE("features CSV round trip and schema check", "[features]") {
    FeatureTable t;
    Rng rng(4);
    for (int r = 0; r < 20; ++r) {
        FeatureVector fv;
        for (auto& x : fv) x = rng.normal() * 1e-3;
        t.rows.push_back(fv);
        t.labels.push_back(r % 2);
    }
    std::ostringstream os;
    write_features_csv(t, os);
    std::istringstream is(os.str());
    const FeatureTable back = read_features_csv(is);
    CHECK(back.rows == t.rows);
    CHECK(back.labels == t.labels);

    std::string text = os.str();
    text.replace(0, 10, "ptie_avg,");
    std::istringstream bad(text);
    CHECK_THROWS_AS(read_features_csv(bad), FormatError);
}
