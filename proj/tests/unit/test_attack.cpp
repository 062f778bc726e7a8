#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "agckan/attack.hpp"
#include "agckan/errors.hpp"

using namespace agckan;
using Catch::Approx;

namespace {

AttackSpec single(AttackKind kind, Signal s, double onset, double A, double r = 0.0, double w = 0.0,
                  double lambda = 0.0) {
    AttackSpec spec;
    spec.kind = kind;
    spec.onset = onset;
    spec.targets.push_back({s, kind, A, r, w, lambda});
    return spec;
}

}  // namespace

TEST_CASE("corrupt leaves values alone before onset", "[attack]") {
    const auto step = single(AttackKind::Step, Signal::DF1, 20.0, 0.01);
    CHECK(corrupt(step, Signal::DF1, 10.0, 0.123) == 0.123);
    CHECK(corrupt(step, Signal::DF1, 25.0, 0.123) == Approx(0.133));
    CHECK(corrupt(step, Signal::DF2, 25.0, 0.123) == 0.123);
}

TEST_CASE("ramp and scaling formulas", "[attack]") {
    const auto ramp = single(AttackKind::Ramp, Signal::PTie, 10.0, 0.05, 0.0005);
    CHECK(corrupt(ramp, Signal::PTie, 30.0, 0.002) == Approx(0.012).margin(1e-15));
    CHECK(corrupt(ramp, Signal::PTie, 500.0, 0.0) == Approx(0.05));  // capped
    const auto neg = single(AttackKind::Ramp, Signal::PTie, 10.0, -0.05, -0.0005);
    CHECK(corrupt(neg, Signal::PTie, 500.0, 0.0) == Approx(-0.05));
    const auto scale = single(AttackKind::Scaling, Signal::DF2, 10.0, 0.0, 0.0, 0.0, 0.1);
    CHECK(corrupt(scale, Signal::DF2, 30.0, 0.02) == Approx(0.022).margin(1e-15));
    CHECK(corrupt(scale, Signal::DF2, 30.0, 0.0) == 0.0);
}

TEST_CASE("pulse support is [onset, onset + width)", "[attack]") {
    const auto pulse = single(AttackKind::Pulse, Signal::DF1, 10.0, 0.02, 0.0, 5.0);
    CHECK(corrupt(pulse, Signal::DF1, 9.99, 0.0) == 0.0);
    CHECK(corrupt(pulse, Signal::DF1, 10.0, 0.0) == 0.02);
    CHECK(corrupt(pulse, Signal::DF1, 14.99, 0.0) == 0.02);
    CHECK(corrupt(pulse, Signal::DF1, 15.0, 0.0) == 0.0);
}

TEST_CASE("ramp term is monotone and bounded", "[attack]") {
    const auto ramp = single(AttackKind::Ramp, Signal::DF1, 5.0, 0.03, 0.002);
    double prev = 0.0;
    for (double t = 0.0; t <= 60.0; t += 0.1) {
        const double add = corrupt(ramp, Signal::DF1, t, 0.0);
        CHECK(add >= prev);
        CHECK(add <= 0.03 + 1e-15);
        prev = add;
    }
}

TEST_CASE("combined as a per-target waveform is rejected", "[attack]") {
    AttackSpec bad = single(AttackKind::Step, Signal::DF1, 10.0, 0.01);
    bad.targets[0].kind = AttackKind::Combined;
    CHECK_THROWS_AS(corrupt(bad, Signal::DF1, 20.0, 0.0), InvalidArgument);
}

TEST_CASE("spec validation", "[attack]") {
    CHECK_NOTHROW(validate(single(AttackKind::Step, Signal::DF1, 10.0, 0.01)));
    AttackSpec empty;
    CHECK_THROWS_AS(validate(empty), InvalidArgument);
    AttackSpec combo = single(AttackKind::Step, Signal::DF1, 10.0, 0.01);
    combo.kind = AttackKind::Combined;
    CHECK_THROWS_AS(validate(combo), InvalidArgument);  // needs two targets
    combo.targets.push_back({Signal::DF1, AttackKind::Pulse, 0.01, 0.0, 3.0, 0.0});
    CHECK_THROWS_AS(validate(combo), InvalidArgument);  // duplicate signal
    combo.targets[1].signal = Signal::DF2;
    CHECK_NOTHROW(validate(combo));
    CHECK_THROWS_AS(validate(single(AttackKind::Pulse, Signal::DF1, 10.0, 0.01, 0.0, 0.0)), InvalidArgument);
}

TEST_CASE("degenerate mixture always yields the same kind", "[attack]") {
    AttackConfig cfg;
    cfg.weights = {1.0, 0.0, 0.0, 0.0, 0.0};
    Rng rng(4);
    for (int i = 0; i < 200; ++i) CHECK(sample_attack_spec(rng, cfg).kind == AttackKind::Step);
}

TEST_CASE("sampling is deterministic for a fixed seed", "[attack]") {
    Rng a(77), b(77);
    for (int i = 0; i < 50; ++i) CHECK(sample_attack_spec(a, AttackConfig{}) == sample_attack_spec(b, AttackConfig{}));
}

TEST_CASE("equal weights give each kind about a fifth of draws", "[attack]") {
    AttackConfig cfg;
    cfg.weights = {0.2, 0.2, 0.2, 0.2, 0.2};
    Rng rng(2024);
    std::map<AttackKind, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[sample_attack_spec(rng, cfg).kind];
    const double sd = std::sqrt(n * 0.2 * 0.8);
    for (auto k : {AttackKind::Step, AttackKind::Ramp, AttackKind::Pulse, AttackKind::Scaling, AttackKind::Combined})
        CHECK(std::abs(counts[k] - n * 0.2) < 5 * sd);
}

TEST_CASE("sampled specs always satisfy their invariants", "[attack]") {
    const AttackConfig cfg;
    Rng rng(5);
    for (int i = 0; i < 100000; ++i) {
        const AttackSpec s = sample_attack_spec(rng, cfg);
        REQUIRE_NOTHROW(validate(s));
        REQUIRE(s.onset >= 5.0);
        REQUIRE(s.onset <= 50.0);
        REQUIRE((s.kind == AttackKind::Combined) == (s.targets.size() >= 2));
        for (const auto& t : s.targets) {
            const Interval mag = t.signal == Signal::PTie ? cfg.ptie_magnitude : cfg.freq_magnitude;
            REQUIRE(std::abs(t.magnitude) >= mag.lo);
            REQUIRE(std::abs(t.magnitude) <= mag.hi);
            REQUIRE(std::abs(t.scale) >= cfg.scale.lo);
            REQUIRE(std::abs(t.scale) <= cfg.scale.hi);
            if (t.kind == AttackKind::Pulse) REQUIRE(t.pulse_width > 0.0);
            if (t.kind == AttackKind::Ramp) {
                const double reach = t.magnitude / t.ramp_rate;
                REQUIRE(reach >= cfg.ramp_time.lo - 1e-9);
                REQUIRE(reach <= cfg.ramp_time.hi + 1e-9);
            }
        }
    }
}

TEST_CASE("attack config validation", "[attack]") {
    AttackConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.weights = {0.5, 0.5, 0.5, 0.0, 0.0};
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
    cfg = AttackConfig{};
    cfg.onset = {10.0, 10.0};
    CHECK_THROWS_AS(validate(cfg), InvalidArgument);
}

TEST_CASE("kind names and JSON round trip", "[attack]") {
    for (auto k : {AttackKind::Step, AttackKind::Ramp, AttackKind::Pulse, AttackKind::Scaling, AttackKind::Combined})
        CHECK(attack_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(attack_kind_from_string("replay"), InvalidArgument);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const AttackSpec s = sample_attack_spec(rng, AttackConfig{});
        const nlohmann::json j = s;
        CHECK(j.get<AttackSpec>() == s);
        CHECK(!summary(s).empty());
    }
    const nlohmann::json jc = AttackConfig{};
    CHECK(jc.get<AttackConfig>() == AttackConfig{});
}
