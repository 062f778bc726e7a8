#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "agckan/errors.hpp"
#include "agckan/sim.hpp"
#include "agckan/dataset.hpp"

#include <nlohmann/json.hpp>

using namespace agckan;
using Catch::Approx;

namespace {

DisturbanceSchedule step_in_area1(double magnitude, double onset) {
    DisturbanceSchedule d;
    d.events.push_back({0, onset, LoadShape::Step, magnitude, 0.0});
    return d;
}

}  // namespace

TEST_CASE("compute_ace is tie flow plus biased frequency", "[sim]") {
    CHECK(compute_ace(0.0, 0.0, 0.425) == 0.0);
    CHECK(compute_ace(0.1, -0.2, 0.425) == Approx(0.015).margin(1e-15));
    CHECK(compute_ace(-0.05, 0.1, 0.425) == Approx(-0.0075).margin(1e-15));
    CHECK_THROWS_AS(compute_ace(std::nan(""), 0.0, 0.425), InvalidArgument);
    CHECK_THROWS_AS(compute_ace(0.0, INFINITY, 0.425), InvalidArgument);
}

TEST_CASE("dead band zeroes small deviations and shifts large ones", "[sim]") {
    CHECK(apply_gdb(0.0002, 0.0006) == 0.0);
    CHECK(apply_gdb(0.001, 0.0006) == Approx(0.0004).margin(1e-15));
    CHECK(apply_gdb(-0.002, 0.0006) == Approx(-0.0014).margin(1e-15));
    CHECK_THROWS_AS(apply_gdb(0.1, -0.01), InvalidArgument);
    for (double x : {0.0, 1e-5, 3e-4, 6e-4, 1e-3, 0.2}) {
        CHECK(apply_gdb(-x, 0.0006) == -apply_gdb(x, 0.0006));
        if (x <= 0.0006) CHECK(apply_gdb(x, 0.0006) == 0.0);
    }
}

TEST_CASE("rate limiter clamps the change per step", "[sim]") {
    CHECK(apply_grc(0.0, 0.01, 0.0005, 0.2) == Approx(0.0001).margin(1e-15));
    CHECK(apply_grc(0.5, 0.5, 0.0005, 0.2) == 0.5);
    CHECK(apply_grc(0.1, 0.0, 0.0005, 0.2) == Approx(0.0999).margin(1e-15));
    for (double p : {-0.3, 0.0, 0.7}) CHECK(apply_grc(p, p, 0.001, 0.01) == p);
}

TEST_CASE("config validation", "[sim]") {
    SimConfig c;
    CHECK_NOTHROW(validate(c));
    CHECK(c.substeps() == 20);
    CHECK(c.recorded_steps() == 300);
    SimConfig bad = c;
    bad.internal_dt = 0.03;  // does not divide 0.2
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = c;
    bad.horizon = 50.0;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = c;
    bad.areas[1].grc_limit = 0.0;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = c;
    bad.areas[0].bias_factor = -1.0;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
    bad = c;
    bad.areas[0].gdb_band = -0.1;
    CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("disturbance schedule validation and load profile", "[sim]") {
    DisturbanceSchedule d;
    d.events.push_back({1, 10.0, LoadShape::Ramp, -0.02, 0.004});
    CHECK(d.load(1, 5.0) == 0.0);
    CHECK(d.load(1, 12.5) == Approx(-0.01));
    CHECK(d.load(1, 30.0) == Approx(-0.02));
    CHECK(d.load(0, 30.0) == 0.0);
    CHECK_NOTHROW(validate(d, 60.0));
    d.events[0].magnitude = 0.2;
    CHECK_THROWS_AS(validate(d, 60.0), InvalidArgument);
    d.events[0].magnitude = 0.01;
    d.events[0].onset = 60.0;
    CHECK_THROWS_AS(validate(d, 60.0), InvalidArgument);
}

TEST_CASE("equilibrium stays exactly zero", "[sim]") {
    const auto s = simulate_traced(SimConfig{}, {}, std::nullopt, 1);
    for (const auto& sig : s.sample.signals)
        for (double v : sig) REQUIRE(v == 0.0);
    for (const auto& a : s.final_state.areas) {
        CHECK(a.frequency_deviation == 0.0);
        CHECK(a.governor_output == 0.0);
        CHECK(a.turbine_output == 0.0);
        CHECK(a.integral_of_ace == 0.0);
    }
    CHECK(s.final_state.tie_line_deviation == 0.0);
}

TEST_CASE("load step is absorbed by the integral controller", "[sim]") {
    const SimConfig cfg;
    const auto s = simulate_traced(cfg, step_in_area1(0.01, 5.0), std::nullopt, 1);
    const auto& df1 = s.sample.signal(Signal::DF1);
    double lowest = 0.0;
    for (double v : df1) lowest = std::min(lowest, v);
    CHECK(lowest < -1e-3);                        // dips
    CHECK(std::abs(s.final_ace[0]) < 1e-3);       // recovers
    CHECK(std::abs(s.final_ace[1]) < 1e-3);
    CHECK(s.sample.label == 0);
}

TEST_CASE("rate limit holds on every recorded step", "[sim]") {
    const SimConfig cfg;
    Rng rng(99);
    for (int run = 0; run < 50; ++run) {
        const auto d = sample_disturbances(rng, DisturbanceConfig{});
        const auto s = simulate_traced(cfg, d, std::nullopt, run);
        for (std::size_t a = 0; a < 2; ++a) {
            double prev = 0.0;
            for (double p : s.turbine_output[a]) {
                REQUIRE(std::abs(p - prev) <= cfg.areas[a].grc_limit * cfg.record_dt + 1e-12);
                prev = p;
            }
        }
    }
}

TEST_CASE("attacked twin matches the clean run before onset", "[sim]") {
    const SimConfig cfg;
    AttackSpec ramp;
    ramp.kind = AttackKind::Ramp;
    ramp.onset = 20.0;
    ramp.targets.push_back({Signal::DF2, AttackKind::Ramp, 0.02, 0.001, 0.0, 0.0});
    const auto d = step_in_area1(0.01, 5.0);
    const auto clean = simulate(cfg, d, std::nullopt, 3);
    const auto hit = simulate(cfg, d, ramp, 3);
    CHECK(hit.label == 1);
    bool diverged = false;
    for (std::size_t i = 0; i < kNumSteps; ++i) {
        const double t = cfg.record_dt * static_cast<double>(i);
        for (std::size_t k = 0; k < kNumSignals; ++k) {
            if (t < ramp.onset) REQUIRE(hit.signals[k][i] == clean.signals[k][i]);
        }
        if (t > ramp.onset && hit.signals[2][i] != clean.signals[2][i]) diverged = true;
    }
    CHECK(diverged);
}

TEST_CASE("simulation is a pure function of its inputs", "[sim]") {
    const auto d = step_in_area1(-0.02, 12.0);
    const auto a = simulate(SimConfig{}, d, std::nullopt, 5);
    const auto b = simulate(SimConfig{}, d, std::nullopt, 5);
    CHECK(a == b);
}

TEST_CASE("divergent settings raise with the step index", "[sim]") {
    SimConfig cfg;
    // time constants far below the fixed step make RK4 unstable
    for (auto& a : cfg.areas) {
        a.governor_time_constant = 1e-4;
        a.turbine_time_constant = 1e-4;
        a.grc_limit = 1e9;
    }
    try {
        simulate(cfg, step_in_area1(0.05, 1.0), std::nullopt, 1);
        FAIL("expected divergence");
    } catch (const SimulationDiverged& e) {
        CHECK(e.step() > 0);
    }
}

TEST_CASE("trace CSV layout", "[sim]") {
    const auto s = simulate(SimConfig{}, step_in_area1(0.01, 5.0), std::nullopt, 1);
    std::ostringstream os;
    write_trace_csv(os, s, 0.2);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,dp_tie,df1,df2");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 300);
}

TEST_CASE("sim config JSON round trip", "[sim]") {
    SimConfig c;
    c.areas[1].droop = 2.0;
    c.tie_coefficient = 0.08;
    const nlohmann::json j = c;
    CHECK(j.get<SimConfig>() == c);
    DisturbanceSchedule d = step_in_area1(0.01, 5.0);
    d.events.push_back({1, 7.0, LoadShape::Ramp, -0.01, 0.001});
    const nlohmann::json jd = d;
    CHECK(jd.get<DisturbanceSchedule>() == d);
}
