#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/attack.hpp"
#include "agckan/signals.hpp"

namespace agckan {

/// Per-area plant and controller constants of the non-reheat thermal LFC model.
/// Frequencies are in Hz, powers in pu on the common base.
struct AreaParams {
    double governor_time_constant = 0.08;   ///< Tg [s]
    double turbine_time_constant = 0.3;     ///< Tt [s]
    double power_system_gain = 120.0;       ///< Kp [Hz/pu]
    double power_system_time_constant = 20.0;  ///< Tp [s]
    double droop = 2.4;                     ///< R [Hz/pu]
    double bias_factor = 0.425;             ///< B [pu/Hz]
    double integral_gain = 0.2;             ///< Ki [1/s]
    double grc_limit = 0.0017;              ///< [pu/s]
    double gdb_band = 0.0006;               ///< [Hz]
    double transport_delay = 1.0;           ///< tau [s], measurement channel

    bool operator==(const AreaParams&) const = default;
};

struct SimConfig {
    std::array<AreaParams, 2> areas{};
    double tie_coefficient = 0.0707;  ///< T12; synchronizing term is 2*pi*T12
    double internal_dt = 0.01;
    double record_dt = 0.2;
    double horizon = 60.0;

    bool operator==(const SimConfig&) const = default;

    std::size_t substeps() const;      ///< internal steps per recorded step
    std::size_t recorded_steps() const;
};

/// Throws InvalidArgument on any broken invariant.
void validate(const SimConfig& config);

enum class LoadShape : unsigned char { Step = 0, Ramp = 1 };

struct LoadEvent {
    std::size_t area = 0;  ///< 0 or 1
    double onset = 0.0;
    LoadShape shape = LoadShape::Step;
    double magnitude = 0.0;  ///< pu, positive = load increase
    double ramp_rate = 0.0;  ///< pu/s (absolute), ramp shape only

    bool operator==(const LoadEvent&) const = default;
};

struct DisturbanceSchedule {
    std::vector<LoadEvent> events;

    bool operator==(const DisturbanceSchedule&) const = default;

    /// Total load change in `area` at time t.
    double load(std::size_t area, double t) const;
};

void validate(const DisturbanceSchedule& schedule, double horizon);

/// One recorded window: measurement channels x recorded steps.
struct TimeSeriesSample {
    std::array<std::array<double, kNumSteps>, kNumSignals> signals{};
    int label = 0;
    std::uint64_t seed = 0;
    std::optional<AttackSpec> attack;
    DisturbanceSchedule disturbances;

    bool operator==(const TimeSeriesSample&) const = default;

    const std::array<double, kNumSteps>& signal(Signal s) const { return signals[index_of(s)]; }
};

/// Simulator state. Delay buffers hold the true measurements (ΔP_tie, ΔF1, ΔF2)
/// of the last tau seconds.
struct SimState {
    struct Area {
        double frequency_deviation = 0.0;
        double governor_output = 0.0;
        double turbine_output = 0.0;
        double integral_of_ace = 0.0;
    };
    std::array<Area, 2> areas{};
    double tie_line_deviation = 0.0;
    std::array<std::vector<double>, kNumSignals> delay_buffers;
    std::size_t delay_head = 0;
};

/// Extra per-recorded-step traces used by physics checks and plots.
struct SimTrace {
    TimeSeriesSample sample;
    std::array<std::array<double, kNumSteps>, 2> turbine_output{};
    std::array<std::array<double, kNumSteps>, 2> measured_ace{};
    /// True ACE of each area at t = horizon (from the final state).
    std::array<double, 2> final_ace{};
    SimState final_state;
};

double compute_ace(double dp_tie, double df, double bias);
double apply_gdb(double x, double band);
double apply_grc(double prev, double requested, double rate_limit, double dt);

TimeSeriesSample simulate(const SimConfig& config, const DisturbanceSchedule& disturbances,
                          const std::optional<AttackSpec>& attack, std::uint64_t seed);

SimTrace simulate_traced(const SimConfig& config, const DisturbanceSchedule& disturbances,
                         const std::optional<AttackSpec>& attack, std::uint64_t seed);

/// CSV `t,dp_tie,df1,df2`, 9 significant digits in scientific notation.
void write_trace_csv(std::ostream& os, const TimeSeriesSample& sample, double record_dt);

void to_json(nlohmann::json& j, const AreaParams& p);
void from_json(const nlohmann::json& j, AreaParams& p);
void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);
void to_json(nlohmann::json& j, const DisturbanceSchedule& d);
void from_json(const nlohmann::json& j, DisturbanceSchedule& d);

}  // namespace agckan
