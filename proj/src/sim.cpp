#include "agckan/sim.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr std::size_t kStateSize = 9;
using StateVec = std::array<double, kStateSize>;

// Layout of StateVec: per area [f, governor, turbine, integral], then tie line.
constexpr std::size_t area_offset(std::size_t area) { return area * 4; }
constexpr std::size_t kTie = 8;

bool is_integral_ratio(double num, double den) {
    const double r = num / den;
    return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r);
}

/// Inputs held constant over one internal step.
struct HeldInputs {
    std::array<double, 2> ace{};
    std::array<double, 2> droop{};
    std::array<double, 2> load{};
};

StateVec derivative(const SimConfig& c, const StateVec& x, const HeldInputs& in) {
    StateVec d{};
    for (std::size_t a = 0; a < 2; ++a) {
        const AreaParams& p = c.areas[a];
        const std::size_t o = area_offset(a);
        const double tie_sign = a == 0 ? 1.0 : -1.0;
        const double u = -p.integral_gain * x[o + 3];
        d[o] = (p.power_system_gain * (x[o + 2] - in.load[a] - tie_sign * x[kTie]) - x[o]) /
               p.power_system_time_constant;
        d[o + 1] = (u - in.droop[a] - x[o + 1]) / p.governor_time_constant;
        d[o + 2] = (x[o + 1] - x[o + 2]) / p.turbine_time_constant;
        d[o + 3] = in.ace[a];
    }
    d[kTie] = 2.0 * std::numbers::pi * c.tie_coefficient * (x[0] - x[area_offset(1)]);
    return d;
}

StateVec axpy(const StateVec& x, double h, const StateVec& k) {
    StateVec r;
    for (std::size_t i = 0; i < kStateSize; ++i) r[i] = x[i] + h * k[i];
    return r;
}

StateVec rk4(const SimConfig& c, const StateVec& x, const HeldInputs& in, double dt) {
    const StateVec k1 = derivative(c, x, in);
    const StateVec k2 = derivative(c, axpy(x, 0.5 * dt, k1), in);
    const StateVec k3 = derivative(c, axpy(x, 0.5 * dt, k2), in);
    const StateVec k4 = derivative(c, axpy(x, dt, k3), in);
    StateVec r;
    for (std::size_t i = 0; i < kStateSize; ++i)
        r[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return r;
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be finite");
}

}  // namespace

std::size_t SimConfig::substeps() const {
    return static_cast<std::size_t>(std::llround(record_dt / internal_dt));
}

std::size_t SimConfig::recorded_steps() const {
    return static_cast<std::size_t>(std::llround(horizon / record_dt));
}

void validate(const SimConfig& c) {
    for (const auto& p : c.areas) {
        if (!(p.governor_time_constant > 0.0) || !(p.turbine_time_constant > 0.0) ||
            !(p.power_system_time_constant > 0.0))
            throw InvalidArgument("sim config: time constants must be positive");
        if (!(p.grc_limit > 0.0)) throw InvalidArgument("sim config: grc_limit must be positive");
        if (!(p.gdb_band >= 0.0)) throw InvalidArgument("sim config: gdb_band must be >= 0");
        if (!(p.transport_delay >= 0.0))
            throw InvalidArgument("sim config: transport delay must be >= 0");
        if (!(p.bias_factor > 0.0)) throw InvalidArgument("sim config: bias factor must be positive");
        if (!(p.droop > 0.0)) throw InvalidArgument("sim config: droop must be positive");
        if (!std::isfinite(p.power_system_gain) || !std::isfinite(p.integral_gain))
            throw InvalidArgument("sim config: non-finite gain");
    }
    if (!std::isfinite(c.tie_coefficient)) throw InvalidArgument("sim config: non-finite T12");
    if (!(c.internal_dt > 0.0) || !(c.record_dt > 0.0) || !(c.horizon > 0.0))
        throw InvalidArgument("sim config: time steps and horizon must be positive");
    if (c.internal_dt > c.record_dt)
        throw InvalidArgument("sim config: internal_dt must not exceed record_dt");
    if (!is_integral_ratio(c.record_dt, c.internal_dt))
        throw InvalidArgument("sim config: internal_dt must divide record_dt");
    if (std::abs(c.record_dt * static_cast<double>(kNumSteps) - c.horizon) > 1e-9 * c.horizon)
        throw InvalidArgument("sim config: record_dt x 300 must equal the horizon");
}

double DisturbanceSchedule::load(std::size_t area, double t) const {
    double total = 0.0;
    for (const auto& e : events) {
        if (e.area != area || t < e.onset) continue;
        if (e.shape == LoadShape::Step) {
            total += e.magnitude;
        } else {
            const double ramp = e.ramp_rate * (t - e.onset);
            total += ramp >= std::abs(e.magnitude) ? e.magnitude : std::copysign(ramp, e.magnitude);
        }
    }
    return total;
}

void validate(const DisturbanceSchedule& d, double horizon) {
    for (const auto& e : d.events) {
        if (e.area > 1) throw InvalidArgument("disturbance: area index must be 0 or 1");
        if (!(e.onset >= 0.0 && e.onset < horizon))
            throw InvalidArgument("disturbance: onset outside [0, horizon)");
        if (!(std::abs(e.magnitude) <= 0.1))
            throw InvalidArgument("disturbance: |magnitude| must be <= 0.1 pu");
        if (e.shape == LoadShape::Ramp && !(e.ramp_rate > 0.0))
            throw InvalidArgument("disturbance: ramp rate must be positive");
    }
}

double compute_ace(double dp_tie, double df, double bias) {
    check_finite(dp_tie, "dp_tie");
    check_finite(df, "df");
    check_finite(bias, "bias");
    return dp_tie + bias * df;
}

double apply_gdb(double x, double band) {
    if (!(band >= 0.0)) throw InvalidArgument("dead band must be >= 0");
    const double excess = std::abs(x) - band;
    if (!(excess > 0.0)) return 0.0;
    return std::copysign(excess, x);
}

double apply_grc(double prev, double requested, double rate_limit, double dt) {
    const double max_step = rate_limit * dt;
    double delta = requested - prev;
    if (delta > max_step) delta = max_step;
    if (delta < -max_step) delta = -max_step;
    return prev + delta;
}

SimTrace simulate_traced(const SimConfig& c, const DisturbanceSchedule& disturbances,
                         const std::optional<AttackSpec>& attack, std::uint64_t seed) {
    validate(c);
    validate(disturbances, c.horizon);
    if (attack) validate(*attack);

    const std::size_t sub = c.substeps();
    const std::size_t total_steps = sub * kNumSteps;
    const double dt = c.internal_dt;

    // One delay line per channel; ΔP_tie uses the larger of the two area delays
    // since both ACE computations consume it.
    std::array<std::size_t, kNumSignals> delay_len{};
    delay_len[index_of(Signal::PTie)] = static_cast<std::size_t>(
        std::llround(std::max(c.areas[0].transport_delay, c.areas[1].transport_delay) / dt));
    delay_len[index_of(Signal::DF1)] =
        static_cast<std::size_t>(std::llround(c.areas[0].transport_delay / dt));
    delay_len[index_of(Signal::DF2)] =
        static_cast<std::size_t>(std::llround(c.areas[1].transport_delay / dt));

    SimTrace out;
    TimeSeriesSample& sample = out.sample;
    sample.seed = seed;
    sample.attack = attack;
    sample.label = attack ? 1 : 0;
    sample.disturbances = disturbances;

    SimState& st = out.final_state;
    std::array<std::size_t, kNumSignals> heads{};
    for (std::size_t s = 0; s < kNumSignals; ++s) st.delay_buffers[s].assign(delay_len[s], 0.0);

    StateVec x{};
    for (std::size_t k = 0; k < total_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const std::array<double, kNumSignals> truth{x[kTie], x[area_offset(0)], x[area_offset(1)]};

        std::array<double, kNumSignals> meas{};
        for (std::size_t s = 0; s < kNumSignals; ++s) {
            auto& buf = st.delay_buffers[s];
            double delayed = truth[s];
            if (!buf.empty()) {
                delayed = buf[heads[s]];
                buf[heads[s]] = truth[s];
                heads[s] = (heads[s] + 1) % buf.size();
            }
            meas[s] = attack ? corrupt(*attack, static_cast<Signal>(s), t, delayed) : delayed;
        }

        HeldInputs in;
        in.ace[0] = compute_ace(meas[0], meas[1], c.areas[0].bias_factor);
        in.ace[1] = compute_ace(-meas[0], meas[2], c.areas[1].bias_factor);
        for (std::size_t a = 0; a < 2; ++a) {
            in.droop[a] = apply_gdb(x[area_offset(a)], c.areas[a].gdb_band) / c.areas[a].droop;
            in.load[a] = disturbances.load(a, t);
        }

        if (k % sub == 0) {
            const std::size_t row = k / sub;
            for (std::size_t s = 0; s < kNumSignals; ++s) sample.signals[s][row] = meas[s];
            for (std::size_t a = 0; a < 2; ++a) {
                out.turbine_output[a][row] = x[area_offset(a) + 2];
                out.measured_ace[a][row] = in.ace[a];
            }
        }

        StateVec next = rk4(c, x, in, dt);
        for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t i = area_offset(a) + 2;
            next[i] = apply_grc(x[i], next[i], c.areas[a].grc_limit, dt);
        }
        for (double v : next)
            if (!std::isfinite(v))
                throw SimulationDiverged(k, "simulation diverged at internal step " +
                                                std::to_string(k));
        x = next;
    }

    for (std::size_t a = 0; a < 2; ++a) {
        const std::size_t o = area_offset(a);
        st.areas[a] = {x[o], x[o + 1], x[o + 2], x[o + 3]};
    }
    st.tie_line_deviation = x[kTie];
    st.delay_head = heads[index_of(Signal::DF1)];
    out.final_ace[0] = x[kTie] + c.areas[0].bias_factor * x[area_offset(0)];
    out.final_ace[1] = -x[kTie] + c.areas[1].bias_factor * x[area_offset(1)];
    return out;
}

TimeSeriesSample simulate(const SimConfig& config, const DisturbanceSchedule& disturbances,
                          const std::optional<AttackSpec>& attack, std::uint64_t seed) {
    return simulate_traced(config, disturbances, attack, seed).sample;
}

void write_trace_csv(std::ostream& os, const TimeSeriesSample& sample, double record_dt) {
    os << "t,dp_tie,df1,df2\n";
    char line[128];
    for (std::size_t i = 0; i < kNumSteps; ++i) {
        std::snprintf(line, sizeof line, "%.8e,%.8e,%.8e,%.8e\n",
                      static_cast<double>(i) * record_dt, sample.signals[0][i],
                      sample.signals[1][i], sample.signals[2][i]);
        os << line;
    }
}

void to_json(nlohmann::json& j, const AreaParams& p) {
    j = nlohmann::json{{"governor_time_constant", p.governor_time_constant},
                       {"turbine_time_constant", p.turbine_time_constant},
                       {"power_system_gain", p.power_system_gain},
                       {"power_system_time_constant", p.power_system_time_constant},
                       {"droop", p.droop},
                       {"bias_factor", p.bias_factor},
                       {"integral_gain", p.integral_gain},
                       {"grc_limit", p.grc_limit},
                       {"gdb_band", p.gdb_band},
                       {"transport_delay", p.transport_delay}};
}

void from_json(const nlohmann::json& j, AreaParams& p) {
    p.governor_time_constant = j.value("governor_time_constant", p.governor_time_constant);
    p.turbine_time_constant = j.value("turbine_time_constant", p.turbine_time_constant);
    p.power_system_gain = j.value("power_system_gain", p.power_system_gain);
    p.power_system_time_constant =
        j.value("power_system_time_constant", p.power_system_time_constant);
    p.droop = j.value("droop", p.droop);
    p.bias_factor = j.value("bias_factor", p.bias_factor);
    p.integral_gain = j.value("integral_gain", p.integral_gain);
    p.grc_limit = j.value("grc_limit", p.grc_limit);
    p.gdb_band = j.value("gdb_band", p.gdb_band);
    p.transport_delay = j.value("transport_delay", p.transport_delay);
}

void to_json(nlohmann::json& j, const SimConfig& c) {
    j = nlohmann::json{{"area1", c.areas[0]},
                       {"area2", c.areas[1]},
                       {"tie_coefficient", c.tie_coefficient},
                       {"internal_dt", c.internal_dt},
                       {"record_dt", c.record_dt},
                       {"horizon", c.horizon}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
    // An "area" block applies to both areas; area1/area2 override it.
    if (j.contains("area")) {
        from_json(j.at("area"), c.areas[0]);
        from_json(j.at("area"), c.areas[1]);
    }
    if (j.contains("area1")) from_json(j.at("area1"), c.areas[0]);
    if (j.contains("area2")) from_json(j.at("area2"), c.areas[1]);
    c.tie_coefficient = j.value("tie_coefficient", c.tie_coefficient);
    c.internal_dt = j.value("internal_dt", c.internal_dt);
    c.record_dt = j.value("record_dt", c.record_dt);
    c.horizon = j.value("horizon", c.horizon);
}

void to_json(nlohmann::json& j, const DisturbanceSchedule& d) {
    j = nlohmann::json::array();
    for (const auto& e : d.events) {
        j.push_back({{"area", e.area + 1},
                     {"onset", e.onset},
                     {"shape", e.shape == LoadShape::Step ? "step" : "ramp"},
                     {"magnitude", e.magnitude},
                     {"ramp_rate", e.ramp_rate}});
    }
}

void from_json(const nlohmann::json& j, DisturbanceSchedule& d) {
    d.events.clear();
    for (const auto& je : j) {
        LoadEvent e;
        const int area = je.at("area").get<int>();
        if (area != 1 && area != 2) throw InvalidArgument("disturbance area must be 1 or 2");
        e.area = static_cast<std::size_t>(area - 1);
        e.onset = je.at("onset").get<double>();
        const auto shape = je.value("shape", std::string("step"));
        if (shape == "step") e.shape = LoadShape::Step;
        else if (shape == "ramp") e.shape = LoadShape::Ramp;
        else throw InvalidArgument("disturbance shape must be step or ramp");
        e.magnitude = je.at("magnitude").get<double>();
        e.ramp_rate = je.value("ramp_rate", 0.0);
        d.events.push_back(e);
    }
}

}  // namespace agckan
