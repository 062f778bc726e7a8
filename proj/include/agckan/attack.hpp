#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/rng.hpp"
#include "agckan/signals.hpp"

namespace agckan {

enum class AttackKind : unsigned char { Step = 0, Ramp = 1, Pulse = 2, Scaling = 3, Combined = 4 };

inline constexpr std::size_t kNumAttackKinds = 5;

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

/// Waveform applied to one measurement channel. `kind` is never Combined.
struct TargetAttack {
    Signal signal = Signal::PTie;
    AttackKind kind = AttackKind::Step;
    double magnitude = 0.0;    ///< additive amplitude A; also the ramp cap
    double ramp_rate = 0.0;    ///< signed, same sign as magnitude
    double pulse_width = 0.0;  ///< seconds
    double scale = 0.0;        ///< lambda; scaling multiplies by (1 + lambda)

    bool operator==(const TargetAttack&) const = default;
};

/// A false-data injection: one onset time and one waveform per targeted channel.
/// Single-kind specs carry exactly one target; Combined carries two or three.
struct AttackSpec {
    AttackKind kind = AttackKind::Step;
    double onset = 0.0;
    std::vector<TargetAttack> targets;

    bool operator==(const AttackSpec&) const = default;

    const TargetAttack* find(Signal s) const;
};

/// Throws InvalidArgument when the spec breaks its invariants.
void validate(const AttackSpec& spec);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Interval&) const = default;
};

/// Sampling ranges for attack parameters. Magnitudes and scale factors are drawn
/// on |value| and given a random sign.
struct AttackConfig {
    Interval onset{5.0, 50.0};
    Interval ptie_magnitude{0.002, 0.02};
    Interval freq_magnitude{0.005, 0.05};
    Interval scale{0.05, 0.3};
    Interval ramp_time{10.0, 40.0};  ///< seconds for the ramp to reach its cap
    Interval pulse_width{5.0, 20.0};
    /// Mixture over {step, ramp, pulse, scaling, combined}.
    std::array<double, kNumAttackKinds> weights{0.3, 0.3, 0.15, 0.05, 0.2};

    bool operator==(const AttackConfig&) const = default;
};

void validate(const AttackConfig& config);

AttackSpec sample_attack_spec(Rng& rng, const AttackConfig& config);

/// Measurement value after the attack. Untargeted channels and times before onset
/// pass through unchanged.
double corrupt(const AttackSpec& spec, Signal target, double t, double clean);

/// One-line summary, e.g. "ramp t0=23.40s dF1:A=+1.200e-02,r=+5.000e-04/s".
std::string summary(const AttackSpec& spec);

void to_json(nlohmann::json& j, const AttackSpec& spec);
void from_json(const nlohmann::json& j, AttackSpec& spec);
void to_json(nlohmann::json& j, const AttackConfig& config);
void from_json(const nlohmann::json& j, AttackConfig& config);

}  // namespace agckan
