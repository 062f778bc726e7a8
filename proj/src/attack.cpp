#include "agckan/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr std::array<std::string_view, kNumAttackKinds> kKindNames{"step", "ramp", "pulse",
                                                                  "scaling", "combined"};

std::size_t draw_weighted(Rng& rng, const double* weights, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weights[i];
    if (total <= 0.0) return rng.index(n);
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    // u landed in the rounding gap; return the last kind with nonzero weight
    for (std::size_t i = n; i-- > 0;)
        if (weights[i] > 0.0) return i;
    return n - 1;
}

void check_interval(const Interval& iv, const char* name, bool positive) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi))
        throw InvalidArgument(std::string("attack config: degenerate interval ") + name);
    if (positive && iv.lo < 0.0)
        throw InvalidArgument(std::string("attack config: negative bound in ") + name);
}

TargetAttack sample_target(Rng& rng, const AttackConfig& config, Signal signal, AttackKind kind) {
    // Every parameter is drawn regardless of kind so the stream layout is fixed.
    const Interval& mag =
        signal == Signal::PTie ? config.ptie_magnitude : config.freq_magnitude;
    TargetAttack t;
    t.signal = signal;
    t.kind = kind;
    t.magnitude = rng.sign() * rng.uniform(mag.lo, mag.hi);
    t.ramp_rate = t.magnitude / rng.uniform(config.ramp_time.lo, config.ramp_time.hi);
    t.pulse_width = rng.uniform(config.pulse_width.lo, config.pulse_width.hi);
    t.scale = rng.sign() * rng.uniform(config.scale.lo, config.scale.hi);
    return t;
}

std::string fmt_signed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.3e", v);
    return buf;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
    const auto i = static_cast<std::size_t>(kind);
    if (i >= kNumAttackKinds) return "unknown";
    return kKindNames[i];
}

AttackKind attack_kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kNumAttackKinds; ++i)
        if (kKindNames[i] == name) return static_cast<AttackKind>(i);
    throw InvalidArgument("unknown attack kind '" + std::string(name) + "'");
}

const TargetAttack* AttackSpec::find(Signal s) const {
    for (const auto& t : targets)
        if (t.signal == s) return &t;
    return nullptr;
}

void validate(const AttackSpec& spec) {
    if (static_cast<std::size_t>(spec.kind) >= kNumAttackKinds)
        throw InvalidArgument("attack spec: unknown kind");
    if (spec.targets.empty()) throw InvalidArgument("attack spec: no targets");
    if (!std::isfinite(spec.onset)) throw InvalidArgument("attack spec: non-finite onset");
    const bool combined = spec.kind == AttackKind::Combined;
    if (combined != (spec.targets.size() >= 2))
        throw InvalidArgument("attack spec: kind=combined iff at least two targets");
    std::array<bool, kNumSignals> seen{};
    for (const auto& t : spec.targets) {
        const auto s = index_of(t.signal);
        if (s >= kNumSignals) throw InvalidArgument("attack spec: unknown target signal");
        if (seen[s]) throw InvalidArgument("attack spec: duplicate target signal");
        seen[s] = true;
        if (t.kind == AttackKind::Combined || static_cast<std::size_t>(t.kind) >= kNumAttackKinds)
            throw InvalidArgument("attack spec: invalid per-target kind");
        if (!combined && t.kind != spec.kind)
            throw InvalidArgument("attack spec: target kind differs from spec kind");
        if (t.kind == AttackKind::Pulse && !(t.pulse_width > 0.0))
            throw InvalidArgument("attack spec: pulse width must be positive");
        if (!std::isfinite(t.magnitude) || !std::isfinite(t.ramp_rate) ||
            !std::isfinite(t.scale) || !std::isfinite(t.pulse_width))
            throw InvalidArgument("attack spec: non-finite parameter");
    }
}

void validate(const AttackConfig& config) {
    check_interval(config.onset, "onset", true);
    check_interval(config.ptie_magnitude, "ptie_magnitude", true);
    check_interval(config.freq_magnitude, "freq_magnitude", true);
    check_interval(config.scale, "scale", true);
    check_interval(config.ramp_time, "ramp_time", true);
    check_interval(config.pulse_width, "pulse_width", true);
    if (!(config.ramp_time.lo > 0.0) || !(config.pulse_width.lo > 0.0))
        throw InvalidArgument("attack config: ramp time and pulse width must be positive");
    double total = 0.0;
    for (double w : config.weights) {
        if (!(w >= 0.0)) throw InvalidArgument("attack config: negative mixture weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw InvalidArgument("attack config: mixture weights must sum to 1");
}

AttackSpec sample_attack_spec(Rng& rng, const AttackConfig& config) {
    AttackSpec spec;
    spec.kind = static_cast<AttackKind>(draw_weighted(rng, config.weights.data(), kNumAttackKinds));
    spec.onset = rng.uniform(config.onset.lo, config.onset.hi);

    if (spec.kind != AttackKind::Combined) {
        const auto signal = static_cast<Signal>(rng.index(kNumSignals));
        spec.targets.push_back(sample_target(rng, config, signal, spec.kind));
        return spec;
    }

    // Two or three distinct channels, each with its own sub-kind drawn from the
    // single-channel part of the mixture.
    std::array<Signal, kNumSignals> order = kAllSignals;
    for (std::size_t i = kNumSignals - 1; i > 0; --i)
        std::swap(order[i], order[rng.index(i + 1)]);
    const std::size_t count = 2 + rng.index(kNumSignals - 1);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const auto sub = static_cast<AttackKind>(
            draw_weighted(rng, config.weights.data(), kNumAttackKinds - 1));
        spec.targets.push_back(sample_target(rng, config, order[i], sub));
    }
    return spec;
}

double corrupt(const AttackSpec& spec, Signal target, double t, double clean) {
    const TargetAttack* a = spec.find(target);
    if (a == nullptr || t < spec.onset) return clean;
    const double elapsed = t - spec.onset;
    switch (a->kind) {
        case AttackKind::Step:
            return clean + a->magnitude;
        case AttackKind::Ramp: {
            const double add = a->ramp_rate * elapsed;
            return clean + (std::abs(add) > std::abs(a->magnitude) ? a->magnitude : add);
        }
        case AttackKind::Pulse:
            return elapsed < a->pulse_width ? clean + a->magnitude : clean;
        case AttackKind::Scaling:
            return (1.0 + a->scale) * clean;
        case AttackKind::Combined:
            break;
    }
    throw InvalidArgument("corrupt: unknown attack kind for target " +
                          std::string(signal_id(target)));
}

std::string summary(const AttackSpec& spec) {
    char head[64];
    std::snprintf(head, sizeof head, "%s t0=%.2fs", std::string(to_string(spec.kind)).c_str(),
                  spec.onset);
    std::string out = head;
    for (const auto& t : spec.targets) {
        out += ' ';
        out += signal_id(t.signal);
        out += ':';
        if (spec.kind == AttackKind::Combined) {
            out += to_string(t.kind);
            out += ',';
        }
        switch (t.kind) {
            case AttackKind::Step: out += "A=" + fmt_signed(t.magnitude); break;
            case AttackKind::Ramp:
                out += "A=" + fmt_signed(t.magnitude) + ",r=" + fmt_signed(t.ramp_rate) + "/s";
                break;
            case AttackKind::Pulse: {
                char w[32];
                std::snprintf(w, sizeof w, ",w=%.2fs", t.pulse_width);
                out += "A=" + fmt_signed(t.magnitude) + w;
                break;
            }
            case AttackKind::Scaling: out += "lambda=" + fmt_signed(t.scale); break;
            case AttackKind::Combined: break;
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const AttackSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)}, {"onset", spec.onset}};
    auto& arr = j["targets"] = nlohmann::json::array();
    for (const auto& t : spec.targets) {
        arr.push_back({{"signal", signal_id(t.signal)},
                       {"kind", to_string(t.kind)},
                       {"magnitude", t.magnitude},
                       {"ramp_rate", t.ramp_rate},
                       {"pulse_width", t.pulse_width},
                       {"scale", t.scale}});
    }
}

void from_json(const nlohmann::json& j, AttackSpec& spec) {
    spec.kind = attack_kind_from_string(j.at("kind").get<std::string>());
    spec.onset = j.at("onset").get<double>();
    spec.targets.clear();
    for (const auto& jt : j.at("targets")) {
        TargetAttack t;
        const auto sig = jt.at("signal").get<std::string>();
        bool found = false;
        for (Signal s : kAllSignals)
            if (signal_id(s) == sig) {
                t.signal = s;
                found = true;
            }
        if (!found) throw InvalidArgument("unknown attack target '" + sig + "'");
        t.kind = attack_kind_from_string(jt.at("kind").get<std::string>());
        t.magnitude = jt.value("magnitude", 0.0);
        t.ramp_rate = jt.value("ramp_rate", 0.0);
        t.pulse_width = jt.value("pulse_width", 0.0);
        t.scale = jt.value("scale", 0.0);
        spec.targets.push_back(t);
    }
}

namespace {
nlohmann::json interval_json(const Interval& iv) { return nlohmann::json::array({iv.lo, iv.hi}); }
void read_interval(const nlohmann::json& j, const char* key, Interval& iv) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    iv.lo = a.at(0).get<double>();
    iv.hi = a.at(1).get<double>();
}
}  // namespace

void to_json(nlohmann::json& j, const AttackConfig& c) {
    j = nlohmann::json{{"onset", interval_json(c.onset)},
                       {"ptie_magnitude", interval_json(c.ptie_magnitude)},
                       {"freq_magnitude", interval_json(c.freq_magnitude)},
                       {"scale", interval_json(c.scale)},
                       {"ramp_time", interval_json(c.ramp_time)},
                       {"pulse_width", interval_json(c.pulse_width)}};
    auto& w = j["weights"] = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumAttackKinds; ++i) w[std::string(kKindNames[i])] = c.weights[i];
}

void from_json(const nlohmann::json& j, AttackConfig& c) {
    read_interval(j, "onset", c.onset);
    read_interval(j, "ptie_magnitude", c.ptie_magnitude);
    read_interval(j, "freq_magnitude", c.freq_magnitude);
    read_interval(j, "scale", c.scale);
    read_interval(j, "ramp_time", c.ramp_time);
    read_interval(j, "pulse_width", c.pulse_width);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        for (std::size_t i = 0; i < kNumAttackKinds; ++i)
            c.weights[i] = w.value(std::string(kKindNames[i]), 0.0);
    }
}

}  // namespace agckan
