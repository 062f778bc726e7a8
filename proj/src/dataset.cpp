#include "agckan/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr char kMagic[7] = {'A', 'G', 'C', 'K', 'A', 'N', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

private:
    template <class T>
    void le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf, sizeof(T));
    }
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw CorruptionError("dataset file truncated");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

private:
    template <class T>
    T le() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }
    std::istream& is_;
};

void write_spec(Writer& w, const AttackSpec& spec) {
    w.u8(static_cast<std::uint8_t>(spec.kind));
    w.f64(spec.onset);
    w.u8(static_cast<std::uint8_t>(spec.targets.size()));
    for (const auto& t : spec.targets) {
        w.u8(static_cast<std::uint8_t>(t.signal));
        w.u8(static_cast<std::uint8_t>(t.kind));
        w.f64(t.magnitude);
        w.f64(t.ramp_rate);
        w.f64(t.pulse_width);
        w.f64(t.scale);
    }
}

AttackSpec read_spec(Reader& r) {
    AttackSpec spec;
    const auto kind = r.u8();
    if (kind >= kNumAttackKinds) throw CorruptionError("dataset: invalid attack kind byte");
    spec.kind = static_cast<AttackKind>(kind);
    spec.onset = r.f64();
    const auto n = r.u8();
    if (n == 0 || n > kNumSignals) throw CorruptionError("dataset: invalid attack target count");
    for (std::uint8_t i = 0; i < n; ++i) {
        TargetAttack t;
        const auto sig = r.u8();
        const auto sub = r.u8();
        if (sig >= kNumSignals || sub >= kNumAttackKinds)
            throw CorruptionError("dataset: invalid attack target record");
        t.signal = static_cast<Signal>(sig);
        t.kind = static_cast<AttackKind>(sub);
        t.magnitude = r.f64();
        t.ramp_rate = r.f64();
        t.pulse_width = r.f64();
        t.scale = r.f64();
        spec.targets.push_back(t);
    }
    return spec;
}

}  // namespace

void validate(const DisturbanceConfig& c) {
    if (c.min_events > c.max_events)
        throw InvalidArgument("disturbance config: min_events > max_events");
    if (!(c.magnitude.lo >= 0.0 && c.magnitude.lo <= c.magnitude.hi && c.magnitude.hi <= 0.1))
        throw InvalidArgument("disturbance config: magnitude range must lie in [0, 0.1]");
    if (!(c.onset.lo >= 0.0 && c.onset.lo <= c.onset.hi))
        throw InvalidArgument("disturbance config: bad onset range");
    if (!(c.ramp_probability >= 0.0 && c.ramp_probability <= 1.0))
        throw InvalidArgument("disturbance config: ramp probability outside [0, 1]");
    if (!(c.ramp_time.lo > 0.0 && c.ramp_time.lo <= c.ramp_time.hi))
        throw InvalidArgument("disturbance config: bad ramp time range");
}

DisturbanceSchedule sample_disturbances(Rng& rng, const DisturbanceConfig& c) {
    DisturbanceSchedule d;
    const std::size_t count = c.min_events + rng.index(c.max_events - c.min_events + 1);
    for (std::size_t i = 0; i < count; ++i) {
        LoadEvent e;
        e.area = rng.index(2);
        e.onset = rng.uniform(c.onset.lo, c.onset.hi);
        e.magnitude = rng.sign() * rng.uniform(c.magnitude.lo, c.magnitude.hi);
        const bool ramp = rng.uniform() < c.ramp_probability;
        const double ramp_time = rng.uniform(c.ramp_time.lo, c.ramp_time.hi);
        e.shape = ramp ? LoadShape::Ramp : LoadShape::Step;
        e.ramp_rate = ramp ? std::abs(e.magnitude) / ramp_time : 0.0;
        d.events.push_back(e);
    }
    return d;
}

std::size_t Dataset::attacked_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; }));
}

std::uint64_t generation_digest(std::size_t n, double attacked_fraction, const SimConfig& sim,
                                const AttackConfig& attack, const DisturbanceConfig& disturbance) {
    const nlohmann::json j{{"n", n},
                           {"attacked_fraction", attacked_fraction},
                           {"sim", sim},
                           {"attack", attack},
                           {"disturbance", disturbance}};
    return fnv1a(j.dump());
}

Dataset generate_dataset(std::size_t n, double attacked_fraction, const SimConfig& sim,
                         const AttackConfig& attack, std::uint64_t seed,
                         const DisturbanceConfig& disturbance, unsigned threads) {
    if (n < 2) throw InvalidArgument("generate_dataset: n must be at least 2");
    if (!(attacked_fraction > 0.0 && attacked_fraction < 1.0))
        throw InvalidArgument("generate_dataset: attacked_fraction must lie in (0, 1)");
    validate(sim);
    validate(attack);
    validate(disturbance);

    const auto n_attacked =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * attacked_fraction));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng label_rng(derive_seed(seed, "labels"));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[label_rng.index(i + 1)]);
    std::vector<char> attacked(n, 0);
    for (std::size_t i = 0; i < n_attacked; ++i) attacked[order[i]] = 1;

    Dataset d;
    d.samples.resize(n);
    d.record_dt = sim.record_dt;
    d.seed = seed;
    d.config_digest = generation_digest(n, attacked_fraction, sim, attack, disturbance);

    auto make = [&](std::size_t i) {
        const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng rng(sample_seed);
        DisturbanceSchedule dist = sample_disturbances(rng, disturbance);
        std::optional<AttackSpec> spec;
        if (attacked[i]) spec = sample_attack_spec(rng, attack);
        try {
            d.samples[i] = simulate(sim, dist, spec, sample_seed);
        } catch (const SimulationDiverged& e) {
            throw SimulationDiverged(e.step(), "sample " + std::to_string(i) + ": " + e.what());
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) make(i);
        return d;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::size_t failed_index = n;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    make(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    // keep the lowest failing index so the error is schedule-independent
                    if (i < failed_index) {
                        failed_index = i;
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return d;
}

SplitIndices split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) throw InvalidArgument("split: ratios must be positive");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw InvalidArgument("split: ratios must sum to 1");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

    const auto floor_size = [n](double r) {
        return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
    };
    const std::size_t n_val = floor_size(ratios[1]);
    const std::size_t n_test = floor_size(ratios[2]);
    const std::size_t n_train = n - n_val - n_test;  // remainder goes to train

    SplitIndices s;
    s.ratios = ratios;
    s.seed = seed;
    const auto first = perm.begin();
    s.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(first + static_cast<std::ptrdiff_t>(n_train),
                 first + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

void write_dataset(const Dataset& d, std::ostream& os) {
    Writer w(os);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kFormatVersion);
    w.u64(d.samples.size());
    w.u32(static_cast<std::uint32_t>(kNumSignals));
    w.u32(static_cast<std::uint32_t>(kNumSteps));
    w.f64(d.record_dt);
    w.u64(d.config_digest);
    w.u64(d.seed);
    for (const auto& s : d.samples) {
        if ((s.label == 1) != s.attack.has_value())
            throw InvalidArgument("write_dataset: label/attack spec mismatch");
        w.u8(static_cast<std::uint8_t>(s.label));
        w.u64(s.seed);
        if (s.attack) write_spec(w, *s.attack);
        w.u8(static_cast<std::uint8_t>(s.disturbances.events.size()));
        for (const auto& e : s.disturbances.events) {
            w.u8(static_cast<std::uint8_t>(e.area));
            w.f64(e.onset);
            w.u8(static_cast<std::uint8_t>(e.shape));
            w.f64(e.magnitude);
            w.f64(e.ramp_rate);
        }
        for (const auto& row : s.signals)
            for (double v : row) w.f64(v);
    }
    if (!os) throw IoError("write_dataset: stream error");
}

Dataset read_dataset(std::istream& is) {
    Reader r(is);
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (static_cast<std::size_t>(is.gcount()) != sizeof magic ||
        std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw FormatError("not an AGCKAN1 dataset (bad magic)");
    const auto version = r.u32();
    if (version != kFormatVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version));

    Dataset d;
    const auto n = r.u64();
    const auto n_signals = r.u32();
    const auto n_steps = r.u32();
    if (n_signals != kNumSignals || n_steps != kNumSteps)
        throw FormatError("dataset shape is not 3 x 300");
    d.record_dt = r.f64();
    d.config_digest = r.u64();
    d.seed = r.u64();
    if (n > (1ULL << 32)) throw CorruptionError("dataset: implausible sample count");
    d.samples.resize(static_cast<std::size_t>(n));
    for (auto& s : d.samples) {
        const auto label = r.u8();
        if (label > 1) throw CorruptionError("dataset: invalid label byte");
        s.label = label;
        s.seed = r.u64();
        if (label == 1) s.attack = read_spec(r);
        const auto n_events = r.u8();
        for (std::uint8_t i = 0; i < n_events; ++i) {
            LoadEvent e;
            e.area = r.u8();
            e.onset = r.f64();
            const auto shape = r.u8();
            if (e.area > 1 || shape > 1) throw CorruptionError("dataset: invalid load event");
            e.shape = static_cast<LoadShape>(shape);
            e.magnitude = r.f64();
            e.ramp_rate = r.f64();
            s.disturbances.events.push_back(e);
        }
        for (auto& row : s.signals)
            for (double& v : row) v = r.f64();
    }
    return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    write_dataset(d, os);
    os.close();
    if (!os) throw IoError("error writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_dataset(is);
}

void write_dataset_csv(const Dataset& d, std::ostream& os) {
    os << "sample,label,t,dp_tie,df1,df2\n";
    char line[160];
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const auto& s = d.samples[i];
        for (std::size_t k = 0; k < kNumSteps; ++k) {
            std::snprintf(line, sizeof line, "%zu,%d,%.17g,%.17g,%.17g,%.17g\n", i, s.label,
                          static_cast<double>(k) * d.record_dt, s.signals[0][k], s.signals[1][k],
                          s.signals[2][k]);
            os << line;
        }
    }
}

namespace {
nlohmann::json iv(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }
void read_iv(const nlohmann::json& j, const char* key, Interval& i) {
    if (!j.contains(key)) return;
    i.lo = j.at(key).at(0).get<double>();
    i.hi = j.at(key).at(1).get<double>();
}
}  // namespace

void to_json(nlohmann::json& j, const DisturbanceConfig& c) {
    j = nlohmann::json{{"min_events", c.min_events}, {"max_events", c.max_events},
                       {"magnitude", iv(c.magnitude)}, {"onset", iv(c.onset)},
                       {"ramp_probability", c.ramp_probability}, {"ramp_time", iv(c.ramp_time)}};
}

void from_json(const nlohmann::json& j, DisturbanceConfig& c) {
    c.min_events = j.value("min_events", c.min_events);
    c.max_events = j.value("max_events", c.max_events);
    read_iv(j, "magnitude", c.magnitude);
    read_iv(j, "onset", c.onset);
    c.ramp_probability = j.value("ramp_probability", c.ramp_probability);
    read_iv(j, "ramp_time", c.ramp_time);
}

}  // namespace agckan
