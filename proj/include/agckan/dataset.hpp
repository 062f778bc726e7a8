#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/attack.hpp"
#include "agckan/sim.hpp"

namespace agckan {

/// Legitimate load events given to every window (both classes).
struct DisturbanceConfig {
    std::size_t min_events = 1;
    std::size_t max_events = 3;
    Interval magnitude{0.001, 0.005};  ///< |pu|, random sign
    Interval onset{0.0, 50.0};
    double ramp_probability = 0.5;
    Interval ramp_time{5.0, 20.0};  ///< seconds to reach full magnitude

    bool operator==(const DisturbanceConfig&) const = default;
};

void validate(const DisturbanceConfig& config);

DisturbanceSchedule sample_disturbances(Rng& rng, const DisturbanceConfig& config);

struct Dataset {
    std::vector<TimeSeriesSample> samples;
    double record_dt = 0.2;
    std::uint64_t config_digest = 0;
    std::uint64_t seed = 0;

    bool operator==(const Dataset&) const = default;

    std::size_t attacked_count() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
};

/// Digest identifying the generation settings; stored in the dataset header.
std::uint64_t generation_digest(std::size_t n, double attacked_fraction, const SimConfig& sim,
                                const AttackConfig& attack, const DisturbanceConfig& disturbance);

/// Generates n windows, round(n * attacked_fraction) of them attacked. Each index
/// draws from its own stream derived from (seed, index), so the result does not
/// depend on `threads` (0 = hardware concurrency).
Dataset generate_dataset(std::size_t n, double attacked_fraction, const SimConfig& sim,
                         const AttackConfig& attack, std::uint64_t seed,
                         const DisturbanceConfig& disturbance = {}, unsigned threads = 0);

SplitIndices split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);
inline SplitIndices split(const Dataset& d, std::array<double, 3> ratios, std::uint64_t seed) {
    return split(d.samples.size(), ratios, seed);
}

/// Binary format: magic "AGCKAN1", little-endian, see README for the layout.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& os);
Dataset read_dataset(std::istream& is);

/// Long-format CSV: sample,label,t,dp_tie,df1,df2.
void write_dataset_csv(const Dataset& dataset, std::ostream& os);

void to_json(nlohmann::json& j, const DisturbanceConfig& c);
void from_json(const nlohmann::json& j, DisturbanceConfig& c);

}  // namespace agckan
