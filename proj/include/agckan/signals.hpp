#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace agckan {

/// The three recorded AGC measurement channels, in storage order.
enum class Signal : unsigned char { PTie = 0, DF1 = 1, DF2 = 2 };

inline constexpr std::size_t kNumSignals = 3;
inline constexpr std::size_t kNumSteps = 300;

inline constexpr std::array<Signal, kNumSignals> kAllSignals{Signal::PTie, Signal::DF1,
                                                             Signal::DF2};

/// Short identifier used in CSV headers and JSON ("ptie", "df1", "df2").
constexpr std::string_view signal_id(Signal s) {
    switch (s) {
        case Signal::PTie: return "ptie";
        case Signal::DF1: return "df1";
        case Signal::DF2: return "df2";
    }
    return "?";
}

/// Display name ("ΔP_tie", "ΔF1", "ΔF2").
constexpr std::string_view signal_label(Signal s) {
    switch (s) {
        case Signal::PTie: return "ΔP_tie";
        case Signal::DF1: return "ΔF1";
        case Signal::DF2: return "ΔF2";
    }
    return "?";
}

constexpr std::size_t index_of(Signal s) { return static_cast<std::size_t>(s); }

}  // namespace agckan
