#pragma once

#include <cstdint>

namespace acdmcp {

using NodeId = std::uint32_t;

// Simulated time in integer microseconds.
using SimTime = std::int64_t;

inline constexpr NodeId kSinkId = 0;

inline constexpr SimTime kMillisecond = 1000;
inline constexpr SimTime kSecond = 1000 * kMillisecond;

enum class Power : std::uint8_t { low = 0, high = 1 };

inline const char* to_string(Power p) { return p == Power::low ? "low" : "high"; }

}  // namespace acdmcp
