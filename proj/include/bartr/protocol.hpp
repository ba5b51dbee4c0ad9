#pragma once

#include <cstddef>
#include <cstdint>

namespace bartr {

// Timing and sizing constants of the reaching protocol.
inline constexpr double kReachDeadlineSeconds = 3.1;
inline constexpr std::int64_t kReachDeadlineMs = 3100;
inline constexpr double kMaxCueDelaySeconds = 2.0;
inline constexpr std::int64_t kMaxCueDelayMs = 2000;
inline constexpr std::int64_t kTelemetryPeriodMs = 50;  // 20 Hz home reports
inline constexpr std::size_t kTrialsPerPhase = 100;
inline constexpr std::size_t kDefaultMonteCarloSamples = 10000;

}  // namespace bartr
