#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bartr/behavior.hpp"
#include "bartr/session.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

// Logical-clock timings of the simulated apparatus (ms).
inline constexpr std::int64_t kArmTravelMs = 2000;
inline constexpr std::int64_t kReturnHomeMs = 600;   // press/deadline until the hand is back on home
inline constexpr std::int64_t kInterTrialMs = 1000;  // press/deadline until the next arm move

struct TimedDatagram {
  std::int64_t t_ms = 0;
  std::string bytes;
};

/// Wire-level view of a simulated session: every datagram with its logical
/// send time, home reports every 50 ms from t=0 to the end of the session.
struct SessionTrace {
  std::vector<TimedDatagram> datagrams;
  std::int64_t end_ms = 0;
};

struct SessionIdentity {
  std::string participant = "sim";
  int session = 1;
};

/// Simulates one phase: the 100 grid targets in seeded random order, each
/// driven through the trial state machine on a 1 ms logical clock.
SessionLog run_session(const BehaviorModel& bm, Phase phase, const WorkspaceSpec& spec, std::uint64_t seed,
                       const SessionIdentity& id = {}, SessionTrace* trace = nullptr);

}  // namespace bartr
