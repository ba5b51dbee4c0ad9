#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "bartr/session.hpp"

namespace bartr {

enum class TrialStage { Idle, ArmMoving, AwaitHome, CueScheduled, Reaching, Logged };

enum class TrialEventKind {
  BeginTrial,       // controller sends the arm to a target
  ArmArrived,
  HomeBothTouched,  // both home contacts closed
  CueFired,
  HomeReleased,     // one home contact opened (side)
  ButtonPressed,
  DeadlineElapsed,
  Reset,            // record taken, back to Idle
};

std::string_view stage_name(TrialStage stage);
std::string_view event_name(TrialEventKind kind);

struct TrialEvent {
  TrialEventKind kind;
  std::int64_t t_ms = 0;  // logical clock
  Side side = Side::Left;  // HomeReleased only
  // BeginTrial payload.
  int trial = 0;
  Phase phase = Phase::Spontaneous;
  Point3 target{};
  std::int64_t cue_delay_ms = 0;
};

/// One trial's controller state. The cue is scheduled `cue_delay_ms` after the
/// later of arm arrival and both home contacts closing; the deadline is
/// 3100 ms after the cue. A release before the cue sends the trial back to
/// AwaitHome. The reaching hand is the first side released after the cue.
struct TrialState {
  TrialStage stage = TrialStage::Idle;
  int trial = 0;
  Phase phase = Phase::Spontaneous;
  Point3 target{};
  std::int64_t cue_delay_ms = 0;
  bool arm_arrived = false;
  bool home_touched = false;
  std::int64_t clock_ms = 0;
  std::optional<std::int64_t> cue_at_ms;
  std::optional<std::int64_t> release_ms;
  Hand hand = Hand::None;
  std::optional<std::int64_t> press_ms;
  bool timed_out = false;

  std::optional<std::int64_t> deadline_ms() const;
  /// The finished record; only valid in Logged.
  TrialRecord record() const;
};

/// Applies one event. Events must be legal for the current stage and not go
/// back in time; violations raise ProtocolError naming stage and event.
TrialState step_trial(TrialState state, const TrialEvent& event);

}  // namespace bartr
