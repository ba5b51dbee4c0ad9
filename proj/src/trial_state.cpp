#include "bartr/trial_state.hpp"

#include <string>

#include "bartr/error.hpp"
#include "bartr/protocol.hpp"

namespace bartr {

std::string_view stage_name(TrialStage stage) {
  switch (stage) {
    case TrialStage::Idle: return "Idle";
    case TrialStage::ArmMoving: return "ArmMoving";
    case TrialStage::AwaitHome: return "AwaitHome";
    case TrialStage::CueScheduled: return "CueScheduled";
    case TrialStage::Reaching: return "Reaching";
    case TrialStage::Logged: return "Logged";
  }
  return "?";
}

std::string_view event_name(TrialEventKind kind) {
  switch (kind) {
    case TrialEventKind::BeginTrial: return "begin_trial";
    case TrialEventKind::ArmArrived: return "arm_arrived";
    case TrialEventKind::HomeBothTouched: return "home_both_touched";
    case TrialEventKind::CueFired: return "cue_fired";
    case TrialEventKind::HomeReleased: return "home_released";
    case TrialEventKind::ButtonPressed: return "button_pressed";
    case TrialEventKind::DeadlineElapsed: return "deadline_elapsed";
    case TrialEventKind::Reset: return "reset";
  }
  return "?";
}

std::optional<std::int64_t> TrialState::deadline_ms() const {
  if (!cue_at_ms || stage == TrialStage::CueScheduled) return std::nullopt;
  return *cue_at_ms + kReachDeadlineMs;
}

TrialRecord TrialState::record() const {
  if (stage != TrialStage::Logged) throw StateError("trial record requested before the trial was logged");
  TrialRecord rec;
  rec.trial = trial;
  rec.phase = phase;
  rec.target = target;
  rec.cue_delay = static_cast<double>(cue_delay_ms) / 1000.0;
  if (!timed_out) {
    rec.success = true;
    rec.reach_time = static_cast<double>(*press_ms - *release_ms) / 1000.0;
    rec.hand = hand;
  }
  return rec;
}

namespace {

[[noreturn]] void illegal(const TrialState& s, const TrialEvent& e, const std::string& why = {}) {
  std::string msg = "protocol violation: event " + std::string(event_name(e.kind)) + " in state " +
                    std::string(stage_name(s.stage));
  if (!why.empty()) msg += " (" + why + ")";
  throw ProtocolError(msg);
}

}  // namespace

TrialState step_trial(TrialState s, const TrialEvent& e) {
  if (e.t_ms < s.clock_ms) illegal(s, e, "time went backwards");
  s.clock_ms = e.t_ms;
  using K = TrialEventKind;
  switch (s.stage) {
    case TrialStage::Idle:
      if (e.kind != K::BeginTrial) illegal(s, e);
      if (e.cue_delay_ms < 0 || e.cue_delay_ms > kMaxCueDelayMs) illegal(s, e, "cue delay outside [0, 2000] ms");
      {
        const bool touched = s.home_touched;
        const std::int64_t clock = s.clock_ms;
        s = TrialState{};
        s.clock_ms = clock;
        s.home_touched = touched;
      }
      s.stage = TrialStage::ArmMoving;
      s.trial = e.trial;
      s.phase = e.phase;
      s.target = e.target;
      s.cue_delay_ms = e.cue_delay_ms;
      return s;

    case TrialStage::ArmMoving:
      if (e.kind == K::ArmArrived) {
        s.arm_arrived = true;
        s.stage = TrialStage::AwaitHome;
      } else if (e.kind == K::HomeBothTouched) {
        s.home_touched = true;
      } else if (e.kind == K::HomeReleased) {
        s.home_touched = false;
      } else {
        illegal(s, e);
      }
      return s;

    case TrialStage::AwaitHome:
      if (e.kind == K::HomeBothTouched) {
        s.home_touched = true;
        s.cue_at_ms = e.t_ms + s.cue_delay_ms;
        s.stage = TrialStage::CueScheduled;
      } else if (e.kind == K::HomeReleased) {
        s.home_touched = false;
      } else {
        illegal(s, e);
      }
      return s;

    case TrialStage::CueScheduled:
      if (e.kind == K::CueFired) {
        if (e.t_ms != *s.cue_at_ms) illegal(s, e, "cue due at " + std::to_string(*s.cue_at_ms) + " ms");
        s.stage = TrialStage::Reaching;
      } else if (e.kind == K::HomeReleased) {
        // Early release: wait for both hands again and reschedule the cue.
        s.home_touched = false;
        s.cue_at_ms.reset();
        s.stage = TrialStage::AwaitHome;
      } else {
        illegal(s, e);
      }
      return s;

    case TrialStage::Reaching: {
      const std::int64_t deadline = *s.cue_at_ms + kReachDeadlineMs;
      if (e.t_ms > deadline && e.kind != K::DeadlineElapsed) illegal(s, e, "after the deadline");
      switch (e.kind) {
        case K::HomeReleased:
          s.home_touched = false;
          if (!s.release_ms) {
            s.release_ms = e.t_ms;
            s.hand = hand_of(e.side);
          }
          return s;
        case K::HomeBothTouched:
          // The hand went back to home: the next release identifies the hand.
          s.home_touched = true;
          s.release_ms.reset();
          s.hand = Hand::None;
          return s;
        case K::ButtonPressed:
          if (!s.release_ms) illegal(s, e, "press without a home release");
          if (e.t_ms <= *s.release_ms) illegal(s, e, "press at the release instant");
          s.press_ms = e.t_ms;
          s.stage = TrialStage::Logged;
          return s;
        case K::DeadlineElapsed:
          if (e.t_ms != deadline) illegal(s, e, "deadline due at " + std::to_string(deadline) + " ms");
          s.timed_out = true;
          s.hand = Hand::None;
          s.stage = TrialStage::Logged;
          return s;
        default:
          illegal(s, e);
      }
    }

    case TrialStage::Logged:
      if (e.kind == K::HomeBothTouched) {
        s.home_touched = true;
        return s;
      }
      if (e.kind == K::HomeReleased) {
        s.home_touched = false;
        return s;
      }
      if (e.kind != K::Reset) illegal(s, e);
      s.stage = TrialStage::Idle;
      return s;
  }
  illegal(s, e);
}

}  // namespace bartr
