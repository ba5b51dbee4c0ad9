#include "bartr/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "bartr/datagram.hpp"
#include "bartr/error.hpp"
#include "bartr/protocol.hpp"
#include "bartr/random.hpp"
#include "bartr/trial_state.hpp"

namespace bartr {

namespace {

struct Release {
  Side side;
  std::int64_t from_ms;
  std::int64_t until_ms;  // hand back on the home contact
};

std::int64_t next_tick(std::int64_t t) { return (t + kTelemetryPeriodMs - 1) / kTelemetryPeriodMs * kTelemetryPeriodMs; }

void add_home_reports(SessionTrace& trace, const std::vector<Release>& releases) {
  std::vector<TimedDatagram> merged;
  std::size_t next = 0;
  std::size_t active = 0;  // releases are time-ordered and never overlap
  for (std::int64_t t = 0, seq = 0; t <= trace.end_ms; t += kTelemetryPeriodMs, ++seq) {
    while (next < trace.datagrams.size() && trace.datagrams[next].t_ms < t) merged.push_back(trace.datagrams[next++]);
    while (active < releases.size() && releases[active].until_ms <= t) ++active;
    HomeReport home{static_cast<std::uint32_t>(seq), true, true};
    if (active < releases.size() && releases[active].from_ms <= t) {
      (releases[active].side == Side::Left ? home.left : home.right) = false;
    }
    merged.push_back({t, encode_datagram(home)});
  }
  while (next < trace.datagrams.size()) merged.push_back(trace.datagrams[next++]);
  trace.datagrams = std::move(merged);
}

}  // namespace

SessionLog run_session(const BehaviorModel& bm, Phase phase, const WorkspaceSpec& spec, std::uint64_t seed,
                       const SessionIdentity& id, SessionTrace* trace) {
  bm.validate();
  spec.validate();
  if (phase == Phase::Constrained && !bm.affected)
    throw ValidationError("constrained phase needs a behavior model with an affected side");

  SessionLog log{id.participant, id.session, phase, seed, {}};
  auto targets = generate_grid(spec);
  Rng order(derive_seed(seed, "targets"));
  order.shuffle(std::span<Point3>(targets));
  Rng rng(derive_seed(seed, "trials"));

  SessionTrace local;
  std::vector<Release> releases;
  TrialState st;
  std::int64_t t = 0;
  using K = TrialEventKind;

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Point3& target = targets[i];
    const int trial = static_cast<int>(i);
    const std::int64_t delay = std::llround(rng.uniform() * static_cast<double>(kMaxCueDelayMs));
    Side side = bm.affected.value_or(Side::Right);
    if (phase == Phase::Spontaneous) side = rng.bernoulli(choice_probability_right(bm, target)) ? Side::Right : Side::Left;
    const double seconds = mean_reach_time(bm, target) + bm.sigma_t * rng.normal();
    const std::int64_t reach_ms = std::max<std::int64_t>(1, std::llround(seconds * 1000.0));

    TrialEvent begin{K::BeginTrial, t};
    begin.trial = trial;
    begin.phase = phase;
    begin.target = target;
    begin.cue_delay_ms = delay;
    st = step_trial(st, begin);
    local.datagrams.push_back({t, encode_datagram(TargetArm{static_cast<std::uint8_t>(trial)})});

    const std::int64_t arrive = t + kArmTravelMs;
    st = step_trial(st, {K::ArmArrived, arrive});
    // Both hands have been resting on home since the previous trial; the
    // controller sees it on the first telemetry report after arrival.
    const std::int64_t touch = next_tick(arrive);
    st = step_trial(st, {K::HomeBothTouched, touch});
    const std::int64_t cue = touch + delay;
    st = step_trial(st, {K::CueFired, cue});
    local.datagrams.push_back({cue, encode_datagram(TargetLight{true, static_cast<std::uint8_t>(trial)})});
    TrialEvent release{K::HomeReleased, cue};
    release.side = side;
    st = step_trial(st, release);

    std::int64_t end = 0;
    if (reach_ms <= kReachDeadlineMs) {
      end = cue + reach_ms;
      st = step_trial(st, {K::ButtonPressed, end});
      local.datagrams.push_back({end, encode_datagram(TargetPress{static_cast<std::uint8_t>(trial),
                                                                  static_cast<std::uint32_t>(reach_ms)})});
    } else {
      end = cue + kReachDeadlineMs;
      st = step_trial(st, {K::DeadlineElapsed, end});
    }
    local.datagrams.push_back({end, encode_datagram(TargetLight{false, static_cast<std::uint8_t>(trial)})});
    log.trials.push_back(st.record());
    st = step_trial(st, {K::Reset, end});
    releases.push_back({side, cue, end + kReturnHomeMs});
    t = end + kInterTrialMs;
  }

  if (trace) {
    local.end_ms = t;
    add_home_reports(local, releases);
    *trace = std::move(local);
  }
  return log;
}

}  // namespace bartr
