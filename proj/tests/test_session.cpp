#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "bartr/behavior.hpp"
#include "bartr/datagram.hpp"
#include "bartr/error.hpp"
#include "bartr/protocol.hpp"
#include "bartr/random.hpp"
#include "bartr/session.hpp"
#include "bartr/simulate.hpp"
#include "bartr/trial_state.hpp"

using namespace bartr;
using K = TrialEventKind;

namespace {

TrialState begun(std::int64_t delay_ms = 500) {
  TrialEvent e{K::BeginTrial, 0};
  e.trial = 3;
  e.target = {10, 20, 0};
  e.cue_delay_ms = delay_ms;
  return step_trial(TrialState{}, e);
}

TrialState reaching(std::int64_t cue_at = 2500) {
  auto s = begun(500);
  s = step_trial(s, {K::ArmArrived, 1000});
  s = step_trial(s, {K::HomeBothTouched, cue_at - 500});
  return step_trial(s, {K::CueFired, cue_at});
}

TrialEvent released(Side side, std::int64_t t) {
  TrialEvent e{K::HomeReleased, t};
  e.side = side;
  return e;
}

double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bartr_test_" + name);
}

}  // namespace

TEST_CASE("nominal trial logs the reach time from release to press") {
  auto s = reaching(2500);
  s = step_trial(s, released(Side::Right, 2500));
  s = step_trial(s, {K::ButtonPressed, 3700});
  REQUIRE(s.stage == TrialStage::Logged);
  const auto rec = s.record();
  CHECK(rec.success);
  REQUIRE(rec.reach_time.has_value());
  CHECK(*rec.reach_time == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(rec.hand == Hand::Right);
  CHECK(rec.trial == 3);
  CHECK(rec.cue_delay == doctest::Approx(0.5));
  CHECK(step_trial(s, {K::Reset, 3700}).stage == TrialStage::Idle);
}

TEST_CASE("no press by the deadline is a timeout with no hand") {
  auto s = reaching(2500);
  s = step_trial(s, released(Side::Left, 2600));
  CHECK(s.deadline_ms() == 2500 + 3100);
  CHECK_THROWS_AS(step_trial(s, {K::DeadlineElapsed, 5599}), ProtocolError);
  CHECK_THROWS_AS(step_trial(s, {K::ButtonPressed, 5601}), ProtocolError);
  s = step_trial(s, {K::DeadlineElapsed, 5600});
  const auto rec = s.record();
  CHECK_FALSE(rec.success);
  CHECK_FALSE(rec.reach_time.has_value());
  CHECK(rec.hand == Hand::None);
}

TEST_CASE("the first hand released after the cue is the reaching hand") {
  auto s = reaching(2500);
  s = step_trial(s, released(Side::Left, 2550));
  s = step_trial(s, released(Side::Right, 2600));
  s = step_trial(s, {K::ButtonPressed, 3000});
  CHECK(s.record().hand == Hand::Left);
  CHECK(*s.record().reach_time == doctest::Approx(0.45));

  // A hand that goes back to home does not count.
  auto t = reaching(2500);
  t = step_trial(t, released(Side::Left, 2550));
  t = step_trial(t, {K::HomeBothTouched, 2600});
  t = step_trial(t, released(Side::Right, 2700));
  t = step_trial(t, {K::ButtonPressed, 3500});
  CHECK(t.record().hand == Hand::Right);
  CHECK(*t.record().reach_time == doctest::Approx(0.8));
}

TEST_CASE("release before the cue returns to AwaitHome and reschedules") {
  auto s = begun(500);
  s = step_trial(s, {K::ArmArrived, 1000});
  CHECK(s.stage == TrialStage::AwaitHome);
  s = step_trial(s, {K::HomeBothTouched, 1050});
  CHECK(s.stage == TrialStage::CueScheduled);
  s = step_trial(s, released(Side::Left, 1200));
  CHECK(s.stage == TrialStage::AwaitHome);
  CHECK_THROWS_AS(step_trial(s, {K::CueFired, 1550}), ProtocolError);
  s = step_trial(s, {K::HomeBothTouched, 1400});
  CHECK_THROWS_AS(step_trial(s, {K::CueFired, 1550}), ProtocolError);
  s = step_trial(s, {K::CueFired, 1900});
  CHECK(s.stage == TrialStage::Reaching);
}

TEST_CASE("illegal events name the state and the event") {
  try {
    (void)step_trial(TrialState{}, {K::ButtonPressed, 0});
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Idle") != std::string::npos);
    CHECK(msg.find("button_pressed") != std::string::npos);
  }
  auto s = reaching();
  CHECK_THROWS_AS(step_trial(s, {K::ButtonPressed, 2600}), ProtocolError);  // no release yet
  CHECK_THROWS_AS(step_trial(s, {K::ArmArrived, 2600}), ProtocolError);
  CHECK_THROWS_AS(step_trial(s, {K::CueFired, 2400}), ProtocolError);  // time went backwards
  CHECK_THROWS_AS((void)TrialState{}.record(), StateError);
}

TEST_CASE("random event streams only ever follow legal transitions") {
  const std::set<std::pair<TrialStage, TrialStage>> legal{
      {TrialStage::Idle, TrialStage::ArmMoving},          {TrialStage::ArmMoving, TrialStage::AwaitHome},
      {TrialStage::AwaitHome, TrialStage::CueScheduled},  {TrialStage::CueScheduled, TrialStage::Reaching},
      {TrialStage::CueScheduled, TrialStage::AwaitHome},  {TrialStage::Reaching, TrialStage::Logged},
      {TrialStage::Logged, TrialStage::Idle}};
  Rng rng(99);
  int accepted = 0, rejected = 0;
  for (int stream = 0; stream < 2000; ++stream) {
    TrialState s;
    std::int64_t t = 0;
    for (int step = 0; step < 30; ++step) {
      TrialEvent e{static_cast<K>(rng.below(8)), t};
      t += static_cast<std::int64_t>(rng.below(3)) * 50;
      e.t_ms = t;
      if (s.cue_at_ms && rng.bernoulli(0.3)) e.t_ms = t = std::max(t, *s.cue_at_ms);
      if (s.stage == TrialStage::Reaching && rng.bernoulli(0.2)) e.t_ms = t = std::max(t, *s.cue_at_ms + 3100);
      e.side = rng.bernoulli(0.5) ? Side::Left : Side::Right;
      e.cue_delay_ms = static_cast<std::int64_t>(rng.below(2001));
      try {
        const auto next = step_trial(s, e);
        ++accepted;
        if (next.stage != s.stage) CHECK(legal.count({s.stage, next.stage}) == 1);
        if (next.stage == TrialStage::Logged) validate_trial(next.record());
        s = next;
      } catch (const ProtocolError&) {
        ++rejected;
      }
    }
  }
  CHECK(accepted > 1000);
  CHECK(rejected > 1000);
}

TEST_CASE("datagrams have the fixed wire layout and round trip") {
  const std::string home = encode_datagram(HomeReport{5, true, true});
  CHECK(home == "{\"dev\":\"home\",\"seq\":5,\"left\":true,\"right\":true}\n");
  CHECK(home.size() == 48);
  CHECK(std::get<HomeReport>(decode_datagram(home)) == HomeReport{5, true, true});
  CHECK(encode_datagram(TargetArm{7}) == "{\"dev\":\"target\",\"msg\":\"arm\",\"trial\":7}\n");
  CHECK(encode_datagram(TargetLight{true, 9}) == "{\"dev\":\"target\",\"msg\":\"light\",\"on\":true,\"trial\":9}\n");
  const std::string press = encode_datagram(TargetPress{7, 1234});
  CHECK(press == "{\"dev\":\"target\",\"msg\":\"press\",\"trial\":7,\"t_ms\":1234}\n");
  CHECK(std::get<TargetPress>(decode_datagram(press)).reach_time() == doctest::Approx(1.234).epsilon(1e-15));

  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    Datagram d;
    switch (rng.below(4)) {
      case 0: d = HomeReport{static_cast<std::uint32_t>(rng.next_u64()), rng.bernoulli(0.5), rng.bernoulli(0.5)}; break;
      case 1: d = TargetArm{static_cast<std::uint8_t>(rng.below(256))}; break;
      case 2: d = TargetLight{rng.bernoulli(0.5), static_cast<std::uint8_t>(rng.below(256))}; break;
      default: d = TargetPress{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint32_t>(rng.next_u64())};
    }
    const auto bytes = encode_datagram(d);
    CHECK(decode_datagram(bytes) == d);
    CHECK(encode_datagram(decode_datagram(bytes)) == bytes);
  }
}

TEST_CASE("malformed datagrams report the byte offset") {
  const std::string home = encode_datagram(HomeReport{5, true, false});
  for (std::size_t cut = 0; cut < home.size(); ++cut)
    CHECK_THROWS_AS(decode_datagram(std::string_view(home).substr(0, cut)), DecodeError);
  try {
    decode_datagram("{\"dev\":\"home\",\"left\":true,\"seq\":5,\"right\":true}\n");
    FAIL("expected a decode error");
  } catch (const DecodeError& e) {
    CHECK(e.offset() == 15);
  }
  CHECK_THROWS_AS(decode_datagram("{\"dev\":\"target\",\"msg\":\"arm\",\"trial\":256}\n"), DecodeError);
  CHECK_THROWS_AS(decode_datagram("{\"dev\":\"target\",\"msg\":\"arm\",\"trial\":07}\n"), DecodeError);
  CHECK_THROWS_AS(decode_datagram("{\"dev\":\"target\",\"msg\":\"arm\",\"trial\":7}\n\n"), DecodeError);
  CHECK_THROWS_AS(decode_datagram("{\"dev\":\"target\",\"msg\":\"spin\",\"trial\":7}\n"), DecodeError);
  CHECK_THROWS_AS(decode_datagram("{\"dev\":\"home\",\"seq\":5,\"left\":1,\"right\":true}\n"), DecodeError);
}

TEST_CASE("ground-truth fields") {
  BehaviorModel bm;
  bm.v = 40;
  bm.tau0 = 0.3;
  bm.beta_z = 0.0;
  CHECK(mean_reach_time(bm, {0, 20, 0}) == doctest::Approx(0.8).epsilon(1e-14));
  bm.sigma_t = 0.5;
  const Point3 p{12, 9, 30};
  const double mean = mean_reach_time(bm, p);
  CHECK(success_probability(bm, p) == doctest::Approx(0.5 * std::erfc(-(3.1 - mean) / (0.5 * std::sqrt(2.0)))));

  auto severe = post_stroke_preset(1e6, Side::Left);
  for (const auto& q : generate_grid(WorkspaceSpec{})) CHECK(choice_probability(severe, Side::Left, q) < 1e-12);
  auto mild = post_stroke_preset(0.0, Side::Right);
  CHECK(choice_probability(mild, Side::Right, p) == doctest::Approx(choice_probability_right(neurotypical_preset(), p)));

  // The neurotypical preset prefers the right hand over 60% of the workspace.
  const auto nt = neurotypical_preset();
  const auto pts = sample_uniform(WorkspaceSpec{}, 100000, 5);
  const double frac = static_cast<double>(std::count_if(pts.begin(), pts.end(), [&](const Point3& q) {
                        return choice_probability_right(nt, q) > 0.5;
                      })) /
                      static_cast<double>(pts.size());
  CHECK(frac == doctest::Approx(0.6).epsilon(0.01));

  BehaviorModel bad;
  bad.v = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = BehaviorModel{};
  bad.gamma = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("simulated phases visit all 100 grid targets once") {
  const auto grid = generate_grid(WorkspaceSpec{});
  const std::set<std::tuple<double, double, double>> expected = [&] {
    std::set<std::tuple<double, double, double>> s;
    for (const auto& p : grid) s.emplace(p.x, p.y, p.z);
    return s;
  }();
  for (Phase ph : {Phase::Spontaneous, Phase::Constrained}) {
    const auto log = run_session(post_stroke_preset(1.0), ph, WorkspaceSpec{}, 17);
    REQUIRE(log.trials.size() == 100);
    std::set<std::tuple<double, double, double>> got;
    for (const auto& t : log.trials) {
      got.emplace(t.target.x, t.target.y, t.target.z);
      CHECK(t.phase == ph);
      validate_trial(t);
    }
    CHECK(got == expected);
  }
  CHECK(run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 3) ==
        run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 3));
  CHECK_FALSE(run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 3) ==
              run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 4));
  CHECK_THROWS_AS(run_session(neurotypical_preset(), Phase::Constrained, WorkspaceSpec{}, 3), ValidationError);
}

TEST_CASE("constrained phase uses the affected hand") {
  for (Side side : {Side::Left, Side::Right}) {
    const auto log = run_session(post_stroke_preset(0.0, side), Phase::Constrained, WorkspaceSpec{}, 8);
    for (const auto& t : log.trials)
      if (t.success) CHECK(t.hand == hand_of(side));
  }
}

TEST_CASE("hand choice rates follow the generator") {
  BehaviorModel sym;
  sym.beta0 = 0.0;
  int right = 0, total = 0;
  const auto log = run_session(sym, Phase::Spontaneous, WorkspaceSpec{}, 21);
  for (const auto& t : log.trials) {
    if (!t.success) continue;
    ++total;
    right += t.hand == Hand::Right;
  }
  CHECK(std::abs(static_cast<double>(right) / total - 0.5) <= 0.1);

  right = total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& t : run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, seed).trials) {
      if (!t.success) continue;
      ++total;
      right += t.hand == Hand::Right;
    }
  }
  CHECK(std::abs(static_cast<double>(right) / total - 0.6) <= 0.05);
}

TEST_CASE("cue delays are uniform on [0, 2] s") {
  std::vector<double> delays;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    for (const auto& t : run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 1000 + seed).trials)
      delays.push_back(t.cue_delay);
  REQUIRE(delays.size() == 10000);
  CHECK(*std::min_element(delays.begin(), delays.end()) >= 0.0);
  CHECK(*std::max_element(delays.begin(), delays.end()) <= 2.0);
  CHECK(ks_uniform(delays, 0.0, 2.0) < 0.02);
}

TEST_CASE("session trace: 20 Hz home telemetry, press and light messages") {
  BehaviorModel slow = post_stroke_preset(0.5, Side::Right);
  slow.v = 12.0;  // far targets exceed the deadline
  slow.sigma_t = 0.3;
  SessionTrace trace;
  const auto log = run_session(slow, Phase::Spontaneous, WorkspaceSpec{}, 5, {}, &trace);

  std::vector<std::int64_t> home_times;
  std::vector<std::uint32_t> seqs;
  std::map<int, std::int64_t> light_on, light_off, press_at;
  std::map<int, double> press_time;
  std::int64_t last = 0;
  for (const auto& d : trace.datagrams) {
    CHECK(d.t_ms >= last);
    last = d.t_ms;
    const auto msg = decode_datagram(d.bytes);
    CHECK(encode_datagram(msg) == d.bytes);
    if (const auto* h = std::get_if<HomeReport>(&msg)) {
      home_times.push_back(d.t_ms);
      seqs.push_back(h->seq);
    } else if (const auto* l = std::get_if<TargetLight>(&msg)) {
      (l->on ? light_on : light_off)[l->trial] = d.t_ms;
    } else if (const auto* p = std::get_if<TargetPress>(&msg)) {
      press_at[p->trial] = d.t_ms;
      press_time[p->trial] = p->reach_time();
    }
  }
  REQUIRE(home_times.size() > 100);
  CHECK(home_times.front() == 0);
  for (std::size_t i = 1; i < home_times.size(); ++i) {
    CHECK(home_times[i] - home_times[i - 1] == kTelemetryPeriodMs);
    CHECK(seqs[i] == seqs[i - 1] + 1);
  }
  CHECK(light_on.size() == 100);
  CHECK(light_off.size() == 100);

  int timeouts = 0;
  for (const auto& t : log.trials) {
    if (t.success) {
      REQUIRE(press_time.count(t.trial) == 1);
      CHECK(press_time[t.trial] == *t.reach_time);
      CHECK(press_at[t.trial] - light_on[t.trial] == std::llround(*t.reach_time * 1000));
    } else {
      ++timeouts;
      CHECK(press_time.count(t.trial) == 0);
      CHECK(light_off[t.trial] - light_on[t.trial] == 3100);
    }
  }
  CHECK(timeouts > 0);
  CHECK(timeouts < 100);
}

TEST_CASE("timeout rates match the ground-truth success field") {
  BehaviorModel slow = post_stroke_preset(0.0, Side::Left);
  slow.v = 12.0;
  slow.sigma_t = 0.4;
  double expected = 0.0;
  for (const auto& p : generate_grid(WorkspaceSpec{})) expected += success_probability(slow, p);
  expected /= 100.0;
  int success = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed)
    for (const auto& t : run_session(slow, Phase::Constrained, WorkspaceSpec{}, seed).trials) {
      ++total;
      success += t.success;
    }
  CHECK(static_cast<double>(success) / total == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("session logs round trip through files") {
  const auto log = run_session(post_stroke_preset(2.0), Phase::Spontaneous, WorkspaceSpec{}, 12,
                               {"P07", 2});
  const auto path = temp_file("roundtrip.jsonl");
  write_session_log(log, path);
  CHECK(ingest(path) == log);
  std::filesystem::remove(path);

  const auto text = format_session_log(log);
  CHECK(text.rfind("{\"participant\":\"P07\",\"session\":2,\"phase\":\"spontaneous\",\"seed\":12}\n", 0) == 0);
  CHECK(format_session_log(parse_session_log(text)) == text);
}

TEST_CASE("ingestion rejects schema violations with line numbers") {
  const auto log = run_session(neurotypical_preset(), Phase::Spontaneous, WorkspaceSpec{}, 2);
  const std::string text = format_session_log(log);

  const auto expect_line = [](const std::string& content, std::size_t line, const std::string& needle = {}) {
    try {
      (void)parse_session_log(content);
      FAIL("expected an ingest error");
    } catch (const IngestError& e) {
      CHECK(e.line() == line);
      if (!needle.empty()) CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };

  // 101st trial: header is line 1, so the extra trial is line 102.
  std::string extra = text + "{\"trial\":99,\"phase\":\"spontaneous\",\"target\":[1.00,1.00,1.00],\"cue_delay\":0.100,"
                             "\"reach_time\":1.000,\"success\":true,\"hand\":\"left\"}\n";
  expect_line(extra, 102);

  SessionLog slow = log;
  slow.trials.resize(1);
  slow.trials[0].reach_time = 3.2;
  slow.trials[0].success = true;
  slow.trials[0].hand = Hand::Right;
  expect_line(format_session_log(slow), 2, "3.1");

  SessionLog dup = log;
  dup.trials.resize(3);
  dup.trials[2].target = dup.trials[0].target;
  expect_line(format_session_log(dup), 4, "duplicate");

  SessionLog hand = log;
  hand.trials.resize(1);
  hand.trials[0].hand = Hand::None;
  hand.trials[0].success = true;
  hand.trials[0].reach_time = 1.0;
  expect_line(format_session_log(hand), 2, "hand");

  expect_line("{\"participant\":\"x\",\"session\":1,\"phase\":\"spontaneous\",\"seed\":1}\n{oops\n", 2, "JSON");
  expect_line("{\"participant\":\"x\",\"session\":1,\"phase\":\"sideways\",\"seed\":1}\n", 1, "phase");
  expect_line("{\"participant\":\"x\",\"session\":1,\"phase\":\"spontaneous\"}\n", 1, "seed");
  expect_line("", 1, "header");
  CHECK_THROWS_AS(ingest(temp_file("does_not_exist.jsonl")), ValidationError);
}
