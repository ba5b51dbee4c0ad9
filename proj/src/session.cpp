#include "bartr/session.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <tuple>

#include "bartr/error.hpp"
#include "bartr/protocol.hpp"

namespace bartr {

std::string_view side_name(Side side) { return side == Side::Left ? "left" : "right"; }

Side parse_side(std::string_view text) {
  if (text == "left") return Side::Left;
  if (text == "right") return Side::Right;
  throw ValidationError("unknown side '" + std::string(text) + "' (expected left or right)");
}

Side opposite(Side side) { return side == Side::Left ? Side::Right : Side::Left; }

std::string_view hand_name(Hand hand) {
  switch (hand) {
    case Hand::Left: return "left";
    case Hand::Right: return "right";
    case Hand::None: break;
  }
  return "none";
}

Hand parse_hand(std::string_view text) {
  if (text == "left") return Hand::Left;
  if (text == "right") return Hand::Right;
  if (text == "none") return Hand::None;
  throw ValidationError("unknown hand '" + std::string(text) + "' (expected left, right or none)");
}

Hand hand_of(Side side) { return side == Side::Left ? Hand::Left : Hand::Right; }

std::string_view phase_name(Phase phase) { return phase == Phase::Spontaneous ? "spontaneous" : "constrained"; }

Phase parse_phase(std::string_view text) {
  if (text == "spontaneous") return Phase::Spontaneous;
  if (text == "constrained") return Phase::Constrained;
  throw ValidationError("unknown phase '" + std::string(text) + "' (expected spontaneous or constrained)");
}

void validate_trial(const TrialRecord& rec) {
  if (rec.trial < 0 || rec.trial >= static_cast<int>(kTrialsPerPhase))
    throw ValidationError("trial index " + std::to_string(rec.trial) + " outside 0..99");
  if (!std::isfinite(rec.target.x) || !std::isfinite(rec.target.y) || !std::isfinite(rec.target.z))
    throw ValidationError("target has a non-finite coordinate");
  if (!(rec.cue_delay >= 0.0 && rec.cue_delay <= kMaxCueDelaySeconds))
    throw ValidationError("cue delay outside [0, 2] s");
  if (rec.reach_time.has_value() != rec.success)
    throw ValidationError("reach time must be present exactly when the trial succeeded");
  if (rec.reach_time && !(*rec.reach_time > 0.0 && *rec.reach_time <= kReachDeadlineSeconds)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "reach time %.3f s outside (0, 3.1] s deadline", *rec.reach_time);
    throw ValidationError(buf);
  }
  if ((rec.hand == Hand::None) == rec.success)
    throw ValidationError("hand must be none exactly when the trial timed out");
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace

std::string format_session_log(const SessionLog& log) {
  nlohmann::ordered_json header;
  header["participant"] = log.participant;
  header["session"] = log.session;
  header["phase"] = phase_name(log.phase);
  header["seed"] = log.seed;
  std::string out = header.dump() + '\n';
  for (const auto& t : log.trials) {
    out += "{\"trial\":" + std::to_string(t.trial) + ",\"phase\":\"" + std::string(phase_name(t.phase)) +
           "\",\"target\":[" + fixed(t.target.x, 2) + ',' + fixed(t.target.y, 2) + ',' + fixed(t.target.z, 2) +
           "],\"cue_delay\":" + fixed(t.cue_delay, 3) +
           ",\"reach_time\":" + (t.reach_time ? fixed(*t.reach_time, 3) : std::string("null")) +
           ",\"success\":" + (t.success ? "true" : "false") + ",\"hand\":\"" + std::string(hand_name(t.hand)) +
           "\"}\n";
  }
  return out;
}

void write_session_log(const SessionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write session log " + path.string());
  out << format_session_log(log);
  if (!out) throw ValidationError("failed writing session log " + path.string());
}

namespace {

using Json = nlohmann::json;

const Json& field(const Json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(std::string("missing key '") + key + "'", line);
  return *it;
}

double number(const Json& obj, const char* key, std::size_t line) {
  const Json& v = field(obj, key, line);
  if (!v.is_number()) throw IngestError(std::string("'") + key + "' must be a number", line);
  return v.get<double>();
}

std::string text(const Json& obj, const char* key, std::size_t line) {
  const Json& v = field(obj, key, line);
  if (!v.is_string()) throw IngestError(std::string("'") + key + "' must be a string", line);
  return v.get<std::string>();
}

void exact_keys(const Json& obj, std::initializer_list<const char*> keys, std::size_t line) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw IngestError("unexpected key '" + it.key() + "'", line);
  }
  for (const char* k : keys) field(obj, k, line);
}

Json parse_line(std::string_view line, std::size_t line_no) {
  Json obj = Json::parse(line.begin(), line.end(), nullptr, false);
  if (obj.is_discarded()) throw IngestError("malformed JSON", line_no);
  if (!obj.is_object()) throw IngestError("expected a JSON object", line_no);
  return obj;
}

}  // namespace

SessionLog parse_session_log(std::string_view content) {
  SessionLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  std::set<std::tuple<double, double, double>> seen;
  int last_trial = -1;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const Json obj = parse_line(line, line_no);

    if (!have_header) {
      exact_keys(obj, {"participant", "session", "phase", "seed"}, line_no);
      log.participant = text(obj, "participant", line_no);
      const Json& session = obj["session"];
      if (!session.is_number_integer() || session.get<long long>() < 1)
        throw IngestError("'session' must be a positive integer", line_no);
      log.session = session.get<int>();
      try {
        log.phase = parse_phase(text(obj, "phase", line_no));
      } catch (const IngestError&) {
        throw;
      } catch (const ValidationError& e) {
        throw IngestError(e.what(), line_no);
      }
      const Json& seed = obj["seed"];
      if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
        throw IngestError("'seed' must be a non-negative integer", line_no);
      log.seed = seed.get<std::uint64_t>();
      have_header = true;
      continue;
    }

    if (log.trials.size() == kTrialsPerPhase)
      throw IngestError("more than " + std::to_string(kTrialsPerPhase) + " trials in one phase", line_no);
    exact_keys(obj, {"trial", "phase", "target", "cue_delay", "reach_time", "success", "hand"}, line_no);
    TrialRecord rec;
    try {
      const Json& trial = obj["trial"];
      if (!trial.is_number_integer()) throw IngestError("'trial' must be an integer", line_no);
      rec.trial = trial.get<int>();
      rec.phase = parse_phase(text(obj, "phase", line_no));
      if (rec.phase != log.phase) throw IngestError("trial phase differs from the header phase", line_no);
      const Json& target = obj["target"];
      if (!target.is_array() || target.size() != 3 || !target[0].is_number() || !target[1].is_number() ||
          !target[2].is_number())
        throw IngestError("'target' must be an array of 3 numbers", line_no);
      rec.target = Point3{target[0].get<double>(), target[1].get<double>(), target[2].get<double>()};
      rec.cue_delay = number(obj, "cue_delay", line_no);
      const Json& rt = obj["reach_time"];
      if (!rt.is_null()) {
        if (!rt.is_number()) throw IngestError("'reach_time' must be a number or null", line_no);
        rec.reach_time = rt.get<double>();
      }
      const Json& success = obj["success"];
      if (!success.is_boolean()) throw IngestError("'success' must be a boolean", line_no);
      rec.success = success.get<bool>();
      rec.hand = parse_hand(text(obj, "hand", line_no));
      validate_trial(rec);
    } catch (const IngestError&) {
      throw;
    } catch (const ValidationError& e) {
      throw IngestError(e.what(), line_no);
    }
    if (rec.trial <= last_trial) throw IngestError("trial indices must increase", line_no);
    last_trial = rec.trial;
    if (!seen.emplace(rec.target.x, rec.target.y, rec.target.z).second)
      throw IngestError("duplicate target within the phase", line_no);
    log.trials.push_back(rec);
  }
  if (!have_header) throw IngestError("missing header line", line_no == 0 ? 1 : line_no);
  return log;
}

SessionLog ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open session log " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_session_log(buf.str());
}

}  // namespace bartr
