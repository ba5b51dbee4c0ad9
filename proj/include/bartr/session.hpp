#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bartr/workspace.hpp"

namespace bartr {

enum class Side { Left, Right };
enum class Hand { Left, Right, None };
enum class Phase { Spontaneous, Constrained };

std::string_view side_name(Side side);  // "left", "right"
Side parse_side(std::string_view text);
Side opposite(Side side);
std::string_view hand_name(Hand hand);  // "left", "right", "none"
Hand parse_hand(std::string_view text);
Hand hand_of(Side side);
std::string_view phase_name(Phase phase);  // "spontaneous", "constrained"
Phase parse_phase(std::string_view text);

/// One reach attempt. `reach_time` (s) is present iff the target was pressed.
struct TrialRecord {
  int trial = 0;
  Phase phase = Phase::Spontaneous;
  Point3 target;
  double cue_delay = 0.0;  // s
  std::optional<double> reach_time;
  bool success = false;
  Hand hand = Hand::None;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// The trials of one phase of one session.
struct SessionLog {
  std::string participant;
  int session = 1;
  Phase phase = Phase::Spontaneous;
  std::uint64_t seed = 0;
  std::vector<TrialRecord> trials;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

/// Throws ValidationError when a record breaks the trial invariants.
void validate_trial(const TrialRecord& rec);

/// JSON Lines: a header {"participant","session","phase","seed"} followed by
/// one object per trial. Coordinates and times are written with fixed
/// precision (2 and 3 decimals) so re-ingesting reproduces the log exactly.
std::string format_session_log(const SessionLog& log);
void write_session_log(const SessionLog& log, const std::filesystem::path& path);

/// Parses and validates a log. Errors are IngestError carrying the 1-based line.
SessionLog parse_session_log(std::string_view text);
SessionLog ingest(const std::filesystem::path& path);

}  // namespace bartr
