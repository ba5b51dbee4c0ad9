#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bartr/nonuse.hpp"
#include "bartr/stats.hpp"

namespace bartr {

inline constexpr std::size_t kMinPipelineSamples = 1000;

/// Inputs and settings for one cohort run.
///
/// JSON keys: workspace {r_min, r_max, z_min, z_max}, normative_logs,
/// participant_logs, affected {participant: "left"|"right"}, kernel_selection,
/// kernel, mc_samples, seed, output_dir, threads. Log entries may name a
/// directory, which contributes its *.jsonl files in name order.
struct PipelineConfig {
  WorkspaceSpec workspace;
  std::vector<std::filesystem::path> normative_logs;
  std::vector<std::filesystem::path> participant_logs;
  std::map<std::string, Side> affected;
  bool kernel_selection = true;
  std::string kernel = "rbf+N1";  // used for every model when selection is off
  std::size_t mc_samples = kDefaultMonteCarloSamples;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "bartr_out";
  unsigned threads = 0;  // 0: hardware concurrency

  /// Relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  /// Paths exist, MC count >= 1000, workspace valid.
  void validate() const;
};

/// Expands directories to their *.jsonl files in name order.
std::vector<std::filesystem::path> expand_log_paths(const std::vector<std::filesystem::path>& paths);

struct SessionResult {
  std::string participant;
  int session = 0;
  std::optional<Side> affected;
  bool failed = false;
  std::string error;
  std::string error_kind;  // "validation" or "numeric"
  std::uint64_t seed = 0;  // all per-session streams derive from this
  std::string choice_kernel, success_kernel, time_kernel;
  FitReport choice_fit, success_fit, time_fit;
  NonuseScore score;
  double raw_c = 0.0;
  std::optional<double> raw_s;  // absent when the normative summary is degenerate
  std::vector<KernelScore> selection;  // all three tasks, when selection is on
};

struct NormativeResult {
  std::size_t sessions = 0;
  std::string choice_kernel, left_kernel, right_kernel;
  FitReport choice_fit, left_fit, right_fit;
  NormativeSummary summary;
  std::vector<KernelScore> selection;
};

struct PipelineReport {
  PipelineConfig config;
  NormativeResult normative;
  std::vector<SessionResult> sessions;  // sorted by participant, then session
  std::vector<std::pair<std::string, std::string>> ingest_errors;  // path, message
  SessionScoreMatrix matrix;
  std::vector<int> session_ids;  // matrix columns
  std::optional<IccResult> icc;
  std::string icc_error;

  bool all_failed() const;
  nlohmann::ordered_json to_json() const;
  std::string sessions_csv() const;
  std::string matrix_csv() const;
  /// Writes report.json, sessions.csv, score_matrix.csv and, with selection
  /// on, selection.csv into the output directory.
  void write(const std::filesystem::path& dir) const;
};

/// Fits the normative model, then every participant session concurrently.
/// A failing session is recorded and skipped; normative failures throw.
PipelineReport run_pipeline(const PipelineConfig& cfg);

}  // namespace bartr
