#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "bartr/behavior.hpp"
#include "bartr/gp.hpp"
#include "bartr/model_selection.hpp"
#include "bartr/protocol.hpp"
#include "bartr/session.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

/// Batch-evaluated scalar field over workspace points.
using Field = std::function<Eigen::VectorXd(std::span<const Point3>)>;

/// The five quantities the nonuse score integrates, all for the affected side.
struct ScoreFields {
  Field success;             // P(success | x), constrained phase
  Field participant_choice;  // P(participant reaches with the affected side | x)
  Field normative_choice;    // P(normative reach with that same physical side | x)
  Field participant_time;    // expected affected-arm reach time (s)
  Field normative_time;      // expected normative reach time for that side (s)
};

/// Kernels used for the three model kinds.
struct ModelKernels {
  KernelExpr choice;
  KernelExpr success;
  KernelExpr time;
};

struct NormativeKernels {
  KernelExpr choice;
  KernelExpr left_time;
  KernelExpr right_time;
};

struct ParticipantModel {
  std::string id;
  Side affected = Side::Left;
  GPClassifier choice;   // P(right hand | x), spontaneous trials
  GPClassifier success;  // P(success | x), constrained trials
  GPRegressor time;      // affected-arm reach times from both phases
  FitReport choice_fit, success_fit, time_fit;

  Eigen::VectorXd affected_choice(std::span<const Point3> xs) const;
};

struct NormativeModel {
  GPClassifier choice;  // P(right hand | x), pooled spontaneous trials
  GPRegressor left_time;
  GPRegressor right_time;
  FitReport choice_fit, left_fit, right_fit;

  const GPRegressor& time(Side side) const { return side == Side::Left ? left_time : right_time; }
  Eigen::VectorXd choice_probability(Side side, std::span<const Point3> xs) const;
};

/// Spontaneous trials with a hand, labelled +1 for right and -1 for left.
Dataset choice_dataset(std::span<const SessionLog> spontaneous);
/// Constrained trials labelled +1 for success and -1 for timeout.
Dataset success_dataset(const SessionLog& constrained);
/// Reach times of successful trials made with `side`.
Dataset time_dataset(std::span<const SessionLog> logs, Side side);

ParticipantModel fit_participant_model(const std::string& id, Side affected, const SessionLog& spontaneous,
                                       const SessionLog& constrained, const ModelKernels& kernels,
                                       std::uint64_t seed, const OptimizerOptions& options = {});

/// Pools neurotypical sessions: the choice model from spontaneous trials and
/// per-side time models from every successful trial of that side.
NormativeModel fit_normative_model(std::span<const SessionLog> logs, const NormativeKernels& kernels,
                                   std::uint64_t seed, const OptimizerOptions& options = {});
NormativeModel fit_normative_model(std::span<const SessionLog> logs, const ModelKernels& kernels,
                                   std::uint64_t seed, const OptimizerOptions& options = {});

/// The returned fields refer to `pm` and `nm`, which must outlive them.
ScoreFields model_fields(const ParticipantModel& pm, const NormativeModel& nm);
/// Closed-form generator fields; the normative side is the participant's affected side.
ScoreFields ground_truth_score_fields(const BehaviorModel& participant, const BehaviorModel& normative);

/// Success probability at x. Points outside the workspace are rejected.
double c_bartr(const ScoreFields& f, const Point3& x, const WorkspaceSpec& spec = {});
double c_bartr(const ParticipantModel& pm, const Point3& x, const WorkspaceSpec& spec = {});
/// p_p(s_p | x) * p_n(s_p | x) * (t_n(x) - t_p(x)).
double s_bartr(const ScoreFields& f, const Point3& x, const WorkspaceSpec& spec = {});
double s_bartr(const ParticipantModel& pm, const NormativeModel& nm, const Point3& x,
               const WorkspaceSpec& spec = {});

struct NonuseScore {
  std::string participant;
  double nu_bartr = 0.0;
  double c_mean = 0.0;
  double s_mean = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double mc_se = 0.0;  // sample sd of (c - s) / sqrt(n)
};

/// Monte-Carlo workspace mean of c(x) - s(x) over n volume-uniform samples.
NonuseScore nu_bartr(const ScoreFields& f, const WorkspaceSpec& spec, std::size_t n, std::uint64_t seed,
                     const std::string& participant = {});
NonuseScore nu_bartr(const ParticipantModel& pm, const NormativeModel& nm, const WorkspaceSpec& spec,
                     std::size_t n = kDefaultMonteCarloSamples, std::uint64_t seed = 0);

nlohmann::ordered_json to_json(const NonuseScore& score);

/// Successful presses over trials of a constrained phase.
double raw_c_bartr(const SessionLog& constrained);

/// Per-side means over normative spontaneous sessions.
struct NormativeSummary {
  double left_count = 0.0;  // successful reaches per session
  double right_count = 0.0;
  double left_time = 0.0;  // mean reach time (s)
  double right_time = 0.0;

  double count(Side s) const { return s == Side::Left ? left_count : right_count; }
  double time(Side s) const { return s == Side::Left ? left_time : right_time; }
};

NormativeSummary summarize_normative(std::span<const SessionLog> spontaneous);

/// min(n_p / n_n, 1) * min(t_n - t_p, 0); zero when the participant never
/// succeeded with the affected side.
double raw_s_bartr(double participant_count, double normative_count, double normative_time,
                   double participant_time);
double raw_s_bartr(const SessionLog& spontaneous, const NormativeSummary& normative, Side affected);

}  // namespace bartr
