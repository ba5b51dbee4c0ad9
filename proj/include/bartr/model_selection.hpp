#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bartr/kernel.hpp"
#include "bartr/optimize.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

enum class TaskKind { SideClassifier, SuccessClassifier, TimeRegressor };

std::string_view task_name(TaskKind task);  // "side", "success", "time"
TaskKind parse_task(std::string_view text);
bool is_classification(TaskKind task);

/// Training examples for one task. Classification tasks read `labels`
/// (-1/+1), the regression task reads `targets` (seconds).
struct Dataset {
  std::vector<Point3> inputs;
  std::vector<int> labels;
  std::vector<double> targets;

  std::size_t size() const { return inputs.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

inline constexpr std::size_t kFolds = 5;
inline constexpr std::size_t kMinCrossValidationSize = 10;

/// Seeded random partition of [0, n) into `k` near-equal folds. Sizes differ
/// by at most one, larger folds first.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::uint64_t seed, std::size_t k = kFolds);

struct FoldScore {
  // acc/nll for classifiers, mse/me for the regressor; the unused pair is NaN.
  double acc = std::numeric_limits<double>::quiet_NaN();
  double nll = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double me = std::numeric_limits<double>::quiet_NaN();
  double nlml = std::numeric_limits<double>::quiet_NaN();  // training-set NLML of the fold fit
  std::vector<double> log_theta;
  std::uint64_t fit_seed = 0;
  bool degenerate_labels = false;
  bool failed = false;
  std::string error;
};

struct KernelScore {
  std::string kernel;
  TaskKind task = TaskKind::TimeRegressor;
  std::uint64_t seed = 0;
  double acc = std::numeric_limits<double>::quiet_NaN();
  double nll = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double me = std::numeric_limits<double>::quiet_NaN();
  double nlml = std::numeric_limits<double>::quiet_NaN();
  std::size_t fold_count = 0;
  std::vector<FoldScore> folds;  // across visits for aggregated rows

  bool failed() const;
  bool any_degenerate() const;
};

KernelScore cross_validate(const Dataset& data, const KernelExpr& kernel, TaskKind task, std::uint64_t seed,
                           const OptimizerOptions& options = {});

struct Selection {
  CandidateKernel chosen;
  std::size_t chosen_index = 0;
  std::vector<KernelScore> table;  // one row per candidate, input order
};

/// Cross-validates every candidate and picks the lowest mean NLML. Ties go to
/// fewer hyperparameters, then earlier candidates. Throws
/// ConvergenceError listing each candidate's failure when none survive.
Selection select_kernel(const Dataset& data, TaskKind task, std::uint64_t seed,
                        std::span<const CandidateKernel> candidates, const OptimizerOptions& options = {});
Selection select_kernel(const Dataset& data, TaskKind task, std::uint64_t seed,
                        const OptimizerOptions& options = {});

/// Data for one participant visit, one dataset per task.
struct VisitData {
  Dataset side;
  Dataset success;
  Dataset time;

  const Dataset& for_task(TaskKind task) const;
};

/// Per-candidate metrics averaged across visits, rows ordered task-major
/// (side, success, time) then candidate order. Every visit is validated
/// with the same seed, so identical visits give identical rows.
std::vector<KernelScore> evaluation_table(std::span<const VisitData> visits, std::uint64_t seed,
                                          std::span<const CandidateKernel> candidates,
                                          const OptimizerOptions& options = {});

inline constexpr std::string_view kScoreCsvHeader = "kernel,task,acc,nll,mse,me,nlml,folds,seed";

std::string scores_to_csv(std::span<const KernelScore> rows);
std::string scores_to_markdown(std::span<const KernelScore> rows);

}  // namespace bartr
