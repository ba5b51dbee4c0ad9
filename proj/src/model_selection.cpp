#include "bartr/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"
#include "bartr/random.hpp"

namespace bartr {

std::string_view task_name(TaskKind task) {
  switch (task) {
    case TaskKind::SideClassifier: return "side";
    case TaskKind::SuccessClassifier: return "success";
    case TaskKind::TimeRegressor: return "time";
  }
  return "?";
}

TaskKind parse_task(std::string_view text) {
  if (text == "side") return TaskKind::SideClassifier;
  if (text == "success") return TaskKind::SuccessClassifier;
  if (text == "time") return TaskKind::TimeRegressor;
  throw ValidationError("unknown task '" + std::string(text) + "' (expected side, success or time)");
}

bool is_classification(TaskKind task) { return task != TaskKind::TimeRegressor; }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.inputs.reserve(indices.size());
  for (std::size_t i : indices) {
    out.inputs.push_back(inputs.at(i));
    if (!labels.empty()) out.labels.push_back(labels.at(i));
    if (!targets.empty()) out.targets.push_back(targets.at(i));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::uint64_t seed, std::size_t k) {
  if (k == 0) throw ValidationError("fold count must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

bool KernelScore::failed() const {
  return folds.empty() || std::any_of(folds.begin(), folds.end(), [](const FoldScore& f) { return f.failed; });
}

bool KernelScore::any_degenerate() const {
  return std::any_of(folds.begin(), folds.end(), [](const FoldScore& f) { return f.degenerate_labels; });
}

namespace {

void validate_dataset(const Dataset& data, TaskKind task) {
  if (data.size() < kMinCrossValidationSize)
    throw ValidationError("cross validation needs at least " + std::to_string(kMinCrossValidationSize) +
                          " examples, got " + std::to_string(data.size()));
  if (is_classification(task)) {
    if (data.labels.size() != data.size()) throw ValidationError("dataset labels do not match inputs");
  } else if (data.targets.size() != data.size()) {
    throw ValidationError("dataset targets do not match inputs");
  }
}

FoldScore score_fold(const Dataset& train, const Dataset& test, const KernelExpr& kernel, TaskKind task,
                     std::uint64_t fit_seed, const OptimizerOptions& options) {
  FoldScore fold;
  fold.fit_seed = fit_seed;
  try {
    if (is_classification(task)) {
      auto [model, report] = fit_classifier(train.inputs, train.labels, kernel, fit_seed, options);
      const auto metrics = classification_metrics(model, test.inputs, test.labels);
      fold.acc = metrics.accuracy;
      fold.nll = metrics.nll;
      fold.nlml = report.nlml;
      fold.degenerate_labels = report.degenerate_labels;
      fold.log_theta = model.hyperparams().log_values();
    } else {
      auto [model, report] = fit_regressor(train.inputs, train.targets, kernel, fit_seed, options);
      const auto metrics = regression_metrics(model, test.inputs, test.targets);
      fold.mse = metrics.mse;
      fold.me = metrics.max_error;
      fold.nlml = report.nlml;
      fold.log_theta = model.hyperparams().log_values();
    }
    if (!std::isfinite(fold.nlml)) throw NumericError("non-finite training NLML");
  } catch (const NumericError& e) {
    fold.failed = true;
    fold.error = e.what();
  }
  return fold;
}

double mean_of(const std::vector<FoldScore>& folds, double FoldScore::*field) {
  double acc = 0.0;
  for (const auto& f : folds) acc += f.*field;
  return acc / static_cast<double>(folds.size());
}

void fill_means(KernelScore& score) {
  if (score.failed()) return;
  score.acc = mean_of(score.folds, &FoldScore::acc);
  score.nll = mean_of(score.folds, &FoldScore::nll);
  score.mse = mean_of(score.folds, &FoldScore::mse);
  score.me = mean_of(score.folds, &FoldScore::me);
  score.nlml = mean_of(score.folds, &FoldScore::nlml);
}

}  // namespace

KernelScore cross_validate(const Dataset& data, const KernelExpr& kernel, TaskKind task, std::uint64_t seed,
                           const OptimizerOptions& options) {
  validate_dataset(data, task);
  const auto folds = make_folds(data.size(), seed);

  KernelScore score;
  score.kernel = kernel_name(kernel);
  score.task = task;
  score.seed = seed;
  score.fold_count = folds.size();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    std::sort(train_idx.begin(), train_idx.end());
    score.folds.push_back(score_fold(data.subset(train_idx), data.subset(folds[f]), kernel, task,
                                     derive_seed(seed, static_cast<std::uint64_t>(f)), options));
  }
  fill_means(score);
  return score;
}

Selection select_kernel(const Dataset& data, TaskKind task, std::uint64_t seed,
                        std::span<const CandidateKernel> candidates, const OptimizerOptions& options) {
  if (candidates.empty()) throw ValidationError("select_kernel: empty candidate list");
  std::vector<KernelScore> table;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    table.push_back(cross_validate(data, candidates[i].expr, task, seed, options));
    const auto& row = table.back();
    if (row.failed()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double incumbent = table[*best].nlml;
    const double tol = 1e-9 * std::max(1.0, std::abs(incumbent));
    if (row.nlml < incumbent - tol) {
      best = i;
    } else if (std::abs(row.nlml - incumbent) <= tol &&
               candidates[i].expr.leaf_count() < candidates[*best].expr.leaf_count()) {
      best = i;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "kernel selection failed for task " << task_name(task) << ":";
    for (const auto& row : table) {
      for (const auto& f : row.folds)
        if (f.failed) {
          msg << "\n  " << row.kernel << ": " << f.error;
          break;
        }
    }
    throw ConvergenceError(msg.str(), std::numeric_limits<double>::infinity());
  }
  return Selection{candidates[*best], *best, std::move(table)};
}

Selection select_kernel(const Dataset& data, TaskKind task, std::uint64_t seed, const OptimizerOptions& options) {
  const auto candidates = enumerate_candidate_kernels();
  return select_kernel(data, task, seed, candidates, options);
}

const Dataset& VisitData::for_task(TaskKind task) const {
  switch (task) {
    case TaskKind::SideClassifier: return side;
    case TaskKind::SuccessClassifier: return success;
    case TaskKind::TimeRegressor: break;
  }
  return time;
}

std::vector<KernelScore> evaluation_table(std::span<const VisitData> visits, std::uint64_t seed,
                                          std::span<const CandidateKernel> candidates,
                                          const OptimizerOptions& options) {
  if (visits.empty()) throw ValidationError("evaluation_table needs at least one visit");
  std::vector<KernelScore> rows;
  for (TaskKind task : {TaskKind::SideClassifier, TaskKind::SuccessClassifier, TaskKind::TimeRegressor}) {
    for (const auto& c : candidates) {
      KernelScore agg;
      agg.kernel = c.name;
      agg.task = task;
      agg.seed = seed;
      std::vector<KernelScore> per_visit;
      for (const auto& v : visits) per_visit.push_back(cross_validate(v.for_task(task), c.expr, task, seed, options));
      agg.fold_count = per_visit.front().fold_count;
      for (const auto& s : per_visit) agg.folds.insert(agg.folds.end(), s.folds.begin(), s.folds.end());
      if (!agg.failed()) {
        const auto avg = [&](double KernelScore::*field) {
          double acc = 0.0;
          for (const auto& s : per_visit) acc += s.*field;
          return acc / static_cast<double>(per_visit.size());
        };
        agg.acc = avg(&KernelScore::acc);
        agg.nll = avg(&KernelScore::nll);
        agg.mse = avg(&KernelScore::mse);
        agg.me = avg(&KernelScore::me);
        agg.nlml = avg(&KernelScore::nlml);
      }
      rows.push_back(std::move(agg));
    }
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string scores_to_csv(std::span<const KernelScore> rows) {
  std::string out(kScoreCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.kernel + ',' + std::string(task_name(r.task)) + ',' + fmt(r.acc) + ',' + fmt(r.nll) + ',' +
           fmt(r.mse) + ',' + fmt(r.me) + ',' + fmt(r.nlml) + ',' + std::to_string(r.fold_count) + ',' +
           std::to_string(r.seed) + '\n';
  }
  return out;
}

std::string scores_to_markdown(std::span<const KernelScore> rows) {
  const auto cell = [](double v) { return std::isnan(v) ? std::string("-") : fmt(v); };
  std::string out =
      "| Kernel | Task | ACC↑ | NLL↓ | MSE↓ | ME↓ | NLML↓ |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.kernel + " | " + std::string(task_name(r.task)) + " | " + cell(r.acc) + " | " + cell(r.nll) +
           " | " + cell(r.mse) + " | " + cell(r.me) + " | " + (r.failed() ? std::string("failed") : cell(r.nlml)) +
           " |\n";
  }
  return out;
}

}  // namespace bartr
