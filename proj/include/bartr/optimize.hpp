#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

namespace bartr {

struct ObjectiveValue {
  double value;
  Eigen::VectorXd gradient;
};

/// Returns nullopt when the objective cannot be evaluated at x (e.g. a failed
/// factorization); the line search treats that as +infinity.
using Objective = std::function<std::optional<ObjectiveValue>(const Eigen::VectorXd&)>;

struct OptimizerOptions {
  int restarts = 5;
  double init_low = -2.0;  // log-space restart box
  double init_high = 2.0;
  double bound = 9.0;  // |log theta| is kept within this box
  int max_iterations = 150;
  double gradient_tolerance = 1e-5;
  double relative_tolerance = 1e-10;
  // GP fits add one start with RBF length-scales at the median pairwise input
  // distance; random starts alone can all land on the flat K = I plateau.
  bool scaled_start = true;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Quasi-Newton (BFGS) descent with Armijo backtracking inside the box
/// [-bound, bound]^d. Returns nullopt if the starting point is not evaluable.
std::optional<MinimizeResult> minimize_bfgs(const Objective& f, Eigen::VectorXd x0,
                                            const OptimizerOptions& options);

struct MultiStartResult {
  MinimizeResult best;
  int restarts_used = 0;  // restarts that produced a finite optimum
  int total_iterations = 0;
};

/// Runs `options.restarts` seeded restarts with log-parameters drawn uniformly
/// from [init_low, init_high], then any `extra_starts`; keeps the best.
/// Throws ConvergenceError when every start fails.
MultiStartResult minimize_multistart(const Objective& f, std::size_t dim, std::uint64_t seed,
                                     const OptimizerOptions& options,
                                     std::span<const Eigen::VectorXd> extra_starts = {});

}  // namespace bartr
