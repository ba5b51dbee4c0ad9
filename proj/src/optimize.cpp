#include "bartr/optimize.hpp"

#include <cmath>
#include <limits>

#include "bartr/error.hpp"
#include "bartr/random.hpp"

namespace bartr {

namespace {

Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, double bound) {
  return x.cwiseMax(-bound).cwiseMin(bound);
}

// Gradient with components zeroed where the box blocks further descent.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double bound) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= -bound && g(i) > 0.0) || (x(i) >= bound && g(i) < 0.0)) pg(i) = 0.0;
  }
  return pg;
}

}  // namespace

std::optional<MinimizeResult> minimize_bfgs(const Objective& f, Eigen::VectorXd x0,
                                            const OptimizerOptions& options) {
  Eigen::VectorXd x = clamp_box(x0, options.bound);
  auto current = f(x);
  if (!current || !std::isfinite(current->value) || !current->gradient.allFinite()) return std::nullopt;

  const Eigen::Index dim = x.size();
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  MinimizeResult result{x, current->value, 0, false};

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const Eigen::VectorXd& g = current->gradient;
    if (projected_gradient(x, g, options.bound).norm() < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::VectorXd direction = -h_inv * g;
    if (g.dot(direction) >= 0.0) {
      h_inv.setIdentity();
      direction = -g;
    }
    if (!scaled) {
      // First step is at most one unit in log-space.
      const double n = direction.norm();
      if (n > 1.0) direction /= n;
    }

    double step = 1.0;
    std::optional<ObjectiveValue> trial;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      x_new = clamp_box(x + step * direction, options.bound);
      const Eigen::VectorXd moved = x_new - x;
      if (moved.norm() == 0.0) break;
      trial = f(x_new);
      if (trial && std::isfinite(trial->value) && trial->gradient.allFinite() &&
          trial->value <= current->value + 1e-4 * g.dot(moved)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent possible along any tried step: treat as a stationary point
      // if the gradient is small relative to the objective, else a stall.
      result.converged = projected_gradient(x, g, options.bound).norm() <
                         std::sqrt(options.gradient_tolerance) * (1.0 + std::abs(current->value));
      break;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = trial->gradient - g;
    const double sy = s.dot(y);
    const double decrease = current->value - trial->value;
    x = x_new;
    current = std::move(trial);
    result.x = x;
    result.value = current->value;

    if (sy > 1e-12) {
      if (!scaled) {
        h_inv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(dim, dim);
      h_inv = (id - rho * s * y.transpose()) * h_inv * (id - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    if (decrease <= options.relative_tolerance * (1.0 + std::abs(current->value))) {
      result.converged = true;
      break;
    }
  }
  result.x = x;
  result.value = current->value;
  return result;
}

MultiStartResult minimize_multistart(const Objective& f, std::size_t dim, std::uint64_t seed,
                                     const OptimizerOptions& options,
                                     std::span<const Eigen::VectorXd> extra_starts) {
  Rng rng(seed);
  MultiStartResult out;
  bool have_best = false;
  const int total = options.restarts + static_cast<int>(extra_starts.size());
  for (int r = 0; r < total; ++r) {
    Eigen::VectorXd x0(static_cast<Eigen::Index>(dim));
    if (r < options.restarts) {
      for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = rng.uniform(options.init_low, options.init_high);
    } else {
      x0 = extra_starts[static_cast<std::size_t>(r - options.restarts)];
      if (x0.size() != static_cast<Eigen::Index>(dim)) throw ValidationError("extra optimizer start has wrong size");
      x0 = x0.cwiseMax(-options.bound).cwiseMin(options.bound);
    }
    auto res = minimize_bfgs(f, x0, options);
    if (!res) continue;
    ++out.restarts_used;
    out.total_iterations += res->iterations;
    if (!have_best || res->value < out.best.value) {
      out.best = std::move(*res);
      have_best = true;
    }
  }
  if (!have_best) {
    throw ConvergenceError("all " + std::to_string(total) + " optimizer starts diverged",
                           std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace bartr
