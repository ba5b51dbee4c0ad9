#pragma once

#include <functional>
#include <optional>
#include <string>

#include "bartr/session.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

/// Parametric synthetic participant.
///
/// Spontaneous hand choice: logit P(right | x) = beta0 + kappa * x/r - gamma * a,
/// with a = +1 when the affected side is right, -1 when left, 0 without one.
/// Reach time (s) from home release to press: tau0 + |x|/v + beta_z * z + N(0, sigma_t^2).
struct BehaviorModel {
  double beta0 = 0.0;    // handedness bias (log-odds toward the right hand)
  double kappa = 4.0;    // lateral preference: log-odds per unit x/r
  double gamma = 0.0;    // nonuse severity, shifts choice away from the affected side
  double v = 40.0;       // cm/s
  double tau0 = 0.3;     // s
  double beta_z = 0.005; // s/cm
  double sigma_t = 0.1;  // s
  std::optional<Side> affected;

  void validate() const;
};

/// Neurotypical preset: right-hand choice over 60% of the workspace.
BehaviorModel neurotypical_preset();
/// Post-stroke preset with the given severity.
BehaviorModel post_stroke_preset(double gamma, Side affected = Side::Left);

/// Closed-form quantities implied by the generator.
double choice_probability_right(const BehaviorModel& bm, const Point3& x);
double choice_probability(const BehaviorModel& bm, Side side, const Point3& x);
double mean_reach_time(const BehaviorModel& bm, const Point3& x);
/// P(reach time <= 3.1 s) = Phi((3.1 - mean) / sigma_t).
double success_probability(const BehaviorModel& bm, const Point3& x);

/// The generator's closed-form fields, for oracles.
struct BehaviorFields {
  std::function<double(const Point3&)> choice_right;  // P(right hand | x), spontaneous phase
  std::function<double(const Point3&)> success;       // P(press before the deadline | x)
  std::function<double(const Point3&)> time;          // mean reach time (s)
};

BehaviorFields ground_truth_fields(const BehaviorModel& bm);

}  // namespace bartr
