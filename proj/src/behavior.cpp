#include "bartr/behavior.hpp"

#include <cmath>
#include <numbers>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"
#include "bartr/protocol.hpp"

namespace bartr {

void BehaviorModel::validate() const {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("behavior: speed v must be positive");
  if (!(sigma_t >= 0.0) || !std::isfinite(sigma_t)) throw ValidationError("behavior: sigma_t must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("behavior: gamma must be >= 0");
  if (!std::isfinite(beta0) || !std::isfinite(kappa) || !std::isfinite(tau0) || !std::isfinite(beta_z))
    throw ValidationError("behavior: parameters must be finite");
}

BehaviorModel neurotypical_preset() {
  BehaviorModel bm;
  bm.kappa = 4.0;
  // P(right) > 1/2 iff x/r > -beta0/kappa; with azimuth uniform on [0, pi]
  // that is 60% of the workspace when beta0/kappa = cos(0.4 pi).
  bm.beta0 = bm.kappa * std::cos(0.4 * std::numbers::pi);
  return bm;
}

BehaviorModel post_stroke_preset(double gamma, Side affected) {
  BehaviorModel bm = neurotypical_preset();
  bm.gamma = gamma;
  bm.affected = affected;
  return bm;
}

double choice_probability_right(const BehaviorModel& bm, const Point3& x) {
  const double r = radius_of(x);
  const double lateral = r > 0.0 ? x.x / r : 0.0;
  double a = 0.0;
  if (bm.affected) a = *bm.affected == Side::Right ? 1.0 : -1.0;
  return logistic(bm.beta0 + bm.kappa * lateral - bm.gamma * a);
}

double choice_probability(const BehaviorModel& bm, Side side, const Point3& x) {
  const double right = choice_probability_right(bm, x);
  return side == Side::Right ? right : 1.0 - right;
}

double mean_reach_time(const BehaviorModel& bm, const Point3& x) {
  return bm.tau0 + norm(x) / bm.v + bm.beta_z * x.z;
}

double success_probability(const BehaviorModel& bm, const Point3& x) {
  const double slack = kReachDeadlineSeconds - mean_reach_time(bm, x);
  if (bm.sigma_t == 0.0) return slack >= 0.0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-slack / (bm.sigma_t * std::numbers::sqrt2));
}

BehaviorFields ground_truth_fields(const BehaviorModel& bm) {
  bm.validate();
  return {[bm](const Point3& x) { return choice_probability_right(bm, x); },
          [bm](const Point3& x) { return success_probability(bm, x); },
          [bm](const Point3& x) { return mean_reach_time(bm, x); }};
}

}  // namespace bartr
