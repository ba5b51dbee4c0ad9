#include <cmath>
#include <numbers>
#include <numeric>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"
#include "bartr/log.hpp"
#include "bartr/protocol.hpp"

namespace bartr {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void validate_targets(std::span<const double> targets) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double y = targets[i];
    if (!std::isfinite(y) || y <= 0.0 || y > kReachDeadlineSeconds) {
      throw ValidationError("reach time target " + std::to_string(i) + " = " + std::to_string(y) +
                            " outside (0, 3.1] s");
    }
  }
}

Eigen::MatrixXd jittered(Eigen::MatrixXd k) {
  k.diagonal().array() += kGramJitter;
  return k;
}

struct RegressionTerms {
  double nlml;
  Eigen::VectorXd gradient;
};

// NLML and its log-theta gradient for centered targets.
RegressionTerms regression_terms(const KernelExpr& kernel, const Hyperparams& theta,
                                 std::span<const Point3> inputs, const Eigen::VectorXd& centered) {
  std::vector<Eigen::MatrixXd> dk;
  const Eigen::MatrixXd k = jittered(gram_with_gradient(kernel, theta, inputs, dk));
  Eigen::LLT<Eigen::MatrixXd> chol(k);
  if (chol.info() != Eigen::Success) throw NumericError("covariance is not positive definite after jitter");
  const Eigen::VectorXd alpha = chol.solve(centered);
  const Eigen::MatrixXd l = chol.matrixL();
  const double n = static_cast<double>(centered.size());
  const double nlml =
      0.5 * centered.dot(alpha) + l.diagonal().array().log().sum() + n * kHalfLog2Pi;
  Eigen::MatrixXd q = chol.solve(Eigen::MatrixXd::Identity(k.rows(), k.cols()));
  q.noalias() -= alpha * alpha.transpose();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(dk.size()));
  for (std::size_t j = 0; j < dk.size(); ++j) {
    grad(static_cast<Eigen::Index>(j)) = 0.5 * q.cwiseProduct(dk[j]).sum();
  }
  return {nlml, grad};
}

}  // namespace

GPRegressor GPRegressor::condition(KernelExpr kernel, Hyperparams theta, std::vector<Point3> inputs,
                                   std::vector<double> targets, std::optional<double> prior_mean) {
  check_arity(kernel, theta);
  if (inputs.size() != targets.size()) {
    throw ValidationError("regressor: " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(targets.size()) + " targets");
  }
  validate_targets(targets);

  GPRegressor m;
  m.kernel_ = std::move(kernel);
  m.theta_ = std::move(theta);
  m.inputs_ = std::move(inputs);
  m.targets_ = std::move(targets);
  const std::size_t n = m.targets_.size();
  if (prior_mean) {
    m.mean_ = *prior_mean;
  } else if (n > 0) {
    m.mean_ = std::accumulate(m.targets_.begin(), m.targets_.end(), 0.0) / static_cast<double>(n);
  }
  m.centered_ = Eigen::Map<const Eigen::VectorXd>(m.targets_.data(), static_cast<Eigen::Index>(n)).array() -
                m.mean_;
  if (n > 0) {
    m.chol_.compute(jittered(gram(*m.kernel_, m.theta_, m.inputs_)));
    if (m.chol_.info() != Eigen::Success) {
      throw NumericError("covariance is not positive definite after jitter");
    }
    m.alpha_ = m.chol_.solve(m.centered_);
  }
  m.fitted_ = true;
  return m;
}

void GPRegressor::require_fitted() const {
  if (!fitted_) throw StateError("regressor has not been fitted");
}

const KernelExpr& GPRegressor::kernel() const {
  require_fitted();
  return *kernel_;
}

RegressionPrediction GPRegressor::predict(std::span<const Point3> queries) const {
  require_fitted();
  const auto m = static_cast<Eigen::Index>(queries.size());
  RegressionPrediction out{Eigen::VectorXd::Constant(m, mean_), prior_variance(*kernel_, theta_, queries)};
  if (inputs_.empty() || m == 0) return out;

  const Eigen::MatrixXd ks = cross_covariance(*kernel_, theta_, queries, inputs_);
  out.mean.noalias() += ks * alpha_;
  const Eigen::MatrixXd v = chol_.matrixL().solve(ks.transpose());
  out.variance -= v.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (out.variance(i) < -1e-8) {
      warn("regressor: negative posterior variance " + std::to_string(out.variance(i)) +
           " clamped to 0");
    }
    if (out.variance(i) < 0.0) out.variance(i) = 0.0;
  }
  return out;
}

double GPRegressor::nlml() const {
  require_fitted();
  if (inputs_.empty()) return 0.0;
  const Eigen::MatrixXd l = chol_.matrixL();
  return 0.5 * centered_.dot(alpha_) + l.diagonal().array().log().sum() +
         static_cast<double>(centered_.size()) * kHalfLog2Pi;
}

Eigen::VectorXd GPRegressor::nlml_gradient() const {
  require_fitted();
  if (inputs_.empty()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta_.size()));
  return regression_terms(*kernel_, theta_, inputs_, centered_).gradient;
}

double nlml_regression(const GPRegressor& model) { return model.nlml(); }

std::pair<GPRegressor, FitReport> fit_regressor(std::vector<Point3> inputs, std::vector<double> targets,
                                                const KernelExpr& kernel, std::uint64_t seed,
                                                const OptimizerOptions& options) {
  if (inputs.size() < 2) throw ValidationError("fit_regressor needs at least 2 training points");
  if (inputs.size() != targets.size()) throw ValidationError("fit_regressor: inputs/targets size mismatch");
  validate_targets(targets);

  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  Eigen::VectorXd centered =
      Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size())).array() - mean;

  const Objective objective = [&](const Eigen::VectorXd& log_theta) -> std::optional<ObjectiveValue> {
    try {
      const auto theta = Hyperparams::from_log({log_theta.data(), log_theta.data() + log_theta.size()});
      auto terms = regression_terms(kernel, theta, inputs, centered);
      return ObjectiveValue{terms.nlml, std::move(terms.gradient)};
    } catch (const NumericError&) {
      return std::nullopt;
    }
  };

  std::vector<Eigen::VectorXd> extra;
  if (options.scaled_start) {
    const auto start = scaled_log_theta(kernel, inputs);
    extra.emplace_back(Eigen::Map<const Eigen::VectorXd>(start.data(), static_cast<Eigen::Index>(start.size())));
  }
  const auto result = minimize_multistart(objective, kernel.leaf_count(), seed, options, extra);
  const auto& best = result.best.x;
  auto theta = Hyperparams::from_log({best.data(), best.data() + best.size()});
  GPRegressor model = GPRegressor::condition(kernel, std::move(theta), std::move(inputs), std::move(targets));
  FitReport report{model.nlml(), result.total_iterations, result.restarts_used, result.best.converged, false};
  return {std::move(model), report};
}

}  // namespace bartr
