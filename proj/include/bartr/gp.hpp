#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bartr/kernel.hpp"
#include "bartr/optimize.hpp"
#include "bartr/workspace.hpp"

namespace bartr {

struct FitReport {
  double nlml = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  bool converged = false;
  bool degenerate_labels = false;  // classifier trained on a single class
};

struct RegressionPrediction {
  Eigen::VectorXd mean;      // seconds
  Eigen::VectorXd variance;  // latent posterior variance, >= 0
};

/// Exact zero-mean GP regression on centered targets.
class GPRegressor {
 public:
  GPRegressor() = default;

  /// Conditions on data with fixed hyperparameters. Targets must lie in
  /// (0, 3.1] s. With no training data the model predicts `prior_mean`.
  static GPRegressor condition(KernelExpr kernel, Hyperparams theta, std::vector<Point3> inputs,
                               std::vector<double> targets,
                               std::optional<double> prior_mean = std::nullopt);

  bool fitted() const noexcept { return fitted_; }
  RegressionPrediction predict(std::span<const Point3> queries) const;
  /// Negative log marginal likelihood of the centered targets.
  double nlml() const;
  /// d nlml / d log theta.
  Eigen::VectorXd nlml_gradient() const;

  const KernelExpr& kernel() const;
  const Hyperparams& hyperparams() const { return theta_; }
  const std::vector<Point3>& inputs() const { return inputs_; }
  const std::vector<double>& targets() const { return targets_; }
  double target_mean() const { return mean_; }

 private:
  void require_fitted() const;

  bool fitted_ = false;
  std::optional<KernelExpr> kernel_;
  Hyperparams theta_;
  std::vector<Point3> inputs_;
  std::vector<double> targets_;
  double mean_ = 0.0;
  Eigen::VectorXd centered_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

std::pair<GPRegressor, FitReport> fit_regressor(std::vector<Point3> inputs, std::vector<double> targets,
                                                const KernelExpr& kernel, std::uint64_t seed,
                                                const OptimizerOptions& options = {});

double nlml_regression(const GPRegressor& model);

struct LatentPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Binary GP classifier with logistic likelihood and a Laplace approximation
/// of the latent posterior. Labels are -1 / +1.
class GPClassifier {
 public:
  static constexpr int kMaxNewtonIterations = 100;
  static constexpr double kNewtonTolerance = 1e-6;

  GPClassifier() = default;

  /// Finds the posterior mode with Newton iterations. Throws NumericError if
  /// the mode search does not converge.
  static GPClassifier condition(KernelExpr kernel, Hyperparams theta, std::vector<Point3> inputs,
                                std::vector<int> labels);

  bool fitted() const noexcept { return fitted_; }
  /// Probability of class +1, approximating the logistic-Gaussian integral
  /// with the probit rescaling.
  Eigen::VectorXd predict(std::span<const Point3> queries) const;
  LatentPrediction predict_latent(std::span<const Point3> queries) const;
  /// Laplace-approximate negative log marginal likelihood.
  double nlml() const;
  Eigen::VectorXd nlml_gradient() const;

  const KernelExpr& kernel() const;
  const Hyperparams& hyperparams() const { return theta_; }
  const std::vector<Point3>& inputs() const { return inputs_; }
  const std::vector<int>& labels() const { return labels_; }
  const Eigen::VectorXd& mode() const { return f_hat_; }
  /// Norm of the penalized log-likelihood gradient at the mode.
  double mode_gradient_norm() const { return mode_gradient_norm_; }
  int newton_iterations() const { return newton_iterations_; }
  bool degenerate_labels() const;

 private:
  void require_fitted() const;

  bool fitted_ = false;
  std::optional<KernelExpr> kernel_;
  Hyperparams theta_;
  std::vector<Point3> inputs_;
  std::vector<int> labels_;
  Eigen::MatrixXd k_;
  Eigen::VectorXd f_hat_;
  Eigen::VectorXd a_;          // K^-1 f_hat
  Eigen::VectorXd grad_log_;   // d log p(y|f) / df at the mode
  Eigen::VectorXd sqrt_w_;
  Eigen::MatrixXd l_;          // chol(I + W^1/2 K W^1/2), lower
  double log_lik_ = 0.0;
  double mode_gradient_norm_ = 0.0;
  int newton_iterations_ = 0;
};

std::pair<GPClassifier, FitReport> fit_classifier(std::vector<Point3> inputs, std::vector<int> labels,
                                                  const KernelExpr& kernel, std::uint64_t seed,
                                                  const OptimizerOptions& options = {});

struct ClassificationMetrics {
  double accuracy;
  double nll;  // mean -log p(true label)
};

struct RegressionMetrics {
  double mse;        // s^2
  double max_error;  // s
};

ClassificationMetrics classification_metrics(const GPClassifier& model, std::span<const Point3> inputs,
                                             std::span<const int> labels);
RegressionMetrics regression_metrics(const GPRegressor& model, std::span<const Point3> inputs,
                                     std::span<const double> targets);

double logistic(double z);

/// Digest of training data, used to pair serialized models with their inputs.
std::uint64_t training_digest(std::span<const Point3> inputs, std::span<const double> targets);

/// Model documents: {"type", "kernel", "theta" (log-space), "n", "digest"}.
nlohmann::ordered_json to_json(const GPRegressor& model);
nlohmann::ordered_json to_json(const GPClassifier& model);
/// Rebuilds a model from its document and the training data it was fitted on.
/// Throws ValidationError when the data digest does not match.
GPRegressor regressor_from_json(const nlohmann::ordered_json& doc, std::vector<Point3> inputs,
                                std::vector<double> targets);
GPClassifier classifier_from_json(const nlohmann::ordered_json& doc, std::vector<Point3> inputs,
                                  std::vector<int> labels);

}  // namespace bartr
