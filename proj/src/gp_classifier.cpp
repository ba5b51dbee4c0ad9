#include <cmath>
#include <numbers>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"

namespace bartr {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double log_logistic(double z) { return z < 0.0 ? z - std::log1p(std::exp(z)) : -std::log1p(std::exp(-z)); }

struct LaplaceMode {
  Eigen::VectorXd f;
  Eigen::VectorXd a;
  Eigen::VectorXd grad_log;
  Eigen::VectorXd w;
  Eigen::VectorXd sqrt_w;
  Eigen::MatrixXd l;
  double log_lik = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

double log_likelihood(const Eigen::VectorXd& f, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) acc += log_logistic(y(i) * f(i));
  return acc;
}

// Likelihood derivatives at f: gradient (t - pi) and W = pi (1 - pi).
void likelihood_terms(const Eigen::VectorXd& f, const Eigen::VectorXd& y, Eigen::VectorXd& grad,
                      Eigen::VectorXd& w) {
  grad.resize(f.size());
  w.resize(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double pi = logistic(f(i));
    grad(i) = 0.5 * (y(i) + 1.0) - pi;
    w(i) = pi * (1.0 - pi);
  }
}

Eigen::MatrixXd factor_b(const Eigen::MatrixXd& k, const Eigen::VectorXd& sqrt_w) {
  Eigen::MatrixXd b = sqrt_w.asDiagonal() * k * sqrt_w.asDiagonal();
  b.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> chol(b);
  if (chol.info() != Eigen::Success) throw NumericError("Laplace: I + W^1/2 K W^1/2 is not positive definite");
  return chol.matrixL();
}

// Newton iterations on Psi(f) = log p(y|f) - 1/2 f^T K^-1 f, with step halving
// whenever a full step fails to increase Psi.
LaplaceMode find_mode(const Eigen::MatrixXd& k, const Eigen::VectorXd& y) {
  const Eigen::Index n = k.rows();
  LaplaceMode m;
  m.f = Eigen::VectorXd::Zero(n);
  m.a = Eigen::VectorXd::Zero(n);
  double psi = log_likelihood(m.f, y);
  likelihood_terms(m.f, y, m.grad_log, m.w);
  m.gradient_norm = (m.grad_log - m.a).norm();

  const auto newton_proposal = [&](Eigen::VectorXd& a_new, Eigen::VectorXd& f_new) {
    const Eigen::VectorXd sqrt_w = m.w.cwiseSqrt();
    const Eigen::MatrixXd l = factor_b(k, sqrt_w);
    const Eigen::VectorXd b = m.w.cwiseProduct(m.f) + m.grad_log;
    Eigen::VectorXd c = sqrt_w.cwiseProduct(k * b);
    l.triangularView<Eigen::Lower>().solveInPlace(c);
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(c);
    a_new = b - sqrt_w.cwiseProduct(c);
    f_new = k * a_new;
    return -0.5 * a_new.dot(f_new) + log_likelihood(f_new, y);
  };
  const auto accept = [&](Eigen::VectorXd&& a_new, Eigen::VectorXd&& f_new, double psi_new) {
    m.a = std::move(a_new);
    m.f = std::move(f_new);
    psi = psi_new;
    likelihood_terms(m.f, y, m.grad_log, m.w);
    m.gradient_norm = (m.grad_log - m.a).norm();
  };

  Eigen::VectorXd a_new, f_new;
  for (int it = 0; it < GPClassifier::kMaxNewtonIterations && m.gradient_norm >= GPClassifier::kNewtonTolerance;
       ++it) {
    m.iterations = it + 1;
    double psi_new = newton_proposal(a_new, f_new);
    for (int halving = 0; halving < 30 && !(psi_new >= psi); ++halving) {
      a_new = 0.5 * (a_new + m.a);
      f_new = k * a_new;
      psi_new = -0.5 * a_new.dot(f_new) + log_likelihood(f_new, y);
    }
    if (!std::isfinite(psi_new)) throw NumericError("Laplace: non-finite objective during Newton iterations");
    accept(std::move(a_new), std::move(f_new), psi_new);
  }
  // Once inside the tolerance, a couple of full steps sharpen the mode cheaply;
  // the evidence gradient is sensitive to residual error in f.
  for (int polish = 0; polish < 2 && m.gradient_norm < GPClassifier::kNewtonTolerance && m.gradient_norm > 0.0;
       ++polish) {
    const double before = m.gradient_norm;
    const auto saved_a = m.a;
    const auto saved_f = m.f;
    const double saved_psi = psi;
    const double psi_new = newton_proposal(a_new, f_new);
    if (!std::isfinite(psi_new) || psi_new < psi - 1e-12) break;
    accept(std::move(a_new), std::move(f_new), psi_new);
    if (m.gradient_norm > before) {
      accept(Eigen::VectorXd(saved_a), Eigen::VectorXd(saved_f), saved_psi);
      break;
    }
  }
  m.converged = m.gradient_norm < GPClassifier::kNewtonTolerance;
  m.sqrt_w = m.w.cwiseSqrt();
  m.l = factor_b(k, m.sqrt_w);
  m.log_lik = log_likelihood(m.f, y);
  return m;
}

Eigen::MatrixXd jittered_gram(const KernelExpr& kernel, const Hyperparams& theta,
                              std::span<const Point3> inputs, std::vector<Eigen::MatrixXd>* dk) {
  Eigen::MatrixXd k = dk ? gram_with_gradient(kernel, theta, inputs, *dk) : gram(kernel, theta, inputs);
  k.diagonal().array() += kGramJitter;
  return k;
}

double laplace_nlml(const LaplaceMode& m) {
  return 0.5 * m.a.dot(m.f) - m.log_lik + m.l.diagonal().array().log().sum();
}

// Gradient of the Laplace NLML, including the implicit dependence of the mode
// on the hyperparameters.
Eigen::VectorXd laplace_nlml_gradient(const LaplaceMode& m, const Eigen::MatrixXd& k,
                                      const std::vector<Eigen::MatrixXd>& dk) {
  const Eigen::Index n = k.rows();
  Eigen::MatrixXd r = m.sqrt_w.asDiagonal().toDenseMatrix();
  m.l.triangularView<Eigen::Lower>().solveInPlace(r);
  m.l.transpose().triangularView<Eigen::Upper>().solveInPlace(r);
  r = m.sqrt_w.asDiagonal() * r;

  Eigen::MatrixXd c = m.sqrt_w.asDiagonal() * k;
  m.l.triangularView<Eigen::Lower>().solveInPlace(c);
  Eigen::VectorXd third(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = logistic(m.f(i));
    third(i) = -pi * (1.0 - pi) * (1.0 - 2.0 * pi);
  }
  // d logZ / d f_hat = -1/2 diag((K^-1 + W)^-1) dW/df, with dW/df = -(third derivative).
  const Eigen::VectorXd s2 =
      0.5 * (k.diagonal() - c.colwise().squaredNorm().transpose()).cwiseProduct(third);

  Eigen::VectorXd grad(static_cast<Eigen::Index>(dk.size()));
  for (std::size_t j = 0; j < dk.size(); ++j) {
    const Eigen::MatrixXd& dkj = dk[j];
    const double s1 = 0.5 * m.a.dot(dkj * m.a) - 0.5 * r.cwiseProduct(dkj).sum();
    const Eigen::VectorXd b = dkj * m.grad_log;
    const Eigen::VectorXd s3 = b - k * (r * b);
    grad(static_cast<Eigen::Index>(j)) = -(s1 + s2.dot(s3));
  }
  return grad;
}

Eigen::VectorXd label_vector(std::span<const int> labels) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1 && labels[i] != -1) {
      throw ValidationError("classifier label " + std::to_string(i) + " must be -1 or +1");
    }
    y(static_cast<Eigen::Index>(i)) = labels[i];
  }
  return y;
}

}  // namespace

GPClassifier GPClassifier::condition(KernelExpr kernel, Hyperparams theta, std::vector<Point3> inputs,
                                     std::vector<int> labels) {
  check_arity(kernel, theta);
  if (inputs.empty()) throw ValidationError("classifier needs at least one training point");
  if (inputs.size() != labels.size()) {
    throw ValidationError("classifier: " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(labels.size()) + " labels");
  }
  const Eigen::VectorXd y = label_vector(labels);

  GPClassifier m;
  m.k_ = jittered_gram(kernel, theta, inputs, nullptr);
  LaplaceMode mode = find_mode(m.k_, y);
  if (!mode.converged) {
    throw NumericError("Laplace mode search did not converge after " + std::to_string(mode.iterations) +
                       " Newton iterations (gradient norm " + std::to_string(mode.gradient_norm) + ")");
  }
  m.kernel_ = std::move(kernel);
  m.theta_ = std::move(theta);
  m.inputs_ = std::move(inputs);
  m.labels_ = std::move(labels);
  m.f_hat_ = std::move(mode.f);
  m.a_ = std::move(mode.a);
  m.grad_log_ = std::move(mode.grad_log);
  m.sqrt_w_ = std::move(mode.sqrt_w);
  m.l_ = std::move(mode.l);
  m.log_lik_ = mode.log_lik;
  m.mode_gradient_norm_ = mode.gradient_norm;
  m.newton_iterations_ = mode.iterations;
  m.fitted_ = true;
  return m;
}

void GPClassifier::require_fitted() const {
  if (!fitted_) throw StateError("classifier has not been fitted");
}

const KernelExpr& GPClassifier::kernel() const {
  require_fitted();
  return *kernel_;
}

bool GPClassifier::degenerate_labels() const {
  for (int label : labels_) {
    if (label != labels_.front()) return false;
  }
  return true;
}

LatentPrediction GPClassifier::predict_latent(std::span<const Point3> queries) const {
  require_fitted();
  const Eigen::MatrixXd ks = cross_covariance(*kernel_, theta_, queries, inputs_);
  LatentPrediction out{ks * grad_log_, prior_variance(*kernel_, theta_, queries)};
  Eigen::MatrixXd v = sqrt_w_.asDiagonal() * ks.transpose();
  l_.triangularView<Eigen::Lower>().solveInPlace(v);
  out.variance -= v.colwise().squaredNorm().transpose();
  out.variance = out.variance.cwiseMax(0.0);
  return out;
}

Eigen::VectorXd GPClassifier::predict(std::span<const Point3> queries) const {
  const LatentPrediction latent = predict_latent(queries);
  Eigen::VectorXd p(latent.mean.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double kappa = 1.0 / std::sqrt(1.0 + std::numbers::pi * latent.variance(i) / 8.0);
    p(i) = logistic(kappa * latent.mean(i));
  }
  return p;
}

double GPClassifier::nlml() const {
  require_fitted();
  return 0.5 * a_.dot(f_hat_) - log_lik_ + l_.diagonal().array().log().sum();
}

Eigen::VectorXd GPClassifier::nlml_gradient() const {
  require_fitted();
  std::vector<Eigen::MatrixXd> dk;
  gram_with_gradient(*kernel_, theta_, inputs_, dk);
  LaplaceMode m;
  m.f = f_hat_;
  m.a = a_;
  m.grad_log = grad_log_;
  m.sqrt_w = sqrt_w_;
  m.l = l_;
  return laplace_nlml_gradient(m, k_, dk);
}

std::pair<GPClassifier, FitReport> fit_classifier(std::vector<Point3> inputs, std::vector<int> labels,
                                                  const KernelExpr& kernel, std::uint64_t seed,
                                                  const OptimizerOptions& options) {
  if (inputs.size() < 2) throw ValidationError("fit_classifier needs at least 2 training points");
  if (inputs.size() != labels.size()) throw ValidationError("fit_classifier: inputs/labels size mismatch");
  const Eigen::VectorXd y = label_vector(labels);

  const Objective objective = [&](const Eigen::VectorXd& log_theta) -> std::optional<ObjectiveValue> {
    try {
      const auto theta = Hyperparams::from_log({log_theta.data(), log_theta.data() + log_theta.size()});
      std::vector<Eigen::MatrixXd> dk;
      const Eigen::MatrixXd k = jittered_gram(kernel, theta, inputs, &dk);
      const LaplaceMode mode = find_mode(k, y);
      if (!mode.converged) return std::nullopt;
      return ObjectiveValue{laplace_nlml(mode), laplace_nlml_gradient(mode, k, dk)};
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
  GPClassifier model = GPClassifier::condition(kernel, std::move(theta), std::move(inputs), std::move(labels));
  FitReport report{model.nlml(), result.total_iterations, result.restarts_used, result.best.converged,
                   model.degenerate_labels()};
  return {std::move(model), report};
}

}  // namespace bartr
