#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bartr/workspace.hpp"

namespace bartr {

enum class KernelKind { Linear, Rbf, WhiteNoise, Sum, Product };

/// Composable covariance expression. Leaves carry one positive hyperparameter
/// each (sigma_0, length-scale, or noise sigma); hyperparameters are bound to
/// leaves in depth-first order.
class KernelExpr {
 public:
  static KernelExpr linear();
  static KernelExpr rbf();
  static KernelExpr white_noise();
  static KernelExpr sum(std::vector<KernelExpr> children);
  static KernelExpr product(std::vector<KernelExpr> children);

  KernelKind kind() const noexcept { return kind_; }
  const std::vector<KernelExpr>& children() const noexcept { return children_; }
  bool is_leaf() const noexcept { return children_.empty(); }
  std::size_t leaf_count() const;
  /// True if any leaf in the tree has the given kind.
  bool has_leaf(KernelKind leaf) const;
  /// Structural form with leaves "lin", "rbf", "wn", e.g. "lin+rbf*wn".
  std::string to_string() const;

  friend bool operator==(const KernelExpr&, const KernelExpr&) = default;

 private:
  KernelExpr(KernelKind kind, std::vector<KernelExpr> children);
  KernelKind kind_;
  std::vector<KernelExpr> children_;
};

/// Positive hyperparameters stored as logarithms, one per kernel leaf.
class Hyperparams {
 public:
  Hyperparams() = default;
  static Hyperparams from_log(std::vector<double> log_values);
  static Hyperparams from_values(const std::vector<double>& values);

  std::size_t size() const noexcept { return log_values_.size(); }
  double value(std::size_t i) const;
  double log_value(std::size_t i) const { return log_values_.at(i); }
  const std::vector<double>& log_values() const noexcept { return log_values_; }
  std::vector<double> values() const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;

 private:
  std::vector<double> log_values_;
};

/// Throws ValidationError when theta's arity does not match the kernel's leaves.
void check_arity(const KernelExpr& k, const Hyperparams& theta);

/// Pointwise covariance. `same_index` marks x and x' as the same training
/// input, which is the only case where white-noise leaves contribute.
double eval(const KernelExpr& k, const Hyperparams& theta, const Point3& x, const Point3& xp,
            bool same_index = false);

/// Training covariance, noise on the diagonal, no jitter.
Eigen::MatrixXd gram(const KernelExpr& k, const Hyperparams& theta, std::span<const Point3> xs);

/// Derivatives of gram() with respect to each log-hyperparameter.
std::vector<Eigen::MatrixXd> gram_gradient(const KernelExpr& k, const Hyperparams& theta,
                                           std::span<const Point3> xs);

/// gram() and gram_gradient() from one traversal.
Eigen::MatrixXd gram_with_gradient(const KernelExpr& k, const Hyperparams& theta,
                                   std::span<const Point3> xs,
                                   std::vector<Eigen::MatrixXd>& gradient);

/// Noise-free covariance between two point sets (rows: a, cols: b).
Eigen::MatrixXd cross_covariance(const KernelExpr& k, const Hyperparams& theta,
                                 std::span<const Point3> a, std::span<const Point3> b);

/// Noise-free prior variance k(x, x) at each point.
Eigen::VectorXd prior_variance(const KernelExpr& k, const Hyperparams& theta,
                               std::span<const Point3> xs);

/// Data-scaled starting point in log space: RBF length-scales at the median
/// pairwise distance of `xs`, every other leaf at 1.
std::vector<double> scaled_log_theta(const KernelExpr& k, std::span<const Point3> xs);

/// Diagonal jitter added before every factorization.
inline constexpr double kGramJitter = 1e-8;

/// One row of the fixed candidate grid.
struct CandidateKernel {
  std::string name;  // e.g. "lin+rbf+N2"
  KernelExpr signal;
  KernelExpr expr;   // Sum(signal, noise)
};

/// The 15 signal x noise candidates in table row order (signal-major).
std::vector<CandidateKernel> enumerate_candidate_kernels();

/// Parses candidate names ("lin*rbf+N3") or structural forms ("lin+rbf*wn",
/// parentheses allowed). N1/N2/N3 expand to the noise models.
KernelExpr parse_kernel(std::string_view text);

/// Candidate name when the expression is one of the 15 candidates, else to_string().
std::string kernel_name(const KernelExpr& k);

}  // namespace bartr
