#include "bartr/kernel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "bartr/error.hpp"

namespace bartr {

KernelExpr::KernelExpr(KernelKind kind, std::vector<KernelExpr> children)
    : kind_(kind), children_(std::move(children)) {}

KernelExpr KernelExpr::linear() { return KernelExpr(KernelKind::Linear, {}); }
KernelExpr KernelExpr::rbf() { return KernelExpr(KernelKind::Rbf, {}); }
KernelExpr KernelExpr::white_noise() { return KernelExpr(KernelKind::WhiteNoise, {}); }

KernelExpr KernelExpr::sum(std::vector<KernelExpr> children) {
  if (children.empty()) throw ValidationError("kernel sum needs at least one term");
  if (children.size() == 1) return std::move(children.front());
  return KernelExpr(KernelKind::Sum, std::move(children));
}

KernelExpr KernelExpr::product(std::vector<KernelExpr> children) {
  if (children.empty()) throw ValidationError("kernel product needs at least one factor");
  if (children.size() == 1) return std::move(children.front());
  int noisy = 0;
  for (const auto& c : children) noisy += c.has_leaf(KernelKind::WhiteNoise) ? 1 : 0;
  if (noisy > 1) throw ValidationError("kernel product may contain white noise in at most one factor");
  return KernelExpr(KernelKind::Product, std::move(children));
}

std::size_t KernelExpr::leaf_count() const {
  if (is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& c : children_) n += c.leaf_count();
  return n;
}

bool KernelExpr::has_leaf(KernelKind leaf) const {
  if (is_leaf()) return kind_ == leaf;
  for (const auto& c : children_) {
    if (c.has_leaf(leaf)) return true;
  }
  return false;
}

namespace {

void collect_leaves(const KernelExpr& k, std::vector<KernelKind>& out) {
  if (k.is_leaf()) {
    out.push_back(k.kind());
    return;
  }
  for (const auto& c : k.children()) collect_leaves(c, out);
}

}  // namespace

std::vector<double> scaled_log_theta(const KernelExpr& k, std::span<const Point3> xs) {
  std::vector<double> d;
  d.reserve(xs.size() * (xs.size() - (xs.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) d.push_back(distance(xs[i], xs[j]));
  double ell = 1.0;
  if (!d.empty()) {
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (*mid > 0.0) ell = *mid;
  }
  std::vector<KernelKind> leaves;
  collect_leaves(k, leaves);
  std::vector<double> out;
  out.reserve(leaves.size());
  for (auto kind : leaves) out.push_back(kind == KernelKind::Rbf ? std::log(ell) : 0.0);
  return out;
}

std::string KernelExpr::to_string() const {
  switch (kind_) {
    case KernelKind::Linear:
      return "lin";
    case KernelKind::Rbf:
      return "rbf";
    case KernelKind::WhiteNoise:
      return "wn";
    case KernelKind::Sum: {
      std::string out;
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) out += '+';
        out += children_[i].to_string();
      }
      return out;
    }
    case KernelKind::Product: {
      std::string out;
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) out += '*';
        const bool paren = children_[i].kind() == KernelKind::Sum;
        out += paren ? "(" + children_[i].to_string() + ")" : children_[i].to_string();
      }
      return out;
    }
  }
  return {};
}

Hyperparams Hyperparams::from_log(std::vector<double> log_values) {
  for (double v : log_values) {
    if (!std::isfinite(v)) throw ValidationError("hyperparameters must be finite");
  }
  Hyperparams h;
  h.log_values_ = std::move(log_values);
  return h;
}

Hyperparams Hyperparams::from_values(const std::vector<double>& values) {
  std::vector<double> logs;
  logs.reserve(values.size());
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("hyperparameters must be finite and > 0");
    logs.push_back(std::log(v));
  }
  return from_log(std::move(logs));
}

double Hyperparams::value(std::size_t i) const { return std::exp(log_values_.at(i)); }

std::vector<double> Hyperparams::values() const {
  std::vector<double> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(value(i));
  return out;
}

void check_arity(const KernelExpr& k, const Hyperparams& theta) {
  if (k.leaf_count() != theta.size()) {
    throw ValidationError("kernel '" + k.to_string() + "' has " + std::to_string(k.leaf_count()) +
                          " hyperparameters, got " + std::to_string(theta.size()));
  }
}

namespace {

double eval_node(const KernelExpr& k, const Hyperparams& theta, std::size_t& leaf, const Point3& x,
                 const Point3& xp, bool same_index) {
  switch (k.kind()) {
    case KernelKind::Linear: {
      const double s = theta.value(leaf++);
      return s * s + dot(x, xp);
    }
    case KernelKind::Rbf: {
      const double l = theta.value(leaf++);
      const double d = distance(x, xp);
      return std::exp(-d * d / (2.0 * l * l));
    }
    case KernelKind::WhiteNoise: {
      const double s = theta.value(leaf++);
      return same_index ? s * s : 0.0;
    }
    case KernelKind::Sum: {
      double acc = 0.0;
      for (const auto& c : k.children()) acc += eval_node(c, theta, leaf, x, xp, same_index);
      return acc;
    }
    case KernelKind::Product: {
      double acc = 1.0;
      for (const auto& c : k.children()) acc *= eval_node(c, theta, leaf, x, xp, same_index);
      return acc;
    }
  }
  return 0.0;
}

// Pairwise geometry shared by every leaf of one traversal.
struct PairGeometry {
  Eigen::MatrixXd dots;
  Eigen::MatrixXd sq_dist;
  bool same_set;
};

PairGeometry make_geometry(std::span<const Point3> a, std::span<const Point3> b, bool same_set) {
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  PairGeometry g{Eigen::MatrixXd(na, nb), Eigen::MatrixXd(na, nb), same_set};
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      const auto& p = a[static_cast<std::size_t>(i)];
      const auto& q = b[static_cast<std::size_t>(j)];
      g.dots(i, j) = dot(p, q);
      const double dx = p.x - q.x;
      const double dy = p.y - q.y;
      const double dz = p.z - q.z;
      g.sq_dist(i, j) = dx * dx + dy * dy + dz * dz;
    }
  }
  return g;
}

Eigen::MatrixXd eval_matrix(const KernelExpr& k, const Hyperparams& theta, std::size_t& leaf,
                            const PairGeometry& geo, std::vector<Eigen::MatrixXd>* grads) {
  const Eigen::Index rows = geo.dots.rows();
  const Eigen::Index cols = geo.dots.cols();
  switch (k.kind()) {
    case KernelKind::Linear: {
      const double s2 = std::exp(2.0 * theta.log_value(leaf++));
      if (grads) grads->push_back(Eigen::MatrixXd::Constant(rows, cols, 2.0 * s2));
      return geo.dots.array() + s2;
    }
    case KernelKind::Rbf: {
      const double l2 = std::exp(2.0 * theta.log_value(leaf++));
      Eigen::MatrixXd value = (-geo.sq_dist.array() / (2.0 * l2)).exp();
      if (grads) grads->push_back(value.cwiseProduct(geo.sq_dist) / l2);
      return value;
    }
    case KernelKind::WhiteNoise: {
      const double s2 = std::exp(2.0 * theta.log_value(leaf++));
      Eigen::MatrixXd value = Eigen::MatrixXd::Zero(rows, cols);
      if (geo.same_set) value.diagonal().setConstant(s2);
      if (grads) grads->push_back(2.0 * value);
      return value;
    }
    case KernelKind::Sum: {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
      for (const auto& c : k.children()) acc += eval_matrix(c, theta, leaf, geo, grads);
      return acc;
    }
    case KernelKind::Product: {
      const auto& children = k.children();
      std::vector<Eigen::MatrixXd> values;
      std::vector<std::vector<Eigen::MatrixXd>> child_grads(children.size());
      values.reserve(children.size());
      for (std::size_t c = 0; c < children.size(); ++c) {
        values.push_back(eval_matrix(children[c], theta, leaf, geo, grads ? &child_grads[c] : nullptr));
      }
      Eigen::MatrixXd acc = values.front();
      for (std::size_t c = 1; c < values.size(); ++c) acc = acc.cwiseProduct(values[c]);
      if (grads) {
        for (std::size_t c = 0; c < children.size(); ++c) {
          Eigen::MatrixXd others = Eigen::MatrixXd::Ones(rows, cols);
          for (std::size_t d = 0; d < children.size(); ++d) {
            if (d != c) others = others.cwiseProduct(values[d]);
          }
          for (auto& g : child_grads[c]) grads->push_back(g.cwiseProduct(others));
        }
      }
      return acc;
    }
  }
  return {};
}

void check_finite(const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) {
        throw NumericError("non-finite covariance entry at pair (" + std::to_string(i) + ", " +
                           std::to_string(j) + ")");
      }
    }
  }
}

}  // namespace

double eval(const KernelExpr& k, const Hyperparams& theta, const Point3& x, const Point3& xp,
            bool same_index) {
  check_arity(k, theta);
  std::size_t leaf = 0;
  return eval_node(k, theta, leaf, x, xp, same_index);
}

Eigen::MatrixXd gram_with_gradient(const KernelExpr& k, const Hyperparams& theta,
                                   std::span<const Point3> xs,
                                   std::vector<Eigen::MatrixXd>& gradient) {
  check_arity(k, theta);
  if (xs.empty()) throw ValidationError("gram: input set is empty");
  const auto geo = make_geometry(xs, xs, true);
  std::size_t leaf = 0;
  gradient.clear();
  Eigen::MatrixXd out = eval_matrix(k, theta, leaf, geo, &gradient);
  check_finite(out);
  return out;
}

Eigen::MatrixXd gram(const KernelExpr& k, const Hyperparams& theta, std::span<const Point3> xs) {
  check_arity(k, theta);
  if (xs.empty()) throw ValidationError("gram: input set is empty");
  const auto geo = make_geometry(xs, xs, true);
  std::size_t leaf = 0;
  Eigen::MatrixXd out = eval_matrix(k, theta, leaf, geo, nullptr);
  check_finite(out);
  return out;
}

std::vector<Eigen::MatrixXd> gram_gradient(const KernelExpr& k, const Hyperparams& theta,
                                           std::span<const Point3> xs) {
  std::vector<Eigen::MatrixXd> grads;
  gram_with_gradient(k, theta, xs, grads);
  return grads;
}

Eigen::MatrixXd cross_covariance(const KernelExpr& k, const Hyperparams& theta,
                                 std::span<const Point3> a, std::span<const Point3> b) {
  check_arity(k, theta);
  const auto geo = make_geometry(a, b, false);
  std::size_t leaf = 0;
  Eigen::MatrixXd out = eval_matrix(k, theta, leaf, geo, nullptr);
  check_finite(out);
  return out;
}

Eigen::VectorXd prior_variance(const KernelExpr& k, const Hyperparams& theta,
                               std::span<const Point3> xs) {
  check_arity(k, theta);
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t leaf = 0;
    out(static_cast<Eigen::Index>(i)) = eval_node(k, theta, leaf, xs[i], xs[i], false);
  }
  return out;
}

namespace {

KernelExpr noise_model(int which) {
  const auto wn = KernelExpr::white_noise;
  switch (which) {
    case 1:
      return wn();
    case 2:
      return KernelExpr::sum({wn(), KernelExpr::product({KernelExpr::linear(), wn()})});
    case 3:
      return KernelExpr::sum({wn(), KernelExpr::product({KernelExpr::rbf(), wn()})});
    default:
      throw ValidationError("unknown noise model N" + std::to_string(which));
  }
}

struct SignalDef {
  const char* name;
  KernelExpr (*make)();
};

const SignalDef kSignals[] = {
    {"lin", [] { return KernelExpr::linear(); }},
    {"rbf", [] { return KernelExpr::rbf(); }},
    {"lin+rbf", [] { return KernelExpr::sum({KernelExpr::linear(), KernelExpr::rbf()}); }},
    {"lin*rbf", [] { return KernelExpr::product({KernelExpr::linear(), KernelExpr::rbf()}); }},
    {"lin+rbf+lin*rbf",
     [] {
       return KernelExpr::sum({KernelExpr::linear(), KernelExpr::rbf(),
                               KernelExpr::product({KernelExpr::linear(), KernelExpr::rbf()})});
     }},
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  KernelExpr parse() {
    KernelExpr out = expression();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character");
    return out;
  }

 private:
  KernelExpr expression() {
    std::vector<KernelExpr> terms{term()};
    while (consume('+')) terms.push_back(term());
    return KernelExpr::sum(std::move(terms));
  }

  KernelExpr term() {
    std::vector<KernelExpr> factors{atom()};
    while (consume('*')) factors.push_back(atom());
    return KernelExpr::product(std::move(factors));
  }

  KernelExpr atom() {
    if (consume('(')) {
      KernelExpr inner = expression();
      if (!consume(')')) fail("expected ')'");
      return inner;
    }
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string_view word = text_.substr(start, pos_ - start);
    if (word == "lin") return KernelExpr::linear();
    if (word == "rbf") return KernelExpr::rbf();
    if (word == "wn") return KernelExpr::white_noise();
    if (word == "N1") return noise_model(1);
    if (word == "N2") return noise_model(2);
    if (word == "N3") return noise_model(3);
    pos_ = start;
    fail("unknown kernel term");
  }

  bool consume(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("kernel expression '" + std::string(text_) + "': " + what + " at position " +
                          std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<CandidateKernel> enumerate_candidate_kernels() {
  std::vector<CandidateKernel> out;
  out.reserve(15);
  for (const auto& signal : kSignals) {
    for (int noise = 1; noise <= 3; ++noise) {
      KernelExpr s = signal.make();
      out.push_back({std::string(signal.name) + "+N" + std::to_string(noise), s,
                     KernelExpr::sum({s, noise_model(noise)})});
    }
  }
  return out;
}

KernelExpr parse_kernel(std::string_view text) {
  for (auto& c : enumerate_candidate_kernels()) {
    if (c.name == text) return std::move(c.expr);
  }
  return Parser(text).parse();
}

std::string kernel_name(const KernelExpr& k) {
  for (const auto& c : enumerate_candidate_kernels()) {
    if (c.expr == k) return c.name;
  }
  return k.to_string();
}

}  // namespace bartr
