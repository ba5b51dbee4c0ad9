#include <string>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"
#include "bartr/log.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bartr;
using bartr::testing::brute_force_probability;
using bartr::testing::dense_regression;
using bartr::testing::naive_gram;
using bartr::testing::random_points;

namespace {

std::vector<double> smooth_times(const std::vector<Point3>& xs) {
  std::vector<double> y;
  for (const auto& p : xs) y.push_back(0.4 + 0.03 * norm(p));
  return y;
}

const KernelExpr kRbfNoise = KernelExpr::sum({KernelExpr::rbf(), KernelExpr::white_noise()});

}  // namespace

TEST_CASE("constant targets predict the constant everywhere") {
  const auto xs = random_points(12, 1);
  const std::vector<double> y(xs.size(), 1.25);
  auto [model, report] = fit_regressor(xs, y, parse_kernel("lin+rbf+N1"), 3);
  const auto pred = model.predict(random_points(20, 2));
  CHECK((pred.mean.array() - 1.25).abs().maxCoeff() < 1e-6);
  CHECK(report.restarts_used >= 1);
}

TEST_CASE("two-point posterior matches the hand-solved 2x2 system") {
  const std::vector<Point3> xs{{-10, 10, 5}, {12, 14, 20}};
  const std::vector<double> y{0.8, 1.4};
  const double ell = 9.0, sn = 0.3;
  const auto model = GPRegressor::condition(kRbfNoise, Hyperparams::from_values({ell, sn}), xs, y);
  const Point3 q{2, 18, 11};

  auto rbf = [&](const Point3& a, const Point3& b) {
    const double d = distance(a, b);
    return std::exp(-d * d / (2 * ell * ell));
  };
  const double m = 1.1;
  const double diag = 1.0 + sn * sn + 1e-8;
  const double off = rbf(xs[0], xs[1]);
  const double det = diag * diag - off * off;
  const double c0 = y[0] - m, c1 = y[1] - m;
  const double a0 = (diag * c0 - off * c1) / det;
  const double a1 = (-off * c0 + diag * c1) / det;
  const double k0 = rbf(q, xs[0]), k1 = rbf(q, xs[1]);
  const double mean = m + k0 * a0 + k1 * a1;
  const double var = 1.0 - (k0 * (diag * k0 - off * k1) + k1 * (-off * k0 + diag * k1)) / det;

  const auto pred = model.predict(std::vector<Point3>{q});
  CHECK(std::abs(pred.mean(0) - mean) < 1e-8);
  CHECK(std::abs(pred.variance(0) - var) < 1e-8);
}

TEST_CASE("fitted regressor generalizes on a noisy distance-time generator") {
  Rng rng(99);
  auto make = [&](std::size_t n, std::uint64_t seed) {
    auto xs = random_points(n, seed);
    std::vector<Point3> kept;
    std::vector<double> y;
    for (const auto& p : xs) {
      const double t = 0.5 + 0.05 * norm(p) + 0.1 * rng.normal();
      if (t > 0.0 && t <= 3.1) {
        kept.push_back(p);
        y.push_back(t);
      }
    }
    return std::pair{kept, y};
  };
  auto [xtr, ytr] = make(100, 10);
  auto [xte, yte] = make(200, 11);
  auto [model, report] = fit_regressor(xtr, ytr, parse_kernel("lin+rbf+N1"), 5);
  const auto metrics = regression_metrics(model, xte, yte);
  CHECK(metrics.mse < 2.0 * 0.01);
  CHECK(std::isfinite(report.nlml));
}

TEST_CASE("predictions match a dense naive-solve oracle") {
  Rng rng(4);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto xs = random_points(10, rng.next_u64());
    const auto qs = random_points(6, rng.next_u64());
    std::vector<double> y;
    for (std::size_t i = 0; i < xs.size(); ++i) y.push_back(rng.uniform(0.5, 2.5));
    std::vector<double> logs(c.expr.leaf_count());
    for (auto& v : logs) v = rng.uniform(-1.0, 1.5);
    const auto theta = Hyperparams::from_log(logs);
    const auto model = GPRegressor::condition(c.expr, theta, xs, y);
    const auto pred = model.predict(qs);
    const auto oracle = dense_regression(c.expr, theta, xs, y, qs);
    CHECK_MESSAGE((pred.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-8, c.name);
    CHECK_MESSAGE((pred.variance - oracle.var.cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-8, c.name);
  }
}

TEST_CASE("near-noiseless regressor interpolates training targets") {
  const auto xs = random_points(15, 8);
  const auto y = smooth_times(xs);
  const auto model = GPRegressor::condition(kRbfNoise, Hyperparams::from_values({12.0, 1e-4}), xs, y);
  const auto pred = model.predict(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(pred.mean(static_cast<Eigen::Index>(i)) - y[i]) < 1e-3);
  CHECK(regression_metrics(model, xs, y).mse < 1e-6);
}

TEST_CASE("empty training set predicts the prior") {
  const auto model = GPRegressor::condition(kRbfNoise, Hyperparams::from_values({5.0, 0.1}), {}, {}, 1.3);
  const auto pred = model.predict(random_points(3, 1));
  for (int i = 0; i < 3; ++i) {
    CHECK(pred.mean(i) == 1.3);
    CHECK(pred.variance(i) == doctest::Approx(1.0));
  }
}

TEST_CASE("regressor validation and state errors") {
  GPRegressor unfitted;
  CHECK_THROWS_AS(unfitted.predict(random_points(1, 1)), StateError);
  CHECK_THROWS_AS(unfitted.nlml(), StateError);
  const auto xs = random_points(3, 1);
  CHECK_THROWS_AS(fit_regressor(xs, {1.0, 3.2, 1.0}, kRbfNoise, 1), ValidationError);
  CHECK_THROWS_AS(fit_regressor(xs, {1.0, 0.0, 1.0}, kRbfNoise, 1), ValidationError);
  CHECK_THROWS_AS(fit_regressor({xs[0]}, {1.0}, kRbfNoise, 1), ValidationError);
}

TEST_CASE("single-point NLML closed form") {
  // K(x,x) = 1 (+ jitter) and a centered target of 0: 1/2 log 2 pi.
  const auto model = GPRegressor::condition(KernelExpr::rbf(), Hyperparams::from_values({3.0}), random_points(1, 1), {1.0});
  CHECK(std::abs(nlml_regression(model) - 0.91893853320467274) < 1e-7);
}

TEST_CASE("duplicating a training point never raises per-point NLML by more than log 2") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto xs = random_points(2 + rng.below(15), rng.next_u64());
    std::vector<double> y;
    for (std::size_t i = 0; i < xs.size(); ++i) y.push_back(rng.uniform(0.3, 2.8));
    const auto theta = Hyperparams::from_log({rng.uniform(0.0, 3.0), rng.uniform(-3.0, 0.0)});
    const auto base = GPRegressor::condition(kRbfNoise, theta, xs, y, 1.5);
    auto xs2 = xs;
    auto y2 = y;
    const auto pick = rng.below(xs.size());
    xs2.push_back(xs[pick]);
    y2.push_back(y[pick]);
    const auto dup = GPRegressor::condition(kRbfNoise, theta, xs2, y2, 1.5);
    const double before = base.nlml() / static_cast<double>(xs.size());
    const double after = dup.nlml() / static_cast<double>(xs2.size());
    CHECK(after - before <= std::log(2.0));
  }
}

TEST_CASE("regression NLML gradient matches finite differences") {
  Rng rng(12);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto xs = random_points(12, rng.next_u64());
    const auto y = smooth_times(xs);
    std::vector<double> logs(c.expr.leaf_count());
    for (auto& v : logs) v = rng.uniform(-1.5, 1.5);
    const auto model = GPRegressor::condition(c.expr, Hyperparams::from_log(logs), xs, y);
    const Eigen::VectorXd grad = model.nlml_gradient();
    const double h = 1e-5;
    Eigen::VectorXd fd(grad.size());
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
      auto up = logs, down = logs;
      up[static_cast<std::size_t>(j)] += h;
      down[static_cast<std::size_t>(j)] -= h;
      fd(j) = (GPRegressor::condition(c.expr, Hyperparams::from_log(up), xs, y).nlml() -
               GPRegressor::condition(c.expr, Hyperparams::from_log(down), xs, y).nlml()) /
              (2 * h);
    }
    CHECK_MESSAGE((grad - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()), c.name);
  }
}

TEST_CASE("posterior variance never exceeds prior variance") {
  Rng rng(40);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto xs = random_points(15, rng.next_u64());
    const auto qs = random_points(30, rng.next_u64());
    std::vector<double> logs(c.expr.leaf_count());
    for (auto& v : logs) v = rng.uniform(-2, 2);
    const auto theta = Hyperparams::from_log(logs);
    const auto model = GPRegressor::condition(c.expr, theta, xs, smooth_times(xs));
    const auto pred = model.predict(qs);
    const auto prior = prior_variance(c.expr, theta, qs);
    CHECK(((pred.variance - prior).array() <= 1e-8).all());
    CHECK((pred.variance.array() >= 0.0).all());
  }
}

TEST_CASE("regression fits are reproducible and permutation invariant") {
  const auto xs = random_points(30, 17);
  const auto y = smooth_times(xs);
  const auto k = parse_kernel("rbf+N1");
  auto [a, ra] = fit_regressor(xs, y, k, 42);
  auto [b, rb] = fit_regressor(xs, y, k, 42);
  CHECK(a.hyperparams() == b.hyperparams());
  CHECK(ra.nlml == rb.nlml);

  auto xs_rev = xs;
  auto y_rev = y;
  std::reverse(xs_rev.begin(), xs_rev.end());
  std::reverse(y_rev.begin(), y_rev.end());
  const auto qs = random_points(10, 18);
  const auto fwd = GPRegressor::condition(k, a.hyperparams(), xs, y).predict(qs);
  const auto rev = GPRegressor::condition(k, a.hyperparams(), xs_rev, y_rev).predict(qs);
  CHECK((fwd.mean - rev.mean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mirror-symmetric classifier is undecided on the midline") {
  const std::vector<Point3> xs{{-10, 10, 20}, {10, 10, 20}};
  const std::vector<int> labels{1, -1};
  const std::vector<Point3> mid{{0, 10, 20}};
  for (const char* name : {"rbf+N1", "lin+N1", "lin+rbf+N2"}) {
    auto [model, report] = fit_classifier(xs, labels, parse_kernel(name), 7);
    CHECK_MESSAGE(std::abs(model.predict(mid)(0) - 0.5) < 1e-6, name);
  }
}

TEST_CASE("single-class training is flagged but usable") {
  const auto xs = random_points(10, 3);
  const std::vector<int> labels(xs.size(), 1);
  auto [model, report] = fit_classifier(xs, labels, parse_kernel("rbf+N1"), 3);
  CHECK(report.degenerate_labels);
  CHECK(model.degenerate_labels());
  CHECK((model.predict(xs).array() > 0.5).all());
}

TEST_CASE("Laplace predictions match brute-force posterior quadrature on 3-point problems") {
  Rng rng(8);
  // Latent variance stays O(1) here; with lin-based kernels it runs into the
  // hundreds and the Laplace approximation is genuinely off by more than 0.05.
  const std::vector<std::pair<std::string, std::vector<double>>> configs{
      {"rbf+N1", {10.0, 0.5}}, {"rbf+N1", {25.0, 0.1}}, {"rbf+N1", {5.0, 1.0}}};
  for (const auto& [name, values] : configs) {
    const auto k = parse_kernel(name);
    const auto theta = Hyperparams::from_values(values);
    for (int trial = 0; trial < 2; ++trial) {
      const auto xs = random_points(3, rng.next_u64());
      std::vector<int> labels{1, rng.bernoulli(0.5) ? 1 : -1, -1};
      const auto model = GPClassifier::condition(k, theta, xs, labels);
      const auto qs = random_points(2, rng.next_u64());
      const auto p = model.predict(qs);
      for (int q = 0; q < 2; ++q) {
        const double exact = brute_force_probability(k, theta, xs, labels, qs[static_cast<std::size_t>(q)]);
        CHECK_MESSAGE(std::abs(p(q) - exact) < 0.05, name << " exact=" << exact << " laplace=" << p(q));
      }
    }
  }
}

TEST_CASE("classifier probabilities are in (0,1) and flip with the labels") {
  const auto xs = random_points(25, 5);
  std::vector<int> labels, flipped;
  for (const auto& p : xs) {
    labels.push_back(p.x > 0 ? 1 : -1);
    flipped.push_back(-labels.back());
  }
  const auto k = parse_kernel("lin+rbf+N1");
  const auto theta = Hyperparams::from_values({1.0, 8.0, 0.5});
  const auto a = GPClassifier::condition(k, theta, xs, labels);
  const auto b = GPClassifier::condition(k, theta, xs, flipped);
  const auto qs = random_points(50, 6);
  const auto pa = a.predict(qs);
  const auto pb = b.predict(qs);
  CHECK((pa.array() > 0.0).all());
  CHECK((pa.array() < 1.0).all());
  CHECK(((pa + pb).array() - 1.0).abs().maxCoeff() < 1e-8);
}

TEST_CASE("Laplace mode is a deterministic stationary point") {
  const auto xs = random_points(30, 9);
  std::vector<int> labels;
  for (const auto& p : xs) labels.push_back(p.z > 20 ? 1 : -1);
  const auto k = parse_kernel("rbf+N2");
  const auto theta = Hyperparams::from_values({10.0, 0.3, 2.0, 0.05});
  const auto a = GPClassifier::condition(k, theta, xs, labels);
  const auto b = GPClassifier::condition(k, theta, xs, labels);
  CHECK(a.mode_gradient_norm() < 1e-6);
  CHECK(a.mode() == b.mode());
  CHECK(a.newton_iterations() <= GPClassifier::kMaxNewtonIterations);
}

TEST_CASE("Laplace NLML gradient matches finite differences") {
  Rng rng(14);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto xs = random_points(15, rng.next_u64());
    std::vector<int> labels;
    for (const auto& p : xs) labels.push_back(p.x + 0.3 * p.z > 5 ? 1 : -1);
    std::vector<double> logs(c.expr.leaf_count());
    for (auto& v : logs) v = rng.uniform(-1.5, 1.0);
    const auto model = GPClassifier::condition(c.expr, Hyperparams::from_log(logs), xs, labels);
    const Eigen::VectorXd grad = model.nlml_gradient();
    const double h = 1e-5;
    Eigen::VectorXd fd(grad.size());
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
      auto up = logs, down = logs;
      up[static_cast<std::size_t>(j)] += h;
      down[static_cast<std::size_t>(j)] -= h;
      fd(j) = (GPClassifier::condition(c.expr, Hyperparams::from_log(up), xs, labels).nlml() -
               GPClassifier::condition(c.expr, Hyperparams::from_log(down), xs, labels).nlml()) /
              (2 * h);
    }
    CHECK_MESSAGE((grad - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()), c.name << " grad=" << grad.transpose()
                                                                              << " fd=" << fd.transpose());
  }
}

TEST_CASE("classification metrics") {
  const auto xs = random_points(40, 15);
  std::vector<int> labels;
  for (const auto& p : xs) labels.push_back(p.x > 0 ? 1 : -1);
  auto [model, report] = fit_classifier(xs, labels, parse_kernel("lin+N1"), 2);
  CHECK(classification_metrics(model, xs, labels).accuracy == 1.0);

  // Pure noise kernel: no information reaches unseen points, p = 0.5.
  const auto blind = GPClassifier::condition(KernelExpr::white_noise(), Hyperparams::from_values({1.0}), xs, labels);
  const auto test = random_points(10, 16);
  std::vector<int> test_labels(10, 1);
  test_labels[3] = -1;
  const auto m = classification_metrics(blind, test, test_labels);
  CHECK(m.nll == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(m.accuracy == doctest::Approx(0.9));  // ties go to class +1
  CHECK_THROWS_AS(classification_metrics(blind, {}, {}), ValidationError);
}

TEST_CASE("model documents round trip with the data digest") {
  const auto xs = random_points(8, 2);
  const auto y = smooth_times(xs);
  const auto model = GPRegressor::condition(parse_kernel("lin+rbf+N2"), Hyperparams::from_values({1, 2, 3, 4, 5}), xs, y);
  const auto doc = to_json(model);
  CHECK(doc["kernel"] == "lin+rbf+N2");
  const auto back = regressor_from_json(doc, xs, y);
  CHECK(back.hyperparams() == model.hyperparams());
  auto y_bad = y;
  y_bad[0] += 0.01;
  CHECK_THROWS_AS(regressor_from_json(doc, xs, y_bad), ValidationError);

  std::vector<int> labels{1, -1, 1, 1, -1, -1, 1, -1};
  const auto clf = GPClassifier::condition(parse_kernel("rbf+N1"), Hyperparams::from_values({7, 0.2}), xs, labels);
  const auto back_clf = classifier_from_json(to_json(clf), xs, labels);
  CHECK(back_clf.mode() == clf.mode());
}
