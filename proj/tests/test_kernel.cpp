#include <algorithm>
#include <cmath>

#include "bartr/error.hpp"
#include "bartr/kernel.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bartr;
using bartr::testing::naive_gram;
using bartr::testing::random_points;
using bartr::testing::random_theta;
using bartr::testing::relative_error;

TEST_CASE("leaf evaluation") {
  const Point3 a{10, 0, 0}, b{0, 10, 0};
  CHECK(eval(KernelExpr::rbf(), Hyperparams::from_values({3.7}), a, a) == 1.0);
  CHECK(eval(KernelExpr::linear(), Hyperparams::from_values({1e-12}), a, b) == doctest::Approx(0.0));
  // d = 10, l = 10: exp(-100 / 200)
  CHECK(eval(KernelExpr::rbf(), Hyperparams::from_values({10.0}), Point3{0, 10, 0}, Point3{0, 20, 0}) ==
        doctest::Approx(0.6065306597126334).epsilon(1e-12));
  CHECK(eval(KernelExpr::linear(), Hyperparams::from_values({2.0}), a, a) == doctest::Approx(104.0));
  CHECK(eval(KernelExpr::white_noise(), Hyperparams::from_values({0.5}), a, a, true) == doctest::Approx(0.25));
  CHECK(eval(KernelExpr::white_noise(), Hyperparams::from_values({0.5}), a, a, false) == 0.0);
}

TEST_CASE("arity mismatch is a structural error") {
  CHECK_THROWS_AS(eval(KernelExpr::rbf(), Hyperparams::from_values({1.0, 2.0}), {}, {}), ValidationError);
  CHECK_THROWS_AS(gram(parse_kernel("lin+N2"), Hyperparams::from_values({1.0}), random_points(3, 1)),
                  ValidationError);
}

TEST_CASE("gram diagonal and noise") {
  const auto xs = random_points(3, 11);
  const auto k = gram(KernelExpr::rbf(), Hyperparams::from_values({5.0}), xs);
  for (int i = 0; i < 3; ++i) CHECK(k(i, i) == 1.0);

  const auto noisy = KernelExpr::sum({KernelExpr::rbf(), KernelExpr::white_noise()});
  const auto kn = gram(noisy, Hyperparams::from_values({5.0, 0.1}), xs);
  for (int i = 0; i < 3; ++i) CHECK(kn(i, i) == doctest::Approx(1.01).epsilon(1e-12));
  CHECK((kn - kn.transpose()).norm() == 0.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(kn(i, j) == k(i, j));
    }
  }
}

TEST_CASE("matrix path agrees with pointwise eval for every candidate") {
  Rng rng(5);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto xs = random_points(8, rng.next_u64());
    const auto theta = random_theta(c.expr, rng);
    CHECK_MESSAGE(relative_error(gram(c.expr, theta, xs), naive_gram(c.expr, theta, xs)) < 1e-12, c.name);
  }
}

TEST_CASE("every candidate gram is positive semidefinite") {
  Rng rng(2024);
  for (const auto& c : enumerate_candidate_kernels()) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto n = 2 + rng.below(19);
      const auto xs = random_points(n, rng.next_u64());
      const auto theta = random_theta(c.expr, rng);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram(c.expr, theta, xs));
      CHECK_MESSAGE(eig.eigenvalues().minCoeff() >= -1e-8, c.name);
    }
  }
}

TEST_CASE("non-noise kernels are symmetric in their arguments") {
  Rng rng(3);
  for (const auto& c : enumerate_candidate_kernels()) {
    const auto theta = random_theta(c.signal, rng);
    const auto xs = random_points(2, rng.next_u64());
    CHECK(eval(c.signal, theta, xs[0], xs[1]) == doctest::Approx(eval(c.signal, theta, xs[1], xs[0])));
  }
}

TEST_CASE("linear kernel gradient is the constant 2 sigma0^2") {
  const auto xs = random_points(5, 9);
  const auto g = gram_gradient(KernelExpr::linear(), Hyperparams::from_values({1.5}), xs);
  REQUIRE(g.size() == 1);
  CHECK((g[0].array() - 2.0 * 1.5 * 1.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("white noise gradient is diagonal") {
  const auto xs = random_points(6, 10);
  const auto k = KernelExpr::sum({KernelExpr::rbf(), KernelExpr::white_noise()});
  const auto g = gram_gradient(k, Hyperparams::from_values({4.0, 0.3}), xs);
  Eigen::MatrixXd off = g[1];
  off.diagonal().setZero();
  CHECK(off.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g[1](0, 0) == doctest::Approx(2.0 * 0.09));
}

TEST_CASE("analytic gradients match central finite differences for all candidates") {
  Rng rng(77);
  const double h = 1e-5;
  for (const auto& c : enumerate_candidate_kernels()) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto xs = random_points(2 + rng.below(10), rng.next_u64());
      const auto theta = random_theta(c.expr, rng);
      const auto grads = gram_gradient(c.expr, theta, xs);
      REQUIRE(grads.size() == theta.size());
      // Central differences lose ~1e-10 of |K| to cancellation, so a leaf whose
      // derivative is that small is compared on the Gram matrix's scale.
      const double floor = 1e-7 * gram(c.expr, theta, xs).norm();
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const Eigen::MatrixXd fd = bartr::testing::finite_difference_gram(c.expr, theta, xs, j, h);
        const double err = (grads[j] - fd).norm() / std::max(fd.norm(), floor);
        CHECK_MESSAGE(err < 1e-4, c.name << " leaf " << j);
      }
    }
  }
}

TEST_CASE("candidate grid") {
  const auto cands = enumerate_candidate_kernels();
  REQUIRE(cands.size() == 15);
  const char* expected[] = {"lin+N1",     "lin+N2",     "lin+N3",     "rbf+N1",
                            "rbf+N2",     "rbf+N3",     "lin+rbf+N1", "lin+rbf+N2",
                            "lin+rbf+N3", "lin*rbf+N1", "lin*rbf+N2", "lin*rbf+N3",
                            "lin+rbf+lin*rbf+N1", "lin+rbf+lin*rbf+N2", "lin+rbf+lin*rbf+N3"};
  for (std::size_t i = 0; i < cands.size(); ++i) {
    CHECK(cands[i].name == expected[i]);
    CHECK(parse_kernel(cands[i].name) == cands[i].expr);
    CHECK(kernel_name(cands[i].expr) == cands[i].name);
  }
  CHECK(cands[0].expr.to_string() == "lin+wn");
  CHECK(cands[1].expr.to_string() == "lin+wn+lin*wn");
  CHECK(cands[5].expr.to_string() == "rbf+wn+rbf*wn");
  CHECK(cands[0].expr.leaf_count() == 2);
  CHECK(cands[14].expr.leaf_count() == 7);
  CHECK(cands[9].signal.has_leaf(KernelKind::Linear));
  CHECK(cands[9].signal.has_leaf(KernelKind::Rbf));
  CHECK_FALSE(cands[3].signal.has_leaf(KernelKind::Linear));
}

TEST_CASE("kernel parser") {
  const auto k = parse_kernel("rbf + lin*wn");
  CHECK(k.to_string() == "rbf+lin*wn");
  CHECK(parse_kernel("(lin+rbf)*rbf").to_string() == "(lin+rbf)*rbf");
  CHECK(kernel_name(parse_kernel("lin+rbf+wn")) == "lin+rbf+wn");
  CHECK_THROWS_AS(parse_kernel("wn*wn"), ValidationError);
  CHECK_THROWS_AS(parse_kernel("lin+"), ValidationError);
  CHECK_THROWS_AS(parse_kernel("matern"), ValidationError);
  CHECK_THROWS_AS(parse_kernel("(lin"), ValidationError);
}

TEST_CASE("cross covariance and prior variance exclude noise") {
  const auto xs = random_points(4, 21);
  const auto k = parse_kernel("rbf+N2");
  const auto theta = Hyperparams::from_values({6.0, 0.5, 1.0, 0.2});
  const auto cross = cross_covariance(k, theta, xs, xs);
  const auto pv = prior_variance(k, theta, xs);
  for (int i = 0; i < 4; ++i) {
    CHECK(cross(i, i) == doctest::Approx(1.0));
    CHECK(pv(i) == doctest::Approx(1.0));
  }
}
