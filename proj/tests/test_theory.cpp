#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mflab/theory.hpp"

using namespace mflab;

namespace {

const GConstants kIdentity{1, 0, 1, 0, 1, 0, std::nullopt};
const GConstants kZero{0, 0, 0, 0, 0, 0, std::nullopt};
const GConstants kBounded{0, 1, 1, 0.7699, 1, 2, 1.0};

double log_term(double delta, double n) { return std::sqrt(std::log(2 / delta) / (2 * n)); }

}  // namespace

TEST_CASE("A1 and A2") {
  CHECK(const_a1(kZero, 1, 1, 3) == 0.0);
  CHECK(const_a1(kIdentity, 1, 1, 1) == doctest::Approx(8.0));
  CHECK(const_a1(kIdentity, 1, 1, 2) == doctest::Approx(2 * 2 * 3.0));
  CHECK(const_a2(kZero, 1, 1, 3) == 0.0);
  CHECK(const_a2(kIdentity, 1, 1, 1) == doctest::Approx(16 * std::sqrt(2.0)));
}

TEST_CASE("constants are monotone in each G") {
  const double bump = 0.25;
  for (int k = 0; k < 6; ++k) {
    GConstants g = kBounded;
    double* fields[] = {&g.g1, &g.g2, &g.g3, &g.g4, &g.g5, &g.g6};
    const double a1 = const_a1(g, 0.8, 1.2, 3), a2 = const_a2(g, 0.8, 1.2, 3);
    const double b1 = const_b1(g, 0.8, 1.2, 3, 50), b2 = const_b2(g, 0.8, 1.2, 1e-3).value;
    *fields[k] += bump;
    CHECK(const_a1(g, 0.8, 1.2, 3) >= a1);
    CHECK(const_a2(g, 0.8, 1.2, 3) >= a2);
    CHECK(const_b1(g, 0.8, 1.2, 3, 50) >= b1);
    CHECK(const_b2(g, 0.8, 1.2, 1e-3).value >= b2);
  }
}

TEST_CASE("R") {
  const ClampedValue r = const_r(kIdentity, 1, 1, 1, 2, 1.0);
  CHECK(r.value == doctest::Approx(0.008838834764831844).epsilon(1e-14));
  CHECK_FALSE(r.clamped);
  CHECK(const_r(kBounded, 1, 1, 2, 4, 1e-12).value < 1e-10);
  CHECK(const_r(GConstants{0, 0, 1e-9, 0, 0, 0, {}}, 1, 1, 2, 4, 10.0).value ==
        doctest::Approx(std::sqrt(3.0)));
  CHECK_THROWS_AS(const_r(kIdentity, 1, 1, 1, 2, 0.0), AssumptionViolated);
  CHECK(const_r(kBounded, 1, 1, 1, 1, 100.0).clamped);
}

TEST_CASE("alpha threshold") {
  CHECK(alpha_threshold(0, 0, 1, 0, 1, 1, 1, 1) == 0.0);
  CHECK(alpha_threshold(1, 0, 1, 0, 1, 1, 1, 1) == doctest::Approx(8.0));
  CHECK(alpha_threshold(1, 1, 1, 0, 0.5, 1, 1, 1) > alpha_threshold(1, 1, 1, 0, 1, 1, 1, 1));
  CHECK(alpha_threshold(1, 1, 1, 0, 1, 0.5, 1, 1) > alpha_threshold(1, 1, 1, 0, 1, 1, 1, 1));
  CHECK_THROWS_AS(alpha_threshold(1, 1, 1, 0, 0, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("loss bound") {
  CHECK(loss_bound(0, 3, 0, 0.4, 8, 0.7).value == doctest::Approx(1.4));
  const LossBound b = loss_bound(1e6, 10, 0.01, 0.5, 8, 1.0);
  CHECK(b.floor == doctest::Approx(2.048e-3).epsilon(1e-14));
  CHECK(b.value == doctest::Approx(b.floor));
  // exp rate scales with α², floor with α⁻²
  const LossBound x = loss_bound(0.3, 2, 0.01, 0.5, 8, 1.0);
  const LossBound y = loss_bound(0.3 / 4, 4, 0.01, 0.5, 8, 1.0);
  CHECK(y.floor == doctest::Approx(x.floor / 4));
  CHECK(y.value - y.floor == doctest::Approx(x.value - x.floor));
  CHECK_THROWS_AS(loss_bound(-1, 1, 0, 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(loss_bound(1, 1, 0, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("KL bound") {
  CHECK(kl_bound(5, 0, 0.5, 8, 3, 0) == 0.0);
  CHECK(kl_bound(100, 0, 0.5, 8, 16 * std::sqrt(2.0), 1) == doctest::Approx(3.2768));
  CHECK(kl_bound(14, 0.1, 0.5, 8, 3, 1) == doctest::Approx(kl_bound(7, 0.1, 0.5, 8, 3, 1) / 4));
}

TEST_CASE("large-alpha generalization bound") {
  CHECK(gen_bound_large_alpha(0, 9, 50, 0.05, 3, 4) == doctest::Approx(3 * log_term(0.05, 50)));
  CHECK_THROWS_AS(gen_bound_large_alpha(0, 9, 50, 2.0, 3, 4), std::invalid_argument);

  // M = kl_bound(α) makes the bound non-increasing in α
  const double a1 = 8, a2 = 16 * std::sqrt(2.0), lambda0 = 0.5;
  double prev = INFINITY;
  for (double alpha = 1; alpha <= 1e4; alpha *= 2) {
    const double m = kl_bound(alpha, 1e-3, lambda0, a1, a2, 1.0);
    const double b2 = const_b2(kIdentity, 1, 1, m).value;
    const double v = gen_bound_large_alpha(m, alpha, 100, 0.05, 5.0, b2);
    CHECK(v <= prev * (1 + 1e-12));
    prev = v;
  }
}

TEST_CASE("chi-square generalization bound") {
  const Chi2Bound zero = gen_bound_chi2(0, 10, 0.01, 100, 0.05, 3, 4);
  CHECK(zero.value == doctest::Approx(6 * log_term(0.05, 100)));
  CHECK(zero.alpha_premise);
  CHECK(zero.lambda_premise);

  const double b1 = const_b1(kIdentity, 1, 1, 1, 10000);
  CHECK(b1 == doctest::Approx(32.764115444400915).epsilon(1e-14));
  const ClampedValue b2 = const_b2(kIdentity, 1, 1, 0.01);
  CHECK(b2.value == doctest::Approx(65.42806585139564).epsilon(1e-14));
  CHECK_FALSE(b2.clamped);
  const Chi2Bound v = gen_bound_chi2(std::exp(1.0) - 1, 1000, 0, 10000, 0.05, b1, b2.value);
  CHECK(v.value == doctest::Approx(2.6557561297783696).epsilon(1e-14));
  CHECK(v.vacuous);

  const Chi2Bound small = gen_bound_chi2(1, 1, 0.5, 100, 0.05, 1, 1);
  CHECK_FALSE(small.alpha_premise);
  CHECK_FALSE(small.lambda_premise);
  CHECK(gen_bound_chi2(1, 1, 0, 400, 0.05, 1, 1).value ==
        doctest::Approx(gen_bound_chi2(1, 1, 0, 100, 0.05, 1, 1).value / 2));

  CHECK(const_b2(kIdentity, 1, 1, 10.0).clamped);
  CHECK(const_b2(kIdentity, 1, 1, 10.0).value == doctest::Approx(40.0));
}

TEST_CASE("small-alpha and KL-teacher bounds") {
  CHECK(gen_bound_small_alpha(0, 3, 100, 0.1, kBounded, 1) == doctest::Approx(3 * log_term(0.1, 100)));
  CHECK(gen_bound_small_alpha(0.25, 1, 100, 0.1, kBounded, 1) ==
        doctest::Approx(0.5671620246021225).epsilon(1e-14));
  CHECK(gen_bound_small_alpha(0.25, 1e-12, 100, 0.1, kBounded, 1) ==
        doctest::Approx(3 * log_term(0.1, 100)));
  CHECK_THROWS_AS(gen_bound_small_alpha(0.6, 1, 100, 0.1, kBounded, 1), AssumptionViolated);
  CHECK_THROWS_AS(gen_bound_small_alpha(0.25, 1, 100, 0.1, kIdentity, 1), AssumptionViolated);

  const KlTeacherBound kt = gen_bound_kl_teacher(0.5, 1, 400, 0.05, kBounded, 1, 1e-3);
  CHECK(kt.value == doctest::Approx(0.6902731671968049).epsilon(1e-14));
  CHECK(kt.lambda_premise);
  CHECK(kt.alpha_premise);
  CHECK_FALSE(gen_bound_kl_teacher(0.5, 0.5, 400, 0.05, kBounded, 1, 0).alpha_premise);
  CHECK(gen_bound_kl_teacher(0, 1, 400, 0.05, kBounded, 1, 0).value ==
        doctest::Approx(6 * log_term(0.05, 400)));
  const double a = gen_bound_kl_teacher(0.5, 1, 400, 0.05, kBounded, 1, 0).value;
  const double b = gen_bound_kl_teacher(0.5, 4, 400, 0.05, kBounded, 1, 0).value;
  CHECK(b - 6 * log_term(0.05, 400) == doctest::Approx(2 * (a - 6 * log_term(0.05, 400))));
  CHECK_THROWS_AS(gen_bound_kl_teacher(0.5, 1, 400, 0.05, kIdentity, 1, 0), AssumptionViolated);
}

TEST_CASE("ramp loss") {
  CHECK(ramp_loss(1, 1) == 0.0);
  CHECK(ramp_loss(0.25, 1) == 0.5);
  CHECK(ramp_loss(-0.3, 1) == 1.0);
  CHECK(zero_one_loss(-0.3, 1) == 1.0);
  CHECK(zero_one_loss(0.3, 1) == 0.0);
  for (double y : {-1.0, 1.0})
    for (double a = -2; a <= 2; a += 0.01) {
      CHECK(ramp_loss(a, y) >= zero_one_loss(a, y));
      for (double b = -2; b <= 2; b += 0.13)
        CHECK(std::abs(ramp_loss(a, y) - ramp_loss(b, y)) <= 2 * std::abs(a - b) + 1e-12);
    }
}

TEST_CASE("scaling templates") {
  CHECK(kernel_drift_template(3, 2, 0.5) == doctest::Approx(6.0));
  CHECK(residual_gap_template(1, 2, 0.5) == doctest::Approx(64.0));
  const std::vector<double> shape = {1, 2, 4}, measured = {3, 6, 12};
  CHECK(fit_template_constant(measured, shape) == doctest::Approx(3.0));
}
