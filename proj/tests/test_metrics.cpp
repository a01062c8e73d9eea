#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mflab/metrics.hpp"
#include "mflab/rng.hpp"

using namespace mflab;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix random_points(std::size_t n, std::size_t d, Stream& s, double shift = 0.0) {
  Matrix m(n, d);
  for (double& v : m.data()) v = s.normal() + shift;
  return m;
}

}  // namespace

TEST_CASE("hungarian agrees with enumeration") {
  Stream s(4, StreamDomain::kMonteCarlo);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 6;
    Matrix c(n, n);
    for (double& v : c.data()) v = s.uniform() * 10;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0;
      for (std::size_t i = 0; i < n; ++i) cost += c(i, perm[i]);
      best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double total = 0;
    const auto assign = hungarian_assignment(c, &total);
    CHECK(total == doctest::Approx(best).epsilon(1e-12));
    std::vector<std::size_t> sorted = assign;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
  }
}

TEST_CASE("exact W2 examples") {
  Stream s(1, StreamDomain::kMonteCarlo);
  const Matrix a = random_points(20, 3, s);
  CHECK(w2_exact(a, a) == 0.0);

  Matrix o(1, 2), p(1, 2);
  p(0, 0) = 3;
  p(0, 1) = 4;
  CHECK(w2_exact(o, p) == doctest::Approx(5.0));
  CHECK(w2_exact(column({0, 1}), column({0.5, 1.5})) == doctest::Approx(0.5));

  CHECK_THROWS_AS(w2_exact(column({0, 1}), column({0})), std::invalid_argument);
  CHECK_THROWS_AS(w2_exact(Matrix(513, 1), Matrix(513, 1)), std::invalid_argument);
}

TEST_CASE("exact W2 is a metric on samples") {
  Stream s(2, StreamDomain::kMonteCarlo);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_points(15, 2, s), b = random_points(15, 2, s, 0.5),
                 c = random_points(15, 2, s, -0.3);
    CHECK(w2_exact(a, b) == w2_exact(b, a));
    CHECK(w2_exact(a, c) <= w2_exact(a, b) + w2_exact(b, c) + 1e-9);
  }
}

TEST_CASE("sliced W2") {
  Stream s(3, StreamDomain::kMonteCarlo);
  const Matrix a = random_points(256, 3, s);
  CHECK(w2_sliced(a, a, 64, 1) == 0.0);
  Matrix b = a;
  for (std::size_t i = 0; i < b.rows(); ++i) b(i, 0) += 1.5;
  const double sliced = w2_sliced(a, b, 512, 7);
  // a translation by v has sliced W2 = ‖v‖/√D
  CHECK(sliced == doctest::Approx(w2_exact(a, b) / std::sqrt(3.0)).epsilon(0.3));
  CHECK(sliced == w2_sliced(a, b, 512, 7));
  Executor pool(3);
  CHECK(w2_sliced_estimate(a, b, 512, 7, &pool).value == sliced);
}

TEST_CASE("diagonal Gaussian KL") {
  HyperParams hp;
  hp.d = 2;
  hp.sigma_u = 2.0;
  hp.sigma_theta = 1.0;
  const std::vector<double> zero(3, 0.0), var0 = {1.0, 1.0, 4.0};
  CHECK(kl_diag_gaussian_to_init(zero, var0, hp) == 0.0);

  const std::vector<double> shifted = {0.0, 0.0, 1.5};
  CHECK(kl_diag_gaussian_to_init(shifted, var0, hp) == doctest::Approx(1.5 * 1.5 / 8.0));

  const std::vector<double> halved = {0.5, 1.0, 4.0};
  CHECK(kl_diag_gaussian_to_init(zero, halved, hp) ==
        doctest::Approx(0.09657359027997264).epsilon(1e-14));

  const std::vector<double> degenerate = {0.0, 1.0, 4.0};
  CHECK(std::isinf(kl_diag_gaussian_to_init(zero, degenerate, hp)));
}

TEST_CASE("KL surrogate and energy") {
  HyperParams hp;
  hp.d = 2;
  hp.m = 2048;
  const Ensemble e = init_ensemble(hp, InitScheme::kSymmetricMomentMatched);
  CHECK(std::abs(kl_gaussian_surrogate(e, hp)) < 1e-12);

  const Dataset ds = make_synthetic(3, 2, 1, LabelMode::kRademacher);
  hp.n = 3;
  CHECK(energy(e, hp, ds) == loss(e, hp, ds));
  hp.lambda = 0.1;
  CHECK(energy(e, hp, ds) == doctest::Approx(loss(e, hp, ds)));
}

TEST_CASE("kNN KL estimator calibration") {
  HyperParams hp;
  hp.d = 2;
  hp.m = 10000;
  hp.seed = 31;
  const Ensemble e = init_ensemble(hp);
  const double null_est = kl_knn(e, hp, 5, 10000, 2);
  CHECK(std::abs(null_est) <= 0.1);
  CHECK(kl_knn(e, hp, 5, 10000, 2) == null_est);

  Ensemble shifted = e;
  for (double& u : shifted.us) u += 1.0;  // closed-form KL 0.5
  const double est = kl_knn(shifted, hp, 5, 10000, 2);
  CHECK(est >= 0.3);
  CHECK(est <= 0.7);
}

TEST_CASE("Talagrand examples") {
  HyperParams hp;
  hp.d = 2;
  hp.sigma_u = hp.sigma_theta = 1.5;
  const std::vector<double> zero(3, 0.0), var0(3, 2.25);
  const TalagrandResult same = talagrand_audit(zero, var0, hp);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.pass);

  const std::vector<double> mu = {0.3, -0.4, 1.2};
  const TalagrandResult shifted = talagrand_audit(mu, var0, hp);
  const double norm = std::sqrt(0.09 + 0.16 + 1.44);
  CHECK(shifted.lhs == doctest::Approx(norm));
  CHECK(shifted.rhs == doctest::Approx(std::sqrt(2.0) * norm));
  CHECK(shifted.pass);

  const std::vector<double> bad = {1.0, 0.0, 1.0};
  CHECK_THROWS_AS(talagrand_audit(zero, bad, hp), std::invalid_argument);
}

TEST_CASE("tail bound audit") {
  HyperParams hp;
  hp.sigma_u = 1.3;
  const std::vector<double> grid = {0.0, 1.3, 13.0};
  const TailBoundReport rep = tail_bound_audit(hp, grid, 1000000, 5);
  REQUIRE(rep.rows.size() == 3);
  const TailBoundRow& r0 = rep.rows[0];
  CHECK(r0.exact_lhs == doctest::Approx(1.69).epsilon(1e-14));
  CHECK(r0.paper_rhs == doctest::Approx(0.845));
  CHECK(r0.corrected_rhs == doctest::Approx(3.38));
  CHECK(r0.paper_violated);
  CHECK(r0.corrected_pass);
  CHECK(rep.rows[2].mc_lhs == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.rows[2].corrected_pass);
  CHECK(rep.corrected_all_pass);
  CHECK_FALSE(rep.paper_all_pass);
}
