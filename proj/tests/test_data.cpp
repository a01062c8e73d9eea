#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "mflab/data.hpp"
#include "mflab/rng.hpp"

using namespace mflab;

TEST_CASE("synthetic inputs lie in the unit ball") {
  const Dataset one = make_synthetic(1, 2, 7, LabelMode::kRademacher);
  REQUIRE(one.n() == 1);
  CHECK(norm2(one.x(0)) <= 1.0);
  CHECK(std::abs(one.labels[0]) == 1.0);

  const Dataset ds = make_synthetic(100, 5, 1, LabelMode::kRademacher);
  for (std::size_t i = 0; i < ds.n(); ++i) CHECK(norm2(ds.x(i)) <= 1.0);

  CHECK(make_synthetic(100, 5, 1, LabelMode::kRademacher).inputs == ds.inputs);
  CHECK_FALSE(make_synthetic(100, 5, 2, LabelMode::kRademacher).inputs == ds.inputs);
}

TEST_CASE("distinct inputs are pairwise non-parallel") {
  SyntheticOptions opt;
  opt.distinct = true;
  const Dataset ds = make_synthetic(16, 3, 3, LabelMode::kRademacher, opt);
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = i + 1; j < ds.n(); ++j) {
      const double c = dot(ds.x(i), ds.x(j)) / (norm2(ds.x(i)) * norm2(ds.x(j)));
      CHECK(std::abs(c) < 1.0);
    }
}

TEST_CASE("synthetic contract errors") {
  CHECK_THROWS_AS(make_synthetic(0, 2, 1, LabelMode::kRademacher), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic(3, 0, 1, LabelMode::kRademacher), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic(3, 2, 1, LabelMode::kTeacher), std::invalid_argument);

  TeacherLabeling zero{{{0.0, 0.0, 0.0}, 1.0, 1.0}, Activation(ActivationKind::kIdentity), true};
  SyntheticOptions opt;
  opt.teacher = &zero;
  CHECK_THROWS_AS(make_synthetic(3, 2, 1, LabelMode::kTeacher, opt), std::invalid_argument);
}

TEST_CASE("teacher labels") {
  const double e1[] = {1.0, 0.0};
  const Activation id(ActivationKind::kIdentity);

  GaussianTeacher zero{{0.0, 0.0, 0.0}, 1.0, 1.0};
  CHECK(teacher_label(zero, id, e1, 10000, 1).value == 0.0);

  GaussianTeacher lin{{1.0, 0.0, 2.0}, 1.0, 1.0};
  CHECK(teacher_label(lin, id, e1, 10000, 1).value == doctest::Approx(2.0));

  // Monte Carlo against E[u]·E[θ⊤x] = 2, done by hand
  Stream s(5, StreamDomain::kMonteCarlo);
  const std::size_t mc = 1000000;
  double sum = 0, sq = 0;
  for (std::size_t k = 0; k < mc; ++k) {
    const double th = 1.0 + s.normal();
    s.normal();
    const double u = 2.0 + s.normal();
    sum += u * th;
    sq += u * th * u * th;
  }
  const double mean = sum / mc;
  const double se = std::sqrt((sq / mc - mean * mean) / mc);
  CHECK(std::abs(mean - 2.0) <= 3 * se);

  const Activation th(ActivationKind::kTanh);
  GaussianTeacher centred{{0.0, 0.0, 1.0}, 1.0, 1.0};
  const Estimate est = teacher_label(centred, th, e1, 1000000, 3);
  CHECK(std::abs(est.value) <= 3 * est.std_error);
  CHECK(teacher_label_quadrature(centred, th, e1) == doctest::Approx(0.0));

  GaussianTeacher skew{{0.8, -0.3, 1.5}, 1.0, 1.0};
  const double x[] = {0.6, 0.5};
  const Estimate mc_est = teacher_label(skew, th, x, 1000000, 9);
  CHECK(std::abs(mc_est.value - teacher_label_quadrature(skew, th, x)) <= 4 * mc_est.std_error);
}

TEST_CASE("divergences to the initialization") {
  GaussianTeacher zero{{0.0, 0.0, 0.0}, 1.0, 1.0};
  CHECK(chi2_to_init(zero, 1.0, 1.0) == 0.0);
  CHECK(kl_to_init(zero, 1.0, 1.0) == 0.0);

  GaussianTeacher unit_u{{0.0, 0.0, 1.0}, 1.0, 1.0};
  CHECK(chi2_to_init(unit_u, 1.0, 1.0) == doctest::Approx(std::numbers::e - 1.0));
  CHECK(kl_to_init(unit_u, 1.0, 1.0) == doctest::Approx(0.5));

  GaussianTeacher half{{0.0, 0.0, 0.5}, 1.0, 0.5};
  CHECK(chi2_to_init(half, 0.5, 1.0) == doctest::Approx(std::numbers::e - 1.0));

  // Importance sampling of E_p0[(p/p0)²] − 1 for the u-shifted teacher.
  Stream s(11, StreamDomain::kMonteCarlo);
  const std::size_t mc = 10000000;
  double acc = 0;
  for (std::size_t k = 0; k < mc; ++k) {
    const double u = s.normal();
    const double w = std::exp(u - 0.5);
    acc += w * w;
  }
  CHECK(acc / mc - 1.0 == doctest::Approx(std::numbers::e - 1.0).epsilon(0.02));

  GaussianTeacher mixed{{0.3, -1.2, 0.7}, 1.0, 1.0};
  CHECK(kl_to_init(mixed, 1.0, 1.0) <= std::log1p(chi2_to_init(mixed, 1.0, 1.0)));
  CHECK_THROWS_AS(chi2_to_init(mixed, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("dataset csv round trip") {
  const Dataset ds = make_synthetic(10, 3, 4, LabelMode::kRademacher);
  const auto path = std::filesystem::temp_directory_path() / "mflab_test_dataset.csv";
  write_dataset_csv(ds, path, {"abc", 4});
  const Dataset back = read_dataset_csv(path);
  CHECK(back.inputs == ds.inputs);
  CHECK(back.labels == ds.labels);
  std::filesystem::remove(path);
}
