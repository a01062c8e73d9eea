#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mflab/kernel.hpp"

using namespace mflab;

namespace {

Dataset points(std::initializer_list<std::initializer_list<double>> rows) {
  Dataset ds;
  ds.inputs = Matrix(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (auto r : rows) {
    std::size_t k = 0;
    for (double v : r) ds.inputs(i, k++) = v;
    ++i;
  }
  ds.labels.assign(rows.size(), 1.0);
  return ds;
}

}  // namespace

TEST_CASE("gram single-particle examples") {
  const Activation id(ActivationKind::kIdentity);
  Ensemble e;
  e.thetas = Matrix(1, 2);
  e.thetas(0, 0) = 0.3;
  e.thetas(0, 1) = -0.7;
  e.us = {2.0};
  const Dataset ds = points({{1.0, 0.0}});
  CHECK(gram_h1(e, ds, id).entries(0, 0) == doctest::Approx(4.0));
  CHECK(gram_h2(e, ds, id).entries(0, 0) == doctest::Approx(0.09));

  const Activation th(ActivationKind::kTanh);
  const double v = std::tanh(0.3);
  CHECK(gram_h2(e, ds, th).entries(0, 0) == doctest::Approx(v * v));

  e.us = {0.0};
  const GramMatrix h1 = gram_h1(e, points({{1, 0}, {0.2, 0.5}}), th);
  CHECK(h1.entries == Matrix(2, 2));
}

TEST_CASE("gram parts agree with direct sums") {
  HyperParams hp;
  hp.m = 700;
  hp.d = 3;
  hp.seed = 5;
  const Ensemble e = init_ensemble(hp);
  const Dataset ds = make_synthetic(5, 3, 2, LabelMode::kRademacher);
  for (ActivationKind k : {ActivationKind::kTanh, ActivationKind::kIdentity}) {
    const Activation act(k);
    const GramParts parts = gram_all(e, ds, act);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double h1 = 0, h2 = 0;
        for (std::size_t p = 0; p < hp.m; ++p) {
          const auto ai = act.eval(dot(e.thetas.row(p), ds.x(i)));
          const auto aj = act.eval(dot(e.thetas.row(p), ds.x(j)));
          h1 += e.us[p] * e.us[p] * ai.h1 * aj.h1 * dot(ds.x(i), ds.x(j));
          h2 += ai.h * aj.h;
        }
        CHECK(parts.h1(i, j) == doctest::Approx(h1 / hp.m).epsilon(1e-12));
        CHECK(parts.h2(i, j) == doctest::Approx(h2 / hp.m).epsilon(1e-12));
        CHECK(parts.h(i, j) == parts.h1(i, j) + parts.h2(i, j));
      }
    double tr = 0;
    for (std::size_t i = 0; i < 5; ++i) tr += parts.h(i, i);
    CHECK(gram_trace(e, ds, act) == doctest::Approx(tr).epsilon(1e-12));
    CHECK(is_symmetric(parts.h.entries, 0.0));
  }
}

TEST_CASE("gram is independent of the worker count") {
  HyperParams hp;
  hp.m = 3000;
  hp.d = 4;
  const Ensemble e = init_ensemble(hp);
  const Dataset ds = make_synthetic(6, 4, 1, LabelMode::kRademacher);
  Executor three(3);
  const Activation act(ActivationKind::kTanh);
  CHECK(gram_all(e, ds, act).h.entries == gram_all(e, ds, act, &three).h.entries);
}

TEST_CASE("spectrum and degenerate inputs") {
  HyperParams hp;
  hp.m = 2000;
  hp.d = 2;
  const Ensemble e = init_ensemble(hp);
  const Activation act(ActivationKind::kTanh);
  const GramSpectrum ok = spectrum(gram_all(e, points({{0.5, 0.1}, {-0.2, 0.6}}), act).h);
  CHECK(ok.positive_definite);
  CHECK(ok.lambda0 == doctest::Approx(std::sqrt(ok.lambda_min / 2)));
  CHECK(ok.lambda_min <= ok.lambda_max);

  const GramSpectrum dup = spectrum(gram_all(e, points({{0.5, 0.1}, {0.5, 0.1}}), act).h);
  CHECK_FALSE(dup.positive_definite);
  CHECK(dup.lambda0 == 0.0);
}

TEST_CASE("kernel drift examples") {
  const GramMatrix a = make_gram(Matrix::identity(2), "a", 1);
  const KernelDrift same = kernel_drift(a, a);
  CHECK(same.inf_inf == 0.0);
  CHECK(same.spectral_upper == 0.0);

  Matrix m = Matrix::identity(2);
  m(0, 1) = m(1, 0) = 0.5;
  const KernelDrift d = kernel_drift(make_gram(m, "b", 1), a);
  CHECK(d.inf_inf == 0.5);
  CHECK(d.spectral_upper == 1.0);

  CHECK_THROWS_AS(kernel_drift(a, make_gram(Matrix::identity(3), "c", 1)), std::invalid_argument);
}

TEST_CASE("regularization drift") {
  HyperParams hp;
  hp.m = 4;
  hp.d = 2;
  Ensemble e;
  e.thetas = Matrix(4, 2, 0.3);
  e.us.assign(4, 0.0);
  const Dataset ds = points({{0.5, 0.1}, {-0.2, 0.6}});
  for (double v : reg_drift(e, hp, ds)) CHECK(v == 0.0);

  // Fresh p0 with large m: every entry is a mean of zero-mean terms.
  hp.m = 200000;
  hp.seed = 9;
  const Ensemble big = init_ensemble(hp);
  const std::vector<double> r = reg_drift(big, hp, ds);
  const Activation act = hp.activation;
  for (std::size_t i = 0; i < 2; ++i) {
    double sq = 0;
    for (std::size_t j = 0; j < hp.m; ++j) {
      const double z = dot(big.thetas.row(j), ds.x(i));
      const auto v = act.eval(z);
      const double term = big.us[j] * (v.h + v.h1 * z - v.h2 * dot(ds.x(i), ds.x(i)));
      sq += term * term;
    }
    const double se = std::sqrt(sq / hp.m / hp.m);
    CHECK(std::abs(r[i]) <= 3 * se);
  }
}
