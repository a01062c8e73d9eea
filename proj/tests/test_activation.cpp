#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mflab/activation.hpp"

using namespace mflab;

namespace {

const ActivationKind kAll[] = {ActivationKind::kTanh, ActivationKind::kSigmoid,
                               ActivationKind::kIdentity, ActivationKind::kSoftplus};

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("activation values at fixed points") {
  const auto t = Activation(ActivationKind::kTanh).eval(0.0);
  CHECK(t.h == 0.0);
  CHECK(t.h1 == 1.0);
  CHECK(t.h2 == 0.0);
  CHECK(t.h3 == doctest::Approx(-2.0));

  const auto id = Activation(ActivationKind::kIdentity).eval(3.5);
  CHECK(id.h == 3.5);
  CHECK(id.h1 == 1.0);
  CHECK(id.h2 == 0.0);
  CHECK(id.h3 == 0.0);

  const auto s = Activation(ActivationKind::kSigmoid).eval(0.0);
  CHECK(s.h == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.h1 == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(std::abs(s.h2) < 1e-15);
  CHECK(s.h3 == doctest::Approx(-0.125).epsilon(1e-15));
}

TEST_CASE("derivatives agree with central differences") {
  const double step = 1e-4;
  for (ActivationKind k : kAll) {
    const Activation act(k);
    CAPTURE(act.name());
    for (double z = -8.0; z <= 8.0; z += 0.173) {
      const auto v = act.eval(z);
      const auto lo = act.eval(z - step);
      const auto hi = act.eval(z + step);
      CHECK(rel_err((hi.h - lo.h) / (2 * step), v.h1) <= 1e-6);
      CHECK(rel_err((hi.h1 - lo.h1) / (2 * step), v.h2) <= 1e-6);
      CHECK(rel_err((hi.h2 - lo.h2) / (2 * step), v.h3) <= 1e-6);
      double h = 0, h1 = 0;
      act.value_and_slope(z, h, h1);
      CHECK(h == v.h);
      CHECK(h1 == v.h1);
      CHECK(act.value(z) == v.h);
    }
  }
}

TEST_CASE("activation names") {
  for (ActivationKind k : kAll) {
    const Activation act(k);
    CHECK(Activation::from_name(act.name()) == act);
  }
  CHECK_THROWS_AS(Activation::from_name("relu"), std::invalid_argument);
}

TEST_CASE("shipped constants") {
  const GConstants id = constants(Activation(ActivationKind::kIdentity));
  CHECK(id.g1 == 1.0);
  CHECK(id.g2 == 0.0);
  CHECK(id.g3 == 1.0);
  CHECK(id.g4 == 0.0);
  CHECK(id.g5 == 1.0);
  CHECK(id.g6 == 0.0);
  CHECK_FALSE(id.g7.has_value());

  const GConstants th = constants(Activation(ActivationKind::kTanh));
  CHECK(th.g3 == 1.0);
  CHECK(th.g6 == 2.0);
  REQUIRE(th.g7.has_value());
  CHECK(*th.g7 == 1.0);
  // 4/(3√3) rounded up to four decimals
  CHECK(th.g4 >= 4.0 / (3.0 * std::sqrt(3.0)));
  CHECK(th.g4 == doctest::Approx(0.7698).epsilon(2e-4));
}

TEST_CASE("constant audits") {
  for (ActivationKind k : kAll) {
    const Activation act(k);
    CAPTURE(act.name());
    CHECK(audit_constants(act, constants(act), 100001).pass);
  }
  CHECK(audit_constants(Activation(ActivationKind::kIdentity),
                        constants(Activation(ActivationKind::kIdentity)), 1000)
            .pass);

  const Activation tanh_act(ActivationKind::kTanh);
  GConstants bad = constants(tanh_act);
  bad.g3 = 0.5;
  const AuditReport rep = audit_constants(tanh_act, bad, 1000001);
  CHECK_FALSE(rep.pass);
  bool found = false;
  for (const AuditLine& line : rep.lines) {
    if (line.bound == 0.5 && line.margin > 0) {
      found = true;
      CHECK(line.margin == doctest::Approx(0.5));
    }
  }
  CHECK(found);
  CHECK_THROWS(audit_constants(tanh_act, bad, 10));
}
