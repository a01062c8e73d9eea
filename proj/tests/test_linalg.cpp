#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mflab/linalg.hpp"
#include "mflab/rng.hpp"

using namespace mflab;

namespace {

double min_root_2x2(double a, double b, double c) {
  return 0.5 * (a + c) - std::hypot(0.5 * (a - c), b);
}

// Trigonometric solution of the characteristic cubic of a symmetric 3×3.
double min_root_3x3(const Matrix& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Matrix b(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (a(i, j) - (i == j ? q : 0.0)) / p;
  const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                     b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                     b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  return q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
}

}  // namespace

TEST_CASE("small eigenvalue examples") {
  Matrix d(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 3;
  CHECK(min_eigenvalue(d) == doctest::Approx(2.0));

  Matrix a(2, 2, 1.0);
  a(0, 0) = a(1, 1) = 2;
  CHECK(min_eigenvalue(a) == doctest::Approx(1.0));
}

TEST_CASE("jacobi matches closed-form roots") {
  Stream s(3, StreamDomain::kMonteCarlo);
  for (int k = 0; k < 500; ++k) {
    Matrix a(2, 2);
    a(0, 0) = s.normal();
    a(1, 1) = s.normal();
    a(0, 1) = a(1, 0) = s.normal();
    const double ref = min_root_2x2(a(0, 0), a(0, 1), a(1, 1));
    CHECK(std::abs(min_eigenvalue(a) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
  }
  for (int k = 0; k < 500; ++k) {
    Matrix a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) a(i, j) = a(j, i) = s.normal();
    const double ref = min_root_3x3(a);
    CHECK(std::abs(min_eigenvalue(a) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("jacobi decomposition reconstructs the matrix") {
  Stream s(8, StreamDomain::kMonteCarlo);
  const std::size_t n = 12;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = s.normal();
  const SymmetricEigen eig = jacobi_eigen(a);
  CHECK(std::is_sorted(eig.values.begin(), eig.values.end()));
  Matrix lam(n, n);
  for (std::size_t i = 0; i < n; ++i) lam(i, i) = eig.values[i];
  const Matrix back = multiply(multiply(eig.vectors, lam), transpose(eig.vectors));
  CHECK(max_abs_diff(back, a) < 1e-12);
  CHECK(max_abs_diff(multiply(transpose(eig.vectors), eig.vectors), Matrix::identity(n)) < 1e-12);
}

TEST_CASE("jacobi rejects bad input") {
  CHECK_THROWS_AS(jacobi_eigen(Matrix(2, 3)), std::invalid_argument);
  Matrix a(2, 2);
  a(0, 1) = 1.0;
  CHECK_THROWS_AS(jacobi_eigen(a), std::invalid_argument);
}
