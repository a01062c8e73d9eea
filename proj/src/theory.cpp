#include "mflab/theory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mflab {

namespace {

void require_positive_sigmas(double sigma_u, double sigma_theta) {
  if (!(sigma_u > 0.0) || !(sigma_theta > 0.0))
    throw std::invalid_argument("sigma_u and sigma_theta must be positive");
}

double confidence_term(std::size_t n, double delta) {
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  if (!(delta > 0.0) || !(delta <= 1.0))
    throw std::invalid_argument(fmt::format("delta must lie in (0, 1], got {}", delta));
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

double require_g7(const GConstants& g) {
  if (!g.g7)
    throw AssumptionViolated("bound needs a bounded activation (G7), this one is unbounded");
  return *g.g7;
}

}  // namespace

double const_a1(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d) {
  require_positive_sigmas(sigma_u, sigma_theta);
  const double su2 = sigma_u * sigma_u;
  const double st2 = sigma_theta * sigma_theta;
  const double s = st2 * static_cast<double>(d) + su2;
  return 2.0 * (g.g1 / su2 + g.g3 / st2) * s + 2.0 * (g.g2 / su2 + g.g4) * std::sqrt(s);
}

double const_a2(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d) {
  require_positive_sigmas(sigma_u, sigma_theta);
  const double su2 = sigma_u * sigma_u;
  const double st2 = sigma_theta * sigma_theta;
  const double root = std::sqrt(su2 + st2 * static_cast<double>(d));
  const double inner =
      ((g.g1 + g.g3) / su2 + (g.g3 + g.g5) / st2 + g.g6) * 2.0 * root + g.g2 / su2 + g.g4;
  return 2.0 * inner * std::max(sigma_u, sigma_theta);
}

ClampedValue const_r(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d,
                     std::size_t n, double big_lambda) {
  require_positive_sigmas(sigma_u, sigma_theta);
  if (!(big_lambda > 0.0))
    throw AssumptionViolated(
        fmt::format("stability radius needs a positive smallest eigenvalue, got {}", big_lambda));
  if (n == 0) throw std::invalid_argument("const_r: n must be at least 1");
  const double su2 = sigma_u * sigma_u;
  const double st2 = sigma_theta * sigma_theta;
  const double dd = static_cast<double>(d);
  const double nn = static_cast<double>(n);
  ClampedValue out;
  double log_arg = 8.0 * nn * g.g3 * g.g3 * su2 / big_lambda;
  if (!(log_arg >= std::numbers::e)) {
    log_arg = std::numbers::e;
    out.clamped = true;
  }
  const double denom = 8.0 * g.g3 * g.g3 * std::sqrt(8.0 * st2 * dd + 10.0 * su2) +
                       64.0 * g.g3 * g.g4 * std::log(log_arg) +
                       16.0 * g.g1 * g.g3 * std::sqrt(su2 + st2 * dd) + 8.0 * g.g2 * g.g3;
  const double radius = std::sqrt(st2 * dd + su2);
  out.value = denom > 0.0 ? std::min(radius, big_lambda / (denom * nn)) : radius;
  return out;
}

double alpha_threshold(double l0, double a1, double a2, double lambda, double lambda0,
                       double r, double sigma_u, double sigma_theta) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("alpha_threshold: lambda0 must be positive");
  if (!(r > 0.0)) throw std::invalid_argument("alpha_threshold: R must be positive");
  return 8.0 * std::sqrt(l0 * a2 * a2 + lambda * a1 * a1) / (lambda0 * lambda0 * r) *
         std::max(sigma_u, sigma_theta);
}

LossBound loss_bound(double t, double alpha, double lambda, double lambda0, double a1,
                     double l0) {
  if (!(t >= 0.0)) throw std::invalid_argument("loss_bound: t must be non-negative");
  if (!(lambda0 > 0.0)) throw std::invalid_argument("loss_bound: lambda0 must be positive");
  const double l02 = lambda0 * lambda0;
  LossBound out;
  out.floor = 2.0 * a1 * a1 * lambda * lambda / (alpha * alpha * l02 * l02);
  out.value = 2.0 * std::exp(-2.0 * alpha * alpha * l02 * t) * l0 + out.floor;
  return out;
}

double kl_bound(double alpha, double lambda, double lambda0, double a1, double a2,
                double l0) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("kl_bound: lambda0 must be positive");
  const double scale = alpha * alpha * std::pow(lambda0, 4);
  return (4.0 * a2 * a2 * l0 + 4.0 * a1 * a1 * lambda) / scale;
}

double const_b1(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d,
                std::size_t n) {
  require_positive_sigmas(sigma_u, sigma_theta);
  if (n == 0) throw std::invalid_argument("const_b1: n must be at least 1");
  const double maxs = std::max(sigma_u, sigma_theta);
  const double first = 4.0 * std::sqrt(2.0 * g.g1 * g.g1 * sigma_theta * sigma_theta *
                                            static_cast<double>(d) +
                                        g.g2 * g.g2) +
                       2.0 * std::numbers::sqrt2 * g.g3 * sigma_u;
  return first * maxs +
         8.0 * g.g3 * sigma_u * maxs * std::sqrt(std::log(static_cast<double>(n)));
}

ClampedValue const_b2(const GConstants& g, double sigma_u, double sigma_theta, double m_kl) {
  require_positive_sigmas(sigma_u, sigma_theta);
  if (!(m_kl > 0.0)) throw std::invalid_argument("const_b2: M must be positive");
  const double s2 = std::max(sigma_u * sigma_u, sigma_theta * sigma_theta);
  ClampedValue out;
  double lg = std::log(sigma_u / (8.0 * s2 * m_kl));
  if (!(lg >= 0.0)) {
    lg = 0.0;
    out.clamped = true;
  }
  out.value = 40.0 * g.g3 * s2 + 16.0 * g.g5 * sigma_u * s2 * std::sqrt(lg);
  return out;
}

double gen_bound_large_alpha(double m_kl, double alpha, std::size_t n, double delta,
                             double b1, double b2) {
  if (!(m_kl >= 0.0)) throw std::invalid_argument("gen_bound_large_alpha: M must be >= 0");
  const double conf = confidence_term(n, delta);
  return b1 * std::sqrt(m_kl) * alpha / std::sqrt(static_cast<double>(n)) +
         b2 * m_kl * alpha + 3.0 * conf;
}

Chi2Bound gen_bound_chi2(double chi2, double alpha, double lambda, std::size_t n,
                         double delta, double b1, double b2) {
  if (!(chi2 >= 0.0)) throw std::invalid_argument("gen_bound_chi2: chi2 must be >= 0");
  const double conf = confidence_term(n, delta);
  const double nn = static_cast<double>(n);
  Chi2Bound out;
  out.value = 2.0 * (b1 + b2) * std::sqrt(chi2 / nn) + 6.0 * conf;
  out.alpha_premise = alpha >= std::sqrt(nn * chi2) * std::max(2.0 * std::sqrt(lambda), 1.0);
  out.lambda_premise = 4.0 * nn * lambda * chi2 <= alpha * alpha;
  out.vacuous = out.value >= 1.0;
  return out;
}

double gen_bound_small_alpha(double m_kl, double alpha, std::size_t n, double delta,
                             const GConstants& g, double sigma_u) {
  const double g7 = require_g7(g);
  if (!(m_kl >= 0.0)) throw std::invalid_argument("gen_bound_small_alpha: M must be >= 0");
  if (m_kl > 0.5)
    throw AssumptionViolated(fmt::format("small-alpha bound needs M <= 1/2, got {}", m_kl));
  const double conf = confidence_term(n, delta);
  return 4.0 * alpha * g7 * sigma_u * std::sqrt(m_kl / static_cast<double>(n)) + 3.0 * conf;
}

KlTeacherBound gen_bound_kl_teacher(double kl, double alpha, std::size_t n, double delta,
                                    const GConstants& g, double sigma_u, double lambda) {
  const double g7 = require_g7(g);
  if (!(kl >= 0.0)) throw std::invalid_argument("gen_bound_kl_teacher: KL must be >= 0");
  const double conf = confidence_term(n, delta);
  const double nn = static_cast<double>(n);
  KlTeacherBound out;
  out.value = 8.0 * g7 * sigma_u * std::sqrt(alpha * kl / nn) + 6.0 * conf;
  out.lambda_premise = kl == 0.0 || lambda <= alpha / (4.0 * nn * kl);
  out.alpha_premise = alpha >= 1.0;
  out.vacuous = out.value >= 1.0;
  return out;
}

double ramp_loss(double y_pred, double y) {
  const double margin = y_pred * y;
  if (margin >= 0.5) return 0.0;
  if (margin >= 0.0) return 1.0 - 2.0 * margin;
  return 1.0;
}

double zero_one_loss(double y_pred, double y) { return y_pred * y < 0.0 ? 1.0 : 0.0; }

double kernel_drift_template(double c, double alpha, double lambda0) {
  return c / (alpha * lambda0 * lambda0);
}

double residual_gap_template(double c, double alpha, double lambda0) {
  return c / (alpha * alpha * std::pow(lambda0, 8));
}

double fit_template_constant(std::span<const double> measured, std::span<const double> shape) {
  double num = 0.0;
  double den = 0.0;
  if (measured.size() != shape.size())
    throw std::invalid_argument("fit_template_constant: size mismatch");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    num += measured[i] * shape[i];
    den += shape[i] * shape[i];
  }
  if (!(den > 0.0)) throw std::invalid_argument("fit_template_constant: all shapes are zero");
  return num / den;
}

}  // namespace mflab
