#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include "mflab/activation.hpp"

namespace mflab {

/// A quantity the bounds are conditioned on (Λ > 0, M <= 1/2, a bounded
/// activation, ...) does not hold.
class AssumptionViolated : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constant whose formula contains a logarithm that may be clamped.
struct ClampedValue {
  double value = 0.0;
  bool clamped = false;
};

struct TheoryConstants {
  double a1 = 0.0;
  double a2 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double r = 0.0;
  double lambda0 = 0.0;
  double alpha_min = 0.0;
  bool r_clamped = false;
  bool b2_clamped = false;
};

/// 2(G1/σu² + G3/σθ²)(σθ²d + σu²) + 2(G2/σu² + G4)√(σθ²d + σu²)
double const_a1(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d);

/// 2[((G1+G3)/σu² + (G3+G5)/σθ² + G6)·2√(σu² + σθ²d) + G2/σu² + G4]·max{σu,σθ}
double const_a2(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d);

/// min{√(σθ²d + σu²), Λ / (n·D)} with
///   D = 8G3²√(8σθ²d + 10σu²) + 64G3G4·log(8nG3²σu²/Λ)
///       + 16G1G3√(σu² + σθ²d) + 8G2G3.
/// The log argument is clamped below at e. Throws AssumptionViolated for Λ <= 0.
ClampedValue const_r(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d,
                     std::size_t n, double big_lambda);

/// 8√(L0·A2² + λ·A1²)·max{σu,σθ} / (λ0²·R). Throws std::invalid_argument
/// unless λ0 > 0 and R > 0.
double alpha_threshold(double l0, double a1, double a2, double lambda, double lambda0,
                       double r, double sigma_u, double sigma_theta);

struct LossBound {
  double value = 0.0;  // transient + floor
  double floor = 0.0;  // 2A1²λ²/(α²λ0⁴)
};

/// 2exp(−2α²λ0²t)L0 + 2A1²λ²α⁻²λ0⁻⁴. Throws std::invalid_argument for t < 0
/// or λ0 <= 0.
LossBound loss_bound(double t, double alpha, double lambda, double lambda0, double a1,
                     double l0);

/// 4A2²α⁻²λ0⁻⁴L0 + 4A1²λα⁻²λ0⁻⁴. Throws std::invalid_argument for λ0 <= 0.
double kl_bound(double alpha, double lambda, double lambda0, double a1, double a2,
                double l0);

/// [4√(2G1²σθ²d + G2²) + 2√2·G3σu]·maxσ + 8G3σu·maxσ·√(log n)
double const_b1(const GConstants& g, double sigma_u, double sigma_theta, std::size_t d,
                std::size_t n);

/// 40G3·s² + 16G5σu·s²·√(log(σu/(8s²M))), s² = max{σu², σθ²}. The log is
/// clamped below at 0. Requires M > 0.
ClampedValue const_b2(const GConstants& g, double sigma_u, double sigma_theta, double m_kl);

/// B1√M·α/√n + B2·M·α + 3√(log(2/δ)/(2n)). Requires M >= 0, δ in (0, 1], n >= 1.
double gen_bound_large_alpha(double m_kl, double alpha, std::size_t n, double delta,
                             double b1, double b2);

struct Chi2Bound {
  double value = 0.0;
  bool alpha_premise = false;   // α >= √(nχ²)·max{2√λ, 1}
  bool lambda_premise = false;  // 4nλχ² <= α²
  bool vacuous = false;         // value >= 1
};

/// 2(B1 + B2)√(χ²/n) + 6√(log(2/δ)/(2n)), with premise flags.
Chi2Bound gen_bound_chi2(double chi2, double alpha, double lambda, std::size_t n,
                         double delta, double b1, double b2);

/// 4αG7σu√(M/n) + 3√(log(2/δ)/(2n)). Throws AssumptionViolated for M > 1/2 or
/// an activation without G7.
double gen_bound_small_alpha(double m_kl, double alpha, std::size_t n, double delta,
                             const GConstants& g, double sigma_u);

struct KlTeacherBound {
  double value = 0.0;
  bool lambda_premise = false;  // λ <= α/(4n·KL)
  /// α >= 1: the argument mixes p_true into p0 with weight 1/α.
  bool alpha_premise = false;
  bool vacuous = false;
};

/// 8G7σu√(α·KL/n) + 6√(log(2/δ)/(2n)). Throws AssumptionViolated for an
/// activation without G7.
KlTeacherBound gen_bound_kl_teacher(double kl, double alpha, std::size_t n, double delta,
                                    const GConstants& g, double sigma_u, double lambda);

/// 0 if y'y >= 1/2, 1 − 2y'y if 0 <= y'y < 1/2, 1 if y'y < 0.
double ramp_loss(double y_pred, double y);
/// 1 if y'y < 0, else 0.
double zero_one_loss(double y_pred, double y);

/// Shape of the kernel-drift bound: c·α⁻¹λ0⁻².
double kernel_drift_template(double c, double alpha, double lambda0);
/// Shape of the residual-gap bound: c·α⁻²λ0⁻⁸.
double residual_gap_template(double c, double alpha, double lambda0);

/// Least-squares constant c for measured ≈ c·shape, i.e. Σ v·s / Σ s².
double fit_template_constant(std::span<const double> measured, std::span<const double> shape);

}  // namespace mflab
