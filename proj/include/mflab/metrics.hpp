#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mflab/data.hpp"
#include "mflab/linalg.hpp"
#include "mflab/model.hpp"
#include "mflab/parallel.hpp"

namespace mflab {

/// Ensemble as points (θ_j, u_j) in ℝ^{d+1}, one row per particle.
Matrix ensemble_points(const Ensemble& e);

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns the column assigned to each row.
std::vector<std::size_t> hungarian_assignment(const Matrix& cost, double* total = nullptr);

/// Largest point-set size accepted by w2_exact.
inline constexpr std::size_t kW2ExactMaxPoints = 512;

/// √(min over matchings of (1/m) Σ ‖a_i − b_π(i)‖²).
/// Throws std::invalid_argument on a size mismatch or when |a| exceeds
/// kW2ExactMaxPoints (use w2_sliced there).
double w2_exact(const Matrix& a, const Matrix& b);

struct SlicedEstimate {
  double value = 0.0;      // √(mean over directions of 1-D W2²)
  double std_error = 0.0;  // delta-method error across directions
};

/// Sliced W2 with `n_projections` >= 16 random unit directions.
SlicedEstimate w2_sliced_estimate(const Matrix& a, const Matrix& b,
                                  std::size_t n_projections, std::uint64_t seed,
                                  Executor* executor = nullptr);
double w2_sliced(const Matrix& a, const Matrix& b, std::size_t n_projections,
                 std::uint64_t seed);

/// KL(N(mean, diag(var)) ‖ p0) with p0 = N(0, diag(σ_θ²·1_d, σ_u²)); the last
/// coordinate is u. Returns +inf if some variance is zero.
double kl_diag_gaussian_to_init(std::span<const double> mean,
                                std::span<const double> var, const HyperParams& hp);

/// Fits a diagonal Gaussian to the particles and returns its KL to p0.
/// Requires m >= 2; +inf for a degenerate (zero-variance) coordinate.
double kl_gaussian_surrogate(const Ensemble& e, const HyperParams& hp);

/// Two-sample k-nearest-neighbour KL estimate between the ensemble and
/// `ref_samples` fresh draws from p0:
///   (D/m) Σ_i log(ν_k(i)/ρ_k(i)) + log(ref_samples/(m − 1)).
/// Biased at finite m; use for order-of-magnitude cross-checks only.
double kl_knn(const Ensemble& e, const HyperParams& hp, std::size_t k,
              std::size_t ref_samples, std::uint64_t seed, Executor* executor = nullptr);

/// loss + λ·kl_gaussian_surrogate
double energy(const Ensemble& e, const HyperParams& hp, const Dataset& ds);

struct TalagrandResult {
  double lhs = 0.0;  // W2(q, p0), closed form for diagonal Gaussians
  double rhs = 0.0;  // 2·max(σ_u, σ_θ)·√KL(q‖p0)
  bool pass = false;
};

/// Checks W2(q, p0) <= 2max{σ_u,σ_θ}√KL(q‖p0) for q = N(mean, diag(variances)).
/// Throws std::invalid_argument on a non-positive variance.
TalagrandResult talagrand_audit(std::span<const double> mean,
                                std::span<const double> variances, const HyperParams& hp);

struct TailBoundRow {
  double r = 0.0;
  double mc_lhs = 0.0;       // Monte Carlo E[u² 1(|u| >= r)]
  double mc_std_error = 0.0;
  double exact_lhs = 0.0;    // σ²(2zφ(z) + erfc(z/√2)), z = r/σ
  double paper_rhs = 0.0;    // (σ²/2)·exp(−r²/(4σ²))
  double corrected_rhs = 0.0;  // 2σ²·exp(−r²/(4σ²))
  bool paper_violated = false;
  bool corrected_pass = false;
};

struct TailBoundReport {
  std::vector<TailBoundRow> rows;
  bool corrected_all_pass = true;
  bool paper_all_pass = true;
};

/// Audits the Gaussian second-moment tail bound for u ~ N(0, σ_u²).
/// Requires mc_samples >= 10⁶. corrected_pass uses a 3-standard-error margin.
TailBoundReport tail_bound_audit(const HyperParams& hp, std::span<const double> r_grid,
                                 std::size_t mc_samples, std::uint64_t seed);

}  // namespace mflab
