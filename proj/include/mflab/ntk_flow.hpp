#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mflab/io.hpp"
#include "mflab/kernel.hpp"

namespace mflab {

/// Linearized training flow
///   d(f − y)/dt = −(2α²/n) H0 (f − y),  f(0) = f0 (zero when omitted),
/// solved through the eigendecomposition of H0.
class NtkFlow {
 public:
  NtkFlow(const GramMatrix& h0, std::vector<double> y, double alpha,
          std::vector<double> f0 = {});

  std::size_t n() const { return y_.size(); }
  double alpha() const { return alpha_; }
  const std::vector<double>& eigenvalues() const { return eigvals_; }
  const Matrix& eigenvectors() const { return eigvecs_; }
  const Matrix& h0() const { return h0_; }
  const std::vector<double>& labels() const { return y_; }
  const std::vector<double>& initial() const { return f0_; }

  /// Decay rate of eigenmode k: (2α²/n)·λ_k.
  double rate(std::size_t k) const;

  /// f(t) = f0 + (I − exp(−(2α²/n) H0 t))(y − f0). Throws std::invalid_argument for t < 0.
  std::vector<double> closed_form(double t) const;

  /// Largest step with stable forward Euler: 2 / ((2α²/n)·λ_max).
  double max_stable_step() const;

  /// Forward-Euler iterates f_0, ..., f_steps. Throws std::invalid_argument
  /// naming the largest stable step when eta is not below it.
  std::vector<std::vector<double>> euler(double eta, std::size_t steps) const;

 private:
  Matrix h0_;
  std::vector<double> y_;
  double alpha_;
  std::vector<double> eigvals_;
  Matrix eigvecs_;
  std::vector<double> f0_;
  std::vector<double> y_coeffs_;  // V⊤(y − f0)
};

/// (1/n)‖f − g‖₂². Throws std::invalid_argument on a size mismatch.
double residual_gap(std::span<const double> f_particle, std::span<const double> f_ntk);

/// Columns t, f_1..f_n, residual_norm (‖f − y‖₂).
void write_ntk_flow_csv(const NtkFlow& flow, std::span<const double> times,
                        const std::filesystem::path& path, const ArtifactHeader& header);

}  // namespace mflab
