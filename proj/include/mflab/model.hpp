#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mflab/activation.hpp"
#include "mflab/data.hpp"
#include "mflab/io.hpp"
#include "mflab/linalg.hpp"
#include "mflab/parallel.hpp"

namespace mflab {

/// Training and initialization hyperparameters.
struct HyperParams {
  double alpha = 1.0;        // output scale α > 0
  double lambda = 0.0;       // weight decay / noise level λ >= 0
  double sigma_u = 1.0;      // init std of u
  double sigma_theta = 1.0;  // init std of each θ coordinate
  double eta = 1e-3;         // step size
  std::size_t d = 1;
  std::size_t m = 1;
  std::size_t n = 1;
  std::uint64_t seed = 0;
  Activation activation;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
  double max_sigma() const { return sigma_u > sigma_theta ? sigma_u : sigma_theta; }
};

/// Which gradient the optimizer follows. kMeanField moves each particle by
/// m·∇Q̂ (the PDE drift); kRaw uses ∇Q̂ itself.
enum class GradScaling { kMeanField, kRaw };

enum class InitScheme {
  kIid,
  /// Particles come in pairs (θ, u), (θ, −u) so that f_m(p0, ·) ≡ 0.
  kSymmetric,
  /// kSymmetric, then each coordinate is shifted and rescaled so the sample
  /// mean is 0 and the sample variance equals the target variance exactly.
  kSymmetricMomentMatched,
};

/// Particle ensemble {(θ_j, u_j)}.
struct Ensemble {
  Matrix thetas;  // m × d
  std::vector<double> us;
  std::uint64_t generation = 0;

  std::size_t m() const { return us.size(); }
  std::size_t d() const { return thetas.cols(); }
  bool operator==(const Ensemble&) const = default;
};

/// θ_j ~ N(0, σ_θ² I_d), u_j ~ N(0, σ_u²), reproducible from hp.seed.
Ensemble init_ensemble(const HyperParams& hp, InitScheme scheme = InitScheme::kIid);

/// (α/m) Σ_j u_j h̃(θ_j⊤x). Throws std::invalid_argument on dimension mismatch.
double forward(const Ensemble& e, const HyperParams& hp, std::span<const double> x);

/// (1/n) Σ_i (f(x_i) − y_i)². Throws on an empty dataset or dimension mismatch.
double loss(const Ensemble& e, const HyperParams& hp, const Dataset& ds);

/// (λ/m) Σ_j (u_j²/(2σ_u²) + ‖θ_j‖²/(2σ_θ²))
double regularizer(const Ensemble& e, const HyperParams& hp);

/// loss + regularizer
double objective(const Ensemble& e, const HyperParams& hp, const Dataset& ds);

struct Gradients {
  Matrix dtheta;  // m × d
  std::vector<double> du;
};

/// Evaluates the network on a whole dataset, caching per-(particle, point)
/// activation values so the gradient pass can reuse them. Work is split into
/// fixed particle blocks; sums over particles are combined in block order.
class BatchEvaluator {
 public:
  BatchEvaluator(const HyperParams& hp, const Dataset& ds, Executor* executor = nullptr);

  /// f(x_i) for every data point.
  const std::vector<double>& predict(const Ensemble& e);

  /// Gradients given residuals r_i = f(x_i) − y_i. Must follow predict() on
  /// the same ensemble.
  ///   du_j = 2α·mean_i[r_i h̃(θ_j⊤x_i)] + λu_j/σ_u²
  ///   dθ_j = 2α·mean_i[r_i u_j h̃'(θ_j⊤x_i) x_i] + λθ_j/σ_θ²
  /// These are m·∇Q̂; kRaw divides by m.
  void gradients(const Ensemble& e, std::span<const double> residual,
                 GradScaling scaling, Gradients& out);

  const HyperParams& hyper() const { return hp_; }
  const Dataset& dataset() const { return ds_; }

 private:
  const HyperParams& hp_;
  const Dataset& ds_;
  Executor* executor_;
  std::vector<double> h_;      // m × n, row per particle
  std::vector<double> slope_;  // m × n
  std::vector<double> partial_;
  std::vector<double> f_;
};

/// Convenience wrapper: predict, form residuals, return the gradients.
Gradients grads(const Ensemble& e, const HyperParams& hp, const Dataset& ds,
                GradScaling scaling = GradScaling::kMeanField);

/// Little-endian f64 stream: m, d, then θ rows, then u values.
void write_ensemble_binary(const Ensemble& e, const std::filesystem::path& path);
Ensemble read_ensemble_binary(const std::filesystem::path& path);

/// Columns theta0..theta{d-1},u with provenance comments.
void write_ensemble_csv(const Ensemble& e, const std::filesystem::path& path,
                        const ArtifactHeader& header);

}  // namespace mflab
