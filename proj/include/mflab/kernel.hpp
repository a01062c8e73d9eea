#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mflab/data.hpp"
#include "mflab/io.hpp"
#include "mflab/linalg.hpp"
#include "mflab/model.hpp"

namespace mflab {

/// Symmetric n×n NTK Gram matrix evaluated under an empirical particle
/// distribution.
struct GramMatrix {
  Matrix entries;
  std::string source;  // "init", "step 120", ...
  std::size_t m_used = 0;

  std::size_t n() const { return entries.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return entries(i, j); }
};

/// Wraps raw entries, replacing them by (A + A⊤)/2.
GramMatrix make_gram(Matrix entries, std::string source, std::size_t m_used);

/// H1_ij = (1/m) Σ_k u_k² h̃'(θ_k⊤x_i) h̃'(θ_k⊤x_j) ⟨x_i, x_j⟩
GramMatrix gram_h1(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor = nullptr);
/// H2_ij = (1/m) Σ_k h̃(θ_k⊤x_i) h̃(θ_k⊤x_j)
GramMatrix gram_h2(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor = nullptr);

struct GramParts {
  GramMatrix h1;
  GramMatrix h2;
  GramMatrix h;  // h1 + h2 entrywise
};

/// Assembles H1, H2 and H = H1 + H2 from one pass over the particles.
GramParts gram_all(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor = nullptr, std::string source = "init");

/// trace(H) from the diagonal alone, O(nm). Bounds λ_max from above for
/// step-size checks when n is too large for an eigensolve.
double gram_trace(const Ensemble& e, const Dataset& ds, Activation act);

/// Smallest eigenvalue by cyclic Jacobi. Requires n <= 2048.
double min_eigenvalue(const GramMatrix& g);

struct GramSpectrum {
  double lambda_min = 0.0;  // Λ
  double lambda_max = 0.0;
  double trace = 0.0;
  double lambda0 = 0.0;     // √(Λ/n); 0 when the assumption fails
  bool positive_definite = false;
};

/// Λ > 1e-10·trace/n counts as positive definite. Degenerate inputs
/// (duplicated or parallel points) fail this and get lambda0 = 0.
GramSpectrum spectrum(const GramMatrix& g);

struct KernelDrift {
  double inf_inf = 0.0;         // max_ij |H_t − H_0|
  double spectral_upper = 0.0;  // n · inf_inf
};

/// Throws std::invalid_argument on a size mismatch.
KernelDrift kernel_drift(const GramMatrix& h_t, const GramMatrix& h_0);

/// I_i = (1/m) Σ_k u_k [h̃/σ_u² + h̃'·(θ_k⊤x_i)/σ_θ² − h̃''·‖x_i‖²]
std::vector<double> reg_drift(const Ensemble& e, const HyperParams& hp,
                              const Dataset& ds);

/// Row-major dump with provenance comments.
void write_gram_csv(const GramMatrix& g, const std::filesystem::path& path,
                    const ArtifactHeader& header);
/// {"n", "lambda_min", "trace"} plus provenance.
std::string gram_summary_json(const GramMatrix& g, const ArtifactHeader& header);

}  // namespace mflab
