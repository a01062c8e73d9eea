#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mflab/activation.hpp"
#include "mflab/io.hpp"
#include "mflab/linalg.hpp"

namespace mflab {

enum class LabelMode { kRademacher, kTeacher };

/// n labelled inputs with ‖x_i‖₂ <= 1.
struct Dataset {
  Matrix inputs;  // n × d
  std::vector<double> labels;
  std::uint64_t seed = 0;
  std::string mode;
  /// Fraction of teacher labels clipped into [-1, 1] (classification only).
  double clip_rate = 0.0;

  std::size_t n() const { return inputs.rows(); }
  std::size_t d() const { return inputs.cols(); }
  std::span<const double> x(std::size_t i) const { return inputs.row(i); }
};

/// Gaussian parameter distribution N(mean, diag(σ_θ²·1_d, σ_u²)). The mean is
/// laid out θ-block first, then u.
struct GaussianTeacher {
  std::vector<double> mean;
  double sigma_theta = 1.0;
  double sigma_u = 1.0;

  std::size_t d() const { return mean.size() - 1; }
  double mean_u() const { return mean.back(); }
  std::span<const double> mean_theta() const { return {mean.data(), d()}; }
};

/// How a teacher turns into dataset labels.
struct TeacherLabeling {
  GaussianTeacher teacher;
  Activation activation;
  /// Clip labels into [-1, 1] and reject ties at zero.
  bool classification = true;
};

struct SyntheticOptions {
  /// Resample inputs until no pair is parallel (|cos| <= 0.999).
  bool distinct = false;
  /// Required when mode == kTeacher.
  const TeacherLabeling* teacher = nullptr;
};

/// Inputs uniform in the unit ball (direction uniform on the sphere, radius
/// U^{1/d}); labels Rademacher or teacher-generated.
/// Throws std::invalid_argument on n == 0, d == 0, a missing teacher in
/// teacher mode, or (classification) a label that is exactly zero.
Dataset make_synthetic(std::size_t n, std::size_t d, std::uint64_t seed,
                       LabelMode mode, const SyntheticOptions& options = {});

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// E_{p_true}[u h̃(θ⊤x)] by Monte Carlo (mc_samples >= 10⁴). For the identity
/// activation the closed form μ_u·(μ_θ⊤x) is returned with zero error.
Estimate teacher_label(const GaussianTeacher& t, Activation act,
                       std::span<const double> x, std::size_t mc_samples,
                       std::uint64_t seed);

/// Same expectation reduced to a one-dimensional Gaussian integral
/// μ_u·E[h̃(μ_θ⊤x + σ_θ‖x‖Z)] and evaluated by composite Simpson quadrature.
double teacher_label_quadrature(const GaussianTeacher& t, Activation act,
                                std::span<const double> x);

/// exp(μ⊤Σ₀⁻¹μ) − 1. Throws std::invalid_argument if the teacher's scales
/// differ from the initialization's.
double chi2_to_init(const GaussianTeacher& t, double sigma_u, double sigma_theta);

/// μ⊤Σ₀⁻¹μ / 2, same precondition.
double kl_to_init(const GaussianTeacher& t, double sigma_u, double sigma_theta);

/// Header `x0,...,x{d-1},y`, preceded by provenance comments.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path,
                       const ArtifactHeader& header);

/// Parses the CSV written above. Rows with ‖x‖₂ > 1 are rejected with their
/// line number.
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace mflab
