#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mflab/activation.hpp"
#include "mflab/config.hpp"
#include "mflab/dynamics.hpp"
#include "mflab/metrics.hpp"
#include "mflab/theory.hpp"

namespace mflab {

/// Training set for one run of a config: synthetic inputs from `seed`,
/// Rademacher or teacher labels per cfg.data.
Dataset make_dataset(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed);

/// Spectrum of H(p0) for the config's initialization at `seed` (α-independent).
/// Throws AssumptionViolated when Λ <= lambda_min_rel·trace/n.
GramSpectrum init_spectrum(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed,
                           Executor* executor = nullptr);

/// Steps for the schedule: ceil(time_constants / (eta_alpha2·λ0²)) when
/// time_constants > 0, else schedule.steps.
std::size_t horizon_steps(const ExperimentConfig& cfg, double lambda0);

struct EnergyCheck {
  double max_increase = 0.0;  // largest E[k+1] − E[k] over consecutive records
  double tolerance = 0.0;
  bool pass = true;
};

/// Compares consecutive energy records against tolerance = rel·L(p0).
EnergyCheck energy_check(const TrajectoryLog& log, double rel);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;  // NaN for two points
  double intercept = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares of log y on log x. Needs at least two points with
/// x, y > 0.
SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

// ---------------------------------------------------------------- train

struct TrainReport {
  TrainResult result;
  std::size_t steps = 0;
  double eta = 0.0;
  double l0 = 0.0;
  GramSpectrum spectrum0;
  TheoryConstants constants;
  /// Condition (8): α >= alpha_min.
  bool condition_holds = false;
  /// Every recorded loss is below the full loss bound. Only meaningful when
  /// the condition holds; reported either way.
  bool loss_bound_respected = false;
  double kl_bound = 0.0;
  double max_kl = 0.0;
  bool kl_bound_respected = false;
  /// max_t L(p_t) / (2·exp(−2α²λ0²t)·L(p0)); the envelope check passes when
  /// this stays below tolerances.loss_envelope.
  double loss_envelope_ratio = 0.0;
  bool loss_envelope_pass = false;
  EnergyCheck energy;
};

/// Writes trajectory.csv, train.json, loss.svg and ensemble.bin into `out`.
/// Throws AssumptionViolated for a singular H(p0); propagates DivergedRun.
TrainReport run_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      Executor* executor = nullptr);

// ---------------------------------------------------------------- sweep

struct SweepCell {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t steps = 0;
  double lambda0 = 0.0;
  double kernel_drift_inf = 0.0;
  double residual_gap = 0.0;
  double kl_surrogate = 0.0;
  double final_loss = 0.0;
  EnergyCheck energy;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // α-major, then seed
  std::vector<double> alphas;
  std::vector<double> median_kernel_drift;
  std::vector<double> median_residual_gap;
  std::vector<double> median_kl;
  SlopeFit kernel_drift;
  SlopeFit residual_gap;
  SlopeFit kl_surrogate;
  /// Least-squares constants for c·α⁻¹λ0⁻² and c·α⁻²λ0⁻⁸.
  double kernel_drift_constant = 0.0;
  double residual_gap_constant = 0.0;
  bool energy_all_pass = true;
};

/// Trains every (α, seed) cell to the horizon time_constants/(α²λ0²), with the
/// dataset and initial ensemble fixed per seed. Failed cells are recorded and
/// skipped. Writes sweep.csv, sweep.json, per-run trajectories under runs/
/// and SVG plots.
SweepReport run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      Executor* executor = nullptr);

// ---------------------------------------------------------------- generalize

struct GeneralizeCell {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double eta = 0.0;
  double train_loss = 0.0;
  double train_ramp = 0.0;
  double train_zero_one = 0.0;
  double test_ramp = 0.0;
  double test_zero_one = 0.0;
  double clip_rate = 0.0;
};

struct GeneralizeRow {
  std::size_t n = 0;
  double median_train_zero_one = 0.0;
  double median_test_zero_one = 0.0;
  double median_test_ramp = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  bool b2_clamped = false;
  Chi2Bound chi2_bound;
  std::optional<KlTeacherBound> kl_bound;  // needs a bounded activation
  /// Median test 0-1 error <= the χ² bound; asserted only under its premises.
  bool chi2_bound_holds = false;
};

struct GeneralizeReport {
  std::vector<GeneralizeCell> cells;
  std::vector<GeneralizeRow> rows;
  double chi2 = 0.0;
  double kl = 0.0;
  bool strictly_decreasing = false;  // median test 0-1 error across the n grid
};

/// Requires teacher labels. Writes generalize.csv, generalize.json and an SVG.
/// Throws std::invalid_argument for degenerate teacher labels.
GeneralizeReport run_generalize(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                Executor* executor = nullptr);

// ---------------------------------------------------------------- audit

struct TalagrandSweep {
  std::size_t samples = 0;
  std::size_t failures = 0;
  double min_margin = 0.0;  // min of rhs − lhs
  bool pass = true;
};

struct AuditSummary {
  TalagrandSweep talagrand;
  TailBoundReport tail;
  bool paper_tail_violated_at_zero = false;
  std::vector<AuditReport> activations;
  bool pass = true;
};

/// Random diagonal Gaussians in dimension d+1 against p0.
TalagrandSweep talagrand_sweep(const HyperParams& hp, std::size_t samples, std::uint64_t seed);

/// Writes audits.json.
AuditSummary run_audit(const ExperimentConfig& cfg, const std::filesystem::path& out);

// ---------------------------------------------------------------- bounds

/// Evaluates every constant and bound for the config at its measured Λ and
/// L(p0). Writes bounds.json and returns its text.
std::string run_bounds(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       Executor* executor = nullptr);

}  // namespace mflab
