#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mflab/dynamics.hpp"

namespace mflab {

/// Raised for malformed configs; the message names the offending JSON path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { kTrain, kSweep, kGeneralize, kAudit, kBounds };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

struct ModelConfig {
  std::string activation = "tanh";
  double alpha = 1.0;
  double lambda = 1e-3;
  double sigma_u = 1.0;
  double sigma_theta = 1.0;
  std::size_t m = 4096;
  /// Step size is eta_alpha2 / α², so effective time per step is α-independent.
  double eta_alpha2 = 0.2;
  InitScheme init = InitScheme::kSymmetricMomentMatched;
  GradScaling grad_scaling = GradScaling::kMeanField;
  NoiseConvention noise = NoiseConvention::kStdSqrt2Eta;

  bool operator==(const ModelConfig&) const = default;
};

struct DataConfig {
  std::size_t n = 8;
  std::size_t d = 4;
  LabelMode labels = LabelMode::kRademacher;
  bool distinct = false;
  /// Teacher mean: θ block then u. Only read in teacher mode.
  std::vector<double> teacher_mean_theta;
  double teacher_mean_u = 0.0;
  bool classification = true;

  bool operator==(const DataConfig&) const = default;
};

struct ScheduleConfig {
  /// When positive, the horizon is time_constants / (α²λ0²) with λ0 measured
  /// at initialization, overriding `steps`.
  double time_constants = 1.0;
  std::size_t steps = 1000;
  /// Number of records along the run (plus the initial one).
  std::size_t records = 100;

  bool operator==(const ScheduleConfig&) const = default;
};

struct RecorderConfig {
  bool w2 = true;
  std::size_t w2_projections = 64;
  bool kernel = true;
  bool ntk = true;
  NtkReference ntk_reference = NtkReference::kEulerMatched;
  bool reg_drift = true;

  bool operator==(const RecorderConfig&) const = default;
};

struct SweepConfig {
  std::vector<double> alphas = {2.0, 8.0, 32.0, 128.0};
  std::size_t seeds = 5;

  bool operator==(const SweepConfig&) const = default;
};

struct GeneralizeConfig {
  std::vector<std::size_t> n_grid = {50, 200, 800};
  std::size_t seeds = 5;
  std::size_t test_n = 2000;
  std::size_t steps = 2000;
  double delta = 0.05;

  bool operator==(const GeneralizeConfig&) const = default;
};

struct AuditConfig {
  std::size_t talagrand_samples = 10000;
  std::size_t tail_points = 100;
  double tail_r_max = 10.0;  // in units of σ_u
  std::size_t tail_mc_samples = 1000000;
  std::size_t activation_grid = 100001;

  bool operator==(const AuditConfig&) const = default;
};

struct BoundsConfig {
  std::vector<double> times = {0.0, 1.0, 10.0, 100.0};
  double delta = 0.05;

  bool operator==(const BoundsConfig&) const = default;
};

struct Tolerances {
  /// Relative Λ threshold (Λ > lambda_min_rel·trace/n) below which the
  /// kernel is treated as singular.
  double lambda_min_rel = 1e-10;
  /// Allowed energy increase between records, relative to L(p0).
  double energy_rel = 1e-3;
  /// Slack factor on the linear-convergence envelope.
  double loss_envelope = 1.5;

  bool operator==(const Tolerances&) const = default;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kTrain;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out_dir = "out";
  ModelConfig model;
  DataConfig data;
  ScheduleConfig schedule;
  RecorderConfig recorders;
  SweepConfig sweep;
  GeneralizeConfig generalize;
  AuditConfig audit;
  BoundsConfig bounds;
  Tolerances tolerances;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses JSON text. Missing keys keep their defaults; unknown keys and type
/// errors throw ConfigError with the JSON path, e.g. "/model/alpah".
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every field; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// FNV-1a of the canonical JSON without `workers` and `out_dir`, so outputs
/// do not depend on where or how wide a run was.
std::string config_hash(const ExperimentConfig& cfg);

/// HyperParams for one run at the given α and seed.
HyperParams hyper_params(const ExperimentConfig& cfg, double alpha, std::uint64_t seed);

}  // namespace mflab
