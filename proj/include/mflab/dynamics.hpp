#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mflab/data.hpp"
#include "mflab/io.hpp"
#include "mflab/kernel.hpp"
#include "mflab/model.hpp"
#include "mflab/parallel.hpp"

namespace mflab {

/// How the Gaussian noise level of a step is read.
enum class NoiseConvention {
  /// ζ has standard deviation √(2η): per-step noise std √(2λη).
  kStdSqrt2Eta,
  /// ζ has variance √(2η): per-step noise std √λ·(2η)^{1/4}.
  kVarianceLiteral,
};

struct StepOptions {
  GradScaling scaling = GradScaling::kMeanField;
  NoiseConvention noise = NoiseConvention::kStdSqrt2Eta;
};

/// Per-coordinate standard deviation of the noise added in one step.
double noise_std(const HyperParams& hp, NoiseConvention convention);

/// Raised when a gradient is non-finite or a particle leaves the 1e8 box.
class DivergedRun : public std::runtime_error {
 public:
  DivergedRun(std::uint64_t step, const std::string& what);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// Noisy gradient descent on one (dataset, hyperparameter) pair. Holds the
/// evaluation scratch space so repeated steps do not reallocate.
class Stepper {
 public:
  Stepper(const HyperParams& hp, const Dataset& ds, StepOptions options = {},
          Executor* executor = nullptr);

  /// In place:
  ///   u ← u − η·du + s·ξ_u,  θ ← θ − η·dθ + s·ξ_θ,  s = noise_std(hp)
  /// with ξ drawn from the stream keyed by (seed, step_index, particle).
  /// Throws DivergedRun.
  void step(Ensemble& e, std::uint64_t step_index);

  /// Network outputs on the dataset as evaluated at the start of the last step.
  const std::vector<double>& last_predictions() const { return f_; }

 private:
  const HyperParams& hp_;
  const Dataset& ds_;
  StepOptions options_;
  Executor* executor_;
  BatchEvaluator eval_;
  Gradients g_;
  std::vector<double> f_;
  std::vector<double> residual_;
};

/// Functional form of a single step.
Ensemble step(const Ensemble& e, const HyperParams& hp, const Dataset& ds,
              std::uint64_t step_index, StepOptions options = {});

struct TrajectoryRecord {
  std::uint64_t step = 0;
  double t = 0.0;  // step·η, or step·η/m under raw gradient scaling
  double loss = 0.0;
  double objective = 0.0;
  double kl_surrogate = 0.0;
  double w2_estimate = 0.0;
  double kernel_drift_inf = 0.0;
  double residual_gap = 0.0;
  double energy = 0.0;
  double reg_drift_norm = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
};

/// Column order: step,t,loss,objective,kl_surrogate,w2_estimate,
/// kernel_drift_inf,residual_gap,energy,reg_drift_norm. Metrics that were not
/// recorded are written as nan.
void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path,
                          const ArtifactHeader& header);

struct Schedule {
  std::size_t steps = 1;
  std::size_t record_every = 1;
};

/// Which NTK trajectory the residual gap is measured against.
enum class NtkReference {
  kClosedForm,    // exact ODE solution at the record time
  kEulerMatched,  // forward Euler of the ODE with the training step η
};

struct RecorderOptions {
  bool w2 = true;
  std::size_t w2_projections = 64;
  /// Needs the O(n²m) Gram assembly at every record.
  bool kernel = true;
  bool ntk = true;
  NtkReference ntk_reference = NtkReference::kClosedForm;
  bool reg_drift = true;
};

/// Observer invoked at every record with the step index and ensemble.
using Observer = std::function<void(std::uint64_t, const Ensemble&)>;

struct TrainOptions {
  InitScheme init = InitScheme::kIid;
  StepOptions step;
  RecorderOptions recorders;
  std::vector<Observer> observers;
  Executor* executor = nullptr;
};

struct TrainResult {
  TrajectoryLog log;
  Ensemble initial;
  Ensemble final_ensemble;
  /// Filled when the kernel or ntk recorder is on.
  std::optional<GramMatrix> h0;
  std::optional<GramSpectrum> spectrum0;
  std::vector<double> final_predictions;
  std::vector<double> final_ntk;  // empty unless the ntk recorder is on
};

/// Runs `schedule.steps` steps from a fresh init_ensemble(hp), recording at
/// step 0, every `record_every` steps, and at the last step.
/// Throws std::invalid_argument for steps == 0 and propagates DivergedRun.
TrainResult train(const HyperParams& hp, const Dataset& ds, const Schedule& schedule,
                  const TrainOptions& options = {});

struct StationarityReport {
  double plateau = 0.0;          // median loss over the last 10% of records
  std::uint64_t entry_step = 0;  // first step with loss <= 2·plateau
};

/// Requires at least 20 records.
StationarityReport stationarity_diagnostic(const TrajectoryLog& log);

}  // namespace mflab
