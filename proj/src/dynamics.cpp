#include "mflab/dynamics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mflab/metrics.hpp"
#include "mflab/ntk_flow.hpp"
#include "mflab/rng.hpp"

namespace mflab {

namespace {

constexpr double kDivergenceBox = 1e8;

}  // namespace

double noise_std(const HyperParams& hp, NoiseConvention convention) {
  if (hp.lambda == 0.0) return 0.0;
  switch (convention) {
    case NoiseConvention::kStdSqrt2Eta: return std::sqrt(2.0 * hp.lambda * hp.eta);
    case NoiseConvention::kVarianceLiteral:
      return std::sqrt(hp.lambda) * std::pow(2.0 * hp.eta, 0.25);
  }
  return 0.0;
}

DivergedRun::DivergedRun(std::uint64_t step, const std::string& what)
    : std::runtime_error(fmt::format("run diverged at step {}: {}", step, what)),
      step_(step) {}

Stepper::Stepper(const HyperParams& hp, const Dataset& ds, StepOptions options,
                 Executor* executor)
    : hp_(hp), ds_(ds), options_(options), executor_(executor),
      eval_(hp, ds, executor) {
  hp.validate();
}

void Stepper::step(Ensemble& e, std::uint64_t step_index) {
  f_ = eval_.predict(e);
  residual_.resize(f_.size());
  for (std::size_t i = 0; i < f_.size(); ++i) residual_[i] = f_[i] - ds_.labels[i];
  eval_.gradients(e, residual_, options_.scaling, g_);

  const std::size_t m = e.m();
  const std::size_t d = e.d();
  const double eta = hp_.eta;
  const double sd = noise_std(hp_, options_.noise);
  std::vector<char> bad(block_count(m), 0);

  auto work = [&](std::size_t b) {
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      auto th = e.thetas.row(j);
      const auto gth = g_.dtheta.row(j);
      double sq = 0.0;
      if (sd > 0.0) {
        Stream rng(hp_.seed, StreamDomain::kNoise, step_index, j);
        for (std::size_t c = 0; c < d; ++c) {
          th[c] += -eta * gth[c] + sd * rng.normal();
          sq += th[c] * th[c];
        }
        e.us[j] += -eta * g_.du[j] + sd * rng.normal();
      } else {
        for (std::size_t c = 0; c < d; ++c) {
          th[c] -= eta * gth[c];
          sq += th[c] * th[c];
        }
        e.us[j] -= eta * g_.du[j];
      }
      // NaN fails both comparisons, so test the negation.
      if (!(std::abs(e.us[j]) <= kDivergenceBox) || !(sq <= kDivergenceBox * kDivergenceBox))
        bad[b] = 1;
    }
  };
  const std::size_t blocks = block_count(m);
  if (executor_ != nullptr)
    executor_->run(blocks, work);
  else
    for (std::size_t b = 0; b < blocks; ++b) work(b);
  ++e.generation;

  for (std::size_t b = 0; b < blocks; ++b) {
    if (!bad[b]) continue;
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      if (!std::isfinite(g_.du[j]) || !std::isfinite(norm2(g_.dtheta.row(j))))
        throw DivergedRun(step_index, fmt::format("non-finite gradient for particle {}", j));
    }
    throw DivergedRun(step_index, fmt::format("a particle in block {} left the box "
                                              "|u|, ||theta|| <= 1e8",
                                              b));
  }
}

Ensemble step(const Ensemble& e, const HyperParams& hp, const Dataset& ds,
              std::uint64_t step_index, StepOptions options) {
  Ensemble next = e;
  Stepper stepper(hp, ds, options);
  stepper.step(next, step_index);
  return next;
}

void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path,
                          const ArtifactHeader& header) {
  std::string out = csv_header_comment(header);
  out +=
      "step,t,loss,objective,kl_surrogate,w2_estimate,kernel_drift_inf,residual_gap,"
      "energy,reg_drift_norm\n";
  for (const auto& r : log.records) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.step, format_double(r.t),
                       format_double(r.loss), format_double(r.objective),
                       format_double(r.kl_surrogate), format_double(r.w2_estimate),
                       format_double(r.kernel_drift_inf), format_double(r.residual_gap),
                       format_double(r.energy), format_double(r.reg_drift_norm));
  }
  write_text_file(path, out);
}

TrainResult train(const HyperParams& hp, const Dataset& ds, const Schedule& schedule,
                  const TrainOptions& options) {
  hp.validate();
  if (schedule.steps == 0) throw std::invalid_argument("train: steps must be at least 1");
  if (schedule.record_every == 0)
    throw std::invalid_argument("train: record_every must be at least 1");
  if (ds.d() != hp.d)
    throw std::invalid_argument("train: dataset dimension does not match hyperparameters");

  Executor* executor = options.executor;
  const RecorderOptions& rec = options.recorders;
  TrainResult result;
  Ensemble e = init_ensemble(hp, options.init);
  result.initial = e;

  // Time advanced per step by the continuous-time flow this run discretizes.
  const double flow_dt = options.step.scaling == GradScaling::kRaw
                             ? hp.eta / static_cast<double>(e.m())
                             : hp.eta;

  Matrix reference;
  if (rec.w2) {
    reference = Matrix(e.m(), e.d() + 1);
    for (std::size_t j = 0; j < e.m(); ++j) {
      Stream rng(hp.seed, StreamDomain::kReference, j, 1);
      for (std::size_t c = 0; c < e.d(); ++c) reference(j, c) = hp.sigma_theta * rng.normal();
      reference(j, e.d()) = hp.sigma_u * rng.normal();
    }
  }

  BatchEvaluator record_eval(hp, ds, executor);
  std::vector<double> f_euler = record_eval.predict(e);
  std::optional<NtkFlow> flow;
  if (rec.kernel || rec.ntk) {
    result.h0 = gram_all(e, ds, hp.activation, executor).h;
    result.spectrum0 = spectrum(*result.h0);
    if (rec.ntk) flow.emplace(*result.h0, ds.labels, hp.alpha, f_euler);
  }
  const double euler_coeff =
      2.0 * hp.alpha * hp.alpha / static_cast<double>(ds.n()) * flow_dt;

  auto record = [&](std::uint64_t s) {
    TrajectoryRecord r;
    r.step = s;
    r.t = static_cast<double>(s) * flow_dt;
    const auto& f = record_eval.predict(e);
    double sq = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i) sq += (f[i] - ds.labels[i]) * (f[i] - ds.labels[i]);
    r.loss = sq / static_cast<double>(ds.n());
    r.objective = r.loss + regularizer(e, hp);
    r.kl_surrogate = e.m() >= 2 ? kl_gaussian_surrogate(e, hp) : NAN;
    r.energy = hp.lambda == 0.0 ? r.loss : r.loss + hp.lambda * r.kl_surrogate;
    r.w2_estimate = rec.w2 ? w2_sliced_estimate(ensemble_points(e), reference,
                                                rec.w2_projections, hp.seed, executor)
                                 .value
                           : NAN;
    r.kernel_drift_inf =
        rec.kernel ? kernel_drift(gram_all(e, ds, hp.activation, executor).h, *result.h0)
                         .inf_inf
                   : NAN;
    if (rec.ntk) {
      const std::vector<double> ref = rec.ntk_reference == NtkReference::kEulerMatched
                                          ? f_euler
                                          : flow->closed_form(static_cast<double>(s) * flow_dt);
      r.residual_gap = residual_gap(f, ref);
    } else {
      r.residual_gap = NAN;
    }
    if (rec.reg_drift) {
      double mx = 0.0;
      for (double v : reg_drift(e, hp, ds)) mx = std::max(mx, std::abs(v));
      r.reg_drift_norm = mx;
    } else {
      r.reg_drift_norm = NAN;
    }
    result.log.records.push_back(r);
    for (const auto& obs : options.observers) obs(s, e);
  };

  Stepper stepper(hp, ds, options.step, executor);
  record(0);
  for (std::size_t s = 0; s < schedule.steps; ++s) {
    stepper.step(e, s);
    if (rec.ntk && rec.ntk_reference == NtkReference::kEulerMatched) {
      std::vector<double> r(ds.n());
      for (std::size_t i = 0; i < ds.n(); ++i) r[i] = f_euler[i] - ds.labels[i];
      const auto hr = multiply(result.h0->entries, r);
      for (std::size_t i = 0; i < ds.n(); ++i) f_euler[i] -= euler_coeff * hr[i];
    }
    const std::size_t done = s + 1;
    if (done % schedule.record_every == 0 || done == schedule.steps) record(done);
  }

  result.final_predictions = record_eval.predict(e);
  if (rec.ntk)
    result.final_ntk = rec.ntk_reference == NtkReference::kEulerMatched
                           ? f_euler
                           : flow->closed_form(static_cast<double>(schedule.steps) * flow_dt);
  result.final_ensemble = std::move(e);
  return result;
}

StationarityReport stationarity_diagnostic(const TrajectoryLog& log) {
  const auto& recs = log.records;
  if (recs.size() < 20)
    throw std::invalid_argument("stationarity_diagnostic: need at least 20 records");
  const std::size_t tail = std::max<std::size_t>(1, recs.size() / 10);
  std::vector<double> last;
  for (std::size_t k = recs.size() - tail; k < recs.size(); ++k) last.push_back(recs[k].loss);
  std::sort(last.begin(), last.end());
  const double median = last.size() % 2
                            ? last[last.size() / 2]
                            : 0.5 * (last[last.size() / 2 - 1] + last[last.size() / 2]);
  StationarityReport out;
  out.plateau = median;
  out.entry_step = recs.back().step;
  for (const auto& r : recs) {
    if (r.loss <= 2.0 * median) {
      out.entry_step = r.step;
      break;
    }
  }
  return out;
}

}  // namespace mflab
