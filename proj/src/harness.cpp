#include "mflab/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "mflab/kernel.hpp"
#include "mflab/plot.hpp"
#include "mflab/rng.hpp"

namespace mflab {

using Json = nlohmann::ordered_json;

namespace {

/// Test sets use a seed far from every training seed.
constexpr std::uint64_t kTestSeedSalt = 0x5eed7e57ull << 20;

Json header_json(const ExperimentConfig& cfg) {
  Json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["experiment"] = to_string(cfg.experiment);
  return j;
}

ArtifactHeader header(const ExperimentConfig& cfg) { return {config_hash(cfg), cfg.seed}; }

void write_json(const Json& j, const std::filesystem::path& path) {
  write_text_file(path, j.dump(2) + "\n");
}

Json slope_json(const SlopeFit& f, double predicted) {
  return {{"slope", f.slope},
          {"std_error", f.std_error},
          {"intercept", f.intercept},
          {"points", f.points},
          {"predicted", predicted}};
}

TrainOptions train_options(const ExperimentConfig& cfg, Executor* executor) {
  TrainOptions o;
  o.init = cfg.model.init;
  o.step.scaling = cfg.model.grad_scaling;
  o.step.noise = cfg.model.noise;
  o.recorders.w2 = cfg.recorders.w2;
  o.recorders.w2_projections = cfg.recorders.w2_projections;
  o.recorders.kernel = cfg.recorders.kernel;
  o.recorders.ntk = cfg.recorders.ntk;
  o.recorders.ntk_reference = cfg.recorders.ntk_reference;
  o.recorders.reg_drift = cfg.recorders.reg_drift;
  o.executor = executor;
  return o;
}

Schedule schedule_for(const ExperimentConfig& cfg, std::size_t steps) {
  return {steps, std::max<std::size_t>(1, steps / cfg.schedule.records)};
}

/// Runs fn(i) for every job, concurrently when a multi-worker executor is
/// given. Jobs write to disjoint slots, so the result is order-independent.
template <typename Fn>
void for_each_job(std::size_t jobs, Executor* executor, Fn&& fn) {
  if (executor != nullptr && executor->workers() > 1)
    executor->run(jobs, [&](std::size_t i) { fn(i, nullptr); });
  else
    for (std::size_t i = 0; i < jobs; ++i) fn(i, executor);
}

std::vector<double> column(const TrajectoryLog& log, double TrajectoryRecord::*field) {
  std::vector<double> out;
  out.reserve(log.records.size());
  for (const auto& r : log.records) out.push_back(r.*field);
  return out;
}

double sign_of(double y) { return y < 0.0 ? -1.0 : 1.0; }

}  // namespace

Dataset make_dataset(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed) {
  SyntheticOptions opt;
  opt.distinct = cfg.data.distinct;
  if (cfg.data.labels == LabelMode::kRademacher)
    return make_synthetic(n, cfg.data.d, seed, LabelMode::kRademacher, opt);
  TeacherLabeling tl;
  tl.teacher.mean = cfg.data.teacher_mean_theta;
  tl.teacher.mean.push_back(cfg.data.teacher_mean_u);
  tl.teacher.sigma_theta = cfg.model.sigma_theta;
  tl.teacher.sigma_u = cfg.model.sigma_u;
  tl.activation = Activation::from_name(cfg.model.activation);
  tl.classification = cfg.data.classification;
  opt.teacher = &tl;
  return make_synthetic(n, cfg.data.d, seed, LabelMode::kTeacher, opt);
}

GramSpectrum init_spectrum(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed,
                           Executor* executor) {
  HyperParams hp = hyper_params(cfg, 1.0, seed);
  hp.n = ds.n();
  const Ensemble e = init_ensemble(hp, cfg.model.init);
  const GramSpectrum sp = spectrum(gram_all(e, ds, hp.activation, executor).h);
  const double floor = cfg.tolerances.lambda_min_rel * sp.trace / static_cast<double>(ds.n());
  if (!(sp.lambda_min > floor))
    throw AssumptionViolated(fmt::format(
        "smallest eigenvalue of H(p0) is {} (threshold {}); inputs are degenerate", sp.lambda_min,
        floor));
  return sp;
}

std::size_t horizon_steps(const ExperimentConfig& cfg, double lambda0) {
  if (cfg.schedule.time_constants <= 0.0) return cfg.schedule.steps;
  const double steps =
      std::ceil(cfg.schedule.time_constants / (cfg.model.eta_alpha2 * lambda0 * lambda0));
  return std::max<std::size_t>(1, static_cast<std::size_t>(steps));
}

EnergyCheck energy_check(const TrajectoryLog& log, double rel) {
  EnergyCheck out;
  if (log.records.empty()) return out;
  out.tolerance = rel * log.records.front().loss;
  out.max_increase = -INFINITY;
  for (std::size_t k = 1; k < log.records.size(); ++k) {
    const double inc = log.records[k].energy - log.records[k - 1].energy;
    out.max_increase = std::max(out.max_increase, inc);
  }
  if (log.records.size() < 2) out.max_increase = 0.0;
  // NaN energies fail the check.
  out.pass = out.max_increase <= out.tolerance;
  return out;
}

SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_loglog: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  const std::size_t n = lx.size();
  if (n < 2) throw std::invalid_argument("fit_loglog: need at least two positive points");
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_loglog: x values are all equal");
  SlopeFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ly[i] - f.intercept - f.slope * lx[i];
      ssr += r * r;
    }
    f.std_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  } else {
    f.std_error = NAN;
  }
  return f;
}

double median(std::vector<double> values) {
  if (values.empty()) return NAN;
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  return values.size() % 2 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

// ---------------------------------------------------------------- train

TrainReport run_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      Executor* executor) {
  const Dataset ds = make_dataset(cfg, cfg.data.n, cfg.seed);
  TrainReport rep;
  rep.spectrum0 = init_spectrum(cfg, ds, cfg.seed, executor);
  rep.steps = horizon_steps(cfg, rep.spectrum0.lambda0);
  const HyperParams hp = hyper_params(cfg, cfg.model.alpha, cfg.seed);
  rep.eta = hp.eta;
  rep.result = train(hp, ds, schedule_for(cfg, rep.steps), train_options(cfg, executor));
  const TrajectoryLog& log = rep.result.log;
  rep.l0 = log.records.front().loss;

  const GConstants g = constants(hp.activation);
  const double lambda0 = rep.spectrum0.lambda0;
  auto& c = rep.constants;
  c.a1 = const_a1(g, hp.sigma_u, hp.sigma_theta, hp.d);
  c.a2 = const_a2(g, hp.sigma_u, hp.sigma_theta, hp.d);
  const ClampedValue r = const_r(g, hp.sigma_u, hp.sigma_theta, hp.d, ds.n(), rep.spectrum0.lambda_min);
  c.r = r.value;
  c.r_clamped = r.clamped;
  c.lambda0 = lambda0;
  c.alpha_min =
      alpha_threshold(rep.l0, c.a1, c.a2, hp.lambda, lambda0, c.r, hp.sigma_u, hp.sigma_theta);
  c.b1 = const_b1(g, hp.sigma_u, hp.sigma_theta, hp.d, ds.n());
  rep.kl_bound = kl_bound(hp.alpha, hp.lambda, lambda0, c.a1, c.a2, rep.l0);
  if (rep.kl_bound > 0.0) {
    const ClampedValue b2 = const_b2(g, hp.sigma_u, hp.sigma_theta, rep.kl_bound);
    c.b2 = b2.value;
    c.b2_clamped = b2.clamped;
  }
  rep.condition_holds = hp.alpha >= c.alpha_min;

  const double rate = 2.0 * hp.alpha * hp.alpha * lambda0 * lambda0;
  rep.loss_bound_respected = true;
  rep.max_kl = 0.0;
  std::vector<double> ts, envelope, bound;
  for (const auto& rec : log.records) {
    const double lb = loss_bound(rec.t, hp.alpha, hp.lambda, lambda0, c.a1, rep.l0).value;
    rep.loss_bound_respected = rep.loss_bound_respected && rec.loss <= lb;
    // loss / (2e^{−rate·t}L0), formed in log space to avoid underflow
    const double ratio =
        rep.l0 > 0.0 ? std::exp(std::log(rec.loss / (2.0 * rep.l0)) + rate * rec.t) : 0.0;
    rep.loss_envelope_ratio = std::max(rep.loss_envelope_ratio, ratio);
    rep.max_kl = std::max(rep.max_kl, rec.kl_surrogate);
    ts.push_back(rec.t);
    envelope.push_back(2.0 * std::exp(-rate * rec.t) * rep.l0);
    bound.push_back(lb);
  }
  rep.loss_envelope_pass = rep.loss_envelope_ratio <= cfg.tolerances.loss_envelope;
  rep.kl_bound_respected = rep.max_kl <= rep.kl_bound;
  rep.energy = energy_check(log, cfg.tolerances.energy_rel);

  std::filesystem::create_directories(out);
  write_trajectory_csv(log, out / "trajectory.csv", header(cfg));
  write_ensemble_binary(rep.result.final_ensemble, out / "ensemble.bin");

  Json j = header_json(cfg);
  j["alpha"] = hp.alpha;
  j["lambda"] = hp.lambda;
  j["eta"] = hp.eta;
  j["steps"] = rep.steps;
  j["lambda_min"] = rep.spectrum0.lambda_min;
  j["lambda_max"] = rep.spectrum0.lambda_max;
  j["lambda0"] = lambda0;
  j["initial_loss"] = rep.l0;
  j["final_loss"] = log.records.back().loss;
  j["constants"] = {{"a1", c.a1},           {"a2", c.a2},         {"r", c.r},
                    {"r_clamped", c.r_clamped}, {"b1", c.b1},     {"b2", c.b2},
                    {"b2_clamped", c.b2_clamped}, {"alpha_min", c.alpha_min}};
  j["condition_holds"] = rep.condition_holds;
  j["loss_bound"] = {{"respected", rep.loss_bound_respected},
                     {"asserted", rep.condition_holds},
                     {"floor", loss_bound(0.0, hp.alpha, hp.lambda, lambda0, c.a1, rep.l0).floor}};
  j["kl_bound"] = {{"value", rep.kl_bound},
                   {"max_measured", rep.max_kl},
                   {"respected", rep.kl_bound_respected},
                   {"asserted", rep.condition_holds}};
  j["loss_envelope"] = {{"max_ratio", rep.loss_envelope_ratio},
                        {"tolerance", cfg.tolerances.loss_envelope},
                        {"pass", rep.loss_envelope_pass}};
  j["energy"] = {{"max_increase", rep.energy.max_increase},
                 {"tolerance", rep.energy.tolerance},
                 {"pass", rep.energy.pass}};
  write_json(j, out / "train.json");

  PlotSpec plot{fmt::format("training loss, alpha = {}", format_double(hp.alpha)), "t", "loss",
                false, true, {}};
  plot.series.push_back({"measured", ts, column(log, &TrajectoryRecord::loss)});
  plot.series.push_back({"2exp(-2a^2 l0^2 t) L0", ts, envelope, true});
  if (rep.condition_holds) plot.series.push_back({"loss bound", ts, bound, true});
  write_svg(plot, out / "loss.svg");
  return rep;
}

// ---------------------------------------------------------------- sweep

SweepReport run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      Executor* executor) {
  const std::size_t n_seeds = cfg.sweep.seeds;
  const std::size_t n_alpha = cfg.sweep.alphas.size();

  struct SeedSetup {
    Dataset ds;
    GramSpectrum spectrum;
    std::size_t steps = 0;
    std::string error;
  };
  std::vector<SeedSetup> setups(n_seeds);
  for (std::size_t k = 0; k < n_seeds; ++k) {
    const std::uint64_t seed = cfg.seed + k;
    try {
      setups[k].ds = make_dataset(cfg, cfg.data.n, seed);
      setups[k].spectrum = init_spectrum(cfg, setups[k].ds, seed, executor);
      setups[k].steps = horizon_steps(cfg, setups[k].spectrum.lambda0);
    } catch (const std::exception& e) {
      setups[k].error = e.what();
    }
  }

  SweepReport rep;
  rep.alphas = cfg.sweep.alphas;
  rep.cells.resize(n_alpha * n_seeds);
  std::vector<TrajectoryLog> first_logs(n_alpha);
  const std::filesystem::path runs = out / "runs";

  for_each_job(rep.cells.size(), executor, [&](std::size_t idx, Executor* inner) {
    const std::size_t a = idx / n_seeds;
    const std::size_t k = idx % n_seeds;
    SweepCell& cell = rep.cells[idx];
    cell.alpha = cfg.sweep.alphas[a];
    cell.seed = cfg.seed + k;
    const SeedSetup& setup = setups[k];
    if (!setup.error.empty()) {
      cell.error = setup.error;
      return;
    }
    cell.steps = setup.steps;
    cell.lambda0 = setup.spectrum.lambda0;
    try {
      const HyperParams hp = hyper_params(cfg, cell.alpha, cell.seed);
      const TrainResult res =
          train(hp, setup.ds, schedule_for(cfg, setup.steps), train_options(cfg, inner));
      const TrajectoryRecord& last = res.log.records.back();
      cell.kernel_drift_inf = last.kernel_drift_inf;
      cell.residual_gap = last.residual_gap;
      cell.kl_surrogate = last.kl_surrogate;
      cell.final_loss = last.loss;
      cell.energy = energy_check(res.log, cfg.tolerances.energy_rel);
      cell.ok = true;
      write_trajectory_csv(res.log,
                           runs / fmt::format("trajectory_a{}_s{}.csv", format_double(cell.alpha),
                                              cell.seed),
                           {config_hash(cfg), cell.seed});
      if (k == 0) first_logs[a] = res.log;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  std::vector<double> kd_meas, kd_shape, gap_meas, gap_shape;
  for (std::size_t a = 0; a < n_alpha; ++a) {
    std::vector<double> kd, gap, kl;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const SweepCell& cell = rep.cells[a * n_seeds + k];
      if (!cell.ok) continue;
      kd.push_back(cell.kernel_drift_inf);
      gap.push_back(cell.residual_gap);
      kl.push_back(cell.kl_surrogate);
      rep.energy_all_pass = rep.energy_all_pass && cell.energy.pass;
      kd_meas.push_back(cell.kernel_drift_inf);
      kd_shape.push_back(kernel_drift_template(1.0, cell.alpha, cell.lambda0));
      gap_meas.push_back(cell.residual_gap);
      gap_shape.push_back(residual_gap_template(1.0, cell.alpha, cell.lambda0));
    }
    rep.median_kernel_drift.push_back(median(kd));
    rep.median_residual_gap.push_back(median(gap));
    rep.median_kl.push_back(median(kl));
  }
  auto try_fit = [&](const std::vector<double>& y) {
    try {
      return fit_loglog(rep.alphas, y);
    } catch (const std::invalid_argument&) {
      return SlopeFit{NAN, NAN, NAN, 0};
    }
  };
  rep.kernel_drift = try_fit(rep.median_kernel_drift);
  rep.residual_gap = try_fit(rep.median_residual_gap);
  rep.kl_surrogate = try_fit(rep.median_kl);
  auto try_const = [](const std::vector<double>& m, const std::vector<double>& s) {
    try {
      return fit_template_constant(m, s);
    } catch (const std::invalid_argument&) {
      return static_cast<double>(NAN);
    }
  };
  rep.kernel_drift_constant = try_const(kd_meas, kd_shape);
  rep.residual_gap_constant = try_const(gap_meas, gap_shape);

  std::filesystem::create_directories(out);
  std::string csv = csv_header_comment(header(cfg));
  csv +=
      "alpha,seed,status,steps,lambda0,kernel_drift_inf,residual_gap,kl_surrogate,final_loss,"
      "energy_max_increase,error\n";
  std::size_t failures = 0;
  for (const auto& cell : rep.cells) {
    failures += cell.ok ? 0 : 1;
    std::string err = cell.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", format_double(cell.alpha), cell.seed,
                       cell.ok ? "ok" : "failed", cell.steps, format_double(cell.lambda0),
                       format_double(cell.kernel_drift_inf), format_double(cell.residual_gap),
                       format_double(cell.kl_surrogate), format_double(cell.final_loss),
                       format_double(cell.energy.max_increase), err);
  }
  write_text_file(out / "sweep.csv", csv);

  Json j = header_json(cfg);
  j["alphas"] = rep.alphas;
  j["seeds"] = n_seeds;
  j["failed_cells"] = failures;
  j["median"] = {{"kernel_drift_inf", rep.median_kernel_drift},
                 {"residual_gap", rep.median_residual_gap},
                 {"kl_surrogate", rep.median_kl}};
  j["slopes"] = {{"kernel_drift_inf", slope_json(rep.kernel_drift, -1.0)},
                 {"residual_gap", slope_json(rep.residual_gap, -2.0)},
                 {"kl_surrogate", slope_json(rep.kl_surrogate, -2.0)}};
  j["template_constants"] = {{"kernel_drift_alpha_inv_lambda0_inv2", rep.kernel_drift_constant},
                             {"residual_gap_alpha_inv2_lambda0_inv8", rep.residual_gap_constant}};
  j["energy_all_pass"] = rep.energy_all_pass;
  write_json(j, out / "sweep.json");

  const struct {
    const char* file;
    const char* label;
    const std::vector<double>* med;
    const SlopeFit* fit;
  } metrics[] = {
      {"sweep_kernel_drift.svg", "kernel drift ||H(t)-H(0)||", &rep.median_kernel_drift,
       &rep.kernel_drift},
      {"sweep_residual_gap.svg", "residual gap (1/n)||f-f_ntk||^2", &rep.median_residual_gap,
       &rep.residual_gap},
      {"sweep_kl.svg", "KL surrogate", &rep.median_kl, &rep.kl_surrogate},
  };
  for (const auto& m : metrics) {
    PlotSpec p{fmt::format("{} vs alpha (slope {:.3f})", m.label, m.fit->slope), "alpha",
               m.label, true, true, {}};
    p.series.push_back({"median over seeds", rep.alphas, *m.med, false, true});
    if (std::isfinite(m.fit->slope)) {
      std::vector<double> line;
      for (double a : rep.alphas) line.push_back(std::exp(m.fit->intercept + m.fit->slope * std::log(a)));
      p.series.push_back({"log-log fit", rep.alphas, line, true});
    }
    try {
      write_svg(p, out / m.file);
    } catch (const std::invalid_argument&) {
      // every cell failed; nothing to draw
    }
  }
  PlotSpec lp{"training loss per alpha (first seed)", "t", "loss", false, true, {}};
  for (std::size_t a = 0; a < n_alpha; ++a) {
    if (first_logs[a].records.empty()) continue;
    lp.series.push_back({fmt::format("alpha = {}", format_double(rep.alphas[a])),
                         column(first_logs[a], &TrajectoryRecord::t),
                         column(first_logs[a], &TrajectoryRecord::loss)});
  }
  if (!lp.series.empty()) write_svg(lp, out / "sweep_loss.svg");
  return rep;
}

// ---------------------------------------------------------------- generalize

GeneralizeReport run_generalize(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                Executor* executor) {
  if (cfg.data.labels != LabelMode::kTeacher)
    throw std::invalid_argument("generalize: needs teacher labels (data.labels = \"teacher\")");
  const Activation act = Activation::from_name(cfg.model.activation);
  const GConstants g = constants(act);
  GaussianTeacher teacher;
  teacher.mean = cfg.data.teacher_mean_theta;
  teacher.mean.push_back(cfg.data.teacher_mean_u);
  teacher.sigma_theta = cfg.model.sigma_theta;
  teacher.sigma_u = cfg.model.sigma_u;

  GeneralizeReport rep;
  rep.chi2 = chi2_to_init(teacher, cfg.model.sigma_u, cfg.model.sigma_theta);
  rep.kl = kl_to_init(teacher, cfg.model.sigma_u, cfg.model.sigma_theta);
  const auto& grid = cfg.generalize.n_grid;
  const std::size_t n_seeds = cfg.generalize.seeds;
  const double alpha = cfg.model.alpha;

  // Fail early on degenerate teachers rather than once per cell.
  (void)make_dataset(cfg, grid.front(), cfg.seed);

  rep.cells.resize(grid.size() * n_seeds);
  for_each_job(rep.cells.size(), executor, [&](std::size_t idx, Executor* inner) {
    GeneralizeCell& cell = rep.cells[idx];
    cell.n = grid[idx / n_seeds];
    cell.seed = cfg.seed + idx % n_seeds;
    try {
      const Dataset train_ds = make_dataset(cfg, cell.n, cell.seed);
      const Dataset test_ds = make_dataset(cfg, cfg.generalize.test_n, cell.seed ^ kTestSeedSalt);
      cell.clip_rate = train_ds.clip_rate;
      HyperParams hp = hyper_params(cfg, alpha, cell.seed);
      hp.n = cell.n;
      // Forward Euler on the linearized flow is stable for ηα² < n/λmax and
      // trace(H) >= λmax; keep a factor-two margin.
      const double trace = gram_trace(init_ensemble(hp, cfg.model.init), train_ds, act);
      const double eta_alpha2 =
          std::min(cfg.model.eta_alpha2, 0.5 * static_cast<double>(cell.n) / trace);
      hp.eta = eta_alpha2 / (alpha * alpha);
      cell.eta = hp.eta;
      TrainOptions opt = train_options(cfg, inner);
      opt.recorders = {false, 16, false, false, NtkReference::kClosedForm, false};
      const std::size_t steps = cfg.generalize.steps;
      const TrainResult res = train(hp, train_ds, {steps, steps}, opt);
      cell.train_loss = res.log.records.back().loss;

      double ramp = 0.0, zo = 0.0;
      for (std::size_t i = 0; i < train_ds.n(); ++i) {
        const double y = sign_of(train_ds.labels[i]);
        ramp += ramp_loss(res.final_predictions[i], y);
        zo += zero_one_loss(res.final_predictions[i], y);
      }
      cell.train_ramp = ramp / static_cast<double>(train_ds.n());
      cell.train_zero_one = zo / static_cast<double>(train_ds.n());

      HyperParams test_hp = hp;
      test_hp.n = test_ds.n();
      BatchEvaluator test_eval(test_hp, test_ds, inner);
      const std::vector<double>& pred = test_eval.predict(res.final_ensemble);
      ramp = zo = 0.0;
      for (std::size_t i = 0; i < test_ds.n(); ++i) {
        const double y = sign_of(test_ds.labels[i]);
        ramp += ramp_loss(pred[i], y);
        zo += zero_one_loss(pred[i], y);
      }
      cell.test_ramp = ramp / static_cast<double>(test_ds.n());
      cell.test_zero_one = zo / static_cast<double>(test_ds.n());
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  for (std::size_t r = 0; r < grid.size(); ++r) {
    GeneralizeRow row;
    row.n = grid[r];
    std::vector<double> tr, te, ramp;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const GeneralizeCell& c = rep.cells[r * n_seeds + k];
      if (!c.ok) continue;
      tr.push_back(c.train_zero_one);
      te.push_back(c.test_zero_one);
      ramp.push_back(c.test_ramp);
    }
    row.median_train_zero_one = median(tr);
    row.median_test_zero_one = median(te);
    row.median_test_ramp = median(ramp);
    row.b1 = const_b1(g, cfg.model.sigma_u, cfg.model.sigma_theta, cfg.data.d, row.n);
    if (rep.chi2 > 0.0) {
      const ClampedValue b2 =
          const_b2(g, cfg.model.sigma_u, cfg.model.sigma_theta, rep.chi2 / (alpha * alpha));
      row.b2 = b2.value;
      row.b2_clamped = b2.clamped;
    }
    row.chi2_bound = gen_bound_chi2(rep.chi2, alpha, cfg.model.lambda, row.n,
                                    cfg.generalize.delta, row.b1, row.b2);
    if (g.g7)
      row.kl_bound = gen_bound_kl_teacher(rep.kl, alpha, row.n, cfg.generalize.delta, g,
                                          cfg.model.sigma_u, cfg.model.lambda);
    row.chi2_bound_holds = row.median_test_zero_one <= row.chi2_bound.value;
    rep.rows.push_back(row);
  }
  rep.strictly_decreasing = rep.rows.size() >= 2;
  for (std::size_t r = 1; r < rep.rows.size(); ++r)
    rep.strictly_decreasing = rep.strictly_decreasing &&
                              rep.rows[r].median_test_zero_one < rep.rows[r - 1].median_test_zero_one;

  std::filesystem::create_directories(out);
  std::string csv = csv_header_comment(header(cfg));
  csv += "n,seed,status,eta,train_loss,train_ramp,train_zero_one,test_ramp,test_zero_one,clip_rate,error\n";
  for (const auto& c : rep.cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", c.n, c.seed, c.ok ? "ok" : "failed",
                       format_double(c.eta), format_double(c.train_loss),
                       format_double(c.train_ramp), format_double(c.train_zero_one),
                       format_double(c.test_ramp), format_double(c.test_zero_one),
                       format_double(c.clip_rate), err);
  }
  write_text_file(out / "generalize.csv", csv);

  Json j = header_json(cfg);
  j["alpha"] = alpha;
  j["lambda"] = cfg.model.lambda;
  j["chi2_to_init"] = rep.chi2;
  j["kl_to_init"] = rep.kl;
  j["test_n"] = cfg.generalize.test_n;
  j["delta"] = cfg.generalize.delta;
  Json rows = Json::array();
  for (const auto& row : rep.rows) {
    Json rj = {{"n", row.n},
               {"median_train_zero_one", row.median_train_zero_one},
               {"median_test_zero_one", row.median_test_zero_one},
               {"median_test_ramp", row.median_test_ramp},
               {"b1", row.b1},
               {"b2", row.b2},
               {"b2_clamped", row.b2_clamped},
               {"chi2_bound",
                {{"value", row.chi2_bound.value},
                 {"alpha_premise", row.chi2_bound.alpha_premise},
                 {"lambda_premise", row.chi2_bound.lambda_premise},
                 {"vacuous", row.chi2_bound.vacuous},
                 {"holds", row.chi2_bound_holds}}}};
    if (row.kl_bound)
      rj["kl_teacher_bound"] = {{"value", row.kl_bound->value},
                                {"lambda_premise", row.kl_bound->lambda_premise},
                                {"alpha_premise", row.kl_bound->alpha_premise},
                                {"vacuous", row.kl_bound->vacuous}};
    rows.push_back(rj);
  }
  j["rows"] = rows;
  j["median_test_error_strictly_decreasing"] = rep.strictly_decreasing;
  write_json(j, out / "generalize.json");

  PlotSpec p{"test 0-1 error vs n", "n", "error", true, true, {}};
  std::vector<double> ns, te, bound;
  for (const auto& row : rep.rows) {
    ns.push_back(static_cast<double>(row.n));
    te.push_back(row.median_test_zero_one);
    bound.push_back(row.chi2_bound.value);
  }
  p.series.push_back({"median test 0-1 error", ns, te});
  p.series.push_back({"chi2 bound", ns, bound, true});
  try {
    write_svg(p, out / "generalize.svg");
  } catch (const std::invalid_argument&) {
    // all errors zero on a log axis
  }
  return rep;
}

// ---------------------------------------------------------------- audit

TalagrandSweep talagrand_sweep(const HyperParams& hp, std::size_t samples, std::uint64_t seed) {
  const std::size_t dim = hp.d + 1;
  TalagrandSweep out;
  out.samples = samples;
  out.min_margin = INFINITY;
  std::vector<double> mean(dim), var(dim);
  for (std::size_t k = 0; k < samples; ++k) {
    Stream rng(seed, StreamDomain::kMonteCarlo, k, 1);
    for (std::size_t c = 0; c < dim; ++c) {
      const double s = c < hp.d ? hp.sigma_theta : hp.sigma_u;
      mean[c] = s * rng.normal();
      // variances spread over about two orders of magnitude around p0's
      var[c] = s * s * std::exp(1.5 * rng.normal());
    }
    const TalagrandResult r = talagrand_audit(mean, var, hp);
    out.min_margin = std::min(out.min_margin, r.rhs - r.lhs);
    if (!r.pass) ++out.failures;
  }
  out.pass = out.failures == 0;
  return out;
}

AuditSummary run_audit(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const HyperParams hp = hyper_params(cfg, cfg.model.alpha, cfg.seed);
  AuditSummary s;
  s.talagrand = talagrand_sweep(hp, cfg.audit.talagrand_samples, cfg.seed);
  std::vector<double> grid(cfg.audit.tail_points);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = cfg.audit.tail_r_max * hp.sigma_u * static_cast<double>(k) /
              static_cast<double>(grid.size() - 1);
  s.tail = tail_bound_audit(hp, grid, cfg.audit.tail_mc_samples, cfg.seed);
  s.paper_tail_violated_at_zero = s.tail.rows.front().paper_violated;
  for (const char* name : {"tanh", "sigmoid", "identity", "softplus"}) {
    const Activation act = Activation::from_name(name);
    s.activations.push_back(audit_constants(act, constants(act), cfg.audit.activation_grid));
  }
  s.pass = s.talagrand.pass && s.tail.corrected_all_pass;
  for (const auto& a : s.activations) s.pass = s.pass && a.pass;

  Json j = header_json(cfg);
  j["talagrand"] = {{"samples", s.talagrand.samples},
                    {"failures", s.talagrand.failures},
                    {"min_margin", s.talagrand.min_margin},
                    {"pass", s.talagrand.pass}};
  Json rows = Json::array();
  for (const auto& r : s.tail.rows)
    rows.push_back({{"r", r.r},
                    {"mc_lhs", r.mc_lhs},
                    {"mc_std_error", r.mc_std_error},
                    {"exact_lhs", r.exact_lhs},
                    {"paper_rhs", r.paper_rhs},
                    {"corrected_rhs", r.corrected_rhs},
                    {"paper_violated", r.paper_violated},
                    {"corrected_pass", r.corrected_pass}});
  j["tail_bound"] = {{"sigma_u", hp.sigma_u},
                     {"mc_samples", cfg.audit.tail_mc_samples},
                     {"corrected_all_pass", s.tail.corrected_all_pass},
                     {"paper_all_pass", s.tail.paper_all_pass},
                     {"paper_violated_at_zero", s.paper_tail_violated_at_zero},
                     {"rows", rows}};
  Json acts = Json::array();
  for (const auto& a : s.activations) {
    Json lines = Json::array();
    for (const auto& l : a.lines)
      lines.push_back({{"inequality", l.inequality},
                       {"bound", l.bound},
                       {"max_observed", l.max_observed},
                       {"argmax", l.argmax},
                       {"margin", l.margin}});
    acts.push_back({{"activation", a.activation},
                    {"grid_size", a.grid_size},
                    {"pass", a.pass},
                    {"lines", lines}});
  }
  j["activation_constants"] = acts;
  j["pass"] = s.pass;
  std::filesystem::create_directories(out);
  write_json(j, out / "audits.json");
  return s;
}

// ---------------------------------------------------------------- bounds

std::string run_bounds(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       Executor* executor) {
  const Dataset ds = make_dataset(cfg, cfg.data.n, cfg.seed);
  const GramSpectrum sp = init_spectrum(cfg, ds, cfg.seed, executor);
  const HyperParams hp = hyper_params(cfg, cfg.model.alpha, cfg.seed);
  const Ensemble e0 = init_ensemble(hp, cfg.model.init);
  const double l0 = loss(e0, hp, ds);
  const GConstants g = constants(hp.activation);
  const double su = hp.sigma_u, st = hp.sigma_theta;
  const std::size_t n = ds.n();

  const double a1 = const_a1(g, su, st, hp.d);
  const double a2 = const_a2(g, su, st, hp.d);
  const ClampedValue r = const_r(g, su, st, hp.d, n, sp.lambda_min);
  const double alpha_min = alpha_threshold(l0, a1, a2, hp.lambda, sp.lambda0, r.value, su, st);
  const double klb = kl_bound(hp.alpha, hp.lambda, sp.lambda0, a1, a2, l0);
  const double b1 = const_b1(g, su, st, hp.d, n);

  Json j = header_json(cfg);
  j["activation"] = hp.activation.name();
  j["alpha"] = hp.alpha;
  j["lambda"] = hp.lambda;
  j["n"] = n;
  j["d"] = hp.d;
  j["lambda_min"] = sp.lambda_min;
  j["lambda0"] = sp.lambda0;
  j["initial_loss"] = l0;
  j["g_constants"] = {{"g1", g.g1}, {"g2", g.g2}, {"g3", g.g3}, {"g4", g.g4},
                      {"g5", g.g5}, {"g6", g.g6}};
  j["g_constants"]["g7"] = g.g7 ? Json(*g.g7) : Json(nullptr);
  j["a1"] = a1;
  j["a2"] = a2;
  j["r"] = {{"value", r.value}, {"clamped", r.clamped}};
  j["alpha_min"] = alpha_min;
  j["condition_holds"] = hp.alpha >= alpha_min;
  Json lb = Json::array();
  for (double t : cfg.bounds.times) {
    const LossBound b = loss_bound(t, hp.alpha, hp.lambda, sp.lambda0, a1, l0);
    lb.push_back({{"t", t}, {"value", b.value}, {"floor", b.floor}});
  }
  j["loss_bound"] = lb;
  j["kl_bound"] = klb;
  j["b1"] = b1;
  Json large = {{"M", klb}};
  if (klb > 0.0) {
    const ClampedValue b2 = const_b2(g, su, st, klb);
    large["b2"] = b2.value;
    large["b2_clamped"] = b2.clamped;
    large["value"] = gen_bound_large_alpha(klb, hp.alpha, n, cfg.bounds.delta, b1, b2.value);
  } else {
    large["value"] = gen_bound_large_alpha(0.0, hp.alpha, n, cfg.bounds.delta, b1, 0.0);
  }
  j["generalization_large_alpha"] = large;
  if (g.g7 && klb <= 0.5) {
    j["generalization_small_alpha"] = {
        {"M", klb},
        {"value", gen_bound_small_alpha(klb, hp.alpha, n, cfg.bounds.delta, g, su)}};
  } else {
    j["generalization_small_alpha"] = {
        {"M", klb},
        {"value", nullptr},
        {"reason", g.g7 ? "M exceeds 1/2" : "activation is unbounded"}};
  }
  if (cfg.data.labels == LabelMode::kTeacher) {
    GaussianTeacher t;
    t.mean = cfg.data.teacher_mean_theta;
    t.mean.push_back(cfg.data.teacher_mean_u);
    t.sigma_theta = st;
    t.sigma_u = su;
    const double chi2 = chi2_to_init(t, su, st);
    const double kl = kl_to_init(t, su, st);
    double b2 = 0.0;
    bool b2_clamped = false;
    if (chi2 > 0.0) {
      const ClampedValue c = const_b2(g, su, st, chi2 / (hp.alpha * hp.alpha));
      b2 = c.value;
      b2_clamped = c.clamped;
    }
    const Chi2Bound cb = gen_bound_chi2(chi2, hp.alpha, hp.lambda, n, cfg.bounds.delta, b1, b2);
    j["teacher"] = {{"chi2_to_init", chi2},
                    {"kl_to_init", kl},
                    {"chi2_bound",
                     {{"value", cb.value},
                      {"b2", b2},
                      {"b2_clamped", b2_clamped},
                      {"alpha_premise", cb.alpha_premise},
                      {"lambda_premise", cb.lambda_premise},
                      {"vacuous", cb.vacuous}}}};
    if (g.g7) {
      const KlTeacherBound kb =
          gen_bound_kl_teacher(kl, hp.alpha, n, cfg.bounds.delta, g, su, hp.lambda);
      j["teacher"]["kl_teacher_bound"] = {{"value", kb.value},
                                          {"lambda_premise", kb.lambda_premise},
                                          {"alpha_premise", kb.alpha_premise},
                                          {"vacuous", kb.vacuous}};
    }
  }
  const std::string text = j.dump(2) + "\n";
  std::filesystem::create_directories(out);
  write_text_file(out / "bounds.json", text);
  return text;
}

}  // namespace mflab
