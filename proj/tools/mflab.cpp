// mflab: experiments on mean-field two-layer networks trained by noisy
// gradient descent.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <exception>
#include <string>

#include "mflab/config.hpp"
#include "mflab/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string grad_scaling;
  bool noise_variance_literal = false;
  std::size_t workers = 0;
};

void add_common(CLI::App* sub, Overrides& o, CLI::Option*& seed_opt) {
  sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (default: config out_dir)");
  seed_opt = sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--grad-scaling", o.grad_scaling, "meanfield or raw")
      ->check(CLI::IsMember({"meanfield", "raw"}));
  sub->add_flag("--noise-variance-literal", o.noise_variance_literal,
                "read the noise scale as a variance of sqrt(2 eta)");
  sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mflab: mean-field neural network experiments"};
  app.require_subcommand(1);
  Overrides o;
  CLI::Option* seed_opt = nullptr;
  for (const char* name : {"train", "sweep", "generalize", "audit", "bounds"}) {
    CLI::App* sub = app.add_subcommand(name, fmt::format("run the {} experiment", name));
    add_common(sub, o, seed_opt);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    mflab::ExperimentConfig cfg = mflab::load_config(o.config);
    cfg.experiment = mflab::experiment_from_string(sub->get_name());
    if (sub->count("--seed") > 0) cfg.seed = o.seed;
    if (!o.grad_scaling.empty())
      cfg.model.grad_scaling =
          o.grad_scaling == "raw" ? mflab::GradScaling::kRaw : mflab::GradScaling::kMeanField;
    if (o.noise_variance_literal) cfg.model.noise = mflab::NoiseConvention::kVarianceLiteral;
    if (o.workers > 0) cfg.workers = o.workers;
    if (!o.out.empty()) cfg.out_dir = o.out;
    cfg.validate();

    mflab::Executor executor(cfg.workers);
    const std::filesystem::path out = cfg.out_dir;
    switch (cfg.experiment) {
      case mflab::ExperimentKind::kTrain: {
        const auto rep = mflab::run_train(cfg, out, &executor);
        fmt::print("trained {} steps: loss {:.4g} -> {:.4g}; condition (alpha >= {:.3g}) {}\n",
                   rep.steps, rep.l0, rep.result.log.records.back().loss,
                   rep.constants.alpha_min, rep.condition_holds ? "holds" : "does not hold");
        break;
      }
      case mflab::ExperimentKind::kSweep: {
        const auto rep = mflab::run_sweep(cfg, out, &executor);
        fmt::print("slopes: kernel drift {:.3f} (se {:.3f}), residual gap {:.3f} (se {:.3f}), "
                   "KL {:.3f} (se {:.3f})\n",
                   rep.kernel_drift.slope, rep.kernel_drift.std_error, rep.residual_gap.slope,
                   rep.residual_gap.std_error, rep.kl_surrogate.slope, rep.kl_surrogate.std_error);
        break;
      }
      case mflab::ExperimentKind::kGeneralize: {
        const auto rep = mflab::run_generalize(cfg, out, &executor);
        for (const auto& row : rep.rows)
          fmt::print("n={}: median test 0-1 error {:.4f}, chi2 bound {:.4g}{}\n", row.n,
                     row.median_test_zero_one, row.chi2_bound.value,
                     row.chi2_bound.vacuous ? " (vacuous)" : "");
        break;
      }
      case mflab::ExperimentKind::kAudit: {
        const auto s = mflab::run_audit(cfg, out);
        fmt::print("audits {}\n", s.pass ? "pass" : "FAIL");
        break;
      }
      case mflab::ExperimentKind::kBounds:
        fmt::print("{}", mflab::run_bounds(cfg, out, &executor));
        break;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "mflab: {}\n", e.what());
    return 1;
  }
  return 0;
}
