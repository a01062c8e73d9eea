#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "mflab/dynamics.hpp"
#include "mflab/io.hpp"

using namespace mflab;

namespace {

HyperParams base(std::size_t m, std::size_t d, std::size_t n) {
  HyperParams hp;
  hp.m = m;
  hp.d = d;
  hp.n = n;
  hp.seed = 3;
  hp.alpha = 2.0;
  hp.eta = 0.01;
  return hp;
}

void check_same(const TrajectoryLog& a, const TrajectoryLog& b) {
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const auto& x = a.records[k];
    const auto& y = b.records[k];
    CHECK(x.step == y.step);
    CHECK(x.loss == y.loss);
    CHECK(x.kl_surrogate == y.kl_surrogate);
    CHECK(x.w2_estimate == y.w2_estimate);
    CHECK(x.kernel_drift_inf == y.kernel_drift_inf);
    CHECK(x.residual_gap == y.residual_gap);
    CHECK(x.energy == y.energy);
  }
}

}  // namespace

TEST_CASE("noise scale conventions") {
  HyperParams hp;
  hp.lambda = 0.5;
  hp.eta = 0.01;
  CHECK(noise_std(hp, NoiseConvention::kStdSqrt2Eta) == doctest::Approx(0.1));
  CHECK(noise_std(hp, NoiseConvention::kVarianceLiteral) ==
        doctest::Approx(std::sqrt(0.5) * std::pow(0.02, 0.25)));
  hp.lambda = 0.0;
  CHECK(noise_std(hp, NoiseConvention::kStdSqrt2Eta) == 0.0);
}

TEST_CASE("noiseless steps are plain gradient descent") {
  HyperParams hp = base(64, 3, 4);
  const Dataset ds = make_synthetic(4, 3, 1, LabelMode::kRademacher);
  const Ensemble e = init_ensemble(hp);
  const Ensemble next = step(e, hp, ds, 0);
  const Gradients g = grads(e, hp, ds);
  for (std::size_t j = 0; j < hp.m; ++j) {
    CHECK(next.us[j] == doctest::Approx(e.us[j] - hp.eta * g.du[j]).epsilon(1e-14));
    CHECK(next.thetas(j, 1) ==
          doctest::Approx(e.thetas(j, 1) - hp.eta * g.dtheta(j, 1)).epsilon(1e-14));
  }
  CHECK(step(e, hp, ds, 5) == next);
}

TEST_CASE("fixed point without noise") {
  HyperParams hp = base(8, 2, 2);
  Ensemble e;
  e.thetas = Matrix(8, 2, 0.4);
  e.us.assign(8, 0.0);
  Dataset ds = make_synthetic(2, 2, 1, LabelMode::kRademacher);
  ds.labels = {0.0, 0.0};
  CHECK(step(e, hp, ds, 0).thetas == e.thetas);
  CHECK(step(e, hp, ds, 0).us == e.us);
}

TEST_CASE("noise is keyed by step, not by call order") {
  HyperParams hp = base(300, 2, 3);
  hp.lambda = 0.1;
  const Dataset ds = make_synthetic(3, 2, 1, LabelMode::kRademacher);
  const Ensemble e = init_ensemble(hp);
  CHECK(step(e, hp, ds, 7) == step(e, hp, ds, 7));
  CHECK_FALSE(step(e, hp, ds, 7) == step(e, hp, ds, 8));
}

TEST_CASE("divergence is reported") {
  HyperParams hp = base(16, 2, 3);
  hp.eta = 1e12;
  const Dataset ds = make_synthetic(3, 2, 1, LabelMode::kRademacher);
  CHECK_THROWS_AS(train(hp, ds, {20, 5}), DivergedRun);
  CHECK_THROWS_AS(train(base(16, 2, 3), ds, {0, 1}), std::invalid_argument);
}

TEST_CASE("training is deterministic across worker counts") {
  HyperParams hp = base(1000, 3, 5);
  hp.lambda = 1e-3;
  hp.eta = 0.02;
  const Dataset ds = make_synthetic(5, 3, 2, LabelMode::kRademacher);
  TrainOptions opt;
  opt.init = InitScheme::kSymmetricMomentMatched;
  const TrainResult a = train(hp, ds, {40, 10}, opt);
  Executor pool(3);
  opt.executor = &pool;
  const TrainResult b = train(hp, ds, {40, 10}, opt);
  check_same(a.log, b.log);
  CHECK(a.final_ensemble == b.final_ensemble);
  CHECK(a.log.records.size() == 5);
  CHECK(a.log.records.back().step == 40);
  CHECK(a.log.records[0].kl_surrogate == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.log.records[0].residual_gap == 0.0);
}

TEST_CASE("one-dimensional linear regression converges") {
  // identity activation, x = y = 1: the residual obeys r' = −2α²(u² + θ²) r
  HyperParams hp = base(20000, 1, 1);
  hp.activation = Activation(ActivationKind::kIdentity);
  hp.alpha = 1.0;
  hp.eta = 0.02;
  Dataset ds;
  ds.inputs = Matrix(1, 1, 1.0);
  ds.labels = {1.0};
  const double rate = 2.0 * (1.0 + 1.0);
  const std::size_t steps = static_cast<std::size_t>(std::ceil(16.0 / rate / hp.eta));
  TrainOptions opt;
  opt.recorders = {false, 16, false, false, NtkReference::kClosedForm, false};
  const TrainResult res = train(hp, ds, {steps, 1}, opt);
  for (std::size_t k = 1; k < res.log.records.size(); ++k)
    CHECK(res.log.records[k].loss <= res.log.records[k - 1].loss);
  CHECK(res.log.records.back().loss < 1e-6);
}

TEST_CASE("trajectory csv") {
  HyperParams hp = base(200, 2, 3);
  const Dataset ds = make_synthetic(3, 2, 1, LabelMode::kRademacher);
  const TrainResult res = train(hp, ds, {4, 2});
  const auto path = std::filesystem::temp_directory_path() / "mflab_test_traj.csv";
  write_trajectory_csv(res.log, path, {"deadbeef", 3});
  const std::string text = read_text_file(path);
  CHECK(text.rfind("# config_hash=deadbeef\n# seed=3\n", 0) == 0);
  CHECK(text.find("step,t,loss,objective,kl_surrogate,w2_estimate,kernel_drift_inf,"
                  "residual_gap,energy,reg_drift_norm\n") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("stationarity diagnostic") {
  TrajectoryLog flat;
  for (int k = 0; k < 40; ++k) flat.records.push_back({static_cast<std::uint64_t>(k), 0, 0.3});
  const StationarityReport f = stationarity_diagnostic(flat);
  CHECK(f.plateau == 0.3);
  CHECK(f.entry_step == 0);

  TrajectoryLog decay;
  for (int k = 0; k < 200; ++k) {
    const double t = 0.1 * k;
    decay.records.push_back({static_cast<std::uint64_t>(k), t, 2 * std::exp(-t) + 0.05});
  }
  CHECK(stationarity_diagnostic(decay).plateau == doctest::Approx(0.05).epsilon(0.1));

  TrajectoryLog to_zero;
  for (int k = 0; k < 100; ++k) to_zero.records.push_back({static_cast<std::uint64_t>(k), 0, std::exp(-0.5 * k)});
  CHECK(stationarity_diagnostic(to_zero).plateau < 1e-15);

  TrajectoryLog few;
  few.records.resize(19);
  CHECK_THROWS(stationarity_diagnostic(few));
}
