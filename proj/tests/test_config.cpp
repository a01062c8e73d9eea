#include <doctest.h>

#include <string>

#include "mflab/config.hpp"

using namespace mflab;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults and partial configs") {
  const ExperimentConfig def = parse_config("{}");
  CHECK(def == ExperimentConfig{});
  const ExperimentConfig c = parse_config(R"({"experiment": "sweep", "model": {"alpha": 4}})");
  CHECK(c.experiment == ExperimentKind::kSweep);
  CHECK(c.model.alpha == 4.0);
  CHECK(c.model.m == ExperimentConfig{}.model.m);
}

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.experiment = ExperimentKind::kGeneralize;
  c.seed = 99;
  c.model.activation = "sigmoid";
  c.model.alpha = 12.5;
  c.model.init = InitScheme::kIid;
  c.model.grad_scaling = GradScaling::kRaw;
  c.model.noise = NoiseConvention::kVarianceLiteral;
  c.data.labels = LabelMode::kTeacher;
  c.data.teacher_mean_theta = {1.0, 0.0, 0.0, 0.0};
  c.data.teacher_mean_u = 0.5;
  c.sweep.alphas = {1, 3, 9, 27};
  c.generalize.n_grid = {10, 20};
  c.recorders.ntk_reference = NtkReference::kClosedForm;
  c.tolerances.energy_rel = 0.1;
  CHECK(parse_config(serialize_config(c)) == c);
  CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));
}

TEST_CASE("config errors carry the JSON path") {
  CHECK(error_of(R"({"model": {"alpah": 1}})") == "/model/alpah: unknown key");
  CHECK(error_of(R"({"bogus": 1})") == "/bogus: unknown key");
  CHECK(error_of(R"({"model": {"alpha": "big"}})").rfind("/model/alpha", 0) == 0);
  CHECK(error_of(R"({"sweep": {"alphas": [1, "x"]}})").rfind("/sweep/alphas", 0) == 0);
  CHECK(error_of(R"({"experiment": "fly"})").rfind("/experiment", 0) == 0);
  CHECK(error_of(R"({"model": {"init": "zeros"}})").rfind("/model/init", 0) == 0);
  CHECK_FALSE(error_of("{not json").empty());
}

TEST_CASE("validation") {
  ExperimentConfig c;
  c.model.alpha = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.sweep.alphas = {1, 2, 4, 8};
  CHECK_THROWS_AS(c.validate(), ConfigError);  // spans less than 16×
  c.sweep.alphas = {1, 4, 16};
  CHECK_THROWS_AS(c.validate(), ConfigError);  // fewer than four values
  c = ExperimentConfig{};
  c.model.activation = "relu";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("config hash ignores placement") {
  ExperimentConfig a, b;
  b.workers = 8;
  b.out_dir = "/elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("hyper params") {
  ExperimentConfig c;
  c.model.eta_alpha2 = 0.2;
  const HyperParams hp = hyper_params(c, 4.0, 7);
  CHECK(hp.eta == doctest::Approx(0.2 / 16));
  CHECK(hp.alpha == 4.0);
  CHECK(hp.seed == 7);
  CHECK(hp.m == c.model.m);
}
