#include "mflab/config.hpp"

#include <fmt/format.h>

#include <cmath>
#include <json.hpp>
#include <set>

namespace mflab {

using Json = nlohmann::ordered_json;

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<ExperimentKind> kExperiments[] = {
    {ExperimentKind::kTrain, "train"},
    {ExperimentKind::kSweep, "sweep"},
    {ExperimentKind::kGeneralize, "generalize"},
    {ExperimentKind::kAudit, "audit"},
    {ExperimentKind::kBounds, "bounds"},
};
constexpr EnumName<InitScheme> kInits[] = {
    {InitScheme::kIid, "iid"},
    {InitScheme::kSymmetric, "symmetric"},
    {InitScheme::kSymmetricMomentMatched, "symmetric_moment_matched"},
};
constexpr EnumName<GradScaling> kScalings[] = {
    {GradScaling::kMeanField, "meanfield"},
    {GradScaling::kRaw, "raw"},
};
constexpr EnumName<NoiseConvention> kNoises[] = {
    {NoiseConvention::kStdSqrt2Eta, "std_sqrt_2eta"},
    {NoiseConvention::kVarianceLiteral, "variance_literal"},
};
constexpr EnumName<LabelMode> kLabels[] = {
    {LabelMode::kRademacher, "rademacher"},
    {LabelMode::kTeacher, "teacher"},
};
constexpr EnumName<NtkReference> kReferences[] = {
    {NtkReference::kClosedForm, "closed_form"},
    {NtkReference::kEulerMatched, "euler_matched"},
};

template <typename E, std::size_t N>
const char* name_of(const EnumName<E> (&table)[N], E value) {
  for (const auto& entry : table)
    if (entry.value == value) return entry.name;
  throw std::logic_error("unnamed enum value");
}

/// Walks one JSON object, remembering which keys were read so leftovers can
/// be reported as unknown.
class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where()));
  }

  /// Throws for the first key that no accessor asked for.
  void finish() const {
    for (const auto& [key, _] : obj_.items())
      if (!seen_.count(key)) throw ConfigError(fmt::format("{}/{}: unknown key", path_, key));
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("{}: expected a number", child(key)));
    out = v.get<double>();
  }

  template <typename T>
  void count(const std::string& key, T& out) {
    if (!has(key)) return;
    out = static_cast<T>(as_count(obj_.at(key), child(key)));
  }

  void flag(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", child(key)));
    out = v.get<bool>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(fmt::format("{}: expected a string", child(key)));
    out = v.get<std::string>();
  }

  template <typename E, std::size_t N>
  void choice(const std::string& key, const EnumName<E> (&table)[N], E& out) {
    std::string name;
    if (!has(key)) return;
    text(key, name);
    for (const auto& entry : table) {
      if (name == entry.name) {
        out = entry.value;
        return;
      }
    }
    std::string allowed;
    for (const auto& entry : table) allowed += std::string(allowed.empty() ? "" : ", ") + entry.name;
    throw ConfigError(fmt::format("{}: unknown value \"{}\" (expected one of {})", child(key),
                                  name, allowed));
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array", child(key)));
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError(fmt::format("{}/{}: expected a number", child(key), i));
      out.push_back(v[i].get<double>());
    }
  }

  void counts(const std::string& key, std::vector<std::size_t>& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array", child(key)));
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(static_cast<std::size_t>(as_count(v[i], fmt::format("{}/{}", child(key), i))));
  }

  const Json* object(const std::string& key) {
    if (!has(key)) return nullptr;
    return &obj_.at(key);
  }

 private:
  std::string where() const { return path_.empty() ? "/" : path_; }

  static std::uint64_t as_count(const Json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0))
      throw ConfigError(fmt::format("{}: expected a non-negative integer", path));
    return v.get<std::uint64_t>();
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(const Json& j, ModelConfig& m) {
  Reader r(j, "/model");
  r.text("activation", m.activation);
  r.number("alpha", m.alpha);
  r.number("lambda", m.lambda);
  r.number("sigma_u", m.sigma_u);
  r.number("sigma_theta", m.sigma_theta);
  r.count("m", m.m);
  r.number("eta_alpha2", m.eta_alpha2);
  r.choice("init", kInits, m.init);
  r.choice("grad_scaling", kScalings, m.grad_scaling);
  r.choice("noise", kNoises, m.noise);
  r.finish();
}

void read_data(const Json& j, DataConfig& d) {
  Reader r(j, "/data");
  r.count("n", d.n);
  r.count("d", d.d);
  r.choice("labels", kLabels, d.labels);
  r.flag("distinct", d.distinct);
  r.numbers("teacher_mean_theta", d.teacher_mean_theta);
  r.number("teacher_mean_u", d.teacher_mean_u);
  r.flag("classification", d.classification);
  r.finish();
}

void read_schedule(const Json& j, ScheduleConfig& s) {
  Reader r(j, "/schedule");
  r.number("time_constants", s.time_constants);
  r.count("steps", s.steps);
  r.count("records", s.records);
  r.finish();
}

void read_recorders(const Json& j, RecorderConfig& c) {
  Reader r(j, "/recorders");
  r.flag("w2", c.w2);
  r.count("w2_projections", c.w2_projections);
  r.flag("kernel", c.kernel);
  r.flag("ntk", c.ntk);
  r.choice("ntk_reference", kReferences, c.ntk_reference);
  r.flag("reg_drift", c.reg_drift);
  r.finish();
}

void read_sweep(const Json& j, SweepConfig& s) {
  Reader r(j, "/sweep");
  r.numbers("alphas", s.alphas);
  r.count("seeds", s.seeds);
  r.finish();
}

void read_generalize(const Json& j, GeneralizeConfig& g) {
  Reader r(j, "/generalize");
  r.counts("n_grid", g.n_grid);
  r.count("seeds", g.seeds);
  r.count("test_n", g.test_n);
  r.count("steps", g.steps);
  r.number("delta", g.delta);
  r.finish();
}

void read_audit(const Json& j, AuditConfig& a) {
  Reader r(j, "/audit");
  r.count("talagrand_samples", a.talagrand_samples);
  r.count("tail_points", a.tail_points);
  r.number("tail_r_max", a.tail_r_max);
  r.count("tail_mc_samples", a.tail_mc_samples);
  r.count("activation_grid", a.activation_grid);
  r.finish();
}

void read_bounds(const Json& j, BoundsConfig& b) {
  Reader r(j, "/bounds");
  r.numbers("times", b.times);
  r.number("delta", b.delta);
  r.finish();
}

void read_tolerances(const Json& j, Tolerances& t) {
  Reader r(j, "/tolerances");
  r.number("lambda_min_rel", t.lambda_min_rel);
  r.number("energy_rel", t.energy_rel);
  r.number("loss_envelope", t.loss_envelope);
  r.finish();
}

Json to_json(const ExperimentConfig& c, bool for_hash) {
  Json j;
  j["experiment"] = to_string(c.experiment);
  j["seed"] = c.seed;
  if (!for_hash) {
    j["workers"] = c.workers;
    j["out_dir"] = c.out_dir;
  }
  j["model"] = {
      {"activation", c.model.activation},
      {"alpha", c.model.alpha},
      {"lambda", c.model.lambda},
      {"sigma_u", c.model.sigma_u},
      {"sigma_theta", c.model.sigma_theta},
      {"m", c.model.m},
      {"eta_alpha2", c.model.eta_alpha2},
      {"init", name_of(kInits, c.model.init)},
      {"grad_scaling", name_of(kScalings, c.model.grad_scaling)},
      {"noise", name_of(kNoises, c.model.noise)},
  };
  j["data"] = {
      {"n", c.data.n},
      {"d", c.data.d},
      {"labels", name_of(kLabels, c.data.labels)},
      {"distinct", c.data.distinct},
      {"teacher_mean_theta", c.data.teacher_mean_theta},
      {"teacher_mean_u", c.data.teacher_mean_u},
      {"classification", c.data.classification},
  };
  j["schedule"] = {
      {"time_constants", c.schedule.time_constants},
      {"steps", c.schedule.steps},
      {"records", c.schedule.records},
  };
  j["recorders"] = {
      {"w2", c.recorders.w2},
      {"w2_projections", c.recorders.w2_projections},
      {"kernel", c.recorders.kernel},
      {"ntk", c.recorders.ntk},
      {"ntk_reference", name_of(kReferences, c.recorders.ntk_reference)},
      {"reg_drift", c.recorders.reg_drift},
  };
  j["sweep"] = {{"alphas", c.sweep.alphas}, {"seeds", c.sweep.seeds}};
  j["generalize"] = {
      {"n_grid", c.generalize.n_grid}, {"seeds", c.generalize.seeds},
      {"test_n", c.generalize.test_n}, {"steps", c.generalize.steps},
      {"delta", c.generalize.delta},
  };
  j["audit"] = {
      {"talagrand_samples", c.audit.talagrand_samples},
      {"tail_points", c.audit.tail_points},
      {"tail_r_max", c.audit.tail_r_max},
      {"tail_mc_samples", c.audit.tail_mc_samples},
      {"activation_grid", c.audit.activation_grid},
  };
  j["bounds"] = {{"times", c.bounds.times}, {"delta", c.bounds.delta}};
  j["tolerances"] = {
      {"lambda_min_rel", c.tolerances.lambda_min_rel},
      {"energy_rel", c.tolerances.energy_rel},
      {"loss_envelope", c.tolerances.loss_envelope},
  };
  return j;
}

void check(bool ok, const char* path, const std::string& what) {
  if (!ok) throw ConfigError(fmt::format("{}: {}", path, what));
}

}  // namespace

std::string to_string(ExperimentKind kind) { return name_of(kExperiments, kind); }

ExperimentKind experiment_from_string(const std::string& name) {
  for (const auto& entry : kExperiments)
    if (name == entry.name) return entry.value;
  throw ConfigError(fmt::format("/experiment: unknown experiment \"{}\"", name));
}

void ExperimentConfig::validate() const {
  const auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  try {
    (void)Activation::from_name(model.activation);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("/model/activation: unknown activation \"{}\"", model.activation));
  }
  check(workers >= 1, "/workers", "must be at least 1");
  check(finite_pos(model.alpha), "/model/alpha", "must be positive");
  check(std::isfinite(model.lambda) && model.lambda >= 0.0, "/model/lambda", "must be >= 0");
  check(finite_pos(model.sigma_u), "/model/sigma_u", "must be positive");
  check(finite_pos(model.sigma_theta), "/model/sigma_theta", "must be positive");
  check(model.m >= 2, "/model/m", "must be at least 2");
  check(model.init == InitScheme::kIid || model.m % 2 == 0, "/model/m",
        "symmetric initialization needs an even particle count");
  check(finite_pos(model.eta_alpha2), "/model/eta_alpha2", "must be positive");
  check(data.n >= 1, "/data/n", "must be at least 1");
  check(data.d >= 1, "/data/d", "must be at least 1");
  if (data.labels == LabelMode::kTeacher)
    check(data.teacher_mean_theta.size() == data.d, "/data/teacher_mean_theta",
          fmt::format("needs {} entries (one per input dimension)", data.d));
  check(std::isfinite(schedule.time_constants) && schedule.time_constants >= 0.0,
        "/schedule/time_constants", "must be >= 0");
  check(schedule.time_constants > 0.0 || schedule.steps >= 1, "/schedule/steps",
        "must be at least 1");
  check(schedule.records >= 1, "/schedule/records", "must be at least 1");
  check(recorders.w2_projections >= 16, "/recorders/w2_projections", "must be at least 16");
  check(sweep.alphas.size() >= 4, "/sweep/alphas", "needs at least 4 values");
  double lo = INFINITY;
  double hi = 0.0;
  for (double a : sweep.alphas) {
    check(finite_pos(a), "/sweep/alphas", "values must be positive");
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  check(hi >= 16.0 * lo, "/sweep/alphas", "must span at least a 16x range");
  check(sweep.seeds >= 1, "/sweep/seeds", "must be at least 1");
  check(!generalize.n_grid.empty(), "/generalize/n_grid", "must not be empty");
  for (auto n : generalize.n_grid) check(n >= 1, "/generalize/n_grid", "values must be >= 1");
  check(generalize.seeds >= 1, "/generalize/seeds", "must be at least 1");
  check(generalize.test_n >= 1, "/generalize/test_n", "must be at least 1");
  check(generalize.steps >= 1, "/generalize/steps", "must be at least 1");
  check(generalize.delta > 0.0 && generalize.delta <= 1.0, "/generalize/delta",
        "must lie in (0, 1]");
  check(audit.talagrand_samples >= 1, "/audit/talagrand_samples", "must be at least 1");
  check(audit.tail_points >= 2, "/audit/tail_points", "must be at least 2");
  check(finite_pos(audit.tail_r_max), "/audit/tail_r_max", "must be positive");
  check(audit.tail_mc_samples >= 1000000, "/audit/tail_mc_samples", "must be at least 1e6");
  check(audit.activation_grid >= 1000, "/audit/activation_grid", "must be at least 1000");
  for (double t : bounds.times) check(t >= 0.0, "/bounds/times", "values must be >= 0");
  check(bounds.delta > 0.0 && bounds.delta <= 1.0, "/bounds/delta", "must lie in (0, 1]");
  check(finite_pos(tolerances.lambda_min_rel), "/tolerances/lambda_min_rel", "must be positive");
  check(finite_pos(tolerances.energy_rel), "/tolerances/energy_rel", "must be positive");
  check(tolerances.loss_envelope >= 1.0, "/tolerances/loss_envelope", "must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  ExperimentConfig cfg;
  {
    Reader r(j, "");
    if (r.has("experiment")) {
      std::string kind;
      r.text("experiment", kind);
      cfg.experiment = experiment_from_string(kind);
    }
    r.count("seed", cfg.seed);
    r.count("workers", cfg.workers);
    r.text("out_dir", cfg.out_dir);
    if (const Json* o = r.object("model")) read_model(*o, cfg.model);
    if (const Json* o = r.object("data")) read_data(*o, cfg.data);
    if (const Json* o = r.object("schedule")) read_schedule(*o, cfg.schedule);
    if (const Json* o = r.object("recorders")) read_recorders(*o, cfg.recorders);
    if (const Json* o = r.object("sweep")) read_sweep(*o, cfg.sweep);
    if (const Json* o = r.object("generalize")) read_generalize(*o, cfg.generalize);
    if (const Json* o = r.object("audit")) read_audit(*o, cfg.audit);
    if (const Json* o = r.object("bounds")) read_bounds(*o, cfg.bounds);
    if (const Json* o = r.object("tolerances")) read_tolerances(*o, cfg.tolerances);
    r.finish();
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  return to_json(cfg, false).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  return fnv1a_hex(to_json(cfg, true).dump());
}

HyperParams hyper_params(const ExperimentConfig& cfg, double alpha, std::uint64_t seed) {
  HyperParams hp;
  hp.alpha = alpha;
  hp.lambda = cfg.model.lambda;
  hp.sigma_u = cfg.model.sigma_u;
  hp.sigma_theta = cfg.model.sigma_theta;
  hp.eta = cfg.model.eta_alpha2 / (alpha * alpha);
  hp.d = cfg.data.d;
  hp.m = cfg.model.m;
  hp.n = cfg.data.n;
  hp.seed = seed;
  hp.activation = Activation::from_name(cfg.model.activation);
  return hp;
}

}  // namespace mflab
