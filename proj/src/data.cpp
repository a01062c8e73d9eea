#include "mflab/data.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mflab/rng.hpp"

namespace mflab {

namespace {

void sample_unit_ball(Stream& rng, std::span<double> x) {
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : x) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  } while (norm == 0.0);
  const double radius =
      std::pow(rng.uniform(), 1.0 / static_cast<double>(x.size()));
  for (double& v : x) v *= radius / norm;
  // Guard against rounding pushing the norm a hair above 1.
  const double after = norm2(x);
  if (after > 1.0)
    for (double& v : x) v /= after;
}

bool nearly_parallel(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return true;
  return std::abs(dot(a, b)) / (na * nb) > 0.999;
}

void check_matching_scales(const GaussianTeacher& t, double sigma_u,
                           double sigma_theta) {
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
  };
  if (!close(t.sigma_u, sigma_u) || !close(t.sigma_theta, sigma_theta))
    throw std::invalid_argument(
        "teacher covariance must equal the initialization covariance");
}

double mahalanobis_sq(const GaussianTeacher& t) {
  double s = 0.0;
  for (double m : t.mean_theta()) s += m * m / (t.sigma_theta * t.sigma_theta);
  s += t.mean_u() * t.mean_u() / (t.sigma_u * t.sigma_u);
  return s;
}

}  // namespace

Dataset make_synthetic(std::size_t n, std::size_t d, std::uint64_t seed,
                       LabelMode mode, const SyntheticOptions& options) {
  if (n == 0 || d == 0)
    throw std::invalid_argument("make_synthetic: n and d must be positive");
  if (mode == LabelMode::kTeacher) {
    if (options.teacher == nullptr)
      throw std::invalid_argument("make_synthetic: teacher mode needs a teacher");
    if (options.teacher->teacher.d() != d)
      throw std::invalid_argument("make_synthetic: teacher dimension mismatch");
  }

  Dataset ds;
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  ds.seed = seed;
  ds.mode = mode == LabelMode::kRademacher ? "rademacher" : "teacher";

  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Stream rng(seed, StreamDomain::kData, i, attempt);
      sample_unit_ball(rng, ds.inputs.row(i));
      if (!options.distinct) break;
      bool ok = true;
      for (std::size_t j = 0; j < i && ok; ++j)
        ok = !nearly_parallel(ds.inputs.row(i), ds.inputs.row(j));
      if (ok) break;
      if (attempt > 10000)
        throw std::runtime_error("make_synthetic: cannot place distinct inputs");
    }
  }

  if (mode == LabelMode::kRademacher) {
    Stream rng(seed, StreamDomain::kData, n, 0xfeed);
    for (auto& y : ds.labels) y = rng.rademacher();
    return ds;
  }

  const TeacherLabeling& tl = *options.teacher;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double y = teacher_label_quadrature(tl.teacher, tl.activation, ds.x(i));
    if (tl.classification) {
      if (std::abs(y) < 1e-12)
        throw std::invalid_argument(
            "make_synthetic: degenerate teacher labels (value 0 has no class)");
      if (std::abs(y) > 1.0) {
        y = std::copysign(1.0, y);
        ++clipped;
      }
    }
    ds.labels[i] = y;
  }
  ds.clip_rate = static_cast<double>(clipped) / static_cast<double>(n);
  return ds;
}

Estimate teacher_label(const GaussianTeacher& t, Activation act,
                       std::span<const double> x, std::size_t mc_samples,
                       std::uint64_t seed) {
  if (x.size() != t.d()) throw std::invalid_argument("teacher_label: dimension mismatch");
  if (act.kind() == ActivationKind::kIdentity)
    return {t.mean_u() * dot(t.mean_theta(), x), 0.0};
  if (mc_samples < 10000)
    throw std::invalid_argument("teacher_label: need at least 1e4 Monte Carlo samples");

  Stream rng(seed, StreamDomain::kMonteCarlo, 0x7eac);
  const double mean_z = dot(t.mean_theta(), x);
  const double sd_z = t.sigma_theta * norm2(x);
  // Welford accumulation of u·h̃(θ⊤x) with θ⊤x drawn as a scalar Gaussian.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < mc_samples; ++k) {
    const double u = t.mean_u() + t.sigma_u * rng.normal();
    const double z = mean_z + sd_z * rng.normal();
    const double v = u * act.value(z);
    const double delta = v - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(mc_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(mc_samples))};
}

double teacher_label_quadrature(const GaussianTeacher& t, Activation act,
                                std::span<const double> x) {
  if (x.size() != t.d())
    throw std::invalid_argument("teacher_label_quadrature: dimension mismatch");
  const double mean_z = dot(t.mean_theta(), x);
  const double sd_z = t.sigma_theta * norm2(x);
  if (sd_z == 0.0) return t.mean_u() * act.value(mean_z);

  constexpr int kIntervals = 2000;  // even
  constexpr double kHalfWidth = 10.0;
  const double step = 2.0 * kHalfWidth / kIntervals;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (int k = 0; k <= kIntervals; ++k) {
    const double z = -kHalfWidth + step * k;
    const double w = (k == 0 || k == kIntervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * act.value(mean_z + sd_z * z) * std::exp(-0.5 * z * z);
  }
  return t.mean_u() * acc * step / 3.0 * inv_sqrt_2pi;
}

double chi2_to_init(const GaussianTeacher& t, double sigma_u, double sigma_theta) {
  check_matching_scales(t, sigma_u, sigma_theta);
  return std::expm1(mahalanobis_sq(t));
}

double kl_to_init(const GaussianTeacher& t, double sigma_u, double sigma_theta) {
  check_matching_scales(t, sigma_u, sigma_theta);
  return 0.5 * mahalanobis_sq(t);
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path,
                       const ArtifactHeader& header) {
  std::string out = csv_header_comment(header);
  for (std::size_t k = 0; k < ds.d(); ++k) out += fmt::format("x{},", k);
  out += "y\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (double v : ds.x(i)) out += format_double(v) + ",";
    out += format_double(ds.labels[i]) + "\n";
  }
  write_text_file(path, out);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::size_t d = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields.size() < 2 || fields.back() != "y")
        throw std::runtime_error(fmt::format("{}:{}: expected header x0,...,y",
                                             path.string(), line_no));
      for (std::size_t k = 0; k + 1 < fields.size(); ++k)
        if (fields[k] != fmt::format("x{}", k))
          throw std::runtime_error(fmt::format("{}:{}: bad header column '{}'",
                                               path.string(), line_no, fields[k]));
      d = fields.size() - 1;
      have_header = true;
      continue;
    }
    if (fields.size() != d + 1)
      throw std::runtime_error(fmt::format("{}:{}: expected {} fields, got {}",
                                           path.string(), line_no, d + 1,
                                           fields.size()));
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = std::stod(fields[k]);
      sq += v * v;
      xs.push_back(v);
    }
    if (std::sqrt(sq) > 1.0)
      throw std::runtime_error(fmt::format("{}:{}: input norm {} exceeds 1",
                                           path.string(), line_no, std::sqrt(sq)));
    ys.push_back(std::stod(fields[d]));
  }
  if (!have_header || ys.empty())
    throw std::runtime_error(path.string() + ": no data rows");
  Dataset ds;
  ds.inputs = Matrix(ys.size(), d);
  std::copy(xs.begin(), xs.end(), ds.inputs.data().begin());
  ds.labels = std::move(ys);
  ds.mode = "csv";
  return ds;
}

}  // namespace mflab
