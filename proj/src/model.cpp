#include "mflab/model.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mflab/rng.hpp"

namespace mflab {

void HyperParams::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive and finite");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be non-negative");
  if (!(sigma_u > 0.0)) fail("sigma_u must be positive");
  if (!(sigma_theta > 0.0)) fail("sigma_theta must be positive");
  if (!(eta > 0.0)) fail("eta must be positive");
  if (d == 0) fail("d must be at least 1");
  if (m == 0) fail("m must be at least 1");
  if (n == 0) fail("n must be at least 1");
}

Ensemble init_ensemble(const HyperParams& hp, InitScheme scheme) {
  hp.validate();
  const std::size_t m = hp.m;
  const std::size_t d = hp.d;
  Ensemble e;
  e.thetas = Matrix(m, d);
  e.us.resize(m);

  if (scheme == InitScheme::kIid) {
    for (std::size_t j = 0; j < m; ++j) {
      Stream rng(hp.seed, StreamDomain::kInit, j);
      for (double& v : e.thetas.row(j)) v = hp.sigma_theta * rng.normal();
      e.us[j] = hp.sigma_u * rng.normal();
    }
    return e;
  }

  if (m % 2 != 0)
    throw std::invalid_argument("symmetric initialization needs an even particle count");
  for (std::size_t k = 0; k < m / 2; ++k) {
    Stream rng(hp.seed, StreamDomain::kInit, k);
    auto first = e.thetas.row(2 * k);
    for (double& v : first) v = hp.sigma_theta * rng.normal();
    auto second = e.thetas.row(2 * k + 1);
    std::copy(first.begin(), first.end(), second.begin());
    const double u = hp.sigma_u * rng.normal();
    e.us[2 * k] = u;
    e.us[2 * k + 1] = -u;
  }
  if (scheme == InitScheme::kSymmetricMomentMatched) {
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::size_t j = 0; j < m; ++j) mean += e.thetas(j, c);
      mean *= inv_m;
      double var = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double dv = e.thetas(j, c) - mean;
        var += dv * dv;
      }
      var *= inv_m;
      const double scale = var > 0.0 ? hp.sigma_theta / std::sqrt(var) : 1.0;
      for (std::size_t j = 0; j < m; ++j)
        e.thetas(j, c) = (e.thetas(j, c) - mean) * scale;
    }
    double second_moment = 0.0;
    for (double u : e.us) second_moment += u * u;
    second_moment *= inv_m;
    const double scale = second_moment > 0.0 ? hp.sigma_u / std::sqrt(second_moment) : 1.0;
    for (double& u : e.us) u *= scale;
  }
  return e;
}

double forward(const Ensemble& e, const HyperParams& hp, std::span<const double> x) {
  if (x.size() != e.d())
    throw std::invalid_argument(
        fmt::format("forward: input has dimension {}, expected {}", x.size(), e.d()));
  const std::size_t m = e.m();
  std::vector<double> partial(block_count(m));
  for (std::size_t b = 0; b < partial.size(); ++b) {
    double s = 0.0;
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j)
      s += e.us[j] * hp.activation.value(dot(e.thetas.row(j), x));
    partial[b] = s;
  }
  return hp.alpha / static_cast<double>(m) * pairwise_sum(partial);
}

namespace {

void check_dataset(const Ensemble& e, const Dataset& ds) {
  if (ds.n() == 0) throw std::invalid_argument("dataset is empty");
  if (ds.d() != e.d())
    throw std::invalid_argument(fmt::format(
        "dataset dimension {} does not match ensemble dimension {}", ds.d(), e.d()));
}

}  // namespace

double loss(const Ensemble& e, const HyperParams& hp, const Dataset& ds) {
  check_dataset(e, ds);
  BatchEvaluator eval(hp, ds);
  const auto& f = eval.predict(e);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double r = f[i] - ds.labels[i];
    s += r * r;
  }
  return s / static_cast<double>(ds.n());
}

double regularizer(const Ensemble& e, const HyperParams& hp) {
  if (hp.lambda == 0.0) return 0.0;
  const std::size_t m = e.m();
  std::vector<double> partial(block_count(m));
  const double cu = 1.0 / (2.0 * hp.sigma_u * hp.sigma_u);
  const double ct = 1.0 / (2.0 * hp.sigma_theta * hp.sigma_theta);
  for (std::size_t b = 0; b < partial.size(); ++b) {
    double s = 0.0;
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      const auto th = e.thetas.row(j);
      s += e.us[j] * e.us[j] * cu + dot(th, th) * ct;
    }
    partial[b] = s;
  }
  return hp.lambda / static_cast<double>(m) * pairwise_sum(partial);
}

double objective(const Ensemble& e, const HyperParams& hp, const Dataset& ds) {
  return loss(e, hp, ds) + regularizer(e, hp);
}

BatchEvaluator::BatchEvaluator(const HyperParams& hp, const Dataset& ds,
                               Executor* executor)
    : hp_(hp), ds_(ds), executor_(executor) {}

const std::vector<double>& BatchEvaluator::predict(const Ensemble& e) {
  check_dataset(e, ds_);
  const std::size_t m = e.m();
  const std::size_t n = ds_.n();
  const std::size_t d = ds_.d();
  const std::size_t blocks = block_count(m);
  h_.resize(m * n);
  slope_.resize(m * n);
  partial_.assign(blocks * n, 0.0);
  f_.assign(n, 0.0);

  const Activation act = hp_.activation;
  auto work = [&](std::size_t b) {
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    double* acc = partial_.data() + b * n;
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      const double* th = e.thetas.row(j).data();
      const double u = e.us[j];
      double* hj = h_.data() + j * n;
      double* sj = slope_.data() + j * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double* x = ds_.inputs.row(i).data();
        double z = 0.0;
        for (std::size_t c = 0; c < d; ++c) z += th[c] * x[c];
        act.value_and_slope(z, hj[i], sj[i]);
        acc[i] += u * hj[i];
      }
    }
  };
  if (executor_ != nullptr)
    executor_->run(blocks, work);
  else
    for (std::size_t b = 0; b < blocks; ++b) work(b);

  std::vector<double> column(blocks);
  const double scale = hp_.alpha / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < blocks; ++b) column[b] = partial_[b * n + i];
    f_[i] = scale * pairwise_sum(column);
  }
  return f_;
}

void BatchEvaluator::gradients(const Ensemble& e, std::span<const double> residual,
                               GradScaling scaling, Gradients& out) {
  const std::size_t m = e.m();
  const std::size_t n = ds_.n();
  const std::size_t d = ds_.d();
  if (residual.size() != n || h_.size() != m * n)
    throw std::logic_error("gradients: call predict() on this ensemble first");
  if (out.dtheta.rows() != m || out.dtheta.cols() != d) out.dtheta = Matrix(m, d);
  out.du.resize(m);

  const double data_scale = 2.0 * hp_.alpha / static_cast<double>(n);
  const double decay_u = hp_.lambda / (hp_.sigma_u * hp_.sigma_u);
  const double decay_t = hp_.lambda / (hp_.sigma_theta * hp_.sigma_theta);
  const double post = scaling == GradScaling::kRaw ? 1.0 / static_cast<double>(m) : 1.0;
  const double* r = residual.data();

  auto work = [&](std::size_t b) {
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    std::vector<double> gth(d);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      const double* hj = h_.data() + j * n;
      const double* sj = slope_.data() + j * n;
      const double u = e.us[j];
      double gu = 0.0;
      std::fill(gth.begin(), gth.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        gu += r[i] * hj[i];
        const double w = r[i] * sj[i];
        const double* x = ds_.inputs.row(i).data();
        for (std::size_t c = 0; c < d; ++c) gth[c] += w * x[c];
      }
      out.du[j] = post * (data_scale * gu + decay_u * u);
      const double* th = e.thetas.row(j).data();
      double* dst = out.dtheta.row(j).data();
      for (std::size_t c = 0; c < d; ++c)
        dst[c] = post * (data_scale * u * gth[c] + decay_t * th[c]);
    }
  };
  const std::size_t blocks = block_count(m);
  if (executor_ != nullptr)
    executor_->run(blocks, work);
  else
    for (std::size_t b = 0; b < blocks; ++b) work(b);
}

Gradients grads(const Ensemble& e, const HyperParams& hp, const Dataset& ds,
                GradScaling scaling) {
  BatchEvaluator eval(hp, ds);
  const auto& f = eval.predict(e);
  std::vector<double> r(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) r[i] = f[i] - ds.labels[i];
  Gradients g;
  eval.gradients(e, r, scaling, g);
  return g;
}

namespace {

void put_f64(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

double get_f64(const std::string& buf, std::size_t& pos) {
  if (pos + 8 > buf.size()) throw std::runtime_error("ensemble snapshot truncated");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + k])) << (8 * k);
  pos += 8;
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_ensemble_binary(const Ensemble& e, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(8 * (2 + e.m() * (e.d() + 1)));
  put_f64(buf, static_cast<double>(e.m()));
  put_f64(buf, static_cast<double>(e.d()));
  for (double v : e.thetas.data()) put_f64(buf, v);
  for (double u : e.us) put_f64(buf, u);
  write_text_file(path, buf);
}

Ensemble read_ensemble_binary(const std::filesystem::path& path) {
  const std::string buf = read_text_file(path);
  std::size_t pos = 0;
  const double m = get_f64(buf, pos);
  const double d = get_f64(buf, pos);
  if (!(m >= 1) || !(d >= 1) || m != std::floor(m) || d != std::floor(d))
    throw std::runtime_error("ensemble snapshot has an invalid header");
  Ensemble e;
  e.thetas = Matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(d));
  e.us.resize(static_cast<std::size_t>(m));
  for (double& v : e.thetas.data()) v = get_f64(buf, pos);
  for (double& u : e.us) u = get_f64(buf, pos);
  if (pos != buf.size()) throw std::runtime_error("ensemble snapshot has trailing bytes");
  return e;
}

void write_ensemble_csv(const Ensemble& e, const std::filesystem::path& path,
                        const ArtifactHeader& header) {
  std::string out = csv_header_comment(header);
  for (std::size_t c = 0; c < e.d(); ++c) out += fmt::format("theta{},", c);
  out += "u\n";
  for (std::size_t j = 0; j < e.m(); ++j) {
    for (double v : e.thetas.row(j)) out += format_double(v) + ",";
    out += format_double(e.us[j]) + "\n";
  }
  write_text_file(path, out);
}

}  // namespace mflab
