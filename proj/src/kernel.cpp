#include "mflab/kernel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <json.hpp>
#include <stdexcept>

namespace mflab {

namespace {

/// Dot product over particles: sequential inside fixed blocks, pairwise
/// across blocks.
double blocked_dot(const double* a, const double* b, std::size_t m) {
  std::vector<double> partial(block_count(m));
  for (std::size_t blk = 0; blk < partial.size(); ++blk) {
    const std::size_t end = std::min(m, (blk + 1) * kBlockSize);
    double s = 0.0;
    for (std::size_t k = blk * kBlockSize; k < end; ++k) s += a[k] * b[k];
    partial[blk] = s;
  }
  return pairwise_sum(partial);
}

struct ActivationTable {
  // n × m, row i holds values over particles
  std::vector<double> h;
  std::vector<double> weighted_slope;  // |u_k| h̃'(θ_k⊤x_i)
};

ActivationTable tabulate(const Ensemble& e, const Dataset& ds, Activation act) {
  if (ds.d() != e.d()) throw std::invalid_argument("gram: dimension mismatch");
  const std::size_t m = e.m();
  const std::size_t n = ds.n();
  ActivationTable t;
  t.h.resize(n * m);
  t.weighted_slope.resize(n * m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto th = e.thetas.row(k);
    const double au = std::abs(e.us[k]);
    for (std::size_t i = 0; i < n; ++i) {
      double h = 0.0;
      double s = 0.0;
      act.value_and_slope(dot(th, ds.x(i)), h, s);
      t.h[i * m + k] = h;
      t.weighted_slope[i * m + k] = au * s;
    }
  }
  return t;
}

void run_rows(Executor* executor, std::size_t n,
              const std::function<void(std::size_t)>& fn) {
  if (executor != nullptr)
    executor->run(n, fn);
  else
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace

GramMatrix make_gram(Matrix entries, std::string source, std::size_t m_used) {
  if (entries.rows() != entries.cols())
    throw std::invalid_argument("Gram matrix must be square");
  const std::size_t n = entries.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (entries(i, j) + entries(j, i));
      entries(i, j) = avg;
      entries(j, i) = avg;
    }
  return {std::move(entries), std::move(source), m_used};
}

double gram_trace(const Ensemble& e, const Dataset& ds, Activation act) {
  if (ds.d() != e.d()) throw std::invalid_argument("gram_trace: dimension mismatch");
  const std::size_t m = e.m();
  std::vector<double> diag(ds.n());
  std::vector<double> terms(m);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto x = ds.x(i);
    const double xx = dot(x, x);
    for (std::size_t k = 0; k < m; ++k) {
      double h = 0.0;
      double s = 0.0;
      act.value_and_slope(dot(e.thetas.row(k), x), h, s);
      terms[k] = e.us[k] * e.us[k] * s * s * xx + h * h;
    }
    diag[i] = pairwise_sum(terms) / static_cast<double>(m);
  }
  return pairwise_sum(diag);
}

GramParts gram_all(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor, std::string source) {
  const ActivationTable t = tabulate(e, ds, act);
  const std::size_t m = e.m();
  const std::size_t n = ds.n();
  const double inv_m = 1.0 / static_cast<double>(m);
  Matrix h1(n, n);
  Matrix h2(n, n);
  run_rows(executor, n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double k2 = blocked_dot(&t.h[i * m], &t.h[j * m], m) * inv_m;
      const double k1 = blocked_dot(&t.weighted_slope[i * m],
                                    &t.weighted_slope[j * m], m) *
                        inv_m * dot(ds.x(i), ds.x(j));
      h1(i, j) = h1(j, i) = k1;
      h2(i, j) = h2(j, i) = k2;
    }
  });
  Matrix h(n, n);
  for (std::size_t k = 0; k < h.data().size(); ++k)
    h.data()[k] = h1.data()[k] + h2.data()[k];
  return {make_gram(std::move(h1), source, m), make_gram(std::move(h2), source, m),
          make_gram(std::move(h), source, m)};
}

GramMatrix gram_h1(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor) {
  return gram_all(e, ds, act, executor).h1;
}

GramMatrix gram_h2(const Ensemble& e, const Dataset& ds, Activation act,
                   Executor* executor) {
  return gram_all(e, ds, act, executor).h2;
}

double min_eigenvalue(const GramMatrix& g) {
  if (g.n() > 2048)
    throw std::invalid_argument("min_eigenvalue: dense routine limited to n <= 2048");
  return min_eigenvalue(g.entries);
}

GramSpectrum spectrum(const GramMatrix& g) {
  if (g.n() > 2048)
    throw std::invalid_argument("spectrum: dense routine limited to n <= 2048");
  const SymmetricEigen eig = jacobi_eigen(g.entries);
  GramSpectrum s;
  s.lambda_min = eig.values.front();
  s.lambda_max = eig.values.back();
  for (std::size_t i = 0; i < g.n(); ++i) s.trace += g(i, i);
  const double n = static_cast<double>(g.n());
  s.positive_definite = s.lambda_min > 1e-10 * s.trace / n;
  s.lambda0 = s.positive_definite ? std::sqrt(s.lambda_min / n) : 0.0;
  return s;
}

KernelDrift kernel_drift(const GramMatrix& h_t, const GramMatrix& h_0) {
  if (h_t.n() != h_0.n())
    throw std::invalid_argument(
        fmt::format("kernel_drift: sizes {} and {} differ", h_t.n(), h_0.n()));
  KernelDrift out;
  out.inf_inf = max_abs_diff(h_t.entries, h_0.entries);
  out.spectral_upper = static_cast<double>(h_t.n()) * out.inf_inf;
  return out;
}

std::vector<double> reg_drift(const Ensemble& e, const HyperParams& hp,
                              const Dataset& ds) {
  if (ds.d() != e.d()) throw std::invalid_argument("reg_drift: dimension mismatch");
  const std::size_t m = e.m();
  const double inv_su2 = 1.0 / (hp.sigma_u * hp.sigma_u);
  const double inv_st2 = 1.0 / (hp.sigma_theta * hp.sigma_theta);
  std::vector<double> out(ds.n());
  std::vector<double> terms(m);
  std::vector<double> ones(m, 1.0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto x = ds.x(i);
    const double xx = dot(x, x);
    for (std::size_t k = 0; k < m; ++k) {
      const double z = dot(e.thetas.row(k), x);
      const ActivationValues v = hp.activation.eval(z);
      terms[k] = e.us[k] * (v.h * inv_su2 + v.h1 * z * inv_st2 - v.h2 * xx);
    }
    out[i] = blocked_dot(terms.data(), ones.data(), m) / static_cast<double>(m);
  }
  return out;
}

void write_gram_csv(const GramMatrix& g, const std::filesystem::path& path,
                    const ArtifactHeader& header) {
  std::string out = csv_header_comment(header);
  for (std::size_t i = 0; i < g.n(); ++i) {
    for (std::size_t j = 0; j < g.n(); ++j) {
      if (j) out += ",";
      out += format_double(g(i, j));
    }
    out += "\n";
  }
  write_text_file(path, out);
}

std::string gram_summary_json(const GramMatrix& g, const ArtifactHeader& header) {
  double trace = 0.0;
  for (std::size_t i = 0; i < g.n(); ++i) trace += g(i, i);
  nlohmann::ordered_json j;
  j["config_hash"] = header.config_hash;
  j["seed"] = header.seed;
  j["n"] = g.n();
  j["lambda_min"] = min_eigenvalue(g);
  j["trace"] = trace;
  return j.dump(2) + "\n";
}

}  // namespace mflab
