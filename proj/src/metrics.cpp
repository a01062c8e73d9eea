#include "mflab/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mflab/rng.hpp"

namespace mflab {

Matrix ensemble_points(const Ensemble& e) {
  const std::size_t d = e.d();
  Matrix p(e.m(), d + 1);
  for (std::size_t j = 0; j < e.m(); ++j) {
    const auto th = e.thetas.row(j);
    std::copy(th.begin(), th.end(), p.row(j).begin());
    p(j, d) = e.us[j];
  }
  return p;
}

std::vector<std::size_t> hungarian_assignment(const Matrix& cost, double* total) {
  if (cost.rows() != cost.cols())
    throw std::invalid_argument("hungarian_assignment: cost matrix must be square");
  const std::size_t n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  if (total != nullptr) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost(i, row_to_col[i]);
    *total = s;
  }
  return row_to_col;
}

double w2_exact(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("w2_exact: point sets must have equal size and dimension");
  if (a.rows() == 0) throw std::invalid_argument("w2_exact: empty point sets");
  if (a.rows() > kW2ExactMaxPoints)
    throw std::invalid_argument(fmt::format(
        "w2_exact: {} points exceeds the exact-assignment cap of {}; use w2_sliced",
        a.rows(), kW2ExactMaxPoints));
  const std::size_t m = a.rows();
  Matrix cost(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        s += diff * diff;
      }
      cost(i, j) = s;
    }
  const std::vector<std::size_t> match = hungarian_assignment(cost);
  // Sorted before summing so that w2_exact(a, b) == w2_exact(b, a) bit for bit.
  std::vector<double> pairs(m);
  for (std::size_t i = 0; i < m; ++i) pairs[i] = cost(i, match[i]);
  std::sort(pairs.begin(), pairs.end());
  return std::sqrt(pairwise_sum(pairs) / static_cast<double>(m));
}

SlicedEstimate w2_sliced_estimate(const Matrix& a, const Matrix& b,
                                  std::size_t n_projections, std::uint64_t seed,
                                  Executor* executor) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0)
    throw std::invalid_argument("w2_sliced: point sets must have equal size and dimension");
  if (n_projections < 16)
    throw std::invalid_argument("w2_sliced: need at least 16 projections");
  const std::size_t m = a.rows();
  const std::size_t dim = a.cols();
  std::vector<double> per_direction(n_projections);

  auto work = [&](std::size_t p) {
    Stream rng(seed, StreamDomain::kProjection, p);
    std::vector<double> dir(dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& c : dir) {
        c = rng.normal();
        norm += c * c;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& c : dir) c /= norm;
    std::vector<double> pa(m), pb(m);
    for (std::size_t i = 0; i < m; ++i) {
      pa[i] = dot(a.row(i), dir);
      pb[i] = dot(b.row(i), dir);
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    per_direction[p] = s / static_cast<double>(m);
  };
  if (executor != nullptr)
    executor->run(n_projections, work);
  else
    for (std::size_t p = 0; p < n_projections; ++p) work(p);

  const double mean = pairwise_sum(per_direction) / static_cast<double>(n_projections);
  double var = 0.0;
  for (double v : per_direction) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n_projections - 1);
  SlicedEstimate out;
  out.value = std::sqrt(mean);
  const double se_sq = std::sqrt(var / static_cast<double>(n_projections));
  out.std_error = out.value > 0.0 ? se_sq / (2.0 * out.value) : std::sqrt(se_sq);
  return out;
}

double w2_sliced(const Matrix& a, const Matrix& b, std::size_t n_projections,
                 std::uint64_t seed) {
  return w2_sliced_estimate(a, b, n_projections, seed).value;
}

double kl_diag_gaussian_to_init(std::span<const double> mean,
                                std::span<const double> var, const HyperParams& hp) {
  if (mean.size() != var.size() || mean.empty())
    throw std::invalid_argument("kl_diag_gaussian_to_init: size mismatch");
  const std::size_t dim = mean.size();
  double kl = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    if (!(var[c] > 0.0)) return std::numeric_limits<double>::infinity();
    const double s2 = c + 1 == dim ? hp.sigma_u * hp.sigma_u
                                   : hp.sigma_theta * hp.sigma_theta;
    const double ratio = var[c] / s2;
    // ratio − 1 − log(ratio) computed without cancellation near ratio = 1
    const double excess = (ratio - 1.0) - std::log1p(ratio - 1.0);
    kl += 0.5 * (excess + mean[c] * mean[c] / s2);
  }
  return kl;
}

double kl_gaussian_surrogate(const Ensemble& e, const HyperParams& hp) {
  const std::size_t m = e.m();
  if (m < 2) throw std::invalid_argument("kl_gaussian_surrogate: need m >= 2");
  const std::size_t d = e.d();
  std::vector<double> mean(d + 1), var(d + 1), column(m);
  for (std::size_t c = 0; c <= d; ++c) {
    for (std::size_t j = 0; j < m; ++j) column[j] = c < d ? e.thetas(j, c) : e.us[j];
    const double mu = pairwise_sum(column) / static_cast<double>(m);
    for (double& v : column) v = (v - mu) * (v - mu);
    mean[c] = mu;
    var[c] = pairwise_sum(column) / static_cast<double>(m);
  }
  return kl_diag_gaussian_to_init(mean, var, hp);
}

double kl_knn(const Ensemble& e, const HyperParams& hp, std::size_t k,
              std::size_t ref_samples, std::uint64_t seed, Executor* executor) {
  const std::size_t m = e.m();
  if (m < 100) throw std::invalid_argument("kl_knn: need m >= 100");
  if (k < 1) throw std::invalid_argument("kl_knn: k must be at least 1");
  if (ref_samples <= k) throw std::invalid_argument("kl_knn: too few reference samples");
  const Matrix x = ensemble_points(e);
  const std::size_t dim = x.cols();
  Matrix ref(ref_samples, dim);
  for (std::size_t j = 0; j < ref_samples; ++j) {
    Stream rng(seed, StreamDomain::kReference, j);
    for (std::size_t c = 0; c < dim; ++c)
      ref(j, c) = (c + 1 == dim ? hp.sigma_u : hp.sigma_theta) * rng.normal();
  }

  // k-th smallest squared distance from point p to the rows of `pts`.
  auto kth = [&](std::span<const double> p, const Matrix& pts, std::size_t skip) {
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < pts.rows(); ++j) {
      if (j == skip) continue;
      double s = 0.0;
      const auto q = pts.row(j);
      for (std::size_t c = 0; c < dim; ++c) s += (p[c] - q[c]) * (p[c] - q[c]);
      if (s < best.back()) {
        std::size_t pos = k - 1;
        while (pos > 0 && best[pos - 1] > s) {
          best[pos] = best[pos - 1];
          --pos;
        }
        best[pos] = s;
      }
    }
    return best.back();
  };

  std::vector<double> terms(m);
  constexpr double kFloor = 1e-300;
  auto work = [&](std::size_t b) {
    const std::size_t end = std::min(m, (b + 1) * kBlockSize);
    for (std::size_t i = b * kBlockSize; i < end; ++i) {
      const double rho = kth(x.row(i), x, i);
      const double nu = kth(x.row(i), ref, ref_samples);
      // squared distances: log ratio of distances is half the log ratio
      terms[i] = 0.5 * std::log(std::max(nu, kFloor) / std::max(rho, kFloor));
    }
  };
  const std::size_t blocks = block_count(m);
  if (executor != nullptr)
    executor->run(blocks, work);
  else
    for (std::size_t b = 0; b < blocks; ++b) work(b);

  return static_cast<double>(dim) / static_cast<double>(m) * pairwise_sum(terms) +
         std::log(static_cast<double>(ref_samples) / static_cast<double>(m - 1));
}

double energy(const Ensemble& e, const HyperParams& hp, const Dataset& ds) {
  const double l = loss(e, hp, ds);
  if (hp.lambda == 0.0) return l;
  return l + hp.lambda * kl_gaussian_surrogate(e, hp);
}

TalagrandResult talagrand_audit(std::span<const double> mean,
                                std::span<const double> variances,
                                const HyperParams& hp) {
  if (mean.size() != variances.size() || mean.empty())
    throw std::invalid_argument("talagrand_audit: size mismatch");
  const std::size_t dim = mean.size();
  double w2sq = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    if (!(variances[c] > 0.0))
      throw std::invalid_argument("talagrand_audit: variances must be positive");
    const double s = c + 1 == dim ? hp.sigma_u : hp.sigma_theta;
    const double diff = std::sqrt(variances[c]) - s;
    w2sq += mean[c] * mean[c] + diff * diff;
  }
  TalagrandResult out;
  out.lhs = std::sqrt(w2sq);
  out.rhs = 2.0 * hp.max_sigma() * std::sqrt(kl_diag_gaussian_to_init(mean, variances, hp));
  out.pass = out.lhs <= out.rhs + 1e-12;
  return out;
}

TailBoundReport tail_bound_audit(const HyperParams& hp, std::span<const double> r_grid,
                                 std::size_t mc_samples, std::uint64_t seed) {
  if (mc_samples < 1000000)
    throw std::invalid_argument("tail_bound_audit: need at least 1e6 samples");
  const double s = hp.sigma_u;
  const double s2 = s * s;
  std::vector<double> abs_u(mc_samples);
  Stream rng(seed, StreamDomain::kMonteCarlo, 0x7a11);
  for (double& a : abs_u) a = std::abs(s * rng.normal());

  TailBoundReport report;
  const double nd = static_cast<double>(mc_samples);
  for (double r : r_grid) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double a : abs_u) {
      if (a >= r) {
        const double v = a * a;
        sum += v;
        sum_sq += v * v;
      }
    }
    TailBoundRow row;
    row.r = r;
    row.mc_lhs = sum / nd;
    const double var = std::max(sum_sq / nd - row.mc_lhs * row.mc_lhs, 0.0);
    row.mc_std_error = std::sqrt(var / nd);
    const double z = r / s;
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    row.exact_lhs = s2 * (2.0 * z * phi + std::erfc(z / std::numbers::sqrt2));
    const double decay = std::exp(-r * r / (4.0 * s2));
    row.paper_rhs = 0.5 * s2 * decay;
    row.corrected_rhs = 2.0 * s2 * decay;
    row.paper_violated = row.exact_lhs > row.paper_rhs;
    row.corrected_pass = row.mc_lhs <= row.corrected_rhs + 3.0 * row.mc_std_error &&
                         row.exact_lhs <= row.corrected_rhs;
    report.corrected_all_pass = report.corrected_all_pass && row.corrected_pass;
    report.paper_all_pass = report.paper_all_pass && !row.paper_violated;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace mflab
