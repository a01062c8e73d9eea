#include "mflab/ntk_flow.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace mflab {

NtkFlow::NtkFlow(const GramMatrix& h0, std::vector<double> y, double alpha,
                 std::vector<double> f0)
    : h0_(h0.entries), y_(std::move(y)), alpha_(alpha), f0_(std::move(f0)) {
  if (y_.size() != h0.n())
    throw std::invalid_argument("NtkFlow: label count does not match the Gram matrix");
  if (f0_.empty()) f0_.assign(y_.size(), 0.0);
  if (f0_.size() != y_.size())
    throw std::invalid_argument("NtkFlow: initial output count does not match the labels");
  if (!(alpha > 0.0)) throw std::invalid_argument("NtkFlow: alpha must be positive");
  SymmetricEigen eig = jacobi_eigen(h0_);
  eigvals_ = std::move(eig.values);
  eigvecs_ = std::move(eig.vectors);
  y_coeffs_.resize(n());
  for (std::size_t k = 0; k < n(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n(); ++i) s += eigvecs_(i, k) * (y_[i] - f0_[i]);
    y_coeffs_[k] = s;
  }
}

double NtkFlow::rate(std::size_t k) const {
  return 2.0 * alpha_ * alpha_ / static_cast<double>(n()) * eigvals_[k];
}

std::vector<double> NtkFlow::closed_form(double t) const {
  if (!(t >= 0.0)) throw std::invalid_argument("closed_form: t must be non-negative");
  std::vector<double> f = f0_;
  for (std::size_t k = 0; k < n(); ++k) {
    // 1 − e^{−rt}, accurate for small rt
    const double w = -std::expm1(-rate(k) * t) * y_coeffs_[k];
    for (std::size_t i = 0; i < n(); ++i) f[i] += eigvecs_(i, k) * w;
  }
  return f;
}

double NtkFlow::max_stable_step() const {
  const double top = rate(n() - 1);
  return top > 0.0 ? 2.0 / top : INFINITY;
}

std::vector<std::vector<double>> NtkFlow::euler(double eta, std::size_t steps) const {
  if (!(eta > 0.0) || !(eta < max_stable_step()))
    throw std::invalid_argument(fmt::format(
        "euler: step {} is not stable; the largest stable step is {}", eta,
        max_stable_step()));
  const double c = 2.0 * alpha_ * alpha_ / static_cast<double>(n()) * eta;
  std::vector<std::vector<double>> traj;
  traj.reserve(steps + 1);
  std::vector<double> f = f0_;
  traj.push_back(f);
  std::vector<double> r(n());
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < n(); ++i) r[i] = f[i] - y_[i];
    const std::vector<double> hr = multiply(h0_, r);
    for (std::size_t i = 0; i < n(); ++i) f[i] -= c * hr[i];
    traj.push_back(f);
  }
  return traj;
}

double residual_gap(std::span<const double> f_particle, std::span<const double> f_ntk) {
  if (f_particle.size() != f_ntk.size() || f_particle.empty())
    throw std::invalid_argument("residual_gap: vectors must have the same nonzero size");
  double s = 0.0;
  for (std::size_t i = 0; i < f_ntk.size(); ++i) {
    const double diff = f_particle[i] - f_ntk[i];
    s += diff * diff;
  }
  return s / static_cast<double>(f_ntk.size());
}

void write_ntk_flow_csv(const NtkFlow& flow, std::span<const double> times,
                        const std::filesystem::path& path, const ArtifactHeader& header) {
  std::string out = csv_header_comment(header);
  out += "t";
  for (std::size_t i = 0; i < flow.n(); ++i) out += fmt::format(",f_{}", i + 1);
  out += ",residual_norm\n";
  for (double t : times) {
    const auto f = flow.closed_form(t);
    double rr = 0.0;
    out += format_double(t);
    for (std::size_t i = 0; i < flow.n(); ++i) {
      out += "," + format_double(f[i]);
      const double r = f[i] - flow.labels()[i];
      rr += r * r;
    }
    out += "," + format_double(std::sqrt(rr)) + "\n";
  }
  write_text_file(path, out);
}

}  // namespace mflab
