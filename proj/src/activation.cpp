#include "mflab/activation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mflab {

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Activation Activation::from_name(std::string_view name) {
  if (name == "tanh") return Activation(ActivationKind::kTanh);
  if (name == "sigmoid") return Activation(ActivationKind::kSigmoid);
  if (name == "identity") return Activation(ActivationKind::kIdentity);
  if (name == "softplus") return Activation(ActivationKind::kSoftplus);
  throw std::invalid_argument("unknown activation '" + std::string(name) +
                              "' (expected tanh, sigmoid, identity or softplus)");
}

std::string_view Activation::name() const {
  switch (kind_) {
    case ActivationKind::kTanh: return "tanh";
    case ActivationKind::kSigmoid: return "sigmoid";
    case ActivationKind::kIdentity: return "identity";
    case ActivationKind::kSoftplus: return "softplus";
  }
  return "unknown";
}

ActivationValues Activation::eval(double z) const {
  switch (kind_) {
    case ActivationKind::kTanh: {
      const double t = std::tanh(z);
      const double s = 1.0 - t * t;
      return {t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)};
    }
    case ActivationKind::kSigmoid: {
      const double p = logistic(z);
      const double s1 = p * (1.0 - p);
      return {p, s1, s1 * (1.0 - 2.0 * p), s1 * (1.0 - 6.0 * p + 6.0 * p * p)};
    }
    case ActivationKind::kIdentity:
      return {z, 1.0, 0.0, 0.0};
    case ActivationKind::kSoftplus: {
      const double p = logistic(z);
      const double s1 = p * (1.0 - p);
      // log(1 + e^z) without overflow
      const double h = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
      return {h, p, s1, s1 * (1.0 - 2.0 * p)};
    }
  }
  return {};
}

double Activation::value(double z) const {
  switch (kind_) {
    case ActivationKind::kTanh: return std::tanh(z);
    case ActivationKind::kSigmoid: return logistic(z);
    case ActivationKind::kIdentity: return z;
    case ActivationKind::kSoftplus:
      return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  }
  return 0.0;
}

void Activation::value_and_slope(double z, double& h, double& h1) const {
  switch (kind_) {
    case ActivationKind::kTanh: {
      const double t = std::tanh(z);
      h = t;
      h1 = 1.0 - t * t;
      return;
    }
    case ActivationKind::kSigmoid: {
      const double p = logistic(z);
      h = p;
      h1 = p * (1.0 - p);
      return;
    }
    case ActivationKind::kIdentity:
      h = z;
      h1 = 1.0;
      return;
    case ActivationKind::kSoftplus:
      h = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
      h1 = logistic(z);
      return;
  }
}

GConstants constants(Activation act) {
  switch (act.kind()) {
    case ActivationKind::kTanh:
      // sup|tanh''| = 4/(3√3) = 0.76980...
      return {0.0, 1.0, 1.0, 0.7699, 1.0, 2.0, 1.0};
    case ActivationKind::kSigmoid:
      // sup|σ''| = 1/(6√3) = 0.096225...
      return {0.0, 1.0, 0.25, 0.0963, 0.25, 0.125, 1.0};
    case ActivationKind::kIdentity:
      return {1.0, 0.0, 1.0, 0.0, 1.0, 0.0, std::nullopt};
    case ActivationKind::kSoftplus:
      // log 2 = 0.693147..., sup|σ + zσ'| = 1.099839...
      return {1.0, 0.6932, 1.0, 0.25, 1.0999, 0.0963, std::nullopt};
  }
  return {};
}

AuditReport audit_constants(Activation act, const GConstants& g,
                            std::size_t grid_size) {
  if (grid_size < 1000)
    throw std::invalid_argument("audit_constants: grid_size must be >= 1000");

  struct Check {
    const char* name;
    double bound;
    double worst_lhs;
    double worst_z;
    double margin;
  };
  std::vector<Check> checks = {
      {"|h(z)| <= g1|z| + g2", 0.0, 0.0, 0.0, -INFINITY},
      {"|h'(z)| <= g3", g.g3, 0.0, 0.0, -INFINITY},
      {"|h''(z)| <= g4", g.g4, 0.0, 0.0, -INFINITY},
      {"|(z h'(z))'| <= g5", g.g5, 0.0, 0.0, -INFINITY},
      {"|h'''(z)| <= g6", g.g6, 0.0, 0.0, -INFINITY},
  };
  if (g.g7) checks.push_back({"|h(z)| <= g7", *g.g7, 0.0, 0.0, -INFINITY});

  auto visit = [&](double z) {
    const ActivationValues v = act.eval(z);
    const double lhs[] = {std::abs(v.h), std::abs(v.h1), std::abs(v.h2),
                          std::abs(v.h1 + z * v.h2), std::abs(v.h3), std::abs(v.h)};
    for (std::size_t c = 0; c < checks.size(); ++c) {
      const double bound = c == 0 ? g.g1 * std::abs(z) + g.g2 : checks[c].bound;
      const double margin = lhs[c] - bound;
      if (margin > checks[c].margin) {
        checks[c].margin = margin;
        checks[c].worst_lhs = lhs[c];
        checks[c].worst_z = z;
      }
    }
  };

  constexpr double kHalfWidth = 20.0;
  for (std::size_t k = 0; k < grid_size; ++k) {
    visit(-kHalfWidth + 2.0 * kHalfWidth * static_cast<double>(k) /
                            static_cast<double>(grid_size - 1));
  }
  visit(0.0);

  AuditReport report;
  report.activation = std::string(act.name());
  report.grid_size = grid_size;
  for (const auto& c : checks) {
    AuditLine line;
    line.inequality = c.name;
    line.bound = &c == &checks.front() ? g.g1 * std::abs(c.worst_z) + g.g2 : c.bound;
    line.max_observed = c.worst_lhs;
    line.argmax = c.worst_z;
    line.margin = c.margin;
    report.pass = report.pass && c.margin <= 0.0;
    report.lines.push_back(line);
  }
  return report;
}

}  // namespace mflab
