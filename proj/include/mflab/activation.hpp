#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mflab {

enum class ActivationKind { kTanh, kSigmoid, kIdentity, kSoftplus };

/// h̃ and its first three derivatives at one point.
struct ActivationValues {
  double h = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  double h3 = 0.0;
};

/// Smoothness bounds for a scalar activation:
///   |h̃(z)| <= g1|z| + g2,  |h̃'| <= g3,  |h̃''| <= g4,
///   |(z h̃'(z))'| <= g5,    |h̃'''| <= g6,  and |h̃| <= g7 when bounded.
struct GConstants {
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  double g4 = 0.0;
  double g5 = 0.0;
  double g6 = 0.0;
  std::optional<double> g7;
};

class Activation {
 public:
  constexpr Activation() = default;
  constexpr explicit Activation(ActivationKind kind) : kind_(kind) {}

  /// Accepts "tanh", "sigmoid", "identity", "softplus".
  static Activation from_name(std::string_view name);

  ActivationKind kind() const { return kind_; }
  std::string_view name() const;

  ActivationValues eval(double z) const;
  double value(double z) const;
  /// h̃ and h̃' together; this is the hot path during training.
  void value_and_slope(double z, double& h, double& h1) const;

  bool operator==(const Activation&) const = default;

 private:
  ActivationKind kind_ = ActivationKind::kTanh;
};

/// Shipped smoothness constants; grid-maximized and rounded up to 4 decimals.
GConstants constants(Activation act);

struct AuditLine {
  std::string inequality;
  double bound = 0.0;
  double max_observed = 0.0;
  double argmax = 0.0;
  double margin = 0.0;  // max over the grid of (lhs - bound); <= 0 passes
};

struct AuditReport {
  std::string activation;
  std::size_t grid_size = 0;
  std::vector<AuditLine> lines;
  bool pass = true;
};

/// Checks every inequality of `g` on a uniform grid over [-20, 20] (plus the
/// origin). Requires grid_size >= 1000.
AuditReport audit_constants(Activation act, const GConstants& g,
                            std::size_t grid_size);

}  // namespace mflab
