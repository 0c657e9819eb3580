#pragma once

// Problem constants of the convergence analysis and the closed-form bounds
// that consume them.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace vrpg {

/// L_J = M R / (1 - gamma)^2 + 2 G^2 R / (1 - gamma)^3.
inline double smoothness_constant(double g, double m, double r, double gamma) {
  const double c = 1.0 - gamma;
  return m * r / (c * c) + 2.0 * g * g * r / (c * c * c);
}

/// C_gamma = 24 R G^2 (2 G^2 + M) (W + 1) gamma / (1 - gamma)^5.
inline double variance_propagation_constant(double g, double m, double r, double w, double gamma) {
  return 24.0 * r * g * g * (2.0 * g * g + m) * (w + 1.0) * gamma / std::pow(1.0 - gamma, 5);
}

/// max(||grad J||, ||grad J^H||) <= G R / (1 - gamma)^2.
inline double gradient_norm_bound(double g, double r, double gamma) {
  return g * r / ((1.0 - gamma) * (1.0 - gamma));
}

/// ||grad J^H - grad J|| <= G R ((H + 1) / (1 - gamma) + gamma / (1 - gamma)^2) gamma^H.
inline double truncation_bias_bound(double g, double r, double gamma, int horizon) {
  const double c = 1.0 - gamma;
  return g * r * ((horizon + 1.0) / c + gamma / (c * c)) * std::pow(gamma, horizon);
}

/// Smallest H >= 1 whose truncation bias bound is at most epsilon / 2.
inline int horizon_for_accuracy(double g, double r, double gamma, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("horizon_for_accuracy: epsilon must be positive");
  for (int h = 1; h < 10'000'000; ++h)
    if (truncation_bias_bound(g, r, gamma, h) <= 0.5 * epsilon) return h;
  throw std::runtime_error("horizon_for_accuracy: no horizon found");
}

struct ConstantsReport {
  double G = 0.0;
  double M = 0.0;
  double R = 0.0;
  double gamma = 0.0;
  std::optional<double> sigma2_hat;
  std::optional<double> W_hat;
  /// Smallest Fisher eigenvalue over the probes; for tabular softmax measured on
  /// the complement of the per-state constant directions.
  double mu_F = 0.0;
  std::string mu_F_convention;
  double L_J = 0.0;
  double C_gamma = 0.0;
  double eps_bias = 0.0;
  double j_star = 0.0;
  double j_theta0 = 0.0;
  double kl_init = 0.0;
  double lambda = 0.0;

  /// Recomputes L_J and C_gamma from the stored inputs.
  void refresh_derived() {
    L_J = smoothness_constant(G, M, R, gamma);
    C_gamma = variance_propagation_constant(G, M, R, W_hat.value_or(0.0), gamma);
  }
};

}  // namespace vrpg
