#pragma once

// Compatible function approximation subproblems of natural policy gradient:
// exact damped Fisher solves and the two averaged-SGD procedures.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <type_traits>

#include "vrpg/estimators.hpp"
#include "vrpg/mdp.hpp"
#include "vrpg/policy.hpp"
#include "vrpg/sampler.hpp"

namespace vrpg {

/// Averaged SGD settings. The iterate average is (1/T) sum_{t=1..T} w_t with w_0 = 0.
struct SgdConfig {
  int iterations = 1000;
  /// Stepsize alpha; nonpositive means 1/(4 G^2) with G supplied by the caller.
  double stepsize = 0.0;
  /// Ridge term added to the stochastic gradient so the minimizer is (F + lambda I)^{-1} target.
  double lambda = 0.0;
  /// Use the oracle advantage table instead of rollout estimates (tabular only).
  bool exact_adv = false;
  /// Advantage rollout horizon; 0 selects default_advantage_horizon.
  int adv_horizon = 0;
};

inline double default_sgd_stepsize(double g_bound) { return 1.0 / (4.0 * g_bound * g_bound); }

inline void validate(const SgdConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("SgdConfig: iterations must be >= 1");
  if (!(cfg.stepsize > 0.0)) throw std::invalid_argument("SgdConfig: stepsize must be positive");
  if (cfg.lambda < 0.0) throw std::invalid_argument("SgdConfig: lambda must be nonnegative");
}

enum class DirectionKind { exact_damped, sgd_procedure1, sgd_procedure2 };

struct NpgDirection {
  Vector w;
  DirectionKind kind = DirectionKind::exact_damped;
  std::optional<double> residual_estimate;
  std::int64_t trajectories_used = 0;
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L(w) = E_nu[(A(s,a) - (1 - gamma) w^T score(s,a))^2], exact over a tabular nu.
template <DiscretePolicy P>
double compatible_loss(const P& family, const Vector& theta, const Matrix& nu, const Matrix& adv, const Vector& w,
                       double gamma) {
  if (w.size() != family.dim()) throw std::invalid_argument("compatible_loss: dimension mismatch");
  if (nu.rows() != family.n_states() || nu.cols() != family.n_actions() || adv.rows() != nu.rows() ||
      adv.cols() != nu.cols())
    throw std::invalid_argument("compatible_loss: table shape mismatch");
  double loss = 0.0;
  for (int s = 0; s < family.n_states(); ++s) {
    for (int a = 0; a < family.n_actions(); ++a) {
      if (nu(s, a) == 0.0) continue;
      const double resid = adv(s, a) - (1.0 - gamma) * w.dot(score(family, theta, s, a));
      loss += nu(s, a) * resid * resid;
    }
  }
  return loss;
}

/// Solves (F + lambda I) w = target by Cholesky.
inline NpgDirection exact_npg_direction(const Matrix& fisher, const Vector& target, double lambda) {
  if (fisher.rows() != fisher.cols() || fisher.rows() != target.size())
    throw std::invalid_argument("exact_npg_direction: dimension mismatch");
  const Matrix damped = fisher + lambda * Matrix::Identity(fisher.rows(), fisher.cols());
  const Eigen::LLT<Matrix> llt(damped);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("exact_npg_direction: F + lambda I is not positive definite");
  // Cholesky also succeeds on numerically semidefinite matrices; reject pivots at round-off level.
  const Vector pivots = llt.matrixL().toDenseMatrix().diagonal().array().square();
  if (pivots.minCoeff() <= 1e-14 * pivots.maxCoeff())
    throw NotPositiveDefinite("exact_npg_direction: F + lambda I is numerically singular");
  NpgDirection out;
  out.w = llt.solve(target);
  // One step of iterative refinement keeps the residual at round-off level.
  out.w += llt.solve(target - damped * out.w);
  out.kind = DirectionKind::exact_damped;
  out.residual_estimate = 0.0;
  return out;
}

inline NpgDirection exact_npg_direction(const FisherMatrix& fisher, const Vector& target, double lambda) {
  return exact_npg_direction(fisher.f, target, lambda);
}

/// Exact damped NPG direction (F_rho(theta) + lambda I)^{-1} grad J(theta) on a tabular MDP.
template <DiscretePolicy P>
Vector exact_npg_target(const TabularMdp& mdp, const P& family, const Vector& theta, double lambda) {
  const auto pe = policy_evaluate(mdp, policy_table(family, theta));
  const auto fisher = fisher_exact(family, theta, pe.nu_rho);
  return exact_npg_direction(fisher, exact_policy_gradient(mdp, family, theta), lambda).w;
}

namespace detail {

template <class Env, class P>
constexpr bool has_oracle_v = std::is_same_v<Env, TabularMdp> && DiscretePolicy<P>;

}  // namespace detail

/// Averaged SGD on l(w) = L_nu(w; theta) / (2 (1 - gamma)^2) with stochastic
/// gradient (w^T score - A_hat / (1 - gamma)) score + lambda w and (s, a) ~ nu.
template <Environment Env, PolicyFamily P>
NpgDirection npg_sgd(Sampler<Env, P>& sampler, const Vector& theta, const SgdConfig& cfg, RngStream& rng) {
  validate(cfg);
  const Env& env = sampler.env();
  const P& family = sampler.policy();
  const double gamma = env.discount();
  const int h_adv = cfg.adv_horizon > 0 ? cfg.adv_horizon : default_advantage_horizon(gamma, env.bound());

  Matrix adv_table;
  if (cfg.exact_adv) {
    if constexpr (detail::has_oracle_v<Env, P>) {
      adv_table = policy_evaluate(env, policy_table(family, theta)).adv;
    } else {
      throw std::invalid_argument("npg_sgd: exact_adv requires a tabular MDP and a discrete family");
    }
  }

  const std::int64_t start = sampler.trajectories();
  Vector w = Vector::Zero(family.dim());
  Vector sum = Vector::Zero(family.dim());
  Vector sc(family.dim());
  for (int t = 0; t < cfg.iterations; ++t) {
    const auto [s, a, len] = sampler.sample_nu(theta, rng);
    double adv = 0.0;
    if (cfg.exact_adv) {
      if constexpr (detail::has_oracle_v<Env, P>) adv = adv_table(s, a);
    } else {
      adv = sampler.estimate_advantage(theta, s, a, rng, h_adv);
    }
    sc.setZero();
    family.accumulate_score(theta, s, a, 1.0, sc);
    const double coef = w.dot(sc) - adv / (1.0 - gamma);
    w -= cfg.stepsize * (coef * sc + cfg.lambda * w);
    sum += w;
  }
  NpgDirection out;
  out.w = sum / static_cast<double>(cfg.iterations);
  out.kind = DirectionKind::sgd_procedure1;
  out.trajectories_used = sampler.trajectories() - start;
  return out;
}

/// Averaged SGD on l(w) = (E_nu[(w^T score)^2] - 2 <w, u>) / 2 with stochastic
/// gradient (w^T score) score - u + lambda w. Approximates (F + lambda I)^{-1} u.
template <Environment Env, PolicyFamily P>
NpgDirection srvr_npg_sgd(Sampler<Env, P>& sampler, const Vector& theta, const GradEstimate& u, const SgdConfig& cfg,
                          RngStream& rng) {
  validate(cfg);
  if (!detail::same_parameters(u.theta_at, theta)) throw ProvenanceError("srvr_npg_sgd: u is not tagged at theta");
  const P& family = sampler.policy();
  const std::int64_t start = sampler.trajectories();
  Vector w = Vector::Zero(family.dim());
  Vector sum = Vector::Zero(family.dim());
  Vector sc(family.dim());
  for (int t = 0; t < cfg.iterations; ++t) {
    const auto [s, a, len] = sampler.sample_nu(theta, rng);
    sc.setZero();
    family.accumulate_score(theta, s, a, 1.0, sc);
    w -= cfg.stepsize * (w.dot(sc) * sc - u.g + cfg.lambda * w);
    sum += w;
  }
  NpgDirection out;
  out.w = sum / static_cast<double>(cfg.iterations);
  out.kind = DirectionKind::sgd_procedure2;
  out.trajectories_used = sampler.trajectories() - start;
  return out;
}

struct TransferredError {
  double value = 0.0;
  Vector w_star;
};

/// E_{nu*}[(A^{pi_theta} - (1 - gamma) w*^T score)^2] with nu* the visitation of
/// the optimal policy and w* the damped exact NPG direction at theta.
template <DiscretePolicy P>
TransferredError transferred_error(const TabularMdp& mdp, const P& family, const Vector& theta,
                                   const Matrix& pi_star_table, double lambda) {
  check_compatible(mdp, family);
  const auto pe = policy_evaluate(mdp, policy_table(family, theta));
  const auto fisher = fisher_exact(family, theta, pe.nu_rho);
  TransferredError out;
  out.w_star = exact_npg_direction(fisher, exact_policy_gradient(mdp, family, theta), lambda).w;
  const auto pe_star = policy_evaluate(mdp, pi_star_table);
  out.value = compatible_loss(family, theta, pe_star.nu_rho, pe.adv, out.w_star, mdp.gamma);
  return out;
}

}  // namespace vrpg
