#pragma once

// GPOMDP-family gradient estimators, importance weights and the recursive
// semi-stochastic gradient used by the variance-reduced drivers.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrpg/policy.hpp"
#include "vrpg/sampler.hpp"

namespace vrpg {

enum class EstimatorKind { gpomdp, weighted, srvr_recursive, batch_mean, exact };

inline std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::gpomdp: return "gpomdp";
    case EstimatorKind::weighted: return "weighted";
    case EstimatorKind::srvr_recursive: return "srvr_recursive";
    case EstimatorKind::batch_mean: return "batch_mean";
    case EstimatorKind::exact: return "exact";
  }
  return "unknown";
}

/// A gradient estimate tagged with the parameters it estimates the gradient at.
struct GradEstimate {
  Vector g;
  EstimatorKind kind = EstimatorKind::gpomdp;
  Vector theta_at;
  std::int64_t trajectories_used = 0;
};

class ProvenanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline bool same_parameters(const Vector& a, const Vector& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

/// sum_h coef_h * (sum_{t<=h} score_theta(s_t, a_t)) * gamma^h r_h, where
/// coef_h is 1 or the importance weight w_{0:h}.
template <PolicyFamily P>
Vector gpomdp_sum(const Trajectory<typename P::Action>& traj, const P& family, const Vector& theta, double gamma,
                  const Vector* weights) {
  if (theta.size() != family.dim()) throw std::invalid_argument("gpomdp: dimension mismatch between family and theta");
  Vector cumulative = Vector::Zero(family.dim());
  Vector g = Vector::Zero(family.dim());
  double discount = 1.0;
  for (int h = 0; h < traj.horizon(); ++h) {
    const auto& step = traj.steps[static_cast<std::size_t>(h)];
    family.accumulate_score(theta, step.state, step.action, 1.0, cumulative);
    double coef = discount * step.reward;
    if (weights != nullptr) coef = (*weights)(h)*coef;
    if (coef != 0.0) g += coef * cumulative;
    discount *= gamma;
  }
  return g;
}

}  // namespace detail

/// Truncated GPOMDP: g = sum_{h<H} (sum_{t<=h} score(s_t,a_t)) gamma^h r_h.
template <PolicyFamily P>
GradEstimate gpomdp_truncated(const Trajectory<typename P::Action>& traj, const P& family, const Vector& theta,
                              double gamma) {
  return {detail::gpomdp_sum(traj, family, theta, gamma, nullptr), EstimatorKind::gpomdp, theta, 1};
}

/// Prefix importance weights w_{0:h} = prod_{h'<=h} pi_prev(a|s) / pi_cur(a|s)
/// for every h, accumulated in log space and exponentiated once per h.
template <PolicyFamily P>
Vector importance_weights(const Trajectory<typename P::Action>& traj, const P& family, const Vector& theta_prev,
                          const Vector& theta_cur) {
  Vector w(traj.horizon());
  double log_w = 0.0;
  for (int h = 0; h < traj.horizon(); ++h) {
    const auto& step = traj.steps[static_cast<std::size_t>(h)];
    const double lp_cur = family.log_prob(theta_cur, step.state, step.action);
    if (!std::isfinite(lp_cur)) throw std::domain_error("importance_weight: zero probability under theta_cur");
    log_w += family.log_prob(theta_prev, step.state, step.action) - lp_cur;
    w(h) = std::exp(log_w);
  }
  return w;
}

/// Single prefix weight w_{0:h}, recomputed from scratch.
template <PolicyFamily P>
double importance_weight(const Trajectory<typename P::Action>& traj, const P& family, const Vector& theta_prev,
                         const Vector& theta_cur, int h) {
  if (h < 0 || h >= traj.horizon()) throw std::out_of_range("importance_weight: h outside [0, H)");
  double log_w = 0.0;
  for (int k = 0; k <= h; ++k) {
    const auto& step = traj.steps[static_cast<std::size_t>(k)];
    const double lp_cur = family.log_prob(theta_cur, step.state, step.action);
    if (!std::isfinite(lp_cur)) throw std::domain_error("importance_weight: zero probability under theta_cur");
    log_w += family.log_prob(theta_prev, step.state, step.action) - lp_cur;
  }
  return std::exp(log_w);
}

/// Importance-weighted GPOMDP: estimates grad J^H(theta_prev) from a trajectory
/// sampled under theta_cur. Scores are evaluated at theta_prev.
template <PolicyFamily P>
GradEstimate gpomdp_weighted(const Trajectory<typename P::Action>& traj, const P& family, const Vector& theta_prev,
                             const Vector& theta_cur, double gamma) {
  const Vector w = importance_weights(traj, family, theta_prev, theta_cur);
  return {detail::gpomdp_sum(traj, family, theta_prev, gamma, &w), EstimatorKind::weighted, theta_prev, 1};
}

/// Mean of truncated GPOMDP over a batch sampled at theta.
template <PolicyFamily P>
GradEstimate batch_gpomdp(std::span<const Trajectory<typename P::Action>> batch, const P& family,
                          const Vector& theta, double gamma) {
  if (batch.empty()) throw std::invalid_argument("batch_gpomdp: empty batch");
  Vector sum = Vector::Zero(family.dim());
  for (const auto& traj : batch) sum += detail::gpomdp_sum(traj, family, theta, gamma, nullptr);
  return {sum / static_cast<double>(batch.size()), EstimatorKind::batch_mean, theta,
          static_cast<std::int64_t>(batch.size())};
}

/// u_t = u_{t-1} + (1/B) sum_j (g(tau_j | theta_cur) - g_w(tau_j | theta_prev)),
/// with every tau_j sampled under theta_cur.
template <PolicyFamily P>
GradEstimate srvr_update(const GradEstimate& u_prev, std::span<const Trajectory<typename P::Action>> batch,
                         const P& family, const Vector& theta_prev, const Vector& theta_cur, double gamma) {
  if (batch.empty()) throw std::invalid_argument("srvr_update: empty batch");
  if (!detail::same_parameters(u_prev.theta_at, theta_prev))
    throw ProvenanceError("srvr_update: u_prev is not tagged at theta_prev");
  Vector correction = Vector::Zero(family.dim());
  for (const auto& traj : batch) {
    if (traj.theta_tag.size() != 0 && !detail::same_parameters(traj.theta_tag, theta_cur))
      throw ProvenanceError("srvr_update: trajectory was not sampled at theta_cur");
    const Vector w = importance_weights(traj, family, theta_prev, theta_cur);
    correction += detail::gpomdp_sum(traj, family, theta_cur, gamma, nullptr) -
                  detail::gpomdp_sum(traj, family, theta_prev, gamma, &w);
  }
  return {u_prev.g + correction / static_cast<double>(batch.size()), EstimatorKind::srvr_recursive, theta_cur,
          u_prev.trajectories_used + static_cast<std::int64_t>(batch.size())};
}

struct MomentProbeSpec {
  std::vector<Vector> thetas;                          // where Var(g) is probed
  std::vector<std::pair<Vector, Vector>> theta_pairs;  // (theta_1, theta_2), tau ~ theta_2
  int horizon = 5;
  int replications = 1000;
  std::uint64_t seed = 1;
};

struct MomentReport {
  double sigma2_hat = 0.0;
  double w_hat = 0.0;
  std::int64_t sample_count = 0;
  /// Per probed pair: (||theta_1 - theta_2||, max_h Var(w_{0:h})).
  std::vector<std::pair<double, double>> weight_variance_by_distance;
  /// True when the largest observed weight variance belongs to the most separated pair.
  bool w_grows_with_distance = false;
};

/// Empirical sigma^2 = max_theta E||g - E g||^2 and W = max Var(w_{0:h}).
template <Environment Env, PolicyFamily P>
MomentReport moment_probe(const Env& env, const P& family, const MomentProbeSpec& spec) {
  if (spec.replications < 2) throw std::invalid_argument("moment_probe: replication count must be >= 2");
  Sampler<Env, P> sampler(env, family);
  RngStream rng(spec.seed, 0x4d4f4d454e54ULL);
  const double gamma = env.discount();
  const double n = spec.replications;
  MomentReport out;

  for (const auto& theta : spec.thetas) {
    const auto batch = sampler.sample_batch(theta, spec.horizon, spec.replications, rng);
    std::vector<Vector> gs;
    gs.reserve(batch.size());
    Vector mean = Vector::Zero(family.dim());
    for (const auto& traj : batch) {
      gs.push_back(detail::gpomdp_sum(traj, family, theta, gamma, nullptr));
      mean += gs.back();
    }
    mean /= n;
    double var = 0.0;
    for (const auto& g : gs) var += (g - mean).squaredNorm();
    out.sigma2_hat = std::max(out.sigma2_hat, var / (n - 1.0));
  }

  double max_dist = -1.0;
  double var_at_max_dist = 0.0;
  for (const auto& [theta_1, theta_2] : spec.theta_pairs) {
    const auto batch = sampler.sample_batch(theta_2, spec.horizon, spec.replications, rng);
    Vector sum = Vector::Zero(spec.horizon);
    Vector sum_sq = Vector::Zero(spec.horizon);
    for (const auto& traj : batch) {
      const Vector w = importance_weights(traj, family, theta_1, theta_2);
      sum += w;
      sum_sq += w.cwiseProduct(w);
    }
    double pair_var = 0.0;
    for (int h = 0; h < spec.horizon; ++h) {
      const double mean = sum(h) / n;
      pair_var = std::max(pair_var, std::max(0.0, (sum_sq(h) - n * mean * mean) / (n - 1.0)));
    }
    const double dist = (theta_1 - theta_2).norm();
    out.weight_variance_by_distance.emplace_back(dist, pair_var);
    out.w_hat = std::max(out.w_hat, pair_var);
    if (dist > max_dist) {
      max_dist = dist;
      var_at_max_dist = pair_var;
    }
  }
  out.w_grows_with_distance = spec.theta_pairs.size() > 1 && out.w_hat > 0.0 && var_at_max_dist == out.w_hat;
  out.sample_count = sampler.trajectories();
  return out;
}

}  // namespace vrpg
