#pragma once

// Training drivers: PG, NPG, SRVR-PG and SRVR-NPG, all ascending J, plus the
// hyperparameter schedules prescribed by the convergence theorems.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrpg/constants.hpp"
#include "vrpg/estimators.hpp"
#include "vrpg/mdp.hpp"
#include "vrpg/npg_solver.hpp"
#include "vrpg/policy.hpp"
#include "vrpg/rng.hpp"
#include "vrpg/sampler.hpp"

namespace vrpg {

enum class Algorithm { pg, npg, srvr_pg, srvr_npg };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pg: return "pg";
    case Algorithm::npg: return "npg";
    case Algorithm::srvr_pg: return "srvr_pg";
    case Algorithm::srvr_npg: return "srvr_npg";
  }
  return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& name) {
  if (name == "pg") return Algorithm::pg;
  if (name == "npg") return Algorithm::npg;
  if (name == "srvr_pg") return Algorithm::srvr_pg;
  if (name == "srvr_npg") return Algorithm::srvr_npg;
  throw std::invalid_argument("unknown algorithm: " + name);
}

struct RunConfig {
  Algorithm algorithm = Algorithm::pg;
  double eta = 0.01;
  std::int64_t iterations = 10;    // K (pg, npg)
  std::int64_t epochs = 1;         // S (srvr variants)
  std::int64_t epoch_length = 1;   // m (srvr variants)
  std::int64_t batch = 10;         // N
  std::int64_t minibatch = 10;     // B
  int horizon = 20;                // H
  SgdConfig sgd;
  /// Damping of the exact reference direction and ridge of the SGD subproblem.
  double lambda = 1e-3;
  /// G used for the default SGD stepsize 1/(4 G^2).
  double score_bound = std::sqrt(2.0);
  std::uint64_t seed = 1;
  /// Maximum sampled trajectories; 0 means unlimited.
  std::int64_t trajectory_budget = 0;
  int eval_every = 1;
  /// Replace sampled gradients by exact truncated gradients (tabular only).
  bool exact_gradients = false;
  /// Replace the SGD subproblem by the exact damped solve (tabular only).
  bool exact_subproblem = false;
  int threads = 1;
};

inline void validate(const RunConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("RunConfig: eta must be positive");
  if (cfg.iterations < 1 || cfg.epochs < 1 || cfg.epoch_length < 1 || cfg.batch < 1 || cfg.minibatch < 1 ||
      cfg.horizon < 1 || cfg.eval_every < 1 || cfg.threads < 1 || cfg.sgd.iterations < 1)
    throw std::invalid_argument("RunConfig: all counts must be >= 1");
  if (cfg.lambda < 0.0) throw std::invalid_argument("RunConfig: lambda must be nonnegative");
  if (cfg.trajectory_budget < 0 || (cfg.trajectory_budget > 0 && cfg.trajectory_budget < cfg.batch))
    throw std::invalid_argument("RunConfig: trajectory budget must be at least N");
}

struct IterationRecord {
  std::int64_t iter = 0;
  std::int64_t epoch = 0;
  std::int64_t inner = 0;
  double j_exact = std::numeric_limits<double>::quiet_NaN();
  double grad_norm2 = std::numeric_limits<double>::quiet_NaN();
  double w_norm2 = 0.0;
  double w_err = std::numeric_limits<double>::quiet_NaN();
  std::int64_t trajectories = 0;
};

/// One record per iterate theta^k; directions[k] is the update w^k with
/// theta^{k+1} = theta^k + eta w^k.
struct RunResult {
  std::vector<IterationRecord> records;
  std::vector<Vector> thetas;
  std::vector<Vector> directions;
  Vector final_theta;
  Vector theta_out;
  RunConfig config;
  bool truncated = false;
  double wall_time = 0.0;
};

namespace detail {

template <Environment Env, PolicyFamily P>
class Driver {
 public:
  Driver(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg)
      : sampler_(env, family, cfg.threads), cfg_(cfg), theta_(theta0) {
    validate(cfg_);
    if (theta0.size() != family.dim()) throw std::invalid_argument("run: theta0 has the wrong dimension");
    if (!(cfg_.sgd.stepsize > 0.0)) cfg_.sgd.stepsize = default_sgd_stepsize(cfg_.score_bound);
    cfg_.sgd.lambda = cfg_.lambda;
    if constexpr (!has_oracle_v<Env, P>) {
      if (cfg_.exact_gradients || cfg_.exact_subproblem || cfg_.sgd.exact_adv)
        throw std::invalid_argument("run: exact modes require a tabular MDP and a discrete family");
    }
    result_.config = cfg_;
    start_ = std::chrono::steady_clock::now();
  }

  Sampler<Env, P>& sampler() { return sampler_; }
  const RunConfig& config() const { return cfg_; }
  Vector& theta() { return theta_; }
  double gamma() const { return sampler_.env().discount(); }

  /// False (and the run flagged truncated) when `cost` more trajectories would exceed the budget.
  bool reserve(std::int64_t cost) {
    if (cfg_.trajectory_budget > 0 && sampler_.trajectories() + cost > cfg_.trajectory_budget) {
      result_.truncated = true;
      return false;
    }
    return true;
  }

  std::int64_t subproblem_cost(bool srvr) const {
    if (cfg_.exact_subproblem) return 0;
    return srvr || cfg_.sgd.exact_adv ? cfg_.sgd.iterations : 2 * cfg_.sgd.iterations;
  }

  GradEstimate batch_gradient(std::int64_t n, RngStream& rng) {
    if (cfg_.exact_gradients) {
      if constexpr (has_oracle_v<Env, P>)
        return {truncated_gradient_dp(sampler_.env(), sampler_.policy(), theta_, cfg_.horizon), EstimatorKind::exact,
                theta_, 0};
    }
    const auto batch = sampler_.sample_batch(theta_, cfg_.horizon, static_cast<int>(n), rng);
    return batch_gpomdp<P>(batch, sampler_.policy(), theta_, gamma());
  }

  GradEstimate recursive_gradient(const GradEstimate& u_prev, const Vector& theta_prev, RngStream& rng) {
    if (cfg_.exact_gradients) {
      if constexpr (has_oracle_v<Env, P>) {
        const auto& mdp = sampler_.env();
        const auto& fam = sampler_.policy();
        Vector g = u_prev.g + truncated_gradient_dp(mdp, fam, theta_, cfg_.horizon) -
                   truncated_gradient_dp(mdp, fam, theta_prev, cfg_.horizon);
        return {std::move(g), EstimatorKind::exact, theta_, 0};
      }
    }
    const auto batch = sampler_.sample_batch(theta_, cfg_.horizon, static_cast<int>(cfg_.minibatch), rng);
    return srvr_update<P>(u_prev, batch, sampler_.policy(), theta_prev, theta_, gamma());
  }

  /// NPG direction for target grad J (srvr = false) or for a semi-stochastic u.
  Vector npg_direction(const GradEstimate* u, RngStream& rng) {
    if (cfg_.exact_subproblem) {
      if constexpr (has_oracle_v<Env, P>) {
        const auto& mdp = sampler_.env();
        const auto& fam = sampler_.policy();
        if (u == nullptr) return exact_npg_target(mdp, fam, theta_, cfg_.lambda);
        const auto pe = policy_evaluate(mdp, policy_table(fam, theta_));
        return exact_npg_direction(fisher_exact(fam, theta_, pe.nu_rho), u->g, cfg_.lambda).w;
      }
    }
    RngStream sgd_rng = rng.fork();
    if (u == nullptr) return npg_sgd(sampler_, theta_, cfg_.sgd, sgd_rng).w;
    return srvr_npg_sgd(sampler_, theta_, *u, cfg_.sgd, sgd_rng).w;
  }

  /// Logs iterate theta with its update direction w, then applies theta += eta w.
  void step(const Vector& w, std::int64_t epoch, std::int64_t inner) {
    IterationRecord rec;
    rec.iter = static_cast<std::int64_t>(result_.records.size());
    rec.epoch = epoch;
    rec.inner = inner;
    rec.w_norm2 = w.squaredNorm();
    rec.trajectories = sampler_.trajectories();
    if constexpr (has_oracle_v<Env, P>) {
      if (rec.iter % cfg_.eval_every == 0) evaluate(w, rec);
    }
    result_.records.push_back(rec);
    result_.thetas.push_back(theta_);
    result_.directions.push_back(w);
    theta_ += cfg_.eta * w;
  }

  RunResult finish(RngStream& rng, bool uniform_output) {
    result_.final_theta = theta_;
    if (uniform_output && !result_.thetas.empty()) {
      const auto n = result_.thetas.size();
      const auto idx = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
      result_.theta_out = result_.thetas[idx];
    } else {
      result_.theta_out = theta_;
    }
    result_.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return std::move(result_);
  }

 private:
  void evaluate(const Vector& w, IterationRecord& rec) {
    const auto& mdp = sampler_.env();
    const auto& fam = sampler_.policy();
    const auto pe = policy_evaluate(mdp, policy_table(fam, theta_));
    Vector grad = Vector::Zero(fam.dim());
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        if (pe.nu_rho(s, a) != 0.0) fam.accumulate_score(theta_, s, a, pe.nu_rho(s, a) * pe.q(s, a), grad);
    grad /= 1.0 - mdp.gamma;
    rec.j_exact = pe.j;
    rec.grad_norm2 = grad.squaredNorm();
    try {
      rec.w_err = (w - exact_npg_direction(fisher_exact(fam, theta_, pe.nu_rho), grad, cfg_.lambda).w).norm();
    } catch (const NotPositiveDefinite&) {
      rec.w_err = std::numeric_limits<double>::quiet_NaN();
    }
  }

  Sampler<Env, P> sampler_;
  RunConfig cfg_;
  Vector theta_;
  RunResult result_;
  std::chrono::steady_clock::time_point start_;
};

template <Environment Env, PolicyFamily P>
void expect_algorithm(const RunConfig& cfg, Algorithm want) {
  if (cfg.algorithm != want)
    throw std::invalid_argument("run_" + to_string(want) + ": config names algorithm " + to_string(cfg.algorithm));
}

}  // namespace detail

/// theta^{k+1} = theta^k + eta (1/N) sum_i g(tau_i | theta^k), K iterations of N trajectories.
template <Environment Env, PolicyFamily P>
RunResult run_pg(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg, RngStream& rng) {
  detail::expect_algorithm<Env, P>(cfg, Algorithm::pg);
  detail::Driver<Env, P> drv(env, family, theta0, cfg);
  for (std::int64_t k = 0; k < cfg.iterations; ++k) {
    if (!drv.reserve(cfg.exact_gradients ? 0 : cfg.batch)) break;
    const GradEstimate g = drv.batch_gradient(cfg.batch, rng);
    drv.step(g.g, 0, k);
  }
  return drv.finish(rng, false);
}

/// theta^{k+1} = theta^k + eta w^k with w^k the averaged-SGD solution of the
/// compatible function approximation problem at theta^k.
template <Environment Env, PolicyFamily P>
RunResult run_npg(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg, RngStream& rng) {
  detail::expect_algorithm<Env, P>(cfg, Algorithm::npg);
  detail::Driver<Env, P> drv(env, family, theta0, cfg);
  for (std::int64_t k = 0; k < cfg.iterations; ++k) {
    if (!drv.reserve(drv.subproblem_cost(false))) break;
    const Vector w = drv.npg_direction(nullptr, rng);
    drv.step(w, 0, k);
  }
  return drv.finish(rng, false);
}

/// S epochs: anchor u_0 from N trajectories, then m - 1 recursive corrections
/// from B trajectories each; theta_{t+1} = theta_t + eta u_t.
template <Environment Env, PolicyFamily P>
RunResult run_srvr_pg(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg, RngStream& rng) {
  detail::expect_algorithm<Env, P>(cfg, Algorithm::srvr_pg);
  detail::Driver<Env, P> drv(env, family, theta0, cfg);
  const std::int64_t anchor_cost = cfg.exact_gradients ? 0 : cfg.batch;
  const std::int64_t inner_cost = cfg.exact_gradients ? 0 : cfg.minibatch;
  bool stopped = false;
  for (std::int64_t j = 0; j < cfg.epochs && !stopped; ++j) {
    if (!drv.reserve(anchor_cost)) break;
    GradEstimate u = drv.batch_gradient(cfg.batch, rng);
    Vector theta_prev = drv.theta();
    drv.step(u.g, j, 0);
    for (std::int64_t t = 1; t < cfg.epoch_length; ++t) {
      if (!drv.reserve(inner_cost)) {
        stopped = true;
        break;
      }
      u = drv.recursive_gradient(u, theta_prev, rng);
      theta_prev = drv.theta();
      drv.step(u.g, j, t);
    }
  }
  return drv.finish(rng, true);
}

/// SRVR-PG's semi-stochastic gradient u_t fed as the target of the second SGD
/// procedure; theta_{t+1} = theta_t + eta w_t with w_t ~ (F + lambda I)^{-1} u_t.
template <Environment Env, PolicyFamily P>
RunResult run_srvr_npg(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg, RngStream& rng) {
  detail::expect_algorithm<Env, P>(cfg, Algorithm::srvr_npg);
  detail::Driver<Env, P> drv(env, family, theta0, cfg);
  const std::int64_t sub = drv.subproblem_cost(true);
  const std::int64_t anchor_cost = (cfg.exact_gradients ? 0 : cfg.batch) + sub;
  const std::int64_t inner_cost = (cfg.exact_gradients ? 0 : cfg.minibatch) + sub;
  bool stopped = false;
  for (std::int64_t j = 0; j < cfg.epochs && !stopped; ++j) {
    if (!drv.reserve(anchor_cost)) break;
    GradEstimate u = drv.batch_gradient(cfg.batch, rng);
    Vector theta_prev = drv.theta();
    drv.step(drv.npg_direction(&u, rng), j, 0);
    for (std::int64_t t = 1; t < cfg.epoch_length; ++t) {
      if (!drv.reserve(inner_cost)) {
        stopped = true;
        break;
      }
      u = drv.recursive_gradient(u, theta_prev, rng);
      theta_prev = drv.theta();
      drv.step(drv.npg_direction(&u, rng), j, t);
    }
  }
  return drv.finish(rng, true);
}

template <Environment Env, PolicyFamily P>
RunResult run(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg, RngStream& rng) {
  switch (cfg.algorithm) {
    case Algorithm::pg: return run_pg(env, family, theta0, cfg, rng);
    case Algorithm::npg: return run_npg(env, family, theta0, cfg, rng);
    case Algorithm::srvr_pg: return run_srvr_pg(env, family, theta0, cfg, rng);
    case Algorithm::srvr_npg: return run_srvr_npg(env, family, theta0, cfg, rng);
  }
  throw std::invalid_argument("run: unknown algorithm");
}

/// Seeds the run stream from cfg.seed.
template <Environment Env, PolicyFamily P>
RunResult run(const Env& env, const P& family, const Vector& theta0, const RunConfig& cfg) {
  RngStream rng(cfg.seed, 0);
  return run(env, family, theta0, cfg, rng);
}

enum class Schedule {
  thm1_pg,
  thm2_npg,
  thm3_srvr_pg,
  thm4_srvr_npg,
  stationary_e1,
  stationary_e2,
  stationary_e3,
  stationary_e4
};

inline std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::thm1_pg: return "thm1_pg";
    case Schedule::thm2_npg: return "thm2_npg";
    case Schedule::thm3_srvr_pg: return "thm3_srvr_pg";
    case Schedule::thm4_srvr_npg: return "thm4_srvr_npg";
    case Schedule::stationary_e1: return "stationary_e1";
    case Schedule::stationary_e2: return "stationary_e2";
    case Schedule::stationary_e3: return "stationary_e3";
    case Schedule::stationary_e4: return "stationary_e4";
  }
  return "unknown";
}

inline Schedule schedule_from_string(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(Schedule::stationary_e4); ++i)
    if (to_string(static_cast<Schedule>(i)) == name) return static_cast<Schedule>(i);
  throw std::invalid_argument("unknown schedule: " + name);
}

struct ScheduleResult {
  RunConfig config;
  Schedule which = Schedule::thm1_pg;
  double epsilon = 0.0;
  /// Counts are O(.) expressions with unit constants.
  bool order_only = false;
  /// Every count could be filled; false when sigma^2 or W is missing.
  bool complete = true;
  /// Small-epsilon preconditions hold (only the SRVR-NPG stationary schedule has any).
  bool feasible = true;
  std::vector<std::string> notes;
};

namespace detail {

inline std::int64_t ceil_count(double x) {
  if (!std::isfinite(x)) throw std::overflow_error("theorem_schedule: count is not finite");
  if (x > 9.0e18) throw std::overflow_error("theorem_schedule: count overflows");
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(x)));
}

}  // namespace detail

/// Stepsizes exactly as prescribed, counts with explicit constants where they
/// are known and unit constants otherwise (flagged order_only).
inline ScheduleResult theorem_schedule(Schedule which, const ConstantsReport& c, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("theorem_schedule: epsilon must be positive");
  if (!(c.L_J > 0.0) || !(c.G > 0.0) || !(c.gamma > 0.0 && c.gamma < 1.0))
    throw std::invalid_argument("theorem_schedule: constants report lacks L_J, G or gamma");
  const bool needs_mu = which == Schedule::thm2_npg || which == Schedule::thm4_srvr_npg ||
                        which == Schedule::stationary_e2 || which == Schedule::stationary_e4;
  if (needs_mu && !(c.mu_F > 0.0)) throw std::invalid_argument("theorem_schedule: mu_F must be positive");

  ScheduleResult out;
  out.which = which;
  out.epsilon = epsilon;
  RunConfig& cfg = out.config;
  cfg.score_bound = c.G;
  cfg.lambda = c.lambda;
  cfg.horizon = horizon_for_accuracy(c.G, c.R, c.gamma, epsilon);

  const double one_m = 1.0 - c.gamma;
  const double g2 = c.G * c.G;
  const double gap = std::max(0.0, c.j_star - c.j_theta0);
  auto sigma_count = [&](double factor, double power) -> std::int64_t {
    if (!c.sigma2_hat) {
      out.complete = false;
      out.notes.push_back("sigma^2 missing: N left unset");
      return 1;
    }
    return detail::ceil_count(factor * *c.sigma2_hat / std::pow(epsilon, power));
  };
  auto w_factor = [&]() -> std::optional<double> {
    if (!c.W_hat) {
      out.complete = false;
      out.notes.push_back("W missing: B left unset");
      return std::nullopt;
    }
    return *c.W_hat;
  };
  const std::int64_t t_order = detail::ceil_count(1.0 / (std::pow(one_m, 4) * epsilon * epsilon));

  switch (which) {
    case Schedule::thm1_pg:
      cfg.algorithm = Algorithm::pg;
      cfg.eta = 1.0 / (4.0 * c.L_J);
      cfg.iterations = detail::ceil_count(1.0 / (one_m * one_m * epsilon * epsilon));
      cfg.batch = sigma_count(1.0, 2.0);
      out.order_only = true;
      break;
    case Schedule::thm2_npg:
      cfg.algorithm = Algorithm::npg;
      cfg.eta = c.mu_F * c.mu_F / (4.0 * g2 * c.L_J);
      cfg.iterations = detail::ceil_count(1.0 / (one_m * one_m * epsilon));
      cfg.sgd.iterations = static_cast<int>(std::min<std::int64_t>(t_order, std::numeric_limits<int>::max()));
      cfg.batch = 1;
      out.order_only = true;
      break;
    case Schedule::thm3_srvr_pg: {
      cfg.algorithm = Algorithm::srvr_pg;
      cfg.eta = 1.0 / (8.0 * c.L_J);
      cfg.epochs = detail::ceil_count(1.0 / (std::pow(one_m, 2.5) * epsilon));
      cfg.epoch_length = detail::ceil_count(std::sqrt(one_m) / epsilon);
      cfg.batch = sigma_count(1.0, 1.0);
      const auto w = w_factor();
      cfg.minibatch = w ? detail::ceil_count(*w / (std::sqrt(one_m) * epsilon)) : 1;
      out.order_only = true;
      break;
    }
    case Schedule::thm4_srvr_npg: {
      cfg.algorithm = Algorithm::srvr_npg;
      cfg.eta = c.mu_F / (16.0 * c.L_J);
      cfg.epochs = detail::ceil_count(1.0 / (std::pow(one_m, 2.5) * std::sqrt(epsilon)));
      cfg.epoch_length = detail::ceil_count(std::sqrt(one_m) / std::sqrt(epsilon));
      cfg.batch = sigma_count(1.0, 2.0);
      const auto w = w_factor();
      cfg.minibatch = w ? detail::ceil_count(*w / (std::sqrt(one_m) * std::pow(epsilon, 1.5))) : 1;
      cfg.sgd.iterations = static_cast<int>(std::min<std::int64_t>(t_order, std::numeric_limits<int>::max()));
      out.order_only = true;
      break;
    }
    case Schedule::stationary_e1:
      cfg.algorithm = Algorithm::pg;
      cfg.eta = 1.0 / (4.0 * c.L_J);
      cfg.iterations = detail::ceil_count(32.0 * c.L_J * gap / epsilon);
      cfg.batch = sigma_count(6.0, 1.0);
      out.notes.push_back("J^{H,*} - J^H(theta_0) approximated by J* - J(theta_0)");
      break;
    case Schedule::stationary_e2:
      cfg.algorithm = Algorithm::npg;
      cfg.eta = c.mu_F * c.mu_F / (4.0 * g2 * c.L_J);
      cfg.iterations = detail::ceil_count(32.0 * c.L_J * g2 * g2 * gap / (c.mu_F * c.mu_F * epsilon));
      cfg.sgd.iterations = static_cast<int>(std::min<std::int64_t>(t_order, std::numeric_limits<int>::max()));
      cfg.batch = 1;
      out.notes.push_back("subproblem iterations T are order-level");
      break;
    case Schedule::stationary_e3: {
      cfg.algorithm = Algorithm::srvr_pg;
      cfg.eta = 1.0 / (4.0 * c.L_J);
      cfg.batch = sigma_count(12.0, 1.0);
      cfg.epochs = detail::ceil_count(64.0 * c.M * c.R * gap / (std::pow(one_m, 2.5) * std::sqrt(epsilon)));
      const double m = std::sqrt(one_m) / std::sqrt(epsilon);
      cfg.epoch_length = detail::ceil_count(m);
      const auto w = w_factor();
      cfg.minibatch = w ? detail::ceil_count(72.0 * cfg.eta * g2 * (2.0 * g2 + c.M) * (*w + 1.0) * c.gamma *
                                             static_cast<double>(cfg.epoch_length) / (c.M * std::pow(one_m, 3)))
                        : 1;
      break;
    }
    case Schedule::stationary_e4: {
      cfg.algorithm = Algorithm::srvr_npg;
      const double eta = c.mu_F / (8.0 * c.L_J);
      cfg.eta = eta;
      cfg.epochs = detail::ceil_count(24.0 * g2 * gap / (eta * std::sqrt(epsilon)));
      cfg.epoch_length = detail::ceil_count(1.0 / std::sqrt(epsilon));
      const auto w = w_factor();
      cfg.minibatch = w ? detail::ceil_count((eta / c.mu_F + eta / (4.0 * g2)) * 72.0 * c.R * g2 * (2.0 * g2 + c.M) *
                                             (*w + 1.0) * c.gamma /
                                             (std::pow(one_m, 5) * c.L_J * std::pow(epsilon, 0.75)))
                        : 1;
      cfg.batch = sigma_count(3.0 * (8.0 * g2 / c.mu_F + 2.0), 1.0);
      cfg.sgd.iterations = static_cast<int>(std::min<std::int64_t>(t_order, std::numeric_limits<int>::max()));
      const double gb = gradient_norm_bound(c.G, c.R, c.gamma);
      const double cond1 = 3.0 * (8.0 * g2 / c.mu_F + 2.0) * gb * gb;
      const double cond2 = 3.0 * (8.0 * g2 / 4.0 + 8.0 * g2 * g2 / (4.0 * c.mu_F)) * (2.0 / c.mu_F) * gb * gb;
      const double cond3 = std::pow((2.0 / (3.0 * eta * c.L_J)) * (c.mu_F + c.mu_F * c.mu_F / (4.0 * g2)), 4);
      out.feasible = epsilon <= cond1 && epsilon <= cond2 && epsilon <= cond3;
      if (!out.feasible) out.notes.push_back("epsilon exceeds a small-epsilon precondition");
      out.notes.push_back("subproblem iterations T are order-level");
      break;
    }
  }
  return out;
}

}  // namespace vrpg
