#pragma once

// Trajectory generation, visitation-measure sampling and advantage estimation
// with trajectory-budget accounting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "vrpg/mdp.hpp"
#include "vrpg/policy.hpp"
#include "vrpg/rng.hpp"

namespace vrpg {

/// Anything that can be rolled out: finite states, rewards bounded by bound().
template <class E>
concept Environment = requires(const E& e, int s, const typename E::Action& a, RngStream& rng) {
  typename E::Action;
  { e.num_states() } -> std::convertible_to<int>;
  { e.discount() } -> std::convertible_to<double>;
  { e.bound() } -> std::convertible_to<double>;
  { e.reward_at(s, a) } -> std::convertible_to<double>;
  { e.sample_initial_state(rng) } -> std::convertible_to<int>;
  { e.sample_next_state(s, a, rng) } -> std::convertible_to<int>;
};

template <class Action>
struct Step {
  int state = 0;
  Action action{};
  double reward = 0.0;
};

template <class Action>
struct Trajectory {
  std::vector<Step<Action>> steps;
  Vector theta_tag;
  std::uint64_t seed_tag = 0;
  std::uint64_t lane_tag = 0;

  int horizon() const { return static_cast<int>(steps.size()); }
};

template <class Action>
struct StateAction {
  int state = 0;
  Action action{};
  int rollout_length = 0;  // geometric T; 0 means the pair was drawn at t = 0
};

/// Truncation horizon making the deterministic advantage bias at most eps_adv.
inline int default_advantage_horizon(double gamma, double reward_bound, double eps_adv = 1e-4) {
  if (reward_bound <= 0.0) return 1;
  const double target = eps_adv * (1.0 - gamma) / reward_bound;
  if (target >= 1.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(target) / std::log(gamma))));
}

/// Rolls out a policy family in an environment. Every public sampling call adds
/// its cost to the trajectory counter: one per trajectory, one per visitation
/// draw and one per advantage estimate.
template <Environment Env, PolicyFamily Policy>
  requires std::same_as<typename Env::Action, typename Policy::Action>
class Sampler {
 public:
  using Action = typename Policy::Action;
  using Traj = Trajectory<Action>;

  Sampler(const Env& env, const Policy& policy, int threads = 1)
      : env_(&env), policy_(&policy), threads_(std::max(1, threads)) {}

  const Env& env() const { return *env_; }
  const Policy& policy() const { return *policy_; }
  std::int64_t trajectories() const { return counter_.load(); }
  void reset_counter() { counter_.store(0); }
  void set_threads(int threads) { threads_ = std::max(1, threads); }

  Traj sample_trajectory(const Vector& theta, int horizon, RngStream& rng) {
    counter_.fetch_add(1);
    return rollout(theta, horizon, rng);
  }

  /// n trajectories, each on its own lane split from a stream forked off `rng`.
  /// The result does not depend on the thread count.
  std::vector<Traj> sample_batch(const Vector& theta, int horizon, int n, RngStream& rng) {
    if (n < 0) throw std::invalid_argument("sample_batch: negative batch size");
    const RngStream base = rng.fork();
    std::vector<Traj> out(static_cast<std::size_t>(n));
    auto work = [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        RngStream lane = base.split(static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = rollout(theta, horizon, lane);
      }
    };
    const int workers = std::min(threads_, std::max(1, n));
    if (workers == 1) {
      work(0, n);
    } else {
      std::vector<std::jthread> pool;
      const int chunk = (n + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(n, begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
      }
    }
    counter_.fetch_add(n);
    return out;
  }

  /// (s, a) ~ nu^{pi_theta}_rho: roll T ~ Geometric(1 - gamma) steps from rho
  /// (support {0, 1, ...}) and return the pair visited at step T.
  StateAction<Action> sample_nu(const Vector& theta, RngStream& rng) {
    counter_.fetch_add(1);
    const double gamma = env_->discount();
    int s = env_->sample_initial_state(rng);
    Action a = policy_->sample(theta, s, rng);
    int t = 0;
    while (rng.uniform() < gamma) {
      s = env_->sample_next_state(s, a, rng);
      a = policy_->sample(theta, s, rng);
      ++t;
    }
    return {s, a, t};
  }

  /// A_hat = Q_hat - V_hat from two independent h-step rollouts, one starting
  /// at (s, a) and one at (s, a' ~ pi(.|s)).
  double estimate_advantage(const Vector& theta, int s, const Action& a, RngStream& rng, int h_adv) {
    if (h_adv < 1) throw std::invalid_argument("estimate_advantage: h_adv must be >= 1");
    counter_.fetch_add(1);
    const double q_hat = discounted_rollout(theta, s, a, rng, h_adv);
    const Action a_alt = policy_->sample(theta, s, rng);
    const double v_hat = discounted_rollout(theta, s, a_alt, rng, h_adv);
    return q_hat - v_hat;
  }

 private:
  Traj rollout(const Vector& theta, int horizon, RngStream& rng) const {
    if (horizon < 1) throw std::invalid_argument("sample_trajectory: horizon must be >= 1");
    Traj traj;
    traj.theta_tag = theta;
    traj.seed_tag = rng.root_seed();
    traj.lane_tag = rng.lane();
    traj.steps.reserve(static_cast<std::size_t>(horizon));
    int s = env_->sample_initial_state(rng);
    for (int h = 0; h < horizon; ++h) {
      Action a = policy_->sample(theta, s, rng);
      const double r = env_->reward_at(s, a);
      const int next = env_->sample_next_state(s, a, rng);
      traj.steps.push_back({s, std::move(a), r});
      s = next;
    }
    return traj;
  }

  double discounted_rollout(const Vector& theta, int s, Action a, RngStream& rng, int steps) const {
    const double gamma = env_->discount();
    double total = 0.0;
    double discount = 1.0;
    for (int t = 0; t < steps; ++t) {
      total += discount * env_->reward_at(s, a);
      if (t + 1 == steps) break;
      s = env_->sample_next_state(s, a, rng);
      a = policy_->sample(theta, s, rng);
      discount *= gamma;
    }
    return total;
  }

  const Env* env_;
  const Policy* policy_;
  int threads_;
  std::atomic<std::int64_t> counter_{0};
};

/// Continuous-action test environment for Gaussian policies: states on a ring,
/// a scalar action a moves right with probability sigmoid(a) and the reward
/// R * exp(-(a - target_s)^2) lies in [0, R].
class ContinuousRing {
 public:
  using Action = Vector;

  ContinuousRing(int n_states, Vector targets, double gamma, double reward_bound = 1.0)
      : n_states_(n_states), targets_(std::move(targets)), gamma_(gamma), reward_bound_(reward_bound) {
    if (n_states < 1 || targets_.size() != n_states) throw std::invalid_argument("ContinuousRing: bad sizes");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("ContinuousRing: gamma must lie in (0, 1)");
  }

  int num_states() const { return n_states_; }
  double discount() const { return gamma_; }
  double bound() const { return reward_bound_; }

  double reward_at(int s, const Vector& a) const {
    const double diff = a(0) - targets_(s);
    return reward_bound_ * std::exp(-diff * diff);
  }

  int sample_initial_state(RngStream& /*rng*/) const { return 0; }

  int sample_next_state(int s, const Vector& a, RngStream& rng) const {
    const double p_right = 1.0 / (1.0 + std::exp(-a(0)));
    return rng.uniform() < p_right ? (s + 1) % n_states_ : (s + n_states_ - 1) % n_states_;
  }

 private:
  int n_states_;
  Vector targets_;
  double gamma_;
  double reward_bound_;
};

}  // namespace vrpg
