#pragma once

// Finite discounted MDPs and their exact dynamic-programming oracle.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrpg/rng.hpp"

namespace vrpg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when an exact solver fails in a way that valid inputs cannot produce.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite MDP with rewards r(s,a) in [-R, R].
///
/// `transition` is stored row-major with one row per (s, a) pair at index
/// s * n_actions + a, so each next-state distribution is contiguous.
struct TabularMdp {
  using Action = int;

  int n_states = 0;
  int n_actions = 0;
  RowMatrix transition;  // (n_states * n_actions) x n_states
  Matrix reward;         // n_states x n_actions
  double gamma = 0.9;
  Vector rho;
  double reward_bound = 0.0;

  int num_states() const { return n_states; }
  double discount() const { return gamma; }
  double bound() const { return reward_bound; }

  std::span<const double> next_distribution(int s, int a) const {
    return {transition.row(static_cast<Eigen::Index>(s) * n_actions + a).data(),
            static_cast<std::size_t>(n_states)};
  }

  double reward_at(int s, int a) const { return reward(s, a); }

  int sample_initial_state(RngStream& rng) const {
    return rng.categorical(std::span<const double>(rho.data(), static_cast<std::size_t>(n_states)));
  }

  int sample_next_state(int s, int a, RngStream& rng) const {
    return rng.categorical(next_distribution(s, a));
  }
};

/// Returns the list of violated invariants; empty when the MDP is valid.
inline std::vector<std::string> validate_mdp(const TabularMdp& mdp) {
  std::vector<std::string> report;
  auto add = [&report](const std::string& msg) { report.push_back(msg); };

  if (mdp.n_states < 1) add("n_states must be positive");
  if (mdp.n_actions < 1) add("n_actions must be positive");
  if (!report.empty()) return report;

  const Eigen::Index rows = static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions;
  if (mdp.transition.rows() != rows || mdp.transition.cols() != mdp.n_states) {
    add("transition has wrong shape");
  } else {
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        const auto row = mdp.transition.row(static_cast<Eigen::Index>(s) * mdp.n_actions + a);
        if ((row.array() < 0.0).any() || !row.allFinite()) {
          std::ostringstream os;
          os << "transition row (" << s << "," << a << ") has negative or non-finite entries";
          add(os.str());
        }
        if (std::abs(row.sum() - 1.0) > 1e-12) {
          std::ostringstream os;
          os << "stochasticity: transition row (" << s << "," << a << ") sums to " << row.sum();
          add(os.str());
        }
      }
    }
  }

  if (mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    add("reward has wrong shape");
  } else if (!mdp.reward.allFinite()) {
    add("reward has non-finite entries");
  } else if (mdp.reward.cwiseAbs().maxCoeff() > mdp.reward_bound) {
    add("reward bound: some |r(s,a)| exceeds reward_bound");
  }
  if (!(mdp.reward_bound >= 0.0)) add("reward_bound must be nonnegative");

  if (mdp.rho.size() != mdp.n_states) {
    add("rho has wrong size");
  } else {
    if ((mdp.rho.array() < 0.0).any()) add("rho has negative entries");
    if (std::abs(mdp.rho.sum() - 1.0) > 1e-12) add("rho does not sum to 1");
  }

  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) add("discount: gamma must lie in (0, 1)");
  return report;
}

inline void require_valid(const TabularMdp& mdp) {
  const auto report = validate_mdp(mdp);
  if (!report.empty()) throw std::invalid_argument("invalid MDP: " + report.front());
}

struct DpSolution {
  Vector v_star;
  Matrix q_star;
  std::vector<int> pi_star;  // greedy action per state
  double j_star = 0.0;
  double bellman_residual = 0.0;
  int iterations = 0;
};

struct PolicyEvaluation {
  Vector v;
  Matrix q;
  Matrix adv;
  double j = 0.0;
  Vector d_rho;
  Matrix nu_rho;
};

namespace detail {

inline Matrix q_from_v(const TabularMdp& mdp, const Vector& v) {
  const Vector pv = mdp.transition * v;
  Matrix q(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      q(s, a) = mdp.reward(s, a) + mdp.gamma * pv(static_cast<Eigen::Index>(s) * mdp.n_actions + a);
  return q;
}

inline Matrix state_transition(const TabularMdp& mdp, const Matrix& policy_table) {
  Matrix p = Matrix::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      p.row(s) += policy_table(s, a) * mdp.transition.row(static_cast<Eigen::Index>(s) * mdp.n_actions + a);
  return p;
}

inline Matrix deterministic_table(const TabularMdp& mdp, const std::vector<int>& actions) {
  Matrix table = Matrix::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) table(s, actions[static_cast<std::size_t>(s)]) = 1.0;
  return table;
}

}  // namespace detail

/// Exact evaluation of a stationary policy given as an n_states x n_actions table.
inline PolicyEvaluation policy_evaluate(const TabularMdp& mdp, const Matrix& policy_table) {
  if (policy_table.rows() != mdp.n_states || policy_table.cols() != mdp.n_actions)
    throw std::invalid_argument("policy_evaluate: policy table shape mismatch");
  for (int s = 0; s < mdp.n_states; ++s) {
    if (std::abs(policy_table.row(s).sum() - 1.0) > 1e-9 || (policy_table.row(s).array() < 0.0).any())
      throw std::invalid_argument("policy_evaluate: policy rows must be distributions");
  }

  const Matrix p_pi = detail::state_transition(mdp, policy_table);
  const Vector r_pi = policy_table.cwiseProduct(mdp.reward).rowwise().sum();
  const Matrix identity = Matrix::Identity(mdp.n_states, mdp.n_states);

  const Eigen::FullPivLU<Matrix> forward(identity - mdp.gamma * p_pi);
  if (!forward.isInvertible()) throw SolverError("policy_evaluate: singular Bellman system");
  const Eigen::FullPivLU<Matrix> backward(identity - mdp.gamma * p_pi.transpose());
  if (!backward.isInvertible()) throw SolverError("policy_evaluate: singular visitation system");

  PolicyEvaluation out;
  out.v = forward.solve(r_pi);
  out.q = detail::q_from_v(mdp, out.v);
  out.adv = out.q.colwise() - out.v;
  out.j = mdp.rho.dot(out.v);
  out.d_rho = backward.solve((1.0 - mdp.gamma) * mdp.rho);
  out.d_rho /= out.d_rho.sum();
  out.nu_rho = policy_table.array().colwise() * out.d_rho.array();
  return out;
}

/// Value iteration to a Bellman residual of `tol`, polished by exact policy
/// iteration on the greedy policy so that V* is the exact value of pi*.
inline DpSolution value_iteration(const TabularMdp& mdp, double tol = 1e-10,
                                  int max_iterations = 1'000'000) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  require_valid(mdp);

  auto bellman = [&mdp](const Vector& v) -> Vector { return detail::q_from_v(mdp, v).rowwise().maxCoeff(); };
  auto greedy = [&mdp](const Matrix& q) {
    std::vector<int> pi(static_cast<std::size_t>(mdp.n_states));
    for (int s = 0; s < mdp.n_states; ++s) {
      Eigen::Index best = 0;
      q.row(s).maxCoeff(&best);
      pi[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return pi;
  };

  DpSolution sol;
  Vector v = Vector::Zero(mdp.n_states);
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Vector next = bellman(v);
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (delta <= tol) break;
  }
  if (it == max_iterations) throw SolverError("value_iteration: iteration cap reached");

  // Policy-iteration polish: the greedy policy of a near-optimal V is optimal
  // after a handful of exact improvement steps.
  std::vector<int> pi = greedy(detail::q_from_v(mdp, v));
  for (int round = 0; round < 100; ++round) {
    const auto pe = policy_evaluate(mdp, detail::deterministic_table(mdp, pi));
    bool changed = false;
    for (int s = 0; s < mdp.n_states; ++s) {
      Eigen::Index best = 0;
      const double best_q = pe.q.row(s).maxCoeff(&best);
      if (best_q > pe.q(s, pi[static_cast<std::size_t>(s)]) + 1e-12) {
        pi[static_cast<std::size_t>(s)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) {
      if ((bellman(pe.v) - pe.v).cwiseAbs().maxCoeff() <= (bellman(v) - v).cwiseAbs().maxCoeff()) v = pe.v;
      break;
    }
  }

  sol.v_star = v;
  sol.q_star = detail::q_from_v(mdp, v);
  sol.pi_star = pi;
  sol.j_star = mdp.rho.dot(v);
  sol.bellman_residual = (bellman(v) - v).cwiseAbs().maxCoeff();
  sol.iterations = it + 1;
  return sol;
}

inline Matrix deterministic_policy_table(const TabularMdp& mdp, const std::vector<int>& actions) {
  return detail::deterministic_table(mdp, actions);
}

/// H-step truncated return J^H of a tabular policy.
inline double truncated_return(const TabularMdp& mdp, const Matrix& policy_table, int horizon) {
  const Matrix p_pi = detail::state_transition(mdp, policy_table);
  const Vector r_pi = policy_table.cwiseProduct(mdp.reward).rowwise().sum();
  Vector v = Vector::Zero(mdp.n_states);
  for (int k = 0; k < horizon; ++k) v = r_pi + mdp.gamma * p_pi * v;
  return mdp.rho.dot(v);
}

enum class TestMdpKind { chain2, random };

/// Two states, two actions: a0 stays, a1 flips, r(s,a) = 1{s = s1}, rho = delta_{s0}.
inline TabularMdp make_chain2(double gamma = 0.9) {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.gamma = gamma;
  mdp.transition = RowMatrix::Zero(4, 2);
  mdp.transition(0, 0) = 1.0;  // (s0, stay) -> s0
  mdp.transition(1, 1) = 1.0;  // (s0, flip) -> s1
  mdp.transition(2, 1) = 1.0;  // (s1, stay) -> s1
  mdp.transition(3, 0) = 1.0;  // (s1, flip) -> s0
  mdp.reward = Matrix::Zero(2, 2);
  mdp.reward.row(1).setOnes();
  mdp.rho = Vector::Zero(2);
  mdp.rho(0) = 1.0;
  mdp.reward_bound = 1.0;
  return mdp;
}

/// Deterministic constructor for the test environments. Random rows are
/// Dirichlet(1) draws; rewards are uniform on [-R, R].
inline TabularMdp make_test_mdp(TestMdpKind kind, std::uint64_t seed, int n_states = 2,
                                int n_actions = 2, double gamma = 0.9, double reward_bound = 1.0) {
  if (kind == TestMdpKind::chain2) return make_chain2(gamma);
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("make_test_mdp: sizes must be >= 1");

  RngStream rng(seed, 0x4d44505f52414e44ULL);  // "MDP_RAND"
  auto simplex = [&rng](Eigen::Index n) {
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = -std::log(rng.uniform_positive());
    return Vector(x / x.sum());
  };

  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.reward_bound = reward_bound;
  mdp.transition.resize(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
  for (Eigen::Index row = 0; row < mdp.transition.rows(); ++row) mdp.transition.row(row) = simplex(n_states).transpose();
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = reward_bound * (2.0 * rng.uniform() - 1.0);
  mdp.rho = simplex(n_states);
  return mdp;
}

}  // namespace vrpg
