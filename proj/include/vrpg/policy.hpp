#pragma once

// Policy parametrizations, score functions and exact policy-gradient oracles.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "vrpg/mdp.hpp"
#include "vrpg/rng.hpp"

namespace vrpg {

/// Every family maps (theta, s) to a distribution over actions and exposes
/// its score function grad_theta log pi_theta(a|s).
template <class P>
concept PolicyFamily = requires(const P& p, const Vector& theta, int s, const typename P::Action& a,
                                RngStream& rng, Eigen::Ref<Vector> out) {
  typename P::Action;
  { p.dim() } -> std::convertible_to<int>;
  { p.n_states() } -> std::convertible_to<int>;
  { p.log_prob(theta, s, a) } -> std::convertible_to<double>;
  { p.accumulate_score(theta, s, a, 1.0, out) };
  { p.sample(theta, s, rng) } -> std::convertible_to<typename P::Action>;
};

/// Families with finitely many actions and closed-form probabilities.
template <class P>
concept DiscretePolicy = PolicyFamily<P> && std::same_as<typename P::Action, int> &&
                         requires(const P& p, const Vector& theta, int s) {
                           { p.n_actions() } -> std::convertible_to<int>;
                           { p.probabilities(theta, s) } -> std::convertible_to<Vector>;
                         };

namespace detail {

inline void check_state(int s, int n_states) {
  if (s < 0 || s >= n_states) throw std::out_of_range("policy: state index out of range");
}

inline void check_theta(const Vector& theta, int dim) {
  if (theta.size() != dim) throw std::invalid_argument("policy: parameter dimension mismatch");
}

inline Vector softmax(const Vector& logits) {
  const double shift = logits.maxCoeff();
  Vector p = (logits.array() - shift).exp();
  return p / p.sum();
}

inline double log_softmax_at(const Vector& logits, int a) {
  const double shift = logits.maxCoeff();
  return logits(a) - shift - std::log((logits.array() - shift).exp().sum());
}

}  // namespace detail

/// Tabular softmax: theta[s * n_actions + a] is the logit of a in state s.
class SoftmaxTabular {
 public:
  using Action = int;

  SoftmaxTabular(int n_states, int n_actions) : n_states_(n_states), n_actions_(n_actions) {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("SoftmaxTabular: sizes must be >= 1");
  }

  int dim() const { return n_states_ * n_actions_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  Vector probabilities(const Vector& theta, int s) const {
    detail::check_theta(theta, dim());
    detail::check_state(s, n_states_);
    return detail::softmax(theta.segment(static_cast<Eigen::Index>(s) * n_actions_, n_actions_));
  }

  double log_prob(const Vector& theta, int s, int a) const {
    detail::check_theta(theta, dim());
    detail::check_state(s, n_states_);
    return detail::log_softmax_at(theta.segment(static_cast<Eigen::Index>(s) * n_actions_, n_actions_), a);
  }

  /// out += scale * score(s, a); only the block of state s is touched.
  void accumulate_score(const Vector& theta, int s, int a, double scale, Eigen::Ref<Vector> out) const {
    const Vector p = probabilities(theta, s);
    auto block = out.segment(static_cast<Eigen::Index>(s) * n_actions_, n_actions_);
    block -= scale * p;
    block(a) += scale;
  }

  int sample(const Vector& theta, int s, RngStream& rng) const {
    const Vector p = probabilities(theta, s);
    return rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  }

 private:
  int n_states_;
  int n_actions_;
};

/// Linear softmax: logits phi(s, a)^T theta with features[s] an n_actions x d matrix.
class SoftmaxLinear {
 public:
  using Action = int;

  explicit SoftmaxLinear(std::vector<Matrix> features) : features_(std::move(features)) {
    if (features_.empty()) throw std::invalid_argument("SoftmaxLinear: no states");
    for (const auto& f : features_) {
      if (f.rows() != features_.front().rows() || f.cols() != features_.front().cols() || f.rows() < 1)
        throw std::invalid_argument("SoftmaxLinear: inconsistent feature shapes");
      if (!f.allFinite()) throw std::invalid_argument("SoftmaxLinear: non-finite features");
    }
  }

  int dim() const { return static_cast<int>(features_.front().cols()); }
  int n_states() const { return static_cast<int>(features_.size()); }
  int n_actions() const { return static_cast<int>(features_.front().rows()); }
  const std::vector<Matrix>& features() const { return features_; }

  Vector probabilities(const Vector& theta, int s) const {
    detail::check_theta(theta, dim());
    detail::check_state(s, n_states());
    return detail::softmax(features_[static_cast<std::size_t>(s)] * theta);
  }

  double log_prob(const Vector& theta, int s, int a) const {
    detail::check_theta(theta, dim());
    detail::check_state(s, n_states());
    return detail::log_softmax_at(features_[static_cast<std::size_t>(s)] * theta, a);
  }

  void accumulate_score(const Vector& theta, int s, int a, double scale, Eigen::Ref<Vector> out) const {
    const Vector p = probabilities(theta, s);
    const Matrix& phi = features_[static_cast<std::size_t>(s)];
    out += scale * (phi.row(a).transpose() - phi.transpose() * p);
  }

  int sample(const Vector& theta, int s, RngStream& rng) const {
    const Vector p = probabilities(theta, s);
    return rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  }

 private:
  std::vector<Matrix> features_;
};

/// Gaussian policy N(phi(s)^T theta, Sigma) over R^k with features[s] a d x k
/// matrix and a fixed symmetric positive definite covariance.
class GaussianLinear {
 public:
  using Action = Vector;

  GaussianLinear(std::vector<Matrix> features, Matrix covariance)
      : features_(std::move(features)), covariance_(std::move(covariance)) {
    if (features_.empty()) throw std::invalid_argument("GaussianLinear: no states");
    for (const auto& f : features_) {
      if (f.rows() != features_.front().rows() || f.cols() != features_.front().cols())
        throw std::invalid_argument("GaussianLinear: inconsistent feature shapes");
    }
    if (covariance_.rows() != action_dim() || covariance_.cols() != action_dim())
      throw std::invalid_argument("GaussianLinear: covariance shape mismatch");
    if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("GaussianLinear: covariance must be symmetric");
    llt_.compute(covariance_);
    if (llt_.info() != Eigen::Success) throw std::invalid_argument("GaussianLinear: covariance must be positive definite");
    precision_ = llt_.solve(Matrix::Identity(action_dim(), action_dim()));
    lower_ = llt_.matrixL();
    log_det_ = 2.0 * lower_.diagonal().array().log().sum();
  }

  int dim() const { return static_cast<int>(features_.front().rows()); }
  int action_dim() const { return static_cast<int>(features_.front().cols()); }
  int n_states() const { return static_cast<int>(features_.size()); }
  const std::vector<Matrix>& features() const { return features_; }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& precision() const { return precision_; }

  Vector mean(const Vector& theta, int s) const {
    detail::check_theta(theta, dim());
    detail::check_state(s, n_states());
    return features_[static_cast<std::size_t>(s)].transpose() * theta;
  }

  double log_prob(const Vector& theta, int s, const Vector& a) const {
    const Vector diff = a - mean(theta, s);
    const double quad = diff.dot(precision_ * diff);
    return -0.5 * (quad + log_det_ + action_dim() * std::log(2.0 * std::numbers::pi));
  }

  void accumulate_score(const Vector& theta, int s, const Vector& a, double scale, Eigen::Ref<Vector> out) const {
    const Vector diff = a - mean(theta, s);
    out += scale * (features_[static_cast<std::size_t>(s)] * (precision_ * diff));
  }

  Vector sample(const Vector& theta, int s, RngStream& rng) const {
    Vector z(action_dim());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean(theta, s) + lower_ * z;
  }

  /// Per-state Fisher information phi(s) Sigma^{-1} phi(s)^T; independent of theta.
  Matrix state_fisher(int s) const {
    detail::check_state(s, n_states());
    const Matrix& phi = features_[static_cast<std::size_t>(s)];
    return phi * precision_ * phi.transpose();
  }

 private:
  std::vector<Matrix> features_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
  Matrix precision_;
  Matrix lower_;
  double log_det_ = 0.0;
};

template <PolicyFamily P>
Vector score(const P& family, const Vector& theta, int s, const typename P::Action& a) {
  Vector out = Vector::Zero(family.dim());
  family.accumulate_score(theta, s, a, 1.0, out);
  return out;
}

/// n_states x n_actions table of pi_theta(a|s).
template <DiscretePolicy P>
Matrix policy_table(const P& family, const Vector& theta) {
  Matrix table(family.n_states(), family.n_actions());
  for (int s = 0; s < family.n_states(); ++s) table.row(s) = family.probabilities(theta, s).transpose();
  return table;
}

template <DiscretePolicy P>
void check_compatible(const TabularMdp& mdp, const P& family) {
  if (family.n_states() != mdp.n_states || family.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy family is incompatible with the MDP");
}

struct FisherMatrix {
  Matrix f;
  double damping = 0.0;
  /// Smallest eigenvalue of the undamped f.
  double mu_f_estimate = 0.0;

  Matrix damped() const { return f + damping * Matrix::Identity(f.rows(), f.cols()); }
};

/// Smallest eigenvalue relevant to Fisher conditioning. For tabular softmax the
/// per-state constant directions are always in the kernel, so the minimum is
/// taken on their orthogonal complement.
template <PolicyFamily P>
double fisher_min_eigenvalue(const P& family, const Matrix& f) {
  if constexpr (std::is_same_v<P, SoftmaxTabular>) {
    const int ns = family.n_states();
    const int na = family.n_actions();
    if (na == 1) return 0.0;
    // Orthonormal basis of {x : sum_a x[s, a] = 0 for every s}.
    Matrix basis = Matrix::Zero(family.dim(), static_cast<Eigen::Index>(ns) * (na - 1));
    Matrix block_basis(na, na - 1);
    {
      Matrix centering = Matrix::Identity(na, na) - Matrix::Constant(na, na, 1.0 / na);
      Eigen::SelfAdjointEigenSolver<Matrix> es(centering);
      block_basis = es.eigenvectors().rightCols(na - 1);
    }
    for (int s = 0; s < ns; ++s)
      basis.block(static_cast<Eigen::Index>(s) * na, static_cast<Eigen::Index>(s) * (na - 1), na, na - 1) = block_basis;
    const Matrix reduced = basis.transpose() * f * basis;
    return Eigen::SelfAdjointEigenSolver<Matrix>(reduced, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  } else {
    return Eigen::SelfAdjointEigenSolver<Matrix>(f, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  }
}

/// F = sum_{s,a} nu(s,a) score score^T for a discrete family.
template <DiscretePolicy P>
FisherMatrix fisher_exact(const P& family, const Vector& theta, const Matrix& nu, double damping = 0.0) {
  if (nu.rows() != family.n_states() || nu.cols() != family.n_actions())
    throw std::invalid_argument("fisher_exact: visitation shape mismatch");
  FisherMatrix out;
  out.f = Matrix::Zero(family.dim(), family.dim());
  for (int s = 0; s < family.n_states(); ++s) {
    for (int a = 0; a < family.n_actions(); ++a) {
      if (nu(s, a) == 0.0) continue;
      const Vector g = score(family, theta, s, a);
      out.f.noalias() += nu(s, a) * g * g.transpose();
    }
  }
  out.f = 0.5 * (out.f + out.f.transpose());
  out.damping = damping;
  out.mu_f_estimate = Eigen::SelfAdjointEigenSolver<Matrix>(out.f, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  return out;
}

/// Gaussian-linear Fisher under a state distribution: E_s[phi(s) Sigma^{-1} phi(s)^T].
inline FisherMatrix fisher_exact(const GaussianLinear& family, const Vector& /*theta*/, const Vector& state_dist,
                                 double damping = 0.0) {
  if (state_dist.size() != family.n_states()) throw std::invalid_argument("fisher_exact: state distribution size mismatch");
  FisherMatrix out;
  out.f = Matrix::Zero(family.dim(), family.dim());
  for (int s = 0; s < family.n_states(); ++s)
    if (state_dist(s) != 0.0) out.f += state_dist(s) * family.state_fisher(s);
  out.f = 0.5 * (out.f + out.f.transpose());
  out.damping = damping;
  out.mu_f_estimate = Eigen::SelfAdjointEigenSolver<Matrix>(out.f, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  return out;
}

/// Which action-value table multiplies the score in the policy-gradient formula.
enum class GradientWeight { q_values, advantages };

/// grad J(theta) = (1/(1-gamma)) E_{(s,a)~nu}[score(s,a) Q(s,a)], evaluated exactly.
template <DiscretePolicy P>
Vector exact_policy_gradient(const TabularMdp& mdp, const P& family, const Vector& theta,
                             GradientWeight weight = GradientWeight::q_values) {
  check_compatible(mdp, family);
  const auto pe = policy_evaluate(mdp, policy_table(family, theta));
  const Matrix& values = weight == GradientWeight::q_values ? pe.q : pe.adv;
  Vector grad = Vector::Zero(family.dim());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (pe.nu_rho(s, a) != 0.0) family.accumulate_score(theta, s, a, pe.nu_rho(s, a) * values(s, a), grad);
  return grad / (1.0 - mdp.gamma);
}

class EnumerationBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Upper bound on the number of positive-probability length-H trajectories.
inline double trajectory_count_bound(const TabularMdp& mdp, int horizon) {
  int max_support = 0;
  for (Eigen::Index row = 0; row < mdp.transition.rows(); ++row)
    max_support = std::max(max_support, static_cast<int>((mdp.transition.row(row).array() > 0.0).count()));
  const double initial = static_cast<double>((mdp.rho.array() > 0.0).count());
  return initial * mdp.n_actions * std::pow(static_cast<double>(mdp.n_actions) * max_support, horizon - 1);
}

/// grad J^H(theta) by brute-force enumeration of every length-H trajectory,
/// weighting each GPOMDP term by its probability under p^H_rho(.|theta).
template <DiscretePolicy P>
Vector exact_truncated_gradient(const TabularMdp& mdp, const P& family, const Vector& theta, int horizon,
                                double budget = 1e6) {
  check_compatible(mdp, family);
  if (horizon < 1) throw std::invalid_argument("exact_truncated_gradient: horizon must be >= 1");
  if (trajectory_count_bound(mdp, horizon) > budget)
    throw EnumerationBudgetExceeded("exact_truncated_gradient: enumeration budget exceeded");

  const int d = family.dim();
  const Matrix table = policy_table(family, theta);
  std::vector<Vector> scores(static_cast<std::size_t>(mdp.n_states * mdp.n_actions));
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      scores[static_cast<std::size_t>(s * mdp.n_actions + a)] = score(family, theta, s, a);

  Vector grad = Vector::Zero(d);
  std::vector<Vector> cumulative(static_cast<std::size_t>(horizon) + 1, Vector::Zero(d));

  // Depth-first over prefixes; `prob` is the probability of (s_0, a_0, ..., s_h).
  auto visit = [&](auto&& self, int h, int s, double prob, double discount) -> void {
    const Vector& before = cumulative[static_cast<std::size_t>(h)];
    Vector& after = cumulative[static_cast<std::size_t>(h) + 1];
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = prob * table(s, a);
      if (pa == 0.0) continue;
      after = before + scores[static_cast<std::size_t>(s * mdp.n_actions + a)];
      const double r = mdp.reward(s, a);
      if (r != 0.0) grad += (pa * discount * r) * after;
      if (h + 1 < horizon) {
        const auto next = mdp.next_distribution(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2)
          if (next[static_cast<std::size_t>(s2)] > 0.0)
            self(self, h + 1, s2, pa * next[static_cast<std::size_t>(s2)], discount * mdp.gamma);
      }
    }
  };
  for (int s0 = 0; s0 < mdp.n_states; ++s0)
    if (mdp.rho(s0) > 0.0) visit(visit, 0, s0, mdp.rho(s0), 1.0);
  return grad;
}

/// grad J^H(theta) by backward recursion over truncated action values:
/// sum_t gamma^t E[score(s_t,a_t) Q_{H-t}(s_t,a_t)]. Independent of the
/// enumeration route above and usable at any horizon.
template <DiscretePolicy P>
Vector truncated_gradient_dp(const TabularMdp& mdp, const P& family, const Vector& theta, int horizon) {
  check_compatible(mdp, family);
  if (horizon < 1) throw std::invalid_argument("truncated_gradient_dp: horizon must be >= 1");
  const Matrix table = policy_table(family, theta);

  // q_k(s,a): expected discounted reward over k steps starting from (s,a).
  std::vector<Matrix> q(static_cast<std::size_t>(horizon) + 1);
  q[0] = Matrix::Zero(mdp.n_states, mdp.n_actions);
  Vector v = Vector::Zero(mdp.n_states);
  for (int k = 1; k <= horizon; ++k) {
    q[static_cast<std::size_t>(k)] = detail::q_from_v(mdp, v);
    v = table.cwiseProduct(q[static_cast<std::size_t>(k)]).rowwise().sum();
  }

  const Matrix p_pi = detail::state_transition(mdp, table);
  Vector mu = mdp.rho;
  Vector grad = Vector::Zero(family.dim());
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Matrix& qk = q[static_cast<std::size_t>(horizon - t)];
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mu(s) == 0.0) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double w = discount * mu(s) * table(s, a) * qk(s, a);
        if (w != 0.0) family.accumulate_score(theta, s, a, w, grad);
      }
    }
    mu = p_pi.transpose() * mu;
    discount *= mdp.gamma;
  }
  return grad;
}

struct ScoreConstants {
  double g = 0.0;  ///< max observed score norm
  double m = 0.0;  ///< max observed score Lipschitz ratio
  std::optional<double> g_analytic;
  std::optional<double> m_analytic;
  int probes = 0;
};

struct ConstantsProbeSpec {
  int n_theta = 20;
  double theta_scale = 2.0;
  std::uint64_t seed = 1;
  /// Continuous families: actions probed per state, drawn from [-action_range, action_range]^k.
  int n_actions_probe = 8;
  double action_range = 1.0;
};

/// Empirical G and M over a random grid of parameters and state-action pairs.
template <PolicyFamily P>
ScoreConstants constants_probe(const P& family, const ConstantsProbeSpec& spec) {
  if (spec.n_theta < 1) throw std::invalid_argument("constants_probe: empty probe set");
  RngStream rng(spec.seed, 0x50524f4245ULL);
  std::vector<Vector> thetas;
  for (int i = 0; i < spec.n_theta; ++i) {
    Vector th(family.dim());
    for (Eigen::Index j = 0; j < th.size(); ++j) th(j) = spec.theta_scale * (2.0 * rng.uniform() - 1.0);
    thetas.push_back(th);
  }

  std::vector<std::pair<int, typename P::Action>> pairs;
  for (int s = 0; s < family.n_states(); ++s) {
    if constexpr (DiscretePolicy<P>) {
      for (int a = 0; a < family.n_actions(); ++a) pairs.emplace_back(s, a);
    } else {
      for (int k = 0; k < spec.n_actions_probe; ++k) {
        Vector a(family.action_dim());
        for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = spec.action_range * (2.0 * rng.uniform() - 1.0);
        pairs.emplace_back(s, a);
      }
    }
  }

  ScoreConstants out;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (const auto& [s, a] : pairs) {
      const Vector g1 = score(family, thetas[i], s, a);
      out.g = std::max(out.g, g1.norm());
      ++out.probes;
      // Pair with the next parameter and with a small perturbation of this one.
      const Vector& other = thetas[(i + 1) % thetas.size()];
      const Vector near = thetas[i] + 1e-3 * (other - thetas[i]);
      for (const Vector* th2 : {&other, &near}) {
        const double dist = (thetas[i] - *th2).norm();
        if (dist == 0.0) continue;
        out.m = std::max(out.m, (g1 - score(family, *th2, s, a)).norm() / dist);
      }
    }
  }
  if constexpr (std::is_same_v<P, SoftmaxTabular>) {
    out.g_analytic = std::sqrt(2.0);
    out.m_analytic = 1.0;
  }
  return out;
}

}  // namespace vrpg
