#pragma once

// Constants report, the global-gap decomposition audited on finished runs,
// the performance-difference identity and the truncation-bias audit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "vrpg/algorithms.hpp"
#include "vrpg/constants.hpp"
#include "vrpg/estimators.hpp"
#include "vrpg/mdp.hpp"
#include "vrpg/npg_solver.hpp"
#include "vrpg/policy.hpp"

namespace vrpg {

struct ConstantsSpec {
  ConstantsProbeSpec score;
  /// sigma^2 probes (thetas) and W probes (theta_pairs); absent sets leave the field empty.
  MomentProbeSpec moments;
  Vector theta0;
  double lambda = 1e-3;
  /// Use the closed-form G and M when the family has them.
  bool prefer_analytic = true;
};

namespace detail {

inline std::vector<Vector> probe_thetas(int dim, const ConstantsProbeSpec& spec) {
  RngStream rng(spec.seed, 0x4649534845ULL);
  std::vector<Vector> out;
  for (int i = 0; i < spec.n_theta; ++i) {
    Vector th(dim);
    for (Eigen::Index j = 0; j < th.size(); ++j) th(j) = spec.theta_scale * (2.0 * rng.uniform() - 1.0);
    out.push_back(th);
  }
  return out;
}

}  // namespace detail

/// Deterministic optimal policy as a table.
inline Matrix optimal_policy_table(const TabularMdp& mdp) {
  return deterministic_policy_table(mdp, value_iteration(mdp).pi_star);
}

/// E_{s ~ d*}[KL(pi*(.|s) || pi_theta(.|s))]; pi* deterministic gives -log pi_theta(a*|s).
template <DiscretePolicy P>
double kl_from_optimal(const TabularMdp& mdp, const P& family, const Vector& theta) {
  const Matrix pi_star = optimal_policy_table(mdp);
  const auto pe_star = policy_evaluate(mdp, pi_star);
  const Matrix pi = policy_table(family, theta);
  double kl = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (pe_star.d_rho(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a)
      if (pi_star(s, a) > 0.0) kl += pe_star.d_rho(s) * pi_star(s, a) * (std::log(pi_star(s, a)) - std::log(pi(s, a)));
  }
  return kl;
}

template <Environment Env, PolicyFamily P>
ConstantsReport compute_constants(const Env& env, const P& family, const ConstantsSpec& spec) {
  if (spec.theta0.size() != family.dim()) throw std::invalid_argument("compute_constants: theta0 has the wrong dimension");
  ConstantsReport rep;
  const ScoreConstants sc = constants_probe(family, spec.score);
  rep.G = spec.prefer_analytic && sc.g_analytic ? *sc.g_analytic : sc.g;
  rep.M = spec.prefer_analytic && sc.m_analytic ? *sc.m_analytic : sc.m;
  rep.R = env.bound();
  rep.gamma = env.discount();
  rep.lambda = spec.lambda;

  if (!spec.moments.thetas.empty() || !spec.moments.theta_pairs.empty()) {
    const MomentReport mr = moment_probe(env, family, spec.moments);
    if (!spec.moments.thetas.empty()) rep.sigma2_hat = mr.sigma2_hat;
    if (!spec.moments.theta_pairs.empty()) rep.W_hat = mr.w_hat;
  }

  std::vector<Vector> thetas = detail::probe_thetas(family.dim(), spec.score);
  thetas.insert(thetas.begin(), spec.theta0);

  if constexpr (std::is_same_v<Env, TabularMdp> && DiscretePolicy<P>) {
    check_compatible(env, family);
    rep.mu_F = std::numeric_limits<double>::infinity();
    for (const auto& th : thetas) {
      const auto pe = policy_evaluate(env, policy_table(family, th));
      rep.mu_F = std::min(rep.mu_F, fisher_min_eigenvalue(family, fisher_exact(family, th, pe.nu_rho).f));
    }
    rep.mu_F = std::max(0.0, rep.mu_F);
    rep.mu_F_convention = std::is_same_v<P, SoftmaxTabular>
                              ? "undamped, on the complement of per-state constant directions"
                              : "undamped, full parameter space";
    const Matrix pi_star = optimal_policy_table(env);
    const auto pe_star = policy_evaluate(env, pi_star);
    rep.j_star = pe_star.j;
    rep.j_theta0 = policy_evaluate(env, policy_table(family, spec.theta0)).j;
    rep.kl_init = kl_from_optimal(env, family, spec.theta0);
    try {
      rep.eps_bias = transferred_error(env, family, spec.theta0, pi_star, spec.lambda).value;
    } catch (const NotPositiveDefinite&) {
      rep.eps_bias = std::numeric_limits<double>::quiet_NaN();
    }
  } else if constexpr (std::is_same_v<P, GaussianLinear>) {
    const Vector uniform = Vector::Constant(family.n_states(), 1.0 / family.n_states());
    rep.mu_F = std::max(0.0, fisher_min_eigenvalue(family, fisher_exact(family, spec.theta0, uniform).f));
    rep.mu_F_convention = "undamped, uniform state distribution";
  }
  rep.refresh_derived();
  return rep;
}

/// Exact damped w*^k and transferred error eps_k at every iterate of a run.
struct WstarSequence {
  std::vector<Vector> w_star;
  std::vector<double> eps_bias;
};

template <DiscretePolicy P>
WstarSequence wstar_sequence(const TabularMdp& mdp, const P& family, const RunResult& run, double lambda) {
  const Matrix pi_star = optimal_policy_table(mdp);
  WstarSequence out;
  for (const auto& th : run.thetas) {
    const auto te = transferred_error(mdp, family, th, pi_star, lambda);
    out.w_star.push_back(te.w_star);
    out.eps_bias.push_back(te.value);
  }
  return out;
}

struct GapDecomposition {
  double lhs = 0.0;
  double term_bias = 0.0;
  double term_kl = 0.0;
  double term_w2 = 0.0;
  double term_werr = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;
  bool holds = false;
  /// No per-iterate w* supplied: term_werr from logged errors and term_bias from the report.
  bool partial = false;
  std::string dominant;
  std::int64_t iterations = 0;

  double rhs() const { return term_bias + term_kl + term_w2 + term_werr; }
};

/// J* - (1/K) sum_k J(theta^k)
///   <= sqrt(eps_bias) / (1 - gamma) + KL_init / (eta K) + (M eta / 2K) sum ||w^k||^2 + (G / K) sum ||w^k - w*^k||.
inline GapDecomposition decompose_global_bound(const RunResult& run, const ConstantsReport& c,
                                               const std::optional<WstarSequence>& wstar = std::nullopt) {
  const auto k = run.records.size();
  if (k == 0) throw std::invalid_argument("decompose_global_bound: run has no iterations");
  if (run.directions.size() != k) throw std::invalid_argument("decompose_global_bound: run lacks directions");
  if (wstar && (wstar->w_star.size() != k || wstar->eps_bias.size() != k))
    throw std::invalid_argument("decompose_global_bound: w* sequence length mismatch");
  const double kd = static_cast<double>(k);
  const double eta = run.config.eta;

  GapDecomposition out;
  out.iterations = static_cast<std::int64_t>(k);
  out.partial = !wstar.has_value();
  double j_sum = 0.0;
  double w2_sum = 0.0;
  double werr_sum = 0.0;
  double eps_max = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& rec = run.records[i];
    if (std::isnan(rec.j_exact)) throw std::invalid_argument("decompose_global_bound: iterate lacks an exact J");
    j_sum += rec.j_exact;
    w2_sum += run.directions[i].squaredNorm();
    if (wstar) {
      werr_sum += (run.directions[i] - wstar->w_star[i]).norm();
      eps_max = std::max(eps_max, wstar->eps_bias[i]);
    } else {
      werr_sum += std::isnan(rec.w_err) ? 0.0 : rec.w_err;
    }
  }
  if (!wstar) eps_max = std::isnan(c.eps_bias) ? 0.0 : c.eps_bias;

  out.lhs = c.j_star - j_sum / kd;
  out.term_bias = std::sqrt(eps_max) / (1.0 - c.gamma);
  out.term_kl = c.kl_init / (eta * kd);
  out.term_w2 = c.M * eta * w2_sum / (2.0 * kd);
  out.term_werr = c.G * werr_sum / kd;
  out.slack = out.rhs() - out.lhs;
  out.tolerance = 1e-6 * std::abs(out.lhs) + 1e-9;
  out.holds = out.slack >= -out.tolerance;

  const std::pair<double, const char*> terms[] = {{out.term_bias, "bias"},
                                                  {out.term_kl, "kl"},
                                                  {out.term_w2, "w2"},
                                                  {out.term_werr, "werr"}};
  out.dominant = std::max_element(std::begin(terms), std::end(terms))->second;
  return out;
}

/// |E_{nu*}[A^{pi_theta}] - (1 - gamma)(J* - J(theta))|.
template <DiscretePolicy P>
double perf_diff_check(const TabularMdp& mdp, const P& family, const Vector& theta) {
  check_compatible(mdp, family);
  const auto pe_star = policy_evaluate(mdp, optimal_policy_table(mdp));
  const auto pe = policy_evaluate(mdp, policy_table(family, theta));
  const double lhs = (pe_star.nu_rho.array() * pe.adv.array()).sum();
  const double rhs = (1.0 - mdp.gamma) * (pe_star.j - pe.j);
  return std::abs(lhs - rhs);
}

struct TruncationAuditRow {
  int horizon = 0;
  double gap = 0.0;
  double bound = 0.0;
  bool enumerated = false;
  bool ok = false;
};

/// ||grad J^H - grad J|| against its closed-form bound for each H. grad J^H is
/// enumerated when the path count allows and computed by backward recursion otherwise.
template <DiscretePolicy P>
std::vector<TruncationAuditRow> audit_truncation(const TabularMdp& mdp, const P& family, const Vector& theta,
                                                 const std::vector<int>& horizons, double g_bound) {
  const Vector full = exact_policy_gradient(mdp, family, theta);
  std::vector<TruncationAuditRow> rows;
  for (int h : horizons) {
    TruncationAuditRow row;
    row.horizon = h;
    Vector gh;
    if (trajectory_count_bound(mdp, h) <= 1e6) {
      gh = exact_truncated_gradient(mdp, family, theta, h);
      row.enumerated = true;
    } else {
      gh = truncated_gradient_dp(mdp, family, theta, h);
    }
    row.gap = (gh - full).norm();
    row.bound = truncation_bias_bound(g_bound, mdp.reward_bound, mdp.gamma, h);
    row.ok = row.gap <= row.bound;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace vrpg
