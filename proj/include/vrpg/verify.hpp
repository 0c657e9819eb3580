#pragma once

// Acceptance checks. Each returns a CriterionResult; `fast` shrinks sample
// sizes and seed counts but keeps every threshold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vrpg/algorithms.hpp"
#include "vrpg/analysis.hpp"
#include "vrpg/experiment.hpp"
#include "vrpg/io.hpp"

namespace vrpg {

enum class VerifyLevel { fast, full };

inline VerifyLevel level_from_string(const std::string& s) {
  if (s == "fast") return VerifyLevel::fast;
  if (s == "full") return VerifyLevel::full;
  throw std::invalid_argument("unknown verify level: " + s);
}

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  Json data = Json::object();
};

/// Single-trajectory gradient estimator under test: (trajectory, theta) -> g.
using TrajectoryEstimator = std::function<Vector(const Trajectory<int>&, const Vector&)>;

struct UnbiasednessReport {
  Vector mean;
  Vector std_error;
  Vector exact;
  double max_z = 0.0;
  bool passed = false;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
CriterionResult timed(int id, std::string name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.id = id;
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

/// Chain2 and two random 5-state, 3-action MDPs.
inline std::vector<std::pair<std::string, TabularMdp>> benchmark_mdps(bool chain_only = false) {
  std::vector<std::pair<std::string, TabularMdp>> out{{"chain2", make_chain2(0.9)}};
  if (!chain_only) {
    out.emplace_back("random5_101", make_test_mdp(TestMdpKind::random, 101, 5, 3, 0.9));
    out.emplace_back("random5_202", make_test_mdp(TestMdpKind::random, 202, 5, 3, 0.9));
  }
  return out;
}

inline Vector random_vector(RngStream& rng, int d, double scale) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * rng.normal();
  return v;
}

}  // namespace detail

/// Per-coordinate z-test |mean - exact| <= z * SE over i.i.d. samples. A
/// coordinate with zero sample variance must match to 1e-12 absolute.
inline UnbiasednessReport check_unbiased(const std::vector<Vector>& samples, const Vector& exact, double z = 3.0) {
  if (samples.size() < 2) throw std::invalid_argument("check_unbiased: need at least two samples");
  const double n = static_cast<double>(samples.size());
  UnbiasednessReport r;
  r.exact = exact;
  r.mean = Vector::Zero(exact.size());
  for (const auto& s : samples) r.mean += s;
  r.mean /= n;
  Vector var = Vector::Zero(exact.size());
  for (const auto& s : samples) var += (s - r.mean).cwiseAbs2();
  r.std_error = (var / (n - 1.0) / n).cwiseSqrt();
  r.passed = true;
  for (Eigen::Index i = 0; i < exact.size(); ++i) {
    const double diff = std::abs(r.mean(i) - exact(i));
    const double zi = r.std_error(i) > 0.0 ? diff / r.std_error(i) : (diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
    r.max_z = std::max(r.max_z, zi);
    if (zi > z) r.passed = false;
  }
  return r;
}

/// Draws n trajectories of length H at theta and z-tests `estimator` against grad J^H(theta).
inline UnbiasednessReport check_estimator_unbiased(const TabularMdp& mdp, const SoftmaxTabular& family,
                                                   const Vector& theta, int horizon, int n, std::uint64_t seed,
                                                   const TrajectoryEstimator& estimator) {
  Sampler<TabularMdp, SoftmaxTabular> sampler(mdp, family);
  RngStream rng(seed, 0xC2);
  const auto batch = sampler.sample_batch(theta, horizon, n, rng);
  std::vector<Vector> samples;
  samples.reserve(batch.size());
  for (const auto& t : batch) samples.push_back(estimator(t, theta));
  return check_unbiased(samples, exact_truncated_gradient(mdp, family, theta, horizon));
}

inline TrajectoryEstimator gpomdp_estimator(const SoftmaxTabular& family, double gamma) {
  return [&family, gamma](const Trajectory<int>& t, const Vector& theta) {
    return gpomdp_truncated(t, family, theta, gamma).g;
  };
}

/// Exact gradients against central differences of the exact return, and the
/// performance-difference identity, on 20 random MDPs.
inline CriterionResult criterion_oracle(VerifyLevel /*level*/) {
  return detail::timed(1, "oracle correctness", [] {
    CriterionResult r;
    RngStream rng(2024, 0xC1);
    double worst_rel = 0.0;
    double worst_pd = 0.0;
    for (int i = 0; i < 20; ++i) {
      const int ns = 2 + i % 5;
      const int na = 2 + i % 3;
      const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 1000 + static_cast<std::uint64_t>(i), ns, na, 0.9);
      const SoftmaxTabular fam(ns, na);
      const Vector theta = detail::random_vector(rng, fam.dim(), 1.0);
      const Vector g = exact_policy_gradient(mdp, fam, theta);
      Vector fd(fam.dim());
      const double h = 1e-5;
      for (int k = 0; k < fam.dim(); ++k) {
        Vector tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        fd(k) = (policy_evaluate(mdp, policy_table(fam, tp)).j - policy_evaluate(mdp, policy_table(fam, tm)).j) / (2 * h);
      }
      worst_rel = std::max(worst_rel, (fd - g).norm() / std::max(g.norm(), 1e-300));
      worst_pd = std::max(worst_pd, perf_diff_check(mdp, fam, theta));
    }
    r.passed = worst_rel <= 1e-5 && worst_pd <= 1e-8;
    r.detail = "max relative FD error " + detail::fmt(worst_rel) + " (<= 1e-5), max perf-diff residual " +
               detail::fmt(worst_pd) + " (<= 1e-8)";
    r.data = {{"max_relative_fd_error", worst_rel}, {"max_perf_diff_residual", worst_pd}};
    return r;
  });
}

/// GPOMDP, the importance-weighted estimator and one recursive step against
/// the enumerated grad J^H on Chain2, H = 3. `plain` replaces the GPOMDP
/// estimator (used to inject faults).
inline CriterionResult criterion_unbiasedness(VerifyLevel level, const TrajectoryEstimator& plain = {}) {
  return detail::timed(2, "estimator unbiasedness", [&] {
    CriterionResult r;
    const int n = level == VerifyLevel::full ? 100000 : 20000;
    const int horizon = 3;
    const TabularMdp mdp = make_chain2(0.9);
    const SoftmaxTabular fam(2, 2);
    const double gamma = mdp.gamma;
    Vector theta_cur(4);
    theta_cur << 0.3, -0.2, 0.1, 0.4;
    Vector delta(4);
    delta << 1.0, -2.0, 0.5, 1.5;
    const Vector theta_prev = theta_cur + 0.3 * delta / delta.norm();

    const TrajectoryEstimator g_plain = plain ? plain : gpomdp_estimator(fam, gamma);
    const auto rep_plain = check_estimator_unbiased(mdp, fam, theta_cur, horizon, n, 11, g_plain);

    // g_w(tau | theta_prev) with tau ~ theta_cur estimates grad J^H(theta_prev).
    Sampler<TabularMdp, SoftmaxTabular> sampler(mdp, fam);
    RngStream rng(12, 0xC2);
    const auto batch = sampler.sample_batch(theta_cur, horizon, n, rng);
    std::vector<Vector> weighted;
    std::vector<Vector> recursive;
    const Vector exact_prev = exact_truncated_gradient(mdp, fam, theta_prev, horizon);
    const GradEstimate u_prev{exact_prev, EstimatorKind::exact, theta_prev, 0};
    for (const auto& t : batch) {
      weighted.push_back(gpomdp_weighted(t, fam, theta_prev, theta_cur, gamma).g);
      recursive.push_back(srvr_update<SoftmaxTabular>(u_prev, std::span(&t, 1), fam, theta_prev, theta_cur, gamma).g);
    }
    const auto rep_w = check_unbiased(weighted, exact_prev);
    const auto rep_u = check_unbiased(recursive, exact_truncated_gradient(mdp, fam, theta_cur, horizon));
    r.passed = rep_plain.passed && rep_w.passed && rep_u.passed;
    r.detail = "max z: gpomdp " + detail::fmt(rep_plain.max_z) + ", weighted " + detail::fmt(rep_w.max_z) +
               ", srvr step " + detail::fmt(rep_u.max_z) + " (<= 3), N = " + std::to_string(n);
    r.data = {{"n", n}, {"z_gpomdp", rep_plain.max_z}, {"z_weighted", rep_w.max_z}, {"z_srvr", rep_u.max_z}};
    return r;
  });
}

/// Measured truncation bias against its closed-form bound for H = 1..12 on Chain2.
inline CriterionResult criterion_truncation(VerifyLevel level) {
  return detail::timed(3, "truncation bound", [&] {
    CriterionResult r;
    const TabularMdp mdp = make_chain2(0.9);
    const SoftmaxTabular fam(2, 2);
    RngStream rng(3, 0xC3);
    std::vector<int> hs;
    for (int h = 1; h <= 12; ++h) hs.push_back(h);
    int violations = 0;
    int checked = 0;
    double worst_ratio = 0.0;
    Json rows = Json::array();
    const int n_theta = level == VerifyLevel::full ? 10 : 3;
    for (int i = 0; i < n_theta; ++i) {
      const Vector theta = i == 0 ? Vector::Zero(4) : detail::random_vector(rng, 4, 1.5);
      for (const auto& row : audit_truncation(mdp, fam, theta, hs, std::sqrt(2.0))) {
        ++checked;
        if (!row.ok) ++violations;
        worst_ratio = std::max(worst_ratio, row.gap / row.bound);
        if (i == 0) rows.push_back({{"H", row.horizon}, {"gap", row.gap}, {"bound", row.bound}});
      }
    }
    r.passed = violations == 0;
    r.detail = std::to_string(violations) + " violations in " + std::to_string(checked) +
               " (theta, H) checks, max gap/bound " + detail::fmt(worst_ratio);
    r.data = {{"violations", violations}, {"max_ratio", worst_ratio}, {"theta0_rows", rows}};
    return r;
  });
}

/// Directional curvature by finite differences of exact gradients against L_J.
inline CriterionResult criterion_smoothness(VerifyLevel level) {
  return detail::timed(4, "smoothness bound", [&] {
    CriterionResult r;
    const int probes = level == VerifyLevel::full ? 100 : 30;
    double worst = 0.0;
    bool ok = true;
    Json per_mdp = Json::array();
    for (const auto& [name, mdp] : detail::benchmark_mdps()) {
      const SoftmaxTabular fam(mdp.n_states, mdp.n_actions);
      ConstantsSpec cs;
      cs.theta0 = Vector::Zero(fam.dim());
      cs.score.n_theta = 4;
      const ConstantsReport c = compute_constants(mdp, fam, cs);
      RngStream rng(4, 0xC4);
      double max_curv = 0.0;
      for (int i = 0; i < probes; ++i) {
        const Vector theta = detail::random_vector(rng, fam.dim(), 2.0);
        Vector v = detail::random_vector(rng, fam.dim(), 1.0);
        v /= v.norm();
        const double eps = 1e-5;
        const double curv = std::abs((exact_policy_gradient(mdp, fam, theta + eps * v) -
                                      exact_policy_gradient(mdp, fam, theta)).dot(v)) / eps;
        max_curv = std::max(max_curv, curv);
      }
      ok = ok && max_curv <= c.L_J;
      worst = std::max(worst, max_curv / c.L_J);
      per_mdp.push_back({{"mdp", name}, {"max_curvature", max_curv}, {"L_J", c.L_J}});
    }
    r.passed = ok;
    r.detail = std::to_string(probes) + " probes per MDP, max curvature / L_J = " + detail::fmt(worst);
    r.data = {{"per_mdp", per_mdp}};
    return r;
  });
}

/// Averaged-SGD subproblem error against the damped exact solution on Chain2.
inline CriterionResult criterion_subproblem(VerifyLevel level) {
  return detail::timed(5, "subproblem solver", [&] {
    CriterionResult r;
    const int seeds = level == VerifyLevel::full ? 10 : 5;
    const TabularMdp mdp = make_chain2(0.9);
    const SoftmaxTabular fam(2, 2);
    const Vector theta = Vector::Zero(4);
    const double lambda = 1e-3;
    const Vector grad = exact_policy_gradient(mdp, fam, theta);
    const auto pe = policy_evaluate(mdp, policy_table(fam, theta));
    const Vector w_star = exact_npg_direction(fisher_exact(fam, theta, pe.nu_rho), grad, lambda).w;
    const GradEstimate u{grad, EstimatorKind::exact, theta, 0};

    auto rel_err = [&](bool procedure2, int iters, std::uint64_t seed) {
      Sampler<TabularMdp, SoftmaxTabular> sampler(mdp, fam);
      SgdConfig cfg;
      cfg.iterations = iters;
      cfg.stepsize = default_sgd_stepsize(std::sqrt(2.0));
      cfg.lambda = lambda;
      cfg.exact_adv = true;
      RngStream rng(seed, procedure2 ? 0xC52 : 0xC51);
      const Vector w = procedure2 ? srvr_npg_sgd(sampler, theta, u, cfg, rng).w : npg_sgd(sampler, theta, cfg, rng).w;
      return (w - w_star).squaredNorm() / w_star.squaredNorm();
    };

    bool ok = true;
    Json out = Json::object();
    std::string detail;
    for (bool p2 : {false, true}) {
      std::vector<double> e1, e4, e10;
      for (int s = 1; s <= seeds; ++s) {
        e1.push_back(rel_err(p2, 10000, static_cast<std::uint64_t>(s)));
        e4.push_back(rel_err(p2, 40000, static_cast<std::uint64_t>(s)));
        e10.push_back(rel_err(p2, 100000, static_cast<std::uint64_t>(s)));
      }
      const double m1 = detail::median(e1), m4 = detail::median(e4), m10 = detail::median(e10);
      const bool pass = m10 <= 0.01 && m4 < m1;
      ok = ok && pass;
      const std::string name = p2 ? "srvr_npg_sgd" : "npg_sgd";
      out[name] = {{"median_rel_err_1e4", m1}, {"median_rel_err_4e4", m4}, {"median_rel_err_1e5", m10}};
      detail += name + ": " + detail::fmt(m10) + " at 1e5 (<= 0.01), " + detail::fmt(m4) + " < " + detail::fmt(m1) + "; ";
    }
    r.passed = ok;
    r.detail = detail + "median of " + std::to_string(seeds) + " seeds";
    r.data = out;
    return r;
  });
}

struct AuditRun {
  std::string mdp;
  std::string algorithm;
  GapDecomposition gap;
};

/// Desk-scale runs of the four drivers with theorem stepsizes, about 1e4 trajectories each.
inline std::vector<RunConfig> audit_configs(const ConstantsReport& c) {
  auto base = [&](Algorithm a) {
    RunConfig cfg;
    cfg.algorithm = a;
    cfg.horizon = 20;
    cfg.lambda = c.lambda;
    cfg.score_bound = c.G;
    cfg.seed = 6;
    return cfg;
  };
  std::vector<RunConfig> out;
  RunConfig pg = base(Algorithm::pg);
  pg.eta = theorem_schedule(Schedule::thm1_pg, c, 0.1).config.eta;
  pg.iterations = 100;
  pg.batch = 100;
  out.push_back(pg);
  RunConfig npg = base(Algorithm::npg);
  npg.eta = theorem_schedule(Schedule::thm2_npg, c, 0.1).config.eta;
  npg.iterations = 100;
  npg.sgd.iterations = 50;
  out.push_back(npg);
  RunConfig spg = base(Algorithm::srvr_pg);
  spg.eta = theorem_schedule(Schedule::thm3_srvr_pg, c, 0.1).config.eta;
  spg.epochs = 10;
  spg.epoch_length = 10;
  spg.batch = 200;
  spg.minibatch = 90;
  out.push_back(spg);
  RunConfig snpg = base(Algorithm::srvr_npg);
  snpg.eta = theorem_schedule(Schedule::thm4_srvr_npg, c, 0.1).config.eta;
  snpg.epochs = 10;
  snpg.epoch_length = 10;
  snpg.batch = 100;
  snpg.minibatch = 10;
  snpg.sgd.iterations = 50;
  out.push_back(snpg);
  return out;
}

inline CriterionResult criterion_gap_audit(VerifyLevel level, std::vector<AuditRun>* runs_out = nullptr,
                                           Json* constants_out = nullptr) {
  return detail::timed(6, "global gap decomposition audit", [&] {
    CriterionResult r;
    bool ok = true;
    int audited = 0;
    double min_rel_slack = std::numeric_limits<double>::infinity();
    Json constants = Json::object();
    Json audits = Json::array();
    for (const auto& [name, mdp] : detail::benchmark_mdps(level == VerifyLevel::fast)) {
      const SoftmaxTabular fam(mdp.n_states, mdp.n_actions);
      ConstantsSpec cs;
      cs.theta0 = Vector::Zero(fam.dim());
      cs.score.n_theta = 10;
      const ConstantsReport c = compute_constants(mdp, fam, cs);
      constants[name] = constants_to_json(c);
      for (const RunConfig& cfg : audit_configs(c)) {
        const RunResult res = run(mdp, fam, cs.theta0, cfg);
        if (res.truncated) continue;
        const GapDecomposition gap = decompose_global_bound(res, c, wstar_sequence(mdp, fam, res, cfg.lambda));
        ++audited;
        ok = ok && gap.holds;
        min_rel_slack = std::min(min_rel_slack, gap.slack / std::max(std::abs(gap.lhs), 1e-12));
        Json a = decomposition_to_json(gap);
        a["mdp"] = name;
        a["algorithm"] = to_string(cfg.algorithm);
        a["eta"] = cfg.eta;
        a["trajectories"] = res.records.back().trajectories;
        audits.push_back(a);
        if (runs_out) runs_out->push_back({name, to_string(cfg.algorithm), gap});
      }
    }
    r.passed = ok && audited > 0;
    r.detail = std::to_string(audited) + " runs audited, min slack / |LHS| = " + detail::fmt(min_rel_slack);
    r.data = {{"audits", audits}};
    if (constants_out) *constants_out = constants;
    return r;
  });
}

/// Equal-budget comparison settings.
struct OrderingSettings {
  double eta = 0.05;
  int horizon = 40;
  std::int64_t budget = 10000;
  std::int64_t batch = 100;
  std::int64_t epoch_length = 10;
  std::int64_t minibatch = 20;
  int sgd_iterations = 100;
};

inline CriterionResult criterion_ordering(VerifyLevel level, const OrderingSettings& st = {}) {
  return detail::timed(7, "variance-reduction ordering", [&] {
    CriterionResult r;
    const int seeds = level == VerifyLevel::full ? 20 : 5;
    bool ok = true;
    Json per_mdp = Json::array();
    std::string detail;
    for (const auto& [name, mdp] : detail::benchmark_mdps(level == VerifyLevel::fast)) {
      const SoftmaxTabular fam(mdp.n_states, mdp.n_actions);
      const Vector theta0 = Vector::Zero(fam.dim());
      const double j_star = value_iteration(mdp).j_star;
      const double j0 = policy_evaluate(mdp, policy_table(fam, theta0)).j;
      const double target = 0.1 * (j_star - j0);
      auto first_hit = [&](const RunResult& res) {
        for (const auto& rec : res.records)
          if (j_star - rec.j_exact <= target) return static_cast<double>(rec.iter);
        return std::numeric_limits<double>::infinity();
      };
      std::vector<double> g_pg, g_srvr, k_pg, k_npg;
      for (int s = 1; s <= seeds; ++s) {
        RunConfig cfg;
        cfg.eta = st.eta;
        cfg.horizon = st.horizon;
        cfg.seed = static_cast<std::uint64_t>(s);
        cfg.trajectory_budget = st.budget;
        cfg.batch = st.batch;

        RunConfig pg = cfg;
        pg.algorithm = Algorithm::pg;
        pg.iterations = st.budget / st.batch;
        const RunResult r_pg = run(mdp, fam, theta0, pg);

        RunConfig spg = cfg;
        spg.algorithm = Algorithm::srvr_pg;
        spg.epoch_length = st.epoch_length;
        spg.minibatch = st.minibatch;
        spg.epochs = st.budget;  // stopped by the budget
        const RunResult r_spg = run(mdp, fam, theta0, spg);

        RunConfig npg = cfg;
        npg.algorithm = Algorithm::npg;
        npg.trajectory_budget = 0;
        npg.iterations = pg.iterations;
        npg.sgd.iterations = st.sgd_iterations;
        const RunResult r_npg = run(mdp, fam, theta0, npg);

        g_pg.push_back(exact_policy_gradient(mdp, fam, r_pg.final_theta).squaredNorm());
        g_srvr.push_back(exact_policy_gradient(mdp, fam, r_spg.final_theta).squaredNorm());
        k_pg.push_back(first_hit(r_pg));
        k_npg.push_back(first_hit(r_npg));
      }
      const double mg_pg = detail::median(g_pg), mg_srvr = detail::median(g_srvr);
      const double mk_pg = detail::median(k_pg), mk_npg = detail::median(k_npg);
      const bool pass = mg_srvr <= mg_pg && mk_npg <= mk_pg && std::isfinite(mk_npg);
      ok = ok && pass;
      per_mdp.push_back({{"mdp", name},
                         {"median_grad_norm2_pg", mg_pg},
                         {"median_grad_norm2_srvr_pg", mg_srvr},
                         {"median_iters_to_gap_pg", std::isfinite(mk_pg) ? Json(mk_pg) : Json("never")},
                         {"median_iters_to_gap_npg", std::isfinite(mk_npg) ? Json(mk_npg) : Json("never")},
                         {"passed", pass}});
      detail += name + ": |grad|^2 srvr " + detail::fmt(mg_srvr) + " vs pg " + detail::fmt(mg_pg) + ", iters npg " +
                detail::fmt(mk_npg) + " vs pg " + detail::fmt(mk_pg) + "; ";
    }
    r.passed = ok;
    r.detail = detail + "medians over " + std::to_string(seeds) + " seeds";
    r.data = {{"per_mdp", per_mdp}};
    return r;
  });
}

/// Empirical Var(u_t) along a scripted parameter path against
/// (C_gamma / B) sum_s ||theta_s - theta_{s-1}||^2 + sigma^2 / N.
inline CriterionResult criterion_srvr_variance(VerifyLevel level) {
  return detail::timed(8, "recursive gradient variance bound", [&] {
    CriterionResult r;
    const int reps = level == VerifyLevel::full ? 1000 : 200;
    const int horizon = 10;
    const std::int64_t n_big = 50;
    const std::int64_t b_small = 10;
    const TabularMdp mdp = make_chain2(0.9);
    const SoftmaxTabular fam(2, 2);

    std::vector<Vector> path{Vector::Zero(4)};
    const double steps[5][4] = {{0.05, -0.05, 0.02, 0.0},
                                {0.04, 0.0, -0.06, 0.05},
                                {-0.03, 0.05, 0.04, -0.02},
                                {0.06, -0.02, 0.0, 0.05},
                                {0.0, 0.04, -0.05, 0.03}};
    for (const auto& s : steps) path.push_back(path.back() + Eigen::Map<const Vector>(s, 4));

    ConstantsSpec cs;
    cs.theta0 = path.front();
    cs.score.n_theta = 10;
    cs.moments.horizon = horizon;
    cs.moments.replications = level == VerifyLevel::full ? 20000 : 5000;
    cs.moments.seed = 8;
    cs.moments.thetas = path;
    for (std::size_t t = 1; t < path.size(); ++t) cs.moments.theta_pairs.emplace_back(path[t - 1], path[t]);
    const ConstantsReport c = compute_constants(mdp, fam, cs);

    Sampler<TabularMdp, SoftmaxTabular> sampler(mdp, fam);
    RngStream rng(8, 0xC8);
    std::vector<std::vector<Vector>> us(path.size());
    for (int rep = 0; rep < reps; ++rep) {
      auto big = sampler.sample_batch(path[0], horizon, static_cast<int>(n_big), rng);
      GradEstimate u = batch_gpomdp<SoftmaxTabular>(big, fam, path[0], mdp.gamma);
      us[0].push_back(u.g);
      for (std::size_t t = 1; t < path.size(); ++t) {
        auto mini = sampler.sample_batch(path[t], horizon, static_cast<int>(b_small), rng);
        u = srvr_update<SoftmaxTabular>(u, mini, fam, path[t - 1], path[t], mdp.gamma);
        us[t].push_back(u.g);
      }
    }
    // A variance estimate from n replications has relative standard error about sqrt(2 / (n - 1)).
    const double inflation = 1.0 + 5.0 * std::sqrt(2.0 / (reps - 1.0));
    bool ok = true;
    double path_len2 = 0.0;
    double worst = 0.0;
    Json rows = Json::array();
    for (std::size_t t = 0; t < path.size(); ++t) {
      if (t > 0) path_len2 += (path[t] - path[t - 1]).squaredNorm();
      Vector mean = Vector::Zero(4);
      for (const auto& u : us[t]) mean += u;
      mean /= reps;
      double var = 0.0;
      for (const auto& u : us[t]) var += (u - mean).squaredNorm();
      var /= reps - 1.0;
      const double bound = c.C_gamma / b_small * path_len2 + *c.sigma2_hat / n_big;
      ok = ok && var <= inflation * bound;
      worst = std::max(worst, var / bound);
      rows.push_back({{"t", t}, {"variance", var}, {"bound", bound}});
    }
    r.passed = ok;
    r.detail = "max Var(u_t) / bound = " + detail::fmt(worst) + " (<= " + detail::fmt(inflation) + "), " +
               std::to_string(reps) + " replications, C_gamma = " + detail::fmt(c.C_gamma) +
               ", sigma^2 = " + detail::fmt(*c.sigma2_hat);
    r.data = {{"rows", rows}, {"C_gamma", c.C_gamma}, {"sigma2_hat", *c.sigma2_hat}, {"W_hat", *c.W_hat}};
    return r;
  });
}

/// Four-driver Chain2 experiment used by the determinism check.
inline Json determinism_spec_json() {
  return Json::parse(R"({
    "env": {"builtin": "chain2", "gamma": 0.9},
    "policy": {"family": "softmax_tabular"},
    "seeds": [7],
    "runs": [
      {"algorithm": "pg", "eta": 0.05, "iterations": 20, "batch": 20, "horizon": 20},
      {"algorithm": "npg", "eta": 0.05, "iterations": 10, "sgd": {"iterations": 50}, "horizon": 20},
      {"algorithm": "srvr_pg", "eta": 0.05, "epochs": 4, "epoch_length": 5, "batch": 20, "minibatch": 5, "horizon": 20},
      {"algorithm": "srvr_npg", "eta": 0.05, "epochs": 2, "epoch_length": 5, "batch": 20, "minibatch": 5,
       "sgd": {"iterations": 50}, "horizon": 20}
    ]
  })");
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline CriterionResult criterion_determinism(VerifyLevel /*level*/, const std::filesystem::path& scratch) {
  return detail::timed(9, "determinism", [&] {
    CriterionResult r;
    const ExperimentSpec spec = parse_experiment(determinism_spec_json());
    const std::vector<std::pair<std::string, int>> variants{{"a", 1}, {"b", 1}, {"c", 4}};
    for (const auto& [dir, threads] : variants) {
      std::filesystem::remove_all(scratch / dir);
      ExperimentOptions opt;
      opt.output_dir = scratch / dir;
      opt.threads = threads;
      run_experiment(spec, opt);
    }
    int compared = 0;
    int mismatches = 0;
    for (const auto& entry : spec.runs) {
      const std::string file = artifact_stem(entry, 7) + ".csv";
      const std::string a = read_file_bytes(scratch / "a" / file);
      if (a.empty()) ++mismatches;
      for (const char* other : {"b", "c"}) {
        ++compared;
        if (read_file_bytes(scratch / other / file) != a) ++mismatches;
      }
    }
    r.passed = mismatches == 0 && compared == 8;
    r.detail = std::to_string(compared) + " CSV comparisons (serial rerun and 4 sampler threads), " +
               std::to_string(mismatches) + " mismatches";
    return r;
  });
}

struct SuiteReport {
  std::vector<CriterionResult> results;
  Json constants = Json::object();
  bool all_passed() const {
    return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.passed; });
  }
};

inline Json suite_to_json(const SuiteReport& s, VerifyLevel level) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["level"] = level == VerifyLevel::full ? "full" : "fast";
  out["passed"] = s.all_passed();
  out["constants"] = s.constants;
  Json crit = Json::array();
  for (const auto& r : s.results)
    crit.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail},
                    {"seconds", r.seconds}, {"data", r.data}});
  out["criteria"] = std::move(crit);
  return out;
}

inline std::string result_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " (" << detail::fmt(r.seconds)
     << " s): " << r.detail;
  return os.str();
}

/// Runs every criterion, printing one line each as it completes.
inline SuiteReport run_suite(VerifyLevel level, const std::filesystem::path& scratch, std::ostream* log = nullptr) {
  SuiteReport s;
  auto add = [&](CriterionResult r) {
    if (log) *log << result_line(r) << std::endl;
    s.results.push_back(std::move(r));
  };
  add(criterion_oracle(level));
  add(criterion_unbiasedness(level));
  add(criterion_truncation(level));
  add(criterion_smoothness(level));
  add(criterion_subproblem(level));
  add(criterion_gap_audit(level, nullptr, &s.constants));
  add(criterion_ordering(level));
  add(criterion_srvr_variance(level));
  add(criterion_determinism(level, scratch / "determinism"));
  return s;
}

}  // namespace vrpg
