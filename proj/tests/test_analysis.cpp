#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vrpg/analysis.hpp"

using namespace vrpg;

namespace {

Vector chain2_theta0() {
  Vector th(4);
  th << 0.3, -0.2, 0.1, 0.4;
  return th;
}

}  // namespace

TEST(Analysis, SmoothnessConstantForChain2) {
  ConstantsSpec spec;
  spec.theta0 = chain2_theta0();
  const ConstantsReport c = compute_constants(make_chain2(), SoftmaxTabular(2, 2), spec);
  EXPECT_EQ(c.G, std::sqrt(2.0));
  EXPECT_EQ(c.M, 1.0);
  EXPECT_NEAR(c.L_J, 4100.0, 1e-9);
  EXPECT_EQ(c.L_J, smoothness_constant(c.G, c.M, c.R, c.gamma));
  EXPECT_EQ(c.C_gamma, variance_propagation_constant(c.G, c.M, c.R, 0.0, c.gamma));
  EXPECT_GT(c.mu_F, 0.0);
  EXPECT_FALSE(c.sigma2_hat.has_value());
  EXPECT_NEAR(c.j_star, 9.0, 1e-8);  // flip then stay: sum_{t>=1} 0.9^t
  EXPECT_GT(c.kl_init, 0.0);
  EXPECT_GE(c.eps_bias, 0.0);
}

TEST(Analysis, RefreshDerivedUsesInputs) {
  ConstantsReport c;
  c.G = 2.0;
  c.M = 3.0;
  c.R = 0.5;
  c.gamma = 0.8;
  c.W_hat = 1.5;
  c.refresh_derived();
  EXPECT_EQ(c.L_J, smoothness_constant(2.0, 3.0, 0.5, 0.8));
  EXPECT_EQ(c.C_gamma, variance_propagation_constant(2.0, 3.0, 0.5, 1.5, 0.8));
  c.W_hat.reset();
  c.refresh_derived();
  EXPECT_NEAR(c.C_gamma, 1.32e6, 1e-12 * 1.32e6);
}

TEST(Analysis, ZeroRewardConstants) {
  ConstantsSpec spec;
  spec.theta0 = chain2_theta0();
  spec.moments.thetas = {chain2_theta0()};
  spec.moments.replications = 100;
  TabularMdp mdp = fixtures::zero_reward(make_chain2());
  mdp.reward_bound = 0.0;
  const ConstantsReport c = compute_constants(mdp, SoftmaxTabular(2, 2), spec);
  EXPECT_EQ(c.L_J, 0.0);
  EXPECT_EQ(*c.sigma2_hat, 0.0);
  EXPECT_EQ(c.eps_bias, 0.0);
  EXPECT_EQ(c.j_star, 0.0);
}

TEST(Analysis, IdenticalWeightProbesGiveZeroW) {
  ConstantsSpec spec;
  spec.theta0 = chain2_theta0();
  spec.moments.theta_pairs = {{chain2_theta0(), chain2_theta0()}, {Vector::Zero(4), Vector::Zero(4)}};
  spec.moments.replications = 200;
  const ConstantsReport c = compute_constants(make_chain2(), SoftmaxTabular(2, 2), spec);
  ASSERT_TRUE(c.W_hat.has_value());
  EXPECT_EQ(*c.W_hat, 0.0);
  const double g2 = c.G * c.G;
  EXPECT_NEAR(c.C_gamma, 24.0 * c.R * g2 * (2.0 * g2 + c.M) * c.gamma / std::pow(1.0 - c.gamma, 5), 1e-9 * c.C_gamma);
}

TEST(Analysis, PerformanceDifferenceOnChain2) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  EXPECT_LE(perf_diff_check(mdp, fam, Vector::Zero(4)), 1e-8);
  Vector near_opt(4);
  near_opt << 0.0, 30.0, 30.0, 0.0;
  EXPECT_LE(perf_diff_check(mdp, fam, near_opt), 1e-8);
  const auto pe = policy_evaluate(mdp, policy_table(fam, near_opt));
  EXPECT_LE(value_iteration(mdp).j_star - pe.j, 1e-8);
}

TEST(Analysis, PerformanceDifferenceIdentity) {
  RngStream rng(1);
  for (int i = 0; i < 20; ++i) {
    const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 200 + i, 4, 3);
    const SoftmaxTabular fam(4, 3);
    Vector th(12);
    for (int k = 0; k < 12; ++k) th(k) = 2 * rng.normal();
    EXPECT_LE(perf_diff_check(mdp, fam, th), 1e-10);
  }
}

TEST(Analysis, SingleExactNpgStepHasNoDirectionError) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  RunConfig cfg;
  cfg.algorithm = Algorithm::npg;
  cfg.iterations = 1;
  cfg.eta = 0.1;
  cfg.exact_subproblem = true;
  const RunResult r = run(mdp, fam, chain2_theta0(), cfg);
  EXPECT_LE(r.records[0].w_err, 1e-12);
  ConstantsSpec spec;
  spec.theta0 = chain2_theta0();
  const ConstantsReport c = compute_constants(mdp, fam, spec);
  const GapDecomposition d = decompose_global_bound(r, c, wstar_sequence(mdp, fam, r, cfg.lambda));
  EXPECT_FALSE(d.partial);
  EXPECT_LE(d.term_werr, 1e-10);
  EXPECT_EQ(d.iterations, 1);
  EXPECT_TRUE(d.holds);
}

TEST(Analysis, NearOptimalStartHasSmallGap) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  Vector th(4);
  th << 0.0, 12.0, 12.0, 0.0;
  RunConfig cfg;
  cfg.algorithm = Algorithm::npg;
  cfg.iterations = 5;
  cfg.eta = 0.1;
  cfg.exact_subproblem = true;
  const RunResult r = run(mdp, fam, th, cfg);
  ConstantsSpec spec;
  spec.theta0 = th;
  const ConstantsReport c = compute_constants(mdp, fam, spec);
  const GapDecomposition d = decompose_global_bound(r, c, wstar_sequence(mdp, fam, r, cfg.lambda));
  EXPECT_LE(std::abs(d.lhs), 1e-3);
  EXPECT_LE(c.kl_init, 1e-4);
  EXPECT_TRUE(d.holds);
}

TEST(Analysis, DecompositionHoldsForSampledNpg) {
  const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 17, 3, 2);
  const SoftmaxTabular fam(3, 2);
  RunConfig cfg;
  cfg.algorithm = Algorithm::npg;
  cfg.iterations = 20;
  cfg.eta = 0.05;
  cfg.sgd.iterations = 50;
  const Vector th0 = Vector::Zero(6);
  const RunResult r = run(mdp, fam, th0, cfg);
  ConstantsSpec spec;
  spec.theta0 = th0;
  const ConstantsReport c = compute_constants(mdp, fam, spec);
  const GapDecomposition full = decompose_global_bound(r, c, wstar_sequence(mdp, fam, r, cfg.lambda));
  EXPECT_TRUE(full.holds);
  EXPECT_GE(full.slack, -full.tolerance);
  EXPECT_NEAR(full.rhs(), full.term_bias + full.term_kl + full.term_w2 + full.term_werr, 0.0);
  EXPECT_FALSE(full.dominant.empty());

  const GapDecomposition partial = decompose_global_bound(r, c);
  EXPECT_TRUE(partial.partial);
  EXPECT_EQ(partial.lhs, full.lhs);
  EXPECT_EQ(partial.term_kl, full.term_kl);
  EXPECT_EQ(partial.term_w2, full.term_w2);
}

TEST(Analysis, DecompositionHoldsOnChain2ForEveryDriver) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  ConstantsSpec spec;
  spec.theta0 = chain2_theta0();
  const ConstantsReport c = compute_constants(mdp, fam, spec);
  for (Algorithm a : {Algorithm::pg, Algorithm::npg, Algorithm::srvr_pg, Algorithm::srvr_npg}) {
    RunConfig cfg;
    cfg.algorithm = a;
    cfg.eta = 0.05;
    cfg.iterations = 15;
    cfg.epochs = 3;
    cfg.epoch_length = 5;
    cfg.sgd.iterations = 50;
    cfg.seed = 3;
    const RunResult r = run(mdp, fam, chain2_theta0(), cfg);
    const GapDecomposition d = decompose_global_bound(r, c, wstar_sequence(mdp, fam, r, cfg.lambda));
    EXPECT_TRUE(d.holds) << to_string(a) << " slack " << d.slack;
  }
}

TEST(Analysis, DecompositionRejectsBadInput) {
  RunResult empty;
  ConstantsReport c;
  EXPECT_THROW(decompose_global_bound(empty, c), std::invalid_argument);
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  RunConfig cfg;
  cfg.algorithm = Algorithm::pg;
  cfg.iterations = 3;
  const RunResult r = run(mdp, fam, chain2_theta0(), cfg);
  WstarSequence short_seq;
  short_seq.w_star = {Vector::Zero(4)};
  short_seq.eps_bias = {0.0};
  EXPECT_THROW(decompose_global_bound(r, c, short_seq), std::invalid_argument);
}

TEST(Analysis, TruncationAuditEnumeratesSmallHorizons) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  const auto rows = audit_truncation(mdp, fam, chain2_theta0(), {1, 2, 5, 10, 40}, std::sqrt(2.0));
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& row : rows) {
    EXPECT_TRUE(row.ok) << "H = " << row.horizon;
    EXPECT_LE(row.gap, row.bound);
  }
  EXPECT_TRUE(rows[0].enumerated);
  EXPECT_TRUE(rows[3].enumerated);  // deterministic transitions: 2^10 paths
  EXPECT_FALSE(rows[4].enumerated);
  EXPECT_GT(rows[0].gap, rows[4].gap);
}

TEST(Analysis, TruncationAuditLimits) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  int h_small = 1;
  while (truncation_bias_bound(std::sqrt(2.0), 1.0, mdp.gamma, h_small) >= 1e-12) ++h_small;
  const auto far = audit_truncation(mdp, fam, chain2_theta0(), {h_small}, std::sqrt(2.0));
  EXPECT_LT(far[0].gap, 1e-10);
  const auto zero = audit_truncation(fixtures::zero_reward(mdp), fam, chain2_theta0(), {1, 3, 8}, std::sqrt(2.0));
  for (const auto& row : zero) EXPECT_EQ(row.gap, 0.0);
}

TEST(Analysis, OptimalPolicyTableAndKl) {
  const TabularMdp mdp = make_chain2();
  const Matrix pi = optimal_policy_table(mdp);
  EXPECT_EQ(pi(0, 1), 1.0);
  EXPECT_EQ(pi(1, 0), 1.0);
  const SoftmaxTabular fam(2, 2);
  // Uniform policy: KL = log 2 under any state weighting.
  EXPECT_NEAR(kl_from_optimal(mdp, fam, Vector::Zero(4)), std::log(2.0), 1e-12);
}
