#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vrpg/sampler.hpp"

using namespace vrpg;

namespace {

Vector chain2_theta() {
  Vector th(4);
  th << 0.3, -0.2, 0.1, 0.4;
  return th;
}

template <class T>
bool same_trajectories(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].steps.size() != b[i].steps.size()) return false;
    for (std::size_t h = 0; h < a[i].steps.size(); ++h) {
      const auto& x = a[i].steps[h];
      const auto& y = b[i].steps[h];
      if (x.state != y.state || x.action != y.action || x.reward != y.reward) return false;
    }
  }
  return true;
}

}  // namespace

TEST(Sampler, DeterministicCyclePath) {
  const TabularMdp mdp = fixtures::deterministic_cycle();
  const SoftmaxTabular fam(3, 1);
  Sampler sampler(mdp, fam);
  RngStream rng(1);
  const auto traj = sampler.sample_trajectory(Vector::Zero(3), 5, rng);
  const int states[] = {0, 1, 2, 0, 1};
  const double rewards[] = {0.5, -1.0, 1.0, 0.5, -1.0};
  ASSERT_EQ(traj.horizon(), 5);
  for (int h = 0; h < 5; ++h) {
    EXPECT_EQ(traj.steps[h].state, states[h]);
    EXPECT_EQ(traj.steps[h].action, 0);
    EXPECT_EQ(traj.steps[h].reward, rewards[h]);
  }
}

TEST(Sampler, StateMarginalsMatchDynamics) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  const Vector th = chain2_theta();
  const Matrix p = detail::state_transition(mdp, policy_table(fam, th));
  Sampler sampler(mdp, fam);
  RngStream rng(2);
  const int n = 100000;
  const auto batch = sampler.sample_batch(th, 3, n, rng);
  Vector marginal = mdp.rho;
  for (int h = 0; h < 3; ++h) {
    double visits_s1 = 0;
    for (const auto& t : batch) visits_s1 += t.steps[h].state == 1;
    const double q = marginal(1);
    EXPECT_NEAR(visits_s1 / n, q, 4 * std::sqrt(q * (1 - q) / n) + 1e-12);
    marginal = p.transpose() * marginal;
  }
}

TEST(Sampler, SeedDeterminismAndThreadInvariance) {
  const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 3, 4, 3);
  const SoftmaxTabular fam(4, 3);
  const Vector th = Vector::LinSpaced(12, -1.0, 1.0);
  Sampler one(mdp, fam, 1);
  Sampler four(mdp, fam, 4);
  RngStream r1(9), r2(9), r3(9), r4(10);
  const auto a = one.sample_batch(th, 7, 64, r1);
  const auto b = one.sample_batch(th, 7, 64, r2);
  const auto c = four.sample_batch(th, 7, 64, r3);
  const auto d = one.sample_batch(th, 7, 64, r4);
  EXPECT_TRUE(same_trajectories(a, b));
  EXPECT_TRUE(same_trajectories(a, c));
  EXPECT_FALSE(same_trajectories(a, d));
  // Parent streams advanced identically.
  EXPECT_EQ(r1.next_u64(), r3.next_u64());
}

TEST(Sampler, VisitationSmallDiscountStartsAtRho) {
  const TabularMdp mdp = make_chain2(0.01);
  const SoftmaxTabular fam(2, 2);
  Sampler sampler(mdp, fam);
  RngStream rng(4);
  int at_start = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) at_start += sampler.sample_nu(chain2_theta(), rng).rollout_length == 0;
  EXPECT_GE(at_start, 0.95 * n);
}

TEST(Sampler, VisitationMatchesExactOccupancy) {
  const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 5, 3, 2);
  const SoftmaxTabular fam(3, 2);
  const Vector th = Vector::LinSpaced(6, -1.0, 1.0);
  const Matrix nu = policy_evaluate(mdp, policy_table(fam, th)).nu_rho;
  Sampler sampler(mdp, fam);
  RngStream rng(5);
  const int n = 1000000;
  Matrix counts = Matrix::Zero(3, 2);
  double length_sum = 0;
  for (int i = 0; i < n; ++i) {
    const auto sa = sampler.sample_nu(th, rng);
    counts(sa.state, sa.action) += 1;
    length_sum += sa.rollout_length;
  }
  EXPECT_LE(0.5 * (counts / n - nu).cwiseAbs().sum(), 0.01);
  // Geometric(1 - gamma) on {0, 1, ...}: mean gamma / (1 - gamma), sd sqrt(gamma) / (1 - gamma).
  const double g = mdp.gamma;
  EXPECT_NEAR(length_sum / n, g / (1 - g), 4 * std::sqrt(g) / (1 - g) / std::sqrt(n));
  EXPECT_EQ(sampler.trajectories(), n);
}

TEST(Sampler, AdvantageZeroReward) {
  const TabularMdp mdp = fixtures::zero_reward(make_chain2());
  const SoftmaxTabular fam(2, 2);
  Sampler sampler(mdp, fam);
  RngStream rng(6);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sampler.estimate_advantage(chain2_theta(), i % 2, (i / 2) % 2, rng, 20), 0.0);
}

TEST(Sampler, AdvantageDeterministicIsExact) {
  const TabularMdp mdp = fixtures::deterministic_cycle();
  const SoftmaxTabular fam(3, 1);
  Sampler sampler(mdp, fam);
  RngStream rng(7);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(sampler.estimate_advantage(Vector::Zero(3), s, 0, rng, 50), 0.0);
}

TEST(Sampler, AdvantageWithinTruncationBias) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  const Vector th = chain2_theta();
  const double exact = policy_evaluate(mdp, policy_table(fam, th)).adv(0, 1);
  Sampler sampler(mdp, fam);
  RngStream rng(8);
  const int n = 20000, h = 40;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = sampler.estimate_advantage(th, 0, 1, rng, h);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  const double bias = 2 * mdp.reward_bound * std::pow(mdp.gamma, h) / (1 - mdp.gamma);
  EXPECT_LE(std::abs(mean - exact), 3 * se + bias);
}

TEST(Sampler, CounterAccounting) {
  const TabularMdp mdp = make_chain2();
  const SoftmaxTabular fam(2, 2);
  Sampler sampler(mdp, fam);
  RngStream rng(9);
  const Vector th = chain2_theta();
  sampler.sample_trajectory(th, 4, rng);
  EXPECT_EQ(sampler.trajectories(), 1);
  sampler.sample_batch(th, 4, 17, rng);
  EXPECT_EQ(sampler.trajectories(), 18);
  sampler.sample_nu(th, rng);
  EXPECT_EQ(sampler.trajectories(), 19);
  sampler.estimate_advantage(th, 0, 0, rng, 5);
  EXPECT_EQ(sampler.trajectories(), 20);
  sampler.sample_batch(th, 4, 0, rng);
  EXPECT_EQ(sampler.trajectories(), 20);
  sampler.reset_counter();
  EXPECT_EQ(sampler.trajectories(), 0);
  EXPECT_THROW(sampler.sample_trajectory(th, 0, rng), std::invalid_argument);
  EXPECT_THROW(sampler.estimate_advantage(th, 0, 0, rng, 0), std::invalid_argument);
}

TEST(Sampler, AdvantageHorizonDefault) {
  const int h = default_advantage_horizon(0.9, 1.0, 1e-4);
  EXPECT_LE(std::pow(0.9, h) / 0.1, 1e-4);
  EXPECT_GT(std::pow(0.9, h - 1) / 0.1, 1e-4);
}

TEST(Sampler, ContinuousRingRollouts) {
  Vector targets(4);
  targets << 0.5, -0.5, 1.0, 0.0;
  const ContinuousRing env(4, targets, 0.9, 2.0);
  const GaussianLinear fam(std::vector<Matrix>(4, Matrix::Ones(1, 1)), Matrix::Identity(1, 1));
  Sampler sampler(env, fam);
  RngStream rng(10);
  const auto batch = sampler.sample_batch(Vector::Constant(1, 0.3), 12, 50, rng);
  for (const auto& t : batch) {
    EXPECT_EQ(t.steps.front().state, 0);
    for (std::size_t h = 0; h < t.steps.size(); ++h) {
      const auto& st = t.steps[h];
      EXPECT_GE(st.reward, 0.0);
      EXPECT_LE(st.reward, 2.0);
      if (h > 0) {
        const int prev = t.steps[h - 1].state;
        EXPECT_TRUE(st.state == (prev + 1) % 4 || st.state == (prev + 3) % 4);
      }
    }
  }
  EXPECT_THROW(ContinuousRing(3, targets, 0.9), std::invalid_argument);
}
