#pragma once

#include "vrpg/mdp.hpp"

namespace vrpg::fixtures {

inline TabularMdp zero_reward(TabularMdp mdp) {
  mdp.reward.setZero();
  return mdp;
}

/// One state, one action, r = 1: J = 1 / (1 - gamma).
inline TabularMdp single_state(double gamma = 0.9) {
  TabularMdp mdp;
  mdp.n_states = 1;
  mdp.n_actions = 1;
  mdp.gamma = gamma;
  mdp.transition = RowMatrix::Ones(1, 1);
  mdp.reward = Matrix::Ones(1, 1);
  mdp.rho = Vector::Ones(1);
  mdp.reward_bound = 1.0;
  return mdp;
}

/// Deterministic 3-cycle with one action per state.
inline TabularMdp deterministic_cycle(double gamma = 0.9) {
  TabularMdp mdp;
  mdp.n_states = 3;
  mdp.n_actions = 1;
  mdp.gamma = gamma;
  mdp.transition = RowMatrix::Zero(3, 3);
  mdp.transition(0, 1) = 1.0;
  mdp.transition(1, 2) = 1.0;
  mdp.transition(2, 0) = 1.0;
  mdp.reward = Matrix::Zero(3, 1);
  mdp.reward << 0.5, -1.0, 1.0;
  mdp.rho = Vector::Zero(3);
  mdp.rho(0) = 1.0;
  mdp.reward_bound = 1.0;
  return mdp;
}

}  // namespace vrpg::fixtures
