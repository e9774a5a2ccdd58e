#pragma once

// Small enumerable worlds shared by the unit and acceptance tests.

#include <vector>

#include "bandit_ope/datagen.hpp"
#include "bandit_ope/policies.hpp"

namespace testing_worlds {

using namespace bandit_ope;

// Two contexts, two actions, nonuniform logging. Same numbers as configs/w1.json.
inline TinyWorld w1() {
  TinyWorld w;
  w.context_probs = {0.6, 0.4};
  w.reward_probs = {{0.8, 0.3}, {0.2, 0.6}};
  w.logging = {ActionDistribution({0.5, 0.5}), ActionDistribution({0.3, 0.7})};
  w.validate();
  return w;
}

// History-dependent learner over a uniform base.
inline GreedyTablePolicy w1_learner(double eta = 0.5) {
  return GreedyTablePolicy({ActionDistribution::uniform(2), ActionDistribution::uniform(2)}, eta);
}

// sup over every history of pi(a|x, h) / mu(a|x) for a greedy table policy.
inline double greedy_sup_ratio(const TinyWorld& w, const GreedyTablePolicy& pi) {
  double m = 0.0;
  for (int x = 0; x < w.num_contexts(); ++x) {
    for (int a = 0; a < w.num_actions(); ++a) m = std::max(m, pi.max_probability(x, a) / w.logging[x][a]);
  }
  return m;
}

// Single context where pi = (0.9, 0.1) and mu = (0.5, 0.5): with cap 1 the bias
// mass is 0.9 - 0.5 = 0.4 in every state.
inline TinyWorld eps_world() {
  TinyWorld w;
  w.context_probs = {1.0};
  w.reward_probs = {{0.7, 0.2}};
  w.logging = {ActionDistribution({0.5, 0.5})};
  w.validate();
  return w;
}

inline TablePolicy eps_policy() { return TablePolicy({ActionDistribution({0.9, 0.1})}); }

}  // namespace testing_worlds
