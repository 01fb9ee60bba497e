#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "romdp/env.hpp"

using namespace romdp;

namespace {

// Backward induction over a finite horizon, written directly against the
// core tables so it shares no code with value_iteration.
std::array<std::array<double, kActions>, kCores> finite_horizon_q(const CoreMdp& m, double gamma, int horizon) {
  std::array<double, kCores> v{};
  std::array<std::array<double, kActions>, kCores> q{};
  for (int h = 0; h < horizon; ++h) {
    for (std::size_t c = 0; c < kCores; ++c) {
      for (std::size_t a = 0; a < kActions; ++a) {
        double acc = 0.0;
        for (std::size_t n = 0; n < kCores; ++n) acc += m.p(n, c, a) * (m.reward_prob[n] + gamma * v[n]);
        q[c][a] = acc;
      }
    }
    for (std::size_t c = 0; c < kCores; ++c) v[c] = std::max(q[c][0], q[c][1]);
  }
  return q;
}

std::array<std::uint8_t, kCores> mask(std::array<int, kCores> actions) {
  std::array<std::uint8_t, kCores> out{};
  for (std::size_t c = 0; c < kCores; ++c) out[c] = static_cast<std::uint8_t>(1U << actions[c]);
  return out;
}

}  // namespace

TEST(CoreMdp, DefaultIsStochasticAndMatchesLayout) {
  const auto m = default_core_mdp();
  EXPECT_TRUE(m.valid());
  EXPECT_EQ(m.reward_prob, (std::array<double, kCores>{0.1, 0.9, 0.1, 0.9}));
  EXPECT_EQ(m.p(3, 3, 0), 0.9);
  EXPECT_EQ(m.p(2, 3, 0), 0.1);
  EXPECT_EQ(m.p(3, 0, 0), 1.0);
  EXPECT_EQ(m.p(1, 0, 1), 1.0);
  EXPECT_EQ(m.p(0, 1, 1), 1.0);
}

TEST(CoreMdp, SwapsAreInvolutions) {
  const auto m = default_core_mdp();
  EXPECT_EQ(swapped_transition_rule(swapped_transition_rule(m)), m);
  const auto swapped = swapped_reward_rule(m.reward_prob);
  for (std::size_t c = 0; c < kCores; ++c) EXPECT_NEAR(swapped[c], c % 2 == 0 ? 0.9 : 0.1, 1e-15);
  const auto m2 = swapped_transition_rule(m);
  EXPECT_TRUE(m2.valid());
  EXPECT_EQ(m2.p(3, 0, 1), 1.0);
  EXPECT_EQ(m2.p(1, 0, 0), 1.0);
}

TEST(Oracle, PreSwitchPattern) {
  const auto p = oracle_policy(default_core_mdp(), 0.95);
  EXPECT_EQ(p.optimal, mask({0, 1, 1, 0}));
}

TEST(Oracle, TransitionSwitchPattern) {
  const auto p = oracle_policy(rules_mdp(default_core_mdp(), {true, false}), 0.95);
  EXPECT_EQ(p.optimal, mask({1, 0, 0, 1}));
  EXPECT_TRUE(p.is_optimal(1, 0));  // a0 at c1
}

TEST(Oracle, RewardSwitchPatternHasTieAtC0) {
  const auto p = oracle_policy(rules_mdp(default_core_mdp(), {false, true}), 0.95);
  EXPECT_TRUE(p.tied(0));
  EXPECT_TRUE(p.is_optimal(2, 0));  // a0 at c2
  EXPECT_FALSE(p.is_optimal(2, 1));
  EXPECT_TRUE(p.is_optimal(1, 0));
  EXPECT_TRUE(p.is_optimal(3, 1));
  // The common post-switch pattern is optimal at every core.
  const std::array<int, kCores> common{1, 0, 0, 1};
  for (std::size_t c = 0; c < kCores; ++c) EXPECT_TRUE(p.is_optimal(c, static_cast<std::size_t>(common[c])));
}

TEST(Oracle, QValuesAgreeWithFiniteHorizonBruteForce) {
  for (RulePair rp : {RulePair{false, false}, RulePair{true, false}, RulePair{false, true}, RulePair{true, true}}) {
    const auto m = rules_mdp(default_core_mdp(), rp);
    const auto p = oracle_policy(m, 0.95);
    const auto q = finite_horizon_q(m, 0.95, 500);
    for (std::size_t c = 0; c < kCores; ++c) {
      for (std::size_t a = 0; a < kActions; ++a) EXPECT_NEAR(p.q[c][a], q[c][a], 1e-6);
    }
  }
}

TEST(Oracle, FrozenQValues) {
  const auto p = oracle_policy(default_core_mdp(), 0.95);
  EXPECT_NEAR(p.q[0][0], 15.724761, 1e-6);
  EXPECT_NEAR(p.q[0][1], 15.186597, 1e-6);
  EXPECT_NEAR(p.q[3][0], 15.605012, 1e-6);
  EXPECT_NEAR(p.q[3][1], 14.527267, 1e-6);
}

TEST(Observation, EncodeDecodeIsABijection) {
  for (std::size_t m : {0u, 1u, 4u, 6u}) {
    std::vector<bool> seen(observation_count(m), false);
    for (std::size_t idx = 0; idx < observation_count(m); ++idx) {
      const auto d = decode_obs(idx, m);
      const auto back = encode_obs(d.core, d.bits);
      ASSERT_EQ(back, idx);
      ASSERT_FALSE(seen[back]);
      seen[back] = true;
      EXPECT_EQ(core_of(idx, m), d.core);
    }
  }
}

TEST(Observation, ExtremeIndices) {
  EXPECT_EQ(encode_obs(0, {false, false, false, false}), 0u);
  EXPECT_EQ(encode_obs(3, {true, true, true, true}), 63u);
  EXPECT_EQ(observation_count(4), 64u);
  EXPECT_THROW(encode_obs(4, {}), std::domain_error);
  EXPECT_THROW(decode_obs(64, 4), std::domain_error);
}

TEST(Noise, FlipProbabilityWiring) {
  const auto self = NoiseModel::defaults(NoiseKind::self_transition);
  EXPECT_EQ(self.flip_prob(false, 1, 1), 0.1);
  EXPECT_EQ(self.flip_prob(true, 0, 0), 0.1);
  const auto act = NoiseModel::defaults(NoiseKind::action_dependent);
  EXPECT_EQ(act.flip_prob(false, 0, 1), 0.1);
  EXPECT_EQ(act.flip_prob(true, 1, 0), 0.9);
  const auto rew = NoiseModel::defaults(NoiseKind::reward_dependent);
  EXPECT_EQ(rew.flip_prob(true, 1, 0), 0.1);
  EXPECT_EQ(rew.flip_prob(false, 0, 1), 0.9);
  EXPECT_EQ(parse_noise_kind(to_string(NoiseKind::reward_dependent)), NoiseKind::reward_dependent);
  EXPECT_THROW(parse_noise_kind("pink"), std::invalid_argument);
}

TEST(Env, InitialStateIsC0WithZeroBits) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition), {}, 1, 2);
  EXPECT_EQ(env.core(), 0u);
  EXPECT_EQ(env.observation(), 0u);
  EXPECT_EQ(env.trial(), 0u);
}

TEST(Env, TransitionFrequenciesMatchTable) {
  const auto m = default_core_mdp();
  NoiseModel quiet = NoiseModel::defaults(NoiseKind::self_transition, 0);
  RomdpEnv env(m, quiet, {}, 17, 18);
  const int draws = 100000;
  for (std::size_t c = 0; c < kCores; ++c) {
    for (std::size_t a = 0; a < kActions; ++a) {
      std::array<int, kCores> hits{};
      for (int d = 0; d < draws; ++d) {
        env.set_core(c);
        env.step(a);
        ++hits[env.core()];
      }
      double tv = 0.0;
      for (std::size_t n = 0; n < kCores; ++n) tv += std::abs(hits[n] / double(draws) - m.p(n, c, a));
      EXPECT_LE(0.5 * tv, 0.01) << "c" << c << " a" << a;
    }
  }
}

TEST(Env, C3UnderA0Splits90To10WithoutNoise) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition, 0), {}, 5, 6);
  int stay = 0;
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    env.set_core(3);
    const auto obs = env.step(0).observation;
    ASSERT_TRUE(obs == 3 || obs == 2);
    stay += obs == 3;
  }
  EXPECT_NEAR(stay / double(draws), 0.9, 0.01);
}

TEST(Env, RewardFrequenciesMatchRule) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition, 0), {}, 3, 4);
  const int draws = 100000;
  for (std::size_t c = 0; c < kCores; ++c) {
    int hits = 0;
    for (int d = 0; d < draws; ++d) {
      env.set_core(c);
      hits += static_cast<int>(env.step(0).reward);
    }
    EXPECT_NEAR(hits / double(draws), default_core_mdp().reward_prob[c], 0.01) << c;
  }
}

TEST(Env, NoiseNeverTouchesCoreOrRewardStream) {
  for (NoiseKind kind : {NoiseKind::self_transition, NoiseKind::action_dependent, NoiseKind::reward_dependent}) {
    RomdpEnv a(default_core_mdp(), NoiseModel::defaults(kind), {}, 42, 1);
    RomdpEnv b(default_core_mdp(), NoiseModel::defaults(kind), {}, 42, 999);
    bool bits_differ = false;
    for (int t = 0; t < 20000; ++t) {
      const std::size_t act = static_cast<std::size_t>((t * 7) % 3 == 0);
      const auto ra = a.step(act), rb = b.step(act);
      ASSERT_EQ(a.core(), b.core());
      ASSERT_EQ(ra.reward, rb.reward);
      bits_differ |= a.bits() != b.bits();
    }
    EXPECT_TRUE(bits_differ);
  }
}

TEST(Env, SelfTransitionBitFlipRate) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition, 4), {}, 1, 2);
  auto prev = env.bits();
  int flips = 0;
  const int steps = 50000;
  for (int t = 0; t < steps; ++t) {
    env.step(static_cast<std::size_t>(t % 2));
    for (std::size_t i = 0; i < 4; ++i) flips += env.bits()[i] != prev[i];
    prev = env.bits();
  }
  EXPECT_NEAR(flips / (4.0 * steps), 0.1, 0.005);
}

TEST(Env, ActionDependentFlipRates) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::action_dependent, 4), {}, 1, 2);
  std::array<int, 2> flips{}, steps{};
  auto prev = env.bits();
  for (int t = 0; t < 40000; ++t) {
    const std::size_t a = static_cast<std::size_t>((t / 3) % 2);
    env.step(a);
    for (std::size_t i = 0; i < 4; ++i) flips[a] += env.bits()[i] != prev[i];
    steps[a] += 4;
    prev = env.bits();
  }
  EXPECT_NEAR(flips[0] / double(steps[0]), 0.1, 0.01);
  EXPECT_NEAR(flips[1] / double(steps[1]), 0.9, 0.01);
}

TEST(Schedule, DefaultSwitchesAtMultiplesOfPeriod) {
  const auto s = make_schedule(ScheduleKind::reward_switch, 5000, 20000);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (ScheduleEvent{5000, RuleChange::swap_reward_rule}));
  EXPECT_EQ(s[2].at_trial, 15000u);
  EXPECT_TRUE(make_schedule(ScheduleKind::none, 5000, 20000).empty());
  EXPECT_THROW(make_schedule(ScheduleKind::transition_switch, 0, 10), std::invalid_argument);
  EXPECT_EQ(parse_schedule_kind("transition_switch"), ScheduleKind::transition_switch);
}

TEST(Schedule, RulesChangeExactlyAtScheduledTrials) {
  for (ScheduleKind kind : {ScheduleKind::reward_switch, ScheduleKind::transition_switch}) {
    RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition), make_schedule(kind, 5000, 20000),
                 1, 2);
    std::vector<std::size_t> changes;
    RulePair last = env.rules();
    for (std::size_t t = 0; t < 20000; ++t) {
      env.step(t % 2);
      if (!(env.rules() == last)) {
        changes.push_back(env.trial());
        last = env.rules();
      }
    }
    EXPECT_EQ(changes, (std::vector<std::size_t>{5000, 10000, 15000}));
    EXPECT_EQ(env.rules(), (RulePair{kind == ScheduleKind::transition_switch, kind == ScheduleKind::reward_switch}));
  }
}

TEST(Schedule, ActiveMdpFollowsRules) {
  RomdpEnv env(default_core_mdp(), NoiseModel::defaults(NoiseKind::self_transition),
               make_schedule(ScheduleKind::transition_switch, 10, 30), 1, 2);
  for (int t = 0; t < 10; ++t) env.step(0);
  EXPECT_EQ(env.active_mdp(), swapped_transition_rule(default_core_mdp()));
}

TEST(Env, RejectsBadInputs) {
  EXPECT_THROW(RomdpEnv(CoreMdp{}, NoiseModel{}, {}, 1, 2), std::invalid_argument);
  NoiseModel bad = NoiseModel::defaults(NoiseKind::self_transition);
  bad.e1 = 1.5;
  EXPECT_THROW(RomdpEnv(default_core_mdp(), bad, {}, 1, 2), std::invalid_argument);
  EXPECT_THROW(RomdpEnv(default_core_mdp(), NoiseModel{}, {{10, RuleChange::swap_reward_rule}, {10, RuleChange::swap_reward_rule}}, 1, 2),
               std::invalid_argument);
  RomdpEnv env(default_core_mdp(), NoiseModel{}, {}, 1, 2);
  EXPECT_THROW(env.step(2), std::invalid_argument);
  EXPECT_THROW(env.set_core(4), std::domain_error);
}
