#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "romdp/metrics.hpp"

using namespace romdp;

TEST(JointCountsTest, DeltaAndUniformBeliefs) {
  JointCounts jc(kCores, 64, 4);
  jc.accumulate(2, 37, std::vector<double>{0.0, 1.0, 0.0, 0.0});
  jc.accumulate(1, 5, std::vector<double>{0.25, 0.25, 0.25, 0.25});
  EXPECT_EQ(jc.cs[2 * 4 + 1], 1.0);
  EXPECT_EQ(jc.os[37 * 4 + 1], 1.0);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(jc.cs[1 * 4 + s], 0.25);
  EXPECT_EQ(jc.steps, 2u);
  EXPECT_DOUBLE_EQ(std::accumulate(jc.cs.begin(), jc.cs.end(), 0.0), 2.0);
  EXPECT_DOUBLE_EQ(std::accumulate(jc.os.begin(), jc.os.end(), 0.0), 2.0);
  EXPECT_THROW(jc.accumulate(4, 0, std::vector<double>{1.0}), std::out_of_range);
  EXPECT_THROW(jc.accumulate(0, 64, std::vector<double>{1.0}), std::out_of_range);
  EXPECT_THROW(jc.accumulate(0, 0, std::vector<double>(5, 0.2)), std::invalid_argument);
}

TEST(ConditionalEntropy, IdentityJointIsZero) {
  std::vector<double> t(16, 0.0);
  for (std::size_t c = 0; c < 4; ++c) t[c * 4 + c] = 3.0 + static_cast<double>(c);
  EXPECT_EQ(conditional_entropy(t, 4), 0.0);
}

TEST(ConditionalEntropy, SingleStateUniformOverObservations) {
  const std::vector<double> t(64, 2.0);
  EXPECT_NEAR(conditional_entropy(t, 1), std::log(64.0), 1e-12);
  EXPECT_NEAR(conditional_entropy(t, 1), 4.15888, 1e-5);
}

TEST(ConditionalEntropy, CoreStatesWithUniformNoise) {
  // State = core; 16 noise patterns equally likely within each core.
  std::vector<double> t(64 * 4, 0.0);
  for (std::size_t o = 0; o < 64; ++o) t[o * 4 + core_of(o, 4)] = 1.0;
  EXPECT_NEAR(conditional_entropy(t, 4), 4.0 * std::log(2.0), 1e-12);
}

TEST(ConditionalEntropy, HandComputedMixture) {
  // Column 0: (3, 1) -> H = ln 4 - 0.75 ln 3 per unit; column 1: (2, 2) -> ln 2.
  const std::vector<double> t{3.0, 2.0, 1.0, 2.0};
  const double h0 = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  EXPECT_NEAR(conditional_entropy(t, 2), 0.5 * h0 + 0.5 * std::log(2.0), 1e-14);
}

TEST(ConditionalEntropy, InvariantToStateRelabeling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> t(8 * 5);
  for (double& v : t) v = u(rng);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> p(t.size());
  for (std::size_t x = 0; x < 8; ++x) {
    for (std::size_t s = 0; s < 5; ++s) p[x * 5 + perm[s]] = t[x * 5 + s];
  }
  EXPECT_NEAR(conditional_entropy(t, 5), conditional_entropy(p, 5), 1e-13);
}

TEST(ConditionalEntropy, BoundsAndDataProcessing) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    JointCounts jc(kCores, 64, 6);
    for (int t = 0; t < 200; ++t) {
      const std::size_t o = rng() % 64;
      std::vector<double> b(6);
      for (double& v : b) v = u(rng);
      const double z = std::accumulate(b.begin(), b.end(), 0.0);
      for (double& v : b) v /= z;
      jc.accumulate(core_of(o, 4), o, b);
    }
    const double hc = conditional_entropy(jc.cs, 6), ho = conditional_entropy(jc.os, 6);
    EXPECT_GE(hc, 0.0);
    EXPECT_LE(hc, std::log(4.0) + 1e-12);
    EXPECT_LE(ho, std::log(64.0) + 1e-12);
    EXPECT_GE(ho, hc - 1e-12);
  }
}

TEST(ConditionalEntropy, RejectsEmptyOrNegativeTables) {
  EXPECT_THROW(conditional_entropy(std::vector<double>(8, 0.0), 4), std::domain_error);
  EXPECT_THROW(conditional_entropy(std::vector<double>{1.0, -1.0}, 2), std::domain_error);
  EXPECT_THROW(conditional_entropy(std::vector<double>(7, 1.0), 2), std::invalid_argument);
}

TEST(OptimalRate, OracleAntiOracleAndRandom) {
  const auto oracle = oracle_policy(default_core_mdp(), 0.95);
  std::mt19937_64 rng(5);
  std::vector<std::size_t> cores(4000), best(4000), worst(4000), random(4000);
  for (std::size_t t = 0; t < cores.size(); ++t) {
    cores[t] = rng() % 4;
    best[t] = oracle.action(cores[t]);
    worst[t] = 1 - best[t];
    random[t] = rng() % 2;
  }
  EXPECT_EQ(optimal_rate(cores, best, oracle), 1.0);
  EXPECT_EQ(optimal_rate(cores, worst, oracle), 0.0);
  EXPECT_NEAR(optimal_rate(cores, random, oracle), 0.5, 0.05);
}

TEST(OptimalRate, TiedCoreAcceptsEitherAction) {
  const auto oracle = oracle_policy(rules_mdp(default_core_mdp(), {false, true}), 0.95);
  ASSERT_TRUE(oracle.tied(0));
  const std::vector<std::size_t> cores{0, 0};
  const std::vector<std::size_t> actions{0, 1};
  EXPECT_EQ(optimal_rate(cores, actions, oracle), 1.0);
}

TEST(OptimalRate, SwitchesOracleMidWindow) {
  const auto before = oracle_policy(default_core_mdp(), 0.95);
  const auto after = oracle_policy(rules_mdp(default_core_mdp(), {true, false}), 0.95);
  // c0 flips from a0 to a1 under the swapped transition rule.
  ASSERT_TRUE(before.is_optimal(0, 0) && !before.is_optimal(0, 1));
  ASSERT_TRUE(after.is_optimal(0, 1) && !after.is_optimal(0, 0));
  const std::vector<std::size_t> cores{0, 0, 0, 0};
  const std::vector<std::size_t> actions{0, 0, 1, 1};
  const std::vector<const OraclePolicy*> per_step{&before, &before, &after, &after};
  EXPECT_EQ(optimal_rate(cores, actions, per_step), 1.0);
  EXPECT_EQ(optimal_rate(cores, actions, before), 0.5);
  EXPECT_THROW(optimal_rate(std::vector<std::size_t>{}, std::vector<std::size_t>{}, before), std::invalid_argument);
  EXPECT_THROW(optimal_rate(cores, std::vector<std::size_t>{0}, before), std::invalid_argument);
}
