#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "romdp/cei.hpp"
#include "support.hpp"

using namespace romdp;
using namespace testing_support;

namespace {

void randomize(CeiModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (double& v : m.obs_rule.values()) v = u(rng);
  for (std::size_t x = 0; x < m.rules.modules(); ++x) {
    for (double& v : m.rules.transition[x].values()) v = u(rng);
    for (double& v : m.rules.reward[x].values()) v = u(rng);
  }
  for (double& c : m.rules.transition_sticks.counts) c = u(rng);
  for (double& c : m.rules.reward_sticks.counts) c = u(rng);
}

struct Enumerated {
  std::vector<double> marginals;
  double log_z = 0.0;
};

// Sum over all state paths of the product of exp(E ln ...) factors, with
// modules marginalized per step.
Enumerated enumerate(const CeiModel& m, const WindowData& w) {
  const std::size_t n = m.states(), T = w.size();
  const bool lead = w.prev_action >= 0 && m.belief_prior.size() == n;
  const auto tsbp = elog_sticks(m.rules.transition_sticks.counts, m.rules.transition_sticks.alpha);
  const auto rsbp = elog_sticks(m.rules.reward_sticks.counts, m.rules.reward_sticks.alpha);
  const std::size_t X = m.rules.modules();
  auto trans = [&](std::size_t p, std::size_t a, std::size_t s) {
    std::vector<double> v(X);
    for (std::size_t x = 0; x < X; ++x) v[x] = elog_dir(m.rules.transition[x].row(RuleModel::trans_row(p, a)), s) + tsbp[x];
    return lse(v);
  };
  auto reward = [&](std::size_t s, std::size_t r) {
    std::vector<double> v(X);
    for (std::size_t z = 0; z < X; ++z) v[z] = elog_dir(m.rules.reward[z].row(s), r) + rsbp[z];
    return lse(v);
  };
  const std::size_t len = T + (lead ? 1 : 0);
  std::size_t paths = 1;
  for (std::size_t i = 0; i < len; ++i) paths *= n;
  double prior_total = 0.0;
  for (double v : m.belief_prior) prior_total += v;

  std::vector<double> logw(paths);
  std::vector<std::vector<std::size_t>> seqs(paths, std::vector<std::size_t>(len));
  for (std::size_t id = 0; id < paths; ++id) {
    auto& seq = seqs[id];
    for (std::size_t i = 0, x = id; i < len; ++i, x /= n) seq[i] = x % n;
    const std::size_t off = lead ? 1 : 0;
    double lw = lead ? std::log(m.belief_prior[seq[0]] / prior_total) : 0.0;
    if (lead) lw += trans(seq[0], static_cast<std::size_t>(w.prev_action), seq[1]);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t s = seq[t + off];
      lw += elog_dir(m.obs_rule.row(s), w.observations[t]) + reward(s, w.rewards[t]);
      if (t > 0) lw += trans(seq[t + off - 1], w.actions[t - 1], s);
    }
    logw[id] = lw;
  }
  Enumerated out;
  out.log_z = lse(logw);
  out.marginals.assign(T * n, 0.0);
  for (std::size_t id = 0; id < paths; ++id) {
    const double p = std::exp(logw[id] - out.log_z);
    for (std::size_t t = 0; t < T; ++t) out.marginals[t * n + seqs[id][t + (lead ? 1 : 0)]] += p;
  }
  return out;
}

CeiPriors small_priors(std::size_t modules) {
  CeiPriors p;
  p.modules = modules;
  return p;
}

}  // namespace

TEST(CeiEStep, MatchesPathEnumeration) {
  for (std::size_t n_obs : {2u, 3u}) {
    for (std::size_t T = 1; T <= 3; ++T) {
      for (bool lead : {false, true}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
          auto m = CeiModel::fresh(n_obs, small_priors(2));
          randomize(m, seed * 97 + T * 5 + n_obs);
          auto w = noise_window(T, n_obs, seed + 11 * T);
          if (lead) {
            w.prev_action = static_cast<int>(seed % 2);
            m.belief_prior.assign(n_obs, 0.0);
            for (std::size_t s = 0; s < n_obs; ++s) m.belief_prior[s] = 0.2 + static_cast<double>(s);
          }
          const auto got = cei_e_step(m, w);
          const auto want = enumerate(m, w);
          EXPECT_NEAR(got.chain.log_normalizer, want.log_z, 1e-8);
          for (std::size_t i = 0; i < want.marginals.size(); ++i) EXPECT_NEAR(got.chain.marginals[i], want.marginals[i], 1e-8);
        }
      }
    }
  }
}

TEST(CeiEStep, SingleStepUnderSymmetricPriorIsUniform) {
  const auto m = CeiModel::fresh(8, CeiPriors{});
  WindowData w;
  w.push(5, 1, 1);
  const auto post = cei_e_step(m, w);
  for (double v : post.chain.marginal(0)) EXPECT_NEAR(v, 1.0 / 8.0, 1e-12);
}

TEST(CeiEStep, IdentityObservationRuleConcentrates) {
  auto m = CeiModel::fresh(4, small_priors(1));
  for (std::size_t s = 0; s < 4; ++s) m.obs_rule.at(s, s) = 1000.0;
  const auto w = noise_window(6, 4, 3);
  const auto post = cei_e_step(m, w);
  for (std::size_t t = 0; t < w.size(); ++t) EXPECT_GE(post.chain.marginal(t)[w.observations[t]], 0.99);
}

TEST(CeiMStep, ObservationMassEqualsWindowLength) {
  auto m = CeiModel::fresh(16, CeiPriors{});
  randomize(m, 5);
  const auto w = random_stream(120, NoiseModel::defaults(NoiseKind::self_transition, 2), 5);
  const auto next = cei_m_step(m, w, cei_e_step(m, w));
  double added = 0.0;
  const auto before = m.obs_rule.values();
  const auto after = next.obs_rule.values();
  for (std::size_t i = 0; i < before.size(); ++i) added += after[i] - before[i];
  EXPECT_NEAR(added, 120.0, 1e-9);
  double trans = 0.0, reward = 0.0;
  for (std::size_t x = 0; x < m.rules.modules(); ++x) {
    trans += next.rules.transition_sticks.counts[x] - m.rules.transition_sticks.counts[x];
    reward += next.rules.reward_sticks.counts[x] - m.rules.reward_sticks.counts[x];
  }
  EXPECT_NEAR(trans, 119.0, 1e-9);  // no pair before the first step
  EXPECT_NEAR(reward, 120.0, 1e-9);
}

TEST(CeiMStep, SingleModuleRewardCountsRewardedSteps) {
  auto m = CeiModel::fresh(2, small_priors(1));
  const auto w = noise_window(40, 2, 8);
  const auto post = cei_e_step(m, w);
  const auto next = cei_m_step(m, w, post);
  const double rewarded = std::accumulate(w.rewards.begin(), w.rewards.end(), 0.0);
  const double gained = next.rules.reward[0].at(1, 0) + next.rules.reward[0].at(1, 1) - 2 * m.priors.rules.reward;
  EXPECT_NEAR(gained, rewarded, 1e-9);
  for (std::size_t s = 0; s < 2; ++s) {
    double want = m.priors.rules.reward;
    for (std::size_t t = 0; t < w.size(); ++t) want += w.rewards[t] == 1 ? post.chain.marginal(t)[s] : 0.0;
    EXPECT_NEAR(next.rules.reward[0].at(1, s), want, 1e-12);
  }
}

TEST(CeiMStep, UnusedModulesKeepTheirPrior) {
  const auto m = CeiModel::fresh(8, small_priors(4));
  const auto w = noise_window(50, 8, 9);
  const auto next = cei_m_step(m, w, cei_e_step(m, w));
  for (std::size_t x = 1; x < 4; ++x) {
    EXPECT_EQ(next.rules.transition[x], m.rules.transition[x]);
    EXPECT_EQ(next.rules.reward[x], m.rules.reward[x]);
    EXPECT_EQ(next.rules.transition_sticks.counts[x], 0.0);
  }
}

TEST(CeiInference, FreeEnergyNeverRises) {
  const auto noise = NoiseModel::defaults(NoiseKind::self_transition, 2);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto w = random_stream(600, noise, seed);
    WindowData first, second;
    for (std::size_t t = 0; t < 600; ++t) (t < 300 ? first : second).push(w.observations[t], w.actions[t], w.rewards[t]);
    second.prev_action = static_cast<int>(first.actions.back());

    SweepOptions opt{40, 1e-9, true, 1e-6};
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    const auto fresh = CeiModel::fresh(16, CeiPriors{});
    CeiWindowResult r1, r2;
    ASSERT_NO_THROW(r1 = cei_infer_window(fresh, first, opt, &perm));
    auto chained = r1.model;
    cei_prepare_window(chained, 1.0);
    ASSERT_NO_THROW(r2 = cei_infer_window(chained, second, opt));
    EXPECT_GE(r1.free_energy.values.size(), 2u);
    for (const auto* tr : {&r1.free_energy, &r2.free_energy}) {
      for (std::size_t i = 1; i < tr->values.size(); ++i) EXPECT_LE(tr->values[i], tr->values[i - 1] + 1e-6 * std::abs(tr->values[i - 1]));
    }
  }
}

TEST(CeiInference, OneSweepRunsOneEAndMStep) {
  const auto m = CeiModel::fresh(4, CeiPriors{});
  const auto w = noise_window(30, 4, 2);
  const auto r = cei_infer_window(m, w, SweepOptions{1, 1e-4, false, 1e-6});
  EXPECT_EQ(r.sweeps, 1u);
  EXPECT_EQ(r.free_energy.values.size(), 1u);
  auto expect = cei_m_step(m, w, cei_e_step(m, w));
  expect.belief_prior = r.model.belief_prior;
  EXPECT_EQ(r.model, expect);
  EXPECT_THROW(cei_infer_window(m, w, SweepOptions{0, 1e-4, false, 1e-6}), std::invalid_argument);
}

TEST(CeiInference, RecoversTwoStateEmissionMap) {
  // Hidden state alternates under action 0 and holds under action 1; state k
  // emits observation k with probability 0.85 and pays 0.9 / 0.1.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WindowData w;
  std::vector<std::size_t> truth;
  std::size_t s = 0;
  for (int t = 0; t < 400; ++t) {
    truth.push_back(s);
    const std::size_t o = u(rng) < 0.85 ? s : 1 - s;
    const std::size_t a = rng() % 2;
    w.push(o, a, u(rng) < (s == 1 ? 0.9 : 0.1) ? 1 : 0);
    if (a == 0) s = 1 - s;
  }
  auto start = CeiModel::fresh(2, small_priors(1));
  const auto prior = start;
  for (double& v : start.obs_rule.values()) v += 0.05 * u(rng);
  auto model = start;
  CeiPosterior post;
  for (int sweep = 0; sweep < 200; ++sweep) {
    post = cei_e_step(model, w);
    model = cei_m_step(prior, w, post);
  }
  const std::size_t map0 = model.obs_rule.at(0, 0) > model.obs_rule.at(0, 1) ? 0 : 1;
  const std::size_t map1 = model.obs_rule.at(1, 0) > model.obs_rule.at(1, 1) ? 0 : 1;
  ASSERT_NE(map0, map1);
  std::size_t agree = 0;
  for (std::size_t t = 0; t < w.size(); ++t) {
    const auto q = post.chain.marginal(t);
    const std::size_t guess = q[map0] > 0.5 ? 0 : 1;
    agree += guess == truth[t];
  }
  EXPECT_GE(agree / double(w.size()), 0.9);
}

TEST(CeiWindow, PrepareRetainsAndSortsModules) {
  auto m = CeiModel::fresh(4, small_priors(3));
  m.rules.transition_sticks.counts = {1.0, 5.0, 0.0};
  m.rules.transition[1].at(2, 3) += 4.0;
  auto kept = m;
  cei_prepare_window(kept, 1.0);
  EXPECT_EQ(kept.rules.transition_sticks.counts, (std::vector<double>{5.0, 1.0, 0.0}));
  EXPECT_NEAR(kept.rules.transition[0].at(2, 3), 0.1 + 4.0, 1e-12);
  auto shrunk = m;
  cei_prepare_window(shrunk, 0.25);
  EXPECT_NEAR(shrunk.rules.transition[0].at(2, 3), 0.1 + 1.0, 1e-12);
  EXPECT_NEAR(shrunk.rules.transition_sticks.counts[0], 1.25, 1e-12);
  EXPECT_EQ(shrunk.obs_rule, m.obs_rule);
}

TEST(CeiWindow, RetainedMassAndBelief) {
  auto m = CeiModel::fresh(3, CeiPriors{});
  m.obs_rule.at(1, 2) += 5.0;
  m.obs_rule.at(0, 2) += 1.0;
  EXPECT_EQ(cei_retained_mass(m), (std::vector<double>{0.0, 0.0, 6.0}));
  const auto b = cei_observation_belief(m, 1);
  EXPECT_NEAR(std::accumulate(b.begin(), b.end(), 0.0), 1.0, 1e-12);
  EXPECT_GT(b[2], b[0]);
  EXPECT_NEAR(b[0], b[1], 1e-15);
}

TEST(CeiModelTest, RejectsBadInput) {
  EXPECT_THROW(CeiModel::fresh(1, CeiPriors{}), std::invalid_argument);
  const auto m = CeiModel::fresh(3, CeiPriors{});
  WindowData w;
  EXPECT_THROW(cei_e_step(m, w), std::invalid_argument);
  w.push(3, 0, 0);
  EXPECT_THROW(cei_e_step(m, w), std::invalid_argument);
  w = noise_window(5, 3, 1);
  EXPECT_THROW(cei_seed_posterior(m, w, {0, 1}), std::invalid_argument);
}
