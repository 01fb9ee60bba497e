#pragma once

// Dirichlet-process mixtures of transition rules p(s'|s,a) and reward rules
// p(r|s), with truncated stick-breaking weights over modules. CEI uses these
// as part of its generative model; GOEI estimates them alongside its own
// model so the planner has something to sample from.

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "romdp/prob.hpp"

namespace romdp {

inline constexpr std::size_t kActions = 2;
inline constexpr std::size_t kRewards = 2;

struct RulePriors {
  double transition = 0.1;
  double reward = 0.1;
  double alpha_transition = 1.0;
  double alpha_reward = 1.0;

  friend bool operator==(const RulePriors&, const RulePriors&) = default;
};

struct RuleModel {
  std::size_t states = 0;
  std::vector<PosteriorTable> transition;  // each [s' x s x a]
  std::vector<PosteriorTable> reward;      // each [r x s]
  StickWeights transition_sticks;
  StickWeights reward_sticks;

  RuleModel() = default;
  RuleModel(std::size_t n_states, std::size_t modules, const RulePriors& priors)
      : states(n_states),
        transition(modules, PosteriorTable({n_states, n_states, kActions}, priors.transition)),
        reward(modules, PosteriorTable({kRewards, n_states}, priors.reward)),
        transition_sticks(modules, priors.alpha_transition),
        reward_sticks(modules, priors.alpha_reward) {
    if (n_states < 2) throw std::invalid_argument("RuleModel: need at least two states");
  }

  std::size_t modules() const { return transition.size(); }

  static std::size_t trans_row(std::size_t s, std::size_t a) { return s * kActions + a; }

  friend bool operator==(const RuleModel&, const RuleModel&) = default;
};

/// Number of leading modules carrying mass plus one empty module for new data.
inline std::size_t module_prefix(const StickWeights& sticks, double eps = 1e-9) {
  std::size_t used = 0;
  for (std::size_t i = 0; i < sticks.counts.size(); ++i) {
    if (sticks.counts[i] > eps) used = i + 1;
  }
  return std::min(sticks.counts.size(), used + 1);
}

/// Expected log rule parameters over the first `states` states and the
/// active module prefixes, plus the module responsibilities they imply.
struct RuleExpectations {
  std::size_t states = 0;
  std::size_t trans_modules = 0;
  std::size_t reward_modules = 0;
  // [x][a][prev][next]
  std::vector<double> trans;
  // [z][r][s]
  std::vector<double> reward;
  std::vector<double> trans_sbp;
  std::vector<double> reward_sbp;

  double trans_at(std::size_t x, std::size_t a, std::size_t prev, std::size_t next) const {
    return trans[((x * kActions + a) * states + prev) * states + next];
  }
  double reward_at(std::size_t z, std::size_t r, std::size_t s) const {
    return reward[(z * kRewards + r) * states + s];
  }

  /// log sum_x exp(E ln M^x + E ln SBP(x)) for action a, laid out [prev * n + next].
  std::vector<double> transition_log_potential(std::size_t a) const {
    std::vector<double> out(states * states);
    std::vector<double> terms(trans_modules);
    for (std::size_t p = 0; p < states; ++p) {
      for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t x = 0; x < trans_modules; ++x) terms[x] = trans_at(x, a, p, s) + trans_sbp[x];
        out[p * states + s] = log_sum_exp(terms);
      }
    }
    return out;
  }

  /// log sum_z exp(E ln N^z_{r s} + E ln SBP(z)).
  std::vector<double> reward_log_potential(std::size_t r) const {
    std::vector<double> out(states);
    std::vector<double> terms(reward_modules);
    for (std::size_t s = 0; s < states; ++s) {
      for (std::size_t z = 0; z < reward_modules; ++z) terms[z] = reward_at(z, r, s) + reward_sbp[z];
      out[s] = log_sum_exp(terms);
    }
    return out;
  }
};

inline RuleExpectations expect_rules(const RuleModel& model, std::size_t states) {
  RuleExpectations e;
  e.states = std::min(states, model.states);
  e.trans_modules = module_prefix(model.transition_sticks);
  e.reward_modules = module_prefix(model.reward_sticks);
  const std::size_t n = e.states;
  e.trans.assign(e.trans_modules * kActions * n * n, 0.0);
  e.reward.assign(e.reward_modules * kRewards * n, 0.0);

  std::vector<double> sbp(model.modules());
  expected_log_sbp_ordered(model.transition_sticks.counts, model.transition_sticks.alpha, sbp);
  e.trans_sbp.assign(sbp.begin(), sbp.begin() + static_cast<std::ptrdiff_t>(e.trans_modules));
  expected_log_sbp_ordered(model.reward_sticks.counts, model.reward_sticks.alpha, sbp);
  e.reward_sbp.assign(sbp.begin(), sbp.begin() + static_cast<std::ptrdiff_t>(e.reward_modules));

  std::vector<double> buf(model.states);
  for (std::size_t x = 0; x < e.trans_modules; ++x) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t a = 0; a < kActions; ++a) {
        expected_log_dirichlet(model.transition[x].row(RuleModel::trans_row(p, a)), buf);
        for (std::size_t s = 0; s < n; ++s) e.trans[((x * kActions + a) * n + p) * n + s] = buf[s];
      }
    }
  }
  std::vector<double> rbuf(kRewards);
  for (std::size_t z = 0; z < e.reward_modules; ++z) {
    for (std::size_t s = 0; s < n; ++s) {
      expected_log_dirichlet(model.reward[z].row(s), rbuf);
      for (std::size_t r = 0; r < kRewards; ++r) e.reward[(z * kRewards + r) * n + s] = rbuf[r];
    }
  }
  return e;
}

/// Soft counts that drive a rule update: pairwise state posteriors summed per
/// previous action and state marginals summed per reward value.
struct RuleStatistics {
  std::size_t states = 0;
  std::vector<std::vector<double>> transitions;  // [a][prev * n + next]
  std::vector<std::vector<double>> rewards;      // [r][s]

  explicit RuleStatistics(std::size_t n = 0)
      : states(n),
        transitions(kActions, std::vector<double>(n * n, 0.0)),
        rewards(kRewards, std::vector<double>(n, 0.0)) {}
};

/// Conjugate update of `prior` with the soft counts, using module
/// responsibilities implied by `e`. Also returns per-module usage in the window.
struct ModuleUsage {
  std::vector<double> transition;
  std::vector<double> reward;
};

inline RuleModel update_rules(const RuleModel& prior, const RuleStatistics& stats, const RuleExpectations& e,
                              ModuleUsage* usage = nullptr) {
  RuleModel post = prior;
  const std::size_t n = e.states;
  if (stats.states != n) throw std::invalid_argument("update_rules: statistics size mismatch");
  std::vector<double> terms(e.trans_modules), resp(std::max(e.trans_modules, e.reward_modules));
  std::vector<double> trans_use(prior.modules(), 0.0), reward_use(prior.modules(), 0.0);

  for (std::size_t a = 0; a < kActions; ++a) {
    const auto& pairs = stats.transitions[a];
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t s = 0; s < n; ++s) {
        const double mass = pairs[p * n + s];
        if (mass <= 0.0) continue;
        for (std::size_t x = 0; x < e.trans_modules; ++x) terms[x] = e.trans_at(x, a, p, s) + e.trans_sbp[x];
        softmax_into(terms, resp);
        for (std::size_t x = 0; x < e.trans_modules; ++x) {
          const double add = mass * resp[x];
          post.transition[x].at(s, RuleModel::trans_row(p, a)) += add;
          trans_use[x] += add;
        }
      }
    }
  }
  std::vector<double> rterms(e.reward_modules);
  for (std::size_t r = 0; r < kRewards; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      const double mass = stats.rewards[r][s];
      if (mass <= 0.0) continue;
      for (std::size_t z = 0; z < e.reward_modules; ++z) rterms[z] = e.reward_at(z, r, s) + e.reward_sbp[z];
      softmax_into(rterms, resp);
      for (std::size_t z = 0; z < e.reward_modules; ++z) {
        const double add = mass * resp[z];
        post.reward[z].at(r, s) += add;
        reward_use[z] += add;
      }
    }
  }
  for (std::size_t x = 0; x < prior.modules(); ++x) post.transition_sticks.counts[x] += trans_use[x];
  for (std::size_t z = 0; z < prior.modules(); ++z) post.reward_sticks.counts[z] += reward_use[z];
  if (usage) *usage = {std::move(trans_use), std::move(reward_use)};
  return post;
}

/// KL(q(rules) || p(rules)) over the first `states` conditioning states.
inline double rules_kl(const RuleModel& post, const RuleModel& prior, std::size_t states) {
  double kl = 0.0;
  const std::size_t n = std::min(states, post.states);
  for (std::size_t x = 0; x < post.modules(); ++x) {
    if (post.transition[x] == prior.transition[x]) continue;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t a = 0; a < kActions; ++a) {
        const auto row = RuleModel::trans_row(p, a);
        kl += kl_dirichlet(post.transition[x].row(row), prior.transition[x].row(row));
      }
    }
  }
  for (std::size_t z = 0; z < post.modules(); ++z) {
    if (post.reward[z] == prior.reward[z]) continue;
    for (std::size_t s = 0; s < n; ++s) kl += kl_dirichlet(post.reward[z].row(s), prior.reward[z].row(s));
  }
  kl += kl_sticks(post.transition_sticks.counts, prior.transition_sticks.counts, post.transition_sticks.alpha);
  kl += kl_sticks(post.reward_sticks.counts, prior.reward_sticks.counts, post.reward_sticks.alpha);
  return kl;
}

/// Reorders modules by descending stick count. Applies the same order to `companion`.
inline void sort_modules(RuleModel& model, RuleModel* companion = nullptr) {
  const auto torder = model.transition_sticks.sorted_order();
  const auto rorder = model.reward_sticks.sorted_order();
  auto apply = [&](RuleModel& m) {
    m.transition = permuted(m.transition, torder);
    m.transition_sticks.counts = permuted(m.transition_sticks.counts, torder);
    m.reward = permuted(m.reward, rorder);
    m.reward_sticks.counts = permuted(m.reward_sticks.counts, rorder);
  };
  apply(model);
  if (companion) apply(*companion);
}

/// Relabels states: new state i is old state perm[i].
inline void permute_rule_states(RuleModel& model, std::span<const std::size_t> perm) {
  const std::size_t n = model.states;
  for (auto& tab : model.transition) {
    PosteriorTable out = tab;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t a = 0; a < kActions; ++a) {
        for (std::size_t s = 0; s < n; ++s) {
          out.at(s, RuleModel::trans_row(p, a)) = tab.at(perm[s], RuleModel::trans_row(perm[p], a));
        }
      }
    }
    tab = std::move(out);
  }
  for (auto& tab : model.reward) {
    PosteriorTable out = tab;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t r = 0; r < kRewards; ++r) out.at(r, s) = tab.at(r, perm[s]);
    }
    tab = std::move(out);
  }
}

/// Pulls every accumulated count toward `base` by `retention` (1 keeps all).
inline void retain_rules(RuleModel& model, const RuleModel& base, double retention) {
  if (retention >= 1.0) return;
  auto shrink = [&](std::span<double> v, std::span<const double> b) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = b[i] + retention * (v[i] - b[i]);
  };
  for (std::size_t x = 0; x < model.modules(); ++x) {
    shrink(model.transition[x].values(), base.transition[x].values());
    shrink(model.reward[x].values(), base.reward[x].values());
  }
  shrink(model.transition_sticks.counts, base.transition_sticks.counts);
  shrink(model.reward_sticks.counts, base.reward_sticks.counts);
}

}  // namespace romdp
