#pragma once

// Complete environment inference: variational Bayes for a hidden-state model
// that emits every observation, with mixtures of transition and reward rules.
// The state axis has one entry per observation.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "romdp/chain.hpp"
#include "romdp/prob.hpp"
#include "romdp/rules.hpp"
#include "romdp/window.hpp"

namespace romdp {

struct CeiPriors {
  double observation = 0.1;
  RulePriors rules;
  std::size_t modules = 10;

  friend bool operator==(const CeiPriors&, const CeiPriors&) = default;
};

struct CeiModel {
  std::size_t observations = 0;
  PosteriorTable obs_rule;  // [o x s]
  RuleModel rules;
  /// q(s) of the step preceding the next window; empty before the first window.
  std::vector<double> belief_prior;
  CeiPriors priors;

  std::size_t states() const { return rules.states; }

  static CeiModel fresh(std::size_t n_observations, const CeiPriors& priors) {
    if (n_observations < 2) throw std::invalid_argument("CeiModel: need at least two observations");
    CeiModel m;
    m.observations = n_observations;
    m.obs_rule = PosteriorTable({n_observations, n_observations}, priors.observation);
    m.rules = RuleModel(n_observations, priors.modules, priors.rules);
    m.priors = priors;
    return m;
  }

  friend bool operator==(const CeiModel&, const CeiModel&) = default;
};

struct CeiPosterior {
  ChainPosterior chain;
  RuleExpectations rules;
  std::vector<std::size_t> node_obs;     // observation of each node table
  std::vector<std::size_t> node_reward;  // reward of each node table
  std::vector<int> action_of_pair{0, 1};
};

namespace detail {

inline ChainProblem cei_problem(const CeiModel& model, const WindowData& w, const RuleExpectations& e,
                                std::vector<std::size_t>& node_obs, std::vector<std::size_t>& node_reward) {
  const std::size_t n = model.states();
  const std::size_t n_obs = model.observations;
  ChainProblem pb;
  pb.states = n;
  pb.pair_log = {e.transition_log_potential(0), e.transition_log_potential(1)};
  const std::vector<std::vector<double>> reward_pot{e.reward_log_potential(0), e.reward_log_potential(1)};

  std::vector<int> key_index(n_obs * kRewards, -1);
  std::vector<double> elog(n_obs);
  std::vector<std::vector<double>> obs_elog(n, std::vector<double>());
  node_obs.clear();
  node_reward.clear();
  for (std::size_t t = 0; t < w.size(); ++t) {
    const std::size_t key = w.observations[t] * kRewards + w.rewards[t];
    if (key_index[key] < 0) {
      key_index[key] = static_cast<int>(node_obs.size());
      node_obs.push_back(w.observations[t]);
      node_reward.push_back(w.rewards[t]);
    }
    pb.node_of_step.push_back(static_cast<std::size_t>(key_index[key]));
  }
  for (std::size_t s = 0; s < n; ++s) {
    obs_elog[s].resize(n_obs);
    expected_log_dirichlet(model.obs_rule.row(s), obs_elog[s]);
  }
  pb.node_log.assign(node_obs.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < node_obs.size(); ++k) {
    for (std::size_t s = 0; s < n; ++s) pb.node_log[k][s] = obs_elog[s][node_obs[k]] + reward_pot[node_reward[k]][s];
  }

  const bool chained = w.prev_action >= 0 && model.belief_prior.size() == n;
  if (chained) pb.prior = model.belief_prior;
  pb.pair_of_step.resize(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    pb.pair_of_step[t] = t == 0 ? (chained ? w.prev_action : -1) : static_cast<int>(w.actions[t - 1]);
  }
  return pb;
}

}  // namespace detail

inline CeiPosterior cei_e_step(const CeiModel& model, const WindowData& w) {
  w.validate(model.observations);
  CeiPosterior out;
  out.rules = expect_rules(model.rules, model.states());
  const auto pb = detail::cei_problem(model, w, out.rules, out.node_obs, out.node_reward);
  out.chain = infer_chain(pb);
  return out;
}

/// Window posterior concentrated on `assignment[o_t]` at every step; seeds the first sweep.
inline CeiPosterior cei_seed_posterior(const CeiModel& model, const WindowData& w,
                                       const std::vector<std::size_t>& assignment) {
  w.validate(model.observations);
  if (assignment.size() != model.observations) throw std::invalid_argument("cei_seed_posterior: bad assignment");
  CeiPosterior out;
  out.rules = expect_rules(model.rules, model.states());
  const auto pb = detail::cei_problem(model, w, out.rules, out.node_obs, out.node_reward);
  std::vector<std::size_t> states(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) states[t] = assignment[w.observations[t]];
  out.chain = hard_posterior(pb, states);
  return out;
}

/// Conjugate update of `prior` with the window posterior.
inline CeiModel cei_m_step(const CeiModel& prior, const WindowData& w, const CeiPosterior& post) {
  CeiModel m = prior;
  const std::size_t n = prior.states();
  for (std::size_t k = 0; k < post.node_obs.size(); ++k) {
    const auto& sums = post.chain.node_sums[k];
    for (std::size_t s = 0; s < n; ++s) m.obs_rule.at(post.node_obs[k], s) += sums[s];
  }
  const auto stats = rule_statistics(post.chain, w, post.action_of_pair);
  m.rules = update_rules(prior.rules, stats, post.rules);
  return m;
}

/// -log Z + KL(q(params) || p(params)); `post` must come from an e-step on `model`.
inline double cei_free_energy(const CeiModel& model, const CeiModel& prior, const CeiPosterior& post) {
  double kl = 0.0;
  for (std::size_t s = 0; s < model.states(); ++s) {
    kl += kl_dirichlet(model.obs_rule.row(s), prior.obs_rule.row(s));
  }
  kl += rules_kl(model.rules, prior.rules, model.states());
  return -post.chain.log_normalizer + kl;
}

struct CeiWindowResult {
  CeiModel model;
  CeiPosterior posterior;
  FreeEnergyTrace free_energy;
  std::size_t sweeps = 0;
};

/// Alternates e- and m-steps on one window with `prior` as the parameter
/// prior. The result's belief_prior is the last step's marginal.
inline CeiWindowResult cei_infer_window(const CeiModel& prior, const WindowData& w, const SweepOptions& opt,
                                        const std::vector<std::size_t>* seed_assignment = nullptr) {
  if (opt.max_sweeps == 0) throw std::invalid_argument("cei_infer_window: max_sweeps must be positive");
  CeiWindowResult res;
  res.model = prior;
  if (seed_assignment) res.model = cei_m_step(prior, w, cei_seed_posterior(prior, w, *seed_assignment));
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    res.posterior = cei_e_step(res.model, w);
    const double fe = cei_free_energy(res.model, prior, res.posterior);
    res.model = cei_m_step(prior, w, res.posterior);
    ++res.sweeps;
    if (res.free_energy.record(fe, opt)) break;
  }
  const auto last = res.posterior.chain.marginal(w.size() - 1);
  res.model.belief_prior.assign(last.begin(), last.end());
  return res;
}

/// Start-of-window maintenance: modules reordered by weight and rule counts
/// pulled toward the base prior by `retention`.
inline void cei_prepare_window(CeiModel& model, double retention) {
  sort_modules(model.rules);
  if (retention < 1.0) retain_rules(model.rules, RuleModel(model.states(), model.rules.modules(), model.priors.rules), retention);
}

/// Data mass per state held in the observation rule.
inline std::vector<double> cei_retained_mass(const CeiModel& model) {
  std::vector<double> mass(model.states(), 0.0);
  for (std::size_t s = 0; s < model.states(); ++s) {
    for (double v : model.obs_rule.row(s)) mass[s] += v - model.priors.observation;
  }
  return mass;
}

/// Normalized exp E[ln L(o | s)] over states: the belief used for acting.
inline std::vector<double> cei_observation_belief(const CeiModel& model, std::size_t o) {
  std::vector<double> logs(model.states()), elog(model.observations);
  for (std::size_t s = 0; s < model.states(); ++s) {
    expected_log_dirichlet(model.obs_rule.row(s), elog);
    logs[s] = elog[o];
  }
  return normalize_log(logs);
}

}  // namespace romdp
