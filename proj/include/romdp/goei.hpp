#pragma once

// Goal-oriented environment inference: observations only condition a
// clustering rule p(s | o) with a stick-breaking prior over states, and the
// clusters are chosen to explain (a_{t-1}, r_t) given (s_{t-1}, s_t).
// Transition and reward rules for planning are fitted afterwards on the
// inferred states.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "romdp/chain.hpp"
#include "romdp/prob.hpp"
#include "romdp/rules.hpp"
#include "romdp/window.hpp"

namespace romdp {

/// Outcomes of the action-reward rule: k = a * 2 + r.
inline constexpr std::size_t kActionRewards = kActions * kRewards;

struct GoeiPriors {
  double cluster = 1e-3;
  double alpha_cluster = 1.0;
  double action_reward = 1.0;
  double alpha_action_reward = 1.0;
  std::size_t truncation = 70;
  std::size_t modules = 10;
  RulePriors aux;

  friend bool operator==(const GoeiPriors&, const GoeiPriors&) = default;
};

struct GoeiModel {
  std::size_t observations = 0;
  PosteriorTable cluster;               // [s x o]
  std::vector<PosteriorTable> ar;       // each [(a, r) x s_prev x s]
  StickWeights ar_sticks;
  RuleModel aux;
  /// q(s) of the step preceding the next window (length K); empty before the first window.
  std::vector<double> belief_prior;
  double rho = 0.95;
  GoeiPriors priors;

  std::size_t truncation() const { return cluster.outcomes(); }
  std::size_t ar_row(std::size_t prev, std::size_t next) const { return prev * truncation() + next; }

  static GoeiModel fresh(std::size_t n_observations, const GoeiPriors& priors, double rho) {
    if (priors.truncation < 2) throw std::invalid_argument("GoeiModel: truncation must be at least 2");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("GoeiModel: rho must lie in [0, 1]");
    GoeiModel m;
    const std::size_t k = priors.truncation;
    m.observations = n_observations;
    m.cluster = PosteriorTable({k, n_observations}, priors.cluster);
    m.ar.assign(priors.modules, PosteriorTable({kActionRewards, k, k}, priors.action_reward));
    m.ar_sticks = StickWeights(priors.modules, priors.alpha_action_reward);
    m.aux = RuleModel(k, priors.modules, priors.aux);
    m.rho = rho;
    m.priors = priors;
    return m;
  }

  friend bool operator==(const GoeiModel&, const GoeiModel&) = default;
};

struct GoeiPosterior {
  ChainPosterior chain;
  std::size_t states = 0;
  std::size_t modules = 0;
  std::vector<double> ar_elog;  // [y][k][prev * n + next]
  std::vector<double> ar_sbp;
  std::vector<std::size_t> node_obs;
  std::vector<int> action_of_pair{0, 0, 1, 1};

  double ar_at(std::size_t y, std::size_t k, std::size_t prev, std::size_t next) const {
    return ar_elog[((y * kActionRewards + k) * states + prev) * states + next];
  }
};

/// E[ln p(s | o)] for the first `n` states under the stick-breaking clustering rule.
inline std::vector<double> goei_cluster_elog(const GoeiModel& model, std::size_t o, std::size_t n) {
  std::vector<double> full(model.truncation());
  expected_log_sbp_ordered(model.cluster.row(o), model.priors.alpha_cluster, full);
  full.resize(std::min(n, full.size()));
  return full;
}

/// Belief over the first `n` states for acting on observation o.
inline std::vector<double> goei_observation_belief(const GoeiModel& model, std::size_t o, std::size_t n) {
  return normalize_log(goei_cluster_elog(model, o, n));
}

namespace detail {

inline ChainProblem goei_problem(const GoeiModel& model, const WindowData& w, std::size_t n, GoeiPosterior& out) {
  const std::size_t k_trunc = model.truncation();
  out.states = n;
  out.modules = module_prefix(model.ar_sticks);
  const std::size_t ny = out.modules;

  std::vector<double> sbp(model.ar_sticks.truncation());
  expected_log_sbp_ordered(model.ar_sticks.counts, model.ar_sticks.alpha, sbp);
  out.ar_sbp.assign(sbp.begin(), sbp.begin() + static_cast<std::ptrdiff_t>(ny));

  out.ar_elog.assign(ny * kActionRewards * n * n, 0.0);
  std::vector<double> buf(kActionRewards);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t s = 0; s < n; ++s) {
        expected_log_dirichlet(model.ar[y].row(p * k_trunc + s), buf);
        for (std::size_t k = 0; k < kActionRewards; ++k) out.ar_elog[((y * kActionRewards + k) * n + p) * n + s] = buf[k];
      }
    }
  }

  ChainProblem pb;
  pb.states = n;
  pb.pair_log.assign(kActionRewards, std::vector<double>(n * n));
  std::vector<double> terms(ny);
  for (std::size_t k = 0; k < kActionRewards; ++k) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t y = 0; y < ny; ++y) terms[y] = out.ar_at(y, k, p, s) + out.ar_sbp[y];
        pb.pair_log[k][p * n + s] = log_sum_exp(terms);
      }
    }
  }

  std::vector<int> node_index(model.observations, -1);
  out.node_obs.clear();
  for (std::size_t t = 0; t < w.size(); ++t) {
    const std::size_t o = w.observations[t];
    if (node_index[o] < 0) {
      node_index[o] = static_cast<int>(out.node_obs.size());
      out.node_obs.push_back(o);
      pb.node_log.push_back(goei_cluster_elog(model, o, n));
    }
    pb.node_of_step.push_back(static_cast<std::size_t>(node_index[o]));
  }

  const bool chained = w.prev_action >= 0 && model.belief_prior.size() == k_trunc;
  if (chained) {
    pb.prior.assign(model.belief_prior.begin(), model.belief_prior.begin() + static_cast<std::ptrdiff_t>(n));
    double mass = 0.0;
    for (double v : pb.prior) mass += v;
    if (!(mass > 0.0)) pb.prior.assign(n, 1.0 / static_cast<double>(n));
  }
  pb.pair_of_step.resize(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (t == 0) {
      pb.pair_of_step[t] = chained ? static_cast<int>(static_cast<std::size_t>(w.prev_action) * kRewards + w.rewards[0]) : -1;
    } else {
      pb.pair_of_step[t] = static_cast<int>(w.actions[t - 1] * kRewards + w.rewards[t]);
    }
  }
  return pb;
}

inline void check_states(const GoeiModel& model, std::size_t n) {
  if (n == 0 || n > model.truncation()) throw std::invalid_argument("goei: state prefix out of range");
}

}  // namespace detail

/// Exact posterior over the first `n` states of the window given the model.
inline GoeiPosterior goei_e_step(const GoeiModel& model, const WindowData& w, std::size_t n) {
  w.validate(model.observations);
  detail::check_states(model, n);
  GoeiPosterior out;
  const auto pb = detail::goei_problem(model, w, n, out);
  out.chain = infer_chain(pb);
  return out;
}

/// Window posterior with step t placed on `assignment[o_t]`.
inline GoeiPosterior goei_seed_posterior(const GoeiModel& model, const WindowData& w, std::size_t n,
                                         const std::vector<std::size_t>& assignment) {
  w.validate(model.observations);
  detail::check_states(model, n);
  if (assignment.size() != model.observations) throw std::invalid_argument("goei_seed_posterior: bad assignment");
  GoeiPosterior out;
  const auto pb = detail::goei_problem(model, w, n, out);
  std::vector<std::size_t> states(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) states[t] = assignment[w.observations[t]];
  out.chain = hard_posterior(pb, states);
  return out;
}

/// Sequential clustering-rule update with forgetting, from τ-T to τ:
/// η = (1-ρ)(1-q(s_t=s)), Θ_{s,o_t} ← (1-η) Θ_{s,o_t} + q(s_t=s).
inline void goei_forgetting_update(PosteriorTable& cluster, const WindowData& w, const ChainPosterior& chain,
                                   double rho) {
  const std::size_t k_trunc = cluster.outcomes();
  const std::size_t n = chain.states;
  constexpr double floor = std::numeric_limits<double>::min();
  for (std::size_t t = 0; t < w.size(); ++t) {
    auto col = cluster.row(w.observations[t]);
    const double* q = chain.marginals.data() + t * n;
    for (std::size_t s = 0; s < k_trunc; ++s) {
      const double qs = s < n ? q[s] : 0.0;
      if (rho < 1.0) {
        const double eta = (1.0 - rho) * (1.0 - qs);
        col[s] = std::max((1.0 - eta) * col[s], floor);
      }
      col[s] += qs;
    }
  }
}

/// Updates the clustering rule (with forgetting), the action-reward rules and their sticks.
inline GoeiModel goei_m_step_with_forgetting(const GoeiModel& prior, const WindowData& w, const GoeiPosterior& post) {
  GoeiModel m = prior;
  const std::size_t n = post.states;
  const std::size_t k_trunc = prior.truncation();
  std::vector<double> terms(post.modules), resp(post.modules), use(prior.ar.size(), 0.0);
  for (std::size_t k = 0; k < kActionRewards; ++k) {
    const auto& sums = post.chain.pair_sums[k];
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t s = 0; s < n; ++s) {
        const double mass = sums[p * n + s];
        if (mass <= 0.0) continue;
        for (std::size_t y = 0; y < post.modules; ++y) terms[y] = post.ar_at(y, k, p, s) + post.ar_sbp[y];
        softmax_into(terms, resp);
        for (std::size_t y = 0; y < post.modules; ++y) {
          m.ar[y].at(k, p * k_trunc + s) += mass * resp[y];
          use[y] += mass * resp[y];
        }
      }
    }
  }
  for (std::size_t y = 0; y < prior.ar.size(); ++y) m.ar_sticks.counts[y] += use[y];
  goei_forgetting_update(m.cluster, w, post.chain, prior.rho);
  return m;
}

/// -log Z + KL(q(params) || p(params)) for the clustering and action-reward rules.
inline double goei_free_energy(const GoeiModel& model, const GoeiModel& prior, const GoeiPosterior& post) {
  double kl = 0.0;
  for (std::size_t o = 0; o < model.observations; ++o) {
    const auto q = model.cluster.row(o);
    const auto p = prior.cluster.row(o);
    if (std::equal(q.begin(), q.end(), p.begin())) continue;
    kl += kl_sticks(q, p, model.priors.alpha_cluster);
  }
  const std::size_t n = post.states;
  for (std::size_t y = 0; y < model.ar.size(); ++y) {
    if (model.ar[y] == prior.ar[y]) continue;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t s = 0; s < n; ++s) {
        const auto row = model.ar_row(p, s);
        kl += kl_dirichlet(model.ar[y].row(row), prior.ar[y].row(row));
      }
    }
  }
  kl += kl_sticks(model.ar_sticks.counts, prior.ar_sticks.counts, model.ar_sticks.alpha);
  return -post.chain.log_normalizer + kl;
}

/// Fits the planning rules on the inferred states: module assignments and
/// rule tables are alternated `sweeps` times starting from `prior_aux`.
inline RuleModel goei_aux_update(const RuleModel& prior_aux, const WindowData& w, const GoeiPosterior& post,
                                 std::size_t sweeps, ModuleUsage* usage = nullptr) {
  const auto stats = rule_statistics(post.chain, w, post.action_of_pair);
  RuleModel aux = prior_aux;
  for (std::size_t i = 0; i < std::max<std::size_t>(sweeps, 1); ++i) {
    const auto e = expect_rules(aux, post.states);
    aux = update_rules(prior_aux, stats, e, usage);
  }
  return aux;
}

struct GoeiWindowResult {
  GoeiModel model;
  GoeiPosterior posterior;
  FreeEnergyTrace free_energy;
  std::size_t sweeps = 0;
};

/// Alternates e- and m-steps over the first `n` states, then fits the
/// planning rules. The result's belief_prior is the last step's marginal.
inline GoeiWindowResult goei_infer_window(const GoeiModel& prior, const WindowData& w, std::size_t n,
                                          const SweepOptions& opt, std::size_t aux_sweeps = 5,
                                          const std::vector<std::size_t>* seed_assignment = nullptr) {
  if (opt.max_sweeps == 0) throw std::invalid_argument("goei_infer_window: max_sweeps must be positive");
  GoeiWindowResult res;
  res.model = prior;
  if (seed_assignment) {
    res.model = goei_m_step_with_forgetting(prior, w, goei_seed_posterior(prior, w, n, *seed_assignment));
  }
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    res.posterior = goei_e_step(res.model, w, n);
    const double fe = goei_free_energy(res.model, prior, res.posterior);
    res.model = goei_m_step_with_forgetting(prior, w, res.posterior);
    ++res.sweeps;
    if (res.free_energy.record(fe, opt)) break;
  }
  res.model.aux = goei_aux_update(prior.aux, w, res.posterior, aux_sweeps);
  const auto last = res.posterior.chain.marginal(w.size() - 1);
  res.model.belief_prior.assign(prior.truncation(), 0.0);
  std::copy(last.begin(), last.end(), res.model.belief_prior.begin());
  return res;
}

/// Data mass per state held in the clustering rule.
inline std::vector<double> goei_retained_mass(const GoeiModel& model) {
  std::vector<double> mass(model.truncation(), 0.0);
  for (std::size_t o = 0; o < model.observations; ++o) {
    const auto col = model.cluster.row(o);
    for (std::size_t s = 0; s < col.size(); ++s) mass[s] += std::max(0.0, col[s] - model.priors.cluster);
  }
  return mass;
}

/// Relabels states so that new state i is old state perm[i].
inline void goei_permute_states(GoeiModel& model, std::span<const std::size_t> perm) {
  const std::size_t k_trunc = model.truncation();
  PosteriorTable cluster = model.cluster;
  for (std::size_t o = 0; o < model.observations; ++o) {
    for (std::size_t s = 0; s < k_trunc; ++s) cluster.at(s, o) = model.cluster.at(perm[s], o);
  }
  model.cluster = std::move(cluster);
  for (auto& tab : model.ar) {
    PosteriorTable out = tab;
    for (std::size_t p = 0; p < k_trunc; ++p) {
      for (std::size_t s = 0; s < k_trunc; ++s) {
        const auto src = tab.row(perm[p] * k_trunc + perm[s]);
        std::copy(src.begin(), src.end(), out.row(p * k_trunc + s).begin());
      }
    }
    tab = std::move(out);
  }
  permute_rule_states(model.aux, perm);
  if (model.belief_prior.size() == k_trunc) model.belief_prior = permuted(model.belief_prior, perm);
}

struct GoeiWindowPlan {
  std::size_t occupied = 0;
  std::size_t states = 0;
};

/// Start-of-window maintenance: states reordered by retained mass, modules
/// by weight, rule counts pulled toward the base prior by `retention`.
/// Returns the number of occupied states and the state prefix to infer over.
inline GoeiWindowPlan goei_prepare_window(GoeiModel& model, double retention, std::size_t spare,
                                          double occupancy = 0.5) {
  const auto mass = goei_retained_mass(model);
  std::vector<std::size_t> order(mass.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  goei_permute_states(model, order);

  const auto yorder = model.ar_sticks.sorted_order();
  model.ar = permuted(model.ar, yorder);
  model.ar_sticks.counts = permuted(model.ar_sticks.counts, yorder);
  sort_modules(model.aux);

  if (retention < 1.0) {
    const PosteriorTable base({kActionRewards, model.truncation(), model.truncation()}, model.priors.action_reward);
    for (auto& tab : model.ar) {
      auto v = tab.values();
      const auto b = base.values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = b[i] + retention * (v[i] - b[i]);
    }
    for (double& c : model.ar_sticks.counts) c *= retention;
    retain_rules(model.aux, RuleModel(model.truncation(), model.aux.modules(), model.priors.aux), retention);
  }

  GoeiWindowPlan plan;
  for (std::size_t s = 0; s < mass.size(); ++s) {
    if (mass[order[s]] > occupancy) plan.occupied = s + 1;
  }
  plan.states = std::min(model.truncation(), std::max<std::size_t>(plan.occupied + spare, 2));
  return plan;
}

}  // namespace romdp
