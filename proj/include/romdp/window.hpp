#pragma once

// Window of recent interaction data and the pieces both inference engines
// share: sweep options, free-energy traces and hard-assignment seeding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "romdp/chain.hpp"
#include "romdp/rules.hpp"

namespace romdp {

/// Step t holds the observation o_t, the action a_t taken at o_t, and the
/// reward r_t earned in the core behind o_t. `prev_action` is the action
/// that led into step 0 (negative when the window opens the run).
struct WindowData {
  std::vector<std::size_t> observations;
  std::vector<std::size_t> actions;
  std::vector<std::size_t> rewards;
  int prev_action = -1;

  std::size_t size() const { return observations.size(); }

  void push(std::size_t o, std::size_t a, std::size_t r) {
    observations.push_back(o);
    actions.push_back(a);
    rewards.push_back(r);
  }

  void clear_keep_last_action() {
    prev_action = actions.empty() ? prev_action : static_cast<int>(actions.back());
    observations.clear();
    actions.clear();
    rewards.clear();
  }

  void validate(std::size_t n_observations) const {
    if (observations.empty()) throw std::invalid_argument("WindowData: empty window");
    if (actions.size() != observations.size() || rewards.size() != observations.size()) {
      throw std::invalid_argument("WindowData: series lengths differ");
    }
    for (std::size_t t = 0; t < size(); ++t) {
      if (observations[t] >= n_observations) throw std::invalid_argument("WindowData: observation out of range");
      if (actions[t] >= kActions) throw std::invalid_argument("WindowData: action out of range");
      if (rewards[t] >= kRewards) throw std::invalid_argument("WindowData: reward out of range");
    }
    if (prev_action >= static_cast<int>(kActions)) throw std::invalid_argument("WindowData: bad previous action");
  }
};

struct SweepOptions {
  std::size_t max_sweeps = 20;
  double fe_tol = 1e-4;
  /// Throw when free energy rises by more than `slack` between sweeps.
  bool check_monotone = false;
  double slack = 1e-6;
};

class consistency_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Tracks free energy across sweeps and decides convergence.
struct FreeEnergyTrace {
  std::vector<double> values;

  /// Records `fe`; returns true once the change falls below `opt.fe_tol`.
  bool record(double fe, const SweepOptions& opt) {
    if (!std::isfinite(fe)) throw consistency_error("free energy is not finite");
    const bool have_prev = !values.empty();
    const double prev = have_prev ? values.back() : 0.0;
    values.push_back(fe);
    if (!have_prev) return false;
    if (opt.check_monotone && fe > prev + opt.slack * std::max(1.0, std::abs(prev))) {
      throw consistency_error("free energy increased from " + std::to_string(prev) + " to " + std::to_string(fe));
    }
    return std::abs(fe - prev) < opt.fe_tol;
  }
};

/// Posterior that puts all mass on one state per step. Steps with a pair
/// factor at t = 0 use `prior` for the preceding state.
inline ChainPosterior hard_posterior(const ChainProblem& problem, const std::vector<std::size_t>& states) {
  const std::size_t n = problem.states;
  const std::size_t steps = problem.steps();
  if (states.size() != steps) throw std::invalid_argument("hard_posterior: assignment length mismatch");
  ChainPosterior out;
  out.states = n;
  out.steps = steps;
  out.marginals.assign(steps * n, 0.0);
  out.pair_sums.assign(problem.pair_log.size(), std::vector<double>(n * n, 0.0));
  out.node_sums.assign(problem.node_log.size(), std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t s = states[t];
    if (s >= n) throw std::invalid_argument("hard_posterior: state out of range");
    out.marginals[t * n + s] = 1.0;
    out.node_sums[problem.node_of_step[t]][s] += 1.0;
    const int pair = problem.pair_of_step[t];
    if (pair < 0) continue;
    auto& ps = out.pair_sums[static_cast<std::size_t>(pair)];
    if (t == 0) {
      double total = 0.0;
      for (double v : problem.prior) total += v;
      for (std::size_t p = 0; p < n; ++p) ps[p * n + s] += problem.prior[p] / total;
    } else {
      ps[states[t - 1] * n + s] += 1.0;
    }
  }
  return out;
}

/// Summed marginal mass per state over a window posterior.
inline std::vector<double> state_mass(const ChainPosterior& post) {
  std::vector<double> mass(post.states, 0.0);
  for (std::size_t t = 0; t < post.steps; ++t) {
    for (std::size_t s = 0; s < post.states; ++s) mass[s] += post.marginals[t * post.states + s];
  }
  return mass;
}

/// States whose mass exceeds `threshold`, ordered by descending mass.
inline std::vector<std::size_t> active_states(const std::vector<double>& mass, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < mass.size(); ++s) {
    if (mass[s] > threshold) out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  return out;
}

/// Statistics for a rule update from a window posterior: transitions are
/// grouped by the action that preceded each step.
inline RuleStatistics rule_statistics(const ChainPosterior& post, const WindowData& w,
                                      const std::vector<int>& action_of_pair) {
  const std::size_t n = post.states;
  RuleStatistics stats(n);
  for (std::size_t k = 0; k < post.pair_sums.size(); ++k) {
    const int a = action_of_pair[k];
    if (a < 0) continue;
    auto& dst = stats.transitions[static_cast<std::size_t>(a)];
    const auto& src = post.pair_sums[k];
    for (std::size_t i = 0; i < n * n; ++i) dst[i] += src[i];
  }
  for (std::size_t t = 0; t < post.steps; ++t) {
    auto& dst = stats.rewards[w.rewards[t]];
    for (std::size_t s = 0; s < n; ++s) dst[s] += post.marginals[t * n + s];
  }
  return stats;
}

}  // namespace romdp
