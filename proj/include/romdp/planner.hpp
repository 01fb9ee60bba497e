#pragma once

// Optimal Bellman equation by value iteration, and Action-value Thompson
// Sampling (ATS): draw a rule model from the posterior, solve it, and act
// greedily on the belief-weighted action values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "romdp/prob.hpp"
#include "romdp/rules.hpp"

namespace romdp {

/// A concrete transition/reward model. Transition rows are [(s * A + a) * n + s'].
struct SampledModel {
  std::size_t states = 0;
  std::vector<double> trans;
  std::vector<double> reward;  // [s * R + r]
  std::vector<double> reward_values{0.0, 1.0};

  SampledModel() = default;
  explicit SampledModel(std::size_t n)
      : states(n), trans(n * kActions * n, 0.0), reward(n * kRewards, 0.0) {}

  double& p(std::size_t next, std::size_t s, std::size_t a) { return trans[(s * kActions + a) * states + next]; }
  double p(std::size_t next, std::size_t s, std::size_t a) const {
    return trans[(s * kActions + a) * states + next];
  }
  std::span<double> row(std::size_t s, std::size_t a) { return {trans.data() + (s * kActions + a) * states, states}; }

  double expected_reward(std::size_t s) const {
    double v = 0.0;
    for (std::size_t r = 0; r < kRewards; ++r) v += reward[s * kRewards + r] * reward_values[r];
    return v;
  }
};

/// Action values laid out [s * A + a].
struct QTable {
  std::size_t states = 0;
  std::vector<double> values;

  QTable() = default;
  explicit QTable(std::size_t n) : states(n), values(n * kActions, 0.0) {}

  double operator()(std::size_t s, std::size_t a) const { return values[s * kActions + a]; }
  double& operator()(std::size_t s, std::size_t a) { return values[s * kActions + a]; }
  double best(std::size_t s) const { return std::max((*this)(s, 0), (*this)(s, 1)); }
};

class convergence_error : public std::runtime_error {
 public:
  convergence_error(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

namespace detail {

inline void bellman_apply(const SampledModel& model, const QTable& q, double gamma, std::span<const double> reward,
                          std::vector<double>& target, QTable& out) {
  const std::size_t n = model.states;
  for (std::size_t s = 0; s < n; ++s) target[s] = reward[s] + gamma * q.best(s);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < kActions; ++a) {
      const double* row = model.trans.data() + (s * kActions + a) * n;
      double v = 0.0;
      for (std::size_t next = 0; next < n; ++next) v += row[next] * target[next];
      out(s, a) = v;
    }
  }
}

}  // namespace detail

/// sup-norm of (B Q - Q) where B is the optimal Bellman operator.
inline double bellman_residual(const SampledModel& model, const QTable& q, double gamma) {
  std::vector<double> reward(model.states), target(model.states);
  for (std::size_t s = 0; s < model.states; ++s) reward[s] = model.expected_reward(s);
  QTable next(model.states);
  detail::bellman_apply(model, q, gamma, reward, target, next);
  double res = 0.0;
  for (std::size_t i = 0; i < q.values.size(); ++i) res = std::max(res, std::abs(next.values[i] - q.values[i]));
  return res;
}

/// Iterates Q(s,a) = sum_s' M[s'|s,a] (E[r|s'] + gamma max_a' Q(s',a')) until the
/// sup-norm step is below tol (1 - gamma) / gamma, which bounds the residual by tol.
inline QTable value_iteration(const SampledModel& model, double gamma, double tol = 1e-6,
                              std::size_t max_iter = 10000, const QTable* warm_start = nullptr) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::domain_error("value_iteration: gamma must lie in [0, 1)");
  if (!(tol > 0.0)) throw std::domain_error("value_iteration: tol must be positive");
  const std::size_t n = model.states;
  QTable q(n), next(n);
  if (warm_start && warm_start->states == n) q = *warm_start;
  std::vector<double> reward(n), target(n);
  for (std::size_t s = 0; s < n; ++s) reward[s] = model.expected_reward(s);
  const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : 0.0;
  double delta = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    detail::bellman_apply(model, q, gamma, reward, target, next);
    delta = 0.0;
    for (std::size_t i = 0; i < q.values.size(); ++i) delta = std::max(delta, std::abs(next.values[i] - q.values[i]));
    q.values.swap(next.values);
    if (gamma == 0.0 || delta < stop) return q;
  }
  const double residual = gamma * delta;
  throw convergence_error("value_iteration: no convergence within max_iter", residual);
}

/// argmax per state; ties resolve to the lower action index.
inline std::vector<std::size_t> greedy_policy(const QTable& q) {
  std::vector<std::size_t> pi(q.states);
  for (std::size_t s = 0; s < q.states; ++s) pi[s] = q(s, 1) > q(s, 0) ? 1 : 0;
  return pi;
}

struct AtsOptions {
  double gamma = 0.95;
  double tol = 1e-6;
  std::size_t max_iter = 10000;
};

/// Draws one planning model over the first `states` states: module indices
/// from `trans_weights` / `reward_weights`, then every conditional row from
/// its Dirichlet posterior restricted to those states.
inline SampledModel sample_rule_model(const RuleModel& rules, std::size_t states, std::span<const double> trans_weights,
                                      std::span<const double> reward_weights, Rng& rng) {
  const std::size_t n = std::min(states, rules.states);
  const std::size_t x = sample_index(trans_weights, rng);
  const std::size_t z = sample_index(reward_weights, rng);
  SampledModel model(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < kActions; ++a) {
      const auto full = rules.transition[x].row(RuleModel::trans_row(s, a));
      sample_dirichlet(full.first(n), rng, model.row(s, a));
    }
    sample_dirichlet(rules.reward[z].row(s), rng, std::span<double>(model.reward.data() + s * kRewards, kRewards));
  }
  return model;
}

/// Module weights for ATS: normalized stick counts over the active prefix
/// (uniform over the prefix before any data).
inline std::vector<double> module_weights(const StickWeights& sticks) {
  const std::size_t k = module_prefix(sticks);
  std::vector<double> w(sticks.counts.begin(), sticks.counts.begin() + static_cast<std::ptrdiff_t>(k));
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) std::fill(w.begin(), w.end(), 1.0);
  return w;
}

/// argmax_a sum_s belief(s) Q(s, a) with a uniform tie-break.
inline std::size_t belief_greedy_action(std::span<const double> belief, const QTable& q, Rng& rng) {
  double v0 = 0.0, v1 = 0.0;
  for (std::size_t s = 0; s < belief.size(); ++s) {
    v0 += belief[s] * q(s, 0);
    v1 += belief[s] * q(s, 1);
  }
  const double scale = std::max({1.0, std::abs(v0), std::abs(v1)});
  if (std::abs(v0 - v1) <= 1e-12 * scale) {
    std::uniform_int_distribution<int> coin(0, 1);
    return static_cast<std::size_t>(coin(rng));
  }
  return v1 > v0 ? 1 : 0;
}

/// One ATS decision. `warm` carries the previous iterate between calls.
///
/// Value iteration stops as soon as the belief-weighted action gap exceeds
/// twice the distance bound gamma * delta / (1 - gamma) to the fixed point,
/// so the chosen action is the one the converged solution would give. Near
/// ties it runs to the usual tolerance and breaks ties uniformly.
inline std::size_t ats_select_action(std::span<const double> belief, const RuleModel& rules,
                                     std::span<const double> trans_weights, std::span<const double> reward_weights,
                                     const AtsOptions& opt, Rng& rng, QTable* warm = nullptr) {
  double mass = 0.0;
  for (double b : belief) {
    if (b < 0.0 || !std::isfinite(b)) throw std::domain_error("ats_select_action: invalid belief entry");
    mass += b;
  }
  if (!(mass > 0.0)) throw std::domain_error("ats_select_action: belief has no mass");
  if (rules.modules() == 0) throw std::domain_error("ats_select_action: no rule modules");
  if (!(opt.gamma >= 0.0 && opt.gamma < 1.0)) throw std::domain_error("ats_select_action: gamma must lie in [0, 1)");
  if (!(opt.tol > 0.0)) throw std::domain_error("ats_select_action: tol must be positive");
  const auto model = sample_rule_model(rules, belief.size(), trans_weights, reward_weights, rng);

  const std::size_t n = model.states;
  QTable q(n), next(n);
  if (warm && warm->states == n) q = *warm;
  std::vector<double> reward(n), target(n);
  for (std::size_t s = 0; s < n; ++s) reward[s] = model.expected_reward(s);
  const double gamma = opt.gamma;
  const double stop = gamma > 0.0 ? opt.tol * (1.0 - gamma) / gamma : 0.0;
  bool converged = false;
  std::size_t decided = kActions;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    detail::bellman_apply(model, q, gamma, reward, target, next);
    double delta = 0.0;
    for (std::size_t i = 0; i < q.values.size(); ++i) delta = std::max(delta, std::abs(next.values[i] - q.values[i]));
    q.values.swap(next.values);
    if (gamma == 0.0 || delta < stop) {
      converged = true;
      break;
    }
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      v0 += belief[s] * q(s, 0);
      v1 += belief[s] * q(s, 1);
    }
    const double bound = mass * gamma * delta / (1.0 - gamma);
    if (std::abs(v0 - v1) > 2.0 * bound) {
      decided = v1 > v0 ? 1 : 0;
      break;
    }
  }
  if (decided == kActions && !converged) {
    throw convergence_error("ats_select_action: no convergence within max_iter", 0.0);
  }
  const std::size_t action = decided < kActions ? decided : belief_greedy_action(belief, q, rng);
  if (warm) *warm = std::move(q);
  return action;
}

}  // namespace romdp
