#pragma once

// State-space reduction and behavior metrics: belief-weighted joints of
// (core, state) and (observation, state), their conditional entropies in
// nats, and the fraction of oracle-optimal actions.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "romdp/env.hpp"

namespace romdp {

struct JointCounts {
  std::size_t cores = kCores;
  std::size_t observations = 0;
  std::size_t states = 0;
  std::vector<double> cs;  // [c * states + s]
  std::vector<double> os;  // [o * states + s]
  std::size_t steps = 0;

  JointCounts() = default;
  JointCounts(std::size_t n_cores, std::size_t n_obs, std::size_t n_states)
      : cores(n_cores),
        observations(n_obs),
        states(n_states),
        cs(n_cores * n_states, 0.0),
        os(n_obs * n_states, 0.0) {}

  void accumulate(std::size_t core, std::size_t obs, std::span<const double> belief) {
    if (core >= cores || obs >= observations) throw std::out_of_range("JointCounts: index out of range");
    if (belief.size() > states) throw std::invalid_argument("JointCounts: belief longer than state axis");
    for (std::size_t s = 0; s < belief.size(); ++s) {
      cs[core * states + s] += belief[s];
      os[obs * states + s] += belief[s];
    }
    ++steps;
  }
};

/// -sum p(x, s) ln p(x | s) for a table laid out [x * states + s]; 0 ln 0 = 0.
inline double conditional_entropy(std::span<const double> table, std::size_t states) {
  if (states == 0 || table.size() % states != 0) throw std::invalid_argument("conditional_entropy: bad shape");
  const std::size_t rows = table.size() / states;
  std::vector<double> col(states, 0.0);
  double total = 0.0;
  for (std::size_t x = 0; x < rows; ++x) {
    for (std::size_t s = 0; s < states; ++s) {
      const double v = table[x * states + s];
      if (v < 0.0) throw std::domain_error("conditional_entropy: negative mass");
      col[s] += v;
      total += v;
    }
  }
  if (!(total > 0.0)) throw std::domain_error("conditional_entropy: table has no mass");
  double h = 0.0;
  for (std::size_t x = 0; x < rows; ++x) {
    for (std::size_t s = 0; s < states; ++s) {
      const double v = table[x * states + s];
      if (v > 0.0) h -= v / total * std::log(v / col[s]);
    }
  }
  return std::max(h, 0.0);
}

/// Fraction of steps whose action is optimal for the true core under the
/// oracle of the rules active at that step.
inline double optimal_rate(std::span<const std::size_t> cores, std::span<const std::size_t> actions,
                           std::span<const OraclePolicy* const> oracles) {
  if (cores.size() != actions.size() || cores.size() != oracles.size()) {
    throw std::invalid_argument("optimal_rate: series lengths differ");
  }
  if (cores.empty()) throw std::invalid_argument("optimal_rate: empty window");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < cores.size(); ++t) hits += oracles[t]->is_optimal(cores[t], actions[t]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(cores.size());
}

/// Same with a single oracle for the whole window.
inline double optimal_rate(std::span<const std::size_t> cores, std::span<const std::size_t> actions,
                           const OraclePolicy& oracle) {
  std::vector<const OraclePolicy*> o(cores.size(), &oracle);
  return optimal_rate(cores, actions, o);
}

}  // namespace romdp
