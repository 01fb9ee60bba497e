#pragma once

// Exact posterior over a chain of discrete states given log node potentials
// and log pairwise potentials (the E-step shared by both inference engines).
// Sufficient statistics are returned grouped by potential table so callers
// never materialize per-step pairwise tables.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "romdp/prob.hpp"

namespace romdp {

struct ChainProblem {
  std::size_t states = 0;
  /// Distribution of the state preceding step 0; used only if step 0 has a pair factor.
  std::vector<double> prior;
  /// Log pairwise tables laid out [prev * states + next].
  std::vector<std::vector<double>> pair_log;
  /// Log node tables over `states`.
  std::vector<std::vector<double>> node_log;
  /// Pair table used at each step; negative means no transition factor (step 0 only).
  std::vector<int> pair_of_step;
  std::vector<std::size_t> node_of_step;

  std::size_t steps() const { return node_of_step.size(); }
};

struct ChainPosterior {
  std::size_t states = 0;
  std::size_t steps = 0;
  std::vector<double> marginals;               // steps x states
  std::vector<std::vector<double>> pair_sums;  // per pair table, [prev * states + next]
  std::vector<std::vector<double>> node_sums;  // per node table, [state]
  double log_normalizer = 0.0;

  std::span<const double> marginal(std::size_t t) const { return {marginals.data() + t * states, states}; }
};

namespace detail {

struct ScaledTable {
  std::vector<double> scaled;  // exp(log - row max)
  std::vector<double> row_max;
};

inline ScaledTable scale_pair(const std::vector<double>& log_table, std::size_t n) {
  ScaledTable out{std::vector<double>(n * n, 0.0), std::vector<double>(n, kNegInf)};
  for (std::size_t p = 0; p < n; ++p) {
    double m = kNegInf;
    for (std::size_t s = 0; s < n; ++s) m = std::max(m, log_table[p * n + s]);
    out.row_max[p] = m;
    if (m == kNegInf) continue;
    for (std::size_t s = 0; s < n; ++s) out.scaled[p * n + s] = std::exp(log_table[p * n + s] - m);
  }
  return out;
}

struct StepCache {
  bool log_mode = false;
  double shift = 0.0;      // fast mode: m* of the predecessor weighting
  double scaled_c = 0.0;   // fast mode: normalizer of the shifted forward message
  double log_c = 0.0;      // log normalizer of this step
  std::vector<double> u;   // fast mode: shifted predecessor weights
};

}  // namespace detail

inline ChainPosterior infer_chain(const ChainProblem& problem) {
  const std::size_t n = problem.states;
  const std::size_t steps = problem.steps();
  if (n == 0) throw std::invalid_argument("infer_chain: no states");
  if (steps == 0) throw std::invalid_argument("infer_chain: empty window");
  if (problem.pair_of_step.size() != steps) throw std::invalid_argument("infer_chain: step index mismatch");
  for (std::size_t t = 1; t < steps; ++t) {
    if (problem.pair_of_step[t] < 0) throw std::invalid_argument("infer_chain: only step 0 may lack a pair factor");
  }
  const bool has_prior = problem.pair_of_step[0] >= 0;
  if (has_prior && problem.prior.size() != n) throw std::invalid_argument("infer_chain: prior size mismatch");

  std::vector<detail::ScaledTable> pairs;
  pairs.reserve(problem.pair_log.size());
  for (const auto& tab : problem.pair_log) {
    if (tab.size() != n * n) throw std::invalid_argument("infer_chain: pair table size mismatch");
    pairs.push_back(detail::scale_pair(tab, n));
  }
  std::vector<std::vector<double>> node_exp(problem.node_log.size());
  std::vector<double> node_max(problem.node_log.size(), kNegInf);
  for (std::size_t i = 0; i < problem.node_log.size(); ++i) {
    const auto& tab = problem.node_log[i];
    if (tab.size() != n) throw std::invalid_argument("infer_chain: node table size mismatch");
    for (double v : tab) node_max[i] = std::max(node_max[i], v);
    node_exp[i].assign(n, 0.0);
    if (node_max[i] == kNegInf) continue;
    for (std::size_t s = 0; s < n; ++s) node_exp[i][s] = std::exp(tab[s] - node_max[i]);
  }

  std::vector<double> alpha(steps * n, 0.0);
  std::vector<detail::StepCache> cache(steps);
  std::vector<double> prior_norm;
  if (has_prior) {
    double total = 0.0;
    for (double v : problem.prior) total += v;
    if (!(total > 0.0)) throw degenerate_distribution("infer_chain: prior has no mass");
    prior_norm = problem.prior;
    for (double& v : prior_norm) v /= total;
  }

  auto prev_alpha = [&](std::size_t t) -> std::span<const double> {
    if (t == 0) return prior_norm;
    return {alpha.data() + (t - 1) * n, n};
  };

  double log_z = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t node = problem.node_of_step[t];
    const int pair = problem.pair_of_step[t];
    std::span<double> cur{alpha.data() + t * n, n};
    auto& c = cache[t];
    if (node_max[node] == kNegInf) throw degenerate_distribution("infer_chain: node potential has no mass");

    if (pair < 0) {
      double total = 0.0;
      for (std::size_t s = 0; s < n; ++s) total += cur[s] = node_exp[node][s];
      c.scaled_c = total;
      c.log_c = node_max[node] + std::log(total);
      for (double& v : cur) v /= total;
      log_z += c.log_c;
      continue;
    }

    const auto& tab = pairs[static_cast<std::size_t>(pair)];
    const auto prev = prev_alpha(t);
    double shift = kNegInf;
    for (std::size_t p = 0; p < n; ++p) {
      if (prev[p] > 0.0 && tab.row_max[p] != kNegInf) shift = std::max(shift, tab.row_max[p] + std::log(prev[p]));
    }
    if (shift == kNegInf) throw degenerate_distribution("infer_chain: no reachable state");
    c.u.assign(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      if (prev[p] > 0.0 && tab.row_max[p] != kNegInf) c.u[p] = prev[p] * std::exp(tab.row_max[p] - shift);
    }
    std::fill(cur.begin(), cur.end(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      const double w = c.u[p];
      if (w == 0.0) continue;
      const double* row = tab.scaled.data() + p * n;
      for (std::size_t s = 0; s < n; ++s) cur[s] += w * row[s];
    }
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) total += cur[s] *= node_exp[node][s];

    if (total > 1e-280 && std::isfinite(total)) {
      c.shift = shift;
      c.scaled_c = total;
      c.log_c = shift + node_max[node] + std::log(total);
      for (double& v : cur) v /= total;
    } else {
      // Evidence and dynamics disagree by more than the double range; redo
      // this step in the log domain.
      c.log_mode = true;
      const auto& lp = problem.pair_log[static_cast<std::size_t>(pair)];
      const auto& ln = problem.node_log[node];
      std::vector<double> terms;
      terms.reserve(n);
      for (std::size_t s = 0; s < n; ++s) {
        terms.clear();
        for (std::size_t p = 0; p < n; ++p) {
          if (prev[p] > 0.0) terms.push_back(std::log(prev[p]) + lp[p * n + s]);
        }
        cur[s] = log_sum_exp(terms) + ln[s];
      }
      c.log_c = log_sum_exp(cur);
      if (c.log_c == kNegInf) throw degenerate_distribution("infer_chain: window has zero likelihood");
      for (double& v : cur) v = std::exp(v - c.log_c);
    }
    log_z += c.log_c;
  }

  ChainPosterior out;
  out.states = n;
  out.steps = steps;
  out.log_normalizer = log_z;
  out.marginals.assign(steps * n, 0.0);
  out.pair_sums.assign(problem.pair_log.size(), std::vector<double>(n * n, 0.0));
  out.node_sums.assign(problem.node_log.size(), std::vector<double>(n, 0.0));

  std::vector<double> beta(n, 1.0), beta_prev(n, 0.0), w(n, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    std::span<const double> cur{alpha.data() + t * n, n};
    std::span<double> marg{out.marginals.data() + t * n, n};
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) total += marg[s] = cur[s] * beta[s];
    for (double& v : marg) v /= total;
    auto& node_sum = out.node_sums[problem.node_of_step[t]];
    for (std::size_t s = 0; s < n; ++s) node_sum[s] += marg[s];

    const int pair = problem.pair_of_step[t];
    if (pair < 0) break;
    const auto prev = prev_alpha(t);
    const auto& c = cache[t];
    auto& psum = out.pair_sums[static_cast<std::size_t>(pair)];
    std::fill(beta_prev.begin(), beta_prev.end(), 0.0);
    const std::size_t node = problem.node_of_step[t];

    if (!c.log_mode) {
      const auto& tab = pairs[static_cast<std::size_t>(pair)];
      for (std::size_t s = 0; s < n; ++s) w[s] = node_exp[node][s] * beta[s] / c.scaled_c;
      for (std::size_t p = 0; p < n; ++p) {
        if (c.u[p] == 0.0) continue;
        const double* row = tab.scaled.data() + p * n;
        double acc = 0.0;
        double* prow = psum.data() + p * n;
        for (std::size_t s = 0; s < n; ++s) {
          const double v = row[s] * w[s];
          acc += v;
          prow[s] += c.u[p] * v;
        }
        beta_prev[p] = acc * (c.u[p] / prev[p]);
      }
    } else {
      const auto& lp = problem.pair_log[static_cast<std::size_t>(pair)];
      const auto& ln = problem.node_log[node];
      for (std::size_t p = 0; p < n; ++p) {
        if (!(prev[p] > 0.0)) continue;
        double acc = 0.0;
        double* prow = psum.data() + p * n;
        for (std::size_t s = 0; s < n; ++s) {
          const double v = std::exp(lp[p * n + s] + ln[s] - c.log_c) * beta[s];
          acc += v;
          prow[s] += prev[p] * v;
        }
        beta_prev[p] = acc;
      }
    }
    beta.swap(beta_prev);
  }
  return out;
}

}  // namespace romdp
