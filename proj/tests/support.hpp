#pragma once

// Helpers shared by the inference tests: independent expected-log formulas
// and random-policy data streams from the environment.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "romdp/env.hpp"
#include "romdp/prob.hpp"
#include "romdp/window.hpp"

namespace testing_support {

inline double elog_dir(std::span<const double> row, std::size_t i) {
  double total = 0.0;
  for (double v : row) total += v;
  return romdp::digamma(row[i]) - romdp::digamma(total);
}

// Stick k takes Beta(1 + c_k, alpha + sum_{j>k} c_j); the last one takes the remainder.
inline std::vector<double> elog_sticks(const std::vector<double>& c, double alpha) {
  std::vector<double> out(c.size());
  double rest = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    double tail = 0.0;
    for (std::size_t j = k + 1; j < c.size(); ++j) tail += c[j];
    const double a = 1.0 + c[k], b = alpha + tail;
    out[k] = k + 1 == c.size() ? rest : rest + romdp::digamma(a) - romdp::digamma(a + b);
    rest += romdp::digamma(b) - romdp::digamma(a + b);
  }
  return out;
}

inline double lse(const std::vector<double>& v) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Uniform-random actions in the default environment.
inline romdp::WindowData random_stream(std::size_t steps, romdp::NoiseModel noise, std::uint64_t seed,
                                       std::vector<std::size_t>* cores = nullptr) {
  romdp::RomdpEnv env(romdp::default_core_mdp(), noise, {}, seed, seed + 1000);
  std::mt19937_64 rng(seed + 2000);
  romdp::WindowData w;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t o = env.observation();
    if (cores) cores->push_back(env.core());
    const std::size_t a = rng() % 2;
    w.push(o, a, env.step(a).reward);
  }
  return w;
}

// Random observations, actions and rewards over `n_obs` symbols.
inline romdp::WindowData noise_window(std::size_t steps, std::size_t n_obs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  romdp::WindowData w;
  for (std::size_t t = 0; t < steps; ++t) w.push(rng() % n_obs, rng() % 2, rng() % 2);
  return w;
}

}  // namespace testing_support
