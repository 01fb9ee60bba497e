#pragma once

// Conjugate-categorical primitives: digamma, Dirichlet concentration tables,
// truncated stick-breaking weights, Dirichlet sampling and log-normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace romdp {

using Rng = std::mt19937_64;

/// Raised when a distribution has no finite mass left to normalize.
class degenerate_distribution : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Upward recurrence to x >= 10, then the asymptotic series.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("digamma: argument must be positive and finite");
  }
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number coefficients B_2k / (2k).
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// E[ln p_i] for p ~ Dir(row): psi(row_i) - psi(sum row). Writes into `out`.
inline void expected_log_dirichlet(std::span<const double> row, std::span<double> out) {
  if (row.empty()) throw std::domain_error("expected_log_dirichlet: empty row");
  double total = 0.0;
  for (double v : row) total += v;
  const double psi_total = digamma(total);
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = digamma(row[i]) - psi_total;
}

inline std::vector<double> expected_log_dirichlet(std::span<const double> row) {
  std::vector<double> out(row.size());
  expected_log_dirichlet(row, out);
  return out;
}

/// Softmax of log scores, shifted by the maximum.
inline std::vector<double> normalize_log(std::span<const double> v) {
  double peak = kNegInf;
  for (double x : v) {
    if (std::isnan(x)) throw std::domain_error("normalize_log: NaN score");
    peak = std::max(peak, x);
  }
  if (peak == kNegInf) throw degenerate_distribution("normalize_log: every entry is -inf");
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

/// Allocation-free softmax for hot loops; `in` must hold a finite entry.
inline void softmax_into(std::span<const double> in, std::span<double> out) {
  double peak = kNegInf;
  for (double x : in) peak = std::max(peak, x);
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) total += out[i] = std::exp(in[i] - peak);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
}

inline double log_sum_exp(std::span<const double> v) {
  double peak = kNegInf;
  for (double x : v) peak = std::max(peak, x);
  if (peak == kNegInf) return kNegInf;
  double total = 0.0;
  for (double x : v) total += std::exp(x - peak);
  return peak + std::log(total);
}

/// Natural log of a Gamma(shape, 1) draw. Shapes below one use the
/// Gamma(a) = Gamma(a + 1) * U^(1/a) boost so tiny shapes stay representable.
inline double sample_log_gamma(double shape, Rng& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    return std::log(gamma(rng));
  }
  std::gamma_distribution<double> gamma(shape + 1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  while (u <= 0.0) u = unit(rng);
  return std::log(gamma(rng)) + std::log(u) / shape;
}

/// One exact draw from Dir(row); entries are non-negative and sum to one.
inline void sample_dirichlet(std::span<const double> row, Rng& rng, std::span<double> out) {
  if (row.empty()) throw std::domain_error("sample_dirichlet: empty row");
  double peak = kNegInf;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!(row[i] > 0.0)) throw std::domain_error("sample_dirichlet: concentrations must be positive");
    out[i] = sample_log_gamma(row[i], rng);
    peak = std::max(peak, out[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(out[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < row.size(); ++i) out[i] /= total;
}

inline std::vector<double> sample_categorical_from_dirichlet(std::span<const double> row, Rng& rng) {
  std::vector<double> out(row.size());
  sample_dirichlet(row, rng, out);
  return out;
}

/// Index drawn from an unnormalized non-negative weight vector.
inline std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw degenerate_distribution("sample_index: no positive weight");
  std::uniform_real_distribution<double> unit(0.0, total);
  double u = unit(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

/// KL(Dir(q) || Dir(p)).
inline double kl_dirichlet(std::span<const double> q, std::span<const double> p) {
  double q0 = 0.0, p0 = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q0 += q[i];
    p0 += p[i];
  }
  const double psi_q0 = digamma(q0);
  double kl = std::lgamma(q0) - std::lgamma(p0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == p[i]) continue;  // exact zero term
    kl += std::lgamma(p[i]) - std::lgamma(q[i]) + (q[i] - p[i]) * (digamma(q[i]) - psi_q0);
  }
  return kl;
}

/// KL(Beta(a1, b1) || Beta(a0, b0)).
inline double kl_beta(double a1, double b1, double a0, double b0) {
  if (a1 == a0 && b1 == b0) return 0.0;
  const double psi_sum = digamma(a1 + b1);
  return std::lgamma(a1 + b1) - std::lgamma(a1) - std::lgamma(b1) - std::lgamma(a0 + b0) +
         std::lgamma(a0) + std::lgamma(b0) + (a1 - a0) * (digamma(a1) - psi_sum) +
         (b1 - b0) * (digamma(b1) - psi_sum);
}

/// Conditional Dirichlet concentration table. Axis 0 is the outcome axis;
/// the remaining axes index conditioning variables (last axis fastest).
/// Each conditional row is stored contiguously.
class PosteriorTable {
 public:
  PosteriorTable() = default;

  PosteriorTable(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_[0] < 2) {
      throw std::invalid_argument("PosteriorTable: outcome axis needs at least two entries");
    }
    if (!(fill > 0.0)) throw std::invalid_argument("PosteriorTable: entries must be positive");
    rows_ = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) rows_ *= shape_[i];
    values_.assign(rows_ * shape_[0], fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t outcomes() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t rows() const { return rows_; }
  std::size_t size() const { return values_.size(); }

  std::size_t row_index(std::span<const std::size_t> cond) const {
    if (cond.size() + 1 != shape_.size()) throw std::invalid_argument("PosteriorTable: wrong index rank");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < cond.size(); ++i) {
      if (cond[i] >= shape_[i + 1]) throw std::out_of_range("PosteriorTable: index out of range");
      idx = idx * shape_[i + 1] + cond[i];
    }
    return idx;
  }

  std::span<double> row(std::size_t r) { return {values_.data() + r * outcomes(), outcomes()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * outcomes(), outcomes()}; }

  double& at(std::size_t outcome, std::size_t r) { return values_[r * outcomes() + outcome]; }
  double at(std::size_t outcome, std::size_t r) const { return values_[r * outcomes() + outcome]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_positive() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v > 0.0; });
  }

  friend bool operator==(const PosteriorTable&, const PosteriorTable&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::size_t rows_ = 0;
  std::vector<double> values_;
};

/// E[ln SBP(k)] for every component, taken in the order given (the caller
/// owns the ordering). The final component absorbs the remaining stick.
inline void expected_log_sbp_ordered(std::span<const double> counts, double alpha, std::span<double> out) {
  const std::size_t n = counts.size();
  if (n == 0) return;
  double tail = 0.0;
  for (double c : counts) tail += c;
  double prefix = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    tail -= counts[k];
    if (k + 1 == n) {
      out[k] = prefix;
      break;
    }
    const double on = 1.0 + counts[k];
    const double off = alpha + std::max(tail, 0.0);
    const double psi_both = digamma(on + off);
    out[k] = prefix + digamma(on) - psi_both;
    prefix += digamma(off) - psi_both;
  }
}

/// Beta stick parameters (1 + c_k, alpha + sum_{j>k} c_j) for each non-final component.
inline std::vector<std::pair<double, double>> stick_betas(std::span<const double> counts, double alpha) {
  std::vector<std::pair<double, double>> out;
  if (counts.empty()) return out;
  double tail = 0.0;
  for (double c : counts) tail += c;
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    tail -= counts[k];
    out.emplace_back(1.0 + counts[k], alpha + std::max(tail, 0.0));
  }
  return out;
}

/// Truncated stick-breaking posterior over K components.
struct StickWeights {
  std::vector<double> counts;
  double alpha = 1.0;

  StickWeights() = default;
  StickWeights(std::size_t truncation, double concentration, double fill = 0.0)
      : counts(truncation, fill), alpha(concentration) {
    if (truncation == 0) throw std::invalid_argument("StickWeights: truncation must be positive");
    if (!(concentration > 0.0)) throw std::invalid_argument("StickWeights: alpha must be positive");
  }

  std::size_t truncation() const { return counts.size(); }

  /// Component ids ordered by descending count (stable on ties).
  std::vector<std::size_t> sorted_order() const {
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    return order;
  }

  /// E[ln SBP] for every component id, evaluated in descending-count order.
  std::vector<double> expected_logs() const {
    const auto order = sorted_order();
    std::vector<double> sorted(counts.size()), logs(counts.size()), out(counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = counts[order[i]];
    expected_log_sbp_ordered(sorted, alpha, logs);
    for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = logs[i];
    return out;
  }

  friend bool operator==(const StickWeights&, const StickWeights&) = default;
};

/// E[ln SBP(k)] for one component id (0-based).
inline double expected_log_sbp(const StickWeights& sticks, std::size_t k) {
  if (k >= sticks.truncation()) throw std::domain_error("expected_log_sbp: component out of range");
  return sticks.expected_logs()[k];
}

/// KL between two stick posteriors laid out in the same order.
inline double kl_sticks(std::span<const double> post, std::span<const double> prior, double alpha) {
  const auto q = stick_betas(post, alpha);
  const auto p = stick_betas(prior, alpha);
  double kl = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) kl += kl_beta(q[k].first, q[k].second, p[k].first, p[k].second);
  return kl;
}

/// Applies `perm` (new position -> old id) to a vector.
template <typename T>
std::vector<T> permuted(const std::vector<T>& v, std::span<const std::size_t> perm) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = v[perm[i]];
  return out;
}

}  // namespace romdp
