#pragma once

// Four-core ROMDP test environment: a small MDP with binary rewards whose
// observations carry extra noise bits, plus nonstationary rule schedules.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "romdp/planner.hpp"
#include "romdp/prob.hpp"

namespace romdp {

inline constexpr std::size_t kCores = 4;

/// Core dynamics: trans[(c * A + a) * 4 + next] and P(r = 1 | c).
struct CoreMdp {
  std::array<double, kCores * kActions * kCores> trans{};
  std::array<double, kCores> reward_prob{};
  std::array<double, kRewards> reward_values{0.0, 1.0};

  double p(std::size_t next, std::size_t core, std::size_t action) const {
    return trans[(core * kActions + action) * kCores + next];
  }
  double& p(std::size_t next, std::size_t core, std::size_t action) {
    return trans[(core * kActions + action) * kCores + next];
  }

  bool valid(double tol = 1e-12) const {
    for (std::size_t c = 0; c < kCores; ++c) {
      for (std::size_t a = 0; a < kActions; ++a) {
        double total = 0.0;
        for (std::size_t n = 0; n < kCores; ++n) {
          if (p(n, c, a) < 0.0) return false;
          total += p(n, c, a);
        }
        if (std::abs(total - 1.0) > tol) return false;
      }
      if (reward_prob[c] < 0.0 || reward_prob[c] > 1.0) return false;
    }
    return true;
  }

  friend bool operator==(const CoreMdp&, const CoreMdp&) = default;
};

/// M1 with reward rule N1.
inline CoreMdp default_core_mdp() {
  CoreMdp m;
  // a0
  m.p(3, 0, 0) = 1.0;
  m.p(2, 1, 0) = 1.0;
  m.p(2, 2, 0) = 0.9;
  m.p(3, 2, 0) = 0.1;
  m.p(3, 3, 0) = 0.9;
  m.p(2, 3, 0) = 0.1;
  // a1
  m.p(1, 0, 1) = 1.0;
  m.p(0, 1, 1) = 1.0;
  m.p(1, 2, 1) = 1.0;
  m.p(2, 3, 1) = 1.0;
  m.reward_prob = {0.1, 0.9, 0.1, 0.9};
  return m;
}

/// Complement of P(r = 1 | c) per core.
inline std::array<double, kCores> swapped_reward_rule(const std::array<double, kCores>& reward_prob) {
  std::array<double, kCores> out{};
  for (std::size_t c = 0; c < kCores; ++c) out[c] = 1.0 - reward_prob[c];
  return out;
}

/// Exchanges the two action slices of the transition table.
inline CoreMdp swapped_transition_rule(const CoreMdp& m) {
  CoreMdp out = m;
  for (std::size_t c = 0; c < kCores; ++c) {
    for (std::size_t n = 0; n < kCores; ++n) {
      out.p(n, c, 0) = m.p(n, c, 1);
      out.p(n, c, 1) = m.p(n, c, 0);
    }
  }
  return out;
}

inline SampledModel to_sampled_model(const CoreMdp& m) {
  SampledModel model(kCores);
  for (std::size_t c = 0; c < kCores; ++c) {
    for (std::size_t a = 0; a < kActions; ++a) {
      for (std::size_t n = 0; n < kCores; ++n) model.p(n, c, a) = m.p(n, c, a);
    }
    model.reward[c * kRewards + 0] = 1.0 - m.reward_prob[c];
    model.reward[c * kRewards + 1] = m.reward_prob[c];
  }
  model.reward_values = {m.reward_values[0], m.reward_values[1]};
  return model;
}

/// Optimal actions per core as a bitmask (bit a set when action a is optimal).
/// Actions within `tie_tol` of the best value are all optimal.
struct OraclePolicy {
  std::array<std::uint8_t, kCores> optimal{};
  std::array<std::array<double, kActions>, kCores> q{};

  bool is_optimal(std::size_t core, std::size_t action) const { return (optimal[core] >> action) & 1U; }
  /// Lowest-index optimal action.
  std::size_t action(std::size_t core) const { return is_optimal(core, 0) ? 0 : 1; }
  bool tied(std::size_t core) const { return optimal[core] == 3; }
};

inline OraclePolicy oracle_policy(const CoreMdp& m, double gamma, double tie_tol = 1e-9) {
  const QTable q = value_iteration(to_sampled_model(m), gamma, 1e-12, 1000000);
  OraclePolicy out;
  for (std::size_t c = 0; c < kCores; ++c) {
    const double best = q.best(c);
    for (std::size_t a = 0; a < kActions; ++a) {
      out.q[c][a] = q(c, a);
      if (q(c, a) >= best - tie_tol) out.optimal[c] |= static_cast<std::uint8_t>(1U << a);
    }
  }
  return out;
}

enum class NoiseKind { self_transition, action_dependent, reward_dependent };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::self_transition: return "self_transition";
    case NoiseKind::action_dependent: return "action_dependent";
    case NoiseKind::reward_dependent: return "reward_dependent";
  }
  return "unknown";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "self_transition") return NoiseKind::self_transition;
  if (s == "action_dependent") return NoiseKind::action_dependent;
  if (s == "reward_dependent") return NoiseKind::reward_dependent;
  throw std::invalid_argument("unknown noise type: " + std::string(s));
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::self_transition;
  double e0 = 0.1;
  double e1 = 0.1;
  std::size_t bits = 4;

  /// Flip probability for one bit given its value, the action and the reward.
  double flip_prob(bool bit, std::size_t action, std::size_t reward) const {
    switch (kind) {
      case NoiseKind::self_transition: return bit ? e1 : e0;
      case NoiseKind::action_dependent: return action == 0 ? e0 : e1;
      case NoiseKind::reward_dependent: return reward == 0 ? e0 : e1;
    }
    return 0.0;
  }

  static NoiseModel defaults(NoiseKind kind, std::size_t bits = 4) {
    if (kind == NoiseKind::self_transition) return {kind, 0.1, 0.1, bits};
    return {kind, 0.1, 0.9, bits};
  }
};

inline std::size_t observation_count(std::size_t bits) { return kCores << bits; }

inline std::size_t encode_obs(std::size_t core, const std::vector<bool>& bits) {
  if (core >= kCores) throw std::domain_error("encode_obs: core out of range");
  if (bits.size() >= 8 * sizeof(std::size_t) - 3) throw std::domain_error("encode_obs: too many bits");
  std::size_t idx = core << bits.size();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) idx |= std::size_t{1} << i;
  }
  return idx;
}

struct DecodedObs {
  std::size_t core = 0;
  std::vector<bool> bits;
  friend bool operator==(const DecodedObs&, const DecodedObs&) = default;
};

inline DecodedObs decode_obs(std::size_t index, std::size_t m) {
  if (index >= observation_count(m)) throw std::domain_error("decode_obs: index out of range");
  DecodedObs out{index >> m, std::vector<bool>(m)};
  for (std::size_t i = 0; i < m; ++i) out.bits[i] = (index >> i) & 1U;
  return out;
}

inline std::size_t core_of(std::size_t obs, std::size_t m) { return obs >> m; }

enum class RuleChange { swap_reward_rule, swap_transition_rule };

struct ScheduleEvent {
  std::size_t at_trial = 0;
  RuleChange change = RuleChange::swap_reward_rule;
  friend bool operator==(const ScheduleEvent&, const ScheduleEvent&) = default;
};

enum class ScheduleKind { none, reward_switch, transition_switch };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::none: return "none";
    case ScheduleKind::reward_switch: return "reward_switch";
    case ScheduleKind::transition_switch: return "transition_switch";
  }
  return "unknown";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "none") return ScheduleKind::none;
  if (s == "reward_switch") return ScheduleKind::reward_switch;
  if (s == "transition_switch") return ScheduleKind::transition_switch;
  throw std::invalid_argument("unknown schedule: " + std::string(s));
}

/// Rule swaps at every multiple of `period` strictly inside (0, total).
inline std::vector<ScheduleEvent> make_schedule(ScheduleKind kind, std::size_t period, std::size_t total) {
  std::vector<ScheduleEvent> out;
  if (kind == ScheduleKind::none) return out;
  if (period == 0) throw std::invalid_argument("make_schedule: period must be positive");
  const auto change = kind == ScheduleKind::reward_switch ? RuleChange::swap_reward_rule : RuleChange::swap_transition_rule;
  for (std::size_t t = period; t < total; t += period) out.push_back({t, change});
  return out;
}

/// Which variant of each rule is active (false = M1 / N1).
struct RulePair {
  bool transition_swapped = false;
  bool reward_swapped = false;
  friend bool operator==(const RulePair&, const RulePair&) = default;
};

struct StepResult {
  std::size_t observation = 0;
  std::size_t reward = 0;
};

/// Cores and rewards draw from `core_rng`; noise bits from `noise_rng`, so
/// the noise never perturbs the core/reward stream.
class RomdpEnv {
 public:
  RomdpEnv(CoreMdp base, NoiseModel noise, std::vector<ScheduleEvent> schedule, std::uint64_t core_seed,
           std::uint64_t noise_seed)
      : base_(base),
        active_(base),
        noise_(noise),
        schedule_(std::move(schedule)),
        bits_(noise.bits, false),
        core_rng_(core_seed),
        noise_rng_(noise_seed) {
    if (!base.valid()) throw std::invalid_argument("RomdpEnv: invalid core MDP");
    if (!(noise.e0 >= 0.0 && noise.e0 <= 1.0 && noise.e1 >= 0.0 && noise.e1 <= 1.0)) {
      throw std::invalid_argument("RomdpEnv: noise probabilities must lie in [0, 1]");
    }
    for (std::size_t i = 1; i < schedule_.size(); ++i) {
      if (schedule_[i].at_trial <= schedule_[i - 1].at_trial) {
        throw std::invalid_argument("RomdpEnv: schedule must be strictly increasing");
      }
    }
  }

  std::size_t observation() const { return encode_obs(core_, bits_); }
  std::size_t core() const { return core_; }
  const std::vector<bool>& bits() const { return bits_; }
  std::size_t trial() const { return trial_; }
  const CoreMdp& active_mdp() const { return active_; }
  RulePair rules() const { return rules_; }
  const NoiseModel& noise() const { return noise_; }
  std::size_t observations() const { return observation_count(noise_.bits); }

  StepResult step(std::size_t action) {
    if (action >= kActions) throw std::invalid_argument("RomdpEnv::step: invalid action");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t reward = unif(core_rng_) < active_.reward_prob[core_] ? 1 : 0;
    const double u = unif(core_rng_);
    double acc = 0.0;
    std::size_t next = kCores - 1;
    for (std::size_t n = 0; n < kCores; ++n) {
      acc += active_.p(n, core_, action);
      if (u < acc) {
        next = n;
        break;
      }
    }
    while (active_.p(next, core_, action) == 0.0) --next;  // guards rounding at the top end
    core_ = next;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      if (unif(noise_rng_) < noise_.flip_prob(bits_[i], action, reward)) bits_[i] = !bits_[i];
    }
    ++trial_;
    while (next_event_ < schedule_.size() && schedule_[next_event_].at_trial == trial_) {
      apply(schedule_[next_event_].change);
      ++next_event_;
    }
    return {observation(), reward};
  }

  /// Forces the core (used by frequency tests).
  void set_core(std::size_t c) {
    if (c >= kCores) throw std::domain_error("set_core: core out of range");
    core_ = c;
  }

 private:
  void apply(RuleChange change) {
    if (change == RuleChange::swap_reward_rule) {
      rules_.reward_swapped = !rules_.reward_swapped;
    } else {
      rules_.transition_swapped = !rules_.transition_swapped;
    }
    active_ = rules_.transition_swapped ? swapped_transition_rule(base_) : base_;
    active_.reward_prob = rules_.reward_swapped ? swapped_reward_rule(base_.reward_prob) : base_.reward_prob;
  }

  CoreMdp base_;
  CoreMdp active_;
  NoiseModel noise_;
  std::vector<ScheduleEvent> schedule_;
  std::size_t next_event_ = 0;
  RulePair rules_;
  std::size_t core_ = 0;
  std::vector<bool> bits_;
  std::size_t trial_ = 0;
  Rng core_rng_;
  Rng noise_rng_;
};

/// CoreMdp for a given rule pair built from `base`.
inline CoreMdp rules_mdp(const CoreMdp& base, RulePair rules) {
  CoreMdp m = rules.transition_swapped ? swapped_transition_rule(base) : base;
  m.reward_prob = rules.reward_swapped ? swapped_reward_rule(base.reward_prob) : base.reward_prob;
  return m;
}

}  // namespace romdp
