#pragma once

// Experiment configuration in a flat `key = value` text format. Blank lines
// and `#` comments are ignored; unknown keys and malformed values are errors
// that name the offending field.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "romdp/env.hpp"

namespace romdp {

enum class AgentKind { goei, cei };

inline std::string_view to_string(AgentKind a) { return a == AgentKind::goei ? "goei" : "cei"; }

inline AgentKind parse_agent(std::string_view s) {
  if (s == "goei") return AgentKind::goei;
  if (s == "cei") return AgentKind::cei;
  throw std::invalid_argument("unknown agent: " + std::string(s));
}

/// How the state count is measured after each window.
enum class ActiveMeasure { window, retained };

inline std::string_view to_string(ActiveMeasure m) { return m == ActiveMeasure::window ? "window" : "retained"; }

class config_error : public std::invalid_argument {
 public:
  config_error(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  AgentKind agent = AgentKind::goei;
  NoiseKind noise_type = NoiseKind::self_transition;
  std::size_t noise_bits = 4;
  std::optional<double> noise_e0;
  std::optional<double> noise_e1;
  ScheduleKind schedule = ScheduleKind::reward_switch;
  std::size_t period = 5000;
  std::size_t total_trials = 20000;
  std::size_t window = 500;
  double rho = 0.95;
  double gamma = 0.95;

  double prior_observation = 0.1;
  double prior_cluster = 1e-3;
  double alpha_cluster = 1.0;
  double prior_action_reward = 1.0;
  double alpha_action_reward = 1.0;
  double prior_transition = 0.1;
  double prior_reward = 0.1;
  double alpha_transition = 1.0;
  double alpha_reward = 1.0;
  std::size_t state_truncation = 70;
  std::size_t module_truncation = 10;

  std::size_t max_sweeps = 20;
  double fe_tol = 1e-4;
  std::size_t aux_sweeps = 5;
  std::size_t init_states = 8;
  std::size_t spare_states = 3;
  double table_retention = 1.0;

  double vi_tol = 1e-6;
  std::size_t vi_max_iter = 10000;

  double activity_threshold = 1.0;
  ActiveMeasure active_measure = ActiveMeasure::window;

  std::vector<std::uint64_t> seeds{1};
  std::string output = "out";
  std::size_t threads = 0;

  NoiseModel noise_model() const {
    NoiseModel m = NoiseModel::defaults(noise_type, noise_bits);
    if (noise_e0) m.e0 = *noise_e0;
    if (noise_e1) m.e1 = *noise_e1;
    return m;
  }

  std::size_t observations() const { return observation_count(noise_bits); }

  /// Throws config_error naming the first violated field.
  void validate() const {
    if (window == 0) throw config_error("window", "must be positive");
    if (period == 0) throw config_error("period", "must be positive");
    if (period % window != 0) throw config_error("period", "must be a multiple of window");
    if (total_trials == 0 || total_trials % period != 0) {
      throw config_error("total_trials", "must be a positive multiple of period");
    }
    if (noise_bits > 10) throw config_error("noise_bits", "must be at most 10");
    auto prob = [](const char* f, const std::optional<double>& v) {
      if (v && !(*v >= 0.0 && *v <= 1.0)) throw config_error(f, "must lie in [0, 1]");
    };
    prob("noise_e0", noise_e0);
    prob("noise_e1", noise_e1);
    if (!(rho >= 0.0 && rho <= 1.0)) throw config_error("rho", "must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw config_error("gamma", "must lie in [0, 1)");
    auto positive = [](const char* f, double v) {
      if (!(v > 0.0) || !std::isfinite(v)) throw config_error(f, "must be positive");
    };
    positive("prior_observation", prior_observation);
    positive("prior_cluster", prior_cluster);
    positive("alpha_cluster", alpha_cluster);
    positive("prior_action_reward", prior_action_reward);
    positive("alpha_action_reward", alpha_action_reward);
    positive("prior_transition", prior_transition);
    positive("prior_reward", prior_reward);
    positive("alpha_transition", alpha_transition);
    positive("alpha_reward", alpha_reward);
    positive("fe_tol", fe_tol);
    positive("vi_tol", vi_tol);
    positive("activity_threshold", activity_threshold);
    if (state_truncation < 2) throw config_error("state_truncation", "must be at least 2");
    if (module_truncation < 1) throw config_error("module_truncation", "must be at least 1");
    if (max_sweeps == 0) throw config_error("max_sweeps", "must be positive");
    if (vi_max_iter == 0) throw config_error("vi_max_iter", "must be positive");
    if (init_states == 0 || init_states > state_truncation) {
      throw config_error("init_states", "must lie in [1, state_truncation]");
    }
    if (!(table_retention > 0.0 && table_retention <= 1.0)) throw config_error("table_retention", "must lie in (0, 1]");
    if (seeds.empty()) throw config_error("seeds", "must list at least one seed");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw config_error(field, "expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& field, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw config_error(field, "expected a non-negative integer, got '" + v + "'");
  return out;
}

}  // namespace detail

/// Parses "a,b,c" into seeds.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& field, const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) throw config_error(field, "empty seed entry");
    const auto dash = item.find('-');
    if (dash != std::string::npos) {
      const auto lo = detail::parse_uint(field, detail::trim(item.substr(0, dash)));
      const auto hi = detail::parse_uint(field, detail::trim(item.substr(dash + 1)));
      if (hi < lo) throw config_error(field, "descending seed range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      out.push_back(detail::parse_uint(field, item));
    }
  }
  if (out.empty()) throw config_error(field, "must list at least one seed");
  return out;
}

/// Applies one key/value pair; throws config_error for unknown keys or bad values.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using Setter = std::function<void(const std::string&)>;
  auto dbl = [&](double& dst) -> Setter { return [&, key](const std::string& v) { dst = detail::parse_double(key, v); }; };
  auto uint = [&](std::size_t& dst) -> Setter {
    return [&, key](const std::string& v) { dst = static_cast<std::size_t>(detail::parse_uint(key, v)); };
  };
  auto wrap = [&](auto fn) -> Setter {
    return [fn, key](const std::string& v) {
      try {
        fn(v);
      } catch (const config_error&) {
        throw;
      } catch (const std::exception& e) {
        throw config_error(key, e.what());
      }
    };
  };
  const std::map<std::string, Setter> setters{
      {"agent", wrap([&](const std::string& v) { c.agent = parse_agent(v); })},
      {"noise_type", wrap([&](const std::string& v) { c.noise_type = parse_noise_kind(v); })},
      {"noise_bits", uint(c.noise_bits)},
      {"noise_e0", [&](const std::string& v) { c.noise_e0 = detail::parse_double("noise_e0", v); }},
      {"noise_e1", [&](const std::string& v) { c.noise_e1 = detail::parse_double("noise_e1", v); }},
      {"schedule", wrap([&](const std::string& v) { c.schedule = parse_schedule_kind(v); })},
      {"period", uint(c.period)},
      {"total_trials", uint(c.total_trials)},
      {"window", uint(c.window)},
      {"rho", dbl(c.rho)},
      {"gamma", dbl(c.gamma)},
      {"prior_observation", dbl(c.prior_observation)},
      {"prior_cluster", dbl(c.prior_cluster)},
      {"alpha_cluster", dbl(c.alpha_cluster)},
      {"prior_action_reward", dbl(c.prior_action_reward)},
      {"alpha_action_reward", dbl(c.alpha_action_reward)},
      {"prior_transition", dbl(c.prior_transition)},
      {"prior_reward", dbl(c.prior_reward)},
      {"alpha_transition", dbl(c.alpha_transition)},
      {"alpha_reward", dbl(c.alpha_reward)},
      {"state_truncation", uint(c.state_truncation)},
      {"module_truncation", uint(c.module_truncation)},
      {"max_sweeps", uint(c.max_sweeps)},
      {"fe_tol", dbl(c.fe_tol)},
      {"aux_sweeps", uint(c.aux_sweeps)},
      {"init_states", uint(c.init_states)},
      {"spare_states", uint(c.spare_states)},
      {"table_retention", dbl(c.table_retention)},
      {"vi_tol", dbl(c.vi_tol)},
      {"vi_max_iter", uint(c.vi_max_iter)},
      {"activity_threshold", dbl(c.activity_threshold)},
      {"active_measure", wrap([&](const std::string& v) {
         if (v == "window") {
           c.active_measure = ActiveMeasure::window;
         } else if (v == "retained") {
           c.active_measure = ActiveMeasure::retained;
         } else {
           throw std::invalid_argument("expected 'window' or 'retained'");
         }
       })},
      {"seeds", [&](const std::string& v) { c.seeds = parse_seed_list("seeds", v); }},
      {"output", [&](const std::string& v) { c.output = v; }},
      {"threads", uint(c.threads)},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw config_error(key, "unknown key");
  it->second(value);
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw config_error(origin + ":" + std::to_string(lineno), "expected 'key = value'");
    }
    const auto key = detail::trim(text.substr(0, eq));
    const auto value = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw config_error(origin + ":" + std::to_string(lineno), "missing key");
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
      throw config_error(key, "duplicate key (first set on line " + std::to_string(it->second) + ")");
    }
    set_config_value(c, key, value);
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in, path);
}

/// Canonical `key = value` rendering of every field (used for manifests).
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  const auto noise = c.noise_model();
  return {
      {"agent", std::string(to_string(c.agent))},
      {"noise_type", std::string(to_string(c.noise_type))},
      {"noise_bits", std::to_string(c.noise_bits)},
      {"noise_e0", num(noise.e0)},
      {"noise_e1", num(noise.e1)},
      {"schedule", std::string(to_string(c.schedule))},
      {"period", std::to_string(c.period)},
      {"total_trials", std::to_string(c.total_trials)},
      {"window", std::to_string(c.window)},
      {"rho", num(c.rho)},
      {"gamma", num(c.gamma)},
      {"prior_observation", num(c.prior_observation)},
      {"prior_cluster", num(c.prior_cluster)},
      {"alpha_cluster", num(c.alpha_cluster)},
      {"prior_action_reward", num(c.prior_action_reward)},
      {"alpha_action_reward", num(c.alpha_action_reward)},
      {"prior_transition", num(c.prior_transition)},
      {"prior_reward", num(c.prior_reward)},
      {"alpha_transition", num(c.alpha_transition)},
      {"alpha_reward", num(c.alpha_reward)},
      {"state_truncation", std::to_string(c.state_truncation)},
      {"module_truncation", std::to_string(c.module_truncation)},
      {"max_sweeps", std::to_string(c.max_sweeps)},
      {"fe_tol", num(c.fe_tol)},
      {"aux_sweeps", std::to_string(c.aux_sweeps)},
      {"init_states", std::to_string(c.init_states)},
      {"spare_states", std::to_string(c.spare_states)},
      {"table_retention", num(c.table_retention)},
      {"vi_tol", num(c.vi_tol)},
      {"vi_max_iter", std::to_string(c.vi_max_iter)},
      {"activity_threshold", num(c.activity_threshold)},
      {"active_measure", std::string(to_string(c.active_measure))},
      {"seeds", seeds},
  };
}

}  // namespace romdp
