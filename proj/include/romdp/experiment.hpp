#pragma once

// Online experiment loop: act with ATS on the current belief, step the
// environment, and re-run window inference every T trials. Seeds run
// independently (optionally on worker threads) and are reduced in seed order.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "romdp/cei.hpp"
#include "romdp/config.hpp"
#include "romdp/env.hpp"
#include "romdp/goei.hpp"
#include "romdp/metrics.hpp"
#include "romdp/planner.hpp"
#include "romdp/window.hpp"

namespace romdp {

struct WindowRow {
  std::size_t trial = 0;  // trials completed at the end of the window
  double optimal_rate = 0.0;
  double n_states = 0.0;
  double h_o_given_s = 0.0;
  double h_c_given_s = 0.0;
  double mean_reward = 0.0;
};

struct SeedTrace {
  std::uint64_t seed = 0;
  std::vector<WindowRow> rows;
};

struct RunSummary {
  ExperimentConfig config;
  std::vector<SeedTrace> traces;

  /// Per-window average over seeds.
  std::vector<WindowRow> mean() const {
    if (traces.empty()) return {};
    std::vector<WindowRow> out(traces.front().rows.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      WindowRow& m = out[i];
      m.trial = traces.front().rows[i].trial;
      for (const auto& tr : traces) {
        const auto& r = tr.rows.at(i);
        m.optimal_rate += r.optimal_rate;
        m.n_states += r.n_states;
        m.h_o_given_s += r.h_o_given_s;
        m.h_c_given_s += r.h_c_given_s;
        m.mean_reward += r.mean_reward;
      }
      const double k = static_cast<double>(traces.size());
      m.optimal_rate /= k;
      m.n_states /= k;
      m.h_o_given_s /= k;
      m.h_c_given_s /= k;
      m.mean_reward /= k;
    }
    return out;
  }
};

/// Independent stream for (seed, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct WindowOutcome {
  const ChainPosterior* posterior = nullptr;
  std::size_t active = 0;
};

namespace detail {

inline AtsOptions ats_options(const ExperimentConfig& c) { return {c.gamma, c.vi_tol, c.vi_max_iter}; }

inline std::size_t count_active(const std::vector<double>& mass, double threshold) {
  return active_states(mass, threshold).size();
}

/// Belief vectors cached per observation for the current window.
struct BeliefCache {
  std::vector<std::vector<double>> rows;
  void reset(std::size_t n_obs) { rows.assign(n_obs, {}); }
};

}  // namespace detail

class GoeiAgent {
 public:
  GoeiAgent(const ExperimentConfig& c, Rng& rng) : cfg_(c) {
    GoeiPriors p;
    p.cluster = c.prior_cluster;
    p.alpha_cluster = c.alpha_cluster;
    p.action_reward = c.prior_action_reward;
    p.alpha_action_reward = c.alpha_action_reward;
    p.truncation = c.state_truncation;
    p.modules = c.module_truncation;
    p.aux = {c.prior_transition, c.prior_reward, c.alpha_transition, c.alpha_reward};
    model_ = GoeiModel::fresh(c.observations(), p, c.rho);
    seed_.resize(c.observations());
    std::uniform_int_distribution<std::size_t> pick(0, c.init_states - 1);
    for (auto& s : seed_) s = pick(rng);
    states_ = std::min(c.state_truncation, c.init_states + c.spare_states);
    refresh();
  }

  std::size_t act(std::size_t o, Rng& rng) {
    auto& b = cache_.rows[o];
    if (b.empty()) b = goei_observation_belief(model_, o, states_);
    return ats_select_action(b, model_.aux, trans_w_, reward_w_, detail::ats_options(cfg_), rng, &warm_);
  }

  WindowOutcome end_window(const WindowData& w) {
    SweepOptions opt{cfg_.max_sweeps, cfg_.fe_tol, false, 1e-6};
    last_ = goei_infer_window(model_, w, states_, opt, cfg_.aux_sweeps, first_ ? &seed_ : nullptr);
    first_ = false;
    model_ = last_.model;
    const auto mass =
        cfg_.active_measure == ActiveMeasure::window ? state_mass(last_.posterior.chain) : goei_retained_mass(model_);
    WindowOutcome out{&last_.posterior.chain, detail::count_active(mass, cfg_.activity_threshold)};
    states_ = goei_prepare_window(model_, cfg_.table_retention, cfg_.spare_states).states;
    refresh();
    return out;
  }

  const GoeiModel& model() const { return model_; }
  std::size_t planning_states() const { return states_; }

 private:
  void refresh() {
    cache_.reset(model_.observations);
    warm_ = QTable();
    trans_w_ = module_weights(model_.aux.transition_sticks);
    reward_w_ = module_weights(model_.aux.reward_sticks);
  }

  ExperimentConfig cfg_;
  GoeiModel model_;
  GoeiWindowResult last_;
  std::vector<std::size_t> seed_;
  bool first_ = true;
  std::size_t states_ = 0;
  detail::BeliefCache cache_;
  QTable warm_;
  std::vector<double> trans_w_, reward_w_;
};

class CeiAgent {
 public:
  CeiAgent(const ExperimentConfig& c, Rng& rng) : cfg_(c) {
    CeiPriors p;
    p.observation = c.prior_observation;
    p.rules = {c.prior_transition, c.prior_reward, c.alpha_transition, c.alpha_reward};
    p.modules = c.module_truncation;
    model_ = CeiModel::fresh(c.observations(), p);
    seed_.resize(c.observations());
    std::iota(seed_.begin(), seed_.end(), std::size_t{0});
    std::shuffle(seed_.begin(), seed_.end(), rng);
    refresh();
  }

  std::size_t act(std::size_t o, Rng& rng) {
    auto& b = cache_.rows[o];
    if (b.empty()) b = cei_observation_belief(model_, o);
    return ats_select_action(b, model_.rules, trans_w_, reward_w_, detail::ats_options(cfg_), rng, &warm_);
  }

  WindowOutcome end_window(const WindowData& w) {
    SweepOptions opt{cfg_.max_sweeps, cfg_.fe_tol, false, 1e-6};
    last_ = cei_infer_window(model_, w, opt, first_ ? &seed_ : nullptr);
    first_ = false;
    model_ = last_.model;
    const auto mass =
        cfg_.active_measure == ActiveMeasure::window ? state_mass(last_.posterior.chain) : cei_retained_mass(model_);
    WindowOutcome out{&last_.posterior.chain, detail::count_active(mass, cfg_.activity_threshold)};
    cei_prepare_window(model_, cfg_.table_retention);
    refresh();
    return out;
  }

  const CeiModel& model() const { return model_; }

 private:
  void refresh() {
    cache_.reset(model_.observations);
    trans_w_ = module_weights(model_.rules.transition_sticks);
    reward_w_ = module_weights(model_.rules.reward_sticks);
  }

  ExperimentConfig cfg_;
  CeiModel model_;
  CeiWindowResult last_;
  std::vector<std::size_t> seed_;
  bool first_ = true;
  detail::BeliefCache cache_;
  QTable warm_;
  std::vector<double> trans_w_, reward_w_;
};

/// Oracle policies for the four rule pairs, indexed by (transition_swapped, reward_swapped).
struct OracleTable {
  std::array<OraclePolicy, 4> policies;

  OracleTable(const CoreMdp& base, double gamma) {
    for (int t = 0; t < 2; ++t) {
      for (int r = 0; r < 2; ++r) policies[static_cast<std::size_t>(t * 2 + r)] = oracle_policy(rules_mdp(base, {t == 1, r == 1}), gamma);
    }
  }
  const OraclePolicy& operator()(RulePair p) const {
    return policies[static_cast<std::size_t>((p.transition_swapped ? 2 : 0) + (p.reward_swapped ? 1 : 0))];
  }
};

namespace detail {

template <typename Agent>
SeedTrace run_seed_with(const ExperimentConfig& c, std::uint64_t seed) {
  Rng agent_rng(derive_seed(seed, 3));
  Agent agent(c, agent_rng);
  const CoreMdp base = default_core_mdp();
  RomdpEnv env(base, c.noise_model(), make_schedule(c.schedule, c.period, c.total_trials), derive_seed(seed, 1),
               derive_seed(seed, 2));
  const OracleTable oracles(base, c.gamma);

  SeedTrace trace;
  trace.seed = seed;
  WindowData w;
  std::vector<std::size_t> cores;
  std::size_t hits = 0, rewards = 0;
  for (std::size_t t = 0; t < c.total_trials; ++t) {
    try {
      const std::size_t o = env.observation();
      const std::size_t core = env.core();
      const RulePair rules = env.rules();
      const std::size_t a = agent.act(o, agent_rng);
      hits += oracles(rules).is_optimal(core, a) ? 1 : 0;
      const auto step = env.step(a);
      rewards += step.reward;
      w.push(o, a, step.reward);
      cores.push_back(core);
      if (w.size() == c.window) {
        const auto out = agent.end_window(w);
        const ChainPosterior& post = *out.posterior;
        JointCounts jc(kCores, c.observations(), post.states);
        for (std::size_t i = 0; i < w.size(); ++i) jc.accumulate(cores[i], w.observations[i], post.marginal(i));
        WindowRow row;
        row.trial = t + 1;
        row.optimal_rate = static_cast<double>(hits) / static_cast<double>(c.window);
        row.n_states = static_cast<double>(out.active);
        row.h_o_given_s = conditional_entropy(jc.os, jc.states);
        row.h_c_given_s = conditional_entropy(jc.cs, jc.states);
        row.mean_reward = static_cast<double>(rewards) / static_cast<double>(c.window);
        trace.rows.push_back(row);
        w.clear_keep_last_action();
        cores.clear();
        hits = rewards = 0;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("seed " + std::to_string(seed) + ", trial " + std::to_string(t + 1) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace detail

/// One seed of the configured experiment; deterministic in (config, seed).
inline SeedTrace run_seed(const ExperimentConfig& c, std::uint64_t seed) {
  return c.agent == AgentKind::goei ? detail::run_seed_with<GoeiAgent>(c, seed)
                                    : detail::run_seed_with<CeiAgent>(c, seed);
}

inline RunSummary run_experiment(const ExperimentConfig& c) {
  c.validate();
  RunSummary summary;
  summary.config = c;
  summary.traces.resize(c.seeds.size());
  std::size_t threads = c.threads ? c.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, c.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < c.seeds.size(); i = next++) {
      try {
        summary.traces[i] = run_seed(c, c.seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summary;
}

/// Runs two configurations that differ only in the agent.
inline std::pair<RunSummary, RunSummary> compare_agents(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto ea = config_entries(a);
  auto eb = config_entries(b);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].first == "agent") continue;
    if (ea[i].second != eb[i].second) {
      throw config_error(ea[i].first, "configurations differ ('" + ea[i].second + "' vs '" + eb[i].second + "')");
    }
  }
  return {run_experiment(a), run_experiment(b)};
}

inline std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline constexpr const char* kCsvHeader =
    "trial,seed,agent,noise_type,optimal_rate,n_states,h_o_given_s,h_c_given_s,mean_reward";

inline void write_results_rows(std::ostream& os, const RunSummary& s) {
  for (const auto& tr : s.traces) {
    for (const auto& r : tr.rows) {
      os << r.trial << ',' << tr.seed << ',' << to_string(s.config.agent) << ',' << to_string(s.config.noise_type) << ','
         << format_sig6(r.optimal_rate) << ',' << format_sig6(r.n_states) << ',' << format_sig6(r.h_o_given_s) << ','
         << format_sig6(r.h_c_given_s) << ',' << format_sig6(r.mean_reward) << '\n';
    }
  }
}

inline void write_results_csv(std::ostream& os, const std::vector<const RunSummary*>& runs) {
  os << kCsvHeader << '\n';
  for (const auto* s : runs) write_results_rows(os, *s);
}

struct Panel {
  const char* file;
  const char* key;
  double WindowRow::*field;
};

inline constexpr std::array<Panel, 4> kPanels{{
    {"panel_optimal_rate.csv", "optimal_rate", &WindowRow::optimal_rate},
    {"panel_n_states.csv", "n_states", &WindowRow::n_states},
    {"panel_h_o_given_s.csv", "h_o_given_s", &WindowRow::h_o_given_s},
    {"panel_h_c_given_s.csv", "h_c_given_s", &WindowRow::h_c_given_s},
}};

namespace detail {

inline void check_summary(const RunSummary& s) {
  if (s.traces.empty() || s.traces.front().rows.empty()) throw std::invalid_argument("emit_plot_data: empty summary");
  for (const auto& tr : s.traces) {
    if (tr.rows.size() != s.traces.front().rows.size()) throw std::invalid_argument("emit_plot_data: ragged summary");
  }
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

inline nlohmann::ordered_json series_json(const std::vector<WindowRow>& rows) {
  nlohmann::ordered_json j;
  for (const auto& p : kPanels) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) arr.push_back(r.*(p.field));
    j[p.key] = arr;
  }
  auto mr = nlohmann::ordered_json::array();
  auto tr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    mr.push_back(r.mean_reward);
    tr.push_back(r.trial);
  }
  j["mean_reward"] = mr;
  j["trial"] = tr;
  return j;
}

inline nlohmann::ordered_json run_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config_entries(s.config)) cfg[k] = v;
  j["config"] = cfg;
  j["mean"] = series_json(s.mean());
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& t : s.traces) {
    nlohmann::ordered_json sj;
    sj["seed"] = t.seed;
    sj["series"] = series_json(t.rows);
    seeds.push_back(sj);
  }
  j["seeds"] = seeds;
  return j;
}

}  // namespace detail

/// Writes results.csv, one CSV per panel (trial, mean and per-seed columns
/// for each run) and summary.json into `dir`. Overwrites existing files.
inline std::vector<std::filesystem::path> emit_plot_data(const std::vector<const RunSummary*>& runs,
                                                         const std::filesystem::path& dir) {
  if (runs.empty()) throw std::invalid_argument("emit_plot_data: empty summary");
  for (const auto* s : runs) detail::check_summary(*s);
  const std::size_t windows = runs.front()->traces.front().rows.size();
  for (const auto* s : runs) {
    if (s->traces.front().rows.size() != windows) throw std::invalid_argument("emit_plot_data: runs are misaligned");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  std::ostringstream results;
  write_results_csv(results, runs);
  detail::write_file(dir / "results.csv", results.str());
  written.push_back(dir / "results.csv");

  const bool tagged = runs.size() > 1;
  std::vector<std::vector<WindowRow>> means;
  for (const auto* s : runs) means.push_back(s->mean());
  for (const auto& p : kPanels) {
    std::ostringstream os;
    os << "trial";
    for (const auto* s : runs) {
      const std::string tag = tagged ? std::string(to_string(s->config.agent)) + "_" : "";
      os << ',' << tag << "mean";
      for (const auto& t : s->traces) os << ',' << tag << "seed_" << t.seed;
    }
    os << '\n';
    for (std::size_t i = 0; i < windows; ++i) {
      os << runs.front()->traces.front().rows[i].trial;
      for (std::size_t k = 0; k < runs.size(); ++k) {
        os << ',' << format_sig6(means[k][i].*(p.field));
        for (const auto& t : runs[k]->traces) os << ',' << format_sig6(t.rows[i].*(p.field));
      }
      os << '\n';
    }
    detail::write_file(dir / p.file, os.str());
    written.push_back(dir / p.file);
  }

  nlohmann::ordered_json manifest;
  auto files = nlohmann::ordered_json::array();
  for (const auto& f : written) files.push_back(f.filename().string());
  files.push_back("summary.json");
  manifest["files"] = files;
  manifest["csv_header"] = kCsvHeader;
  auto jr = nlohmann::ordered_json::array();
  for (const auto* s : runs) jr.push_back(detail::run_json(*s));
  manifest["runs"] = jr;
  detail::write_file(dir / "summary.json", manifest.dump(2) + "\n");
  written.push_back(dir / "summary.json");
  return written;
}

inline std::vector<std::filesystem::path> emit_plot_data(const RunSummary& summary, const std::filesystem::path& dir) {
  return emit_plot_data(std::vector<const RunSummary*>{&summary}, dir);
}

}  // namespace romdp
