// Command-line front end: run, compare and oracle subcommands.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "romdp/romdp.hpp"

namespace {

void print_policy(const char* label, const romdp::OraclePolicy& p) {
  std::printf("%s\n", label);
  for (std::size_t c = 0; c < romdp::kCores; ++c) {
    std::string acts;
    for (std::size_t a = 0; a < romdp::kActions; ++a) {
      if (p.is_optimal(c, a)) acts += (acts.empty() ? "a" : "|a") + std::to_string(a);
    }
    std::printf("  c%zu -> %-6s Q(a0)=%.6f Q(a1)=%.6f%s\n", c, acts.c_str(), p.q[c][0], p.q[c][1],
                p.tied(c) ? "  (tie)" : "");
  }
}

int cmd_oracle(const std::string& path) {
  const auto cfg = romdp::load_config(path);
  const auto base = romdp::default_core_mdp();
  std::printf("gamma = %g, schedule = %s\n", cfg.gamma, std::string(romdp::to_string(cfg.schedule)).c_str());
  print_policy("M1/N1:", romdp::oracle_policy(base, cfg.gamma));
  if (cfg.schedule == romdp::ScheduleKind::reward_switch) {
    print_policy("M1/N2:", romdp::oracle_policy(romdp::rules_mdp(base, {false, true}), cfg.gamma));
  } else if (cfg.schedule == romdp::ScheduleKind::transition_switch) {
    print_policy("M2/N1:", romdp::oracle_policy(romdp::rules_mdp(base, {true, false}), cfg.gamma));
  }
  return 0;
}

void report(const romdp::RunSummary& s) {
  const auto mean = s.mean();
  std::fprintf(stderr, "%s/%s: %zu seeds, %zu windows\n", std::string(romdp::to_string(s.config.agent)).c_str(),
               std::string(romdp::to_string(s.config.noise_type)).c_str(), s.traces.size(), mean.size());
  for (const auto& r : mean) {
    std::fprintf(stderr, "  trial %6zu  opt %.3f  states %6.2f  H(o|s) %.3f  H(c|s) %.3f  reward %.3f\n", r.trial,
                 r.optimal_rate, r.n_states, r.h_o_given_s, r.h_c_given_s, r.mean_reward);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ROMDP agents: goal-oriented and complete environment inference"};
  app.require_subcommand(1);

  std::string run_config, seed_list, run_out;
  std::size_t run_threads = 0;
  auto* run = app.add_subcommand("run", "Run one experiment configuration");
  run->add_option("--config", run_config, "Configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed-list", seed_list, "Comma-separated seeds overriding the configuration");
  run->add_option("--out", run_out, "Output directory (defaults to the configured output)");
  run->add_option("--threads", run_threads, "Worker threads (0 = configured/auto)");

  std::string cfg_a, cfg_b, cmp_out;
  std::size_t cmp_threads = 0;
  auto* compare = app.add_subcommand("compare", "Run two configurations that differ only in the agent");
  compare->add_option("--config-a", cfg_a, "First configuration")->required()->check(CLI::ExistingFile);
  compare->add_option("--config-b", cfg_b, "Second configuration")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", cmp_out, "Output directory")->required();
  compare->add_option("--threads", cmp_threads, "Worker threads (0 = configured/auto)");

  std::string oracle_config;
  auto* oracle = app.add_subcommand("oracle", "Print the optimal policy for each rule pair of the schedule");
  oracle->add_option("--config", oracle_config, "Configuration file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*oracle) return cmd_oracle(oracle_config);
    if (*run) {
      auto cfg = romdp::load_config(run_config);
      if (!seed_list.empty()) cfg.seeds = romdp::parse_seed_list("--seed-list", seed_list);
      if (!run_out.empty()) cfg.output = run_out;
      if (run_threads) cfg.threads = run_threads;
      const auto summary = romdp::run_experiment(cfg);
      report(summary);
      for (const auto& f : romdp::emit_plot_data(summary, cfg.output)) std::printf("%s\n", f.string().c_str());
      return 0;
    }
    if (*compare) {
      auto a = romdp::load_config(cfg_a);
      auto b = romdp::load_config(cfg_b);
      if (cmp_threads) a.threads = b.threads = cmp_threads;
      const auto [ra, rb] = romdp::compare_agents(a, b);
      report(ra);
      report(rb);
      for (const auto& f : romdp::emit_plot_data({&ra, &rb}, cmp_out)) std::printf("%s\n", f.string().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
