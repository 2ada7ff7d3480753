// Command-line front end: lossy-network consensus and coordination runs plus
// the analytical verification battery, all seeded and reproducible.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ratiocast/experiment.hpp"

namespace {

struct StagedOptions {
  std::string self_drop;  // "on"/"off"; empty = not given
  std::string values;
  std::string q_file;
  std::string pi_min, pi_max, leaders;
  std::string config;
};

void add_common_options(CLI::App* cmd, ratiocast::ExperimentConfig& cfg,
                        StagedOptions& staged) {
  cmd->add_option("--graph", cfg.graph,
                  "builtin (paper5, cycle:N, complete:N, chordcycle4) or edge-list file");
  cmd->add_option("--n", cfg.n, "random graph size (used when --graph is absent)");
  cmd->add_option("--p", cfg.p, "random graph edge probability")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--q", cfg.q, "per-link delivery probability")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--q-file", staged.q_file,
                  "per-edge delivery probabilities: lines 'j i q'");
  cmd->add_option("--self-drop", staged.self_drop,
                  "whether self-loop packets can drop")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--rounds", cfg.rounds, "number of synchronous rounds");
  cmd->add_option("--trials", cfg.trials, "Monte-Carlo replica count");
  cmd->add_option("--seed", cfg.seed, "random seed");
  cmd->add_option("--out", cfg.out, "output directory");
  cmd->add_option("--tol", cfg.tol, "convergence tolerance");
  cmd->add_option("--window", cfg.window, "convergence window (rounds)");
  cmd->add_flag("--masks", cfg.dump_masks, "also dump per-round link masks");
  cmd->add_option("--values", staged.values, "comma-separated initial values");
  cmd->add_option("--config", staged.config,
                  "key = value config file; explicit flags override");
}

void apply_staged(ratiocast::ExperimentConfig& cfg, const StagedOptions& staged) {
  if (!staged.self_drop.empty()) cfg.self_drop = staged.self_drop != "off";
  if (!staged.q_file.empty()) cfg.q_file = staged.q_file;
  if (!staged.values.empty()) cfg.values = ratiocast::parse_double_list(staged.values);
  if (!staged.pi_min.empty()) cfg.pi_min = ratiocast::parse_double_list(staged.pi_min);
  if (!staged.pi_max.empty()) cfg.pi_max = ratiocast::parse_double_list(staged.pi_max);
  if (!staged.leaders.empty()) cfg.leaders = ratiocast::parse_int_list(staged.leaders);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ratio consensus over packet-dropping broadcast links"};
  app.require_subcommand(1);

  ratiocast::ExperimentConfig cfg;
  StagedOptions staged;

  CLI::App* consensus =
      app.add_subcommand("consensus", "distributed averaging of initial values");
  add_common_options(consensus, cfg, staged);

  CLI::App* coordination =
      app.add_subcommand("coordination", "box-constrained resource coordination");
  add_common_options(coordination, cfg, staged);
  coordination->add_option("--pi-min", staged.pi_min,
                           "comma-separated lower capacities");
  coordination->add_option("--pi-max", staged.pi_max,
                           "comma-separated upper capacities");
  coordination->add_option("--rho-d", cfg.rho_d, "total demanded amount");
  coordination->add_option("--leaders", staged.leaders,
                           "comma-separated 1-indexed leader set");

  CLI::App* oracle = app.add_subcommand(
      "oracle", "analytical moment recursions, spectral checks, Monte-Carlo validation");
  add_common_options(oracle, cfg, staged);

  // Config file first, so flags parsed below take precedence.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc)
        ratiocast::apply_config_file(cfg, argv[i + 1]);
      else if (arg.rfind("--config=", 0) == 0)
        ratiocast::apply_config_file(cfg, arg.substr(9));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ratiocast::kUsageError;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ratiocast::kOk : ratiocast::kUsageError;
  }

  apply_staged(cfg, staged);
  try {
    if (consensus->parsed()) return ratiocast::run_consensus(cfg);
    if (coordination->parsed()) return ratiocast::run_coordination(cfg);
    if (oracle->parsed()) return ratiocast::run_oracle(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ratiocast::kUsageError;
  }
  return ratiocast::kUsageError;
}
