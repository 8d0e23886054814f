// Command-line front end for the experiment commands.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "offla/harness/commands.hpp"

namespace {

void print_report(const offla::EvalReport& r) {
  std::printf("%-16s mean_return=%.4f std=%.4f success_rate=%.4f bler=%.4f attempts/packet=%.4f reward/tti=%.6f\n",
              r.label.c_str(), r.mean_return, r.std_return, r.success_rate, r.bler_analog, r.attempts_per_packet,
              r.reward_per_tti);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline link-adaptation experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--seed", seed, "training seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_flag("-q,--quiet", quiet, "no progress messages");

  auto* collect = app.add_subcommand("collect", "collect datasets with the configured behavior policy");
  auto* train_oracle = app.add_subcommand("train-oracle", "solve and save the DP oracle");
  auto* train_agent = app.add_subcommand("train-agent", "train one agent and save a checkpoint");
  std::string agent;
  train_agent->add_option("agent", agent, "bc | bcq | cql | dqn | dt")
      ->required()
      ->check(CLI::IsMember({"bc", "bcq", "cql", "dqn", "dt"}));
  auto* eval = app.add_subcommand("eval", "evaluate a policy over the evaluation seeds");
  std::string policy;
  eval->add_option("policy", policy, "greedy | olla:<target> | bc | bcq | cql | dqn | dt")->required();
  auto* sweep = app.add_subcommand("sweep-conditioning", "evaluate the DT across conditioning quantiles");
  auto* compare = app.add_subcommand("compare", "leaderboard of every policy");
  for (auto* sub : {collect, train_oracle, train_agent, eval, sweep, compare}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "offla: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto kv = config_path.empty() ? offla::KeyValueConfig{} : offla::KeyValueConfig::load(config_path);
    const auto cfg = offla::ExperimentConfig::from(kv, seed, out);
    if (const auto unused = cfg.source.unused_keys(); !unused.empty())
      throw offla::ConfigError("unknown config key '" + unused.front() + "'");
    offla::Workspace ws(cfg, quiet ? nullptr : &std::cerr);

    if (*collect) {
      offla::collect(ws);
    } else if (*train_oracle) {
      offla::train_oracle(ws);
    } else if (*train_agent) {
      offla::train_agent(ws, offla::parse_agent_kind(agent));
    } else if (*eval) {
      print_report(offla::eval(ws, policy));
    } else if (*sweep) {
      const auto res = offla::sweep_conditioning(ws);
      for (const auto& r : res.rows) print_report(r.report);
      std::printf("relative_spread=%.6f\n", res.relative_spread);
    } else if (*compare) {
      for (const auto& r : offla::compare(ws)) print_report(r);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "offla: error: " << msg << '\n';
    return 1;
  }
  return 0;
}
