// Small end-to-end run: collect greedy data, train BC and a tiny decision
// transformer, then compare them with the greedy oracle and OLLA.
//   quickstart [out_dir]

#include <cstdio>
#include <filesystem>

#include "offla/harness/commands.hpp"

int main(int argc, char** argv) {
  using namespace offla;
  const std::string out = argc > 1 ? argv[1] : (std::filesystem::temp_directory_path() / "offla_quickstart").string();
  try {
    auto kv = KeyValueConfig::parse_string(
        "collect.epsilons = 0\n"
        "collect.seeds = 1..2\n"
        "collect.ttis = 5000\n"
        "agent.training_steps = 3000\n"
        "dt.d_model = 32\n"
        "dt.n_heads = 4\n"
        "dt.n_layers = 2\n"
        "dt.context = 8\n"
        "dt.training_steps = 500\n"
        "dt.batch_size = 32\n"
        "dt.lr = 0.001\n"
        "eval.seeds = 101..103\n"
        "eval.horizon = 5000\n"
        "eval.olla_targets = 0.1, 0.5\n");
    Workspace ws(ExperimentConfig::from(kv, 1, out));
    collect(ws);
    train_agent(ws, AgentKind::Bc);
    train_agent(ws, AgentKind::Dt);
    std::printf("%-16s %12s %12s %10s\n", "policy", "return", "per TTI", "BLER");
    for (const char* p : {"greedy", "olla:0.1", "olla:0.5", "bc", "dt"}) {
      const auto r = evaluate_policy(ws, p);
      std::printf("%-16s %12.1f %12.5f %10.3f\n", r.label.c_str(), r.mean_return, r.reward_per_tti, r.bler_analog);
    }
    std::printf("outputs in %s\n", out.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "quickstart: %s\n", e.what());
    return 1;
  }
}
