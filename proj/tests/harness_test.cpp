#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "offla/harness/commands.hpp"

using namespace offla;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("offla_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(const fs::path& out, const std::string& extra = "") {
  auto kv = KeyValueConfig::parse_string(
      "collect.epsilons = 0\n"
      "collect.seeds = 1..2\n"
      "collect.ttis = 1000\n"
      "eval.seeds = 11..13\n"
      "eval.horizon = 3000\n"
      "agent.training_steps = 100\n"
      "agent.hidden_width = 16\n"
      "dqn.warmup = 50\n"
      "dt.d_model = 8\n"
      "dt.n_heads = 2\n"
      "dt.n_layers = 1\n"
      "dt.context = 3\n"
      "dt.training_steps = 20\n"
      "dt.batch_size = 8\n");
  const auto overrides = KeyValueConfig::parse_string(extra);
  for (const auto& [k, v] : overrides.values()) kv.set(k, v);
  return ExperimentConfig::from(kv, std::nullopt, out.string());
}

}  // namespace

TEST(KeyValueConfig, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueConfig::parse_string("# header\n  a = 1 \n\nb=two # trailing\nc = 0.5\n");
  EXPECT_EQ(kv.get("a", 0), 1);
  EXPECT_EQ(kv.get("b", std::string()), "two");
  EXPECT_DOUBLE_EQ(kv.get("c", 0.0), 0.5);
  EXPECT_EQ(kv.get("missing", 7), 7);
}

TEST(KeyValueConfig, ReportsErrorsWithLineNumbers) {
  try {
    KeyValueConfig::parse_string("a = 1\nnot a pair\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(KeyValueConfig::parse_string("a=1\na=2\n"), ConfigError);
  const auto kv = KeyValueConfig::parse_string("n = 1.5\nflag = maybe\n");
  EXPECT_THROW(kv.get("n", 0), ConfigError);
  EXPECT_THROW(kv.get("flag", false), ConfigError);
}

TEST(KeyValueConfig, ListsAndRanges) {
  const auto kv = KeyValueConfig::parse_string("s = 1..3, 7\nq = 0.1, 0.5\n");
  EXPECT_EQ(kv.get_list<std::uint64_t>("s", {}), (std::vector<std::uint64_t>{1, 2, 3, 7}));
  EXPECT_EQ(kv.get_list<double>("q", {}), (std::vector<double>{0.1, 0.5}));
  EXPECT_THROW(KeyValueConfig::parse_string("s = 5..2\n").get_list<int>("s", {}), ConfigError);
}

TEST(ExperimentConfig, Defaults) {
  const auto c = ExperimentConfig::defaults();
  EXPECT_EQ(c.eval_seeds.size(), 5u);
  EXPECT_EQ(c.eval_horizon, 20000);
  EXPECT_EQ(c.collect_seeds.size(), 20u);
  EXPECT_EQ(c.eval_quantiles, (std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9}));
  EXPECT_EQ(c.dt.d_model, 64);
  EXPECT_EQ(c.agent(AgentKind::Bcq).target_update_interval, 1024);
}

TEST(ExperimentConfig, PerAgentOverrides) {
  const auto c = ExperimentConfig::from(KeyValueConfig::parse_string("agent.lr = 0.01\ncql.lr = 0.02\ncql.cql_alpha = 1\n"));
  EXPECT_DOUBLE_EQ(c.agent(AgentKind::Bc).lr, 0.01);
  EXPECT_DOUBLE_EQ(c.agent(AgentKind::Cql).lr, 0.02);
  EXPECT_DOUBLE_EQ(c.agent(AgentKind::Cql).cql_alpha, 1.0);
}

TEST(ExperimentConfig, UnknownKeysAreDetected) {
  const auto c = ExperimentConfig::from(KeyValueConfig::parse_string("eval.horizon = 10\nevl.seeds = 1\n"));
  EXPECT_EQ(c.source.unused_keys(), (std::vector<std::string>{"evl.seeds"}));
}

TEST(ExperimentConfig, RejectsRepeatedSeeds) {
  EXPECT_THROW(ExperimentConfig::from(KeyValueConfig::parse_string("eval.seeds = 1,2,1\n")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from(KeyValueConfig::parse_string("collect.seeds = 3,3\n")), ConfigError);
}

TEST(ExperimentConfig, CctrTableNeedsOneValuePerBucket) {
  EXPECT_THROW(ExperimentConfig::from(KeyValueConfig::parse_string("dt.cctr_table = 1, 2\n")), ConfigError);
  const auto c = ExperimentConfig::from(
      KeyValueConfig::parse_string("env.n_cqi = 3\ndt.cctr_table = 0.5, 1, 2\ndt.cctr_table_scale = 4\n"));
  EXPECT_EQ(c.cctr_table, (std::vector<double>{0.5, 1, 2}));
}

TEST(Commands, CctrUsesConfiguredTable) {
  const auto out = scratch("cctr_table");
  Workspace ws(small_config(out, "dt.cctr_table = 0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14\n"
                                  "dt.cctr_table_scale = 2\n"));
  const OmegaPolicy p = cctr_policy(ws, 0.5, 1.0);
  Observation o;
  o.cqi = 0;
  EXPECT_DOUBLE_EQ(p.first_attempt(o), 1.0);
  o.cqi = 14;
  EXPECT_DOUBLE_EQ(p.first_attempt(o), 28.0);
  fs::remove_all(out);
}

TEST(ExperimentConfig, HashIgnoresOutputDirectory) {
  const auto kv = KeyValueConfig::parse_string("eval.horizon = 10\n");
  const auto a = ExperimentConfig::from(kv, std::nullopt, std::string("x"));
  const auto b = ExperimentConfig::from(kv, std::nullopt, std::string("y"));
  const auto c = ExperimentConfig::from(kv, 5, std::string("x"));
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(EvalReport, MatchesRecomputationFromTraces) {
  EnvConfig env;
  const std::vector<std::uint64_t> seeds{3, 4, 5};
  std::vector<TransitionStream> traces;
  const auto rep = evaluate(
      "olla", env, [&](std::uint64_t) { return std::make_unique<OllaController>(env, 0.3); }, seeds, 2500, 1, &traces);
  ASSERT_EQ(traces.size(), 3u);
  std::vector<double> totals;
  double acks = 0, tx = 0, attempts = 0, packets = 0;
  for (const auto& run : traces) {
    double t = 0;
    for (const auto& tr : run) {
      t += tr.reward;
      tx += 1;
      acks += tr.reward > 0 ? 1 : 0;
      if (tr.packet_terminal) {
        packets += 1;
        attempts += tr.attempt + 1;
      }
    }
    totals.push_back(t);
  }
  const double mean = (totals[0] + totals[1] + totals[2]) / 3;
  double ss = 0;
  for (double t : totals) ss += (t - mean) * (t - mean);
  EXPECT_NEAR(rep.mean_return, mean, 1e-9);
  EXPECT_NEAR(rep.std_return, std::sqrt(ss / 2), 1e-9);
  EXPECT_NEAR(rep.success_rate, acks / tx, 1e-9);
  EXPECT_NEAR(rep.bler_analog, 1 - acks / tx, 1e-9);
  EXPECT_NEAR(rep.attempts_per_packet, attempts / packets, 1e-9);
  EXPECT_NEAR(rep.reward_per_tti, mean / 2500, 1e-9);
  EXPECT_GE(rep.std_return, 0.0);
}

TEST(EvalReport, SingleSeedHasZeroSpread) {
  SeedResult s;
  s.total_return = 4.0;
  s.horizon = 2;
  const auto rep = make_report("x", {s});
  EXPECT_EQ(rep.std_return, 0.0);
  EXPECT_EQ(rep.reward_per_tti, 2.0);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  EnvConfig env;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  auto f = [&](std::uint64_t) { return std::make_unique<OllaController>(env, 0.1); };
  const auto a = evaluate("a", env, f, seeds, 1000, 1);
  const auto b = evaluate("a", env, f, seeds, 1000, 3);
  EXPECT_EQ(a.mean_return, b.mean_return);
  EXPECT_EQ(a.std_return, b.std_return);
  EXPECT_EQ(a.success_rate, b.success_rate);
}

TEST(Collect, IsBitIdenticalOnRerun) {
  const auto out = scratch("collect_det");
  Workspace a(small_config(out));
  collect(a);
  const auto first = slurp(out / "data" / "eps_0_seed_1.jsonl");
  const auto manifest = slurp(out / "data" / "manifest.json");
  Workspace b(small_config(out));
  collect(b);
  EXPECT_EQ(slurp(out / "data" / "eps_0_seed_1.jsonl"), first);
  EXPECT_EQ(slurp(out / "data" / "manifest.json"), manifest);
  EXPECT_EQ(read_dataset((out / "data" / "eps_0_seed_1.jsonl").string()).size(), 1000u);
  fs::remove_all(out);
}

TEST(Collect, OneDatasetPerEpsilonAndSeed) {
  const auto out = scratch("collect_eps");
  Workspace ws(small_config(out, "collect.epsilons = 0, 0.25, 0.5\ncollect.seeds = 4\n"));
  collect(ws);
  for (const char* e : {"0", "0.25", "0.5"}) EXPECT_TRUE(fs::exists(out / "data" / (std::string("eps_") + e + "_seed_4.jsonl")));
  const auto manifest = nlohmann::json::parse(slurp(out / "data" / "manifest.json"));
  EXPECT_EQ(manifest["files"].size(), 3u);
  EXPECT_EQ(manifest["config_hash"], nn::hex64(ws.config().hash()));
  EXPECT_EQ(manifest["version"], version_string());
  fs::remove_all(out);
}

TEST(Collect, ZeroTtisGivesEmptyDataset) {
  const auto out = scratch("collect_empty");
  Workspace ws(small_config(out, "collect.ttis = 0\n"));
  collect(ws);
  const auto path = out / "data" / "eps_0_seed_1.jsonl";
  EXPECT_TRUE(read_dataset(path.string()).empty());
  EXPECT_NE(slurp(path).find("offla-transitions"), std::string::npos);
  fs::remove_all(out);
}

TEST(Collect, UnwritableOutputFails) {
  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "file, not a directory";
  Workspace ws(small_config(blocker / "sub"));
  EXPECT_THROW(collect(ws), std::exception);
  fs::remove(blocker);
}

TEST(Compare, GreedyLeadsAndOllaRegulates) {
  const auto out = scratch("compare_rows");
  Workspace ws(small_config(out, "eval.horizon = 20000\n"));
  const auto greedy = evaluate_policy(ws, "greedy");
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto r = evaluate_policy(ws, "olla:" + detail::fmt(t));
    EXPECT_GE(greedy.mean_return + 2 * greedy.std_error(), r.mean_return - 2 * r.std_error()) << r.label;
    if (t == 0.5) EXPECT_NEAR(r.bler_analog, 0.5, 0.05);
  }
  fs::remove_all(out);
}

TEST(Commands, EndToEndOutputsAreDeterministic) {
  const auto out = scratch("e2e");
  std::map<std::string, std::string> first;
  const std::vector<std::string> files{"compare.csv", "sweep_conditioning.csv", "eval/greedy.csv", "eval/bcq.csv",
                                       "agents/dt_loss.csv", "agents/cql.bin", "data/eps_0_seed_2.jsonl"};
  for (int round = 0; round < 2; ++round) {
    Workspace ws(small_config(out));
    collect(ws);
    train_oracle(ws);
    for (auto k : {AgentKind::Dqn, AgentKind::Bc, AgentKind::Bcq, AgentKind::Cql, AgentKind::Dt}) train_agent(ws, k);
    eval(ws, "greedy");
    eval(ws, "bcq");
    const auto sweep = sweep_conditioning(ws);
    EXPECT_EQ(sweep.rows.size(), 5u + 2u);
    const auto rows = compare(ws);
    EXPECT_EQ(rows.size(), 1u + 5u + 5u);
    for (const auto& f : files) {
      ASSERT_TRUE(fs::exists(out / f)) << f;
      if (round == 0)
        first[f] = slurp(out / f);
      else
        EXPECT_EQ(slurp(out / f), first[f]) << f;
    }
  }
  const auto csv = slurp(out / "compare.csv");
  EXPECT_EQ(csv.rfind("# config_hash=", 0), 0u);
  EXPECT_NE(slurp(out / "sweep_conditioning.csv").find("# relative_spread="), std::string::npos);
  fs::remove_all(out);
}

TEST(Sweep, QuantilesWithEqualTargetsGiveEqualReports) {
  const auto out = scratch("sweep_eq");
  Workspace ws(small_config(out, "eval.quantiles = 0.91, 0.92\neval.horizon = 500\n"));
  collect(ws);
  train_agent(ws, AgentKind::Dt);
  const auto res = sweep_conditioning(ws);
  ASSERT_GE(res.rows.size(), 2u);
  // First-attempt returns on greedy data take few distinct values.
  ASSERT_EQ(res.rows[0].target, res.rows[1].target);
  EXPECT_EQ(res.rows[0].report.mean_return, res.rows[1].report.mean_return);
  EXPECT_EQ(res.rows[0].report.success_rate, res.rows[1].report.success_rate);
  EXPECT_EQ(res.relative_spread, 0.0);
  fs::remove_all(out);
}

TEST(Commands, MissingCheckpointIsReported) {
  const auto out = scratch("missing");
  Workspace ws(small_config(out));
  try {
    evaluate_policy(ws, "cql");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("train-agent cql"), std::string::npos);
  }
}

#ifdef OFFLA_CLI_PATH
TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const std::string cli = OFFLA_CLI_PATH;
  const auto err = (dir / "err.txt").string();
  std::ofstream(dir / "bad.cfg") << "eval.horizon = soon\n";
  std::ofstream(dir / "ok.cfg") << "eval.seeds = 1\neval.horizon = 200\noracle.tol = 1e-6\n";
  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " -q 2>" + err + " >/dev/null").c_str());
  };
  EXPECT_NE(run("eval greedy --config " + (dir / "bad.cfg").string()), 0);
  const auto msg = slurp(err);
  EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1) << msg;
  EXPECT_NE(msg.find("eval.horizon"), std::string::npos);
  EXPECT_NE(run("train-agent ppo"), 0);
  EXPECT_NE(run("eval greedy --config /nonexistent.cfg"), 0);
  EXPECT_EQ(run("eval greedy --config " + (dir / "ok.cfg").string() + " --out " + (dir / "run").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "eval" / "greedy.csv"));
  fs::remove_all(dir);
}
#endif
