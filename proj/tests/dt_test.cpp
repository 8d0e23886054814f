#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "offla/dp_oracle.hpp"
#include "offla/dt/model.hpp"
#include "offla/dt/policy.hpp"
#include "offla/scheduler.hpp"
#include "support/gradcheck.hpp"

using namespace offla;

namespace {

DtConfig tiny_config() {
  DtConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.mlp_ratio = 2;
  c.context_steps = 4;
  c.batch_size = 4;
  c.seed = 11;
  return c;
}

TransitionStream random_stream(const EnvConfig& env, Tti horizon, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> any(1, env.n_actions);
  auto ctl = make_controller([&](const Observation&) { return any(rng); });
  return run_scheduler(env, ctl, horizon);
}

TransitionStream greedy_stream(Tti horizon, std::uint64_t seed) {
  static const QTable q = value_iteration(EnvConfig{}, 0.99, 1e-10);
  EnvConfig env;
  env.rng_seed = seed;
  OracleController ctl(q, 0.0, seed);
  return run_scheduler(env, ctl, horizon, static_cast<std::uint32_t>(seed));
}

EnvConfig overlapping_env() {
  EnvConfig env;
  env.harq_delay = 7;
  env.n_harq_processes = 2;
  env.rng_seed = 3;
  return env;
}

nn::Matrix last_logits(const DecisionTransformer& m, const TokenSequence& seq) {
  nn::NoGradGuard guard;
  const int row = state_token_row(0, m.horizon() - 1, m.horizon());
  return m.logits(std::span(&seq, 1), std::span(&row, 1)).value();
}

}  // namespace

TEST(DtConfig, Validation) {
  DtConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.context(5), 10);
  c.n_packets = 10;
  EXPECT_EQ(c.context(5), 32);
  c.d_model = 30;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_trajectory_mode("consecutive"), TrajectoryMode::Consecutive);
  EXPECT_THROW(parse_trajectory_mode("all"), std::invalid_argument);
}

TEST(Tokenize, SingleStepIsLowerTriangular) {
  const auto s = random_stream(EnvConfig{}, 5, 1);
  const auto seq = build_recent_transmissions(s, 1);
  ASSERT_EQ(seq.n_tokens(), 3);
  EXPECT_EQ(seq.attn_mask, BoolMatrix::causal(3));
}

TEST(Tokenize, AllPadSequenceHasNoLossPositions) {
  DtConfig c = tiny_config();
  DecisionTransformer m(EnvConfig{}, c);
  const TokenSequence empty = build_recent_transmissions(std::span<const Transition>{}, m.horizon());
  ASSERT_EQ(empty.real_steps(), 0);
  const std::vector<TokenSequence> batch{empty, empty};
  EXPECT_EQ(m.loss(batch).item(), 0.0);
}

TEST(Tokenize, PendingFeedbackOfOtherPacketIsHidden) {
  const auto s = random_stream(overlapping_env(), 60, 2);
  const auto seq = build_recent_transmissions(s, 12);
  int checked = 0;
  for (int qs = 0; qs < seq.horizon(); ++qs)
    for (int ks = 0; ks < qs; ++ks) {
      const auto& q = seq.steps[static_cast<std::size_t>(qs)];
      const auto& k = seq.steps[static_cast<std::size_t>(ks)];
      if (q.is_pad || k.is_pad || q.packet_id == k.packet_id || k.t_r <= q.t_a) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          EXPECT_FALSE(seq.attn_mask(3 * qs + i, 3 * ks + j));
          ++checked;
        }
    }
  EXPECT_GT(checked, 0);
}

TEST(Tokenize, SingleProcessUnitDelayIsCausal) {
  EnvConfig env;
  env.harq_delay = 1;
  env.n_harq_processes = 1;
  const auto s = random_stream(env, 50, 3);
  for (std::size_t end : {5u, 20u, 49u}) {
    const auto seq = build_recent_transmissions(std::span(s).subspan(0, end + 1), 6);
    EXPECT_EQ(seq.attn_mask, BoolMatrix::causal(18));
  }
}

TEST(DecisionTransformer, LossPositionsAreStateTokensOfRealSteps) {
  EXPECT_EQ(state_token_row(0, 0, 4), 1);
  EXPECT_EQ(state_token_row(0, 3, 4), 10);
  EXPECT_EQ(state_token_row(1, 0, 4), 13);
  // A sequence whose real steps all carry the same target gives the same
  // loss whatever the pad steps contain.
  DtConfig c = tiny_config();
  DecisionTransformer m(EnvConfig{}, c);
  const auto s = random_stream(EnvConfig{}, 2, 4);
  TokenSequence a = build_recent_transmissions(s, m.horizon());
  TokenSequence b = a;
  b.steps[0].obs.x = 499;
  b.steps[0].action = 7;
  b.steps[0].omega = 5.0;
  EXPECT_EQ(m.loss(std::span(&a, 1)).item(), m.loss(std::span(&b, 1)).item());
}

TEST(DecisionTransformer, InitialLossNearUniform) {
  DtConfig c;
  c.context_steps = 8;
  c.seed = 2;
  const auto data = greedy_stream(2000, 1);
  DecisionTransformer m(EnvConfig{}, c);
  DtDataset ds(data, c, m.horizon());
  std::mt19937_64 rng(1);
  const auto batch = ds.sample(rng, 64);
  EXPECT_NEAR(m.loss(batch).item(), std::log(28.0), 0.1);
}

TEST(DecisionTransformer, ZeroLearningRateLeavesModelUnchanged) {
  DtConfig c = tiny_config();
  c.lr = 0.0;
  c.training_steps = 5;
  const auto data = greedy_stream(300, 2);
  DtTrainStats stats;
  const auto trained = dt_train(data, EnvConfig{}, c, &stats);
  ASSERT_EQ(stats.losses.size(), 5u);
  DecisionTransformer fresh(EnvConfig{}, c);
  DtDataset ds(data, c, fresh.horizon());
  std::mt19937_64 rng(9);
  const auto batch = ds.sample(rng, 8);
  EXPECT_EQ(trained->loss(batch).item(), fresh.loss(batch).item());
}

TEST(DecisionTransformer, MemorizesSingleTrajectory) {
  DtConfig c = tiny_config();
  c.d_model = 16;
  c.n_layers = 1;
  c.context_steps = 6;
  c.lr = 3e-3;
  c.weight_decay = 0.0;
  c.training_steps = 600;
  c.batch_size = 6;
  const auto data = random_stream(EnvConfig{}, 6, 5);
  DtTrainStats stats;
  dt_train(data, EnvConfig{}, c, &stats);
  EXPECT_LT(stats.losses.back(), 0.01);
}

TEST(DecisionTransformer, TrainingIsDeterministic) {
  DtConfig c = tiny_config();
  c.training_steps = 20;
  const auto data = greedy_stream(300, 3);
  DtTrainStats a, b;
  dt_train(data, EnvConfig{}, c, &a);
  dt_train(data, EnvConfig{}, c, &b);
  EXPECT_EQ(a.losses, b.losses);
}

TEST(DecisionTransformer, GradientsMatchFiniteDifferences) {
  for (auto pe : {nn::PositionalKind::Be, nn::PositionalKind::Lt, nn::PositionalKind::Ct}) {
    DtConfig c = tiny_config();
    c.pos_encoding = pe;
    c.context_steps = 3;
    EnvConfig env = overlapping_env();
    env.n_actions = 6;
    env.context_max = 60;
    env.n_cqi = 3;
    DecisionTransformer m(env, c);
    std::mt19937_64 rng(4);
    for (const auto& p : m.parameters()) {
      nn::Tensor t = p.tensor;
      t.mutable_value() += nn::init_matrix(t.rows(), t.cols(), nn::Init::Normal, 0.3, rng);
    }
    const auto s = random_stream(env, 12, 6);
    std::vector<TokenSequence> batch{build_recent_transmissions(std::span(s).subspan(0, 2), 3),
                                     build_recent_transmissions(s, 3)};
    for (auto& seq : batch)
      for (auto& st : seq.steps) st.omega = 0.1 * st.obs.x - 1.0;
    const auto res = oracle::check_gradients(m.parameters(), [&] { return m.loss(batch); });
    EXPECT_LT(res.max_rel_error, 1e-4) << to_string(pe) << " " << res.worst;
    EXPECT_GT(res.checked, 500u);
  }
}

TEST(Causality, WithheldTokensDoNotAffectAction) {
  DtConfig c = tiny_config();
  c.context_steps = 12;
  c.seed = 8;
  DecisionTransformer m(overlapping_env(), c);
  const auto s = random_stream(overlapping_env(), 200, 7);
  int perturbed = 0;
  for (std::size_t end = 12; end < s.size(); ++end) {
    TokenSequence seq = build_recent_transmissions(std::span(s).subspan(0, end + 1), 12);
    for (auto& st : seq.steps) st.omega = st.obs.x / 100.0;
    const nn::Matrix ref = last_logits(m, seq);
    const TokenStep& q = seq.steps.back();
    TokenSequence alt = seq;
    alt.steps.back().action = 1 + (alt.steps.back().action % 28);  // the query's own action is in the future
    for (auto& st : alt.steps) {
      if (st.is_pad || st.packet_id == q.packet_id || st.t_r <= q.t_a) continue;
      st.omega += 3.0;
      st.obs.x = (st.obs.x + 250) % 500;
      st.obs.cqi = cqi_bucket(st.obs.x, 500, 15);
      st.action = 1 + (st.action % 28);
      ++perturbed;
    }
    EXPECT_EQ(last_logits(m, alt), ref) << "window ending at " << end;
  }
  EXPECT_GT(perturbed, 10);
}

TEST(Omega, RetransmissionUpdate) {
  EXPECT_DOUBLE_EQ(next_omega(2.0, -0.5, 1.0), 2.5);
  EXPECT_DOUBLE_EQ(next_omega(1.0, -0.5, 0.8), 1.875);
  const auto v = OmegaPolicy::vanilla(2.0, 1.0);
  EXPECT_DOUBLE_EQ(v.retransmission(2.0, -0.5), 2.5);
  const auto d = OmegaPolicy::davg(0.3);
  EXPECT_DOUBLE_EQ(d.retransmission(2.0, -0.5), 0.3);
  CqiTargets t{{0.1, 0.2, 0.3}, 0.5};
  const auto cc = OmegaPolicy::cctr(t);
  EXPECT_DOUBLE_EQ(cc.first_attempt(Observation{0, 0, 2, 0, 0}), 0.3);
  EXPECT_DOUBLE_EQ(cc.first_attempt(Observation{0, 0, 7, 0, 0}), 0.5);
}

TEST(DtController, DavgHoldsOmegaConstant) {
  DtConfig c = tiny_config();
  c.conditioning.kind = ConditioningKind::Davg;
  c.conditioning.gamma = 0.8;
  auto m = std::make_shared<DecisionTransformer>(EnvConfig{}, c);
  DtController ctl(m, OmegaPolicy::davg(0.42));
  std::vector<double> trace;
  ctl.set_omega_trace(&trace);
  run_scheduler(EnvConfig{}, ctl, 300);
  ASSERT_EQ(trace.size(), 300u);
  for (double w : trace) EXPECT_EQ(w, 0.42);
}

TEST(DtController, VanillaAdjustsOnRetransmission) {
  DtConfig c = tiny_config();
  auto m = std::make_shared<DecisionTransformer>(overlapping_env(), c);
  DtController ctl(m, OmegaPolicy::vanilla(1.0, 0.9));
  std::vector<double> trace;
  ctl.set_omega_trace(&trace);
  const auto run = run_scheduler(overlapping_env(), ctl, 400);
  ASSERT_EQ(trace.size(), run.size());
  int retx = 0;
  for (std::size_t i = 0; i < run.size(); ++i) {
    if (run[i].attempt == 0) {
      EXPECT_EQ(trace[i], 1.0);
      continue;
    }
    std::size_t prev = i;
    while (prev-- > 0 && run[prev].packet_id != run[i].packet_id) {
    }
    ASSERT_LT(prev, i);
    EXPECT_DOUBLE_EQ(trace[i], next_omega(trace[prev], run[prev].reward, 0.9));
    ++retx;
  }
  EXPECT_GT(retx, 0);
}

TEST(DtController, MatchesOfflineWindow) {
  // Replaying a rollout offline with the same conditioning values reproduces
  // every online decision.
  DtConfig c = tiny_config();
  c.context_steps = 6;
  auto m = std::make_shared<DecisionTransformer>(overlapping_env(), c);
  DtController ctl(m, OmegaPolicy::vanilla(0.7, 1.0));
  std::vector<double> trace;
  ctl.set_omega_trace(&trace);
  const auto run = run_scheduler(overlapping_env(), ctl, 120);
  for (std::size_t i = 0; i < run.size(); ++i) {
    TokenSequence seq = build_window(run, i, c, m->horizon());
    for (auto& st : seq.steps)
      if (!st.is_pad) st.omega = trace[static_cast<std::size_t>(st.stream_index)];
    EXPECT_EQ(m->act(seq), run[i].action) << i;
  }
}

TEST(DtCheckpoint, RoundTrip) {
  DtConfig c = tiny_config();
  const auto data = greedy_stream(200, 4);
  c.training_steps = 10;
  const auto trained = dt_train(data, EnvConfig{}, c);
  const auto base = (std::filesystem::temp_directory_path() / "offla_dt_ckpt").string();
  nn::save_checkpoint(trained->parameters(), base, 42);
  DecisionTransformer fresh(EnvConfig{}, c);
  nn::load_checkpoint(fresh.parameters(), base, 42);
  const auto seq = build_recent_transmissions(data, fresh.horizon());
  EXPECT_EQ(last_logits(fresh, seq), last_logits(*trained, seq));
  std::filesystem::remove(base + ".bin");
  std::filesystem::remove(base + ".json");
}
