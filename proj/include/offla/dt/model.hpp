#pragma once

// GPT-style return-conditioned policy over (omega, state, action) token triples.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "offla/agents/encoding.hpp"
#include "offla/datasets/conditioning.hpp"
#include "offla/datasets/packets.hpp"
#include "offla/datasets/trajectory.hpp"
#include "offla/nn/nn.hpp"

namespace offla {

enum class TrajectoryMode { Recent, Consecutive };

inline std::string_view to_string(TrajectoryMode m) { return m == TrajectoryMode::Recent ? "recent" : "consecutive"; }

inline TrajectoryMode parse_trajectory_mode(std::string_view s) {
  if (s == "recent") return TrajectoryMode::Recent;
  if (s == "consecutive") return TrajectoryMode::Consecutive;
  throw std::invalid_argument("unknown trajectory mode: " + std::string(s));
}

struct DtConfig {
  int n_layers = 4;
  int n_heads = 8;
  int d_model = 64;
  int mlp_ratio = 4;
  nn::Activation activation = nn::Activation::Gelu;
  int n_packets = 2;
  int context_steps = 0;  // 0: min(32, n_states * n_packets)
  TrajectoryMode mode = TrajectoryMode::Recent;
  int training_steps = 30000;
  double lr = 1e-4;
  int batch_size = 64;
  double weight_decay = 1e-4;
  nn::PositionalKind pos_encoding = nn::PositionalKind::Ct;
  ConditioningSpec conditioning;
  std::uint64_t seed = 0;

  int context(int n_states) const { return context_steps > 0 ? context_steps : std::min(32, n_states * n_packets); }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("DtConfig: ") + what);
    };
    require(n_layers >= 1 && n_heads >= 1 && d_model >= 2 && mlp_ratio >= 1, "layer sizes must be positive");
    require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(n_packets >= 1 && context_steps >= 0, "context must be positive");
    require(training_steps >= 0 && batch_size >= 1, "counts must be positive");
    require(lr >= 0.0 && weight_decay >= 0.0, "lr and weight_decay must be >= 0");
    conditioning.validate();
  }
};

/// Row of the state token of step h in sequence b.
inline int state_token_row(int b, int h, int horizon) { return (b * horizon + h) * kTokensPerStep + 1; }

class DecisionTransformer {
 public:
  DecisionTransformer(const EnvConfig& env, const DtConfig& cfg)
      : cfg_(cfg), enc_(env), n_actions_(env.n_actions), horizon_(cfg.context(env.n_states)) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const int d = cfg.d_model;
    constexpr double kStd = 0.02;
    omega_embed_ = nn::Linear(1, d, rng, nn::Init::Normal, kStd);
    state_embed_ = nn::Linear(enc_.width(), d, rng, nn::Init::Normal, kStd);
    action_embed_ = nn::Embedding(n_actions_, d, rng, kStd);
    pos_ = nn::PositionalEncoder(cfg.pos_encoding, horizon_, d, rng);
    embed_norm_ = nn::LayerNorm(d);
    for (int l = 0; l < cfg.n_layers; ++l) {
      Block blk;
      blk.ln1 = nn::LayerNorm(d);
      blk.attn = nn::MultiHeadSelfAttention(d, cfg.n_heads, rng, kStd);
      blk.ln2 = nn::LayerNorm(d);
      blk.fc1 = nn::Linear(d, cfg.mlp_ratio * d, rng, nn::Init::Normal, kStd);
      blk.fc2 = nn::Linear(cfg.mlp_ratio * d, d, rng, nn::Init::Normal, kStd);
      blocks_.push_back(std::move(blk));
    }
    final_norm_ = nn::LayerNorm(d);
    head_ = nn::Linear(d, n_actions_, rng, nn::Init::Normal, kStd);
  }

  /// Final-layer token representations, (B * 3H) x d_model.
  nn::Tensor hidden(std::span<const TokenSequence> seqs) const {
    if (seqs.empty()) throw std::invalid_argument("DecisionTransformer: empty batch");
    const int H = horizon_;
    std::vector<Observation> obs;
    std::vector<int> actions;
    std::vector<int> step_index;
    std::vector<double> delta_t;
    std::vector<BoolMatrix> masks;
    nn::Matrix omega(static_cast<Eigen::Index>(seqs.size()) * H, 1);
    Eigen::Index row = 0;
    for (const auto& seq : seqs) {
      if (seq.horizon() != H) throw nn::ShapeError("DecisionTransformer: sequence horizon mismatch");
      for (int h = 0; h < H; ++h) {
        const TokenStep& s = seq.steps[static_cast<std::size_t>(h)];
        omega(row++, 0) = s.is_pad ? 0.0 : s.omega;
        obs.push_back(s.obs);
        actions.push_back(s.is_pad ? -1 : s.action - 1);
        for (int i = 0; i < kTokensPerStep; ++i) {
          step_index.push_back(h);
          delta_t.push_back(static_cast<double>(s.delta_t));
        }
      }
      masks.push_back(seq.attn_mask);
    }
    nn::Tensor tokens = nn::interleave_rows({omega_embed_(nn::Tensor::constant(std::move(omega))),
                                             state_embed_(nn::Tensor::constant(enc_.encode(obs))),
                                             action_embed_(actions)});
    nn::Tensor x = embed_norm_(nn::add(tokens, pos_(step_index, delta_t)));
    for (const auto& blk : blocks_) {
      x = nn::add(x, blk.attn(blk.ln1(x), masks));
      x = nn::add(x, blk.fc2(nn::activate(blk.fc1(blk.ln2(x)), cfg_.activation)));
    }
    return final_norm_(x);
  }

  /// Action logits read at the given token rows.
  nn::Tensor logits(std::span<const TokenSequence> seqs, std::span<const int> rows) const {
    return head_(nn::select_rows(hidden(seqs), rows));
  }

  /// Mean cross-entropy of the action head at every non-pad state token.
  nn::Tensor loss(std::span<const TokenSequence> seqs) const {
    std::vector<int> rows;
    std::vector<int> targets;
    for (std::size_t b = 0; b < seqs.size(); ++b)
      for (int h = 0; h < horizon_; ++h) {
        const TokenStep& s = seqs[b].steps[static_cast<std::size_t>(h)];
        if (s.is_pad) continue;
        rows.push_back(state_token_row(static_cast<int>(b), h, horizon_));
        targets.push_back(s.action - 1);
      }
    if (rows.empty()) return nn::Tensor::constant(nn::Matrix::Zero(1, 1));
    return nn::softmax_cross_entropy(logits(seqs, rows), targets);
  }

  /// Greedy action (1-based) at the last state token of `seq`.
  int act(const TokenSequence& seq) const {
    nn::NoGradGuard guard;
    const int row = state_token_row(0, horizon_ - 1, horizon_);
    const nn::Matrix l = logits(std::span(&seq, 1), std::span(&row, 1)).value();
    Eigen::Index best = 0;
    l.row(0).maxCoeff(&best);
    return static_cast<int>(best) + 1;
  }

  nn::ParameterList parameters() const {
    nn::ParameterList out = omega_embed_.parameters("embed.omega");
    nn::append(out, state_embed_.parameters("embed.state"));
    nn::append(out, action_embed_.parameters("embed.action"));
    nn::append(out, pos_.parameters("embed.pos"));
    nn::append(out, embed_norm_.parameters("embed.norm"));
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const std::string p = "block" + std::to_string(l);
      nn::append(out, blocks_[l].ln1.parameters(p + ".ln1"));
      nn::append(out, blocks_[l].attn.parameters(p + ".attn"));
      nn::append(out, blocks_[l].ln2.parameters(p + ".ln2"));
      nn::append(out, blocks_[l].fc1.parameters(p + ".fc1"));
      nn::append(out, blocks_[l].fc2.parameters(p + ".fc2"));
    }
    nn::append(out, final_norm_.parameters("final_norm"));
    nn::append(out, head_.parameters("head"));
    return out;
  }

  const DtConfig& config() const { return cfg_; }
  const ObservationEncoder& encoder() const { return enc_; }
  int horizon() const { return horizon_; }
  int n_actions() const { return n_actions_; }

 private:
  struct Block {
    nn::LayerNorm ln1;
    nn::MultiHeadSelfAttention attn;
    nn::LayerNorm ln2;
    nn::Linear fc1;
    nn::Linear fc2;
  };

  DtConfig cfg_;
  ObservationEncoder enc_;
  int n_actions_;
  int horizon_;
  nn::Linear omega_embed_;
  nn::Linear state_embed_;
  nn::Embedding action_embed_;
  nn::PositionalEncoder pos_;
  nn::LayerNorm embed_norm_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;
};

/// Window ending at (and including) position `end` of a single-seed stream.
inline TokenSequence build_window(std::span<const Transition> stream, std::size_t end, const DtConfig& cfg,
                                  int horizon) {
  const auto prefix = stream.subspan(0, end + 1);
  return cfg.mode == TrajectoryMode::Recent ? build_recent_transmissions(prefix, horizon)
                                            : build_consecutive_packets(prefix, cfg.n_packets, horizon);
}

/// Training-time conditioning value of every transition, aligned with the stream.
/// CCTR trains on the same per-packet returns as VANILLA.
inline std::vector<double> training_omegas(std::span<const Transition> stream, const ConditioningSpec& spec) {
  if (spec.kind == ConditioningKind::Davg) return davg_rtgs(stream, spec.gamma, spec.window);
  return vanilla_rtgs(stream, spec.gamma);
}

/// A logged dataset prepared for sequence sampling: one stream per seed, with
/// the conditioning value of every transition.
class DtDataset {
 public:
  DtDataset(std::span<const Transition> data, const DtConfig& cfg, int horizon) : cfg_(cfg), horizon_(horizon) {
    if (data.empty()) throw std::invalid_argument("DtDataset: empty dataset");
    for (auto s : split_by_seed(data)) {
      streams_.emplace_back(s.begin(), s.end());
      omegas_.push_back(training_omegas(streams_.back(), cfg.conditioning));
    }
    for (std::size_t s = 0; s < streams_.size(); ++s)
      for (std::size_t i = 0; i < streams_[s].size(); ++i) index_.emplace_back(s, i);
  }

  std::size_t size() const { return index_.size(); }

  TokenSequence sequence(std::size_t n) const {
    const auto [s, i] = index_.at(n);
    TokenSequence seq = build_window(streams_[s], i, cfg_, horizon_);
    for (auto& step : seq.steps)
      if (!step.is_pad) step.omega = omegas_[s][static_cast<std::size_t>(step.stream_index)];
    return seq;
  }

  std::vector<TokenSequence> sample(std::mt19937_64& rng, int batch) const {
    std::uniform_int_distribution<std::size_t> pick(0, index_.size() - 1);
    std::vector<TokenSequence> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) out.push_back(sequence(pick(rng)));
    return out;
  }

  std::span<const TransitionStream> streams() const { return streams_; }

 private:
  DtConfig cfg_;
  int horizon_;
  std::vector<TransitionStream> streams_;
  std::vector<std::vector<double>> omegas_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;
};

struct DtTrainStats {
  std::vector<double> losses;
};

inline std::shared_ptr<DecisionTransformer> dt_train(std::span<const Transition> data, const EnvConfig& env,
                                                     const DtConfig& cfg, DtTrainStats* stats = nullptr) {
  auto model = std::make_shared<DecisionTransformer>(env, cfg);
  const DtDataset dataset(data, cfg, model->horizon());
  nn::Adam opt(model->parameters(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  std::mt19937_64 rng(cfg.seed + 1);
  for (int step = 0; step < cfg.training_steps; ++step) {
    const auto batch = dataset.sample(rng, cfg.batch_size);
    nn::Tensor loss = model->loss(batch);
    if (!std::isfinite(loss.item())) throw std::runtime_error("dt_train: non-finite loss");
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
    if (stats) stats->losses.push_back(loss.item());
  }
  return model;
}

}  // namespace offla
