#pragma once

#include "tact/corpus.hpp"
#include "tact/diff/tape.hpp"
#include "tact/rng.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace tact::policy {

using corpus::TokenId;
using diff::Matrix;
using diff::Tape;
using diff::Var;

/// Pseudo-token that conditions the first decoder step. Never emitted.
inline constexpr TokenId kBos = -1;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 300;
  std::size_t hidden_dim = 353;
  std::size_t attention_dim = 353;
  double dropout_keep = 0.8;
  double init_scale = 0.08;

  bool operator==(const ModelConfig&) const = default;
};

/// Produces an inverted-dropout mask of the requested shape. An empty
/// function disables dropout.
using MaskFn = std::function<Matrix(Eigen::Index rows, Eigen::Index cols)>;

/// Mask drawing Bernoulli(keep) / keep entries from `rng`.
MaskFn bernoulli_masks(Rng& rng, double keep);

/// Attention encoder-decoder parameters. Tensor names:
///   embedding                      vocab x E
///   enc_fwd.{W_x,W_h,b}, enc_bwd.* bidirectional LSTM encoder (gate order i,f,g,o)
///   dec.init.{W,b}                 encoder final states -> decoder h0
///   dec.bos                        begin-of-sequence input embedding
///   dec.{W_x,W_h,b}                decoder LSTM; input is [embedding; previous attention context]
///   attn.{W_dec,W_enc,v}           additive attention scorer
///   proj.{W,b}                     [h; context] -> vocabulary logits
class Policy {
 public:
  /// Uniform initialization in [-init_scale, init_scale].
  Policy(const ModelConfig& config, std::uint64_t seed);
  /// Adopts existing parameters; throws if their shapes disagree with config.
  Policy(const ModelConfig& config, diff::ParamSet params);

  /// Infers dimensions from the tensor shapes of a parameter set.
  static ModelConfig infer_config(const diff::ParamSet& params);

  const ModelConfig& config() const { return config_; }
  const diff::ParamSet& params() const { return params_; }
  diff::ParamSet& params() { return params_; }

  struct Slots {
    std::size_t embedding, enc_fwd_wx, enc_fwd_wh, enc_fwd_b, enc_bwd_wx, enc_bwd_wh, enc_bwd_b, init_w, init_b,
        bos, dec_wx, dec_wh, dec_b, attn_wdec, attn_wenc, attn_v, proj_w, proj_b;
  };
  const Slots& slots() const { return slots_; }

 private:
  void bind_slots();
  ModelConfig config_;
  diff::ParamSet params_;
  Slots slots_{};
};

/// Encoder output on a tape.
struct Encoding {
  Var annotations;  // L x 2H, [forward; backward] per position
  Var keys;         // L x A, annotations projected for attention
  Var final_state;  // 1 x 2H, [last forward; first backward]
  Eigen::Index length = 0;
};

struct DecoderState {
  Var h;
  Var c;
  Var context;  // previous attention context, 1 x 2H
};

struct Step {
  Var log_probs;  // 1 x vocab
  Var attention;  // 1 x L
  DecoderState state;
};

/// Graph-building forward pass. All functions append to `tape`; parameters
/// are drawn from policy.params().
class Graph {
 public:
  Graph(Tape& tape, const Policy& policy, MaskFn masks = {}) : Graph(tape, policy, policy.params(), std::move(masks)) {}
  /// Uses `params` in place of policy.params(); the layouts must match.
  Graph(Tape& tape, const Policy& policy, const diff::ParamSet& params, MaskFn masks = {});

  Encoding encode(std::span<const TokenId> context);
  DecoderState initial_state(const Encoding& enc);
  Step decode_step(const Encoding& enc, const DecoderState& state, TokenId prev);

  /// Teacher-forced log-probabilities of `tokens`, one scalar node per step.
  std::vector<Var> teacher_forced(const Encoding& enc, std::span<const TokenId> tokens);

  Tape& tape() { return tape_; }

 private:
  struct Cell {
    Var h, c;
  };
  Cell lstm(Var gates, Var c_prev);
  Var param(std::size_t slot) { return tape_.param(params_, slot); }
  Var maybe_dropout(Var x);

  Tape& tape_;
  const Policy& policy_;
  const diff::ParamSet& params_;
  MaskFn masks_;
};

struct EncoderAnnotations {
  Matrix annotations;   // L x 2H
  Matrix final_state;   // 1 x 2H
};

/// Value-level encoder (no dropout). Throws std::invalid_argument on an
/// empty context.
EncoderAnnotations encode(const Policy& policy, std::span<const TokenId> context);

/// Incremental decoder for evaluation and sampling (no dropout, no gradients).
class Decoder {
 public:
  Decoder(const Policy& policy, std::span<const TokenId> context);
  Decoder(const Decoder&) = delete;
  Decoder& operator=(const Decoder&) = delete;

  /// Distribution over the vocabulary for the next token.
  std::vector<double> distribution() const;
  std::vector<double> log_distribution() const;
  /// Attention weights of the most recent step.
  std::vector<double> attention() const;
  /// Feeds `token` as the previous token and advances one step.
  void advance(TokenId token);

 private:
  Tape tape_{false};
  Graph graph_;
  Encoding enc_;
  Step step_;
};

struct SequenceLogProb {
  double total = 0.0;
  std::vector<double> per_step;
};

/// log pi(tokens | context) under teacher forcing. tokens must end with EOS;
/// ids outside the vocabulary throw std::out_of_range.
SequenceLogProb sequence_log_prob(const Policy& policy, std::span<const TokenId> context,
                                  std::span<const TokenId> tokens);

/// Per-step teacher-forced log-probabilities; no EOS requirement.
std::vector<double> step_log_probs(const Policy& policy, std::span<const TokenId> context,
                                   std::span<const TokenId> tokens);

/// Argmax decoding, lowest id wins ties. Stops after EOS or max_len tokens.
std::vector<TokenId> greedy_decode(const Policy& policy, std::span<const TokenId> context, std::size_t max_len);

}  // namespace tact::policy
