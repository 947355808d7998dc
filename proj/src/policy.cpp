#include "tact/policy.hpp"

#include <stdexcept>

namespace tact::policy {

using diff::ParamSet;
using diff::Tensor;

namespace {

struct Layout {
  const char* name;
  std::size_t rows, cols;
};

std::vector<Layout> layout(const ModelConfig& c) {
  const std::size_t V = c.vocab_size, E = c.embedding_dim, H = c.hidden_dim, A = c.attention_dim;
  return {
      {"embedding", V, E},
      {"enc_fwd.W_x", E, 4 * H},
      {"enc_fwd.W_h", H, 4 * H},
      {"enc_fwd.b", 1, 4 * H},
      {"enc_bwd.W_x", E, 4 * H},
      {"enc_bwd.W_h", H, 4 * H},
      {"enc_bwd.b", 1, 4 * H},
      {"dec.init.W", 2 * H, H},
      {"dec.init.b", 1, H},
      {"dec.bos", 1, E},
      {"dec.W_x", E + 2 * H, 4 * H},
      {"dec.W_h", H, 4 * H},
      {"dec.b", 1, 4 * H},
      {"attn.W_dec", H, A},
      {"attn.W_enc", 2 * H, A},
      {"attn.v", A, 1},
      {"proj.W", 3 * H, V},
      {"proj.b", 1, V},
  };
}

void validate(const ModelConfig& c) {
  if (c.vocab_size == 0 || c.embedding_dim == 0 || c.hidden_dim == 0 || c.attention_dim == 0) {
    throw std::invalid_argument("ModelConfig: all dimensions must be positive");
  }
  if (!(c.dropout_keep > 0.0 && c.dropout_keep <= 1.0)) {
    throw std::invalid_argument("ModelConfig: dropout_keep must be in (0, 1]");
  }
}

}  // namespace

MaskFn bernoulli_masks(Rng& rng, double keep) {
  if (keep >= 1.0) return {};
  return [&rng, keep](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    return m;
  };
}

Policy::Policy(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  Rng rng(seed);
  for (const auto& l : layout(config_)) {
    Tensor t({l.rows, l.cols});
    for (double& v : t.values()) v = config_.init_scale * (2.0 * rng.uniform() - 1.0);
    params_.add(l.name, std::move(t));
  }
  bind_slots();
}

Policy::Policy(const ModelConfig& config, ParamSet params) : config_(config), params_(std::move(params)) {
  validate(config_);
  for (const auto& l : layout(config_)) {
    auto idx = params_.find(l.name);
    if (!idx) throw std::invalid_argument(std::string("Policy: missing tensor ") + l.name);
    const auto& shape = params_[*idx].shape();
    if (shape != std::vector<std::size_t>{l.rows, l.cols}) {
      throw std::invalid_argument(std::string("Policy: tensor ") + l.name + " has shape " +
                                  diff::shape_string(shape) + ", expected " +
                                  diff::shape_string({l.rows, l.cols}));
    }
  }
  bind_slots();
}

ModelConfig Policy::infer_config(const ParamSet& params) {
  ModelConfig c;
  const auto& emb = params.at("embedding").shape();
  const auto& attn = params.at("attn.W_dec").shape();
  if (emb.size() != 2 || attn.size() != 2) throw std::invalid_argument("infer_config: malformed tensors");
  c.vocab_size = emb[0];
  c.embedding_dim = emb[1];
  c.hidden_dim = attn[0];
  c.attention_dim = attn[1];
  return c;
}

void Policy::bind_slots() {
  auto at = [&](const char* n) { return params_.index(n); };
  slots_ = Slots{at("embedding"), at("enc_fwd.W_x"), at("enc_fwd.W_h"), at("enc_fwd.b"), at("enc_bwd.W_x"),
                 at("enc_bwd.W_h"), at("enc_bwd.b"), at("dec.init.W"), at("dec.init.b"), at("dec.bos"),
                 at("dec.W_x"), at("dec.W_h"), at("dec.b"), at("attn.W_dec"), at("attn.W_enc"), at("attn.v"),
                 at("proj.W"), at("proj.b")};
}

Graph::Graph(Tape& tape, const Policy& policy, const ParamSet& params, MaskFn masks)
    : tape_(tape), policy_(policy), params_(params), masks_(std::move(masks)) {
  if (&params != &policy.params() && !params.same_layout(policy.params())) {
    throw std::invalid_argument("Graph: parameter layout differs from policy");
  }
}

Var Graph::maybe_dropout(Var x) {
  if (!masks_) return x;
  return tape_.dropout_mask_apply(x, masks_(x.rows(), x.cols()));
}

Graph::Cell Graph::lstm(Var gates, Var c_prev) {
  const auto H = static_cast<Eigen::Index>(policy_.config().hidden_dim);
  Var i = tape_.sigmoid(tape_.slice_cols(gates, 0, H));
  Var f = tape_.sigmoid(tape_.slice_cols(gates, H, H));
  Var g = tape_.tanh(tape_.slice_cols(gates, 2 * H, H));
  Var o = tape_.sigmoid(tape_.slice_cols(gates, 3 * H, H));
  Var c = tape_.add(tape_.mul(f, c_prev), tape_.mul(i, g));
  Var h = tape_.mul(o, tape_.tanh(c));
  return {h, c};
}

Encoding Graph::encode(std::span<const TokenId> context) {
  if (context.empty()) throw std::invalid_argument("encode: empty context");
  const auto& s = policy_.slots();
  const auto H = static_cast<Eigen::Index>(policy_.config().hidden_dim);
  const auto L = static_cast<Eigen::Index>(context.size());
  std::vector<int> ids(context.begin(), context.end());
  Var x = maybe_dropout(tape_.embedding_lookup(param(s.embedding), ids));

  auto run = [&](std::size_t wx, std::size_t wh, std::size_t b, bool reverse) {
    Var inputs = tape_.add_row_broadcast(tape_.matmul(x, param(wx)), param(b));
    std::vector<Var> hs(static_cast<std::size_t>(L));
    Var c = tape_.constant(Matrix::Zero(1, H));
    std::optional<Var> h;
    for (Eigen::Index step = 0; step < L; ++step) {
      const Eigen::Index pos = reverse ? L - 1 - step : step;
      Var gates = tape_.row(inputs, pos);
      if (h) gates = tape_.add(gates, tape_.matmul(*h, param(wh)));
      Cell cell = lstm(gates, c);
      h = cell.h;
      c = cell.c;
      hs[static_cast<std::size_t>(pos)] = cell.h;
    }
    return hs;
  };
  std::vector<Var> fwd = run(s.enc_fwd_wx, s.enc_fwd_wh, s.enc_fwd_b, false);
  std::vector<Var> bwd = run(s.enc_bwd_wx, s.enc_bwd_wh, s.enc_bwd_b, true);

  Encoding enc;
  enc.length = L;
  Var halves[] = {tape_.stack_rows(fwd), tape_.stack_rows(bwd)};
  enc.annotations = tape_.concat_cols(halves);
  enc.keys = tape_.matmul(enc.annotations, param(s.attn_wenc));
  Var ends[] = {fwd.back(), bwd.front()};
  enc.final_state = tape_.concat_cols(ends);
  return enc;
}

DecoderState Graph::initial_state(const Encoding& enc) {
  const auto& s = policy_.slots();
  const auto H = static_cast<Eigen::Index>(policy_.config().hidden_dim);
  DecoderState st;
  st.h = tape_.tanh(tape_.add(tape_.matmul(enc.final_state, param(s.init_w)), param(s.init_b)));
  st.c = tape_.constant(Matrix::Zero(1, H));
  st.context = tape_.constant(Matrix::Zero(1, 2 * H));
  return st;
}

Step Graph::decode_step(const Encoding& enc, const DecoderState& state, TokenId prev) {
  const auto& s = policy_.slots();
  Var emb;
  if (prev == kBos) {
    emb = param(s.bos);
  } else {
    if (prev < 0 || static_cast<std::size_t>(prev) >= policy_.config().vocab_size) {
      throw std::out_of_range("decode_step: token " + std::to_string(prev) + " outside vocabulary");
    }
    const int id[] = {prev};
    emb = tape_.embedding_lookup(param(s.embedding), id);
  }
  emb = maybe_dropout(emb);
  Var in_parts[] = {emb, state.context};
  Var input = tape_.concat_cols(in_parts);
  Var gates = tape_.add(tape_.add(tape_.matmul(input, param(s.dec_wx)), tape_.matmul(state.h, param(s.dec_wh))),
                        param(s.dec_b));
  Cell cell = lstm(gates, state.c);

  Var query = tape_.matmul(cell.h, param(s.attn_wdec));
  Var scores = tape_.matmul(tape_.tanh(tape_.add_row_broadcast(enc.keys, query)), param(s.attn_v));
  Var alpha = tape_.softmax(tape_.transpose(scores));
  Var context = tape_.matmul(alpha, enc.annotations);

  Var out_parts[] = {cell.h, context};
  Var logits = tape_.add(tape_.matmul(tape_.concat_cols(out_parts), param(s.proj_w)), param(s.proj_b));
  Step step;
  step.log_probs = tape_.log_softmax(logits);
  step.attention = alpha;
  step.state = DecoderState{cell.h, cell.c, context};
  return step;
}

std::vector<Var> Graph::teacher_forced(const Encoding& enc, std::span<const TokenId> tokens) {
  std::vector<Var> out;
  out.reserve(tokens.size());
  DecoderState st = initial_state(enc);
  TokenId prev = kBos;
  for (TokenId tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= policy_.config().vocab_size) {
      throw std::out_of_range("teacher_forced: token " + std::to_string(tok) + " outside vocabulary");
    }
    Step step = decode_step(enc, st, prev);
    out.push_back(tape_.pick(step.log_probs, 0, tok));
    st = step.state;
    prev = tok;
  }
  return out;
}

EncoderAnnotations encode(const Policy& policy, std::span<const TokenId> context) {
  Tape tape(false);
  Graph g(tape, policy);
  Encoding enc = g.encode(context);
  return EncoderAnnotations{Matrix(enc.annotations.value()), Matrix(enc.final_state.value())};
}

Decoder::Decoder(const Policy& policy, std::span<const TokenId> context) : graph_(tape_, policy) {
  enc_ = graph_.encode(context);
  step_ = graph_.decode_step(enc_, graph_.initial_state(enc_), kBos);
}

std::vector<double> Decoder::log_distribution() const {
  auto v = step_.log_probs.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> Decoder::distribution() const {
  std::vector<double> p = log_distribution();
  for (double& x : p) x = std::exp(x);
  return p;
}

std::vector<double> Decoder::attention() const {
  auto v = step_.attention.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

void Decoder::advance(TokenId token) { step_ = graph_.decode_step(enc_, step_.state, token); }

SequenceLogProb sequence_log_prob(const Policy& policy, std::span<const TokenId> context,
                                  std::span<const TokenId> tokens) {
  if (tokens.empty() || tokens.back() != corpus::Vocabulary::kEos) {
    throw std::invalid_argument("sequence_log_prob: tokens must end with EOS");
  }
  SequenceLogProb out;
  out.per_step = step_log_probs(policy, context, tokens);
  for (double v : out.per_step) out.total += v;
  return out;
}

std::vector<double> step_log_probs(const Policy& policy, std::span<const TokenId> context,
                                   std::span<const TokenId> tokens) {
  Tape tape(false);
  Graph g(tape, policy);
  Encoding enc = g.encode(context);
  std::vector<double> out;
  for (Var v : g.teacher_forced(enc, tokens)) out.push_back(v.scalar());
  return out;
}

std::vector<TokenId> greedy_decode(const Policy& policy, std::span<const TokenId> context, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  Decoder dec(policy, context);
  std::vector<TokenId> out;
  while (out.size() < max_len) {
    const std::vector<double> lp = dec.log_distribution();
    TokenId best = 0;
    for (std::size_t i = 1; i < lp.size(); ++i) {
      if (lp[i] > lp[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(i);
    }
    out.push_back(best);
    if (best == corpus::Vocabulary::kEos) break;
    dec.advance(best);
  }
  return out;
}

}  // namespace tact::policy
