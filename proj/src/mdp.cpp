#include "tact/mdp.hpp"

#include <cmath>
#include <stdexcept>

namespace tact::mdp {

using corpus::Vocabulary;

bool is_terminal(const State& s) { return !s.prefix.empty() && s.prefix.back() == Vocabulary::kEos; }

State transition(const State& s, TokenId action) {
  if (is_terminal(s)) throw std::logic_error("transition: state is terminal");
  State next = s;
  next.prefix.push_back(action);
  return next;
}

void RewardConfig::validate() const {
  const std::pair<const char*, double> lambdas[] = {
      {"lambda_a", lambda_a}, {"lambda_b", lambda_b}, {"lambda_c", lambda_c}, {"lambda_d", lambda_d}};
  for (const auto& [name, v] : lambdas) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("reward.") + name + " must be in [0,1]");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("reward.gamma must be in (0,1]");
}

std::optional<int> locate_reference_api_turn(const corpus::Dialog& dialog, int k, KPrimeRule rule) {
  const int K = static_cast<int>(dialog.K());
  if (k < 1 || k > K) throw std::out_of_range("locate_reference_api_turn: turn out of range");
  auto is_api = [&](int turn) { return corpus::classify_api_call(dialog.turns[turn - 1].agent).has_value(); };
  if (is_api(k)) return k;
  std::optional<int> future, past;
  for (int j = k + 1; j <= K && !future; ++j) {
    if (is_api(j)) future = j;
  }
  for (int j = k - 1; j >= 1 && !past; --j) {
    if (is_api(j)) past = j;
  }
  if (rule == KPrimeRule::NearestFutureFirst) return future ? future : past;
  return past ? past : future;
}

std::size_t count_correct_parameters(const corpus::ApiCall& generated, const corpus::ApiCall& reference) {
  std::size_t n = 0;
  const std::size_t m = std::min(generated.params.size(), reference.params.size());
  for (std::size_t i = 0; i < m; ++i) n += generated.params[i] == reference.params[i];
  return n;
}

TurnReference make_reference(const corpus::Dialog& dialog, int k, const Vocabulary& vocab, KPrimeRule rule) {
  if (k < 1 || k > static_cast<int>(dialog.K())) throw std::out_of_range("make_reference: turn out of range");
  TurnReference ref;
  ref.k = k;
  const auto& agent = dialog.turns[static_cast<std::size_t>(k - 1)].agent;
  ref.target = corpus::encode_target(agent, vocab);
  ref.target_is_api = corpus::classify_api_call(agent).has_value();
  ref.k_prime = locate_reference_api_turn(dialog, k, rule);
  if (ref.k_prime) {
    ref.k_prime_call = corpus::classify_api_call(dialog.turns[static_cast<std::size_t>(*ref.k_prime - 1)].agent,
                                                 *ref.k_prime);
  }
  return ref;
}

std::optional<corpus::ApiCall> generated_api_call(std::span<const TokenId> z, const Vocabulary& vocab) {
  auto marker = vocab.find(corpus::kApiCallMarker);
  if (!marker || z.empty() || z.front() != *marker) return std::nullopt;
  corpus::Utterance u;
  u.speaker = corpus::Speaker::Agent;
  for (TokenId t : z) {
    if (t == Vocabulary::kEos) break;
    u.tokens.push_back(vocab.token(t));
  }
  return corpus::classify_api_call(u);
}

double dialog_reward(std::span<const TokenId> z, const TurnReference& ref, const Vocabulary& vocab,
                     const RewardConfig& cfg) {
  auto call = generated_api_call(z, vocab);
  if (!call) return ref.target_is_api ? -cfg.lambda_a : 0.0;
  if (!ref.k_prime || ref.k < *ref.k_prime) return -cfg.lambda_b;
  if (ref.k > *ref.k_prime) return -cfg.lambda_c;
  return cfg.lambda_d * static_cast<double>(count_correct_parameters(*call, *ref.k_prime_call));
}

double utterance_reward(std::span<const TokenId> z, const TurnReference& ref, const Vocabulary& vocab,
                        const RewardConfig& cfg) {
  const std::vector<TokenId> cand = bleu::strip_eos(z);
  const std::vector<TokenId> target = bleu::strip_eos(ref.target);
  double r = target.empty() ? 0.0 : bleu::sentence_bleu(cand, target, cfg.bleu);
  if (cfg.dialog_level) r += dialog_reward(z, ref, vocab, cfg);
  return r;
}

double utterance_reward(std::span<const TokenId> z, const corpus::Dialog& dialog, int k, const Vocabulary& vocab,
                        const RewardConfig& cfg) {
  return utterance_reward(z, make_reference(dialog, k, vocab, cfg.k_prime_rule), vocab, cfg);
}

std::vector<double> shaped_rewards(std::span<const TokenId> z, const TurnReference& ref, const Vocabulary& vocab,
                                   const RewardConfig& cfg) {
  if (z.empty()) throw std::invalid_argument("shaped_rewards: empty utterance");
  const std::size_t T = z.size();
  const std::vector<TokenId> target = bleu::strip_eos(ref.target);
  std::vector<double> r(T, 0.0);
  double phi_prev = 0.0;  // potential of the empty prefix
  if (cfg.shaping != Shaping::None && !target.empty()) {
    for (std::size_t t = 1; t < T; ++t) {
      const double phi = bleu::potential(z.first(t), target, z[t - 1] == Vocabulary::kEos, cfg.bleu);
      r[t - 1] = phi - phi_prev;
      phi_prev = phi;
    }
  }
  r[T - 1] = utterance_reward(z, ref, vocab, cfg);
  if (cfg.shaping == Shaping::Strict) r[T - 1] -= phi_prev;
  return r;
}

std::vector<double> returns(std::span<const double> rewards, double gamma) {
  std::vector<double> q(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    q[i] = acc;
  }
  return q;
}

namespace {

TokenId sample(const diff::Var& log_probs, Rng& rng) {
  auto lp = log_probs.value();
  std::vector<double> w(static_cast<std::size_t>(lp.size()));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(lp(0, static_cast<Eigen::Index>(i)));
  return static_cast<TokenId>(rng.categorical(w));
}

}  // namespace

GraphRollout rollout_on_graph(policy::Graph& graph, const policy::Encoding& enc, std::span<const TokenId> context,
                              std::size_t max_len, Rng& rng) {
  if (max_len == 0) throw std::invalid_argument("rollout: max_len must be >= 1");
  GraphRollout out;
  Episode& ep = out.episode;
  ep.context.assign(context.begin(), context.end());
  ep.kind = EpisodeKind::Sampled;
  policy::DecoderState st = graph.initial_state(enc);
  TokenId prev = policy::kBos;
  while (true) {
    policy::Step step = graph.decode_step(enc, st, prev);
    const TokenId a = sample(step.log_probs, rng);
    diff::Var lp = graph.tape().pick(step.log_probs, 0, a);
    ep.actions.push_back(a);
    ep.step_log_probs.push_back(lp.scalar());
    out.log_probs.push_back(lp);
    if (a == Vocabulary::kEos) break;
    if (ep.actions.size() == max_len) {
      ep.truncated = true;
      break;
    }
    st = step.state;
    prev = a;
  }
  return out;
}

Episode rollout(const policy::Policy& policy, std::span<const TokenId> context, std::size_t max_len, Rng& rng) {
  diff::Tape tape(false);
  policy::Graph graph(tape, policy);
  policy::Encoding enc = graph.encode(context);
  return rollout_on_graph(graph, enc, context, max_len, rng).episode;
}

Episode rollout(const policy::Policy& policy, std::span<const TokenId> context, std::size_t max_len,
                std::uint64_t seed) {
  Rng rng(seed);
  return rollout(policy, context, max_len, rng);
}

Episode reference_episode(const policy::Policy& policy, std::span<const TokenId> context,
                          std::span<const TokenId> target) {
  Episode ep;
  ep.context.assign(context.begin(), context.end());
  ep.actions.assign(target.begin(), target.end());
  ep.kind = EpisodeKind::Reference;
  ep.step_log_probs = policy::sequence_log_prob(policy, context, target).per_step;
  return ep;
}

void score(Episode& episode, const TurnReference& ref, const Vocabulary& vocab, const RewardConfig& cfg) {
  episode.rewards = shaped_rewards(episode.actions, ref, vocab, cfg);
}

}  // namespace tact::mdp
