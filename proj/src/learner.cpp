#include "tact/learner.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tact::learner {

using corpus::Vocabulary;
using diff::Tape;
using diff::Var;

double is_coefficient(const IsStrategy& strategy, double pi_prob, double q_prob) {
  if (strategy.kind == IsKind::Constant) return strategy.value;
  if (q_prob <= 0.0) throw std::domain_error("is_coefficient: behavior probability is zero; use a clipped or constant strategy");
  const double ratio = pi_prob / q_prob;
  return strategy.kind == IsKind::Clipped ? std::min(ratio, strategy.value) : ratio;
}

void LearnerConfig::validate() const {
  if (!(lambda_e >= 0.0 && lambda_e <= 1.0)) throw std::invalid_argument("learner.lambda_e must be in [0,1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learner.learning_rate must be positive");
  if (!(baseline_decay >= 0.0 && baseline_decay <= 1.0)) {
    throw std::invalid_argument("learner.baseline_decay must be in [0,1]");
  }
  if (is.kind == IsKind::Constant && !(is.value > 0.0)) throw std::invalid_argument("learner.is_constant must be positive");
  if (is.kind == IsKind::Clipped && !(is.value > 0.0)) throw std::invalid_argument("learner.is_clip must be positive");
}

Baseline::Baseline(std::size_t max_len, double decay) : values_(max_len, 0.0), decay_(decay) {}

void Baseline::update(std::span<const double> q) {
  const std::size_t n = std::min(q.size(), values_.size());
  for (std::size_t t = 0; t < n; ++t) values_[t] = decay_ * values_[t] + (1.0 - decay_) * q[t];
}

std::vector<double> on_policy_weights(std::span<const double> rewards, const Baseline& baseline, double gamma) {
  std::vector<double> w = mdp::returns(rewards, gamma);
  for (std::size_t t = 0; t < w.size(); ++t) w[t] -= baseline.at(t);
  return w;
}

std::vector<double> off_policy_weights(std::span<const double> rewards, std::span<const double> pi_probs,
                                       std::span<const double> q_probs, const IsStrategy& strategy,
                                       const Baseline& baseline, double gamma) {
  const std::size_t T = rewards.size();
  if (strategy.needs_behavior() && (pi_probs.size() != T || q_probs.size() != T)) {
    throw std::invalid_argument("off_policy_weights: probabilities must cover every step");
  }
  const std::vector<double> g = mdp::returns(rewards, gamma);
  std::vector<double> w(T);
  if (strategy.kind == IsKind::Constant) {
    const double log_c = std::log(strategy.value);
    for (std::size_t t = 0; t < T; ++t) {
      const double product = std::exp(static_cast<double>(T - t) * log_c);
      w[t] = strategy.value * (product * g[t] - baseline.at(t));
    }
    return w;
  }
  std::vector<double> rho(T);
  for (std::size_t t = 0; t < T; ++t) rho[t] = is_coefficient(strategy, pi_probs[t], q_probs[t]);
  double product = 1.0;
  for (std::size_t t = T; t-- > 0;) {
    product *= rho[t];
    w[t] = rho[t] * (product * g[t] - baseline.at(t));
  }
  return w;
}

ParamSet weighted_log_prob_gradient(const policy::Policy& policy, std::span<const TokenId> context,
                                    std::span<const TokenId> actions, std::span<const double> weights) {
  if (weights.size() != actions.size()) throw std::invalid_argument("weighted_log_prob_gradient: size mismatch");
  Tape tape;
  policy::Graph graph(tape, policy);
  policy::Encoding enc = graph.encode(context);
  std::vector<Var> lp = graph.teacher_forced(enc, actions);
  tape.backward(tape.linear(lp, weights));
  return tape.gradients(policy.params());
}

namespace {

void require_kind(const mdp::Episode& ep, mdp::EpisodeKind kind, const char* fn) {
  if (ep.kind != kind) throw std::invalid_argument(std::string(fn) + ": wrong episode kind");
  if (ep.rewards.size() != ep.T()) throw std::invalid_argument(std::string(fn) + ": episode is not scored");
}

}  // namespace

ParamSet on_policy_gradient(const policy::Policy& policy, const mdp::Episode& episode, const Baseline& baseline,
                            double gamma) {
  require_kind(episode, mdp::EpisodeKind::Sampled, "on_policy_gradient");
  return weighted_log_prob_gradient(policy, episode.context, episode.actions,
                                    on_policy_weights(episode.rewards, baseline, gamma));
}

ParamSet off_policy_gradient(const policy::Policy& policy, const mdp::Episode& reference,
                             std::span<const double> q_probs, const IsStrategy& strategy, const Baseline& baseline,
                             double gamma) {
  require_kind(reference, mdp::EpisodeKind::Reference, "off_policy_gradient");
  std::vector<double> pi;
  if (strategy.needs_behavior()) {
    for (double lp : policy::step_log_probs(policy, reference.context, reference.actions)) {
      pi.push_back(std::exp(lp));
    }
  }
  return weighted_log_prob_gradient(policy, reference.context, reference.actions,
                                    off_policy_weights(reference.rewards, pi, q_probs, strategy, baseline, gamma));
}

std::vector<double> ModelBehavior::step_probabilities(std::span<const TokenId> context,
                                                      std::span<const TokenId> target) const {
  std::vector<double> p = policy::step_log_probs(model_, context, target);
  for (double& x : p) x = std::exp(x);
  return p;
}

Adam::Adam(const ParamSet& like, double learning_rate, double beta1, double beta2, double epsilon)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::ascend(ParamSet& params, const ParamSet& grad) {
  if (!grad.same_layout(m_) || !params.same_layout(m_)) throw std::invalid_argument("Adam: layout mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto g = grad[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] += lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::save(diff::Checkpoint& ckpt) const {
  ckpt.put_params("opt.m.", m_);
  ckpt.put_params("opt.v.", v_);
  ckpt.put_scalar("opt.step", static_cast<double>(t_));
}

void Adam::load(const diff::Checkpoint& ckpt) {
  ckpt.read_params("opt.m.", m_);
  ckpt.read_params("opt.v.", v_);
  t_ = static_cast<std::uint64_t>(ckpt.scalar("opt.step"));
}

ParamSet combine(const ParamSet& g_on, const ParamSet& g_off, double lambda_e) {
  const ParamSet& like = g_on.size() ? g_on : g_off;
  ParamSet out = like.zeros_like();
  if (lambda_e != 0.0) out.axpy(lambda_e, g_on);
  if (lambda_e != 1.0) out.axpy(1.0 - lambda_e, g_off);
  return out;
}

void check_finite(const ParamSet& grad) {
  if (auto bad = grad.first_non_finite()) throw NonFiniteGradient("non-finite gradient in tensor " + *bad);
}

ParamSet combine_and_update(ParamSet& params, const ParamSet& g_on, const ParamSet& g_off, double lambda_e,
                            Adam& optimizer) {
  ParamSet g = combine(g_on, g_off, lambda_e);
  check_finite(g);
  optimizer.ascend(params, g);
  return g;
}

std::vector<TurnExample> turn_examples(const std::vector<corpus::Dialog>& dialogs, const Vocabulary& vocab) {
  std::vector<TurnExample> out;
  for (const auto& d : dialogs) {
    std::vector<corpus::Context> ctx = corpus::build_contexts(d, vocab);
    for (std::size_t k = 0; k < d.K(); ++k) {
      out.push_back({std::move(ctx[k].tokens), corpus::encode_target(d.turns[k].agent, vocab)});
    }
  }
  return out;
}

double mean_nll(const policy::Policy& policy, const std::vector<TurnExample>& examples) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    nll -= policy::sequence_log_prob(policy, ex.context, ex.target).total;
    tokens += ex.target.size();
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

double perplexity(const policy::Policy& policy, const std::vector<TurnExample>& examples) {
  return std::exp(mean_nll(policy, examples));
}

CrossEntropyTrainer::CrossEntropyTrainer(policy::Policy& policy, double learning_rate, std::uint64_t dropout_seed)
    : policy_(policy), adam_(policy.params(), learning_rate), dropout_rng_(dropout_seed) {}

double CrossEntropyTrainer::step(const TurnExample& ex) {
  Tape tape;
  policy::Graph graph(tape, policy_, policy::bernoulli_masks(dropout_rng_, policy_.config().dropout_keep));
  policy::Encoding enc = graph.encode(ex.context);
  std::vector<Var> lp = graph.teacher_forced(enc, ex.target);
  const std::vector<double> ones(lp.size(), 1.0);
  Var ll = tape.linear(lp, ones);
  const double nll = -ll.scalar();
  tape.backward(ll);
  ParamSet g = tape.gradients(policy_.params());
  check_finite(g);
  adam_.ascend(policy_.params(), g);
  return nll;
}

ModelBehavior fit_behavior_model(const std::vector<TurnExample>& examples, const policy::ModelConfig& config,
                                 std::size_t epochs, std::uint64_t seed, double learning_rate) {
  if (examples.empty()) throw std::invalid_argument("fit_behavior_model: empty corpus");
  policy::Policy model(config, substream_seed(seed, "behavior.init"));
  CrossEntropyTrainer trainer(model, learning_rate, substream_seed(seed, "behavior.dropout"));
  Rng order_rng(substream_seed(seed, "behavior.shuffle"));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t e = 0; e < epochs; ++e) {
    order_rng.shuffle(order);
    for (std::size_t i : order) trainer.step(examples[i]);
  }
  return ModelBehavior(std::move(model));
}

}  // namespace tact::learner
