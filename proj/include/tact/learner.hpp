#pragma once

#include "tact/diff/checkpoint.hpp"
#include "tact/mdp.hpp"
#include "tact/policy.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tact::learner {

using corpus::TokenId;
using diff::ParamSet;

enum class IsKind { Constant, Clipped, Estimated };

struct IsStrategy {
  IsKind kind = IsKind::Constant;
  double value = 1.0;  // the constant, or the clip ceiling

  static IsStrategy constant(double c) { return {IsKind::Constant, c}; }
  static IsStrategy clipped(double max) { return {IsKind::Clipped, max}; }
  static IsStrategy estimated() { return {IsKind::Estimated, 0.0}; }
  bool needs_behavior() const { return kind != IsKind::Constant; }
  bool operator==(const IsStrategy&) const = default;
};

/// pi/q under the strategy. Throws std::domain_error when q = 0 and the
/// strategy needs the ratio.
double is_coefficient(const IsStrategy& strategy, double pi_prob, double q_prob);

enum class BaselineKind { Ema, Zero };

struct LearnerConfig {
  double lambda_e = 0.3;
  IsStrategy is = IsStrategy::constant(1.0);
  double learning_rate = 1e-3;
  BaselineKind baseline = BaselineKind::Ema;
  double baseline_decay = 0.95;
  /// Subtract the shared baseline inside the off-policy term as well. Off by
  /// default: corpus actions are not drawn from pi, so there the baseline
  /// does not cancel in expectation and lowers the likelihood of demonstrated
  /// tokens whose return is below the per-timestep average.
  bool off_policy_baseline = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

/// Per-decode-timestep running average of returns. Timesteps are 0-based;
/// reads past the stored range return 0.
class Baseline {
 public:
  Baseline() = default;
  Baseline(std::size_t max_len, double decay);

  double at(std::size_t t) const { return t < values_.size() ? values_[t] : 0.0; }
  /// b_t <- decay b_t + (1 - decay) Q_t for each t present in `q`.
  void update(std::span<const double> q);

  double decay() const { return decay_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  std::vector<double> values_;
  double decay_ = 1.0;
};

/// Per-step constants multiplying grad log pi in the on-policy estimator: Q_t - b_t.
std::vector<double> on_policy_weights(std::span<const double> rewards, const Baseline& baseline, double gamma);

/// Per-step constants of the off-policy estimator:
///   rho_t * (prod_{t'>=t} rho_t' * G_t - b_t)
/// where rho_t is the IS coefficient of step t and G_t the discounted return.
/// pi_probs is required for every strategy except constant; q_probs likewise.
std::vector<double> off_policy_weights(std::span<const double> rewards, std::span<const double> pi_probs,
                                       std::span<const double> q_probs, const IsStrategy& strategy,
                                       const Baseline& baseline, double gamma);

/// Gradient of sum_t w_t log pi(a_t | s_t) for constant weights w.
ParamSet weighted_log_prob_gradient(const policy::Policy& policy, std::span<const TokenId> context,
                                    std::span<const TokenId> actions, std::span<const double> weights);

/// On-policy estimate sum_t (Q_t - b_t) grad log pi(a_t) from a scored sampled episode.
ParamSet on_policy_gradient(const policy::Policy& policy, const mdp::Episode& episode, const Baseline& baseline,
                            double gamma);

/// Off-policy estimate from a scored reference episode. q_probs holds
/// q(o_t | s_t) per step and may be empty under a constant strategy.
ParamSet off_policy_gradient(const policy::Policy& policy, const mdp::Episode& reference,
                             std::span<const double> q_probs, const IsStrategy& strategy, const Baseline& baseline,
                             double gamma);

/// q(o_t | s_t) of the process that produced the corpus.
class BehaviorPolicy {
 public:
  virtual ~BehaviorPolicy() = default;
  virtual std::vector<double> step_probabilities(std::span<const TokenId> context,
                                                 std::span<const TokenId> target) const = 0;
};

/// Behavior policy approximated by a frozen model.
class ModelBehavior final : public BehaviorPolicy {
 public:
  explicit ModelBehavior(policy::Policy model) : model_(std::move(model)) {}
  std::vector<double> step_probabilities(std::span<const TokenId> context,
                                         std::span<const TokenId> target) const override;
  const policy::Policy& model() const { return model_; }

 private:
  policy::Policy model_;
};

/// Adam ascent on a parameter set.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& like, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// params += step(grad). Throws std::invalid_argument on layout mismatch.
  void ascend(ParamSet& params, const ParamSet& grad);

  std::uint64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

  void save(diff::Checkpoint& ckpt) const;         // opt.* entries
  void load(const diff::Checkpoint& ckpt);

  bool operator==(const Adam&) const = default;

 private:
  ParamSet m_, v_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
};

/// Raised when a gradient is not finite; the parameters are left untouched.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& what) : std::runtime_error(what) {}
};

/// (1 - lambda_e) g_off + lambda_e g_on. Either may be empty (all zero) when its weight is 0.
ParamSet combine(const ParamSet& g_on, const ParamSet& g_off, double lambda_e);

/// Combines and takes one Adam ascent step. Returns the combined gradient.
ParamSet combine_and_update(ParamSet& params, const ParamSet& g_on, const ParamSet& g_off, double lambda_e,
                            Adam& optimizer);

/// Throws NonFiniteGradient naming the first offending tensor.
void check_finite(const ParamSet& grad);

/// One (context, target) supervision pair.
struct TurnExample {
  std::vector<TokenId> context;
  std::vector<TokenId> target;  // ends in EOS
};

std::vector<TurnExample> turn_examples(const std::vector<corpus::Dialog>& dialogs, const corpus::Vocabulary& vocab);

/// Mean negative log-likelihood per token.
double mean_nll(const policy::Policy& policy, const std::vector<TurnExample>& examples);
double perplexity(const policy::Policy& policy, const std::vector<TurnExample>& examples);

/// Teacher-forced maximum-likelihood training, one Adam step per example.
class CrossEntropyTrainer {
 public:
  CrossEntropyTrainer(policy::Policy& policy, double learning_rate, std::uint64_t dropout_seed);

  /// Returns the negative log-likelihood of `ex` before the update.
  double step(const TurnExample& ex);
  policy::Policy& policy() { return policy_; }
  Rng& dropout_rng() { return dropout_rng_; }

 private:
  policy::Policy& policy_;
  Adam adam_;
  Rng dropout_rng_;
};

/// Trains a behavior model by maximum likelihood for `epochs` shuffled passes.
ModelBehavior fit_behavior_model(const std::vector<TurnExample>& examples, const policy::ModelConfig& config,
                                 std::size_t epochs, std::uint64_t seed, double learning_rate = 1e-3);

}  // namespace tact::learner
