#pragma once

#include "tact/bleu.hpp"
#include "tact/corpus.hpp"
#include "tact/policy.hpp"
#include "tact/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace tact::mdp {

using corpus::TokenId;

/// (context, generated prefix). The prefix never continues past EOS.
struct State {
  std::vector<TokenId> context;
  std::vector<TokenId> prefix;

  bool operator==(const State&) const = default;
};

bool is_terminal(const State& s);
/// Throws std::logic_error if `s` is terminal.
State transition(const State& s, TokenId action);

enum class Shaping {
  Potential,  // r_T = r(z, D)
  Strict,  // r_T = r(z, D) - Phi(z_{T-1})
  None,    // terminal reward only
};

enum class KPrimeRule {
  NearestFutureFirst,
  NearestPastFirst,
};

struct RewardConfig {
  double lambda_a = 0.1;
  double lambda_b = 0.1;
  double lambda_c = 0.1;
  double lambda_d = 0.1;
  double gamma = 1.0;
  Shaping shaping = Shaping::Potential;
  bool dialog_level = true;
  KPrimeRule k_prime_rule = KPrimeRule::NearestFutureFirst;
  bleu::BleuConfig bleu;

  /// Throws std::invalid_argument when a lambda leaves [0,1] or gamma leaves (0,1].
  void validate() const;
};

/// Turn of the reference API call that turn k is judged against, or none if
/// the dialog has no API call. Turns are 1-based.
std::optional<int> locate_reference_api_turn(const corpus::Dialog& dialog, int k,
                                             KPrimeRule rule = KPrimeRule::NearestFutureFirst);

/// Positional parameter matches.
std::size_t count_correct_parameters(const corpus::ApiCall& generated, const corpus::ApiCall& reference);

/// Everything the reward needs from the reference side of one turn.
struct TurnReference {
  int k = 0;
  std::vector<TokenId> target;  // y^k ending in EOS
  bool target_is_api = false;
  std::optional<int> k_prime;
  std::optional<corpus::ApiCall> k_prime_call;
};

/// Throws std::out_of_range unless 1 <= k <= K.
TurnReference make_reference(const corpus::Dialog& dialog, int k, const corpus::Vocabulary& vocab,
                             KPrimeRule rule = KPrimeRule::NearestFutureFirst);

/// API call parsed from generated ids, if the utterance is one.
std::optional<corpus::ApiCall> generated_api_call(std::span<const TokenId> z, const corpus::Vocabulary& vocab);

/// The dialog-level term alone.
double dialog_reward(std::span<const TokenId> z, const TurnReference& ref, const corpus::Vocabulary& vocab,
                     const RewardConfig& cfg);

/// BLEU(z, y^k) plus the dialog-level term (if enabled). A truncated z is
/// scored as if complete.
double utterance_reward(std::span<const TokenId> z, const TurnReference& ref, const corpus::Vocabulary& vocab,
                        const RewardConfig& cfg);
double utterance_reward(std::span<const TokenId> z, const corpus::Dialog& dialog, int k,
                        const corpus::Vocabulary& vocab, const RewardConfig& cfg);

/// r_1..r_T: potential increments for t < T, then the terminal reward per cfg.shaping.
/// Throws std::invalid_argument on empty z.
std::vector<double> shaped_rewards(std::span<const TokenId> z, const TurnReference& ref,
                                   const corpus::Vocabulary& vocab, const RewardConfig& cfg);

/// Q_T = r_T, Q_t = r_t + gamma Q_{t+1}.
std::vector<double> returns(std::span<const double> rewards, double gamma);

enum class EpisodeKind { Sampled, Reference };

struct Episode {
  std::vector<TokenId> context;
  std::vector<TokenId> actions;
  std::vector<double> step_log_probs;
  std::vector<double> rewards;
  EpisodeKind kind = EpisodeKind::Sampled;
  bool truncated = false;

  std::size_t T() const { return actions.size(); }
};

/// Samples until EOS or max_len tokens (truncated). Rewards are left empty.
Episode rollout(const policy::Policy& policy, std::span<const TokenId> context, std::size_t max_len, Rng& rng);
Episode rollout(const policy::Policy& policy, std::span<const TokenId> context, std::size_t max_len,
                std::uint64_t seed);

/// Same as rollout, but on `graph`'s tape so the returned log-probability
/// nodes can be differentiated. Dropout masks of the graph apply.
struct GraphRollout {
  Episode episode;
  std::vector<diff::Var> log_probs;
};
GraphRollout rollout_on_graph(policy::Graph& graph, const policy::Encoding& enc, std::span<const TokenId> context,
                              std::size_t max_len, Rng& rng);

/// Episode for a reference utterance (teacher forced).
Episode reference_episode(const policy::Policy& policy, std::span<const TokenId> context,
                          std::span<const TokenId> target);

/// Fills episode.rewards with shaped rewards against `ref`.
void score(Episode& episode, const TurnReference& ref, const corpus::Vocabulary& vocab, const RewardConfig& cfg);

}  // namespace tact::mdp
