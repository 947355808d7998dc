#pragma once

#include "tact/config.hpp"
#include "tact/corpus.hpp"
#include "tact/eval.hpp"
#include "tact/learner.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tact::synth {

using Sentence = std::vector<std::string>;

/// A small restaurant-booking task: greeting, preference gathering, one API
/// call, suggestion, closing.
struct SynthConfig {
  std::size_t vocab_size = 50;       // designed content-token inventory
  std::size_t num_dialogs = 2000;    // training split
  std::size_t num_valid = 250;
  std::size_t num_test = 250;
  std::size_t max_turns = 8;
  std::size_t api_param_count = 3;
  double noise = 0.0;                // probability of a paraphrase instead of the canonical wording
  std::size_t paraphrases = 1;       // paraphrase variants per response, 1 or 2
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument when the inventory cannot hold the grammar.
  void validate() const;
  /// Smallest vocab_size the grammar needs for `api_param_count` slots.
  static std::size_t min_vocab_size(std::size_t api_param_count);

  std::string to_text() const;
  static SynthConfig from_key_values(KeyValues& kv);
};

/// The scripted agent that writes the corpus. Its responses depend only on
/// the flat context token sequence.
class ScriptedAgent {
 public:
  explicit ScriptedAgent(const SynthConfig& cfg);

  /// Possible responses with their probabilities (summing to 1).
  std::vector<std::pair<Sentence, double>> responses(const Sentence& context) const;
  /// The most probable response.
  Sentence canonical(const Sentence& context) const;
  /// q(o_t | context, o_1..o_{t-1}) for each token of `target`, EOS included
  /// as the empty-string end marker at position target.size().
  std::vector<double> step_probabilities(const Sentence& context, const Sentence& target) const;

  const std::vector<std::string>& slot_names() const { return slot_names_; }
  const std::vector<std::vector<std::string>>& slot_values() const { return slot_values_; }
  /// Every token the grammar can emit, in a fixed order.
  const std::vector<std::string>& inventory() const { return inventory_; }

 private:
  SynthConfig cfg_;
  std::vector<std::string> slot_names_;
  std::vector<std::vector<std::string>> slot_values_;
  std::vector<std::string> inventory_;
};

/// q as a BehaviorPolicy over model token ids. Targets must end in EOS.
class ExactBehavior final : public learner::BehaviorPolicy {
 public:
  ExactBehavior(const ScriptedAgent& agent, const corpus::Vocabulary& vocab) : agent_(agent), vocab_(vocab) {}
  std::vector<double> step_probabilities(std::span<const corpus::TokenId> context,
                                         std::span<const corpus::TokenId> target) const override;

 private:
  const ScriptedAgent& agent_;
  const corpus::Vocabulary& vocab_;
};

struct Splits {
  std::vector<corpus::Dialog> train, valid, test;
};

/// One split of `count` dialogs from the named seed substream.
std::vector<corpus::Dialog> generate_dialogs(const SynthConfig& cfg, std::size_t count, const std::string& stream);
Splits generate_corpus(const SynthConfig& cfg);

/// Writes synth-{trn,dev,tst}.txt and synth.cfg (the seed and config that regenerate q).
void write_corpus(const SynthConfig& cfg, const std::filesystem::path& dir);

/// Metrics of the canonical scripted agent on each turn of `dialogs`.
eval::EvalReport oracle_policy_metrics(const SynthConfig& cfg, const std::vector<corpus::Dialog>& dialogs);
eval::EvalReport oracle_policy_metrics(const SynthConfig& cfg);

inline constexpr const char* kTrainFile = "synth-trn.txt";
inline constexpr const char* kValidFile = "synth-dev.txt";
inline constexpr const char* kTestFile = "synth-tst.txt";
inline constexpr const char* kConfigFile = "synth.cfg";

}  // namespace tact::synth
