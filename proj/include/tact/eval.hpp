#pragma once

#include "tact/bleu.hpp"
#include "tact/corpus.hpp"
#include "tact/policy.hpp"

#include <string>
#include <vector>

namespace tact::eval {

using Sentence = std::vector<std::string>;

struct EvalReport {
  double per_response_accuracy = 0.0;
  double bleu = 0.0;
  double api_precision = 0.0;
  double api_recall = 0.0;
  double api_f1 = 0.0;
  double api_exact_match = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t exact_matches = 0;
  std::size_t turns = 0;
  // Set when the metric's denominator was zero and the value is a placeholder 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool exact_match_undefined = false;

  bool operator==(const EvalReport&) const = default;
};

/// Fraction of turns whose prediction equals the reference token for token.
/// Throws std::invalid_argument on a length mismatch.
double per_response_accuracy(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references);

struct ApiPrf {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};
/// Micro-averaged API-call detection; parameters are ignored.
ApiPrf api_prf(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references);

struct ExactMatch {
  std::size_t matched = 0, true_positives = 0;
  double value = 0.0;
  bool undefined = false;
};
/// Among true-positive turns, the fraction whose parameters all match by position.
ExactMatch api_exact_match(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references);

/// Corpus BLEU over token strings.
double corpus_bleu(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references,
                   const bleu::BleuConfig& config);

struct EvalConfig {
  std::size_t max_decode_len = 35;
  bleu::BleuConfig bleu{4, bleu::Smoothing::None};
};

EvalReport make_report(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references,
                       const EvalConfig& config = {});

/// Greedy predictions for every turn, each conditioned on its ground-truth context.
std::vector<Sentence> predict_split(const policy::Policy& policy, const std::vector<corpus::Dialog>& dialogs,
                                    const corpus::Vocabulary& vocab, std::size_t max_decode_len);
std::vector<Sentence> reference_split(const std::vector<corpus::Dialog>& dialogs);

EvalReport evaluate_split(const policy::Policy& policy, const std::vector<corpus::Dialog>& dialogs,
                          const corpus::Vocabulary& vocab, const EvalConfig& config = {});

/// One `key = value` line per field; doubles round-trip exactly.
std::string to_key_value(const EvalReport& report);
/// Throws std::invalid_argument on unknown or missing keys.
EvalReport from_key_value(const std::string& text);
std::string to_json(const EvalReport& report);
EvalReport from_json(const std::string& text);

}  // namespace tact::eval
