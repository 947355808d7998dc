#pragma once

#include "tact/corpus.hpp"

#include <span>
#include <utility>
#include <vector>

namespace tact::bleu {

using corpus::TokenId;
using Tokens = std::span<const TokenId>;

enum class Smoothing {
  None,
  /// Add one to matched and total counts of every order n >= 2 when some
  /// order n >= 2 would otherwise have zero matches.
  AddOneForNGe2,
};

struct BleuConfig {
  int max_n = 4;
  Smoothing smoothing = Smoothing::AddOneForNGe2;
};

struct Precision {
  std::size_t matched = 0;
  std::size_t total = 0;
  bool operator==(const Precision&) const = default;
};

/// Clipped n-gram matches of `candidate` against `reference`.
Precision modified_precision(Tokens candidate, Tokens reference, int n);

/// Sentence BLEU in [0, 1]. Orders for which the candidate has no n-grams
/// are left out of the geometric mean (effective order), so a short
/// candidate is judged on the orders it can have. Empty candidate scores 0.
/// Throws std::invalid_argument on an empty reference.
double sentence_bleu(Tokens candidate, Tokens reference, const BleuConfig& config = {});

/// Shaping potential of a partial utterance: BLEU of the prefix while the
/// utterance is incomplete, 0 once it is complete.
double potential(Tokens prefix, Tokens reference, bool is_complete, const BleuConfig& config = {});

/// Corpus BLEU: n-gram counts and lengths pooled over all pairs first.
/// Throws std::invalid_argument on an empty list.
double corpus_bleu(const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>& pairs,
                   const BleuConfig& config = {});

/// Copy of `tokens` without EOS ids.
std::vector<TokenId> strip_eos(Tokens tokens);

}  // namespace tact::bleu
