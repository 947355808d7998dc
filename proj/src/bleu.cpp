#include "tact/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace tact::bleu {

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

NgramCounts count_ngrams(Tokens tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<std::ptrdiff_t>(tokens.size());
  for (std::ptrdiff_t i = 0; i + n <= len; ++i) {
    ++counts[std::vector<TokenId>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

void check_config(const BleuConfig& config) {
  if (config.max_n < 1) throw std::invalid_argument("BleuConfig: max_n must be >= 1");
}

/// Geometric mean of precisions times brevity penalty, shared by the
/// sentence and corpus forms.
double combine(const std::vector<Precision>& precisions, std::size_t cand_len, std::size_t ref_len,
               Smoothing smoothing) {
  bool smooth = false;
  if (smoothing == Smoothing::AddOneForNGe2) {
    for (std::size_t n = 1; n < precisions.size(); ++n) {
      if (precisions[n].total > 0 && precisions[n].matched == 0) smooth = true;
    }
  }
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 0; n < precisions.size(); ++n) {
    const Precision& p = precisions[n];
    if (p.total == 0) continue;
    double matched = static_cast<double>(p.matched);
    double total = static_cast<double>(p.total);
    if (smooth && n >= 1) {
      matched += 1.0;
      total += 1.0;
    }
    if (matched == 0.0) return 0.0;
    log_sum += std::log(matched / total);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return bp * std::exp(log_sum / orders);
}

}  // namespace

Precision modified_precision(Tokens candidate, Tokens reference, int n) {
  if (n < 1) throw std::invalid_argument("modified_precision: n must be >= 1");
  Precision p;
  if (candidate.size() < static_cast<std::size_t>(n)) return p;
  p.total = candidate.size() - static_cast<std::size_t>(n) + 1;
  const NgramCounts ref = count_ngrams(reference, n);
  for (const auto& [gram, count] : count_ngrams(candidate, n)) {
    auto it = ref.find(gram);
    if (it != ref.end()) p.matched += std::min(count, it->second);
  }
  return p;
}

double sentence_bleu(Tokens candidate, Tokens reference, const BleuConfig& config) {
  check_config(config);
  if (reference.empty()) throw std::invalid_argument("sentence_bleu: empty reference");
  if (candidate.empty()) return 0.0;
  std::vector<Precision> precisions;
  for (int n = 1; n <= config.max_n; ++n) precisions.push_back(modified_precision(candidate, reference, n));
  return combine(precisions, candidate.size(), reference.size(), config.smoothing);
}

double potential(Tokens prefix, Tokens reference, bool is_complete, const BleuConfig& config) {
  if (is_complete || prefix.empty()) return 0.0;
  return sentence_bleu(prefix, reference, config);
}

double corpus_bleu(const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>& pairs,
                   const BleuConfig& config) {
  check_config(config);
  if (pairs.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  std::vector<Precision> pooled(static_cast<std::size_t>(config.max_n));
  std::size_t cand_len = 0, ref_len = 0;
  for (const auto& [cand, ref] : pairs) {
    cand_len += cand.size();
    ref_len += ref.size();
    for (int n = 1; n <= config.max_n; ++n) {
      Precision p = modified_precision(cand, ref, n);
      pooled[static_cast<std::size_t>(n - 1)].matched += p.matched;
      pooled[static_cast<std::size_t>(n - 1)].total += p.total;
    }
  }
  if (cand_len == 0) return 0.0;
  return combine(pooled, cand_len, ref_len, config.smoothing);
}

std::vector<TokenId> strip_eos(Tokens tokens) {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (auto t : tokens) {
    if (t != corpus::Vocabulary::kEos) out.push_back(t);
  }
  return out;
}

}  // namespace tact::bleu
