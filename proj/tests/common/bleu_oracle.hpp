#pragma once

// Reference BLEU written from the textbook definition on strings with
// brute-force counting. Kept free of any library code so it can check it.

#include <cmath>
#include <string>
#include <vector>

namespace oracle {

using Sentence = std::vector<std::string>;

inline std::vector<Sentence> ngrams(const Sentence& s, std::size_t n) {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
  return out;
}

inline std::size_t occurrences(const std::vector<Sentence>& grams, const Sentence& g) {
  std::size_t c = 0;
  for (const auto& x : grams) c += (x == g);
  return c;
}

// Returns {clipped matches, candidate n-gram count}.
inline std::pair<double, double> clipped(const Sentence& cand, const Sentence& ref, std::size_t n) {
  const auto cg = ngrams(cand, n);
  const auto rg = ngrams(ref, n);
  double matched = 0.0;
  std::vector<Sentence> seen;
  for (const auto& g : cg) {
    if (occurrences(seen, g)) continue;
    seen.push_back(g);
    const double in_cand = static_cast<double>(occurrences(cg, g));
    const double in_ref = static_cast<double>(occurrences(rg, g));
    matched += in_cand < in_ref ? in_cand : in_ref;
  }
  return {matched, static_cast<double>(cg.size())};
}

inline double from_counts(std::vector<std::pair<double, double>> p, double c, double r, bool smooth) {
  if (c == 0.0) return 0.0;
  if (smooth) {
    bool need = false;
    for (std::size_t n = 1; n < p.size(); ++n) need = need || (p[n].second > 0.0 && p[n].first == 0.0);
    if (need) {
      for (std::size_t n = 1; n < p.size(); ++n) {
        if (p[n].second > 0.0) {
          p[n].first += 1.0;
          p[n].second += 1.0;
        }
      }
    }
  }
  double product = 1.0;
  int used = 0;
  for (const auto& [m, t] : p) {
    if (t == 0.0) continue;
    product *= m / t;
    ++used;
  }
  if (used == 0 || product == 0.0) return 0.0;
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(product, 1.0 / used);
}

inline double sentence_bleu(const Sentence& cand, const Sentence& ref, int max_n, bool smooth) {
  std::vector<std::pair<double, double>> p;
  for (int n = 1; n <= max_n; ++n) p.push_back(clipped(cand, ref, static_cast<std::size_t>(n)));
  return from_counts(p, static_cast<double>(cand.size()), static_cast<double>(ref.size()), smooth);
}

inline double corpus_bleu(const std::vector<std::pair<Sentence, Sentence>>& pairs, int max_n, bool smooth) {
  std::vector<std::pair<double, double>> p(static_cast<std::size_t>(max_n), {0.0, 0.0});
  double c = 0.0, r = 0.0;
  for (const auto& [cand, ref] : pairs) {
    c += static_cast<double>(cand.size());
    r += static_cast<double>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      auto [m, t] = clipped(cand, ref, static_cast<std::size_t>(n));
      p[static_cast<std::size_t>(n - 1)].first += m;
      p[static_cast<std::size_t>(n - 1)].second += t;
    }
  }
  return from_counts(p, c, r, smooth);
}

}  // namespace oracle
