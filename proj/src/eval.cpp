#include "tact/eval.hpp"

#include "tact/config.hpp"

#include <charconv>
#include <map>
#include "json.hpp"
#include <sstream>
#include <stdexcept>

namespace tact::eval {

namespace {

bool is_api(const Sentence& s) { return !s.empty() && s.front() == corpus::kApiCallMarker; }

void check_aligned(const std::vector<Sentence>& p, const std::vector<Sentence>& r, const char* fn) {
  if (p.size() != r.size()) {
    throw std::invalid_argument(std::string(fn) + ": " + std::to_string(p.size()) + " predictions for " +
                                std::to_string(r.size()) + " references");
  }
}

// Ratio with the flagged-zero convention.
double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double per_response_accuracy(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references) {
  check_aligned(predictions, references, "per_response_accuracy");
  if (predictions.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == references[i];
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

ApiPrf api_prf(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references) {
  check_aligned(predictions, references, "api_prf");
  ApiPrf out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = is_api(predictions[i]), r = is_api(references[i]);
    out.tp += p && r;
    out.fp += p && !r;
    out.fn += !p && r;
  }
  out.precision = ratio(out.tp, out.tp + out.fp, out.precision_undefined);
  out.recall = ratio(out.tp, out.tp + out.fn, out.recall_undefined);
  out.f1_undefined = out.precision + out.recall == 0.0;
  out.f1 = out.f1_undefined ? 0.0 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

ExactMatch api_exact_match(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references) {
  check_aligned(predictions, references, "api_exact_match");
  ExactMatch out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!is_api(predictions[i]) || !is_api(references[i])) continue;
    ++out.true_positives;
    out.matched += predictions[i] == references[i];
  }
  out.value = ratio(out.matched, out.true_positives, out.undefined);
  return out;
}

double corpus_bleu(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references,
                   const bleu::BleuConfig& config) {
  check_aligned(predictions, references, "corpus_bleu");
  if (predictions.empty()) return 0.0;
  // Local ids keep tokens distinct even when the model vocabulary would map them to UNK.
  std::map<std::string, corpus::TokenId> ids;
  auto encode = [&](const Sentence& s) {
    std::vector<corpus::TokenId> out;
    for (const auto& w : s) out.push_back(ids.emplace(w, static_cast<corpus::TokenId>(ids.size())).first->second);
    return out;
  };
  std::vector<std::pair<std::vector<corpus::TokenId>, std::vector<corpus::TokenId>>> pairs;
  for (std::size_t i = 0; i < predictions.size(); ++i) pairs.emplace_back(encode(predictions[i]), encode(references[i]));
  return bleu::corpus_bleu(pairs, config);
}

EvalReport make_report(const std::vector<Sentence>& predictions, const std::vector<Sentence>& references,
                       const EvalConfig& config) {
  EvalReport r;
  r.turns = predictions.size();
  r.per_response_accuracy = per_response_accuracy(predictions, references);
  r.bleu = corpus_bleu(predictions, references, config.bleu);
  ApiPrf prf = api_prf(predictions, references);
  r.api_precision = prf.precision;
  r.api_recall = prf.recall;
  r.api_f1 = prf.f1;
  r.true_positives = prf.tp;
  r.false_positives = prf.fp;
  r.false_negatives = prf.fn;
  r.precision_undefined = prf.precision_undefined;
  r.recall_undefined = prf.recall_undefined;
  r.f1_undefined = prf.f1_undefined;
  ExactMatch em = api_exact_match(predictions, references);
  r.api_exact_match = em.value;
  r.exact_matches = em.matched;
  r.exact_match_undefined = em.undefined;
  return r;
}

std::vector<Sentence> predict_split(const policy::Policy& policy, const std::vector<corpus::Dialog>& dialogs,
                                    const corpus::Vocabulary& vocab, std::size_t max_decode_len) {
  std::vector<Sentence> out;
  for (const auto& d : dialogs) {
    for (const auto& ctx : corpus::build_contexts(d, vocab)) {
      std::vector<corpus::TokenId> z = policy::greedy_decode(policy, ctx.tokens, max_decode_len);
      if (!z.empty() && z.back() == corpus::Vocabulary::kEos) z.pop_back();
      out.push_back(vocab.decode(z));
    }
  }
  return out;
}

std::vector<Sentence> reference_split(const std::vector<corpus::Dialog>& dialogs) {
  std::vector<Sentence> out;
  for (const auto& d : dialogs) {
    for (const auto& t : d.turns) out.push_back(t.agent.tokens);
  }
  return out;
}

EvalReport evaluate_split(const policy::Policy& policy, const std::vector<corpus::Dialog>& dialogs,
                          const corpus::Vocabulary& vocab, const EvalConfig& config) {
  return make_report(predict_split(policy, dialogs, vocab, config.max_decode_len), reference_split(dialogs), config);
}

namespace {

template <typename F>
void for_each_field(EvalReport& r, F&& f) {
  f("per_response_accuracy", r.per_response_accuracy);
  f("bleu", r.bleu);
  f("api_precision", r.api_precision);
  f("api_recall", r.api_recall);
  f("api_f1", r.api_f1);
  f("api_exact_match", r.api_exact_match);
  f("true_positives", r.true_positives);
  f("false_positives", r.false_positives);
  f("false_negatives", r.false_negatives);
  f("exact_matches", r.exact_matches);
  f("turns", r.turns);
  f("precision_undefined", r.precision_undefined);
  f("recall_undefined", r.recall_undefined);
  f("f1_undefined", r.f1_undefined);
  f("exact_match_undefined", r.exact_match_undefined);
}

}  // namespace

std::string to_key_value(const EvalReport& report) {
  EvalReport r = report;
  std::ostringstream os;
  for_each_field(r, [&](const char* key, auto& v) {
    using T = std::decay_t<decltype(v)>;
    os << key << " = ";
    if constexpr (std::is_same_v<T, double>) {
      os << format_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      os << (v ? "true" : "false");
    } else {
      os << v;
    }
    os << '\n';
  });
  return os.str();
}

EvalReport from_key_value(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::invalid_argument("eval report: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  EvalReport r;
  std::size_t seen = 0;
  for_each_field(r, [&](const char* key, auto& v) {
    using T = std::decay_t<decltype(v)>;
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("eval report: missing key ") + key);
    ++seen;
    const std::string& s = it->second;
    if constexpr (std::is_same_v<T, bool>) {
      if (s != "true" && s != "false") throw std::invalid_argument(std::string("eval report: bad flag ") + key);
      v = s == "true";
    } else {
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument(std::string("eval report: bad value for ") + key);
      }
    }
  });
  if (seen != kv.size()) throw std::invalid_argument("eval report: unknown keys present");
  return r;
}

std::string to_json(const EvalReport& report) {
  EvalReport r = report;
  nlohmann::ordered_json j;
  for_each_field(r, [&](const char* key, auto& v) { j[key] = v; });
  return j.dump(2) + "\n";
}

EvalReport from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  for_each_field(r, [&](const char* key, auto& v) { j.at(key).get_to(v); });
  return r;
}

}  // namespace tact::eval
