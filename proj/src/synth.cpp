#include "tact/synth.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tact::synth {

using corpus::Dialog;
using corpus::Turn;
using corpus::Utterance;

namespace {

const std::vector<std::string> kFixedWords = {
    "hello", "what", "can",  "i",     "help",  "you",        "with", "?",        "how",      "hi",
    "do",    "for",  "which", "like", "want",  "any",        "about", "resto_stub", "is",     "a",
    "nice",  "place", "are", "welcome", "bye", "api_call",   "R_rating", "5",     "<SILENCE>", "thank"};

const std::vector<std::string> kSlotNames = {"cuisine", "area", "price"};

const std::vector<std::vector<std::string>> kValueNames = {
    {"indian", "italian", "french", "thai", "korean", "spanish", "british", "chinese", "greek", "turkish"},
    {"north", "south", "east", "west", "centre", "harbour", "uptown", "riverside", "airport", "oldtown"},
    {"cheap", "moderate", "expensive", "budget", "premium", "luxury", "bargain", "midrange", "pricey", "free"},
};

Sentence words(const std::string& text) { return corpus::tokenize(text); }

Sentence with_slot(const std::string& tmpl, const std::string& slot) {
  Sentence out;
  for (auto& w : words(tmpl)) out.push_back(w == "S" ? slot : w);
  return out;
}

const std::vector<std::string> kGreet = {"hello what can i help you with ?", "hello how can i help you ?",
                                         "hi what can i do for you ?"};
const std::vector<std::string> kAsk = {"which S do you like ?", "what S do you want ?", "any S you like ?"};
const std::vector<std::string> kSuggest = {"how about resto_stub ?", "what about resto_stub ?",
                                           "resto_stub is a nice place"};
const std::vector<std::string> kClose = {"you are welcome", "you are welcome bye", "bye"};

Utterance utterance(corpus::Speaker who, Sentence tokens) {
  Utterance u;
  u.speaker = who;
  u.tokens = std::move(tokens);
  for (std::size_t i = 0; i < u.tokens.size(); ++i) u.raw += (i ? " " : "") + u.tokens[i];
  return u;
}

}  // namespace

std::size_t SynthConfig::min_vocab_size(std::size_t api_param_count) {
  return kFixedWords.size() + 3 * api_param_count;
}

void SynthConfig::validate() const {
  if (api_param_count == 0) throw std::invalid_argument("synth.api_param_count must be positive");
  if (vocab_size < api_param_count + 5) throw std::invalid_argument("synth.vocab_size must be >= api_param_count + 5");
  if (vocab_size < min_vocab_size(api_param_count)) {
    throw std::invalid_argument("synth.vocab_size must be >= " + std::to_string(min_vocab_size(api_param_count)) +
                                " for " + std::to_string(api_param_count) + " parameters");
  }
  if (max_turns < 4) throw std::invalid_argument("synth.max_turns must be >= 4");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("synth.noise must be in [0,1]");
  if (paraphrases < 1 || paraphrases > 2) throw std::invalid_argument("synth.paraphrases must be 1 or 2");
}

std::string SynthConfig::to_text() const {
  std::ostringstream os;
  os << "synth.vocab_size = " << vocab_size << "\n"
     << "synth.num_dialogs = " << num_dialogs << "\n"
     << "synth.num_valid = " << num_valid << "\n"
     << "synth.num_test = " << num_test << "\n"
     << "synth.max_turns = " << max_turns << "\n"
     << "synth.api_param_count = " << api_param_count << "\n"
     << "synth.noise = " << format_double(noise) << "\n"
     << "synth.paraphrases = " << paraphrases << "\n"
     << "synth.seed = " << seed << "\n";
  return os.str();
}

SynthConfig SynthConfig::from_key_values(KeyValues& kv) {
  SynthConfig c;
  c.vocab_size = kv.get("synth.vocab_size", c.vocab_size);
  c.num_dialogs = kv.get("synth.num_dialogs", c.num_dialogs);
  c.num_valid = kv.get("synth.num_valid", c.num_valid);
  c.num_test = kv.get("synth.num_test", c.num_test);
  c.max_turns = kv.get("synth.max_turns", c.max_turns);
  c.api_param_count = kv.get("synth.api_param_count", c.api_param_count);
  c.noise = kv.get("synth.noise", c.noise);
  c.paraphrases = kv.get("synth.paraphrases", c.paraphrases);
  c.seed = static_cast<std::uint64_t>(kv.get("synth.seed", static_cast<std::size_t>(c.seed)));
  c.validate();
  return c;
}

ScriptedAgent::ScriptedAgent(const SynthConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t P = cfg.api_param_count;
  for (std::size_t s = 0; s < P; ++s) {
    slot_names_.push_back(s < kSlotNames.size() ? kSlotNames[s] : "slot" + std::to_string(s + 1));
  }
  slot_values_.resize(P);
  const std::size_t n_values = cfg.vocab_size - kFixedWords.size() - P;
  for (std::size_t i = 0; i < n_values; ++i) {
    const std::size_t s = i % P, j = i / P;
    const bool named = s < kValueNames.size() && j < kValueNames[s].size();
    slot_values_[s].push_back(named ? kValueNames[s][j] : slot_names_[s] + "_" + std::to_string(j + 1));
  }
  inventory_ = kFixedWords;
  for (const auto& n : slot_names_) inventory_.push_back(n);
  for (std::size_t j = 0;; ++j) {
    bool any = false;
    for (const auto& vals : slot_values_) {
      if (j < vals.size()) {
        inventory_.push_back(vals[j]);
        any = true;
      }
    }
    if (!any) break;
  }
}

std::vector<std::pair<Sentence, double>> ScriptedAgent::responses(const Sentence& context) const {
  auto variants = [&](const std::vector<Sentence>& forms) {
    std::vector<std::pair<Sentence, double>> out;
    out.emplace_back(forms[0], 1.0 - cfg_.noise);
    if (cfg_.noise > 0.0) {
      for (std::size_t i = 1; i <= cfg_.paraphrases; ++i) {
        out.emplace_back(forms[i], cfg_.noise / static_cast<double>(cfg_.paraphrases));
      }
      if (cfg_.noise == 1.0) out.erase(out.begin());
    }
    return out;
  };
  auto forms = [](const std::vector<std::string>& tmpl, const std::string& slot = "") {
    std::vector<Sentence> out;
    for (const auto& t : tmpl) out.push_back(with_slot(t, slot));
    return out;
  };
  const bool called = std::find(context.begin(), context.end(), corpus::kApiCallMarker) != context.end();
  if (called) {
    if (!context.empty() && context.back() == "<SILENCE>") return variants(forms(kSuggest));
    return variants(forms(kClose));
  }
  if (std::find(context.begin(), context.end(), "want") == context.end()) return variants(forms(kGreet));
  Sentence call{std::string(corpus::kApiCallMarker)};
  for (std::size_t s = 0; s < slot_values_.size(); ++s) {
    auto it = std::find_if(context.begin(), context.end(), [&](const std::string& w) {
      return std::find(slot_values_[s].begin(), slot_values_[s].end(), w) != slot_values_[s].end();
    });
    if (it == context.end()) return variants(forms(kAsk, slot_names_[s]));
    call.push_back(*it);
  }
  return {{call, 1.0}};
}

Sentence ScriptedAgent::canonical(const Sentence& context) const {
  auto r = responses(context);
  return std::max_element(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

std::vector<double> ScriptedAgent::step_probabilities(const Sentence& context, const Sentence& target) const {
  const auto cands = responses(context);
  std::vector<double> out;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    double mass = 0.0, hit = 0.0;
    for (const auto& [c, p] : cands) {
      if (c.size() < t || !std::equal(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(t), c.begin())) {
        continue;
      }
      mass += p;
      const bool ends_here = c.size() == t;
      if (t == target.size() ? ends_here : (!ends_here && c[t] == target[t])) hit += p;
    }
    out.push_back(mass > 0.0 ? hit / mass : 0.0);
  }
  return out;
}

std::vector<double> ExactBehavior::step_probabilities(std::span<const corpus::TokenId> context,
                                                      std::span<const corpus::TokenId> target) const {
  if (target.empty() || target.back() != corpus::Vocabulary::kEos) {
    throw std::invalid_argument("ExactBehavior: target must end with EOS");
  }
  const Sentence ctx = vocab_.decode({context.begin(), context.end()});
  const Sentence tgt = vocab_.decode({target.begin(), target.end() - 1});
  return agent_.step_probabilities(ctx, tgt);
}

std::vector<Dialog> generate_dialogs(const SynthConfig& cfg, std::size_t count, const std::string& stream) {
  ScriptedAgent agent(cfg);
  Rng rng(substream_seed(cfg.seed, "synth." + stream));
  const std::size_t P = cfg.api_param_count;
  const std::size_t min_stated = std::max<std::size_t>(1, P + 4 > cfg.max_turns ? P + 4 - cfg.max_turns : 1);
  std::vector<Dialog> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Dialog d;
    auto respond = [&](Utterance user) {
      d.turns.push_back(Turn{std::move(user), {}});
      d.kb_responses.emplace_back();
      const Sentence ctx = corpus::context_tokens(d, static_cast<int>(d.turns.size()));
      auto cands = agent.responses(ctx);
      std::vector<double> w;
      for (const auto& c : cands) w.push_back(c.second);
      d.turns.back().agent = utterance(corpus::Speaker::Agent, cands[rng.categorical(w)].first);
    };

    std::vector<std::size_t> slots(P);
    for (std::size_t s = 0; s < P; ++s) slots[s] = s;
    rng.shuffle(slots);
    const std::size_t stated = min_stated + rng.below(P - min_stated + 1);
    std::vector<std::string> values(P);
    for (std::size_t s = 0; s < P; ++s) values[s] = agent.slot_values()[s][rng.below(agent.slot_values()[s].size())];

    respond(utterance(corpus::Speaker::User, {"hello"}));
    Sentence request{"i", "want"};
    for (std::size_t i = 0; i < stated; ++i) request.push_back(values[slots[i]]);
    respond(utterance(corpus::Speaker::User, request));
    std::vector<bool> known(P, false);
    for (std::size_t i = 0; i < stated; ++i) known[slots[i]] = true;
    for (std::size_t s = 0; s < P; ++s) {
      if (!known[s]) respond(utterance(corpus::Speaker::User, {values[s]}));
    }
    d.kb_responses.back().push_back(utterance(corpus::Speaker::Kb, {"resto_stub", "R_rating", "5"}));
    respond(utterance(corpus::Speaker::User, {"<SILENCE>"}));
    respond(utterance(corpus::Speaker::User, {"thank", "you"}));
    out.push_back(std::move(d));
  }
  return out;
}

Splits generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  return {generate_dialogs(cfg, cfg.num_dialogs, "train"), generate_dialogs(cfg, cfg.num_valid, "valid"),
          generate_dialogs(cfg, cfg.num_test, "test")};
}

void write_corpus(const SynthConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Splits s = generate_corpus(cfg);
  corpus::write_transcripts(dir / kTrainFile, s.train);
  corpus::write_transcripts(dir / kValidFile, s.valid);
  corpus::write_transcripts(dir / kTestFile, s.test);
  std::ofstream out(dir / kConfigFile);
  if (!out) throw std::runtime_error("cannot write " + (dir / kConfigFile).string());
  out << cfg.to_text();
}

eval::EvalReport oracle_policy_metrics(const SynthConfig& cfg, const std::vector<Dialog>& dialogs) {
  ScriptedAgent agent(cfg);
  std::vector<Sentence> preds;
  for (const auto& d : dialogs) {
    for (std::size_t k = 1; k <= d.K(); ++k) preds.push_back(agent.canonical(corpus::context_tokens(d, static_cast<int>(k))));
  }
  return eval::make_report(preds, eval::reference_split(dialogs));
}

eval::EvalReport oracle_policy_metrics(const SynthConfig& cfg) {
  return oracle_policy_metrics(cfg, generate_dialogs(cfg, cfg.num_test, "test"));
}

}  // namespace tact::synth
