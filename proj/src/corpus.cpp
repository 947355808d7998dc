#include "tact/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace tact::corpus {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

Utterance make_utterance(Speaker speaker, std::string_view text) {
  Utterance u;
  u.speaker = speaker;
  u.raw = std::string(trim(text));
  u.tokens = tokenize(u.raw);
  return u;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

Vocabulary::Vocabulary() {
  for (auto t : {kEosToken, kPadToken, kUnkToken}) {
    index_.emplace(std::string(t), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

TokenId Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (std::size_t i = kReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read vocabulary: " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || tokenize(line).size() != 1) {
      throw ParseError(path.string(), n, "vocabulary lines hold exactly one token");
    }
    const auto expected = static_cast<TokenId>(v.size());
    if (v.add(line) != expected) throw ParseError(path.string(), n, "duplicate token " + line);
  }
  return v;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<Dialog> parse_transcripts_text(std::string_view text, const std::string& source) {
  std::vector<Dialog> dialogs;
  Dialog current;
  bool open = false;
  std::size_t line_no = 0;
  auto close = [&] {
    if (open) dialogs.push_back(std::move(current));
    current = Dialog{};
    open = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      close();
      if (end == text.size()) break;
      continue;
    }

    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits == 0 || digits == line.size() || line[digits] != ' ') {
      throw ParseError(source, line_no, "expected '<n> ' line counter prefix");
    }
    std::string_view body = line.substr(digits + 1);
    const std::size_t tab = body.find('\t');
    if (tab != std::string_view::npos) {
      Turn turn;
      turn.user = make_utterance(Speaker::User, body.substr(0, tab));
      turn.agent = make_utterance(Speaker::Agent, body.substr(tab + 1));
      current.turns.push_back(std::move(turn));
      current.kb_responses.emplace_back();
      open = true;
      continue;
    }
    Utterance record = make_utterance(Speaker::Kb, body);
    if (record.tokens.size() != 3) {
      throw ParseError(source, line_no, "line has no tab and is not a '<restaurant> <attribute> <value>' record");
    }
    if (current.turns.empty()) {
      throw ParseError(source, line_no, "knowledge-base record before the first turn of a dialog");
    }
    current.kb_responses.back().push_back(std::move(record));
  }
  close();
  return dialogs;
}

std::vector<Dialog> parse_transcripts(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read transcripts: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_transcripts_text(ss.str(), path.string());
}

std::string format_dialogs(const std::vector<Dialog>& dialogs) {
  std::ostringstream os;
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    if (d > 0) os << '\n';
    std::size_t n = 0;
    const Dialog& dialog = dialogs[d];
    for (std::size_t k = 0; k < dialog.turns.size(); ++k) {
      os << ++n << ' ' << dialog.turns[k].user.raw << '\t' << dialog.turns[k].agent.raw << '\n';
      if (k < dialog.kb_responses.size()) {
        for (const auto& rec : dialog.kb_responses[k]) os << ++n << ' ' << rec.raw << '\n';
      }
    }
  }
  return os.str();
}

void write_transcripts(const std::filesystem::path& path, const std::vector<Dialog>& dialogs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write transcripts: " + path.string());
  os << format_dialogs(dialogs);
}

std::vector<std::string> context_tokens(const Dialog& dialog, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > dialog.K()) {
    throw std::out_of_range("context: turn " + std::to_string(k) + " outside 1.." + std::to_string(dialog.K()));
  }
  std::vector<std::string> out;
  for (int j = 1; j < k; ++j) {
    const Turn& t = dialog.turns[static_cast<std::size_t>(j - 1)];
    out.insert(out.end(), t.user.tokens.begin(), t.user.tokens.end());
    out.insert(out.end(), t.agent.tokens.begin(), t.agent.tokens.end());
    for (const auto& rec : dialog.kb_responses[static_cast<std::size_t>(j - 1)]) {
      out.insert(out.end(), rec.tokens.begin(), rec.tokens.end());
    }
  }
  const auto& x = dialog.turns[static_cast<std::size_t>(k - 1)].user.tokens;
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

Context build_context(const Dialog& dialog, int k, const Vocabulary& vocab) {
  return Context{vocab.encode(context_tokens(dialog, k)), k};
}

std::vector<Context> build_contexts(const Dialog& dialog, const Vocabulary& vocab) {
  std::vector<Context> out;
  std::vector<TokenId> history;
  for (std::size_t k = 0; k < dialog.K(); ++k) {
    const Turn& t = dialog.turns[k];
    Context c;
    c.turn = static_cast<int>(k + 1);
    c.tokens = history;
    for (const auto& tok : t.user.tokens) c.tokens.push_back(vocab.id(tok));
    history = c.tokens;
    for (const auto& tok : t.agent.tokens) history.push_back(vocab.id(tok));
    for (const auto& rec : dialog.kb_responses[k]) {
      for (const auto& tok : rec.tokens) history.push_back(vocab.id(tok));
    }
    out.push_back(std::move(c));
  }
  return out;
}

Vocabulary build_vocab(const std::vector<Dialog>& dialogs) {
  Vocabulary v;
  for (const auto& d : dialogs) {
    for (std::size_t k = 0; k < d.K(); ++k) {
      for (const auto& t : d.turns[k].user.tokens) v.add(t);
      for (const auto& t : d.turns[k].agent.tokens) v.add(t);
      for (const auto& rec : d.kb_responses[k]) {
        for (const auto& t : rec.tokens) v.add(t);
      }
    }
  }
  return v;
}

std::optional<ApiCall> classify_api_call(const Utterance& u, int turn) {
  if (u.tokens.empty() || u.tokens.front() != kApiCallMarker) return std::nullopt;
  ApiCall call;
  call.name = u.tokens.front();
  call.params.assign(u.tokens.begin() + 1, u.tokens.end());
  call.turn = turn;
  return call;
}

std::vector<ApiCall> api_calls(const Dialog& dialog) {
  std::vector<ApiCall> out;
  for (std::size_t k = 0; k < dialog.K(); ++k) {
    if (auto c = classify_api_call(dialog.turns[k].agent, static_cast<int>(k + 1))) out.push_back(std::move(*c));
  }
  return out;
}

std::vector<TokenId> encode_target(const Utterance& agent, const Vocabulary& vocab) {
  std::vector<TokenId> ids = vocab.encode(agent.tokens);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

CorpusStats compute_stats(const std::vector<Dialog>& dialogs) {
  CorpusStats s;
  s.dialogs = dialogs.size();
  std::size_t utterances = 0, ctx_total = 0, agent_total = 0, api_count = 0, kb_after_api = 0;
  for (const auto& d : dialogs) {
    std::size_t history = 0;
    for (std::size_t k = 0; k < d.K(); ++k) {
      const Turn& t = d.turns[k];
      ++s.turns;
      utterances += 2;
      const std::size_t ctx = history + t.user.tokens.size();
      ctx_total += ctx;
      s.max_context_length = std::max(s.max_context_length, ctx);
      agent_total += t.agent.tokens.size();
      s.max_agent_length = std::max(s.max_agent_length, t.agent.tokens.size());
      history = ctx + t.agent.tokens.size();
      for (const auto& rec : d.kb_responses[k]) history += rec.tokens.size();
      if (classify_api_call(t.agent)) {
        ++api_count;
        kb_after_api += d.kb_responses[k].size();
      }
    }
  }
  if (s.dialogs) s.avg_utterances_per_dialog = static_cast<double>(utterances) / static_cast<double>(s.dialogs);
  if (s.turns) {
    s.avg_context_length = static_cast<double>(ctx_total) / static_cast<double>(s.turns);
    s.avg_agent_length = static_cast<double>(agent_total) / static_cast<double>(s.turns);
  }
  if (api_count) s.avg_kb_records_per_api_call = static_cast<double>(kb_after_api) / static_cast<double>(api_count);
  return s;
}

}  // namespace tact::corpus
