#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tact::corpus {

using TokenId = int;

inline constexpr std::string_view kApiCallMarker = "api_call";

enum class Speaker { User, Agent, Kb };

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string raw;
  std::vector<std::string> tokens;

  bool operator==(const Utterance&) const = default;
};

struct ApiCall {
  std::string name;
  std::vector<std::string> params;
  int turn = 0;

  bool operator==(const ApiCall&) const = default;
};

struct Turn {
  Utterance user;
  Utterance agent;

  bool operator==(const Turn&) const = default;
};

/// One transcript. kb_responses[k-1] holds the knowledge-base records that
/// appear after turn k and before turn k+1.
struct Dialog {
  std::vector<Turn> turns;
  std::vector<std::vector<Utterance>> kb_responses;

  std::size_t K() const { return turns.size(); }
  bool operator==(const Dialog&) const = default;
};

/// Token ids of everything preceding the agent utterance of `turn`.
struct Context {
  std::vector<TokenId> tokens;
  int turn = 0;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Token <-> id map with three reserved ids. Content tokens get ids in the
/// order they were added.
class Vocabulary {
 public:
  static constexpr TokenId kEos = 0;
  static constexpr TokenId kPad = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kReserved = 3;
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Adds `token` if absent and returns its id. Reserved spellings map to
  /// their reserved ids.
  TokenId add(const std::string& token);
  std::optional<TokenId> find(std::string_view token) const;
  /// Id of `token`, or kUnk when absent.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  /// Plain text, one content token per line; line i holds id kReserved + i.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Maximal whitespace-delimited substrings, in order. No normalization.
std::vector<std::string> tokenize(std::string_view line);

/// Parses the bAbI dialog line format from a file.
std::vector<Dialog> parse_transcripts(const std::filesystem::path& path);
/// Same, from in-memory text; `source` names the input in error messages.
std::vector<Dialog> parse_transcripts_text(std::string_view text, const std::string& source = "<text>");

/// Writes dialogs back in the line format parse_transcripts reads.
std::string format_dialogs(const std::vector<Dialog>& dialogs);
void write_transcripts(const std::filesystem::path& path, const std::vector<Dialog>& dialogs);

/// All token strings preceding y^k, including x^k and interleaved KB records.
std::vector<std::string> context_tokens(const Dialog& dialog, int k);
Context build_context(const Dialog& dialog, int k, const Vocabulary& vocab);
/// Contexts for k = 1..K, built incrementally.
std::vector<Context> build_contexts(const Dialog& dialog, const Vocabulary& vocab);

Vocabulary build_vocab(const std::vector<Dialog>& dialogs);

std::optional<ApiCall> classify_api_call(const Utterance& u, int turn = 0);
/// Reference API calls of a dialog, in turn order.
std::vector<ApiCall> api_calls(const Dialog& dialog);

/// Agent utterance ids with EOS appended.
std::vector<TokenId> encode_target(const Utterance& agent, const Vocabulary& vocab);

struct CorpusStats {
  std::size_t dialogs = 0;
  std::size_t turns = 0;
  double avg_utterances_per_dialog = 0.0;
  double avg_context_length = 0.0;
  std::size_t max_context_length = 0;
  double avg_agent_length = 0.0;
  std::size_t max_agent_length = 0;
  double avg_kb_records_per_api_call = 0.0;
};

/// Utterances count user and agent sides; KB records are counted separately.
CorpusStats compute_stats(const std::vector<Dialog>& dialogs);

}  // namespace tact::corpus
