#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace tact {

/// Flat `key = value` settings. `#` starts a comment; blank lines are ignored.
class KeyValues {
 public:
  /// Throws std::invalid_argument naming the line on malformed input or a duplicate key.
  static KeyValues parse(const std::string& text, const std::string& source = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  // Typed getters fall back to `def` when the key is absent and throw on unparsable values.
  std::string get(const std::string& key, const std::string& def);
  double get(const std::string& key, double def);
  long long get(const std::string& key, long long def);
  std::size_t get(const std::string& key, std::size_t def);
  bool get(const std::string& key, bool def);

  /// Throws if any key was never read, which catches misspelled settings.
  void require_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
  std::string source_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace tact
