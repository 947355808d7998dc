#include "tact/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tact {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& source) {
  KeyValues kv;
  kv.source_ = source;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(n) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + "empty key");
    if (kv.values_.count(key)) throw std::invalid_argument(where + "duplicate key '" + key + "'");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValues::get(const std::string& key, const std::string& def) {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  used_.insert(key);
  return it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& source, const std::string& key, const std::string& s) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument(source + ": bad value '" + s + "' for " + key);
  }
  return v;
}

}  // namespace

double KeyValues::get(const std::string& key, double def) {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  used_.insert(key);
  return parse_number<double>(source_, key, it->second);
}

long long KeyValues::get(const std::string& key, long long def) {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  used_.insert(key);
  return parse_number<long long>(source_, key, it->second);
}

std::size_t KeyValues::get(const std::string& key, std::size_t def) {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  used_.insert(key);
  return parse_number<std::size_t>(source_, key, it->second);
}

bool KeyValues::get(const std::string& key, bool def) {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  used_.insert(key);
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::invalid_argument(source_ + ": bad flag '" + it->second + "' for " + key);
}

void KeyValues::require_all_used() const {
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) throw std::invalid_argument(source_ + ": unknown key '" + k + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace tact
