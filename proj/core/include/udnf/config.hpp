#pragma once

// Flat key = value configuration files: `key = value` per line, `#` comments,
// blank lines ignored. Typed getters record which keys were consumed so
// unknown keys can be rejected after the consumer has read everything it
// understands. CLI flags override file values via set().

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "udnf/common.hpp"

namespace udnf {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str(), path);
  }

  static KeyValueConfig from_string(const std::string& text,
                                    const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto stripped = trim(line);
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos)
        throw DataError("config: " + origin + ":" + std::to_string(lineno) +
                        ": expected key = value");
      const auto key = trim(stripped.substr(0, eq));
      const auto value = trim(stripped.substr(eq + 1));
      if (key.empty())
        throw DataError("config: " + origin + ":" + std::to_string(lineno) +
                        ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw DataError("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  int get_int(const std::string& key, int fallback) {
    const double v = get_double(key, double(fallback));
    const int i = int(v);
    if (double(i) != v)
      throw DataError("config: key '" + key + "' is not an integer");
    return i;
  }

  bool get_bool(const std::string& key, bool fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw DataError("config: key '" + key + "' is not a bool: " + it->second);
  }

  // Call after all known keys have been read; rejects anything left over.
  void reject_unknown_keys() const {
    std::string unknown;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty())
      throw DataError("config: unknown keys: " + unknown);
  }

  // The full contents, e.g. for embedding into checkpoints.
  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace udnf
