#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cachelab/cache.hpp"

namespace cachelab {

struct ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key/value text: `key = value` lines, `#` comments, and repeated
// `[level]` sections describing the hierarchy fastest first. Keys before the
// first section are global. Duplicate keys within a scope are rejected.
class Config {
 public:
  [[nodiscard]] static Config parse(std::istream& in) {
    Config cfg;
    std::map<std::string, std::string>* scope = nullptr;
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[') {
        if (t != "[level]")
          throw ConfigError("line " + std::to_string(lineno) + ": unknown section '" + t +
                            "' (only [level] exists)");
        cfg.levels_.emplace_back();
        scope = &cfg.levels_.back();
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (scope == nullptr) {
        for (const auto& [k, v] : cfg.globals_)
          if (k == key)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
        cfg.globals_.emplace_back(key, value);
      } else {
        if (!scope->emplace(key, value).second)
          throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                            "'");
      }
    }
    return cfg;
  }

  [[nodiscard]] static Config parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  [[nodiscard]] static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string str(const std::string& key, std::string fallback = "") const {
    const std::string* v = find(key);
    return v == nullptr ? std::move(fallback) : *v;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback = 0) const {
    const std::string* v = find(key);
    return v == nullptr ? fallback : parse_u64(*v, key);
  }

  std::size_t level_count() const { return levels_.size(); }

  // Builds the hierarchy from the [level] sections. Keys: capacity, block,
  // ways (default 1), latency (default 1).
  HierarchySpec hierarchy() const {
    if (levels_.empty()) throw ConfigError("config declares no [level] sections");
    HierarchySpec h;
    for (const auto& lv : levels_) {
      CacheLevelSpec s;
      s.capacity = level_u64(lv, "capacity");
      s.block = level_u64(lv, "block");
      s.ways = lv.count("ways") != 0 ? level_u64(lv, "ways") : 1;
      s.latency = lv.count("latency") != 0 ? level_u64(lv, "latency") : 1;
      h.levels.push_back(s);
    }
    try {
      h.validate();
    } catch (const CacheConfigError& e) {
      throw ConfigError(std::string("invalid hierarchy: ") + e.what());
    }
    return h;
  }

  const std::vector<std::pair<std::string, std::string>>& globals() const { return globals_; }

  // Level echo for reports, one "capacity/block/ways/latency" string per level.
  std::vector<std::string> level_echo() const {
    std::vector<std::string> out;
    for (const auto& lv : levels_) {
      std::string s;
      for (const char* key : {"capacity", "block", "ways", "latency"}) {
        if (!s.empty()) s += '/';
        auto it = lv.find(key);
        s += it == lv.end() ? std::string("-") : it->second;
      }
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    std::uint64_t out = 0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    const auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || p != last)
      throw ConfigError("key '" + key + "': '" + v + "' is not an unsigned integer");
    return out;
  }

  static std::uint64_t level_u64(const std::map<std::string, std::string>& lv,
                                 const std::string& key) {
    auto it = lv.find(key);
    if (it == lv.end()) throw ConfigError("[level] section is missing '" + key + "'");
    return parse_u64(it->second, key);
  }

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : globals_)
      if (k == key) return &v;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> globals_;
  std::vector<std::map<std::string, std::string>> levels_;
};

}  // namespace cachelab
