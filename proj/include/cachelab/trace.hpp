#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cachelab/cache.hpp"
#include "cachelab/memory.hpp"

namespace cachelab {

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text trace: one reference per line, "R <addr>" or "W <addr>" with the
// address a decimal word index. Blank lines and lines starting with '#'
// are ignored. Errors name the offending line.
inline std::vector<MemoryEvent> parse_trace(std::istream& in) {
  std::vector<MemoryEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line.substr(first));
    std::string op;
    ls >> op;
    AccessKind kind;
    if (op == "R" || op == "r") kind = AccessKind::kRead;
    else if (op == "W" || op == "w") kind = AccessKind::kWrite;
    else
      throw TraceError("line " + std::to_string(lineno) +
                       ": expected R or W, got '" + op + "'");
    std::string tok;
    if (!(ls >> tok))
      throw TraceError("line " + std::to_string(lineno) + ": missing address");
    if (tok.find_first_not_of("0123456789") != std::string::npos)
      throw TraceError("line " + std::to_string(lineno) + ": bad address '" + tok + "'");
    std::uint64_t addr = 0;
    try {
      addr = std::stoull(tok);
    } catch (const std::out_of_range&) {
      throw TraceError("line " + std::to_string(lineno) + ": address out of range");
    }
    std::string rest;
    if (ls >> rest)
      throw TraceError("line " + std::to_string(lineno) + ": trailing junk '" + rest + "'");
    events.push_back({kind, addr});
  }
  return events;
}

inline std::vector<MemoryEvent> parse_trace(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in);
}

inline void write_trace(std::ostream& out, const std::vector<MemoryEvent>& events) {
  for (const auto& e : events)
    out << (e.kind == AccessKind::kRead ? 'R' : 'W') << ' ' << e.addr << '\n';
}

// Replays a trace; each reference counts as one unit op.
inline RunStats replay_trace(CacheHierarchy& cache, const std::vector<MemoryEvent>& events) {
  RunStats stats(cache.spec().depth());
  for (const auto& e : events) stats.add(cache.access(e.addr, e.kind), 1);
  return stats;
}

}  // namespace cachelab
