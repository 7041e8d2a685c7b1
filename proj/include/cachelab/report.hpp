#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace cachelab {

struct ReportError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Cell = std::variant<std::uint64_t, double, std::string>;

// Columnar result table plus a config echo. Serialization is fully
// deterministic: same report, same bytes. Timing never goes into the table;
// it would break byte-for-byte reproducibility of saved reports.
struct Report {
  std::string experiment;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void echo(std::string key, std::string value) {
    config.emplace_back(std::move(key), std::move(value));
  }

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
      throw ReportError("row arity " + std::to_string(row.size()) + " does not match " +
                        std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
  }

  bool has_column(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ReportError("unformattable number");
  return std::string(buf, p);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string cell_csv(const Cell& c) {
  if (const auto* u = std::get_if<std::uint64_t>(&c)) return std::to_string(*u);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  return csv_escape(std::get<std::string>(c));
}

}  // namespace detail

inline std::string to_csv(const Report& r) {
  std::string out;
  out += "# experiment = " + r.experiment + "\n";
  for (const auto& [k, v] : r.config) out += "# " + k + " = " + v + "\n";
  for (std::size_t i = 0; i < r.columns.size(); ++i) {
    if (i > 0) out += ',';
    out += detail::csv_escape(r.columns[i]);
  }
  out += '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out += ',';
      out += detail::cell_csv(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline std::string to_json_text(const Report& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["columns"] = r.columns;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json jr = nlohmann::ordered_json::array();
    for (const auto& c : row) {
      if (const auto* u = std::get_if<std::uint64_t>(&c))
        jr.push_back(*u);
      else if (const auto* d = std::get_if<double>(&c))
        jr.push_back(*d);
      else
        jr.push_back(std::get<std::string>(c));
    }
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

inline std::string serialize_report(const Report& r, const std::string& format) {
  if (format == "csv") return to_csv(r);
  if (format == "json") return to_json_text(r);
  throw ReportError("unknown report format '" + format + "' (csv or json)");
}

}  // namespace cachelab
