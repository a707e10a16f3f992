#include "tablemetric/table.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace tablemetric {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

void check_axis(const std::vector<std::vector<std::string>>& levels,
                const char* field, int expected,
                std::vector<std::string>& out) {
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (static_cast<int>(levels[k].size()) != expected) {
      std::ostringstream os;
      os << field << "[" << k + 1 << "]: expected " << expected
         << " entries, got " << levels[k].size();
      out.push_back(os.str());
    }
    for (std::size_t j = 0; j < levels[k].size(); ++j) {
      if (trim(levels[k][j]).empty()) {
        std::ostringstream os;
        os << field << "[" << k + 1 << "][" << j + 1
           << "]: header name empty after trimming";
        out.push_back(os.str());
      }
    }
  }
}

bool names_match(const std::vector<std::string>& tokens,
                 const std::vector<std::string>& names) {
  if (tokens.size() != names.size()) return false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (trim(tokens[i]) != trim(names[i])) return false;
  }
  return true;
}

}  // namespace

std::string to_string(Location loc) {
  switch (loc) {
    case Location::kRowHeader:
      return "rh";
    case Location::kColumnHeader:
      return "ch";
    case Location::kOutOfHeader:
      return "none";
  }
  return "none";
}

Location location_from_string(const std::string& s) {
  if (s == "rh") return Location::kRowHeader;
  if (s == "ch") return Location::kColumnHeader;
  if (s == "none") return Location::kOutOfHeader;
  throw std::invalid_argument("unknown metric location string: '" + s + "'");
}

std::vector<std::string> validate(const TableInstance& table) {
  std::vector<std::string> out;
  const int u = table.level_count_rows();
  const int v = table.level_count_cols();

  if (table.caption.empty()) out.push_back("caption: must be non-empty");
  if (u + v < 1)
    out.push_back("headers: table needs at least one header level");

  const int n_r = table.n_rows();
  const int n_c = table.n_cols();
  check_axis(table.row_headers, "row_headers", n_r, out);
  check_axis(table.column_headers, "column_headers", n_c, out);

  if (!table.cells.empty()) {
    if (static_cast<int>(table.cells.size()) != n_r) {
      std::ostringstream os;
      os << "cells: expected " << n_r << " rows, got " << table.cells.size();
      out.push_back(os.str());
    }
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
      if (static_cast<int>(table.cells[i].size()) != n_c) {
        std::ostringstream os;
        os << "cells[" << i + 1 << "]: expected " << n_c << " columns, got "
           << table.cells[i].size();
        out.push_back(os.str());
      }
    }
  }

  const MetricTarget& t = table.target;
  if (t.tokens.empty()) out.push_back("target.tokens: must be non-empty");

  switch (t.location) {
    case Location::kRowHeader: {
      if (!t.level.has_value()) {
        out.push_back("target.level: required for in-header location");
        break;
      }
      const int k = *t.level;
      if (k < 1 || k > u) {
        std::ostringstream os;
        os << "target.level: " << k << " outside row levels 1.." << u;
        out.push_back(os.str());
        break;
      }
      if (!names_match(t.tokens, table.row_headers[k - 1]))
        out.push_back(
            "target.tokens: must equal row-header names at the gold level");
      break;
    }
    case Location::kColumnHeader: {
      if (!t.level.has_value()) {
        out.push_back("target.level: required for in-header location");
        break;
      }
      const int l = *t.level;
      if (l < 1 || l > v) {
        std::ostringstream os;
        os << "target.level: " << l << " outside column levels 1.." << v;
        out.push_back(os.str());
        break;
      }
      if (!names_match(t.tokens, table.column_headers[l - 1]))
        out.push_back(
            "target.tokens: must equal column-header names at the gold level");
      break;
    }
    case Location::kOutOfHeader: {
      if (t.level.has_value())
        out.push_back("target.level: must be absent for out-of-header");
      const bool uniform = std::all_of(
          t.tokens.begin(), t.tokens.end(),
          [&](const std::string& s) { return s == t.tokens.front(); });
      if (!t.tokens.empty() && !uniform)
        out.push_back(
            "target.tokens: out-of-header tokens must all be identical");
      break;
    }
  }
  return out;
}

std::vector<FlatLevel> flatten_levels(const TableInstance& table) {
  std::vector<FlatLevel> out;
  out.reserve(table.row_headers.size() + table.column_headers.size());
  for (std::size_t k = 0; k < table.row_headers.size(); ++k)
    out.push_back({Location::kRowHeader, static_cast<int>(k) + 1,
                   table.row_headers[k]});
  for (std::size_t l = 0; l < table.column_headers.size(); ++l)
    out.push_back({Location::kColumnHeader, static_cast<int>(l) + 1,
                   table.column_headers[l]});
  return out;
}

std::optional<int> flat_gold_index(const TableInstance& table) {
  const MetricTarget& t = table.target;
  if (!t.level.has_value()) return std::nullopt;
  if (t.location == Location::kRowHeader) return *t.level;
  if (t.location == Location::kColumnHeader)
    return table.level_count_rows() + *t.level;
  return std::nullopt;
}

}  // namespace tablemetric
