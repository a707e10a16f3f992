#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tablemetric {

// Functional area of a table that carries the metric-type.
enum class Location { kRowHeader, kColumnHeader, kOutOfHeader };

std::string to_string(Location loc);             // "rh" / "ch" / "none"
Location location_from_string(const std::string& s);

// Gold annotation: where the metric-type lives and the tokens naming it.
// `level` is 1-based and present exactly when the location is in-header.
struct MetricTarget {
  Location location = Location::kOutOfHeader;
  std::optional<int> level;
  std::vector<std::string> tokens;

  bool operator==(const MetricTarget&) const = default;
};

// One numerical table: caption tokens, leveled header grids, cell values,
// and the gold metric target. Immutable by convention once loaded; nothing
// in this repository mutates a table after construction.
//
// Header grids are rectangular: every row-header level names all n_r rows,
// every column-header level names all n_c columns. Cell values are retained
// for fidelity but no model reads them.
struct TableInstance {
  std::string id;
  std::vector<std::string> caption;                      // lowercased tokens
  std::vector<std::vector<std::string>> row_headers;     // u levels x n_r
  std::vector<std::vector<std::string>> column_headers;  // v levels x n_c
  std::vector<std::vector<std::string>> cells;           // n_r x n_c
  MetricTarget target;

  int level_count_rows() const { return static_cast<int>(row_headers.size()); }
  int level_count_cols() const {
    return static_cast<int>(column_headers.size());
  }
  int n_rows() const {
    if (!row_headers.empty()) return static_cast<int>(row_headers[0].size());
    return static_cast<int>(cells.size());
  }
  int n_cols() const {
    if (!column_headers.empty())
      return static_cast<int>(column_headers[0].size());
    return cells.empty() ? 0 : static_cast<int>(cells[0].size());
  }

  bool operator==(const TableInstance&) const = default;
};

// Checks every structural invariant and returns one human-readable line per
// violation. Never throws; an empty result means the table is acceptable to
// every model in this repository.
std::vector<std::string> validate(const TableInstance& table);

// One header level in the canonical flat ordering.
struct FlatLevel {
  Location axis = Location::kRowHeader;  // kRowHeader or kColumnHeader
  int level = 0;                         // 1-based within its axis
  std::vector<std::string> names;
};

// Canonical level ordering: row levels 1..u, then column levels 1..v.
// The 1-based position of (axis, level) in this list is the flat level index
// used by the level-weight gates.
std::vector<FlatLevel> flatten_levels(const TableInstance& table);

// Flat 1-based index of the gold level; empty for out-of-header targets.
std::optional<int> flat_gold_index(const TableInstance& table);

}  // namespace tablemetric
