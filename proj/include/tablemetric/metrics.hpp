#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tablemetric/table.hpp"
#include "tablemetric/types.hpp"

namespace tablemetric {

// Four-way prediction class: metric named by a row level, a column level,
// copied out of the caption, or generated from the metric vocabulary.
enum class PredClass { kLRow = 0, kLCol = 1, kCCapt = 2, kGen = 3 };

std::string to_string(PredClass cls);

struct Prediction {
  PredClass cls = PredClass::kGen;
  std::optional<int> level;          // 1-based, in-header predictions only
  std::vector<std::string> tokens;   // predicted metric-type list
};

// True when the normalized name appears in the caption: single-word names
// match a caption token, multi-word names match a consecutive token run.
bool appears_in_caption(const TableInstance& table, const std::string& name);

// Gold class of a table. Out-of-header golds split into caption-copied
// (the gold name occurs in the caption) versus vocabulary-generated.
PredClass gold_class(const TableInstance& table);

// How header-level accuracy treats tables whose gold is out-of-header:
// count them as level-correct whenever the predicted class is also
// out-of-header (default), or drop them from the ratio entirely.
enum class HLevelConvention { kOohLocationMatch, kInHeaderOnly };

struct EvalOptions {
  HLevelConvention hlevel = HLevelConvention::kOohLocationMatch;
  // Folds CCapt into Gen on both axes of the confusion matrix — the
  // reporting shape for models that cannot copy from the caption.
  bool collapse_caption_class = false;
};

// Fraction of correct 3-way locations, and of correct (location, level)
// pairs under the given convention.
std::pair<Real, Real> location_accuracy(
    const std::vector<Prediction>& preds,
    const std::vector<TableInstance>& golds,
    HLevelConvention convention = HLevelConvention::kOohLocationMatch);

// List-level and token-level exact string matching. Token pairs compare
// positionally up to the shorter list; the token denominator is
// sum(max(|predicted|, |gold|)) so extra and missing tokens both cost.
std::pair<Real, Real> token_accuracy_sm(
    const std::vector<Prediction>& preds,
    const std::vector<TableInstance>& golds);

// Ordered character matching: a predicted token scores when its characters
// appear in its paired gold token in order. Same pairing and denominator
// as token_accuracy_sm, which is what makes the dominance invariant hold.
Real token_accuracy_ocm(const std::vector<Prediction>& preds,
                        const std::vector<TableInstance>& golds);

// The subsequence test behind ordered character matching, exposed for
// reuse and direct testing. Comparison is on normalized (lowercased,
// trimmed) strings. Note the documented leniency: "rec" matches "prec".
bool ordered_char_match(const std::string& predicted,
                        const std::string& gold);

// Rows = actual class, columns = predicted class, order LRow, LCol,
// CCapt, Gen.
std::array<std::array<int, 4>, 4> confusion_matrix(
    const std::vector<Prediction>& preds,
    const std::vector<TableInstance>& golds,
    bool collapse_caption_class = false);

struct EvalReport {
  Real acc_hloc = 0.0;
  Real acc_hlevel = 0.0;
  Real acc_m_sm = 0.0;
  Real acc_m_token_sm = 0.0;
  Real acc_m_token_ocm = 0.0;  // all five are fractions in [0, 1]
  std::array<std::array<int, 4>, 4> confusion{};
  int n_tables = 0;
};

// Computes every metric at once and enforces the report invariants
// (fractions in range, ocm >= sm, confusion sums to n_tables).
EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                const std::vector<TableInstance>& golds,
                                const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);
std::string confusion_to_csv(const EvalReport& report);

}  // namespace tablemetric
