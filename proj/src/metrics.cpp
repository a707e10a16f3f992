#include "tablemetric/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tablemetric/corpus.hpp"

namespace tablemetric {

std::string to_string(PredClass cls) {
  switch (cls) {
    case PredClass::kLRow:
      return "LRow";
    case PredClass::kLCol:
      return "LCol";
    case PredClass::kCCapt:
      return "CCapt";
    case PredClass::kGen:
      return "Gen";
  }
  return "Gen";
}

bool appears_in_caption(const TableInstance& table, const std::string& name) {
  const std::vector<std::string> words = tokenize(normalize_token(name));
  if (words.empty()) return false;
  const auto& cap = table.caption;
  if (words.size() > cap.size()) return false;
  for (std::size_t start = 0; start + words.size() <= cap.size(); ++start) {
    bool all = true;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (normalize_token(cap[start + k]) != words[k]) {
        all = false;
        break;
      }
    }
    if (all) return true;
  }
  return false;
}

PredClass gold_class(const TableInstance& table) {
  switch (table.target.location) {
    case Location::kRowHeader:
      return PredClass::kLRow;
    case Location::kColumnHeader:
      return PredClass::kLCol;
    case Location::kOutOfHeader:
      break;
  }
  return appears_in_caption(table, table.target.tokens.front())
             ? PredClass::kCCapt
             : PredClass::kGen;
}

namespace {

Location class_location(PredClass cls) {
  switch (cls) {
    case PredClass::kLRow:
      return Location::kRowHeader;
    case PredClass::kLCol:
      return Location::kColumnHeader;
    case PredClass::kCCapt:
    case PredClass::kGen:
      break;
  }
  return Location::kOutOfHeader;
}

void check_aligned(const std::vector<Prediction>& preds,
                   const std::vector<TableInstance>& golds) {
  if (preds.size() != golds.size())
    throw std::invalid_argument(
        "evaluation: " + std::to_string(preds.size()) + " predictions vs " +
        std::to_string(golds.size()) + " gold tables");
  if (preds.empty())
    throw std::invalid_argument("evaluation: nothing to evaluate");
}

}  // namespace

std::pair<Real, Real> location_accuracy(const std::vector<Prediction>& preds,
                                        const std::vector<TableInstance>& golds,
                                        HLevelConvention convention) {
  check_aligned(preds, golds);
  int loc_hits = 0;
  int level_hits = 0;
  int level_total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Prediction& p = preds[i];
    const MetricTarget& t = golds[i].target;
    const bool loc_ok = class_location(p.cls) == t.location;
    if (loc_ok) ++loc_hits;
    if (t.location == Location::kOutOfHeader) {
      if (convention == HLevelConvention::kInHeaderOnly) continue;
      ++level_total;
      if (loc_ok) ++level_hits;
    } else {
      ++level_total;
      if (loc_ok && p.level.has_value() && *p.level == *t.level) ++level_hits;
    }
  }
  const Real hloc = static_cast<Real>(loc_hits) / preds.size();
  const Real hlevel = level_total == 0
                          ? 0.0
                          : static_cast<Real>(level_hits) / level_total;
  return {hloc, hlevel};
}

std::pair<Real, Real> token_accuracy_sm(
    const std::vector<Prediction>& preds,
    const std::vector<TableInstance>& golds) {
  check_aligned(preds, golds);
  int lists_hit = 0;
  long long pair_hits = 0;
  long long pair_total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& mh = preds[i].tokens;
    const auto& m = golds[i].target.tokens;
    const std::size_t lo = std::min(mh.size(), m.size());
    const std::size_t hi = std::max(mh.size(), m.size());
    pair_total += static_cast<long long>(hi);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < lo; ++k)
      if (normalize_token(mh[k]) == normalize_token(m[k])) ++hits;
    pair_hits += static_cast<long long>(hits);
    if (mh.size() == m.size() && hits == m.size()) ++lists_hit;
  }
  const Real list_acc = static_cast<Real>(lists_hit) / preds.size();
  const Real token_acc =
      pair_total == 0 ? 0.0
                      : static_cast<Real>(pair_hits) / pair_total;
  return {list_acc, token_acc};
}

bool ordered_char_match(const std::string& predicted, const std::string& gold) {
  const std::string p = normalize_token(predicted);
  const std::string g = normalize_token(gold);
  std::size_t gi = 0;
  for (const char c : p) {
    while (gi < g.size() && g[gi] != c) ++gi;
    if (gi == g.size()) return false;
    ++gi;
  }
  return true;
}

Real token_accuracy_ocm(const std::vector<Prediction>& preds,
                        const std::vector<TableInstance>& golds) {
  check_aligned(preds, golds);
  long long hits = 0;
  long long total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& mh = preds[i].tokens;
    const auto& m = golds[i].target.tokens;
    total += static_cast<long long>(std::max(mh.size(), m.size()));
    const std::size_t lo = std::min(mh.size(), m.size());
    for (std::size_t k = 0; k < lo; ++k)
      if (ordered_char_match(mh[k], m[k])) ++hits;
  }
  return total == 0 ? 0.0 : static_cast<Real>(hits) / total;
}

std::array<std::array<int, 4>, 4> confusion_matrix(
    const std::vector<Prediction>& preds,
    const std::vector<TableInstance>& golds, bool collapse_caption_class) {
  check_aligned(preds, golds);
  std::array<std::array<int, 4>, 4> matrix{};
  const auto fold = [collapse_caption_class](PredClass c) {
    if (collapse_caption_class && c == PredClass::kCCapt)
      return PredClass::kGen;
    return c;
  };
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int actual = static_cast<int>(fold(gold_class(golds[i])));
    const int predicted = static_cast<int>(fold(preds[i].cls));
    ++matrix[static_cast<std::size_t>(actual)]
            [static_cast<std::size_t>(predicted)];
  }
  return matrix;
}

EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                const std::vector<TableInstance>& golds,
                                const EvalOptions& options) {
  check_aligned(preds, golds);
  EvalReport r;
  std::tie(r.acc_hloc, r.acc_hlevel) =
      location_accuracy(preds, golds, options.hlevel);
  std::tie(r.acc_m_sm, r.acc_m_token_sm) = token_accuracy_sm(preds, golds);
  r.acc_m_token_ocm = token_accuracy_ocm(preds, golds);
  r.confusion = confusion_matrix(preds, golds, options.collapse_caption_class);
  r.n_tables = static_cast<int>(preds.size());

  for (const Real a : {r.acc_hloc, r.acc_hlevel, r.acc_m_sm, r.acc_m_token_sm,
                       r.acc_m_token_ocm}) {
    if (!(a >= 0.0 && a <= 1.0))
      throw std::logic_error("evaluation: accuracy outside [0, 1]");
  }
  if (r.acc_m_token_ocm + 1e-12 < r.acc_m_token_sm)
    throw std::logic_error(
        "evaluation: ordered-character accuracy fell below exact-match "
        "accuracy; exact matches must also match as subsequences");
  int total = 0;
  for (const auto& row : r.confusion)
    for (const int c : row) total += c;
  if (total != r.n_tables)
    throw std::logic_error("evaluation: confusion counts do not sum to n");
  return r;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["acc_hloc"] = report.acc_hloc;
  j["acc_hlevel"] = report.acc_hlevel;
  j["acc_m_sm"] = report.acc_m_sm;
  j["acc_m_token_sm"] = report.acc_m_token_sm;
  j["acc_m_token_ocm"] = report.acc_m_token_ocm;
  j["confusion"] = report.confusion;
  j["n_tables"] = report.n_tables;
  return j.dump(2);
}

std::string confusion_to_csv(const EvalReport& report) {
  static const char* kNames[4] = {"LRow", "LCol", "CCapt", "Gen"};
  std::ostringstream os;
  os << "actual,LRow,LCol,CCapt,Gen\n";
  for (int a = 0; a < 4; ++a) {
    os << kNames[a];
    for (int p = 0; p < 4; ++p)
      os << "," << report.confusion[static_cast<std::size_t>(a)]
                                   [static_cast<std::size_t>(p)];
    os << "\n";
  }
  return os.str();
}

}  // namespace tablemetric
