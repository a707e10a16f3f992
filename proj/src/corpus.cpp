#include "tablemetric/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tablemetric {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string normalize_token(const std::string& token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && std::isspace(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(token[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  for (std::size_t i = b; i < e; ++i)
    out.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(token[i]))));
  return out;
}

namespace {

std::string record_context(const std::string& split, int index) {
  std::ostringstream os;
  if (!split.empty()) os << split << " ";
  os << "record " << index;
  return os.str();
}

std::string as_cell_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

std::vector<std::vector<std::string>> parse_grid(const json& j,
                                                 const std::string& ctx,
                                                 const char* field) {
  if (!j.is_array())
    throw CorpusError(ctx + ": field '" + std::string(field) +
                      "' must be an array of arrays");
  std::vector<std::vector<std::string>> grid;
  grid.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array())
      throw CorpusError(ctx + ": field '" + std::string(field) +
                        "' must be an array of arrays");
    std::vector<std::string> r;
    r.reserve(row.size());
    for (const auto& cell : row) r.push_back(as_cell_string(cell));
    grid.push_back(std::move(r));
  }
  return grid;
}

TableInstance parse_record(const json& rec, const std::string& ctx) {
  if (!rec.is_object()) throw CorpusError(ctx + ": record must be an object");
  for (const char* field :
       {"id", "caption", "row_headers", "column_headers", "cells", "metric"}) {
    if (!rec.contains(field))
      throw CorpusError(ctx + ": missing field '" + std::string(field) + "'");
  }

  TableInstance t;
  if (!rec["id"].is_string())
    throw CorpusError(ctx + ": field 'id' must be a string");
  t.id = rec["id"].get<std::string>();
  if (!rec["caption"].is_string())
    throw CorpusError(ctx + ": field 'caption' must be a string");
  t.caption = tokenize(rec["caption"].get<std::string>());
  t.row_headers = parse_grid(rec["row_headers"], ctx, "row_headers");
  t.column_headers = parse_grid(rec["column_headers"], ctx, "column_headers");
  t.cells = parse_grid(rec["cells"], ctx, "cells");

  const json& m = rec["metric"];
  if (!m.is_object() || !m.contains("location") || !m.contains("tokens"))
    throw CorpusError(ctx + ": field 'metric' must hold location and tokens");
  if (!m["location"].is_string())
    throw CorpusError(ctx + ": metric.location must be a string");
  try {
    t.target.location = location_from_string(m["location"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw CorpusError(ctx + ": " + e.what());
  }
  if (m.contains("level") && !m["level"].is_null()) {
    if (!m["level"].is_number_integer())
      throw CorpusError(ctx + ": metric.level must be an integer or null");
    t.target.level = m["level"].get<int>();
  }
  if (!m["tokens"].is_array())
    throw CorpusError(ctx + ": metric.tokens must be an array");
  for (const auto& tok : m["tokens"]) {
    if (!tok.is_string())
      throw CorpusError(ctx + ": metric.tokens must hold strings");
    t.target.tokens.push_back(tok.get<std::string>());
  }
  return t;
}

}  // namespace

LoadResult load_corpus(const std::string& path, const std::string& split) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorpusError("parse error in " + path + ": " + e.what());
  }
  if (!doc.is_array())
    throw CorpusError(path + ": corpus file must be a JSON array");

  LoadResult result;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string ctx = record_context(split, static_cast<int>(i));
    TableInstance t = parse_record(doc[i], ctx);
    std::vector<std::string> problems = validate(t);
    if (problems.empty()) {
      result.tables.push_back(std::move(t));
    } else {
      result.quarantined.push_back(
          {static_cast<int>(i), t.id, std::move(problems)});
    }
  }
  return result;
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

void save_corpus(const std::vector<TableInstance>& tables,
                 const std::string& path) {
  json doc = json::array();
  for (const TableInstance& t : tables) {
    json rec;
    rec["id"] = t.id;
    rec["caption"] = join(t.caption);
    rec["row_headers"] = t.row_headers;
    rec["column_headers"] = t.column_headers;
    rec["cells"] = t.cells;
    json m;
    m["location"] = to_string(t.target.location);
    m["level"] = t.target.level.has_value() ? json(*t.target.level) : json();
    m["tokens"] = t.target.tokens;
    rec["metric"] = std::move(m);
    doc.push_back(std::move(rec));
  }
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path);
  out << doc.dump(2) << "\n";
}

std::pair<Vocabulary, Vocabulary> build_vocabularies(
    const std::vector<TableInstance>& tables, bool canonical_order) {
  std::vector<std::string> general_tokens;
  std::vector<std::string> metric_tokens;
  for (const TableInstance& t : tables) {
    for (const auto& tok : t.caption) general_tokens.push_back(tok);
    for (const auto& level : t.row_headers)
      for (const auto& name : level)
        for (auto& tok : tokenize(name)) general_tokens.push_back(tok);
    for (const auto& level : t.column_headers)
      for (const auto& name : level)
        for (auto& tok : tokenize(name)) general_tokens.push_back(tok);
    for (const auto& name : t.target.tokens)
      metric_tokens.push_back(normalize_token(name));
  }
  if (canonical_order) {
    std::sort(general_tokens.begin(), general_tokens.end());
    std::sort(metric_tokens.begin(), metric_tokens.end());
  }
  Vocabulary general(false);
  for (const auto& tok : general_tokens) general.add(tok);
  Vocabulary metric(true);
  for (const auto& tok : metric_tokens) metric.add(tok);
  return {std::move(general), std::move(metric)};
}

CorpusStats corpus_stats(const std::vector<TableInstance>& tables) {
  CorpusStats s;
  s.table_count = static_cast<int>(tables.size());
  std::set<std::string> header_tokens;
  std::set<std::string> metric_names;
  long long rows = 0;
  long long cols = 0;
  for (const TableInstance& t : tables) {
    rows += t.n_rows();
    cols += t.n_cols();
    s.max_row_level = std::max(s.max_row_level, t.level_count_rows());
    s.max_col_level = std::max(s.max_col_level, t.level_count_cols());
    for (const auto& level : t.row_headers)
      for (const auto& name : level)
        for (auto& tok : tokenize(name)) header_tokens.insert(tok);
    for (const auto& level : t.column_headers)
      for (const auto& name : level)
        for (auto& tok : tokenize(name)) header_tokens.insert(tok);
    std::set<std::string> per_table;
    for (const auto& name : t.target.tokens)
      per_table.insert(normalize_token(name));
    s.all_metric_types += static_cast<int>(per_table.size());
    metric_names.insert(per_table.begin(), per_table.end());
  }
  if (!tables.empty()) {
    s.avg_rows = static_cast<Real>(rows) / static_cast<Real>(tables.size());
    s.avg_cols = static_cast<Real>(cols) / static_cast<Real>(tables.size());
  }
  s.header_vocab_size = static_cast<int>(header_tokens.size());
  s.unique_metric_types = static_cast<int>(metric_names.size());
  return s;
}

std::string stats_to_json(const CorpusStats& s) {
  json j;
  j["table_count"] = s.table_count;
  j["avg_rows"] = s.avg_rows;
  j["avg_cols"] = s.avg_cols;
  j["max_row_level"] = s.max_row_level;
  j["max_col_level"] = s.max_col_level;
  j["header_vocab_size"] = s.header_vocab_size;
  j["all_metric_types"] = s.all_metric_types;
  j["unique_metric_types"] = s.unique_metric_types;
  return j.dump(2);
}

namespace {

const std::vector<std::string>& task_words() {
  static const std::vector<std::string> v = {
      "parsing",       "tagging",        "retrieval", "translation",
      "summarization", "classification", "linking",   "segmentation"};
  return v;
}

const std::vector<std::string>& dataset_words() {
  static const std::vector<std::string> v = {
      "news", "wiki", "web", "reviews", "dialogue", "patents", "abstracts",
      "forums"};
  return v;
}

const std::vector<std::string>& system_words() {
  static const std::vector<std::string> v = {
      "baseline", "pivot", "joint", "proposed", "neural", "hybrid", "linear",
      "stacked"};
  return v;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> v = {
      "overall", "detailed", "main", "full", "additional", "final",
      "comparative"};
  return v;
}

std::string numbered(const std::string& base, int k) {
  return base + " " + std::to_string(k);
}

// Header names for a non-metric level: either one repeated group name,
// block groups ("task 1 task 1 task 2 task 2"), or per-slot distinct names.
std::vector<std::string> filler_level(Rng& rng, int n,
                                      const std::vector<std::string>& pool) {
  const std::string base = pool[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
  const int style = rng.uniform_int(0, 2);
  std::vector<std::string> names(static_cast<std::size_t>(n));
  if (style == 0) {
    for (auto& s : names) s = base;
  } else if (style == 1) {
    const int groups = std::max(1, rng.uniform_int(1, std::max(1, n / 2)));
    for (int j = 0; j < n; ++j)
      names[static_cast<std::size_t>(j)] = numbered(base, j * groups / n + 1);
  } else {
    for (int j = 0; j < n; ++j)
      names[static_cast<std::size_t>(j)] = numbered(base, j + 1);
  }
  return names;
}

// Metric level: a repeating cycle of distinct metric names, mirroring
// grids like [prec, rec, prec, rec].
std::vector<std::string> metric_level(Rng& rng, int n,
                                      const std::vector<std::string>& lexicon) {
  const int max_distinct =
      std::min({3, n, static_cast<int>(lexicon.size())});
  const int m = rng.uniform_int(1, std::max(1, max_distinct));
  std::vector<int> picks;
  while (static_cast<int>(picks.size()) < m) {
    const int c = rng.uniform_int(0, static_cast<int>(lexicon.size()) - 1);
    if (std::find(picks.begin(), picks.end(), c) == picks.end())
      picks.push_back(c);
  }
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    names[static_cast<std::size_t>(j)] =
        lexicon[static_cast<std::size_t>(picks[static_cast<std::size_t>(j % m)])];
  return names;
}

std::string pick(Rng& rng, const std::vector<std::string>& pool) {
  return pool[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
}

std::vector<std::string> caption_tokens(Rng& rng, const std::string& metric) {
  std::vector<std::string> toks;
  if (rng.uniform() < 0.5) toks.push_back(pick(rng, filler_words()));
  toks.push_back("results");
  toks.push_back("of");
  toks.push_back(pick(rng, task_words()));
  toks.push_back("on");
  toks.push_back("the");
  toks.push_back(pick(rng, dataset_words()));
  toks.push_back("data");
  if (!metric.empty()) {
    toks.push_back("measured");
    toks.push_back("in");
    toks.push_back(metric);
  }
  if (rng.uniform() < 0.5) {
    toks.push_back("with");
    toks.push_back(pick(rng, system_words()));
    toks.push_back("systems");
  }
  return toks;
}

}  // namespace

std::vector<TableInstance> generate_synthetic(std::uint64_t seed, int size,
                                              const SynthSpec& spec) {
  if (size <= 0) throw std::invalid_argument("synthetic size must be > 0");
  const Real total = spec.p_ch + spec.p_rh + spec.p_capt;
  if (total <= 0.0)
    throw std::invalid_argument("class proportions must sum to > 0");

  // Largest-remainder allocation over (ch, rh, capt).
  const Real props[3] = {spec.p_ch / total, spec.p_rh / total,
                         spec.p_capt / total};
  int counts[3];
  Real fracs[3];
  int assigned = 0;
  for (int c = 0; c < 3; ++c) {
    const Real exact = props[c] * size;
    counts[c] = static_cast<int>(exact);
    fracs[c] = exact - counts[c];
    assigned += counts[c];
  }
  while (assigned < size) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (fracs[c] > fracs[best]) best = c;
    ++counts[best];
    fracs[best] = -1.0;
    ++assigned;
  }

  std::vector<Location> classes;
  classes.insert(classes.end(), counts[0], Location::kColumnHeader);
  classes.insert(classes.end(), counts[1], Location::kRowHeader);
  classes.insert(classes.end(), counts[2], Location::kOutOfHeader);

  Rng rng(seed);
  rng.shuffle(classes);

  const std::vector<std::string>& capt_lexicon =
      spec.capt_metric_lexicon.empty() ? spec.metric_lexicon
                                       : spec.capt_metric_lexicon;

  std::vector<TableInstance> tables;
  tables.reserve(classes.size());
  for (std::size_t idx = 0; idx < classes.size(); ++idx) {
    TableInstance t;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%04zu", idx);
    t.id = buf;

    const int n_r = rng.uniform_int(spec.min_rows, spec.max_rows);
    const int n_c = rng.uniform_int(spec.min_cols, spec.max_cols);
    const int u = spec.single_level_headers
                      ? 1
                      : rng.uniform_int(1, std::max(1, spec.max_row_levels));
    const int v = spec.single_level_headers
                      ? 1
                      : rng.uniform_int(1, std::max(1, spec.max_col_levels));

    for (int k = 0; k < u; ++k)
      t.row_headers.push_back(filler_level(rng, n_r, system_words()));
    for (int l = 0; l < v; ++l)
      t.column_headers.push_back(filler_level(rng, n_c, task_words()));

    const Location cls = classes[idx];
    if (cls == Location::kRowHeader) {
      const int k = rng.uniform_int(1, u);
      t.row_headers[static_cast<std::size_t>(k - 1)] =
          metric_level(rng, n_r, spec.metric_lexicon);
      t.target.location = Location::kRowHeader;
      t.target.level = k;
      t.target.tokens = t.row_headers[static_cast<std::size_t>(k - 1)];
      t.caption = caption_tokens(rng, "");
    } else if (cls == Location::kColumnHeader) {
      const int l = rng.uniform_int(1, v);
      t.column_headers[static_cast<std::size_t>(l - 1)] =
          metric_level(rng, n_c, spec.metric_lexicon);
      t.target.location = Location::kColumnHeader;
      t.target.level = l;
      t.target.tokens = t.column_headers[static_cast<std::size_t>(l - 1)];
      t.caption = caption_tokens(rng, "");
    } else {
      const std::string metric = pick(rng, capt_lexicon);
      t.target.location = Location::kOutOfHeader;
      t.target.tokens.assign(static_cast<std::size_t>(n_c), metric);
      t.caption = caption_tokens(rng, metric);
    }

    t.cells.resize(static_cast<std::size_t>(n_r));
    for (int i = 0; i < n_r; ++i) {
      auto& row = t.cells[static_cast<std::size_t>(i)];
      row.resize(static_cast<std::size_t>(n_c));
      for (int j = 0; j < n_c; ++j) {
        char cell[16];
        std::snprintf(cell, sizeof(cell), "%.1f", rng.uniform(0.0, 100.0));
        row[static_cast<std::size_t>(j)] = cell;
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

WordVectors load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open word-vector file: " + path);
  WordVectors out;
  std::string line;
  int dim = -1;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<Real> values;
    Real x;
    while (ss >> x) values.push_back(x);
    if (values.empty())
      throw CorpusError(path + ": line " + std::to_string(line_no) +
                        " has no vector components");
    if (dim < 0) dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dim)
      throw CorpusError(path + ": line " + std::to_string(line_no) +
                        " has inconsistent dimension");
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = values[static_cast<std::size_t>(i)];
    out[token] = std::move(v);
  }
  return out;
}

}  // namespace tablemetric
