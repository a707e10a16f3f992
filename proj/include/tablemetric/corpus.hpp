#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tablemetric/table.hpp"
#include "tablemetric/types.hpp"
#include "tablemetric/vocab.hpp"

namespace tablemetric {

// Parse or schema failure while reading a corpus file. Carries the record
// index in the message when one is known.
struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lowercases ASCII letters and splits on whitespace. Punctuation stays
// inside tokens, so "f-1" and "pearson's" are single tokens.
std::vector<std::string> tokenize(const std::string& text);

// Lowercased, whitespace-trimmed copy; the normal form used for token
// comparison throughout evaluation and the copy mechanism.
std::string normalize_token(const std::string& token);

// A record that failed validation; kept aside instead of silently dropped.
struct RecordIssue {
  int index = 0;  // 0-based position in the file
  std::string id;
  std::vector<std::string> problems;
};

struct LoadResult {
  std::vector<TableInstance> tables;      // all pass validate()
  std::vector<RecordIssue> quarantined;
};

// Reads a UTF-8 JSON array of table records. Malformed JSON or schema errors
// throw CorpusError; records violating table invariants are quarantined.
// `split` is a label used only in error messages.
LoadResult load_corpus(const std::string& path, const std::string& split = "");

void save_corpus(const std::vector<TableInstance>& tables,
                 const std::string& path);

// General vocabulary over caption + header word tokens, and the metric
// vocabulary over whole gold metric-type names. Built from the given tables
// only (callers pass the training split). `canonical_order` sorts tokens
// before id assignment, making ids independent of table order.
std::pair<Vocabulary, Vocabulary> build_vocabularies(
    const std::vector<TableInstance>& tables, bool canonical_order = false);

struct CorpusStats {
  int table_count = 0;
  Real avg_rows = 0.0;
  Real avg_cols = 0.0;
  int max_row_level = 0;
  int max_col_level = 0;
  int header_vocab_size = 0;        // distinct header word tokens
  int all_metric_types = 0;         // per-table distinct gold names, summed
  int unique_metric_types = 0;      // distinct gold names corpus-wide
};

CorpusStats corpus_stats(const std::vector<TableInstance>& tables);

std::string stats_to_json(const CorpusStats& stats);

// Controls for the synthetic corpus generator used by tests and demos.
struct SynthSpec {
  Real p_ch = 0.6;
  Real p_rh = 0.2;
  Real p_capt = 0.2;
  std::vector<std::string> metric_lexicon = {
      "accuracy", "precision", "recall", "f1",
      "bleu",     "rouge",     "meteor", "perplexity"};
  // Lexicon for out-of-header tables; empty means metric_lexicon. Giving it
  // tokens unseen in training exercises the copy path on novel metrics.
  std::vector<std::string> capt_metric_lexicon;
  int min_rows = 2, max_rows = 5;
  int min_cols = 2, max_cols = 5;
  int max_row_levels = 2, max_col_levels = 2;
  bool single_level_headers = false;  // force u = v = 1
};

// Deterministic for a fixed (seed, size, spec): two calls produce
// byte-identical corpora. Class counts follow the proportions by largest
// remainder, so 60/20/20 over 50 tables yields exactly 30/10/10.
std::vector<TableInstance> generate_synthetic(std::uint64_t seed, int size,
                                              const SynthSpec& spec = {});

// Plain-text word vectors: one "token v1 v2 ... vD" line per token.
using WordVectors = std::unordered_map<std::string, Vec>;
WordVectors load_word_vectors(const std::string& path);

}  // namespace tablemetric
