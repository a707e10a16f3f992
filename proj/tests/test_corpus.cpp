#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "tablemetric/corpus.hpp"
#include "test_fixtures.hpp"

using namespace tablemetric;
using testing::make_caption_metric_table;
using testing::make_sample_table;

namespace {

std::filesystem::path tmp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "tablemetric_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
  const auto path = tmp_dir() / name;
  std::ofstream out(path);
  out << body;
  return path.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on whitespace only") {
  CHECK(tokenize("Model Comparison in Task 1 and 2") ==
        std::vector<std::string>{"model", "comparison", "in", "task", "1",
                                 "and", "2"});
  CHECK(tokenize("F-1 and ROUGE-1") ==
        std::vector<std::string>{"f-1", "and", "rouge-1"});
  CHECK(tokenize("Pearson's r") == std::vector<std::string>{"pearson's", "r"});
  CHECK(tokenize("  spaced\t  out\n") ==
        std::vector<std::string>{"spaced", "out"});
  CHECK(tokenize("") == std::vector<std::string>{});
}

TEST_CASE("normalize_token trims and lowercases") {
  CHECK(normalize_token("  Prec ") == "prec");
  CHECK(normalize_token("BLEU") == "bleu");
  CHECK(normalize_token("f-1") == "f-1");
  CHECK(normalize_token("   ") == "");
}

TEST_CASE("corpus survives a save/load round trip unchanged") {
  const auto tables = generate_synthetic(3, 12);
  const auto path = (tmp_dir() / "roundtrip.json").string();
  save_corpus(tables, path);
  const LoadResult back = load_corpus(path);
  CHECK(back.quarantined.empty());
  REQUIRE(back.tables.size() == tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i)
    CHECK(back.tables[i] == tables[i]);
}

TEST_CASE("loading rejects malformed files with context") {
  SUBCASE("not JSON") {
    const auto path = write_file("bad_syntax.json", "{not json");
    CHECK_THROWS_AS(load_corpus(path), CorpusError);
  }
  SUBCASE("not an array") {
    const auto path = write_file("bad_root.json", "{\"id\": \"x\"}");
    CHECK_THROWS_AS(load_corpus(path), CorpusError);
  }
  SUBCASE("missing field names the record") {
    const auto path = write_file("bad_record.json", R"([{"id": "t1"}])");
    try {
      load_corpus(path, "dev");
      FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("dev record 0") != std::string::npos);
      CHECK(msg.find("caption") != std::string::npos);
    }
  }
  SUBCASE("unknown location string") {
    const auto path = write_file("bad_location.json", R"([{
      "id": "t1", "caption": "x",
      "row_headers": [["a"]], "column_headers": [["b"]],
      "cells": [["1"]],
      "metric": {"location": "caption", "level": null, "tokens": ["x"]}
    }])");
    try {
      load_corpus(path);
      FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
      CHECK(std::string(e.what()).find("unknown metric location") !=
            std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_corpus((tmp_dir() / "nope.json").string()),
                    CorpusError);
  }
}

TEST_CASE("invariant violations are quarantined, not dropped silently") {
  auto good = make_sample_table();
  auto bad = make_caption_metric_table();
  bad.column_headers[0].pop_back();  // ragged after serialization
  const auto path = (tmp_dir() / "quarantine.json").string();
  save_corpus({good, bad}, path);

  const LoadResult result = load_corpus(path);
  REQUIRE(result.tables.size() == 1);
  CHECK(result.tables[0].id == good.id);
  REQUIRE(result.quarantined.size() == 1);
  CHECK(result.quarantined[0].index == 1);
  CHECK(result.quarantined[0].id == bad.id);
  CHECK(!result.quarantined[0].problems.empty());
}

TEST_CASE("numeric cells are accepted and stringified") {
  const auto path = write_file("numeric_cells.json", R"([{
    "id": "t1", "caption": "accuracy of things",
    "row_headers": [["a", "b"]], "column_headers": [["c", "d"]],
    "cells": [[1.5, 2], [3, "4.0"]],
    "metric": {"location": "none", "level": null,
               "tokens": ["accuracy", "accuracy"]}
  }])");
  const LoadResult result = load_corpus(path);
  REQUIRE(result.tables.size() == 1);
  CHECK(result.tables[0].cells[0][0] == "1.5");
  CHECK(result.tables[0].cells[0][1] == "2");
  CHECK(result.tables[0].cells[1][1] == "4.0");
}

TEST_CASE("vocabularies reserve padding and unknown ids") {
  const std::vector<TableInstance> tables = {make_caption_metric_table()};
  auto [general, metric] = build_vocabularies(tables);

  CHECK(general.token(Vocabulary::kPad) == "<pad>");
  CHECK(general.token(Vocabulary::kUnk) == "<unk>");
  CHECK(!general.is_metric_vocab());
  CHECK(metric.is_metric_vocab());

  // Encounter order: caption first, then row headers, then column headers.
  CHECK(general.lookup("bleu") == 2);
  CHECK(general.lookup("results") == 3);
  CHECK(general.contains("baseline"));
  CHECK(general.contains("de-en"));
  CHECK(general.lookup("zzz") == Vocabulary::kUnk);

  // One metric entry: the gold list repeats a single name.
  CHECK(metric.size() == 3);
  CHECK(metric.contains("bleu"));

  auto [sorted_general, sorted_metric] = build_vocabularies(tables, true);
  auto entries = sorted_general.entries();
  CHECK(std::is_sorted(entries.begin(), entries.end()));
  CHECK(sorted_general.size() == general.size());
  CHECK(sorted_metric.size() == metric.size());
}

TEST_CASE("multi-word header names contribute word tokens, whole metric "
          "names stay whole") {
  TableInstance t = make_sample_table();
  t.target.tokens = {"prec", "rec", "prec", "rec"};
  auto [general, metric] = build_vocabularies({t});
  CHECK(general.contains("model"));  // from "model a"
  CHECK(general.contains("a"));
  CHECK(!general.contains("model a"));
  CHECK(metric.contains("prec"));
  CHECK(metric.contains("rec"));
  CHECK(metric.size() == 4);

  TableInstance ooh = make_caption_metric_table();
  ooh.target.tokens = {"rouge l", "rouge l", "rouge l"};
  ooh.caption = {"rouge", "l", "scores"};
  auto [g2, m2] = build_vocabularies({ooh});
  CHECK(m2.contains("rouge l"));  // one entry, not two words
  CHECK(m2.size() == 3);
}

TEST_CASE("corpus statistics match a hand-computed corpus") {
  const std::vector<TableInstance> tables = {make_sample_table(),
                                             make_caption_metric_table()};
  const CorpusStats s = corpus_stats(tables);
  CHECK(s.table_count == 2);
  CHECK(s.avg_rows == doctest::Approx(3.0));  // (4 + 2) / 2
  CHECK(s.avg_cols == doctest::Approx(3.5));  // (4 + 3) / 2
  CHECK(s.max_row_level == 2);
  CHECK(s.max_col_level == 2);
  // Header word tokens: models, model, a, b, c, d, task, 1, 2, prec, rec,
  // baseline, proposed, de-en, fr-en, ru-en.
  CHECK(s.header_vocab_size == 16);
  // Distinct per table: {prec, rec} + {bleu}.
  CHECK(s.all_metric_types == 3);
  CHECK(s.unique_metric_types == 3);

  const auto parsed = nlohmann::json::parse(stats_to_json(s));
  CHECK(parsed["table_count"] == 2);
  CHECK(parsed["header_vocab_size"] == 16);
  CHECK(parsed["avg_cols"] == doctest::Approx(3.5));
}

TEST_CASE("synthetic generation is deterministic and honors proportions") {
  SynthSpec spec;
  const auto a = generate_synthetic(7, 50, spec);
  const auto b = generate_synthetic(7, 50, spec);
  REQUIRE(a.size() == 50);
  REQUIRE(b.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  int ch = 0, rh = 0, capt = 0;
  for (const auto& t : a) {
    CHECK(validate(t).empty());
    switch (t.target.location) {
      case Location::kColumnHeader: ++ch; break;
      case Location::kRowHeader: ++rh; break;
      case Location::kOutOfHeader: ++capt; break;
    }
  }
  CHECK(ch == 30);
  CHECK(rh == 10);
  CHECK(capt == 10);

  const auto c = generate_synthetic(8, 50, spec);
  CHECK(c != a);  // different seed, different corpus
}

TEST_CASE("synthetic gold tokens come from the configured lexicons") {
  SynthSpec spec;
  spec.metric_lexicon = {"accuracy", "bleu", "f1"};
  spec.capt_metric_lexicon = {"chrf", "ter"};
  const auto tables = generate_synthetic(11, 40, spec);
  const std::set<std::string> header_lex(spec.metric_lexicon.begin(),
                                         spec.metric_lexicon.end());
  const std::set<std::string> capt_lex(spec.capt_metric_lexicon.begin(),
                                       spec.capt_metric_lexicon.end());
  for (const auto& t : tables) {
    if (t.target.location == Location::kOutOfHeader) {
      for (const auto& tok : t.target.tokens) CHECK(capt_lex.count(tok) == 1);
      // The caption must carry the metric so a copying model can find it.
      bool in_caption = false;
      for (const auto& w : t.caption)
        if (w == t.target.tokens.front()) in_caption = true;
      CHECK(in_caption);
      CHECK(t.target.tokens.size() ==
            static_cast<std::size_t>(t.n_cols()));
    } else {
      for (const auto& tok : t.target.tokens)
        CHECK(header_lex.count(tok) == 1);
      // In-header captions must not leak the metric name.
      for (const auto& w : t.caption) CHECK(header_lex.count(w) == 0);
    }
  }
}

TEST_CASE("synthetic header depth follows the single-level switch") {
  SynthSpec spec;
  spec.single_level_headers = true;
  for (const auto& t : generate_synthetic(5, 20, spec)) {
    CHECK(t.level_count_rows() == 1);
    CHECK(t.level_count_cols() == 1);
  }

  SynthSpec deep;
  deep.max_row_levels = 3;
  deep.max_col_levels = 2;
  int deepest_row = 0;
  for (const auto& t : generate_synthetic(6, 60, deep)) {
    CHECK(t.level_count_rows() <= 3);
    CHECK(t.level_count_cols() <= 2);
    deepest_row = std::max(deepest_row, t.level_count_rows());
  }
  CHECK(deepest_row == 3);
}

TEST_CASE("synthetic ids are stable zero-padded sequence numbers") {
  const auto tables = generate_synthetic(4, 3);
  REQUIRE(tables.size() == 3);
  CHECK(tables[0].id == "synth-0000");
  CHECK(tables[1].id == "synth-0001");
  CHECK(tables[2].id == "synth-0002");
}

TEST_CASE("synthetic generation rejects bad arguments") {
  CHECK_THROWS_AS(generate_synthetic(1, 0), std::invalid_argument);
  SynthSpec spec;
  spec.p_ch = spec.p_rh = spec.p_capt = 0.0;
  CHECK_THROWS_AS(generate_synthetic(1, 10, spec), std::invalid_argument);
}

TEST_CASE("word vectors parse from whitespace-separated text") {
  const auto path = write_file("vectors.txt",
                               "alpha 1.0 2.0 3.0\n"
                               "beta -0.5 0.25 4\n"
                               "\n"
                               "gamma 0 0 1e-3\n");
  const WordVectors vecs = load_word_vectors(path);
  REQUIRE(vecs.size() == 3);
  REQUIRE(vecs.count("beta") == 1);
  CHECK(vecs.at("beta")[0] == doctest::Approx(-0.5));
  CHECK(vecs.at("gamma")[2] == doctest::Approx(1e-3));

  const auto bad = write_file("vectors_bad.txt", "a 1 2\nb 1 2 3\n");
  CHECK_THROWS_AS(load_word_vectors(bad), CorpusError);
}

TEST_CASE("saved corpora are byte-identical across runs") {
  const auto tables = generate_synthetic(12, 8);
  const auto p1 = (tmp_dir() / "stable1.json").string();
  const auto p2 = (tmp_dir() / "stable2.json").string();
  save_corpus(tables, p1);
  save_corpus(tables, p2);
  CHECK(slurp(p1) == slurp(p2));
}
