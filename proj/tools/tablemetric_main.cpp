// Command-line surface: corpus inspection, synthetic data, training,
// evaluation, prediction, and ablation runs. Exit codes: 0 success,
// 2 usage error, 3 data error, 4 training failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tablemetric/corpus.hpp"
#include "tablemetric/metrics.hpp"
#include "tablemetric/trainer.hpp"

using namespace tablemetric;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsageError = 2;
constexpr int kDataError = 3;
constexpr int kTrainingError = 4;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

LoadResult load_split(const std::string& path, const std::string& split) {
  LoadResult result = load_corpus(path, split);
  if (!result.quarantined.empty())
    std::cerr << "warning: " << split << ": quarantined "
              << result.quarantined.size() << " invalid record(s) out of "
              << result.quarantined.size() + result.tables.size()
              << "; run the validate subcommand for details\n";
  return result;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TrainConfig load_config(const std::string& path) {
  TrainConfig config = config_from_json(read_file(path));
  if (apply_env_seed(config))
    std::cerr << "note: TABLEMETRIC_SEED overrides the config seed with "
              << config.seed << "\n";
  return config;
}

json prediction_json(const TableInstance& table, const Prediction& pred) {
  json j;
  j["id"] = table.id;
  j["class"] = to_string(pred.cls);
  if (pred.level)
    j["level"] = *pred.level;
  else
    j["level"] = nullptr;
  j["tokens"] = pred.tokens;
  return j;
}

std::string default_confusion_path(const std::string& report_path) {
  fs::path p(report_path);
  p.replace_extension(".confusion.csv");
  return p.string();
}

int run_stats(const std::string& corpus_path) {
  const LoadResult loaded = load_split(corpus_path, "corpus");
  std::cout << stats_to_json(corpus_stats(loaded.tables)) << "\n";
  return kOk;
}

int run_validate(const std::string& corpus_path) {
  const LoadResult loaded = load_corpus(corpus_path, "corpus");
  json out;
  out["valid_tables"] = loaded.tables.size();
  out["quarantined"] = json::array();
  for (const RecordIssue& issue : loaded.quarantined) {
    json j;
    j["index"] = issue.index;
    j["id"] = issue.id;
    j["problems"] = issue.problems;
    out["quarantined"].push_back(j);
  }
  std::cout << out.dump(2) << "\n";
  return loaded.quarantined.empty() ? kOk : kDataError;
}

int run_synth(std::uint64_t seed, int size, const std::string& out_path,
              const SynthSpec& spec) {
  if (size < 1) throw CLI::ValidationError("--size must be >= 1");
  save_corpus(generate_synthetic(seed, size, spec), out_path);
  std::cout << "wrote " << size << " tables to " << out_path << "\n";
  return kOk;
}

int run_train(const std::string& config_path, const std::string& train_path,
              const std::string& val_path, const std::string& out_dir) {
  const TrainConfig config = load_config(config_path);
  validate_config(config);
  const LoadResult train = load_split(train_path, "train");
  const LoadResult val = load_split(val_path, "val");
  const TrainResult result =
      train_model(config, train.tables, val.tables, out_dir);
  json j;
  j["checkpoint_dir"] = result.checkpoint_dir;
  j["best_epoch"] = result.best_epoch;
  j["best_metric"] = result.best_metric;
  j["epochs_run"] = result.epochs_run;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_evaluate(const std::string& checkpoint_dir,
                 const std::string& test_path, const std::string& report_path,
                 std::string confusion_path) {
  const ModelBundle bundle = load_checkpoint(checkpoint_dir);
  const LoadResult test = load_split(test_path, "test");
  const EvalReport report = evaluate_bundle(bundle, test.tables);
  const std::string report_json = report_to_json(report);
  if (!report_path.empty()) {
    write_file(report_path, report_json);
    if (confusion_path.empty())
      confusion_path = default_confusion_path(report_path);
    write_file(confusion_path, confusion_to_csv(report));
  }
  std::cout << report_json << "\n";
  return kOk;
}

int run_predict(const std::string& checkpoint_dir, const std::string& in_path,
                const std::string& out_path) {
  const ModelBundle bundle = load_checkpoint(checkpoint_dir);
  const LoadResult in = load_split(in_path, "input");
  json out = json::array();
  for (const TableInstance& table : in.tables)
    out.push_back(prediction_json(table, bundle.predict(table)));
  const std::string text = out.dump(2);
  if (!out_path.empty())
    write_file(out_path, text);
  else
    std::cout << text << "\n";
  return kOk;
}

int run_ablate(const std::string& config_path, const std::string& train_path,
               const std::string& val_path, const std::string& test_path,
               const std::string& out_dir, const std::string& report_path,
               bool no_copy, bool no_generation, bool no_segment_embeddings) {
  TrainConfig config = load_config(config_path);
  config.no_copy = config.no_copy || no_copy;
  config.no_generation = config.no_generation || no_generation;
  config.no_segment_embeddings =
      config.no_segment_embeddings || no_segment_embeddings;
  const LoadResult train = load_split(train_path, "train");
  const LoadResult val = load_split(val_path, "val");
  const LoadResult test = load_split(test_path, "test");
  const EvalReport report =
      ablate(config, train.tables, val.tables, test.tables, out_dir);
  const std::string report_json = report_to_json(report);
  if (!report_path.empty()) write_file(report_path, report_json);
  std::cout << report_json << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Metric-type identification from multi-level header tables: data "
      "tools, training, and evaluation"};
  app.require_subcommand(1);

  std::string corpus_path;
  auto* stats = app.add_subcommand("stats", "Corpus statistics as JSON");
  stats->add_option("corpus", corpus_path, "Corpus JSON file")->required();

  std::string validate_path;
  auto* validate_cmd =
      app.add_subcommand("validate", "Report invalid records in a corpus");
  validate_cmd->add_option("corpus", validate_path, "Corpus JSON file")
      ->required();

  std::uint64_t synth_seed = 7;
  int synth_size = 50;
  std::string synth_out;
  SynthSpec synth_spec;
  std::vector<std::string> capt_lexicon;
  auto* synth =
      app.add_subcommand("synth", "Generate a deterministic synthetic corpus");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--size", synth_size, "Number of tables")->required();
  synth->add_option("--out", synth_out, "Output corpus path")->required();
  synth->add_option("--p-ch", synth_spec.p_ch, "Column-header share");
  synth->add_option("--p-rh", synth_spec.p_rh, "Row-header share");
  synth->add_option("--p-capt", synth_spec.p_capt, "Out-of-header share");
  synth->add_flag("--single-level", synth_spec.single_level_headers,
                  "Force one header level per axis");
  synth->add_option("--capt-lexicon", capt_lexicon,
                    "Metric names for out-of-header tables");

  std::string train_config, train_train, train_val, train_out;
  auto* train = app.add_subcommand("train", "Train a model from a config");
  train->add_option("--config", train_config, "TrainConfig JSON file")
      ->required();
  train->add_option("--train", train_train, "Training corpus")->required();
  train->add_option("--val", train_val, "Validation corpus")->required();
  train->add_option("--out", train_out, "Checkpoint directory")->required();

  std::string eval_ckpt, eval_test, eval_report, eval_confusion;
  auto* evaluate =
      app.add_subcommand("evaluate", "Score a checkpoint on a test corpus");
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")
      ->required();
  evaluate->add_option("--test", eval_test, "Test corpus")->required();
  evaluate->add_option("--report", eval_report, "Report JSON output path");
  evaluate->add_option("--confusion", eval_confusion,
                       "Confusion CSV output path");

  std::string pred_ckpt, pred_in, pred_out;
  auto* predict =
      app.add_subcommand("predict", "Predict metric types for a corpus");
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint directory")
      ->required();
  predict->add_option("--in", pred_in, "Input corpus")->required();
  predict->add_option("--out", pred_out, "Predictions JSON output path");

  std::string ab_config, ab_train, ab_val, ab_test, ab_out, ab_report;
  bool ab_no_copy = false, ab_no_gen = false, ab_no_segemb = false;
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "Train an ablation variant and score it on a test corpus");
  ablate_cmd->add_option("--config", ab_config, "TrainConfig JSON file")
      ->required();
  ablate_cmd->add_option("--train", ab_train, "Training corpus")->required();
  ablate_cmd->add_option("--val", ab_val, "Validation corpus")->required();
  ablate_cmd->add_option("--test", ab_test, "Test corpus")->required();
  ablate_cmd->add_option("--out", ab_out, "Checkpoint directory")->required();
  ablate_cmd->add_option("--report", ab_report, "Report JSON output path");
  ablate_cmd->add_flag("--no-copy", ab_no_copy, "Disable the copy gate");
  ablate_cmd->add_flag("--no-generation", ab_no_gen,
                       "Disable the whole caption branch");
  ablate_cmd->add_flag("--no-segment-embeddings", ab_no_segemb,
                       "Drop segment embeddings from the encoder");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*stats) return run_stats(corpus_path);
    if (*validate_cmd) return run_validate(validate_path);
    if (*synth) {
      if (!capt_lexicon.empty()) synth_spec.capt_metric_lexicon = capt_lexicon;
      return run_synth(synth_seed, synth_size, synth_out, synth_spec);
    }
    if (*train)
      return run_train(train_config, train_train, train_val, train_out);
    if (*evaluate)
      return run_evaluate(eval_ckpt, eval_test, eval_report, eval_confusion);
    if (*predict) return run_predict(pred_ckpt, pred_in, pred_out);
    if (*ablate_cmd)
      return run_ablate(ab_config, ab_train, ab_val, ab_test, ab_out,
                        ab_report, ab_no_copy, ab_no_gen, ab_no_segemb);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTrainingError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTrainingError;
  }
  return kUsageError;
}
