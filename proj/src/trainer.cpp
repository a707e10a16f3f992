#include "tablemetric/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tablemetric/corpus.hpp"

namespace fs = std::filesystem;

namespace tablemetric {

using nlohmann::json;

void validate_config(const TrainConfig& c) {
  if (c.model != "pg" && c.model != "segenc" && c.model != "svm")
    throw std::invalid_argument("config: unknown model kind " + c.model);
  if (c.batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (c.max_epochs < 1)
    throw std::invalid_argument("config: max_epochs must be >= 1");
  if (c.patience < 0 || c.patience > c.max_epochs)
    throw std::invalid_argument(
        "config: patience must lie in [0, max_epochs]");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0))
    throw std::invalid_argument("config: alpha must lie in [0, 1]");
  if (c.learning_rate <= 0.0 && c.learning_rate != -1.0)
    throw std::invalid_argument(
        "config: learning_rate must be positive (or -1 for the default)");
  if (c.stop_at_metric && !(*c.stop_at_metric >= 0.0 &&
                            *c.stop_at_metric <= 1.0))
    throw std::invalid_argument("config: stop_at_metric must lie in [0, 1]");

  if ((c.no_copy || c.no_generation || c.copy_bce_all) && c.model != "pg")
    throw std::invalid_argument(
        "config: copy/generation flags apply only to the pg model");
  if (c.no_copy && c.no_generation)
    throw std::invalid_argument(
        "config: no_generation already disables the copy path; pick one");
  if (c.no_segment_embeddings && c.model != "segenc")
    throw std::invalid_argument(
        "config: no_segment_embeddings applies only to the segenc model");

  if (c.model == "pg" &&
      (c.embedding_dim < 1 || c.hidden_size < 1 || c.pg_layers < 1))
    throw std::invalid_argument("config: pg dimensions must be >= 1");
  if (c.model == "segenc") {
    if (c.tf_width < 1 || c.tf_layers < 1 || c.tf_heads < 1 ||
        c.tf_max_len < 4)
      throw std::invalid_argument("config: segenc dimensions out of range");
    if (c.tf_width % c.tf_heads != 0)
      throw std::invalid_argument(
          "config: tf_width must be divisible by tf_heads");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw std::invalid_argument("config: dropout must lie in [0, 1)");
  if (c.model == "svm" && c.svm_c <= 0.0)
    throw std::invalid_argument("config: svm_c must be positive");
  (void)metric_by_name(EvalReport{}, c.early_metric);  // name must resolve
}

Real default_peak_lr(const std::string& model) {
  if (model == "pg") return 3e-3;
  if (model == "segenc") return 3e-5;
  return 0.0;
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["model"] = c.model;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["embedding_path"] = c.embedding_path;
  j["early_metric"] = c.early_metric;
  if (c.stop_at_metric)
    j["stop_at_metric"] = *c.stop_at_metric;
  else
    j["stop_at_metric"] = nullptr;
  j["no_copy"] = c.no_copy;
  j["no_generation"] = c.no_generation;
  j["no_segment_embeddings"] = c.no_segment_embeddings;
  j["copy_bce_all"] = c.copy_bce_all;
  j["embedding_dim"] = c.embedding_dim;
  j["hidden_size"] = c.hidden_size;
  j["pg_layers"] = c.pg_layers;
  j["dropout"] = c.dropout;
  j["tf_width"] = c.tf_width;
  j["tf_layers"] = c.tf_layers;
  j["tf_heads"] = c.tf_heads;
  j["tf_max_len"] = c.tf_max_len;
  j["svm_c"] = c.svm_c;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad JSON: ") + e.what());
  }
  TrainConfig c;
  try {
    c.model = j.value("model", c.model);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.alpha = j.value("alpha", c.alpha);
    c.seed = j.value("seed", c.seed);
    c.embedding_path = j.value("embedding_path", c.embedding_path);
    c.early_metric = j.value("early_metric", c.early_metric);
    if (j.contains("stop_at_metric") && !j["stop_at_metric"].is_null())
      c.stop_at_metric = j["stop_at_metric"].get<Real>();
    c.no_copy = j.value("no_copy", c.no_copy);
    c.no_generation = j.value("no_generation", c.no_generation);
    c.no_segment_embeddings =
        j.value("no_segment_embeddings", c.no_segment_embeddings);
    c.copy_bce_all = j.value("copy_bce_all", c.copy_bce_all);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.pg_layers = j.value("pg_layers", c.pg_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.tf_width = j.value("tf_width", c.tf_width);
    c.tf_layers = j.value("tf_layers", c.tf_layers);
    c.tf_heads = j.value("tf_heads", c.tf_heads);
    c.tf_max_len = j.value("tf_max_len", c.tf_max_len);
    c.svm_c = j.value("svm_c", c.svm_c);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad field: ") +
                                e.what());
  }
  return c;
}

std::uint64_t config_hash(const TrainConfig& config) {
  const std::string text = config_to_json(config);
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

bool apply_env_seed(TrainConfig& config) {
  const char* raw = std::getenv("TABLEMETRIC_SEED");
  if (raw == nullptr || *raw == '\0') return false;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0')
    throw std::invalid_argument(
        std::string("TABLEMETRIC_SEED is not an unsigned integer: ") + raw);
  config.seed = static_cast<std::uint64_t>(value);
  return true;
}

Real slanted_triangular_lr(int step, int total_steps, Real peak) {
  if (total_steps < 1)
    throw std::invalid_argument("lr schedule: total_steps must be >= 1");
  if (step < 1 || step > total_steps)
    throw std::invalid_argument("lr schedule: step outside [1, total]");
  const int warmup = std::max(
      1, static_cast<int>(std::ceil(0.1 * static_cast<Real>(total_steps))));
  if (step <= warmup)
    return peak * static_cast<Real>(step) / static_cast<Real>(warmup);
  return peak * static_cast<Real>(total_steps - step) /
         static_cast<Real>(total_steps - warmup);
}

void adam_step(const std::vector<Parameter*>& params, Real lr, int step,
               const AdamConfig& adam) {
  const Real bc1 = 1.0 - std::pow(adam.beta1, step);
  const Real bc2 = 1.0 - std::pow(adam.beta2, step);
  for (Parameter* p : params) {
    p->adam_m = adam.beta1 * p->adam_m + (1.0 - adam.beta1) * p->grad;
    p->adam_v = adam.beta2 * p->adam_v +
                (1.0 - adam.beta2) * p->grad.cwiseProduct(p->grad);
    const Mat m_hat = p->adam_m / bc1;
    const Mat v_hat = p->adam_v / bc2;
    p->value.array() -=
        lr * m_hat.array() / (v_hat.array().sqrt() + adam.eps);
  }
}

Real metric_by_name(const EvalReport& report, const std::string& name) {
  if (name == "acc_hloc") return report.acc_hloc;
  if (name == "acc_hlevel") return report.acc_hlevel;
  if (name == "acc_m_sm") return report.acc_m_sm;
  if (name == "acc_m_token_sm") return report.acc_m_token_sm;
  if (name == "acc_m_token_ocm") return report.acc_m_token_ocm;
  throw std::invalid_argument("unknown metric name " + name);
}

Prediction ModelBundle::predict(const TableInstance& table) const {
  if (pg) return pg->predict(table);
  if (segenc) return segenc->predict(table);
  if (svm) return svm->predict(table);
  throw std::logic_error("ModelBundle: no model attached");
}

bool ModelBundle::can_copy() const {
  return pg != nullptr && !config.no_copy && !config.no_generation;
}

std::vector<Parameter*> ModelBundle::parameters() const {
  if (pg) return pg->parameters();
  if (segenc) return segenc->parameters();
  return {};
}

namespace {

ModelBundle make_bundle(const TrainConfig& cfg, const Vocabulary& general,
                        const Vocabulary& metric) {
  ModelBundle b;
  b.config = cfg;
  b.general_vocab = general;
  b.metric_vocab = metric;
  Rng rng(cfg.seed);
  if (cfg.model == "pg") {
    PGConfig pc;
    pc.embedding_dim = cfg.embedding_dim;
    pc.hidden_size = cfg.hidden_size;
    pc.layers = cfg.pg_layers;
    pc.dropout = cfg.dropout;
    pc.no_copy = cfg.no_copy;
    pc.no_generation = cfg.no_generation;
    pc.copy_bce_all = cfg.copy_bce_all;
    b.pg = std::make_unique<PointerGeneratorModel>(pc, general, metric, rng);
  } else if (cfg.model == "segenc") {
    TransformerConfig tc;
    tc.vocab_size = general.size();
    tc.width = cfg.tf_width;
    tc.layers = cfg.tf_layers;
    tc.heads = cfg.tf_heads;
    tc.max_len = cfg.tf_max_len;
    tc.dropout = cfg.dropout;
    tc.segment_embeddings = !cfg.no_segment_embeddings;
    auto backend = std::make_unique<TransformerEncoder>(tc, rng);
    b.segenc = std::make_unique<SegmentEncoderModel>(std::move(backend),
                                                     general, metric, rng);
  } else {
    SvmConfig sc;
    sc.c = cfg.svm_c;
    b.svm = std::make_unique<SvmBaseline>(sc);
  }
  return b;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out)
    throw TrainingError("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainingError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json vocab_json(const Vocabulary& v) {
  return json{{"is_metric", v.is_metric_vocab()}, {"entries", v.entries()}};
}

Vocabulary vocab_from_json(const json& j) {
  return Vocabulary::from_entries(
      j.at("entries").get<std::vector<std::string>>(),
      j.at("is_metric").get<bool>());
}

constexpr char kWeightsMagic[4] = {'T', 'M', 'C', 'K'};

void save_params_bin(const fs::path& path,
                     const std::vector<Parameter*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainingError("cannot write " + path.string());
  out.write(kWeightsMagic, 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t count = params.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const Parameter* p : params) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&name_len), sizeof name_len);
    out.write(p->name.data(), name_len);
    const std::uint64_t rows = static_cast<std::uint64_t>(p->value.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(p->value.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(rows * cols * sizeof(Real)));
  }
}

void load_params_bin(const fs::path& path,
                     const std::vector<Parameter*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainingError("cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw TrainingError("weights file has a bad magic header");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != 1) throw TrainingError("unsupported weights version");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (count != params.size())
    throw TrainingError("weights file parameter count mismatch");
  for (Parameter* p : params) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != p->name)
      throw TrainingError("weights file names " + name + ", expected " +
                          p->name);
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (rows != static_cast<std::uint64_t>(p->value.rows()) ||
        cols != static_cast<std::uint64_t>(p->value.cols()))
      throw TrainingError("weights shape mismatch for " + p->name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(rows * cols * sizeof(Real)));
    if (!in) throw TrainingError("weights file truncated at " + p->name);
  }
}

json report_json_value(const EvalReport& r) {
  return json::parse(report_to_json(r));
}

void write_checkpoint(const fs::path& dir, const ModelBundle& bundle,
                      const TrainResult& result, const EvalReport& best_val) {
  write_text(dir / "config.json", config_to_json(bundle.config));
  write_text(dir / "general_vocab.json",
             vocab_json(bundle.general_vocab).dump(2));
  write_text(dir / "metric_vocab.json",
             vocab_json(bundle.metric_vocab).dump(2));
  if (bundle.svm) {
    bundle.svm->save((dir / "svm.json").string());
  } else {
    save_params_bin(dir / "params.bin", bundle.parameters());
  }

  json manifest;
  manifest["model"] = bundle.config.model;
  manifest["config_hash"] = config_hash(bundle.config);
  manifest["best_epoch"] = result.best_epoch;
  manifest["epochs_run"] = result.epochs_run;
  manifest["metrics"] = report_json_value(best_val);
  write_text(dir / "manifest.json", manifest.dump(2));

  std::ostringstream log;
  for (const EpochRecord& rec : result.log) {
    json line;
    line["epoch"] = rec.epoch;
    line["lr_last"] = rec.lr_last;
    line["train_loss"] = rec.train_loss;
    line["improved"] = rec.improved;
    line["val"] = report_json_value(rec.val);
    log << line.dump() << '\n';
  }
  write_text(dir / "train_log.jsonl", log.str());
}

}  // namespace

ModelBundle build_model(const TrainConfig& config,
                        const std::vector<TableInstance>& train) {
  validate_config(config);
  if (train.empty()) throw TrainingError("training split is empty");
  auto vocabs = build_vocabularies(train, /*canonical_order=*/true);
  ModelBundle b = make_bundle(config, vocabs.first, vocabs.second);
  if (!config.embedding_path.empty() && b.pg) {
    const WordVectors vectors = load_word_vectors(config.embedding_path);
    b.pg->embeddings().init_pretrained(b.general_vocab, vectors);
  }
  return b;
}

EvalReport evaluate_bundle(const ModelBundle& bundle,
                           const std::vector<TableInstance>& test,
                           HLevelConvention convention) {
  std::vector<Prediction> preds;
  preds.reserve(test.size());
  for (const auto& t : test) preds.push_back(bundle.predict(t));
  EvalOptions options;
  options.hlevel = convention;
  options.collapse_caption_class = !bundle.can_copy();
  return evaluate_predictions(preds, test, options);
}

TrainResult train_model(const TrainConfig& config,
                        const std::vector<TableInstance>& train,
                        const std::vector<TableInstance>& val,
                        const std::string& out_dir) {
  validate_config(config);
  if (train.empty()) throw TrainingError("training split is empty");
  if (val.empty()) throw TrainingError("validation split is empty");
  fs::create_directories(out_dir);

  ModelBundle bundle = build_model(config, train);
  TrainResult result;
  result.checkpoint_dir = out_dir;

  if (config.model == "svm") {
    bundle.svm->fit(train);
    EvalReport val_report = evaluate_bundle(bundle, val);
    EpochRecord rec;
    rec.epoch = 1;
    rec.val = val_report;
    rec.improved = true;
    result.best_epoch = 1;
    result.epochs_run = 1;
    result.best_metric = metric_by_name(val_report, config.early_metric);
    result.log.push_back(rec);
    write_checkpoint(out_dir, bundle, result, val_report);
    return result;
  }

  // Batch layout: fixed grouping by header-level count (then id, so ties
  // are stable), with the batch order reshuffled every epoch.
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ta = train[static_cast<std::size_t>(a)];
    const auto& tb = train[static_cast<std::size_t>(b)];
    const int la = ta.level_count_rows() + ta.level_count_cols();
    const int lb = tb.level_count_rows() + tb.level_count_cols();
    if (la != lb) return la < lb;
    return ta.id < tb.id;
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < order.size(); i += config.batch_size)
    batches.emplace_back(
        order.begin() + static_cast<std::ptrdiff_t>(i),
        order.begin() +
            static_cast<std::ptrdiff_t>(
                std::min(i + config.batch_size, order.size())));

  const int total_steps = config.max_epochs * static_cast<int>(batches.size());
  const Real peak = config.learning_rate > 0.0
                        ? config.learning_rate
                        : default_peak_lr(config.model);

  Rng shuffle_rng(config.seed + 1);
  Rng dropout_rng(config.seed + 2);
  auto params = bundle.parameters();

  std::vector<Mat> best_values;
  Real best = -std::numeric_limits<Real>::infinity();
  int stale = 0;
  int step = 0;
  Real lr_last = 0.0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(batches);
    Real loss_sum = 0.0;
    int loss_count = 0;
    for (const auto& batch : batches) {
      ++step;
      const Real lr = slanted_triangular_lr(step, total_steps, peak);
      lr_last = lr;
      for (Parameter* p : params) p->zero_grad();
      for (const int idx : batch) {
        const TableInstance& t = train[static_cast<std::size_t>(idx)];
        Real value = 0.0;
        if (bundle.pg) {
          PGForward f = bundle.pg->forward(t, dropout_rng, true);
          Var l = bundle.pg->loss(f, t, config.alpha);
          value = l.value()(0, 0);
          f.g.backward(f.g.scale(l, 1.0 / static_cast<Real>(batch.size())));
        } else {
          SegForward f = bundle.segenc->forward(t, dropout_rng, true);
          Var l = bundle.segenc->loss(f, t, config.alpha);
          value = l.value()(0, 0);
          f.g.backward(f.g.scale(l, 1.0 / static_cast<Real>(batch.size())));
        }
        if (!std::isfinite(value))
          throw TrainingError("loss became non-finite at epoch " +
                              std::to_string(epoch) + ", table " + t.id);
        loss_sum += value;
        ++loss_count;
      }
      adam_step(params, lr, step);
    }

    EvalReport val_report = evaluate_bundle(bundle, val);
    const Real metric = metric_by_name(val_report, config.early_metric);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_last = lr_last;
    rec.train_loss = loss_sum / static_cast<Real>(std::max(1, loss_count));
    rec.val = val_report;
    rec.improved = metric > best;
    result.log.push_back(rec);
    result.epochs_run = epoch;

    if (rec.improved) {
      best = metric;
      result.best_epoch = epoch;
      result.best_metric = metric;
      best_values.clear();
      for (const Parameter* p : params) best_values.push_back(p->value);
      stale = 0;
    } else {
      ++stale;
    }

    if (config.stop_at_metric && metric >= *config.stop_at_metric) break;
    if (stale >= std::max(config.patience, 1)) break;
  }

  // Hand back the best-validation weights, not the last ones.
  if (!best_values.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i]->value = best_values[i];

  const EvalReport best_val =
      result.log[static_cast<std::size_t>(result.best_epoch - 1)].val;
  write_checkpoint(out_dir, bundle, result, best_val);
  return result;
}

ModelBundle load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  const std::string config_text = read_text(root / "config.json");
  TrainConfig cfg = config_from_json(config_text);
  validate_config(cfg);

  json manifest;
  try {
    manifest = json::parse(read_text(root / "manifest.json"));
  } catch (const json::exception& e) {
    throw TrainingError(std::string("manifest.json is not valid JSON: ") +
                        e.what());
  }
  if (manifest.at("config_hash").get<std::uint64_t>() != config_hash(cfg))
    throw TrainingError("checkpoint config hash mismatch");

  Vocabulary general = vocab_from_json(
      json::parse(read_text(root / "general_vocab.json")));
  Vocabulary metric =
      vocab_from_json(json::parse(read_text(root / "metric_vocab.json")));

  ModelBundle bundle = make_bundle(cfg, general, metric);
  if (bundle.svm) {
    *bundle.svm = SvmBaseline::load((root / "svm.json").string());
  } else {
    load_params_bin(root / "params.bin", bundle.parameters());
  }
  return bundle;
}

EvalReport ablate(const TrainConfig& config,
                  const std::vector<TableInstance>& train,
                  const std::vector<TableInstance>& val,
                  const std::vector<TableInstance>& test,
                  const std::string& out_dir) {
  if (!config.no_copy && !config.no_generation &&
      !config.no_segment_embeddings)
    throw std::invalid_argument("ablate: no ablation flag set");
  validate_config(config);
  train_model(config, train, val, out_dir);
  ModelBundle bundle = load_checkpoint(out_dir);
  return evaluate_bundle(bundle, test);
}

}  // namespace tablemetric
