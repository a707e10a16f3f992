#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tablemetric/metrics.hpp"
#include "tablemetric/pointer_generator.hpp"
#include "tablemetric/segment_encoder.hpp"
#include "tablemetric/svm.hpp"
#include "tablemetric/table.hpp"
#include "tablemetric/types.hpp"

namespace tablemetric {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a training run needs, mirrored one-to-one by the JSON config
// file. learning_rate -1 picks the model's default peak (3e-3 for the
// pointer-generator, 3e-5 for the segment encoder).
struct TrainConfig {
  std::string model = "pg";  // pg | segenc | svm
  int batch_size = 10;
  Real learning_rate = -1.0;
  int max_epochs = 20;
  int patience = 10;
  Real alpha = 0.5;
  std::uint64_t seed = 13;
  std::string embedding_path;  // pretrained word vectors (pg only)
  std::string early_metric = "acc_m_token_sm";
  // Stop as soon as the validation early_metric reaches this value.
  std::optional<Real> stop_at_metric;

  // Ablations.
  bool no_copy = false;
  bool no_generation = false;
  bool no_segment_embeddings = false;
  bool copy_bce_all = false;

  // Pointer-generator dimensions.
  int embedding_dim = 100;
  int hidden_size = 256;
  int pg_layers = 2;
  Real dropout = 0.1;

  // Segment-encoder backend dimensions.
  int tf_width = 128;
  int tf_layers = 2;
  int tf_heads = 4;
  int tf_max_len = 512;

  // Baseline hyperparameters.
  Real svm_c = 1.0;
};

// Throws std::invalid_argument when a field is out of its documented range
// or an ablation flag does not apply to the chosen model.
void validate_config(const TrainConfig& config);

Real default_peak_lr(const std::string& model);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

// FNV-1a over the canonical config JSON; stamped into checkpoint manifests
// so a mismatched reload is detectable.
std::uint64_t config_hash(const TrainConfig& config);

// If TABLEMETRIC_SEED is set and parses as an unsigned integer, it replaces
// config.seed. Returns whether an override happened; throws
// std::invalid_argument when the variable is set but unparsable.
bool apply_env_seed(TrainConfig& config);

// Linear warmup over the first tenth of the run (at least one step) to the
// peak, then linear decay to exactly zero at the final step. Steps are
// 1-based; total must be >= 1.
Real slanted_triangular_lr(int step, int total_steps, Real peak);

struct AdamConfig {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

// One Adam update from the gradients currently accumulated in the
// parameters; `step` is the 1-based global update count shared by the bias
// corrections.
void adam_step(const std::vector<Parameter*>& params, Real lr, int step,
               const AdamConfig& adam = {});

// A trained (or reloaded) model of any of the three kinds, with the
// vocabularies it was fitted against. Exactly one of the model slots is
// non-null.
struct ModelBundle {
  TrainConfig config;
  Vocabulary general_vocab{false};
  Vocabulary metric_vocab{true};
  std::unique_ptr<PointerGeneratorModel> pg;
  std::unique_ptr<SegmentEncoderModel> segenc;
  std::unique_ptr<SvmBaseline> svm;

  Prediction predict(const TableInstance& table) const;
  // Whether the model can name a caption-copied metric; evaluation folds
  // CCapt into Gen for models that cannot.
  bool can_copy() const;
  std::vector<Parameter*> parameters() const;
};

// Builds an untrained bundle: vocabularies from the train split, model
// seeded from config.seed, optional pretrained word-vector initialization.
ModelBundle build_model(const TrainConfig& config,
                        const std::vector<TableInstance>& train);

struct EpochRecord {
  int epoch = 0;       // 1-based
  Real lr_last = 0.0;  // learning rate of the epoch's final update
  Real train_loss = 0.0;
  EvalReport val;
  bool improved = false;
};

struct TrainResult {
  std::string checkpoint_dir;
  int best_epoch = 0;
  Real best_metric = 0.0;
  int epochs_run = 0;
  std::vector<EpochRecord> log;
};

// Full training run: batches sorted by header-level count with a seeded
// epoch shuffle of the batch order, Adam under the slanted triangular
// schedule, early stopping on the validation early_metric (patience 0 stops
// at the first non-improving epoch), best-epoch weights restored and saved.
// Writes config.json, manifest.json, vocabularies, weights, and
// train_log.jsonl into out_dir. Throws TrainingError on an empty split or a
// non-finite loss.
TrainResult train_model(const TrainConfig& config,
                        const std::vector<TableInstance>& train,
                        const std::vector<TableInstance>& val,
                        const std::string& out_dir);

ModelBundle load_checkpoint(const std::string& dir);

// Predicts every table and scores the result; collapse of the caption
// class in the confusion matrix follows the bundle's copy capability.
EvalReport evaluate_bundle(const ModelBundle& bundle,
                           const std::vector<TableInstance>& test,
                           HLevelConvention convention =
                               HLevelConvention::kOohLocationMatch);

// Trains the configured ablation variant and evaluates it; throws
// std::invalid_argument when the flag set does not apply to the model.
EvalReport ablate(const TrainConfig& config,
                  const std::vector<TableInstance>& train,
                  const std::vector<TableInstance>& val,
                  const std::vector<TableInstance>& test,
                  const std::string& out_dir);

Real metric_by_name(const EvalReport& report, const std::string& name);

}  // namespace tablemetric
