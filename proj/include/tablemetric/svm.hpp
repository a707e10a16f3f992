#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tablemetric/metrics.hpp"
#include "tablemetric/table.hpp"
#include "tablemetric/types.hpp"

namespace tablemetric {

// Bag-of-words tf.idf: tf is the raw in-document count, idf is
// ln((1 + N) / (1 + df)) + 1 over the fit corpus, and the weighted vector is
// L2-normalized (an empty or all-unknown document stays the zero vector).
// Tokens outside the fit corpus are dropped.
class TfidfFeaturizer {
 public:
  void fit(const std::vector<std::vector<std::string>>& documents);

  // Throws std::logic_error before fit().
  Vec transform(const std::vector<std::string>& tokens) const;

  bool fitted() const { return fitted_; }
  int dim() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Vec& idf() const { return idf_; }

  // Round-trippable state: column tokens in order plus their idf values.
  static TfidfFeaturizer from_state(const std::vector<std::string>& tokens,
                                    const Vec& idf);

 private:
  bool fitted_ = false;
  std::vector<std::string> tokens_;              // column -> token
  std::unordered_map<std::string, int> column_;  // token -> column
  Vec idf_;
};

struct SvmConfig {
  Real c = 1.0;                  // hinge slack penalty
  std::string kernel = "linear"; // only the linear kernel is implemented
  int max_epochs = 1000;
  Real tol = 1e-4;
};

// One-vs-rest L2-regularized hinge-loss classifier trained by dual
// coordinate descent with a fixed sweep order, so refits are bit-identical.
// A constant bias feature is appended internally.
class LinearSvm {
 public:
  explicit LinearSvm(const SvmConfig& config = {}) : cfg_(config) {}

  // Labels are sorted into canonical order; one binary machine per label.
  // Throws std::invalid_argument on empty input or a non-linear kernel.
  void fit(const std::vector<Vec>& features,
           const std::vector<std::string>& labels);

  // Argmax of the per-class decision values; ties break toward the earlier
  // label in sorted order. A single-class fit always returns that class.
  const std::string& predict(const Vec& x) const;

  Vec decision(const Vec& x) const;  // one value per label, sorted order
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Vec>& weights() const { return weights_; }
  bool fitted() const { return !labels_.empty(); }
  const SvmConfig& config() const { return cfg_; }

  static LinearSvm from_state(const SvmConfig& config,
                              const std::vector<std::string>& labels,
                              const std::vector<Vec>& weights);

 private:
  SvmConfig cfg_;
  std::vector<std::string> labels_;
  std::vector<Vec> weights_;  // per label, length dim + 1 (bias last)
};

// The two-classifier baseline: a location machine over the tf.idf of every
// header name token (labels: "none" or axis:level like "ch:2", so level
// accuracy is measurable), and a token machine over the tf.idf of the
// caption (labels: the first gold metric name). Predictions fill the same
// shape the neural models emit; the baseline cannot copy from captions, so
// its out-of-header predictions are always Gen.
class SvmBaseline {
 public:
  explicit SvmBaseline(const SvmConfig& config = {})
      : cfg_(config), location_(config), token_(config) {}

  // Throws std::invalid_argument on an empty train set.
  void fit(const std::vector<TableInstance>& train);

  // Location argmax restricted to labels realizable for this table (an
  // absent axis or a too-deep level cannot be chosen; "none" always can).
  Prediction predict(const TableInstance& table) const;

  bool fitted() const { return location_.fitted(); }
  const SvmConfig& config() const { return cfg_; }

  // JSON persistence (weights plus featurizer maps).
  std::string to_json_string() const;
  static SvmBaseline from_json_string(const std::string& text);
  void save(const std::string& path) const;
  static SvmBaseline load(const std::string& path);

 private:
  SvmConfig cfg_;
  TfidfFeaturizer header_features_;
  TfidfFeaturizer caption_features_;
  LinearSvm location_;
  LinearSvm token_;
};

}  // namespace tablemetric
