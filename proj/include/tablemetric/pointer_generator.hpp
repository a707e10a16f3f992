#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tablemetric/autodiff.hpp"
#include "tablemetric/layers.hpp"
#include "tablemetric/metrics.hpp"
#include "tablemetric/table.hpp"
#include "tablemetric/vocab.hpp"

namespace tablemetric {

// Location gate class order. The gate scores whether the metric-type lives
// outside the headers (caption), in the row headers, or in the column
// headers; argmax ties break toward the lowest index.
enum HLocIndex { kHLocCapt = 0, kHLocRow = 1, kHLocCol = 2 };

inline int hloc_index(Location loc) {
  switch (loc) {
    case Location::kRowHeader:
      return kHLocRow;
    case Location::kColumnHeader:
      return kHLocCol;
    case Location::kOutOfHeader:
      break;
  }
  return kHLocCapt;
}

struct PGConfig {
  int embedding_dim = 100;
  int hidden_size = 256;
  int layers = 2;
  Real dropout = 0.1;
  // Ablations. no_copy pins the copy gate to zero, so every caption-sourced
  // metric must come out of the metric vocabulary. no_generation drops the
  // token branch entirely: the model only classifies location and level, and
  // tables whose metric lives in the caption get an empty token list.
  bool no_copy = false;
  bool no_generation = false;
  // Train the copy gate on every table instead of only the caption-sourced
  // ones. The gate target asks whether the first gold name occurs in the
  // caption.
  bool copy_bce_all = false;
};

// Value-level snapshot of one forward pass. extended_tokens lists the
// support of extended_dist: the metric vocabulary first, then novel caption
// tokens in caption order.
struct PGModelOutput {
  Vec p_hloc;        // 3: {caption, row headers, column headers}
  Vec w_hlevel;      // u + v level weights (live axes only)
  Real p_copy = 0.0;
  Vec extended_dist;
  Vec a_capt;        // caption attention, empty when the token branch is off
  std::vector<std::string> extended_tokens;
  int u = 0;
  int v = 0;
};

// One forward pass with its tape alive, so a loss can still be attached and
// backpropagated. Vars are only valid while this object exists.
struct PGForward {
  Graph g;
  Var p_hloc;      // 3 x 1
  Var w_hlevel;    // (u + v) x 1
  Var p_copy;      // 1 x 1; constant 0 under no_copy
  Var p_vocab;     // |metric vocab| x 1
  Var extended;    // |extended vocab| x 1
  Var a_capt;      // n x 1
  std::vector<std::string> extended_tokens;
  std::vector<int> caption_ext_ids;  // caption position -> extended id
  int u = 0;
  int v = 0;
  bool has_token_branch = false;
};

// Copy-or-generate model over one table: a BiLSTM with dot attention reads
// the per-level average embeddings of each header axis, a second BiLSTM
// reads the caption. Header contexts drive the 3-way location gate and the
// per-level weights; the caption context drives a copy gate that mixes
// caption-attention copying with a metric-vocabulary softmax into one
// distribution over the extended vocabulary.
class PointerGeneratorModel {
 public:
  PointerGeneratorModel(const PGConfig& config, const Vocabulary& general_vocab,
                        const Vocabulary& metric_vocab, Rng& rng);

  // Builds the tape for one (valid) table. Dropout draws from `rng` when
  // `train` is set.
  PGForward forward(const TableInstance& table, Rng& rng, bool train);

  // Joint loss on the forward tape:
  //   (1 - alpha) * [location NLL + gold-level NLL over renormalized level
  //                  weights, in-header tables only]
  // + alpha       * [copy-gate BCE + gold-token NLL under the extended
  //                  distribution, caption-sourced tables only]
  // Level weights are renormalized over the live levels before the log so
  // the term is a proper NLL even though the raw weights sum to
  // p_rh + p_ch. Throws std::invalid_argument unless 0 <= alpha <= 1.
  Var loss(PGForward& f, const TableInstance& table, Real alpha);

  // Copies values out of the tape and checks the distribution invariants.
  PGModelOutput snapshot(const PGForward& f) const;

  // Case analysis over the gate outputs. Location argmax is restricted to
  // classes that are feasible for this table (an absent header axis cannot
  // be chosen). For caption-sourced predictions the copy mass and the
  // generation mass of the argmax token decide between CCapt and Gen, and
  // the token is replicated once per column.
  Prediction predict(const TableInstance& table);

  std::vector<Parameter*> parameters();
  EmbeddingTable& embeddings() { return emb_; }
  const PGConfig& config() const { return cfg_; }
  const Vocabulary& general_vocab() const { return general_vocab_; }
  const Vocabulary& metric_vocab() const { return metric_vocab_; }

 private:
  // [last level state ; attention-weighted states] for one axis, or zeros
  // when the axis has no levels.
  Var axis_context(Graph& g, const std::vector<std::vector<std::string>>& axis,
                   Rng& rng, bool train, Var* attention);

  PGConfig cfg_;
  Vocabulary general_vocab_;
  Vocabulary metric_vocab_;
  EmbeddingTable emb_;
  BiLstmEncoder header_enc_;
  BiLstmEncoder caption_enc_;
  Parameter w_hloc_, b_hloc_;    // 3 x 8H, 3 x 1
  Parameter w_copy_, b_copy_;    // 1 x 4H, 1 x 1
  Parameter w_vocab_, b_vocab_;  // |metric vocab| x 4H, |metric vocab| x 1
};

}  // namespace tablemetric
