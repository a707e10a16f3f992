#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tablemetric/autodiff.hpp"
#include "tablemetric/layers.hpp"
#include "tablemetric/metrics.hpp"
#include "tablemetric/pointer_generator.hpp"  // hloc_index, class order
#include "tablemetric/table.hpp"
#include "tablemetric/vocab.hpp"

namespace tablemetric {

// Linearizes a table into tagged segments: caption first, then row header
// levels 1..u, then column header levels 1..v. Each segment is wrapped as
// [CLS] tokens... [SEP]; a level's text is its names joined by single spaces
// in column order. When the stream exceeds max_len, content tokens are
// dropped one at a time from the end of the segment that currently has the
// most of them (ties go to the later segment); the [CLS]/[SEP] anchors are
// never dropped. Throws std::invalid_argument when even the anchors alone
// would not fit.
SegmentedInput build_segmented_input(const TableInstance& table,
                                     const Vocabulary& vocab, int cls_id,
                                     int sep_id, int max_len);

// Value-level snapshot of one forward pass.
struct SegModelOutput {
  Vec p_hloc;         // 3: {caption, row headers, column headers}
  Vec w_hlevel;       // one weight per segment, sums to 1
  Vec p_vocab;        // over the metric vocabulary
  Mat cls_contexts;   // width x segment count
};

// One forward pass with its tape alive.
struct SegForward {
  Graph g;
  SegmentedInput input;
  Var p_hloc;     // 3 x 1
  Var w_hlevel;   // segment count x 1
  Var p_vocab;    // |metric vocab| x 1
  Var cls_all;    // width x segment count
  int u = 0;
  int v = 0;
};

// Segment-pooled classifier over a deep token encoder. The caption
// segment's [CLS] vector drives the 3-way location gate and the metric
// vocabulary softmax; every segment's [CLS] vector passes through one
// shared scalar gate whose sigmoids, normalized across segments, form the
// level weights. The model never copies from the caption, so its
// caption-class predictions are always vocabulary generations.
class SegmentEncoderModel {
 public:
  SegmentEncoderModel(std::unique_ptr<SegmentBackend> backend,
                      const Vocabulary& general_vocab,
                      const Vocabulary& metric_vocab, Rng& rng);

  // Core pass over an already-segmented stream. u and v only matter to
  // loss/predict, so the segment count is taken from the input itself.
  SegForward forward(const SegmentedInput& input, Rng& rng, bool train);

  // Validates and segments the table, then runs the core pass.
  SegForward forward(const TableInstance& table, Rng& rng, bool train);

  // (1 - alpha) * [location NLL + gold-segment NLL under the level weights]
  // + alpha * [gold-token NLL under the vocabulary softmax, caption-sourced
  // tables only]. The gold segment is the caption for caption-sourced
  // tables, otherwise the gold level's segment. Throws std::invalid_argument
  // unless 0 <= alpha <= 1.
  Var loss(SegForward& f, const TableInstance& table, Real alpha);

  SegModelOutput snapshot(const SegForward& f) const;

  // Location argmax restricted to feasible classes; in-header predictions
  // take the argmax level weight within the chosen axis's segments (the
  // caption weight is ignored); caption-sourced predictions are Gen with
  // the vocabulary argmax replicated once per column.
  Prediction predict(const TableInstance& table);

  std::vector<Parameter*> parameters();
  SegmentBackend& backend() { return *backend_; }
  const Vocabulary& general_vocab() const { return general_vocab_; }
  const Vocabulary& metric_vocab() const { return metric_vocab_; }

 private:
  std::unique_ptr<SegmentBackend> backend_;
  Vocabulary general_vocab_;
  Vocabulary metric_vocab_;
  Parameter w_hloc_, b_hloc_;    // 3 x W, 3 x 1
  Parameter w_level_, b_level_;  // 1 x W, 1 x 1, shared across segments
  Parameter w_vocab_, b_vocab_;  // |metric vocab| x W, |metric vocab| x 1
};

}  // namespace tablemetric
