#include "tablemetric/segment_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tablemetric/corpus.hpp"

namespace tablemetric {

namespace {

void init_uniform(Parameter& p, Real bound, Rng& rng) {
  for (int j = 0; j < p.value.cols(); ++j)
    for (int i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = rng.uniform(-bound, bound);
}

std::vector<int> level_word_ids(const std::vector<std::string>& names,
                                const Vocabulary& vocab) {
  std::ostringstream joined;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) joined << ' ';
    joined << names[i];
  }
  return lookup_ids(vocab, tokenize(joined.str()));
}

}  // namespace

SegmentedInput build_segmented_input(const TableInstance& table,
                                     const Vocabulary& vocab, int cls_id,
                                     int sep_id, int max_len) {
  std::vector<std::vector<int>> content;
  content.push_back(lookup_ids(vocab, table.caption));
  for (const auto& level : table.row_headers)
    content.push_back(level_word_ids(level, vocab));
  for (const auto& level : table.column_headers)
    content.push_back(level_word_ids(level, vocab));

  const int n_seg = static_cast<int>(content.size());
  if (max_len < 2 * n_seg)
    throw std::invalid_argument(
        "build_segmented_input: " + std::to_string(n_seg) +
        " segments cannot fit in " + std::to_string(max_len) + " positions");

  int total = 2 * n_seg;
  for (const auto& seg : content) total += static_cast<int>(seg.size());
  while (total > max_len) {
    int longest = 0;
    for (int s = 1; s < n_seg; ++s)
      if (content[static_cast<std::size_t>(s)].size() >=
          content[static_cast<std::size_t>(longest)].size())
        longest = s;
    content[static_cast<std::size_t>(longest)].pop_back();
    --total;
  }

  SegmentedInput out;
  out.ids.reserve(static_cast<std::size_t>(total));
  for (int s = 0; s < n_seg; ++s) {
    out.cls_index.push_back(static_cast<int>(out.ids.size()));
    out.ids.push_back(cls_id);
    for (int id : content[static_cast<std::size_t>(s)]) out.ids.push_back(id);
    out.ids.push_back(sep_id);
    while (out.segments.size() < out.ids.size()) out.segments.push_back(s + 1);
  }
  out.positions.resize(out.ids.size());
  for (std::size_t i = 0; i < out.positions.size(); ++i)
    out.positions[i] = static_cast<int>(i);
  return out;
}

namespace {

int required_width(const std::unique_ptr<SegmentBackend>& backend) {
  if (!backend)
    throw std::invalid_argument("SegmentEncoderModel: backend required");
  return backend->width();
}

}  // namespace

SegmentEncoderModel::SegmentEncoderModel(
    std::unique_ptr<SegmentBackend> backend, const Vocabulary& general_vocab,
    const Vocabulary& metric_vocab, Rng& rng)
    : backend_(std::move(backend)),
      general_vocab_(general_vocab),
      metric_vocab_(metric_vocab),
      w_hloc_("seg.w_hloc", 3, required_width(backend_)),
      b_hloc_("seg.b_hloc", 3, 1),
      w_level_("seg.w_level", 1, backend_->width()),
      b_level_("seg.b_level", 1, 1),
      w_vocab_("seg.w_vocab", metric_vocab.size(), backend_->width()),
      b_vocab_("seg.b_vocab", metric_vocab.size(), 1) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(backend_->width()));
  init_uniform(w_hloc_, bound, rng);
  init_uniform(w_level_, bound, rng);
  init_uniform(w_vocab_, bound, rng);
}

SegForward SegmentEncoderModel::forward(const SegmentedInput& input, Rng& rng,
                                        bool train) {
  if (input.cls_index.empty())
    throw std::invalid_argument("forward: input has no segments");
  SegForward f;
  Graph& g = f.g;
  f.input = input;

  Var states = backend_->encode(g, f.input, rng, train);
  std::vector<Var> cls;
  cls.reserve(f.input.cls_index.size());
  for (int pos : f.input.cls_index) cls.push_back(g.col(states, pos));
  f.cls_all = cls.size() == 1 ? cls.front() : g.hcat(cls);
  Var c1 = cls.front();

  f.p_hloc = g.softmax_cols(g.affine(g.param(w_hloc_), c1, g.param(b_hloc_)));
  Var level_scores = g.sigmoid_v(
      g.affine(g.param(w_level_), f.cls_all, g.param(b_level_)));  // 1 x S
  Var level_col = g.transpose(level_scores);
  f.w_hlevel = g.scalar_div(level_col, g.sum(level_col));
  f.p_vocab =
      g.softmax_cols(g.affine(g.param(w_vocab_), c1, g.param(b_vocab_)));
  return f;
}

SegForward SegmentEncoderModel::forward(const TableInstance& table, Rng& rng,
                                        bool train) {
  auto issues = validate(table);
  if (!issues.empty())
    throw std::invalid_argument("forward: invalid table " + table.id + ": " +
                                issues.front());
  SegmentedInput input =
      build_segmented_input(table, general_vocab_, backend_->cls_id(),
                            backend_->sep_id(), backend_->max_positions());
  SegForward f = forward(input, rng, train);
  f.u = table.level_count_rows();
  f.v = table.level_count_cols();
  return f;
}

Var SegmentEncoderModel::loss(SegForward& f, const TableInstance& table,
                              Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("loss: alpha must lie in [0, 1]");
  Graph& g = f.g;

  const bool ooh = table.target.location == Location::kOutOfHeader;
  const int gold = hloc_index(table.target.location);
  Var loc_nll = g.neg(g.log_v(g.entry(f.p_hloc, gold, 0)));

  // Caption segment for caption-sourced tables, the gold level's segment
  // otherwise; w_hlevel indexes segments from 0.
  const int gold_seg = ooh ? 0 : *flat_gold_index(table);
  Var level_nll = g.neg(g.log_v(g.entry(f.w_hlevel, gold_seg, 0)));
  Var total = g.scale(g.add(loc_nll, level_nll), 1.0 - alpha);

  if (ooh) {
    const std::string gold_tok = normalize_token(table.target.tokens.front());
    const int id = metric_vocab_.lookup(gold_tok);
    Var nll = g.neg(g.log_v(g.entry(f.p_vocab, id, 0)));
    total = g.add(total, g.scale(nll, alpha));
  }
  return total;
}

SegModelOutput SegmentEncoderModel::snapshot(const SegForward& f) const {
  SegModelOutput out;
  out.p_hloc = f.p_hloc.value().col(0);
  out.w_hlevel = f.w_hlevel.value().col(0);
  out.p_vocab = f.p_vocab.value().col(0);
  out.cls_contexts = f.cls_all.value();

  const Real tol = 1e-6;
  if (std::abs(out.p_hloc.sum() - 1.0) > tol)
    throw std::logic_error("snapshot: location gate does not sum to 1");
  if (std::abs(out.w_hlevel.sum() - 1.0) > tol)
    throw std::logic_error("snapshot: level weights do not sum to 1");
  if (std::abs(out.p_vocab.sum() - 1.0) > tol)
    throw std::logic_error("snapshot: vocabulary softmax does not sum to 1");
  return out;
}

Prediction SegmentEncoderModel::predict(const TableInstance& table) {
  Rng rng(0);
  SegForward f = forward(table, rng, /*train=*/false);
  SegModelOutput out = snapshot(f);

  int best = kHLocCapt;
  auto consider = [&](int cls, bool feasible) {
    if (feasible && out.p_hloc[cls] > out.p_hloc[best]) best = cls;
  };
  consider(kHLocRow, f.u > 0);
  consider(kHLocCol, f.v > 0);

  auto axis_argmax = [&](int first, int count) {
    int k = first;
    for (int i = first + 1; i < first + count; ++i)
      if (out.w_hlevel[i] > out.w_hlevel[k]) k = i;
    return k - first;
  };

  Prediction pred;
  if (best == kHLocRow) {
    const int k = axis_argmax(1, f.u);
    pred.cls = PredClass::kLRow;
    pred.level = k + 1;
    pred.tokens = table.row_headers[static_cast<std::size_t>(k)];
    return pred;
  }
  if (best == kHLocCol) {
    const int l = axis_argmax(1 + f.u, f.v);
    pred.cls = PredClass::kLCol;
    pred.level = l + 1;
    pred.tokens = table.column_headers[static_cast<std::size_t>(l)];
    return pred;
  }

  int w = 0;
  for (int id = 1; id < out.p_vocab.size(); ++id)
    if (out.p_vocab[id] > out.p_vocab[w]) w = id;
  pred.cls = PredClass::kGen;
  pred.tokens.assign(static_cast<std::size_t>(std::max(1, table.n_cols())),
                     metric_vocab_.token(w));
  return pred;
}

std::vector<Parameter*> SegmentEncoderModel::parameters() {
  std::vector<Parameter*> out = backend_->parameters();
  for (Parameter* p :
       {&w_hloc_, &b_hloc_, &w_level_, &b_level_, &w_vocab_, &b_vocab_})
    out.push_back(p);
  return out;
}

}  // namespace tablemetric
