#include "tablemetric/pointer_generator.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "tablemetric/corpus.hpp"

namespace tablemetric {

namespace {

void init_uniform(Parameter& p, Real bound, Rng& rng) {
  for (int j = 0; j < p.value.cols(); ++j)
    for (int i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = rng.uniform(-bound, bound);
}

int argmax_segment(const Vec& x, int first, int count) {
  int best = first;
  for (int i = first + 1; i < first + count; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

bool token_in_caption(const TableInstance& table, const std::string& word) {
  for (const auto& tok : table.caption)
    if (normalize_token(tok) == word) return true;
  return false;
}

}  // namespace

PointerGeneratorModel::PointerGeneratorModel(const PGConfig& config,
                                             const Vocabulary& general_vocab,
                                             const Vocabulary& metric_vocab,
                                             Rng& rng)
    : cfg_(config),
      general_vocab_(general_vocab),
      metric_vocab_(metric_vocab),
      emb_("pg.emb", config.embedding_dim, general_vocab.size(), rng),
      header_enc_("pg.header", config.embedding_dim, config.hidden_size,
                  config.layers, config.dropout, rng),
      caption_enc_("pg.caption", config.embedding_dim, config.hidden_size,
                   config.layers, config.dropout, rng),
      w_hloc_("pg.w_hloc", 3, 8 * config.hidden_size),
      b_hloc_("pg.b_hloc", 3, 1),
      w_copy_("pg.w_copy", 1, 4 * config.hidden_size),
      b_copy_("pg.b_copy", 1, 1),
      w_vocab_("pg.w_vocab", metric_vocab.size(), 4 * config.hidden_size),
      b_vocab_("pg.b_vocab", metric_vocab.size(), 1) {
  if (config.embedding_dim < 1 || config.hidden_size < 1 || config.layers < 1)
    throw std::invalid_argument(
        "PointerGeneratorModel: dims and layers must be >= 1");
  if (config.no_copy && config.no_generation)
    throw std::invalid_argument(
        "PointerGeneratorModel: no_generation already disables the copy "
        "path; pick one flag");
  const Real gate_bound = 1.0 / std::sqrt(4.0 * config.hidden_size);
  init_uniform(w_hloc_, 1.0 / std::sqrt(8.0 * config.hidden_size), rng);
  init_uniform(w_copy_, gate_bound, rng);
  init_uniform(w_vocab_, gate_bound, rng);
}

Var PointerGeneratorModel::axis_context(
    Graph& g, const std::vector<std::vector<std::string>>& axis, Rng& rng,
    bool train, Var* attention) {
  if (axis.empty()) {
    *attention = Var{};
    return g.zeros(2 * header_enc_.output_dim(), 1);
  }
  std::vector<Var> levels;
  levels.reserve(axis.size());
  for (const auto& names : axis)
    levels.push_back(average_level_embedding(g, emb_, general_vocab_, names));
  auto enc = header_enc_.encode(g, g.hcat(levels), rng, train);
  *attention = enc.attention;
  Var weighted = g.matmul(enc.states, enc.attention);
  return g.vcat({enc.final_state, weighted});
}

PGForward PointerGeneratorModel::forward(const TableInstance& table, Rng& rng,
                                         bool train) {
  auto issues = validate(table);
  if (!issues.empty())
    throw std::invalid_argument("forward: invalid table " + table.id + ": " +
                                issues.front());

  PGForward f;
  Graph& g = f.g;
  f.u = table.level_count_rows();
  f.v = table.level_count_cols();

  Var a_rh{}, a_ch{};
  Var c_rh = axis_context(g, table.row_headers, rng, train, &a_rh);
  Var c_ch = axis_context(g, table.column_headers, rng, train, &a_ch);

  f.p_hloc = g.softmax_cols(
      g.affine(g.param(w_hloc_), g.vcat({c_rh, c_ch}), g.param(b_hloc_)));

  std::vector<Var> level_parts;
  if (f.u > 0)
    level_parts.push_back(g.scalar_mul(g.entry(f.p_hloc, kHLocRow, 0), a_rh));
  if (f.v > 0)
    level_parts.push_back(g.scalar_mul(g.entry(f.p_hloc, kHLocCol, 0), a_ch));
  f.w_hlevel =
      level_parts.size() == 1 ? level_parts.front() : g.vcat(level_parts);

  f.has_token_branch = !cfg_.no_generation;
  if (!f.has_token_branch) return f;

  Var cap_in = emb_.lookup(g, lookup_ids(general_vocab_, table.caption));
  auto cap = caption_enc_.encode(g, cap_in, rng, train);
  Var c_capt = g.vcat({cap.final_state, g.matmul(cap.states, cap.attention)});
  f.a_capt = cap.attention;

  f.p_copy = cfg_.no_copy
                 ? g.scalar(0.0)
                 : g.sigmoid_v(
                       g.affine(g.param(w_copy_), c_capt, g.param(b_copy_)));
  f.p_vocab = g.softmax_cols(
      g.affine(g.param(w_vocab_), c_capt, g.param(b_vocab_)));

  // Extended vocabulary: every metric entry keeps its id, novel caption
  // tokens are appended in caption order.
  const int vm = metric_vocab_.size();
  f.extended_tokens.reserve(static_cast<std::size_t>(vm));
  for (int id = 0; id < vm; ++id)
    f.extended_tokens.push_back(metric_vocab_.token(id));
  f.caption_ext_ids.reserve(table.caption.size());
  std::unordered_map<std::string, int> novel;
  for (const auto& tok : table.caption) {
    const std::string w = normalize_token(tok);
    int id;
    if (metric_vocab_.contains(w)) {
      id = metric_vocab_.lookup(w);
    } else {
      auto it = novel.find(w);
      if (it != novel.end()) {
        id = it->second;
      } else {
        id = static_cast<int>(f.extended_tokens.size());
        novel.emplace(w, id);
        f.extended_tokens.push_back(w);
      }
    }
    f.caption_ext_ids.push_back(id);
  }
  const int ext = static_cast<int>(f.extended_tokens.size());

  Var gen_ext =
      ext > vm ? g.vcat({f.p_vocab, g.zeros(ext - vm, 1)}) : f.p_vocab;
  if (cfg_.no_copy) {
    f.extended = gen_ext;
    return f;
  }
  Mat scatter = Mat::Zero(ext, static_cast<int>(table.caption.size()));
  for (std::size_t i = 0; i < f.caption_ext_ids.size(); ++i)
    scatter(f.caption_ext_ids[i], static_cast<int>(i)) = 1.0;
  Var copy_dist = g.matmul(g.leaf(std::move(scatter)), f.a_capt);
  f.extended = g.add(g.scalar_mul(f.p_copy, copy_dist),
                     g.scalar_mul(g.rsub_const(1.0, f.p_copy), gen_ext));
  return f;
}

Var PointerGeneratorModel::loss(PGForward& f, const TableInstance& table,
                                Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("loss: alpha must lie in [0, 1]");
  Graph& g = f.g;

  const int gold = hloc_index(table.target.location);
  Var loc_level = g.neg(g.log_v(g.entry(f.p_hloc, gold, 0)));
  if (table.target.location != Location::kOutOfHeader) {
    const auto flat = flat_gold_index(table);
    Var renorm = g.scalar_div(f.w_hlevel, g.sum(f.w_hlevel));
    loc_level = g.add(loc_level, g.neg(g.log_v(g.entry(renorm, *flat - 1, 0))));
  }
  Var total = g.scale(loc_level, 1.0 - alpha);

  if (!f.has_token_branch) return total;

  const bool ooh = table.target.location == Location::kOutOfHeader;
  const std::string gold_tok = normalize_token(table.target.tokens.front());
  if (!cfg_.no_copy && (ooh || cfg_.copy_bce_all)) {
    Var bce = token_in_caption(table, gold_tok)
                  ? g.neg(g.log_v(f.p_copy))
                  : g.neg(g.log_v(g.rsub_const(1.0, f.p_copy)));
    total = g.add(total, g.scale(bce, alpha));
  }
  if (ooh) {
    int ext_id = Vocabulary::kUnk;
    if (metric_vocab_.contains(gold_tok)) {
      ext_id = metric_vocab_.lookup(gold_tok);
    } else {
      for (int i = metric_vocab_.size();
           i < static_cast<int>(f.extended_tokens.size()); ++i) {
        if (f.extended_tokens[static_cast<std::size_t>(i)] == gold_tok) {
          ext_id = i;
          break;
        }
      }
    }
    Var nll = g.neg(g.log_v(g.entry(f.extended, ext_id, 0)));
    total = g.add(total, g.scale(nll, alpha));
  }
  return total;
}

PGModelOutput PointerGeneratorModel::snapshot(const PGForward& f) const {
  PGModelOutput out;
  out.u = f.u;
  out.v = f.v;
  out.p_hloc = f.p_hloc.value().col(0);
  out.w_hlevel = f.w_hlevel.value().col(0);
  if (f.has_token_branch) {
    out.p_copy = f.p_copy.value()(0, 0);
    out.extended_dist = f.extended.value().col(0);
    out.a_capt = f.a_capt.value().col(0);
    out.extended_tokens = f.extended_tokens;
  }

  const Real tol = 1e-6;
  if (std::abs(out.p_hloc.sum() - 1.0) > tol)
    throw std::logic_error("snapshot: location gate does not sum to 1");
  if (out.w_hlevel.minCoeff() < -tol)
    throw std::logic_error("snapshot: negative level weight");
  if (f.has_token_branch &&
      std::abs(out.extended_dist.sum() - 1.0) > tol)
    throw std::logic_error("snapshot: extended distribution does not sum to 1");
  return out;
}

Prediction PointerGeneratorModel::predict(const TableInstance& table) {
  Rng rng(0);
  PGForward f = forward(table, rng, /*train=*/false);
  PGModelOutput out = snapshot(f);

  // Restrict the argmax to feasible classes: an absent axis has no names to
  // return. The caption class is always feasible (it may yield an empty
  // token list when the token branch is off).
  int best = kHLocCapt;
  auto consider = [&](int cls, bool feasible) {
    if (feasible && out.p_hloc[cls] > out.p_hloc[best]) best = cls;
  };
  consider(kHLocRow, f.u > 0);
  consider(kHLocCol, f.v > 0);

  Prediction pred;
  if (best == kHLocRow) {
    const int k = argmax_segment(out.w_hlevel, 0, f.u);
    pred.cls = PredClass::kLRow;
    pred.level = k + 1;
    pred.tokens = table.row_headers[static_cast<std::size_t>(k)];
    return pred;
  }
  if (best == kHLocCol) {
    const int l = argmax_segment(out.w_hlevel, f.u, f.v) - f.u;
    pred.cls = PredClass::kLCol;
    pred.level = l + 1;
    pred.tokens = table.column_headers[static_cast<std::size_t>(l)];
    return pred;
  }

  if (!f.has_token_branch) {
    // Location-only ablation: no token to emit for caption-sourced tables.
    pred.cls = PredClass::kGen;
    return pred;
  }

  const int w = argmax_segment(out.extended_dist, 0,
                               static_cast<int>(out.extended_dist.size()));
  Real copy_mass = 0.0;
  for (std::size_t i = 0; i < f.caption_ext_ids.size(); ++i)
    if (f.caption_ext_ids[i] == w) copy_mass += out.a_capt[static_cast<int>(i)];
  copy_mass *= out.p_copy;
  const Real vocab_mass =
      w < metric_vocab_.size() ? f.p_vocab.value()(w, 0) : 0.0;
  const Real gen_mass = (1.0 - out.p_copy) * vocab_mass;
  pred.cls = copy_mass > gen_mass ? PredClass::kCCapt : PredClass::kGen;
  pred.tokens.assign(static_cast<std::size_t>(std::max(1, table.n_cols())),
                     out.extended_tokens[static_cast<std::size_t>(w)]);
  return pred;
}

std::vector<Parameter*> PointerGeneratorModel::parameters() {
  std::vector<Parameter*> out{&emb_.table};
  for (Parameter* p : header_enc_.parameters()) out.push_back(p);
  std::vector<Parameter*> head{&w_hloc_, &b_hloc_};
  if (!cfg_.no_generation) {
    for (Parameter* p : caption_enc_.parameters()) out.push_back(p);
    if (!cfg_.no_copy) {
      head.push_back(&w_copy_);
      head.push_back(&b_copy_);
    }
    head.push_back(&w_vocab_);
    head.push_back(&b_vocab_);
  }
  for (Parameter* p : head) out.push_back(p);
  return out;
}

}  // namespace tablemetric
