#include "tablemetric/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tablemetric {

EmbeddingTable::EmbeddingTable(const std::string& name, int dim,
                               int vocab_size, Rng& rng)
    : table(name, dim, vocab_size) {
  for (int j = 1; j < vocab_size; ++j)
    for (int i = 0; i < dim; ++i) table.value(i, j) = rng.normal(0.0, 0.01);
  table.frozen_cols = {Vocabulary::kPad};
}

void EmbeddingTable::init_pretrained(const Vocabulary& vocab,
                                     const WordVectors& vectors) {
  for (int id = Vocabulary::kUnk + 1; id < vocab.size(); ++id) {
    auto it = vectors.find(vocab.token(id));
    if (it == vectors.end()) continue;
    if (it->second.size() != table.value.rows())
      throw std::invalid_argument(
          "pretrained vector width " + std::to_string(it->second.size()) +
          " does not match embedding dim " +
          std::to_string(table.value.rows()));
    table.value.col(id) = it->second;
  }
}

Var average_level_embedding(Graph& g, EmbeddingTable& emb,
                            const Vocabulary& vocab,
                            const std::vector<std::string>& names) {
  std::vector<int> ids;
  for (const auto& name : names)
    for (const auto& tok : tokenize(name)) ids.push_back(vocab.lookup(tok));
  if (ids.empty())
    throw std::invalid_argument(
        "average_level_embedding: level has no word tokens");
  return g.mean_cols(g.embedding(emb.table, ids));
}

namespace {

void init_uniform(Parameter& p, Real bound, Rng& rng) {
  for (int j = 0; j < p.value.cols(); ++j)
    for (int i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = rng.uniform(-bound, bound);
}

}  // namespace

BiLstmEncoder::BiLstmEncoder(const std::string& name, int input_dim,
                             int hidden_dim, int num_layers, Real dropout,
                             Rng& rng)
    : input_dim_(input_dim), hidden_(hidden_dim), dropout_(dropout) {
  if (input_dim < 1 || hidden_dim < 1 || num_layers < 1)
    throw std::invalid_argument("BiLstmEncoder: dims and layers must be >= 1");
  for (int l = 0; l < num_layers; ++l) {
    const int din = l == 0 ? input_dim : 2 * hidden_dim;
    Layer layer;
    for (Direction* dir : {&layer.fwd, &layer.bwd}) {
      const char* tag = dir == &layer.fwd ? "fwd" : "bwd";
      const std::string base =
          name + ".l" + std::to_string(l) + "." + tag + ".";
      dir->w = Parameter(base + "w", 4 * hidden_dim, din);
      dir->u = Parameter(base + "u", 4 * hidden_dim, hidden_dim);
      dir->b = Parameter(base + "b", 4 * hidden_dim, 1);
      init_uniform(dir->w, 1.0 / std::sqrt(static_cast<Real>(din)), rng);
      init_uniform(dir->u, 1.0 / std::sqrt(static_cast<Real>(hidden_dim)),
                   rng);
      dir->b.value.block(hidden_dim, 0, hidden_dim, 1).setOnes();
    }
    layers_.push_back(std::move(layer));
  }
}

Var BiLstmEncoder::run_direction(Graph& g, Direction& dir, Var inputs,
                                 bool reversed) {
  const int t_len = inputs.cols();
  const int h = hidden_;
  Var w = g.param(dir.w);
  Var u = g.param(dir.u);
  Var b = g.param(dir.b);
  Var h_prev = g.zeros(h, 1);
  Var c_prev = g.zeros(h, 1);
  std::vector<Var> outputs(static_cast<std::size_t>(t_len));
  for (int step = 0; step < t_len; ++step) {
    const int t = reversed ? t_len - 1 - step : step;
    Var pre = g.add(g.affine(w, g.col(inputs, t), b), g.matmul(u, h_prev));
    Var i_gate = g.sigmoid_v(g.rows(pre, 0, h));
    Var f_gate = g.sigmoid_v(g.rows(pre, h, h));
    Var o_gate = g.sigmoid_v(g.rows(pre, 2 * h, h));
    Var cand = g.tanh_v(g.rows(pre, 3 * h, h));
    c_prev = g.add(g.cmul(f_gate, c_prev), g.cmul(i_gate, cand));
    h_prev = g.cmul(o_gate, g.tanh_v(c_prev));
    outputs[static_cast<std::size_t>(t)] = h_prev;
  }
  return g.hcat(outputs);
}

BiLstmEncoder::Encoded BiLstmEncoder::encode(Graph& g, Var inputs, Rng& rng,
                                             bool train) {
  if (inputs.cols() < 1)
    throw std::invalid_argument("BiLstmEncoder: empty sequence");
  if (inputs.rows() != input_dim_)
    throw std::invalid_argument("BiLstmEncoder: input dim " +
                                std::to_string(inputs.rows()) + ", expected " +
                                std::to_string(input_dim_));
  Var x = inputs;
  for (Layer& layer : layers_) {
    x = g.dropout(x, dropout_, rng, train);
    Var f = run_direction(g, layer.fwd, x, false);
    Var r = run_direction(g, layer.bwd, x, true);
    x = g.vcat({f, r});
  }
  Var final_state = g.col(x, x.cols() - 1);
  Var attention = g.softmax_cols(g.matmul(g.transpose(x), final_state));
  return {x, final_state, attention};
}

std::vector<Parameter*> BiLstmEncoder::parameters() {
  std::vector<Parameter*> out;
  for (Layer& layer : layers_) {
    for (Direction* dir : {&layer.fwd, &layer.bwd}) {
      out.push_back(&dir->w);
      out.push_back(&dir->u);
      out.push_back(&dir->b);
    }
  }
  return out;
}

SequenceEncoding encode_sequence(BiLstmEncoder& encoder, EmbeddingTable& emb,
                                 const std::vector<int>& ids,
                                 const std::vector<bool>& mask) {
  if (ids.size() != mask.size())
    throw std::invalid_argument("encode_sequence: ids/mask length mismatch");
  std::vector<int> live_ids;
  std::vector<int> live_pos;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (!mask[t]) continue;
    live_ids.push_back(ids[t]);
    live_pos.push_back(static_cast<int>(t));
  }
  if (live_ids.empty())
    throw std::invalid_argument("encode_sequence: all positions masked");

  Graph g;
  Rng rng(0);  // inference path; dropout is off
  auto enc = encoder.encode(g, emb.lookup(g, live_ids), rng, false);

  SequenceEncoding out;
  const int t_len = static_cast<int>(ids.size());
  out.states = Mat::Zero(encoder.output_dim(), t_len);
  out.attention = Vec::Zero(t_len);
  out.final_state = enc.final_state.value().col(0);
  const Mat& states = enc.states.value();
  const Mat& attn = enc.attention.value();
  for (std::size_t k = 0; k < live_pos.size(); ++k) {
    out.states.col(live_pos[k]) = states.col(static_cast<int>(k));
    out.attention[live_pos[k]] = attn(static_cast<int>(k), 0);
  }
  return out;
}

namespace {

void init_normal(Parameter& p, Real stddev, Rng& rng) {
  for (int j = 0; j < p.value.cols(); ++j)
    for (int i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = rng.normal(0.0, stddev);
}

}  // namespace

TransformerEncoder::TransformerEncoder(const TransformerConfig& config,
                                       Rng& rng)
    : config_(config),
      tok_table_("tf.tok", config.width, config.vocab_size + 2),
      pos_table_("tf.pos", config.width, config.max_len),
      seg_table_("tf.seg", config.width, 2) {
  if (config.vocab_size < 2)
    throw std::invalid_argument("TransformerEncoder: vocab too small");
  if (config.width % config.heads != 0)
    throw std::invalid_argument(
        "TransformerEncoder: width must divide evenly into heads");
  init_normal(tok_table_, 0.02, rng);
  tok_table_.value.col(Vocabulary::kPad).setZero();
  tok_table_.frozen_cols = {Vocabulary::kPad};
  init_normal(pos_table_, 0.02, rng);
  init_normal(seg_table_, 0.02, rng);

  const int w = config.width;
  for (int l = 0; l < config.layers; ++l) {
    const std::string base = "tf.b" + std::to_string(l) + ".";
    Block blk;
    blk.wq = Parameter(base + "wq", w, w);
    blk.bq = Parameter(base + "bq", w, 1);
    blk.wk = Parameter(base + "wk", w, w);
    blk.bk = Parameter(base + "bk", w, 1);
    blk.wv = Parameter(base + "wv", w, w);
    blk.bv = Parameter(base + "bv", w, 1);
    blk.wo = Parameter(base + "wo", w, w);
    blk.bo = Parameter(base + "bo", w, 1);
    blk.ln1_gain = Parameter(base + "ln1.g", w, 1);
    blk.ln1_bias = Parameter(base + "ln1.b", w, 1);
    blk.w1 = Parameter(base + "w1", 4 * w, w);
    blk.b1 = Parameter(base + "b1", 4 * w, 1);
    blk.w2 = Parameter(base + "w2", w, 4 * w);
    blk.b2 = Parameter(base + "b2", w, 1);
    blk.ln2_gain = Parameter(base + "ln2.g", w, 1);
    blk.ln2_bias = Parameter(base + "ln2.b", w, 1);
    for (Parameter* p : {&blk.wq, &blk.wk, &blk.wv, &blk.wo, &blk.w1, &blk.w2})
      init_normal(*p, 0.02, rng);
    blk.ln1_gain.value.setOnes();
    blk.ln2_gain.value.setOnes();
    blocks_.push_back(std::move(blk));
  }
}

Var TransformerEncoder::encode(Graph& g, const SegmentedInput& input,
                               Rng& rng, bool train) {
  const std::size_t n = input.ids.size();
  if (n == 0) throw std::invalid_argument("TransformerEncoder: empty input");
  if (input.segments.size() != n || input.positions.size() != n)
    throw std::invalid_argument(
        "TransformerEncoder: ids/segments/positions length mismatch");
  for (int pos : input.positions)
    if (pos < 0 || pos >= config_.max_len)
      throw std::invalid_argument("TransformerEncoder: position " +
                                  std::to_string(pos) +
                                  " outside the learned position table");

  Var x = g.add(g.embedding(tok_table_, input.ids),
                g.embedding(pos_table_, input.positions));
  if (config_.segment_embeddings) {
    std::vector<int> parity(n);
    for (std::size_t t = 0; t < n; ++t)
      parity[t] = input.segments[t] % 2 == 1 ? 0 : 1;
    x = g.add(x, g.embedding(seg_table_, parity));
  }
  x = g.dropout(x, config_.dropout, rng, train);

  const int dk = config_.width / config_.heads;
  const Real inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Real>(dk));
  for (Block& blk : blocks_) {
    Var q = g.affine(g.param(blk.wq), x, g.param(blk.bq));
    Var k = g.affine(g.param(blk.wk), x, g.param(blk.bk));
    Var v = g.affine(g.param(blk.wv), x, g.param(blk.bv));
    std::vector<Var> heads;
    for (int h = 0; h < config_.heads; ++h) {
      Var qh = g.rows(q, h * dk, dk);
      Var kh = g.rows(k, h * dk, dk);
      Var vh = g.rows(v, h * dk, dk);
      Var scores = g.scale(g.matmul(g.transpose(kh), qh), inv_sqrt_dk);
      heads.push_back(g.matmul(vh, g.softmax_cols(scores)));
    }
    Var attn = g.affine(g.param(blk.wo), g.vcat(heads), g.param(blk.bo));
    x = g.layer_norm_cols(g.add(x, g.dropout(attn, config_.dropout, rng,
                                             train)),
                          g.param(blk.ln1_gain), g.param(blk.ln1_bias));
    Var hidden = g.gelu_v(g.affine(g.param(blk.w1), x, g.param(blk.b1)));
    Var ffn = g.affine(g.param(blk.w2), hidden, g.param(blk.b2));
    x = g.layer_norm_cols(g.add(x, g.dropout(ffn, config_.dropout, rng,
                                             train)),
                          g.param(blk.ln2_gain), g.param(blk.ln2_bias));
  }
  return x;
}

std::vector<Parameter*> TransformerEncoder::parameters() {
  std::vector<Parameter*> out = {&tok_table_, &pos_table_};
  if (config_.segment_embeddings) out.push_back(&seg_table_);
  for (Block& blk : blocks_) {
    for (Parameter* p :
         {&blk.wq, &blk.bq, &blk.wk, &blk.bk, &blk.wv, &blk.bv, &blk.wo,
          &blk.bo, &blk.ln1_gain, &blk.ln1_bias, &blk.w1, &blk.b1, &blk.w2,
          &blk.b2, &blk.ln2_gain, &blk.ln2_bias})
      out.push_back(p);
  }
  return out;
}

}  // namespace tablemetric
