#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tablemetric/autodiff.hpp"
#include "tablemetric/corpus.hpp"
#include "tablemetric/types.hpp"
#include "tablemetric/vocab.hpp"

namespace tablemetric {

inline std::vector<int> lookup_ids(const Vocabulary& vocab,
                                   const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

// Word embedding matrix, feature-major (dim x vocab). The padding column is
// zero and frozen so it never drifts during training.
struct EmbeddingTable {
  Parameter table;

  EmbeddingTable(const std::string& name, int dim, int vocab_size, Rng& rng);

  // Overwrites rows for tokens present in `vectors`; others keep their
  // random initialization. Vector width must equal the table's dim.
  void init_pretrained(const Vocabulary& vocab, const WordVectors& vectors);

  Var lookup(Graph& g, const std::vector<int>& ids) {
    return g.embedding(table, ids);
  }
  int dim() const { return static_cast<int>(table.value.rows()); }
  int vocab_size() const { return static_cast<int>(table.value.cols()); }
};

// Mean of the embeddings of every word token of every name at one header
// level — the level's fixed-width summary fed to the level-weight gate.
Var average_level_embedding(Graph& g, EmbeddingTable& emb,
                            const Vocabulary& vocab,
                            const std::vector<std::string>& names);

// Value-level view of an encoded sequence, with zeros at masked positions.
struct SequenceEncoding {
  Mat states;       // 2H x T
  Vec final_state;  // 2H
  Vec attention;    // T, sums to 1 over unmasked positions
};

// Stacked bidirectional LSTM with dot-product attention against the final
// state. Inputs arrive as one matrix column per live token; masking is
// structural (callers simply do not pass dead positions).
class BiLstmEncoder {
 public:
  BiLstmEncoder(const std::string& name, int input_dim, int hidden_dim,
                int num_layers, Real dropout, Rng& rng);

  struct Encoded {
    Var states;       // 2H x T
    Var final_state;  // 2H x 1, the top layer's column at the last position
    Var attention;    // T x 1 softmax of states' dot products with the final
  };

  Encoded encode(Graph& g, Var inputs, Rng& rng, bool train);

  std::vector<Parameter*> parameters();
  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_; }
  int output_dim() const { return 2 * hidden_; }

 private:
  struct Direction {
    Parameter w;  // 4H x Din, gate order [input, forget, output, candidate]
    Parameter u;  // 4H x H
    Parameter b;  // 4H x 1, forget rows start at 1
  };
  struct Layer {
    Direction fwd, bwd;
  };

  Var run_direction(Graph& g, Direction& dir, Var inputs, bool reversed);

  int input_dim_;
  int hidden_;
  Real dropout_;
  std::vector<Layer> layers_;
};

// Runs a throwaway graph over the unmasked positions and scatters results
// back to the masked layout: masked positions hold zero states and zero
// attention.
// Throws std::invalid_argument when every position is masked off.
SequenceEncoding encode_sequence(BiLstmEncoder& encoder, EmbeddingTable& emb,
                                 const std::vector<int>& ids,
                                 const std::vector<bool>& mask);

// Token stream of a table linearized into tagged segments. Ids live in an
// extended space: word ids from the general vocabulary, then one id for
// [CLS] and one for [SEP].
struct SegmentedInput {
  std::vector<int> ids;
  std::vector<int> segments;   // 1-based segment number per position
  std::vector<int> positions;  // global 0-based position per token
  std::vector<int> cls_index;  // position of segment k's [CLS] at k-1
};

// Anything that turns a segmented token stream into one vector per position.
class SegmentBackend {
 public:
  virtual ~SegmentBackend() = default;
  virtual Var encode(Graph& g, const SegmentedInput& input, Rng& rng,
                     bool train) = 0;  // width x n
  virtual std::vector<Parameter*> parameters() = 0;
  virtual int width() const = 0;
  virtual int max_positions() const = 0;
  virtual int cls_id() const = 0;
  virtual int sep_id() const = 0;
};

struct TransformerConfig {
  int vocab_size = 0;  // word-id space; [CLS]/[SEP] ids are appended after it
  int width = 128;
  int layers = 2;
  int heads = 4;
  int max_len = 512;
  Real dropout = 0.1;
  bool segment_embeddings = true;  // A/B flags from segment parity
};

// Small trainable post-norm transformer: learned positions, A/B segment
// embeddings, multi-head attention, GELU feed-forward. Every weight trains
// from scratch; it is the stand-in for a pretrained masked-language-model
// encoder behind the same interface.
class TransformerEncoder : public SegmentBackend {
 public:
  TransformerEncoder(const TransformerConfig& config, Rng& rng);

  Var encode(Graph& g, const SegmentedInput& input, Rng& rng,
             bool train) override;
  std::vector<Parameter*> parameters() override;
  int width() const override { return config_.width; }
  int max_positions() const override { return config_.max_len; }
  int cls_id() const override { return config_.vocab_size; }
  int sep_id() const override { return config_.vocab_size + 1; }
  const TransformerConfig& config() const { return config_; }

 private:
  struct Block {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_gain, ln1_bias;
    Parameter w1, b1, w2, b2;
    Parameter ln2_gain, ln2_bias;
  };

  TransformerConfig config_;
  Parameter tok_table_;  // width x (vocab_size + 2)
  Parameter pos_table_;  // width x max_len
  Parameter seg_table_;  // width x 2
  std::vector<Block> blocks_;
};

}  // namespace tablemetric
