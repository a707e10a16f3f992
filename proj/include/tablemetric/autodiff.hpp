#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tablemetric/types.hpp"

namespace tablemetric {

// Trainable dense tensor plus its gradient and optimizer state. Embedding
// tables are stored feature-major (D x V, one column per token) so lookups
// are column gathers; `frozen_cols` lists columns excluded from gradient
// flow, which is how the padding embedding stays at zero.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  std::vector<int> frozen_cols;

  Parameter() = default;
  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        adam_m(Mat::Zero(rows, cols)),
        adam_v(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

class Graph;

// Lightweight handle to a node owned by a Graph. Valid only while the graph
// is alive; models therefore keep the graph next to the vars they expose.
struct Var {
  Graph* g = nullptr;
  int idx = -1;

  const Mat& value() const;
  int rows() const;
  int cols() const;
};

// Reverse-mode tape over Eigen matrices. Each model forward pass builds a
// fresh graph sized to its table, so there is no padding and no masking
// arithmetic: only live positions ever enter the tape. backward() seeds the
// (1x1) loss with 1 and replays the tape in reverse, then adds the gradients
// of parameter nodes into their Parameter::grad, skipping frozen columns —
// repeated calls across a batch accumulate.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  int size() const { return static_cast<int>(nodes_.size()); }
  const Mat& value(int idx) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    return n.ext ? *n.ext : n.value;
  }
  Mat& grad(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }

  // ---- leaves ----
  Var leaf(Mat constant);
  Var scalar(Real x);                       // 1x1 constant
  Var zeros(int rows, int cols);
  Var param(Parameter& p);                  // aliases p.value, grads flow back
  Var embedding(Parameter& table, const std::vector<int>& ids);  // D x |ids|

  // ---- arithmetic ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var cmul(Var a, Var b);                   // elementwise product
  Var matmul(Var a, Var b);
  Var scale(Var a, Real c);                 // constant scalar multiply
  Var add_const(Var a, Real c);
  Var rsub_const(Real c, Var a);            // c - a, elementwise
  Var scalar_mul(Var s, Var m);             // s is 1x1
  Var scalar_div(Var m, Var s);             // s is 1x1
  Var add_cols(Var a, Var v);               // v (D x 1) added to every column

  // ---- shape ----
  Var vcat(const std::vector<Var>& parts);
  Var hcat(const std::vector<Var>& parts);
  Var rows(Var a, int first, int count);
  Var col(Var a, int j);
  Var entry(Var a, int i, int j);           // 1x1
  Var transpose(Var a);

  // ---- reductions ----
  Var sum(Var a);                           // 1x1
  Var mean_cols(Var a);                     // D x 1

  // ---- nonlinearities ----
  Var tanh_v(Var a);
  Var sigmoid_v(Var a);
  Var relu_v(Var a);
  Var gelu_v(Var a);                        // exact erf form
  Var log_v(Var a);
  Var softmax_cols(Var a);                  // column-wise, max-shifted
  Var layer_norm_cols(Var x, Var gain, Var bias, Real eps = 1e-5);

  // Inverted dropout; identity when !train or rate == 0.
  Var dropout(Var a, Real rate, Rng& rng, bool train);

  // ---- composites ----
  Var affine(Var w, Var x, Var b) { return add_cols(matmul(w, x), b); }

  // Backpropagate from a 1x1 loss node through every node on the tape.
  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    const Mat* ext = nullptr;        // set for param nodes
    Parameter* owner = nullptr;      // set for param nodes
    Mat grad;
    std::function<void(Graph&, int)> back;
  };

  Var push(Mat value, std::function<void(Graph&, int)> back);
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return g->value(idx); }
inline int Var::rows() const { return static_cast<int>(value().rows()); }
inline int Var::cols() const { return static_cast<int>(value().cols()); }

struct GradCheckConfig {
  Real eps = 1e-5;
  int samples_per_param = 25;
  std::uint64_t seed = 0;
  // Differences below this are indistinguishable from finite-difference
  // rounding noise (an O(1) loss evaluated twice cancels to ~1e-10 / 2*eps)
  // and count as exact matches. Without it, entries whose true gradient is
  // identically zero — key biases under softmax attention, say — would
  // report the checker's own noise as error.
  Real abs_tol = 1e-6;
};

struct GradCheckResult {
  Real max_rel_err = 0.0;
  std::string worst;  // "name(i,j)" of the worst entry
};

// Central-difference check of analytic gradients. `loss(true)` must run a
// forward+backward pass that accumulates into each parameter's grad (which
// this function zeroes first); `loss(false)` must run the same computation
// without touching gradients. The relative error of an entry is
// |fd - an| / max(|fd|, |an|, 1e-8); entries in frozen columns are skipped.
GradCheckResult gradient_check(const std::function<Real(bool)>& loss,
                               const std::vector<Parameter*>& params,
                               const GradCheckConfig& cfg = {});

}  // namespace tablemetric
