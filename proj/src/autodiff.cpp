#include "tablemetric/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tablemetric {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + detail);
}

std::string dims(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool is_frozen(const Parameter& p, int col) {
  return std::find(p.frozen_cols.begin(), p.frozen_cols.end(), col) !=
         p.frozen_cols.end();
}

constexpr Real kInvSqrt2 = 0.7071067811865475244;
constexpr Real kInvSqrt2Pi = 0.3989422804014326779;

Real phi_cdf(Real x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
Real phi_pdf(Real x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

Var Graph::push(Mat value, std::function<void(Graph&, int)> back) {
  const int idx = static_cast<int>(nodes_.size());
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, idx};
}

Var Graph::leaf(Mat constant) { return push(std::move(constant), {}); }

Var Graph::scalar(Real x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return push(std::move(m), {});
}

Var Graph::zeros(int rows, int cols) {
  return push(Mat::Zero(rows, cols), {});
}

Var Graph::param(Parameter& p) {
  const int idx = static_cast<int>(nodes_.size());
  Node n;
  n.ext = &p.value;
  n.owner = &p;
  nodes_.push_back(std::move(n));
  return {this, idx};
}

Var Graph::embedding(Parameter& table, const std::vector<int>& ids) {
  const int d = static_cast<int>(table.value.rows());
  const int v = static_cast<int>(table.value.cols());
  Mat out(d, static_cast<int>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    require(ids[t] >= 0 && ids[t] < v, "embedding",
            "token id " + std::to_string(ids[t]) + " outside table of " +
                std::to_string(v));
    out.col(static_cast<int>(t)) = table.value.col(ids[t]);
  }
  Parameter* tp = &table;
  return push(std::move(out), [tp, ids](Graph& g, int self) {
    const Mat& go = g.grad(self);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (is_frozen(*tp, ids[t])) continue;
      tp->grad.col(ids[t]) += go.col(static_cast<int>(t));
    }
  });
}

Var Graph::add(Var a, Var b) {
  const Mat& av = value(a.idx);
  const Mat& bv = value(b.idx);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add",
          dims(av) + " vs " + dims(bv));
  return push(av + bv, [ai = a.idx, bi = b.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self);
    g.grad(bi) += g.grad(self);
  });
}

Var Graph::sub(Var a, Var b) {
  const Mat& av = value(a.idx);
  const Mat& bv = value(b.idx);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub",
          dims(av) + " vs " + dims(bv));
  return push(av - bv, [ai = a.idx, bi = b.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self);
    g.grad(bi) -= g.grad(self);
  });
}

Var Graph::neg(Var a) {
  return push(-value(a.idx), [ai = a.idx](Graph& g, int self) {
    g.grad(ai) -= g.grad(self);
  });
}

Var Graph::cmul(Var a, Var b) {
  const Mat& av = value(a.idx);
  const Mat& bv = value(b.idx);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "cmul",
          dims(av) + " vs " + dims(bv));
  return push(av.cwiseProduct(bv),
              [ai = a.idx, bi = b.idx](Graph& g, int self) {
                g.grad(ai) += g.grad(self).cwiseProduct(g.value(bi));
                g.grad(bi) += g.grad(self).cwiseProduct(g.value(ai));
              });
}

Var Graph::matmul(Var a, Var b) {
  const Mat& av = value(a.idx);
  const Mat& bv = value(b.idx);
  require(av.cols() == bv.rows(), "matmul", dims(av) + " * " + dims(bv));
  return push(av * bv, [ai = a.idx, bi = b.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self) * g.value(bi).transpose();
    g.grad(bi) += g.value(ai).transpose() * g.grad(self);
  });
}

Var Graph::scale(Var a, Real c) {
  return push(value(a.idx) * c, [ai = a.idx, c](Graph& g, int self) {
    g.grad(ai) += c * g.grad(self);
  });
}

Var Graph::add_const(Var a, Real c) {
  return push(value(a.idx).array() + c, [ai = a.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self);
  });
}

Var Graph::rsub_const(Real c, Var a) {
  return push((c - value(a.idx).array()).matrix(),
              [ai = a.idx](Graph& g, int self) {
                g.grad(ai) -= g.grad(self);
              });
}

Var Graph::scalar_mul(Var s, Var m) {
  const Mat& sv = value(s.idx);
  require(sv.rows() == 1 && sv.cols() == 1, "scalar_mul",
          "scalar side is " + dims(sv));
  return push(sv(0, 0) * value(m.idx),
              [si = s.idx, mi = m.idx](Graph& g, int self) {
                g.grad(si)(0, 0) +=
                    g.grad(self).cwiseProduct(g.value(mi)).sum();
                g.grad(mi) += g.value(si)(0, 0) * g.grad(self);
              });
}

Var Graph::scalar_div(Var m, Var s) {
  const Mat& sv = value(s.idx);
  require(sv.rows() == 1 && sv.cols() == 1, "scalar_div",
          "scalar side is " + dims(sv));
  require(sv(0, 0) != 0.0, "scalar_div", "division by zero");
  return push(value(m.idx) / sv(0, 0),
              [mi = m.idx, si = s.idx](Graph& g, int self) {
                const Real s0 = g.value(si)(0, 0);
                g.grad(mi) += g.grad(self) / s0;
                g.grad(si)(0, 0) -=
                    g.grad(self).cwiseProduct(g.value(mi)).sum() / (s0 * s0);
              });
}

Var Graph::add_cols(Var a, Var v) {
  const Mat& av = value(a.idx);
  const Mat& vv = value(v.idx);
  require(vv.cols() == 1 && vv.rows() == av.rows(), "add_cols",
          dims(av) + " plus column " + dims(vv));
  Mat out = av;
  out.colwise() += vv.col(0);
  return push(std::move(out), [ai = a.idx, vi = v.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self);
    g.grad(vi).col(0) += g.grad(self).rowwise().sum();
  });
}

Var Graph::vcat(const std::vector<Var>& parts) {
  require(!parts.empty(), "vcat", "no parts");
  int rows_total = 0;
  const int cols0 = static_cast<int>(value(parts[0].idx).cols());
  std::vector<int> index;
  std::vector<int> offset;
  for (const Var& p : parts) {
    const Mat& pv = value(p.idx);
    require(static_cast<int>(pv.cols()) == cols0, "vcat",
            "column mismatch: " + dims(pv));
    index.push_back(p.idx);
    offset.push_back(rows_total);
    rows_total += static_cast<int>(pv.rows());
  }
  Mat out(rows_total, cols0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const Mat& pv = value(index[k]);
    out.middleRows(offset[k], pv.rows()) = pv;
  }
  return push(std::move(out), [index, offset](Graph& g, int self) {
    for (std::size_t k = 0; k < index.size(); ++k) {
      Mat& gp = g.grad(index[k]);
      gp += g.grad(self).middleRows(offset[k], gp.rows());
    }
  });
}

Var Graph::hcat(const std::vector<Var>& parts) {
  require(!parts.empty(), "hcat", "no parts");
  int cols_total = 0;
  const int rows0 = static_cast<int>(value(parts[0].idx).rows());
  std::vector<int> index;
  std::vector<int> offset;
  for (const Var& p : parts) {
    const Mat& pv = value(p.idx);
    require(static_cast<int>(pv.rows()) == rows0, "hcat",
            "row mismatch: " + dims(pv));
    index.push_back(p.idx);
    offset.push_back(cols_total);
    cols_total += static_cast<int>(pv.cols());
  }
  Mat out(rows0, cols_total);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const Mat& pv = value(index[k]);
    out.middleCols(offset[k], pv.cols()) = pv;
  }
  return push(std::move(out), [index, offset](Graph& g, int self) {
    for (std::size_t k = 0; k < index.size(); ++k) {
      Mat& gp = g.grad(index[k]);
      gp += g.grad(self).middleCols(offset[k], gp.cols());
    }
  });
}

Var Graph::rows(Var a, int first, int count) {
  const Mat& av = value(a.idx);
  require(first >= 0 && count >= 0 && first + count <= av.rows(), "rows",
          "block [" + std::to_string(first) + ", +" + std::to_string(count) +
              ") of " + dims(av));
  return push(av.middleRows(first, count),
              [ai = a.idx, first, count](Graph& g, int self) {
                g.grad(ai).middleRows(first, count) += g.grad(self);
              });
}

Var Graph::col(Var a, int j) {
  const Mat& av = value(a.idx);
  require(j >= 0 && j < av.cols(), "col",
          "column " + std::to_string(j) + " of " + dims(av));
  return push(av.col(j), [ai = a.idx, j](Graph& g, int self) {
    g.grad(ai).col(j) += g.grad(self);
  });
}

Var Graph::entry(Var a, int i, int j) {
  const Mat& av = value(a.idx);
  require(i >= 0 && i < av.rows() && j >= 0 && j < av.cols(), "entry",
          "(" + std::to_string(i) + "," + std::to_string(j) + ") of " +
              dims(av));
  Mat out(1, 1);
  out(0, 0) = av(i, j);
  return push(std::move(out), [ai = a.idx, i, j](Graph& g, int self) {
    g.grad(ai)(i, j) += g.grad(self)(0, 0);
  });
}

Var Graph::transpose(Var a) {
  return push(value(a.idx).transpose(), [ai = a.idx](Graph& g, int self) {
    g.grad(ai) += g.grad(self).transpose();
  });
}

Var Graph::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a.idx).sum();
  return push(std::move(out), [ai = a.idx](Graph& g, int self) {
    g.grad(ai).array() += g.grad(self)(0, 0);
  });
}

Var Graph::mean_cols(Var a) {
  const Mat& av = value(a.idx);
  require(av.cols() >= 1, "mean_cols", "no columns");
  const Real n = static_cast<Real>(av.cols());
  return push(av.rowwise().mean(), [ai = a.idx, n](Graph& g, int self) {
    const Vec share = g.grad(self).col(0) / n;
    g.grad(ai).colwise() += share;
  });
}

Var Graph::tanh_v(Var a) {
  return push(value(a.idx).array().tanh().matrix(),
              [ai = a.idx](Graph& g, int self) {
                const Mat& y = g.value(self);
                g.grad(ai).array() +=
                    g.grad(self).array() * (1.0 - y.array().square());
              });
}

Var Graph::sigmoid_v(Var a) {
  const Mat& av = value(a.idx);
  Mat out(av.rows(), av.cols());
  for (int j = 0; j < av.cols(); ++j)
    for (int i = 0; i < av.rows(); ++i) {
      const Real x = av(i, j);
      // Branch keeps exp() off large magnitudes of either sign.
      out(i, j) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
    }
  return push(std::move(out), [ai = a.idx](Graph& g, int self) {
    const Mat& y = g.value(self);
    g.grad(ai).array() +=
        g.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var Graph::relu_v(Var a) {
  return push(value(a.idx).cwiseMax(0.0), [ai = a.idx](Graph& g, int self) {
    const Mat& x = g.value(ai);
    g.grad(ai).array() +=
        g.grad(self).array() * (x.array() > 0.0).cast<Real>();
  });
}

Var Graph::gelu_v(Var a) {
  const Mat& av = value(a.idx);
  Mat out(av.rows(), av.cols());
  for (int j = 0; j < av.cols(); ++j)
    for (int i = 0; i < av.rows(); ++i)
      out(i, j) = av(i, j) * phi_cdf(av(i, j));
  return push(std::move(out), [ai = a.idx](Graph& g, int self) {
    const Mat& x = g.value(ai);
    const Mat& go = g.grad(self);
    Mat& gx = g.grad(ai);
    for (int j = 0; j < x.cols(); ++j)
      for (int i = 0; i < x.rows(); ++i)
        gx(i, j) += go(i, j) * (phi_cdf(x(i, j)) + x(i, j) * phi_pdf(x(i, j)));
  });
}

Var Graph::log_v(Var a) {
  return push(value(a.idx).array().log().matrix(),
              [ai = a.idx](Graph& g, int self) {
                g.grad(ai).array() +=
                    g.grad(self).array() / g.value(ai).array();
              });
}

Var Graph::softmax_cols(Var a) {
  const Mat& av = value(a.idx);
  Mat out(av.rows(), av.cols());
  for (int j = 0; j < av.cols(); ++j) {
    const Real mx = av.col(j).maxCoeff();
    Vec e = (av.col(j).array() - mx).exp();
    out.col(j) = e / e.sum();
  }
  return push(std::move(out), [ai = a.idx](Graph& g, int self) {
    const Mat& s = g.value(self);
    const Mat& go = g.grad(self);
    Mat& gx = g.grad(ai);
    for (int j = 0; j < s.cols(); ++j) {
      const Real dot = s.col(j).dot(go.col(j));
      gx.col(j) +=
          s.col(j).cwiseProduct(go.col(j)) - dot * s.col(j);
    }
  });
}

Var Graph::layer_norm_cols(Var x, Var gain, Var bias, Real eps) {
  const Mat& xv = value(x.idx);
  const Mat& gv = value(gain.idx);
  const Mat& bv = value(bias.idx);
  require(gv.cols() == 1 && bv.cols() == 1 && gv.rows() == xv.rows() &&
              bv.rows() == xv.rows(),
          "layer_norm_cols",
          dims(xv) + " with gain " + dims(gv) + " bias " + dims(bv));
  const Real d = static_cast<Real>(xv.rows());
  Mat out(xv.rows(), xv.cols());
  for (int j = 0; j < xv.cols(); ++j) {
    const Real mu = xv.col(j).mean();
    const Real var = (xv.col(j).array() - mu).square().sum() / d;
    const Real inv = 1.0 / std::sqrt(var + eps);
    out.col(j) =
        ((xv.col(j).array() - mu) * inv) * gv.col(0).array() +
        bv.col(0).array();
  }
  return push(std::move(out), [xi = x.idx, gi = gain.idx, bi = bias.idx,
                               eps, d](Graph& g, int self) {
    const Mat& xv = g.value(xi);
    const Mat& gv = g.value(gi);
    const Mat& go = g.grad(self);
    for (int j = 0; j < xv.cols(); ++j) {
      const Real mu = xv.col(j).mean();
      const Real var = (xv.col(j).array() - mu).square().sum() / d;
      const Real inv = 1.0 / std::sqrt(var + eps);
      const Vec centered = xv.col(j).array() - mu;
      const Vec xhat = centered * inv;
      const Vec ghat = go.col(j).cwiseProduct(gv.col(0));
      const Real dvar =
          -0.5 * inv * inv * inv * ghat.dot(centered);
      const Real dmu =
          -inv * ghat.sum() - 2.0 * dvar * centered.sum() / d;
      g.grad(xi).col(j) +=
          (inv * ghat.array() + (2.0 / d) * dvar * centered.array() +
           dmu / d)
              .matrix();
      g.grad(gi).col(0) += go.col(j).cwiseProduct(xhat);
      g.grad(bi).col(0) += go.col(j);
    }
  });
}

Var Graph::dropout(Var a, Real rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return a;
  require(rate < 1.0, "dropout", "rate must be < 1");
  const Mat& av = value(a.idx);
  Mat mask(av.rows(), av.cols());
  const Real keep = 1.0 - rate;
  for (int j = 0; j < av.cols(); ++j)
    for (int i = 0; i < av.rows(); ++i)
      mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Mat out = av.cwiseProduct(mask);
  return push(std::move(out),
              [ai = a.idx, mask = std::move(mask)](Graph& g, int self) {
                g.grad(ai) += g.grad(self).cwiseProduct(mask);
              });
}

void Graph::backward(Var loss) {
  require(loss.g == this, "backward", "loss from another graph");
  const Mat& lv = value(loss.idx);
  require(lv.rows() == 1 && lv.cols() == 1, "backward",
          "loss must be 1x1, got " + dims(lv));
  for (Node& n : nodes_) {
    const Mat& v = n.ext ? *n.ext : n.value;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  nodes_[static_cast<std::size_t>(loss.idx)].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.owner) continue;
    if (n.owner->frozen_cols.empty()) {
      n.owner->grad += n.grad;
    } else {
      Mat masked = n.grad;
      for (int c : n.owner->frozen_cols) masked.col(c).setZero();
      n.owner->grad += masked;
    }
  }
}

GradCheckResult gradient_check(const std::function<Real(bool)>& loss,
                               const std::vector<Parameter*>& params,
                               const GradCheckConfig& cfg) {
  for (Parameter* p : params) p->zero_grad();
  loss(true);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  Rng rng(cfg.seed);
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const int r = static_cast<int>(p.value.rows());
    const int c = static_cast<int>(p.value.cols());
    if (r == 0 || c == 0) continue;
    for (int s = 0; s < cfg.samples_per_param; ++s) {
      const int i = rng.uniform_int(0, r - 1);
      int j = rng.uniform_int(0, c - 1);
      bool frozen = false;
      for (int tries = 0; tries < 100; ++tries) {
        frozen = is_frozen(p, j);
        if (!frozen) break;
        j = rng.uniform_int(0, c - 1);
      }
      if (frozen) continue;
      const Real orig = p.value(i, j);
      p.value(i, j) = orig + cfg.eps;
      const Real up = loss(false);
      p.value(i, j) = orig - cfg.eps;
      const Real down = loss(false);
      p.value(i, j) = orig;
      const Real fd = (up - down) / (2.0 * cfg.eps);
      const Real an = analytic[pi](i, j);
      if (std::abs(fd - an) <= cfg.abs_tol) continue;
      const Real rel = std::abs(fd - an) /
                       std::max({std::abs(fd), std::abs(an), Real(1e-8)});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = p.name + "(" + std::to_string(i) + "," +
                    std::to_string(j) + ")";
      }
    }
  }
  return res;
}

}  // namespace tablemetric
