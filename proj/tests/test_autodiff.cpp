#include <doctest.h>

#include <cmath>
#include <set>

#include "tablemetric/autodiff.hpp"
#include "tablemetric/types.hpp"

using namespace tablemetric;

TEST_CASE("rng streams are deterministic and well-bounded") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    const Real u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = r.uniform_int(3, 6);
    CHECK(k >= 3);
    CHECK(k <= 6);
    seen.insert(k);
  }
  CHECK(seen.size() == 4);  // inclusive bounds are both reachable

  Rng s1(9);
  Rng s2(9);
  std::vector<int> v1 = {1, 2, 3, 4, 5, 6, 7};
  std::vector<int> v2 = v1;
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);

  Rng parent(3);
  Rng f1 = parent.fork(0);
  Rng f2 = parent.fork(1);
  CHECK(f1.next_u64() != f2.next_u64());

  Rng n(11);
  Real mean = 0.0;
  const int samples = 20000;
  for (int i = 0; i < samples; ++i) mean += n.normal();
  mean /= samples;
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("forward values of the elementwise and shape ops") {
  Graph g;
  Mat m(2, 2);
  m << 1.0, -2.0, 3.0, 0.0;
  Var a = g.leaf(m);

  CHECK(g.relu_v(a).value()(0, 1) == 0.0);
  CHECK(g.relu_v(a).value()(1, 0) == 3.0);
  CHECK(g.neg(a).value()(0, 0) == -1.0);
  CHECK(g.add_const(a, 2.5).value()(1, 1) == 2.5);
  CHECK(g.rsub_const(1.0, a).value()(0, 1) == 3.0);
  CHECK(g.scale(a, -2.0).value()(1, 0) == -6.0);
  CHECK(g.transpose(a).value()(0, 1) == 3.0);
  CHECK(g.sum(a).value()(0, 0) == 2.0);
  CHECK(g.entry(a, 1, 0).value()(0, 0) == 3.0);
  CHECK(g.mean_cols(a).value()(0, 0) == doctest::Approx(-0.5));

  CHECK(g.gelu_v(g.scalar(0.0)).value()(0, 0) == 0.0);
  // At large inputs GELU approaches the identity.
  CHECK(g.gelu_v(g.scalar(10.0)).value()(0, 0) == doctest::Approx(10.0));
  CHECK(g.sigmoid_v(g.scalar(0.0)).value()(0, 0) == doctest::Approx(0.5));
  // The stable sigmoid stays finite and saturated at extremes.
  CHECK(g.sigmoid_v(g.scalar(800.0)).value()(0, 0) == doctest::Approx(1.0));
  CHECK(g.sigmoid_v(g.scalar(-800.0)).value()(0, 0) == doctest::Approx(0.0));

  Var s = g.scalar(4.0);
  CHECK(g.scalar_mul(s, a).value()(1, 0) == 12.0);
  CHECK(g.scalar_div(a, s).value()(1, 0) == 0.75);

  Var v = g.leaf(Vec::Constant(2, 10.0));
  CHECK(g.add_cols(a, v).value()(0, 1) == 8.0);

  Var cat = g.vcat({a, a});
  CHECK(cat.rows() == 4);
  CHECK(cat.value()(2, 0) == 1.0);
  Var wide = g.hcat({a, g.neg(a)});
  CHECK(wide.cols() == 4);
  CHECK(wide.value()(0, 2) == -1.0);
}

TEST_CASE("softmax columns are simplex points even for extreme logits") {
  Graph g;
  Mat m(3, 2);
  m << 1000.0, -1000.0, 999.0, -1000.0, -1000.0, -1000.0;
  const Mat s = g.softmax_cols(g.leaf(m)).value();
  for (int j = 0; j < 2; ++j) {
    CHECK(s.col(j).sum() == doctest::Approx(1.0));
    CHECK(s.col(j).minCoeff() >= 0.0);
  }
  CHECK(s(0, 0) > s(1, 0));
  CHECK(s(2, 0) == doctest::Approx(0.0));
  CHECK(s(0, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("layer norm standardizes each column before gain and bias") {
  Graph g;
  Mat m(3, 1);
  m << 1.0, 2.0, 3.0;
  Var gain = g.leaf(Vec::Ones(3));
  Var bias = g.leaf(Vec::Zero(3));
  const Mat out = g.layer_norm_cols(g.leaf(m), gain, bias, 0.0).value();
  const Real inv = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(out(0, 0) == doctest::Approx(-inv));
  CHECK(out(1, 0) == doctest::Approx(0.0));
  CHECK(out(2, 0) == doctest::Approx(inv));
  CHECK(out.col(0).mean() == doctest::Approx(0.0));
}

TEST_CASE("embedding gathers columns and never leaks gradient into frozen "
          "columns") {
  Parameter table("emb", 3, 5);
  for (int j = 0; j < 5; ++j) table.value.col(j).setConstant(j);
  table.frozen_cols = {0};

  Graph g;
  Var e = g.embedding(table, {0, 2, 2, 4});
  CHECK(e.cols() == 4);
  CHECK(e.value()(0, 1) == 2.0);
  CHECK(e.value()(0, 3) == 4.0);

  Var loss = g.sum(e);
  g.backward(loss);
  CHECK(table.grad.col(0).isZero());
  CHECK(table.grad.col(2)(0) == 2.0);  // used twice, contributions add
  CHECK(table.grad.col(4)(0) == 1.0);
  CHECK(table.grad.col(1).isZero());  // never used

  // A second backward pass accumulates instead of overwriting.
  Graph g2;
  g2.backward(g2.sum(g2.embedding(table, {4})));
  CHECK(table.grad.col(4)(0) == 2.0);
}

TEST_CASE("parameter nodes accumulate and frozen columns stay untouched") {
  Parameter p("w", 2, 3);
  p.value.setConstant(1.0);
  p.frozen_cols = {1};
  Graph g;
  g.backward(g.sum(g.param(p)));
  CHECK(p.grad.col(0)(0) == 1.0);
  CHECK(p.grad.col(1).isZero());
  CHECK(p.grad.col(2)(1) == 1.0);
}

TEST_CASE("analytic gradients match central differences across every op") {
  Rng init(123);
  Parameter emb("emb", 4, 6);
  for (int j = 1; j < 6; ++j)
    for (int i = 0; i < 4; ++i) emb.value(i, j) = init.normal(0.0, 0.5);
  emb.frozen_cols = {0};
  Parameter w1("w1", 3, 4);
  Parameter b1("b1", 3, 1);
  Parameter gain("gain", 3, 1);
  Parameter bias("bias", 3, 1);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 3; ++i) w1.value(i, j) = init.normal(0.0, 0.5);
  for (int i = 0; i < 3; ++i) b1.value(i, 0) = init.normal(0.0, 0.5);
  gain.value.setConstant(1.2);
  bias.value.setConstant(-0.3);

  Mat probe1(5, 6);
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 5; ++i) probe1(i, j) = init.normal();
  Mat probe2(2, 2);
  probe2 << 0.3, -0.7, 1.1, 0.4;

  auto loss = [&](bool with_grad) -> Real {
    Graph g;
    Var e = g.embedding(emb, {1, 2, 3, 4, 5, 2});
    Var h = g.affine(g.param(w1), e, g.param(b1));
    Var t = g.tanh_v(h);
    Var sm = g.softmax_cols(h);
    Var lg = g.log_v(g.add_const(sm, 1e-3));
    Var ln = g.layer_norm_cols(h, g.param(gain), g.param(bias));
    Var mix = g.add(g.cmul(t, sm), g.sub(ln, g.scale(g.relu_v(h), 0.5)));
    mix = g.add(mix, g.rsub_const(1.0, g.gelu_v(h)));
    Var s2 = g.sigmoid_v(g.rows(h, 0, 2));
    Var cat = g.vcat({mix, s2});  // 5 x 6
    Var cat2 = g.hcat({g.col(cat, 0), g.mean_cols(cat)});  // 5 x 2
    Var tr = g.transpose(cat2);  // 2 x 5
    Var pick = g.entry(tr, 1, 3);
    Var scaled = g.scalar_mul(pick, g.leaf(probe2));
    Var divided = g.scalar_div(scaled, g.add_const(g.sum(sm), 1.0));
    Var bias_all = g.add_cols(cat, g.col(cat, 2));
    Var total = g.sum(g.cmul(cat, g.leaf(probe1)));
    total = g.add(total, g.sum(lg));
    total = g.add(total, g.sum(divided));
    total = g.add(total, g.sum(bias_all));
    total = g.add(total, g.sum(g.matmul(tr, cat2)));
    if (with_grad) g.backward(total);
    return total.value()(0, 0);
  };

  GradCheckConfig cfg;
  cfg.samples_per_param = 40;
  cfg.seed = 17;
  const auto result =
      gradient_check(loss, {&emb, &w1, &b1, &gain, &bias}, cfg);
  INFO("worst entry: ", result.worst);
  CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("dropout keeps expectation and reuses its mask in backward") {
  Graph g;
  Rng rng(5);
  Var a = g.leaf(Mat::Constant(10, 10, 1.0));
  Var kept = g.dropout(a, 0.0, rng, true);
  CHECK(kept.idx == a.idx);  // identity, no node added
  Var off = g.dropout(a, 0.5, rng, false);
  CHECK(off.idx == a.idx);

  Var on = g.dropout(a, 0.5, rng, true);
  const Mat& v = on.value();
  int zeros = 0;
  for (int j = 0; j < 10; ++j)
    for (int i = 0; i < 10; ++i) {
      CHECK((v(i, j) == 0.0 || v(i, j) == doctest::Approx(2.0)));
      if (v(i, j) == 0.0) ++zeros;
    }
  CHECK(zeros > 20);
  CHECK(zeros < 80);

  Parameter p("p", 4, 4);
  p.value.setConstant(0.7);
  auto loss = [&](bool with_grad) -> Real {
    Graph g2;
    Rng r2(99);  // fixed per call so the mask is identical across calls
    Var x = g2.dropout(g2.param(p), 0.4, r2, true);
    Var total = g2.sum(g2.cmul(x, x));
    if (with_grad) g2.backward(total);
    return total.value()(0, 0);
  };
  const auto result = gradient_check(loss, {&p}, {1e-5, 16, 3});
  CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("graph rejects malformed uses") {
  Graph g;
  Var a = g.leaf(Mat::Zero(2, 3));
  Var b = g.leaf(Mat::Zero(3, 2));
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.cmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(g.entry(a, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(g.col(a, 3), std::invalid_argument);
  CHECK_THROWS_AS(g.rows(a, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(g.backward(a), std::invalid_argument);  // loss not 1x1
  CHECK_THROWS_AS(g.scalar_mul(a, b), std::invalid_argument);
  Parameter table("emb", 2, 3);
  CHECK_THROWS_AS(g.embedding(table, {3}), std::invalid_argument);
  CHECK_THROWS_AS(g.vcat({}), std::invalid_argument);
}
