// Copyright 2026 The UMoE Fusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "umoe/nn.hpp"

namespace {

using namespace umoe::nn;
using Var = Graph::Var;

void zero_block(ResBlock& b) {
  std::vector<Parameter*> ps;
  b.collect(ps);
  for (auto* p : ps) std::fill(p->value.storage().begin(), p->value.storage().end(), 0.0);
}

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

Tensor random_input(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0, 1);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.storage()) v = n(rng);
  return t;
}

TEST(ResBlockForward, ZeroWeightsGiveRelu) {
  ResBlock b("b", 3, 3);
  zero_block(b);
  Graph g;
  const Var y = g.resblock(g.constant(Tensor::matrix(2, 3, {1, -2, 3, -4, 5, 0})), b);
  EXPECT_EQ(std::vector<double>(g.value(y).values().begin(), g.value(y).values().end()),
            (std::vector<double>{1, 0, 3, 0, 5, 0}));
  EXPECT_FALSE(b.has_proj);
}

TEST(ResBlockForward, PositionsIndependent) {
  std::mt19937_64 rng(1);
  ResBlock b("b", 3, 9);
  b.init_uniform(rng);
  Tensor x = random_input(rng, 2, 3);
  Graph g1;
  const Tensor y1 = g1.value(g1.resblock(g1.constant(x), b));
  x.at(1, 0) += 0.5;
  Graph g2;
  const Tensor y2 = g2.value(g2.resblock(g2.constant(x), b));
  for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(y1.at(0, c), y2.at(0, c));
}

TEST(ResBlockForward, MatchesDenseOracle) {
  std::mt19937_64 rng(2);
  for (auto [cin, cout, relu_out] : {std::tuple{3, 9, true}, std::tuple{18, 18, true}, std::tuple{36, 1, false}}) {
    ResBlock b("b", cin, cout, relu_out);
    b.init_uniform(rng);
    const Tensor x = random_input(rng, 4, cin);
    Graph g;
    const Tensor y = g.value(g.resblock(g.constant(x), b));
    const auto want = oracle::resblock(to_matrix(x), b);
    for (std::size_t r = 0; r < 4; ++r) {
      for (int c = 0; c < cout; ++c) EXPECT_NEAR(y.at(r, c), want[r][c], 1e-12);
    }
  }
}

TEST(ResBlockForward, ShapeMismatch) {
  ResBlock b("b", 3, 9);
  Graph g;
  try {
    g.resblock(g.constant(Tensor::matrix(2, 4)), b);
    FAIL();
  } catch (const NnError& e) {
    EXPECT_EQ(e.kind(), NnError::Kind::kShapeMismatch);
  }
}

TEST(Backward, SumSquaresAndReluKink) {
  // A bias-only linear layer acts as a trainable leaf.
  Linear leaf("x", 1, 2);
  leaf.weight.value.storage() = {0, 0};
  leaf.bias.value.storage() = {1, 2};
  Graph g;
  g.backward(g.sum_squares(g.linear(g.constant(Tensor::matrix(1, 1, {0.0})), leaf)));
  EXPECT_EQ(leaf.bias.grad(), (std::vector<double>{2, 4}));

  Linear zero("z", 1, 1);
  zero.weight.value.storage() = {0};
  zero.bias.value.storage() = {0};
  Graph g2;
  g2.backward(g2.sum(g2.relu(g2.linear(g2.constant(Tensor::matrix(1, 1, {0.0})), zero))));
  EXPECT_EQ(zero.bias.grad()[0], 0.0);
}

TEST(Backward, DoubleBackwardThrows) {
  Linear leaf("x", 1, 1);
  Graph g;
  const Var l = g.sum(g.linear(g.constant(Tensor::matrix(1, 1, {1.0})), leaf));
  g.backward(l);
  try {
    g.backward(l);
    FAIL();
  } catch (const NnError& e) {
    EXPECT_EQ(e.kind(), NnError::Kind::kGraphConsumed);
  }
}

TEST(Backward, NonFiniteForwardThrows) {
  Graph g;
  try {
    g.constant(Tensor::matrix(1, 1, {NAN}));
    FAIL();
  } catch (const NnError& e) {
    EXPECT_EQ(e.kind(), NnError::Kind::kNonFinite);
  }
}

// Every layer type against central differences.
class LayerStack {
 public:
  explicit LayerStack(std::uint64_t seed)
      : a_("a", 3, 9), b_("b", 9, 9), c_("c", 11, 1, false), side_("side", 3, 2) {
    std::mt19937_64 rng(seed);
    a_.init_uniform(rng);
    b_.init_uniform(rng);
    c_.init_uniform(rng);
    side_.init_uniform(rng);
    a_.collect(params_);
    b_.collect(params_);
    c_.collect(params_);
    side_.collect(params_);
    x_ = random_input(rng, 6, 3);
  }

  double eval(Graph::Reduction red, bool backward, std::uint64_t* branches = nullptr) {
    static const std::vector<std::int64_t> gather{0, 2, -1, 5, 1};
    static const std::vector<std::int64_t> seg{0, 0, 1, 2, 1};
    static const std::vector<double> fill{0.1, 0.2, 0.3, 0.4};
    static const std::vector<double> targets{1, 0, 1, 0};
    Graph g;
    g.record_branches(branches != nullptr);
    const Var in = g.constant(x_);
    const Var h = g.resblock(g.resblock(in, a_), b_);
    const Var side = g.sigmoid(g.linear(in, side_));
    const Var parts[] = {h, side};
    const Var logits = g.resblock(g.concat_channels(parts), c_);
    const Var pooled = g.segment_reduce(g.gather_rows(logits, gather), seg, fill, red);
    const Var loss = g.add(g.focal_loss(pooled, targets, 0.25, 2.0), g.sum_squares(side));
    const double value = g.value(loss)[0];
    if (branches) *branches = g.branch_signature();
    if (backward) g.backward(loss);
    return value;
  }

  oracle::Probe probe(Graph::Reduction red) {
    oracle::Probe p;
    p.loss = eval(red, false, &p.branches);
    return p;
  }

  std::vector<Parameter*>& params() { return params_; }

 private:
  ResBlock a_, b_, c_;
  Linear side_;
  Tensor x_;
  std::vector<Parameter*> params_;
};

TEST(GradientCheck, EveryLayerType) {
  for (auto red : {Graph::Reduction::kMax, Graph::Reduction::kMean, Graph::Reduction::kSum}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      LayerStack net(seed);
      zero_grads(net.params());
      net.eval(red, true);
      const auto check = oracle::check_gradients(net.params(), [&] { return net.probe(red); });
      EXPECT_GT(check.checked, 100u);
      EXPECT_LE(check.skipped * 20, check.checked);
      EXPECT_LE(check.max_rel_error, 1e-4) << "seed " << seed << " worst " << net.params()[check.worst_param]->name << "["
                                           << check.worst_index << "] analytic " << check.worst_analytic << " numeric "
                                           << check.worst_numeric;
    }
  }
}

TEST(SegmentReduce, ValuesAndEmptyFill) {
  Linear leaf("x", 1, 1);
  leaf.weight.value.storage() = {1.0};
  leaf.bias.value.storage() = {0.0};
  Graph g;
  const Var x = g.linear(g.constant(Tensor::matrix(4, 1, {0.2, 0.7, 0.4, 5.0})), leaf);
  const std::vector<std::int64_t> seg{0, 0, 0, -1};
  const std::vector<double> fill{9, 0.5};
  const Tensor mx = g.value(g.segment_reduce(x, seg, fill, Graph::Reduction::kMax));
  const Tensor mean = g.value(g.segment_reduce(x, seg, fill, Graph::Reduction::kMean));
  const Tensor sum = g.value(g.segment_reduce(x, seg, fill, Graph::Reduction::kSum));
  EXPECT_EQ(mx[0], 0.7);
  EXPECT_EQ(mx[1], 0.5);
  EXPECT_NEAR(mean[0], 1.3 / 3, 1e-15);
  EXPECT_NEAR(sum[0], 1.3, 1e-15);
  EXPECT_EQ(sum[1], 0.5);
}

TEST(FocalLoss, Examples) {
  EXPECT_NEAR(focal_loss_value(0.0, 1.0, 0.25, 2.0), 0.25 * 0.25 * std::log(2.0), 1e-9);
  EXPECT_NEAR(focal_loss_value(0.0, 1.0, 0.25, 2.0), 0.043322, 1e-6);
  EXPECT_LT(focal_loss_value(40.0, 1.0, 0.25, 2.0), 1e-12);
  // Negative target mirrored with 1 - alpha.
  EXPECT_NEAR(focal_loss_value(0.0, 0.0, 0.25, 2.0), 0.75 * 0.25 * std::log(2.0), 1e-12);
}

TEST(FocalLoss, UnbalancedGammaZeroIsBce) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0, 3);
  for (int i = 0; i < 1000; ++i) {
    const double logit = z(rng);
    const double t = static_cast<double>(rng() % 2);
    EXPECT_NEAR(focal_loss_value(logit, t, -1.0, 0.0), oracle::bce(logit, t), 1e-10);
    if (t == 1.0) EXPECT_NEAR(focal_loss_value(logit, t, 1.0, 0.0), oracle::bce(logit, t), 1e-10);
  }
}

TEST(FocalLoss, GraphMeanMatchesScalar) {
  Linear leaf("x", 1, 1);
  leaf.weight.value.storage() = {1.0};
  leaf.bias.value.storage() = {0.0};
  const std::vector<double> z{-1.5, 0.3, 2.0};
  const std::vector<double> t{0, 1, 1};
  Graph g;
  const Var l = g.focal_loss(g.linear(g.constant(Tensor::matrix(3, 1, z)), leaf), t, 0.25, 2.0);
  double want = 0;
  for (int i = 0; i < 3; ++i) want += focal_loss_value(z[i], t[i], 0.25, 2.0);
  EXPECT_NEAR(g.value(l)[0], want / 3, 1e-15);
}

TEST(LAdd, Examples) {
  const std::vector<double> b{1, 2}, zero{0, 0};
  EXPECT_NEAR(l_add(b, b, zero), 0.0, 1e-9);
  const std::vector<double> p1{0}, g1{2}, z1{0}, one{1};
  EXPECT_NEAR(l_add(p1, g1, z1), 1.0, 1e-9);
  EXPECT_NEAR(l_add(p1, p1, one), 0.5, 1e-9);
  EXPECT_THROW(l_add(b, p1, z1), NnError);
}

Parameter scalar_param(double v) {
  Parameter p("p", Tensor({1}, std::vector<double>{v}));
  return p;
}

TEST(AdamTest, Examples) {
  {
    Parameter p = scalar_param(0.7);
    Parameter* ps[] = {&p};
    p.grad()[0] = 0.0;
    Adam(AdamConfig{0.9, 0.999, 1e-8, 0.0}).step(ps, 0.1);
    EXPECT_EQ(p.value[0], 0.7);
  }
  {
    Parameter p = scalar_param(0.0);
    Parameter* ps[] = {&p};
    p.grad()[0] = 1.0;
    Adam(AdamConfig{0.9, 0.999, 1e-8, 0.0}).step(ps, 0.001);
    EXPECT_NEAR(p.value[0], -0.001, 1e-9);
  }
  {
    Parameter p = scalar_param(1.0);
    Parameter* ps[] = {&p};
    p.grad()[0] = 0.0;
    Adam(AdamConfig{0.9, 0.999, 1e-8, 0.01}).step(ps, 0.1);
    EXPECT_NEAR(p.value[0], 0.999, 1e-12);
  }
}

TEST(AdamTest, TextbookOnQuadratic) {
  // f = 0.5 a (theta - c)^2 per coordinate.
  const std::vector<double> a{1.0, 3.0, 0.2}, c{2.0, -1.0, 0.5};
  Parameter p("q", Tensor({3}, std::vector<double>{0.0, 0.0, 0.0}));
  Parameter* ps[] = {&p};
  Adam adam(AdamConfig{0.9, 0.999, 1e-8, 0.0});
  std::vector<double> theta(3, 0.0), m(3, 0.0), v(3, 0.0);
  const double lr = 0.05;
  for (int t = 1; t <= 200; ++t) {
    for (int i = 0; i < 3; ++i) p.grad()[i] = a[i] * (p.value[i] - c[i]);
    adam.step(ps, lr);
    for (int i = 0; i < 3; ++i) {
      const double g = a[i] * (theta[i] - c[i]);
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      ASSERT_NEAR(p.value[i], theta[i], 1e-12) << "step " << t;
    }
  }
  EXPECT_EQ(adam.steps_taken(), 200u);
}

TEST(OneCycle, Examples) {
  const std::size_t total = 100;
  EXPECT_NEAR(one_cycle_lr(0, total), 6e-5, 1e-15);
  EXPECT_NEAR(one_cycle_lr(30, total), 6e-4, 1e-15);
  EXPECT_NEAR(one_cycle_lr(total - 1, total), 2.4e-6, 1e-15);
  EXPECT_NEAR(one_cycle_lr(0, 1), 6e-5, 1e-15);
  try {
    one_cycle_lr(total, total);
    FAIL();
  } catch (const NnError& e) {
    EXPECT_EQ(e.kind(), NnError::Kind::kOutOfRange);
  }
}

TEST(OneCycle, ContinuousSingleMaximum) {
  const std::size_t total = 1000;
  std::size_t at_max = 0;
  double prev = one_cycle_lr(0, total);
  for (std::size_t s = 1; s < total; ++s) {
    const double lr = one_cycle_lr(s, total);
    EXPECT_LT(std::abs(lr - prev), 1e-5);
    if (lr == 6e-4) ++at_max;
    if (s <= 300) {
      EXPECT_GT(lr, prev);
    } else {
      EXPECT_LT(lr, prev);
    }
    prev = lr;
  }
  EXPECT_EQ(at_max, 1u);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  std::mt19937_64 rng(8);
  ResBlock a("blk", 3, 9);
  a.init_uniform(rng);
  std::vector<Parameter*> pa;
  a.collect(pa);
  const auto j = parameters_to_json(pa);
  ResBlock b("blk", 3, 9);
  std::vector<Parameter*> pb;
  b.collect(pb);
  parameters_from_json(j, pb);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(std::vector<double>(pa[i]->value.values().begin(), pa[i]->value.values().end()),
              std::vector<double>(pb[i]->value.values().begin(), pb[i]->value.values().end()));
  }
  ResBlock c("blk", 3, 18);
  std::vector<Parameter*> pc;
  c.collect(pc);
  EXPECT_THROW(parameters_from_json(j, pc), NnError);
  ResBlock d("other", 3, 9);
  std::vector<Parameter*> pd;
  d.collect(pd);
  EXPECT_THROW(parameters_from_json(j, pd), NnError);
}

TEST(Determinism, ForwardBitIdentical) {
  LayerStack n1(5), n2(5);
  EXPECT_EQ(n1.eval(Graph::Reduction::kMax, false), n2.eval(Graph::Reduction::kMax, false));
}

}  // namespace
