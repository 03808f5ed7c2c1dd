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

#include "umoe/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace umoe::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require(bool ok, NnError::Kind kind, const std::string& msg) {
  if (!ok) throw NnError(kind, msg);
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {
  require(shape_.size() <= 3, NnError::Kind::kShapeMismatch, "tensors have at most 3 axes");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(shape_.size() <= 3, NnError::Kind::kShapeMismatch, "tensors have at most 3 axes");
  require(values_.size() == product(shape_), NnError::Kind::kShapeMismatch,
          "value count does not match shape " + shape_str(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({1, rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({1, rows, cols}, fill);
}

std::vector<double>& Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Layers

Parameter::Parameter(std::string n, Tensor t)
    : name(std::move(n)), value(std::move(t)), m(value.size(), 0.0), v(value.size(), 0.0) {}

Linear::Linear(const std::string& name, std::size_t c_in, std::size_t c_out)
    : weight(name + ".weight", Tensor({c_out, c_in}, 0.0)), bias(name + ".bias", Tensor({c_out}, 0.0)) {}

void Linear::init_uniform(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : weight.value.values()) w = dist(rng);
  for (double& b : bias.value.values()) b = dist(rng);
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

ResBlock::ResBlock(const std::string& name, std::size_t c_in, std::size_t c_out, bool relu_out)
    : conv1(name + ".conv1", c_in, c_out),
      conv2(name + ".conv2", c_out, c_out),
      has_proj(c_in != c_out),
      output_relu(relu_out) {
  if (has_proj) proj = Linear(name + ".proj", c_in, c_out);
}

void ResBlock::init_uniform(std::mt19937_64& rng) {
  conv1.init_uniform(rng);
  conv2.init_uniform(rng);
  if (has_proj) proj.init_uniform(rng);
}

void ResBlock::collect(std::vector<Parameter*>& out) {
  conv1.collect(out);
  conv2.collect(out);
  if (has_proj) proj.collect(out);
}

// ---------------------------------------------------------------------------
// Graph

void Graph::check_live() const {
  require(!consumed_, NnError::Kind::kGraphConsumed, "graph already consumed by backward()");
}

Graph::Node& Graph::node(Var v) {
  check_live();
  require(v.id < nodes_.size(), NnError::Kind::kOutOfRange, "unknown graph variable");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const {
  check_live();
  require(v.id < nodes_.size(), NnError::Kind::kOutOfRange, "unknown graph variable");
  return nodes_[v.id].value;
}

std::vector<double>& Graph::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Graph::Var Graph::push(Tensor value, std::function<void(Graph&, std::size_t)> backprop) {
  check_live();
  require(value.all_finite(), NnError::Kind::kNonFinite, "non-finite value in forward pass");
  nodes_.push_back(Node{std::move(value), {}, std::move(backprop)});
  return Var{nodes_.size() - 1};
}

Graph::Var Graph::constant(Tensor value) { return push(std::move(value), nullptr); }

Graph::Var Graph::linear(Var x, Linear& layer) {
  const Tensor& in = value(x);
  const std::size_t c_in = layer.in_channels();
  const std::size_t c_out = layer.out_channels();
  if (in.cols() != c_in) {
    throw NnError(NnError::Kind::kShapeMismatch,
                  "linear expects " + std::to_string(c_in) + " channels, got " + shape_str(in.shape()));
  }
  const std::size_t k = in.rows();
  Tensor out = Tensor::matrix(k, c_out);
  const double* w = layer.weight.value.storage().data();
  const double* b = layer.bias.value.storage().data();
  const double* xv = in.storage().data();
  double* y = out.storage().data();
  // Transposed weights let the inner loop run over outputs; each output still
  // accumulates b + w0 x0 + w1 x1 + ... in input order.
  std::vector<double> wt(c_in * c_out);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t i = 0; i < c_in; ++i) wt[i * c_out + o] = w[o * c_in + i];
  }
  for (std::size_t r = 0; r < k; ++r) {
    const double* xr = xv + r * c_in;
    double* yr = y + r * c_out;
    std::copy(b, b + c_out, yr);
    for (std::size_t i = 0; i < c_in; ++i) {
      const double xi = xr[i];
      const double* wi = wt.data() + i * c_out;
#pragma GCC ivdep
      for (std::size_t o = 0; o < c_out; ++o) yr[o] += wi[o] * xi;
    }
  }
  Linear* lp = &layer;
  const std::size_t xid = x.id;
  return push(std::move(out), [lp, xid, k, c_in, c_out](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    const Tensor& xin = g.nodes_[xid].value;
    double* gw = lp->weight.grad().data();
    double* gb = lp->bias.grad().data();
    const double* w = lp->weight.value.storage().data();
    const double* xv = xin.storage().data();
    double* gx = g.grad_of(xid).data();
    for (std::size_t r = 0; r < k; ++r) {
      const double* xr = xv + r * c_in;
      double* gxr = gx + r * c_in;
      for (std::size_t o = 0; o < c_out; ++o) {
        const double go = gout[r * c_out + o];
        if (go == 0.0) continue;
        gb[o] += go;
        double* gwo = gw + o * c_in;
        const double* wo = w + o * c_in;
#pragma GCC ivdep
        for (std::size_t i = 0; i < c_in; ++i) {
          gwo[i] += go * xr[i];
          gxr[i] += go * wo[i];
        }
      }
    }
  });
}

Graph::Var Graph::relu(Var x) {
  Tensor out = value(x);
  for (double& v : out.values()) {
    if (record_branches_) fold_branch(v > 0.0 ? 1 : 2);
    v = v > 0.0 ? v : 0.0;
  }
  const std::size_t xid = x.id;
  return push(std::move(out), [xid](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    const auto& xin = g.nodes_[xid].value;
    auto& gx = g.grad_of(xid);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < gout.size(); ++i) {
      if (xin[i] > 0.0) gx[i] += gout[i];
    }
  });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Graph::Var Graph::sigmoid(Var x) {
  Tensor out = value(x);
  for (double& v : out.values()) v = nn::sigmoid(v);
  const std::size_t xid = x.id;
  return push(std::move(out), [xid](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    const auto& y = g.nodes_[self].value;
    auto& gx = g.grad_of(xid);
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * y[i] * (1.0 - y[i]);
  });
}

Graph::Var Graph::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require(va.size() == vb.size() && va.cols() == vb.cols(), NnError::Kind::kShapeMismatch,
          "add: " + shape_str(va.shape()) + " vs " + shape_str(vb.shape()));
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const std::size_t aid = a.id;
  const std::size_t bid = b.id;
  return push(std::move(out), [aid, bid](Graph& g, std::size_t self) {
    const auto gout = g.nodes_[self].grad;
    auto& ga = g.grad_of(aid);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    auto& gb = g.grad_of(bid);
    for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
  });
}

Graph::Var Graph::resblock(Var x, ResBlock& block) {
  Var h = relu(linear(x, block.conv1));
  h = linear(h, block.conv2);
  Var shortcut = block.has_proj ? linear(x, block.proj) : x;
  require(value(shortcut).cols() == value(h).cols(), NnError::Kind::kShapeMismatch,
          "resblock identity shortcut needs c_in == c_out");
  Var sum_var = add(h, shortcut);
  return block.output_relu ? relu(sum_var) : sum_var;
}

Graph::Var Graph::concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), NnError::Kind::kShapeMismatch, "concat of nothing");
  const std::size_t k = value(parts.front()).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    require(t.rows() == k, NnError::Kind::kShapeMismatch, "concat: row counts differ");
    widths.push_back(t.cols());
    total += t.cols();
  }
  Tensor out = Tensor::matrix(k, total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = value(parts[p]);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < widths[p]; ++c) out.at(r, offset + c) = t.at(r, c);
    }
    offset += widths[p];
  }
  std::vector<std::size_t> ids;
  for (Var p : parts) ids.push_back(p.id);
  return push(std::move(out), [ids, widths, k, total](Graph& g, std::size_t self) {
    const auto gout = g.nodes_[self].grad;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      auto& gp = g.grad_of(ids[p]);
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < widths[p]; ++c) gp[r * widths[p] + c] += gout[r * total + offset + c];
      }
      offset += widths[p];
    }
  });
}

Graph::Var Graph::gather_rows(Var x, std::span<const std::int64_t> index) {
  const Tensor& in = value(x);
  const std::size_t c = in.cols();
  Tensor out = Tensor::matrix(index.size(), c);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0) continue;
    require(static_cast<std::size_t>(index[r]) < in.rows(), NnError::Kind::kOutOfRange,
            "gather_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) = in.at(static_cast<std::size_t>(index[r]), j);
  }
  const std::size_t xid = x.id;
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return push(std::move(out), [xid, idx = std::move(idx), c](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto& gx = g.grad_of(xid);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      const auto src = static_cast<std::size_t>(idx[r]);
      for (std::size_t j = 0; j < c; ++j) gx[src * c + j] += gout[r * c + j];
    }
  });
}

Graph::Var Graph::segment_max(Var x, std::span<const std::int64_t> segment,
                              std::span<const double> empty_fill) {
  const Tensor& in = value(x);
  require(in.cols() == 1, NnError::Kind::kShapeMismatch, "segment_max expects one channel");
  require(segment.size() == in.rows(), NnError::Kind::kShapeMismatch, "segment ids per row");
  const std::size_t n = empty_fill.size();
  Tensor out = Tensor::matrix(n, 1);
  std::vector<std::int64_t> arg(n, -1);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] < 0) continue;
    const auto s = static_cast<std::size_t>(segment[r]);
    require(s < n, NnError::Kind::kOutOfRange, "segment id out of range");
    if (arg[s] < 0 || in[r] > out[s]) {
      out[s] = in[r];
      arg[s] = static_cast<std::int64_t>(r);
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (arg[s] < 0) out[s] = empty_fill[s];
  }
  if (record_branches_) {
    for (auto a : arg) fold_branch(static_cast<std::uint64_t>(a + 3));
  }
  const std::size_t xid = x.id;
  return push(std::move(out), [xid, arg = std::move(arg)](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto& gx = g.grad_of(xid);
    for (std::size_t s = 0; s < arg.size(); ++s) {
      if (arg[s] >= 0) gx[static_cast<std::size_t>(arg[s])] += gout[s];
    }
  });
}

Graph::Var Graph::segment_reduce(Var x, std::span<const std::int64_t> segment,
                                 std::span<const double> empty_fill, Reduction reduction) {
  if (reduction == Reduction::kMax) return segment_max(x, segment, empty_fill);
  const Tensor& in = value(x);
  require(in.cols() == 1, NnError::Kind::kShapeMismatch, "segment_reduce expects one channel");
  require(segment.size() == in.rows(), NnError::Kind::kShapeMismatch, "segment ids per row");
  const std::size_t n = empty_fill.size();
  Tensor out = Tensor::matrix(n, 1);
  std::vector<double> count(n, 0.0);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] < 0) continue;
    const auto s = static_cast<std::size_t>(segment[r]);
    require(s < n, NnError::Kind::kOutOfRange, "segment id out of range");
    out[s] += in[r];
    count[s] += 1.0;
  }
  std::vector<double> scale(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (count[s] == 0.0) {
      out[s] = empty_fill[s];
      continue;
    }
    scale[s] = reduction == Reduction::kMean ? 1.0 / count[s] : 1.0;
    out[s] *= scale[s];
  }
  const std::size_t xid = x.id;
  std::vector<std::int64_t> seg(segment.begin(), segment.end());
  return push(std::move(out), [xid, seg = std::move(seg), scale = std::move(scale)](Graph& g, std::size_t self) {
    const auto& gout = g.nodes_[self].grad;
    auto& gx = g.grad_of(xid);
    for (std::size_t r = 0; r < seg.size(); ++r) {
      if (seg[r] < 0) continue;
      const auto s = static_cast<std::size_t>(seg[r]);
      gx[r] += gout[s] * scale[s];
    }
  });
}

double focal_loss_value(double z, double t, double alpha, double gamma) {
  const double p = nn::sigmoid(z);
  const double log_p = -softplus(-z);
  const double log_q = -softplus(z);
  const double w_pos = alpha < 0.0 ? 1.0 : alpha;
  const double w_neg = alpha < 0.0 ? 1.0 : 1.0 - alpha;
  const double pos = -w_pos * std::pow(1.0 - p, gamma) * log_p;
  const double neg = -w_neg * std::pow(p, gamma) * log_q;
  return t * pos + (1.0 - t) * neg;
}

namespace {

double focal_grad(double z, double t, double alpha, double gamma) {
  const double p = sigmoid(z);
  const double q = 1.0 - p;
  const double log_p = -softplus(-z);
  const double log_q = -softplus(z);
  const double w_pos = alpha < 0.0 ? 1.0 : alpha;
  const double w_neg = alpha < 0.0 ? 1.0 : 1.0 - alpha;
  const double d_pos = w_pos * std::pow(q, gamma) * (gamma * p * log_p - q);
  const double d_neg = w_neg * std::pow(p, gamma) * (p - gamma * q * log_q);
  return t * d_pos + (1.0 - t) * d_neg;
}

}  // namespace

Graph::Var Graph::focal_loss(Var logits, std::span<const double> targets, double alpha, double gamma) {
  const Tensor& z = value(logits);
  require(z.cols() == 1 && z.rows() == targets.size(), NnError::Kind::kShapeMismatch,
          "focal_loss expects rows x 1 logits and one target per row");
  require(!targets.empty(), NnError::Kind::kShapeMismatch, "focal_loss over zero rows");
  double acc = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) acc += focal_loss_value(z[r], targets[r], alpha, gamma);
  const double n = static_cast<double>(targets.size());
  Tensor out({1}, std::vector<double>{acc / n});
  const std::size_t zid = logits.id;
  std::vector<double> tgt(targets.begin(), targets.end());
  return push(std::move(out), [zid, tgt = std::move(tgt), alpha, gamma](Graph& g, std::size_t self) {
    const double go = g.nodes_[self].grad[0];
    const Tensor& zin = g.nodes_[zid].value;
    auto& gz = g.grad_of(zid);
    const double n = static_cast<double>(tgt.size());
    for (std::size_t r = 0; r < tgt.size(); ++r) gz[r] += go * focal_grad(zin[r], tgt[r], alpha, gamma) / n;
  });
}

Graph::Var Graph::sum(Var x) {
  const Tensor& in = value(x);
  Tensor out({1}, std::vector<double>{std::accumulate(in.values().begin(), in.values().end(), 0.0)});
  const std::size_t xid = x.id;
  return push(std::move(out), [xid](Graph& g, std::size_t self) {
    const double go = g.nodes_[self].grad[0];
    for (double& v : g.grad_of(xid)) v += go;
  });
}

Graph::Var Graph::sum_squares(Var x) {
  const Tensor& in = value(x);
  double acc = 0.0;
  for (double v : in.values()) acc += v * v;
  Tensor out({1}, std::vector<double>{acc});
  const std::size_t xid = x.id;
  return push(std::move(out), [xid](Graph& g, std::size_t self) {
    const double go = g.nodes_[self].grad[0];
    const Tensor& xin = g.nodes_[xid].value;
    auto& gx = g.grad_of(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * go * xin[i];
  });
}

void Graph::backward(Var loss) {
  check_live();
  require(loss.id < nodes_.size() && nodes_[loss.id].value.size() == 1, NnError::Kind::kShapeMismatch,
          "backward needs a scalar loss");
  grad_of(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, id);
  }
  nodes_.clear();
  nodes_.shrink_to_fit();
  consumed_ = true;
}

// ---------------------------------------------------------------------------
// Losses, optimizer, schedule

double l_add(std::span<const double> b_pred, std::span<const double> b_gt,
             std::span<const double> log_var) {
  require(b_pred.size() == b_gt.size() && b_pred.size() == log_var.size(),
          NnError::Kind::kShapeMismatch, "l_add: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < b_pred.size(); ++i) {
    acc += 0.5 * std::exp(-log_var[i]) * std::abs(b_gt[i] - b_pred[i]) + 0.5 * log_var[i];
  }
  return acc;
}

void Adam::step(std::span<Parameter* const> params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    auto& theta = p->value.storage();
    const auto& g = p->grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= lr * cfg_.weight_decay * theta[i];
      p->m[i] = cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g[i];
      p->v[i] = cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = p->m[i] / bc1;
      const double v_hat = p->v[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->value.grad().assign(p->value.size(), 0.0);
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, const OneCycleConfig& cfg) {
  require(step < total_steps, NnError::Kind::kOutOfRange,
          "one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
              std::to_string(total_steps) + ")");
  if (total_steps == 1) return cfg.initial_lr;
  const auto warm = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.pct_start * static_cast<double>(total_steps))));
  const double final_lr = cfg.initial_lr / cfg.final_div;
  const auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (step <= warm) {
    return cosine(cfg.initial_lr, cfg.max_lr, static_cast<double>(step) / static_cast<double>(warm));
  }
  const double frac = static_cast<double>(step - warm) / static_cast<double>(total_steps - 1 - warm);
  return cosine(cfg.max_lr, final_lr, frac);
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json parameters_to_json(std::span<Parameter* const> params) {
  nlohmann::json out = nlohmann::json::object();
  for (const Parameter* p : params) {
    out[p->name] = {{"shape", p->value.shape()},
                    {"values", std::vector<double>(p->value.values().begin(), p->value.values().end())},
                    {"m", p->m},
                    {"v", p->v}};
  }
  return out;
}

void parameters_from_json(const nlohmann::json& j, std::span<Parameter* const> params) {
  try {
    for (Parameter* p : params) {
      require(j.contains(p->name), NnError::Kind::kBadCheckpoint, "checkpoint lacks " + p->name);
      const auto& e = j.at(p->name);
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      require(shape == p->value.shape(), NnError::Kind::kBadCheckpoint,
              "shape mismatch for " + p->name + ": " + shape_str(shape) + " vs " +
                  shape_str(p->value.shape()));
      auto values = e.at("values").get<std::vector<double>>();
      auto m = e.at("m").get<std::vector<double>>();
      auto v = e.at("v").get<std::vector<double>>();
      require(values.size() == p->value.size() && m.size() == values.size() && v.size() == values.size(),
              NnError::Kind::kBadCheckpoint, "value count mismatch for " + p->name);
      std::copy(values.begin(), values.end(), p->value.values().begin());
      p->m = std::move(m);
      p->v = std::move(v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw NnError(NnError::Kind::kBadCheckpoint, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace umoe::nn
