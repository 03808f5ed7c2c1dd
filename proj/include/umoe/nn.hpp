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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace umoe::nn {

class NnError : public std::runtime_error {
 public:
  enum class Kind { kShapeMismatch, kNonFinite, kGraphConsumed, kOutOfRange, kBadCheckpoint };

  NnError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Dense row-major array with up to three axes. Networks here treat every
/// tensor as rows x channels, where rows is the product of the leading axes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  /// 1 x rows x cols.
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<double>& storage() const { return values_; }

  /// Gradient slot, allocated (zeroed) on first access.
  std::vector<double>& grad();
  bool has_grad() const { return !grad_.empty(); }
  void zero_grad();

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> m;
  std::vector<double> v;

  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::vector<double>& grad() { return value.grad(); }
};

/// Per-position (1x1 convolution) affine map: y[k] = W x[k] + b, W is c_out x c_in.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t c_in, std::size_t c_out);

  std::size_t in_channels() const { return weight.value.cols(); }
  std::size_t out_channels() const { return weight.value.rows(); }

  /// Uniform(-1/sqrt(c_in), 1/sqrt(c_in)) for weights and bias.
  void init_uniform(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// ReLU(conv2(ReLU(conv1(x))) + proj(x)), proj identity when c_in == c_out.
/// Output blocks (output_relu = false) skip the final ReLU.
struct ResBlock {
  Linear conv1;
  Linear conv2;
  bool has_proj = false;
  Linear proj;
  bool output_relu = true;

  ResBlock() = default;
  ResBlock(const std::string& name, std::size_t c_in, std::size_t c_out, bool output_relu = true);

  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv1.out_channels(); }

  void init_uniform(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Reverse-mode tape. Nodes live until backward() consumes the graph.
class Graph {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Tensor value);

  Var linear(Var x, Linear& layer);
  Var resblock(Var x, ResBlock& block);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var concat_channels(std::span<const Var> parts);

  /// Row r of the result is row index[r] of x, or zeros when index[r] < 0.
  Var gather_rows(Var x, std::span<const std::int64_t> index);

  /// x is rows x 1. Output row s is the max of x over rows with segment == s;
  /// segments without rows take empty_fill[s] and carry no gradient. Negative
  /// segment ids are skipped.
  Var segment_max(Var x, std::span<const std::int64_t> segment, std::span<const double> empty_fill);

  enum class Reduction { kMax, kMean, kSum };
  /// segment_max generalized to mean and sum pooling; same empty-segment rule.
  Var segment_reduce(Var x, std::span<const std::int64_t> segment, std::span<const double> empty_fill,
                     Reduction reduction);

  /// Alpha-balanced sigmoid focal loss averaged over rows. alpha < 0 disables balancing.
  Var focal_loss(Var logits, std::span<const double> targets, double alpha, double gamma);

  Var sum(Var x);
  Var sum_squares(Var x);

  const Tensor& value(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  /// When on, every ReLU sign and max-pool winner is folded into
  /// branch_signature(), which identifies the piecewise-smooth region the
  /// evaluation fell in.
  void record_branches(bool on) { record_branches_ = on; }
  std::uint64_t branch_signature() const { return branch_signature_; }

  /// Accumulates d(loss)/d(theta) into every parameter reached; frees the graph.
  void backward(Var loss);
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Graph&, std::size_t)> backprop;
  };

  Var push(Tensor value, std::function<void(Graph&, std::size_t)> backprop);
  Node& node(Var v);
  std::vector<double>& grad_of(std::size_t id);
  void check_live() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
  void fold_branch(std::uint64_t v) { branch_signature_ = (branch_signature_ ^ v) * 0x100000001b3ULL; }

  bool record_branches_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

double sigmoid(double x);

/// Scalar focal loss term for one logit (same convention as Graph::focal_loss).
double focal_loss_value(double logit, double target, double alpha, double gamma);

/// Direct-modeling attenuated regression loss, summed over box elements:
/// 0.5 exp(-log_var) |b_gt - b| + 0.5 log_var.
double l_add(std::span<const double> b_pred, std::span<const double> b_gt,
             std::span<const double> log_var);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay and bias-corrected moments.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Parameter* const> params, double lr);
  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

void zero_grads(std::span<Parameter* const> params);

struct OneCycleConfig {
  double initial_lr = 6e-5;
  double max_lr = 6e-4;
  double pct_start = 0.3;
  double final_div = 25.0;
};

/// Cosine warm-up from initial to max over the first pct_start of the steps,
/// then cosine annealing to initial / final_div at the last step.
double one_cycle_lr(std::size_t step, std::size_t total_steps, const OneCycleConfig& cfg = {});

/// name -> {shape, values, m, v}.
nlohmann::json parameters_to_json(std::span<Parameter* const> params);
/// Throws NnError(kBadCheckpoint) on missing names or shape mismatch.
void parameters_from_json(const nlohmann::json& j, std::span<Parameter* const> params);

}  // namespace umoe::nn
