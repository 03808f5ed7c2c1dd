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

#include "umoe/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace umoe::fusion {

namespace {

using nn::Graph;
using nn::Tensor;

Graph::Reduction reduction_of(Aggregation a) {
  switch (a) {
    case Aggregation::kMax: return Graph::Reduction::kMax;
    case Aggregation::kMean: return Graph::Reduction::kMean;
    case Aggregation::kSum: return Graph::Reduction::kSum;
  }
  return Graph::Reduction::kMax;
}

void bad_config(bool ok, const std::string& msg) {
  if (!ok) throw FusionError(FusionError::Kind::kBadConfig, msg);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers with a strided split.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::int64_t> lidar_segments(const pairing::ProposalPairSet& pairs) {
  std::vector<std::int64_t> seg(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) seg[r] = static_cast<std::int64_t>(pairs.pairs[r].lidar_index);
  return seg;
}

std::vector<std::int64_t> camera_segments(const pairing::ProposalPairSet& pairs) {
  std::vector<std::int64_t> seg(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) seg[r] = pairs.pairs[r].camera_index;
  return seg;
}

// Plain-value pooling matching Graph::segment_reduce.
std::vector<double> pool(std::span<const double> values, std::span<const std::int64_t> seg,
                         std::vector<double> fill, Aggregation a) {
  const std::size_t n = fill.size();
  std::vector<double> acc(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t r = 0; r < seg.size(); ++r) {
    if (seg[r] < 0) continue;
    const auto s = static_cast<std::size_t>(seg[r]);
    if (a == Aggregation::kMax) {
      acc[s] = count[s] == 0 ? values[r] : std::max(acc[s], values[r]);
    } else {
      acc[s] += values[r];
    }
    ++count[s];
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (count[s] == 0) continue;
    fill[s] = a == Aggregation::kMean ? acc[s] / static_cast<double>(count[s]) : acc[s];
  }
  return fill;
}

Tensor column(std::span<const double> v) {
  return Tensor::matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kMax: return "max";
    case Aggregation::kMean: return "mean";
    case Aggregation::kSum: return "sum";
  }
  return "max";
}

Aggregation aggregation_from_string(std::string_view name) {
  if (name == "max") return Aggregation::kMax;
  if (name == "mean") return Aggregation::kMean;
  if (name == "sum") return Aggregation::kSum;
  throw FusionError(FusionError::Kind::kBadConfig,
                    "unknown aggregation '" + std::string(name) + "' (expected max, mean or sum)");
}

// ---------------------------------------------------------------------------
// Config

std::string FusionConfig::method_name() const {
  if (baseline) return "baseline";
  std::string name = "umoe";
  if (!use_dr) name += "-no-dr";
  if (!use_reg) name += "-no-reg";
  if (!use_moe) name += "-no-moe";
  return name;
}

void FusionConfig::validate() const {
  bad_config(epochs >= 1, "epochs must be >= 1");
  const double nms = effective_nms();
  bad_config(nms > 0.0 && nms <= 1.0, "nms_threshold must lie in (0, 1]");
  bad_config(distance_norm > 0.0, "distance_norm must be positive");
  bad_config(focal_gamma >= 0.0, "focal_gamma must be >= 0");
  bad_config(focal_alpha <= 1.0, "focal_alpha must be <= 1 (negative disables balancing)");
  bad_config(target_iou > 0.0 && target_iou <= 1.0, "target_iou must lie in (0, 1]");
  bad_config(schedule.initial_lr > 0.0 && schedule.max_lr >= schedule.initial_lr,
             "learning rates must satisfy 0 < initial <= max");
  bad_config(schedule.pct_start > 0.0 && schedule.pct_start < 1.0, "pct_start must lie in (0, 1)");
  bad_config(schedule.final_div >= 1.0, "final_div must be >= 1");
  bad_config(adam.weight_decay >= 0.0, "weight_decay must be >= 0");
  bad_config(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
             "Adam betas must lie in [0, 1)");
  bad_config(adam.eps > 0.0, "Adam eps must be positive");
}

nlohmann::json FusionConfig::to_json() const {
  nlohmann::json j;
  j["baseline"] = baseline;
  j["use_dr"] = use_dr;
  j["use_reg"] = use_reg;
  j["use_moe"] = use_moe;
  j["nms_threshold"] = effective_nms();
  j["distance_norm"] = distance_norm;
  j["focal_alpha"] = focal_alpha;
  j["focal_gamma"] = focal_gamma;
  j["target_iou"] = target_iou;
  j["pairing"] = pairing.mode == pairing::PairingMode::kSparse ? "sparse" : "full";
  j["aggregation"] = std::string(to_string(aggregation));
  j["epochs"] = epochs;
  j["lr_init"] = schedule.initial_lr;
  j["lr_max"] = schedule.max_lr;
  j["pct_start"] = schedule.pct_start;
  j["final_div"] = schedule.final_div;
  j["weight_decay"] = adam.weight_decay;
  j["beta1"] = adam.beta1;
  j["beta2"] = adam.beta2;
  j["eps"] = adam.eps;
  j["seed"] = seed;
  return j;
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
  FusionConfig c;
  try {
    c.baseline = j.value("baseline", c.baseline);
    c.use_dr = j.value("use_dr", c.use_dr);
    c.use_reg = j.value("use_reg", c.use_reg);
    c.use_moe = j.value("use_moe", c.use_moe);
    if (j.contains("nms_threshold") && !j.at("nms_threshold").is_null()) {
      c.nms_threshold = j.at("nms_threshold").get<double>();
    }
    c.distance_norm = j.value("distance_norm", c.distance_norm);
    c.focal_alpha = j.value("focal_alpha", c.focal_alpha);
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    c.target_iou = j.value("target_iou", c.target_iou);
    const std::string mode = j.value("pairing", std::string("sparse"));
    bad_config(mode == "sparse" || mode == "full", "pairing must be 'sparse' or 'full'");
    c.pairing.mode = mode == "sparse" ? pairing::PairingMode::kSparse : pairing::PairingMode::kFullProduct;
    c.aggregation = aggregation_from_string(j.value("aggregation", std::string("max")));
    c.epochs = j.value("epochs", c.epochs);
    c.schedule.initial_lr = j.value("lr_init", c.schedule.initial_lr);
    c.schedule.max_lr = j.value("lr_max", c.schedule.max_lr);
    c.schedule.pct_start = j.value("pct_start", c.schedule.pct_start);
    c.schedule.final_div = j.value("final_div", c.schedule.final_div);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FusionError(FusionError::Kind::kBadConfig, std::string("fusion config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Networks

UmoeNetwork::UmoeNetwork()
    : expert_lidar{nn::ResBlock("umoe.expert_lidar.0", 3, 9), nn::ResBlock("umoe.expert_lidar.1", 9, 18),
                   nn::ResBlock("umoe.expert_lidar.2", 18, 18)},
      expert_camera{nn::ResBlock("umoe.expert_camera.0", 3, 9), nn::ResBlock("umoe.expert_camera.1", 9, 18),
                    nn::ResBlock("umoe.expert_camera.2", 18, 18)},
      // No output ReLU: it would pin the sigmoid to >= 0.5.
      gate_lidar("umoe.gate_lidar", 36, 1, false),
      gate_camera("umoe.gate_camera", 36, 1, false) {}

void UmoeNetwork::init_uniform(std::mt19937_64& rng) {
  for (auto& b : expert_lidar) b.init_uniform(rng);
  for (auto& b : expert_camera) b.init_uniform(rng);
  gate_lidar.init_uniform(rng);
  gate_camera.init_uniform(rng);
}

void UmoeNetwork::collect(std::vector<nn::Parameter*>& out) {
  for (auto& b : expert_lidar) b.collect(out);
  for (auto& b : expert_camera) b.collect(out);
  gate_lidar.collect(out);
  gate_camera.collect(out);
}

ClocsHead::ClocsHead(std::size_t in_channels) {
  blocks.emplace_back("clocs.0", in_channels, 18);
  blocks.emplace_back("clocs.1", 18, 36);
  blocks.emplace_back("clocs.2", 36, 36);
  blocks.emplace_back("clocs.3", 36, 1, false);
}

void ClocsHead::init_uniform(std::mt19937_64& rng) {
  for (auto& b : blocks) b.init_uniform(rng);
}

void ClocsHead::collect(std::vector<nn::Parameter*>& out) {
  for (auto& b : blocks) b.collect(out);
}

GateScores umoe_forward(Graph& g, UmoeNetwork& net, Graph::Var t_lidar, Graph::Var t_camera) {
  if (g.value(t_lidar).cols() != 3 || g.value(t_camera).cols() != 3 ||
      g.value(t_lidar).rows() != g.value(t_camera).rows()) {
    throw FusionError(FusionError::Kind::kShapeMismatch, "UMoE inputs must both be K x 3");
  }
  Graph::Var f_lidar = t_lidar;
  for (auto& b : net.expert_lidar) f_lidar = g.resblock(f_lidar, b);
  Graph::Var f_camera = t_camera;
  for (auto& b : net.expert_camera) f_camera = g.resblock(f_camera, b);
  const Graph::Var parts[] = {f_lidar, f_camera};
  const Graph::Var joint = g.concat_channels(parts);
  return {g.sigmoid(g.resblock(joint, net.gate_lidar)), g.sigmoid(g.resblock(joint, net.gate_camera))};
}

SubstitutedScores substitute_scores(const pairing::ProposalPairSet& pairs, std::span<const double> s_lidar,
                                    std::span<const double> s_camera,
                                    std::span<const uncertainty::ScoredProposal> lidar,
                                    std::span<const uncertainty::ScoredProposal> camera,
                                    Aggregation aggregation) {
  if (s_lidar.size() != pairs.size() || s_camera.size() != pairs.size() || lidar.size() != pairs.num_lidar ||
      camera.size() != pairs.num_camera) {
    throw FusionError(FusionError::Kind::kShapeMismatch, "substitute_scores: size mismatch");
  }
  std::vector<double> fill_l(lidar.size());
  for (std::size_t i = 0; i < lidar.size(); ++i) fill_l[i] = lidar[i].s;
  std::vector<double> fill_c(camera.size());
  for (std::size_t j = 0; j < camera.size(); ++j) fill_c[j] = camera[j].s;
  const auto seg_l = lidar_segments(pairs);
  const auto seg_c = camera_segments(pairs);
  return {pool(s_lidar, seg_l, std::move(fill_l), aggregation),
          pool(s_camera, seg_c, std::move(fill_c), aggregation)};
}

std::vector<double> pool_fused_scores(const pairing::ProposalPairSet& pairs, std::span<const double> pair_logits,
                                      Aggregation aggregation) {
  if (pair_logits.size() != pairs.size()) {
    throw FusionError(FusionError::Kind::kShapeMismatch, "one logit per pair expected");
  }
  const auto seg = lidar_segments(pairs);
  auto pooled = pool(pair_logits, seg, std::vector<double>(pairs.num_lidar, 0.0), aggregation);
  for (double& v : pooled) v = nn::sigmoid(v);
  return pooled;
}

// ---------------------------------------------------------------------------
// Data preparation

std::vector<double> assign_targets(std::span<const geometry::Box3D> proposals,
                                   std::span<const geometry::Box3D> gt, double threshold) {
  struct Candidate {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double iou = geometry::iou_3d(proposals[p], gt[g]);
      if (iou >= threshold) candidates.push_back({iou, p, g});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.iou > b.iou; });
  std::vector<double> labels(proposals.size(), 0.0);
  std::vector<bool> gt_used(gt.size(), false);
  for (const auto& c : candidates) {
    if (labels[c.p] == 1.0 || gt_used[c.g]) continue;
    labels[c.p] = 1.0;
    gt_used[c.g] = true;
  }
  return labels;
}

PreparedFrame prepare_frame(const Frame& frame, const uncertainty::ValidationStats& stats,
                            const FusionConfig& cfg, const uncertainty::ScoringConfig& scoring) {
  PreparedFrame out;
  out.frame_id = frame.frame_id;
  out.lidar = uncertainty::score_proposals(frame.lidar_proposals, stats, scoring);
  out.camera = uncertainty::score_proposals(frame.camera_proposals, stats, scoring);
  out.pairs = pairing::build_pairs(out.lidar, out.camera, frame.calib, cfg.pairing, frame.frame_id);
  std::vector<geometry::Box3D> boxes;
  boxes.reserve(out.lidar.size());
  for (const auto& p : out.lidar) boxes.push_back(p.box3d());
  out.targets = assign_targets(boxes, frame.gt_boxes, cfg.target_iou);
  return out;
}

std::vector<PreparedFrame> prepare_frames(std::span<const Frame> frames,
                                          const uncertainty::ValidationStats& stats,
                                          const FusionConfig& cfg, const uncertainty::ScoringConfig& scoring,
                                          std::size_t threads) {
  std::vector<PreparedFrame> out(frames.size());
  parallel_for(frames.size(), threads,
               [&](std::size_t i, std::size_t) { out[i] = prepare_frame(frames[i], stats, cfg, scoring); });
  return out;
}

// ---------------------------------------------------------------------------
// Model

FusionModel::FusionModel(FusionConfig cfg) : cfg_(std::move(cfg)), head_(cfg_.head_input_channels()) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  head_.init_uniform(rng);
  umoe_.init_uniform(rng);
}

std::vector<nn::Parameter*> FusionModel::parameters() {
  std::vector<nn::Parameter*> out;
  if (!cfg_.baseline && cfg_.use_moe) umoe_.collect(out);
  head_.collect(out);
  return out;
}

Graph::Var FusionModel::forward(Graph& g, const PreparedFrame& f) {
  const auto& pairs = f.pairs;
  const std::size_t k = pairs.size();
  if (k == 0) throw FusionError(FusionError::Kind::kShapeMismatch, "forward over a frame without LiDAR proposals");
  const auto seg_l = lidar_segments(pairs);
  const auto seg_c = camera_segments(pairs);

  std::vector<double> iou(k);
  std::vector<double> dist(k);
  for (std::size_t r = 0; r < k; ++r) {
    iou[r] = pairs.pairs[r].image_iou;
    dist[r] = pairs.pairs[r].distance_m / cfg_.distance_norm;
  }

  Graph::Var head_in{};
  if (cfg_.baseline || !cfg_.use_moe) {
    const std::size_t c = cfg_.head_input_channels();
    Tensor t = Tensor::matrix(k, c);
    for (std::size_t r = 0; r < k; ++r) {
      const auto& l = pairs.lidar_channels[r];
      const auto& cam = pairs.camera_channels[r];
      t.at(r, 0) = iou[r];
      t.at(r, 1) = cam[0];
      t.at(r, 2) = l[0];
      t.at(r, 3) = dist[r];
      if (c == 8) {
        t.at(r, 4) = cfg_.use_dr ? cam[1] : 0.0;
        t.at(r, 5) = cfg_.use_reg ? cam[2] : 0.0;
        t.at(r, 6) = cfg_.use_dr ? l[1] : 0.0;
        t.at(r, 7) = cfg_.use_reg ? l[2] : 0.0;
      }
    }
    head_in = g.constant(std::move(t));
  } else {
    auto inputs = pairing::tensor_channels(pairs, {cfg_.use_dr, cfg_.use_reg});
    const Graph::Var t_l = g.constant(std::move(inputs.lidar));
    const Graph::Var t_c = g.constant(std::move(inputs.camera));
    const GateScores gates = umoe_forward(g, umoe_, t_l, t_c);

    std::vector<double> fill_l(f.lidar.size());
    for (std::size_t i = 0; i < f.lidar.size(); ++i) fill_l[i] = f.lidar[i].s;
    std::vector<double> fill_c(f.camera.size());
    for (std::size_t j = 0; j < f.camera.size(); ++j) fill_c[j] = f.camera[j].s;
    const auto red = reduction_of(cfg_.aggregation);
    const Graph::Var sub_l = g.segment_reduce(gates.lidar, seg_l, fill_l, red);
    const Graph::Var sub_c = g.segment_reduce(gates.camera, seg_c, fill_c, red);

    const Graph::Var parts[] = {g.constant(column(iou)), g.gather_rows(sub_c, seg_c), g.gather_rows(sub_l, seg_l),
                                g.constant(column(dist))};
    head_in = g.concat_channels(parts);
  }

  Graph::Var x = head_in;
  for (auto& b : head_.blocks) x = g.resblock(x, b);
  return g.segment_reduce(x, seg_l, std::vector<double>(pairs.num_lidar, 0.0), reduction_of(cfg_.aggregation));
}

Graph::Var FusionModel::loss(Graph& g, const PreparedFrame& f) {
  if (f.targets.size() != f.lidar.size()) {
    throw FusionError(FusionError::Kind::kShapeMismatch, "frame targets do not match LiDAR proposals");
  }
  return g.focal_loss(forward(g, f), f.targets, cfg_.focal_alpha, cfg_.focal_gamma);
}

std::vector<double> FusionModel::fused_scores(const PreparedFrame& f) {
  if (f.lidar.empty()) return {};
  Graph g;
  const auto& logits = g.value(forward(g, f));
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nn::sigmoid(logits[i]);
  return out;
}

nlohmann::json FusionModel::to_json() const {
  auto& self = const_cast<FusionModel&>(*this);
  const auto params = self.parameters();
  nlohmann::json j;
  j["format"] = "umoe-checkpoint";
  j["version"] = kCheckpointVersion;
  j["method"] = cfg_.method_name();
  j["config"] = cfg_.to_json();
  j["parameters"] = nn::parameters_to_json(params);
  return j;
}

FusionModel FusionModel::from_json(const nlohmann::json& j) {
  const auto bad = [](const std::string& msg) { throw FusionError(FusionError::Kind::kBadCheckpoint, msg); };
  if (!j.is_object() || j.value("format", std::string()) != "umoe-checkpoint") bad("not a fusion checkpoint");
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != kCheckpointVersion) {
    bad("unsupported checkpoint version (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (!j.contains("config") || !j.contains("parameters")) bad("checkpoint lacks config or parameters");
  FusionConfig cfg;
  try {
    cfg = FusionConfig::from_json(j.at("config"));
  } catch (const FusionError& e) {
    bad(e.what());
  }
  FusionModel model(cfg);
  const auto params = model.parameters();
  try {
    nn::parameters_from_json(j.at("parameters"), params);
  } catch (const nn::NnError& e) {
    bad(e.what());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<Detection> infer(FusionModel& model, const PreparedFrame& f) {
  const auto scores = model.fused_scores(f);
  std::vector<geometry::ScoredBox> boxes;
  boxes.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) boxes.push_back({f.lidar[i].box3d(), scores[i]});
  std::vector<Detection> out;
  for (std::size_t i : geometry::nms(boxes, model.config().effective_nms())) {
    out.push_back({boxes[i].box, boxes[i].score, f.frame_id});
  }
  return out;
}

std::vector<Detection> baseline_infer(FusionModel& model, const PreparedFrame& f) {
  if (!model.config().baseline) {
    throw FusionError(FusionError::Kind::kBadConfig, "baseline_infer needs a baseline model");
  }
  return infer(model, f);
}

std::vector<Detection> infer_all(const FusionModel& model, std::span<const PreparedFrame> frames,
                                 std::size_t threads) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(frames.size(), 1));
  // Each worker owns a copy: graph construction records parameter addresses.
  std::vector<FusionModel> replicas(threads, model);
  std::vector<std::vector<Detection>> per_frame(frames.size());
  parallel_for(frames.size(), threads,
               [&](std::size_t i, std::size_t w) { per_frame[i] = infer(replicas[w], frames[i]); });
  std::vector<Detection> out;
  for (auto& dets : per_frame) out.insert(out.end(), dets.begin(), dets.end());
  return out;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(std::span<const PreparedFrame> train_frames, std::span<const PreparedFrame> val_prepared,
                  std::span<const Frame> val_frames, const FusionConfig& cfg, std::size_t threads) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train_frames.size(); ++i) {
    if (!train_frames[i].lidar.empty()) usable.push_back(i);
  }
  if (usable.empty()) {
    throw FusionError(FusionError::Kind::kEmptyDataset, "training set has no frame with LiDAR proposals");
  }

  FusionModel model(cfg);
  const auto params = model.parameters();
  nn::Adam adam(cfg.adam);
  const std::size_t total = cfg.epochs * usable.size();

  TrainResult result{model, {}, 0, 0};
  double best = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      0x5u, static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t idx : order) {
      double value = 0.0;
      try {
        Graph g;
        const Graph::Var l = model.loss(g, train_frames[idx]);
        value = g.value(l)[0];
        g.backward(l);
      } catch (const nn::NnError& e) {
        if (e.kind() != nn::NnError::Kind::kNonFinite) throw;
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", step " << step << " (frame "
            << train_frames[idx].frame_id << ")";
        throw FusionError(FusionError::Kind::kNonFiniteLoss, msg.str());
      }
      lr = nn::one_cycle_lr(step, total, cfg.schedule);
      adam.step(params, lr);
      nn::zero_grads(params);
      for (const nn::Parameter* p : params) {
        if (!p->value.all_finite()) {
          std::ostringstream msg;
          msg << "non-finite parameter " << p->name << " at epoch " << epoch << ", step " << step;
          throw FusionError(FusionError::Kind::kNonFiniteLoss, msg.str());
        }
      }
      loss_sum += value;
      ++step;
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.loss = loss_sum / static_cast<double>(order.size());
    row.lr = lr;
    const auto dets = infer_all(model, val_prepared, threads);
    row.val_ap = eval::ap_3d(dets, val_frames);
    result.log.push_back(row);

    const auto mod = row.val_ap.moderate();
    if (mod) {
      if (!have_best || *mod > best) {
        best = *mod;
        have_best = true;
        result.model = model;
        result.best_epoch = epoch;
      }
    } else if (!have_best) {
      // Without validation ground truth the last snapshot is kept.
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  result.steps = step;
  return result;
}

std::string train_log_csv(std::span<const TrainLogRow> log) {
  std::string out = "epoch,loss,val_AP_easy,val_AP_mod,val_AP_hard,lr\n";
  char buf[64];
  for (const auto& row : log) {
    out += std::to_string(row.epoch);
    std::snprintf(buf, sizeof buf, ",%.9g", row.loss);
    out += buf;
    for (const auto& ap : {row.val_ap.easy(), row.val_ap.moderate(), row.val_ap.hard()}) {
      out += ",";
      if (ap) {
        std::snprintf(buf, sizeof buf, "%.4f", *ap);
        out += buf;
      }
    }
    std::snprintf(buf, sizeof buf, ",%.9g\n", row.lr);
    out += buf;
  }
  return out;
}

}  // namespace umoe::fusion
