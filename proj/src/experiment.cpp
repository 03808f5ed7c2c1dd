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

#include "umoe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "umoe/io.hpp"

namespace umoe::experiment {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kProfileBlock = 1'000'000;
constexpr std::uint64_t kHeldOutShift = 500'000;

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_profile(const std::string& name) {
  try {
    (void)simgen::profile_by_name(name);
  } catch (const simgen::SimError& e) {
    throw ConfigError(e.what());
  }
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<Frame> load_split(const fs::path& data_dir, const std::string& profile, const std::string& split) {
  const fs::path path = data_dir / profile / (split + ".jsonl");
  if (!fs::exists(path)) throw MissingInput("missing split " + path.string());
  return io::read_jsonl(path);
}

uncertainty::ValidationStats load_stats(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput("missing validation statistics " + path.string());
  try {
    return uncertainty::ValidationStats::from_json(io::read_text(path));
  } catch (const uncertainty::UncertaintyError& e) {
    throw MissingInput(path.string() + ": " + e.what());
  }
}

simgen::SimConfig sim_for(const ExperimentConfig& cfg, const std::string& profile, bool held_out) {
  simgen::SimConfig sim = cfg.sim;
  sim.frame_id_offset = profile_frame_offset(profile, held_out);
  return sim;
}

const std::set<std::string> kConfigKeys = {
    "seed",        "profiles",    "train_profiles", "n_frames", "train_frames", "test_frames",
    "runs",        "split",       "threads",        "fusion",   "data_dir",     "out_dir",
    "stats",       "checkpoint",  "data_variance",  "data_variance_samples"};

}  // namespace

// ---------------------------------------------------------------------------
// Config

fs::path ExperimentConfig::resolved_stats() const {
  return stats_path.empty() ? out_dir / "stats.json" : stats_path;
}

fs::path ExperimentConfig::resolved_checkpoint() const {
  return checkpoint_path.empty() ? out_dir / fusion.method_name() / "checkpoint.json" : checkpoint_path;
}

void ExperimentConfig::validate() const {
  check(!profiles.empty(), "at least one profile is required");
  for (const auto& p : profiles) check_profile(p);
  check(!train_profiles.empty(), "at least one training profile is required");
  for (const auto& p : train_profiles) check_profile(p);
  check(n_frames >= 1 && n_frames < kHeldOutShift, "n_frames must lie in [1, 500000)");
  check(train_frames >= 1 && train_frames < kHeldOutShift, "train_frames must lie in [1, 500000)");
  check(test_frames >= 1 && test_frames < kHeldOutShift, "test_frames must lie in [1, 500000)");
  check(runs >= 2, "runs must be >= 2 for a paired test");
  check(split == "train" || split == "val" || split == "test", "split must be train, val or test");
  check(threads >= 1 && threads <= 256, "threads must lie in [1, 256]");
  check(scoring.data_variance_samples >= 1, "data_variance_samples must be >= 1");
  try {
    fusion.validate();
  } catch (const fusion::FusionError& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["profiles"] = profiles;
  j["train_profiles"] = train_profiles;
  j["n_frames"] = n_frames;
  j["train_frames"] = train_frames;
  j["test_frames"] = test_frames;
  j["runs"] = runs;
  j["split"] = split;
  j["threads"] = threads;
  j["fusion"] = fusion.to_json();
  j["data_dir"] = data_dir.string();
  j["out_dir"] = out_dir.string();
  j["data_variance"] =
      scoring.data_variance_mode == uncertainty::DataVarianceMode::kDeterministic ? "deterministic" : "sampled";
  j["data_variance_samples"] = scoring.data_variance_samples;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check(j.is_object(), "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    check(kConfigKeys.count(key) == 1, "unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.profiles = j.value("profiles", c.profiles);
    c.train_profiles = j.value("train_profiles", c.train_profiles);
    c.n_frames = j.value("n_frames", c.n_frames);
    c.train_frames = j.value("train_frames", c.train_frames);
    c.test_frames = j.value("test_frames", c.test_frames);
    c.runs = j.value("runs", c.runs);
    c.split = j.value("split", c.split);
    c.threads = j.value("threads", c.threads);
    if (j.contains("fusion")) c.fusion = fusion::FusionConfig::from_json(j.at("fusion"));
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.out_dir = j.value("out_dir", c.out_dir.string());
    c.stats_path = j.value("stats", std::string());
    c.checkpoint_path = j.value("checkpoint", std::string());
    const std::string mode = j.value("data_variance", std::string("deterministic"));
    check(mode == "deterministic" || mode == "sampled", "data_variance must be deterministic or sampled");
    c.scoring.data_variance_mode = mode == "deterministic" ? uncertainty::DataVarianceMode::kDeterministic
                                                           : uncertainty::DataVarianceMode::kSampled;
    c.scoring.data_variance_samples = j.value("data_variance_samples", c.scoring.data_variance_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const fusion::FusionError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::uint64_t profile_frame_offset(const std::string& profile, bool held_out) {
  const auto names = simgen::profile_names();
  const auto it = std::find(names.begin(), names.end(), profile);
  if (it == names.end()) check_profile(profile);
  const auto index = static_cast<std::uint64_t>(it - names.begin());
  return index * kProfileBlock + (held_out ? kHeldOutShift : 0);
}

// ---------------------------------------------------------------------------
// In-memory experiments

ExperimentData build_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::vector<std::string>& test_profiles) {
  ExperimentData data;
  const double per_profile =
      static_cast<double>(cfg.train_frames) / (0.7 * static_cast<double>(cfg.train_profiles.size()));
  const auto n = static_cast<std::size_t>(std::ceil(per_profile));
  bool have_clear_val = false;
  for (const auto& name : cfg.train_profiles) {
    const auto profile = simgen::profile_by_name(name);
    auto split = simgen::split_dataset(
        simgen::generate_dataset(seed, profile, n, sim_for(cfg, name, false), cfg.threads), seed);
    for (auto& f : split.train) data.train.push_back(std::move(f));
    if (name == "clear") {
      data.val = std::move(split.val);
      have_clear_val = true;
    }
  }
  if (!have_clear_val) {
    // Validation always comes from clear conditions.
    const auto profile = simgen::profile_by_name("clear");
    data.val = simgen::split_dataset(
                   simgen::generate_dataset(seed, profile, n, sim_for(cfg, "clear", false), cfg.threads), seed)
                   .val;
  }
  for (const auto& name : test_profiles) {
    data.test[name] = simgen::generate_dataset(seed, simgen::profile_by_name(name), cfg.test_frames,
                                               sim_for(cfg, name, true), cfg.threads);
  }
  data.stats = uncertainty::compute_validation_stats(data.val, cfg.scoring);
  return data;
}

MethodResult run_method(const ExperimentData& data, const fusion::FusionConfig& fusion_cfg,
                        const uncertainty::ScoringConfig& scoring, std::size_t threads) {
  const auto train = fusion::prepare_frames(data.train, data.stats, fusion_cfg, scoring, threads);
  const auto val = fusion::prepare_frames(data.val, data.stats, fusion_cfg, scoring, threads);
  MethodResult result{fusion_cfg.method_name(), {}, fusion::train(train, val, data.val, fusion_cfg, threads)};
  for (const auto& [name, frames] : data.test) {
    const auto prepared = fusion::prepare_frames(frames, data.stats, fusion_cfg, scoring, threads);
    const auto dets = fusion::infer_all(result.training.model, prepared, threads);
    result.test_ap[name] = eval::ap_3d(dets, frames);
  }
  return result;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string population_csv(const std::map<std::string, simgen::PopulationTable>& tables) {
  std::string out = "profile,modality,outcome,count,mean_u_cls,mean_dr_cls,mean_u_reg,mean_u_reg_raw\n";
  for (const auto& [profile, table] : tables) {
    for (Modality m : {Modality::kLidar, Modality::kCamera}) {
      for (bool tp : {true, false}) {
        out += profile + "," + std::string(to_string(m)) + "," + (tp ? "TP" : "FP");
        const auto& cell = table.at(m, tp);
        if (cell) {
          out += "," + std::to_string(cell->count) + "," + fmt(cell->mean_u_cls, "%.6g") + "," +
                 fmt(cell->mean_dr_cls, "%.6g") + "," + fmt(cell->mean_u_reg, "%.6g") + "," +
                 fmt(cell->mean_u_reg_raw, "%.6g");
        } else {
          out += ",0,,,,";
        }
        out += "\n";
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  for (const auto& name : cfg.profiles) {
    const auto profile = simgen::profile_by_name(name);
    auto split = simgen::split_dataset(
        simgen::generate_dataset(cfg.seed, profile, cfg.n_frames, sim_for(cfg, name, false), cfg.threads),
        cfg.seed);
    const std::pair<const char*, const std::vector<Frame>*> parts[] = {
        {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
    for (const auto& [split_name, frames] : parts) {
      const fs::path path = cfg.data_dir / name / (std::string(split_name) + ".jsonl");
      io::write_jsonl(path, *frames);
      err << name << "/" << split_name << ": " << frames->size() << " frames\n";
      out << path.string() << "\n";
    }
  }
}

void cmd_stats(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const auto clear_val = load_split(cfg.data_dir, "clear", "val");
  const auto stats = uncertainty::compute_validation_stats(clear_val, cfg.scoring);
  for (Modality m : {Modality::kLidar, Modality::kCamera}) {
    if (stats.at(m).fallback) {
      err << "warning: no " << to_string(m)
          << " true positives in the clear validation split; using fallback statistics\n";
    }
  }
  const fs::path stats_path = cfg.out_dir / "stats.json";
  io::write_text(stats_path, stats.to_json());
  out << stats_path.string() << "\n";

  std::map<std::string, simgen::PopulationTable> tables;
  for (const auto& name : cfg.profiles) {
    const auto frames = load_split(cfg.data_dir, name, "val");
    tables[name] = simgen::population_stats(frames, stats, cfg.scoring);
  }
  const fs::path pop_path = cfg.out_dir / "population.csv";
  io::write_text(pop_path, population_csv(tables));
  out << pop_path.string() << "\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const auto stats = load_stats(cfg.resolved_stats());
  std::vector<Frame> train_frames;
  for (const auto& name : cfg.profiles) {
    auto frames = load_split(cfg.data_dir, name, "train");
    for (auto& f : frames) train_frames.push_back(std::move(f));
  }
  const auto val_frames = load_split(cfg.data_dir, "clear", "val");
  const auto train = fusion::prepare_frames(train_frames, stats, cfg.fusion, cfg.scoring, cfg.threads);
  const auto val = fusion::prepare_frames(val_frames, stats, cfg.fusion, cfg.scoring, cfg.threads);
  const auto result = fusion::train(train, val, val_frames, cfg.fusion, cfg.threads);
  err << cfg.fusion.method_name() << ": " << result.steps << " steps, best epoch " << result.best_epoch << "\n";

  const fs::path dir = cfg.out_dir / cfg.fusion.method_name();
  const fs::path ckpt = cfg.checkpoint_path.empty() ? dir / "checkpoint.json" : cfg.checkpoint_path;
  io::write_text(ckpt, result.model.to_json().dump());
  const fs::path log = dir / "train_log.csv";
  io::write_text(log, fusion::train_log_csv(result.log));
  out << ckpt.string() << "\n" << log.string() << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const fs::path ckpt_path = cfg.resolved_checkpoint();
  if (!fs::exists(ckpt_path)) throw MissingInput("missing checkpoint " + ckpt_path.string());
  nlohmann::json j;
  try {
    j = io::read_json(ckpt_path);
  } catch (const io::IoError& e) {
    if (e.kind() != io::IoError::Kind::kParse) throw;
    throw fusion::FusionError(fusion::FusionError::Kind::kBadCheckpoint, e.what());
  }
  const auto model = fusion::FusionModel::from_json(j);
  const auto stats = load_stats(cfg.resolved_stats());

  std::string csv = eval::ap_csv_header() + "\n";
  for (const auto& name : cfg.profiles) {
    const auto frames = load_split(cfg.data_dir, name, cfg.split);
    const auto prepared = fusion::prepare_frames(frames, stats, model.config(), cfg.scoring, cfg.threads);
    const auto dets = fusion::infer_all(model, prepared, cfg.threads);
    const auto ap = eval::ap_3d(dets, frames);
    if (!ap.moderate()) err << "warning: " << name << "/" << cfg.split << " has no moderate ground truth\n";
    csv += eval::ap_csv_row(cfg.split, name, model.config().method_name(), ap) + "\n";
  }
  const fs::path path = cfg.out_dir / model.config().method_name() / ("ap_" + cfg.split + ".csv");
  io::write_text(path, csv);
  out << path.string() << "\n";
}

namespace {

struct SeedRuns {
  // method -> profile -> per-seed moderate AP
  std::map<std::string, std::map<std::string, std::vector<double>>> moderate;
};

SeedRuns run_seeds(const ExperimentConfig& cfg, const std::vector<fusion::FusionConfig>& methods,
                   const std::vector<std::string>& test_profiles, std::ostream& err) {
  SeedRuns runs;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const std::uint64_t seed = cfg.seed + r;
    const auto data = build_experiment_data(cfg, seed, test_profiles);
    for (auto method : methods) {
      method.seed = seed;
      const auto result = run_method(data, method, cfg.scoring, cfg.threads);
      for (const auto& name : test_profiles) {
        const auto& ap = result.test_ap.at(name);
        runs.moderate[result.method][name].push_back(ap.require(eval::Difficulty::kModerate));
      }
      err << "seed " << seed << " " << result.method << " done\n";
    }
  }
  return runs;
}

}  // namespace

void cmd_compare(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  fusion::FusionConfig umoe = cfg.fusion;
  umoe.baseline = false;
  fusion::FusionConfig base = cfg.fusion;
  base.baseline = true;
  base.nms_threshold.reset();
  const auto runs = run_seeds(cfg, {umoe, base}, cfg.profiles, err);
  const std::string a = umoe.method_name();
  const std::string b = base.method_name();

  std::string per_seed = "profile,seed," + a + "_moderate," + b + "_moderate\n";
  std::string summary = "profile,method,mean_moderate,std_moderate,n,mean_difference,t_statistic,p_value\n";
  for (const auto& name : cfg.profiles) {
    const auto& va = runs.moderate.at(a).at(name);
    const auto& vb = runs.moderate.at(b).at(name);
    for (std::size_t r = 0; r < va.size(); ++r) {
      per_seed += name + "," + std::to_string(cfg.seed + r) + "," + fmt(va[r]) + "," + fmt(vb[r]) + "\n";
    }
    const auto sig = eval::paired_significance(va, vb);
    for (const auto& [method, v] : {std::pair{a, va}, std::pair{b, vb}}) {
      summary += name + "," + method + "," + fmt(mean(v)) + "," + fmt(stddev(v)) + "," + std::to_string(v.size());
      if (method == a) {
        summary += "," + fmt(sig.mean_difference) + "," + fmt(sig.t_statistic, "%.6g") + "," +
                   fmt(sig.p_value, "%.6g");
      } else {
        summary += ",,,";
      }
      summary += "\n";
    }
  }
  const fs::path seeds_path = cfg.out_dir / "compare.csv";
  const fs::path summary_path = cfg.out_dir / "compare_summary.csv";
  io::write_text(seeds_path, per_seed);
  io::write_text(summary_path, summary);
  out << seeds_path.string() << "\n" << summary_path.string() << "\n";
}

void cmd_ablate(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  fusion::FusionConfig full = cfg.fusion;
  full.baseline = false;
  full.use_dr = full.use_reg = full.use_moe = true;
  auto no_dr = full;
  no_dr.use_dr = false;
  auto no_reg = full;
  no_reg.use_reg = false;
  auto no_moe = full;
  no_moe.use_moe = false;
  const std::vector<fusion::FusionConfig> methods{no_dr, no_reg, no_moe, full};
  const auto runs = run_seeds(cfg, methods, cfg.profiles, err);

  std::string csv = "profile,method,dr,reg,moe,mean_moderate,std_moderate";
  for (std::size_t r = 0; r < cfg.runs; ++r) csv += ",seed_" + std::to_string(cfg.seed + r);
  csv += "\n";
  for (const auto& name : cfg.profiles) {
    for (const auto& m : methods) {
      const auto& v = runs.moderate.at(m.method_name()).at(name);
      csv += name + "," + m.method_name() + "," + (m.use_dr ? "1" : "0") + "," + (m.use_reg ? "1" : "0") + "," +
             (m.use_moe ? "1" : "0") + "," + fmt(mean(v)) + "," + fmt(stddev(v));
      for (double x : v) csv += "," + fmt(x);
      csv += "\n";
    }
  }
  const fs::path path = cfg.out_dir / "ablation.csv";
  io::write_text(path, csv);
  out << path.string() << "\n";
}

}  // namespace umoe::experiment
