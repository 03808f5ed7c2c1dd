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

#include "umoe/io.hpp"

#include <fstream>
#include <sstream>

namespace umoe::io {

namespace {

nlohmann::json proposal_to_json(const McProposal& p) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : p.samples) samples.push_back({{"box", s.box}, {"probs", s.class_probs}});
  return {{"samples", std::move(samples)}, {"data_var", p.data_var}};
}

McProposal proposal_from_json(const nlohmann::json& j, Modality m) {
  McProposal p;
  p.modality = m;
  for (const auto& s : j.at("samples")) {
    p.samples.push_back({s.at("box").get<std::vector<double>>(), s.at("probs").get<std::vector<double>>()});
  }
  p.data_var = j.at("data_var").get<std::vector<double>>();
  p.validate();
  return p;
}

}  // namespace

nlohmann::json frame_to_json(const Frame& frame) {
  nlohmann::json gt = nlohmann::json::array();
  for (const auto& b : frame.gt_boxes) gt.push_back(b.to_array());
  nlohmann::json lidar = nlohmann::json::array();
  for (const auto& p : frame.lidar_proposals) lidar.push_back(proposal_to_json(p));
  nlohmann::json camera = nlohmann::json::array();
  for (const auto& p : frame.camera_proposals) camera.push_back(proposal_to_json(p));
  nlohmann::json j;
  j["frame_id"] = frame.frame_id;
  j["profile"] = frame.profile_tag;
  j["gt"] = std::move(gt);
  j["calib"] = {{"P", frame.calib.P}, {"w", frame.calib.image_width}, {"h", frame.calib.image_height}};
  j["lidar"] = std::move(lidar);
  j["camera"] = std::move(camera);
  return j;
}

Frame frame_from_json(const nlohmann::json& j) {
  try {
    Frame f;
    f.frame_id = j.at("frame_id").get<std::uint64_t>();
    f.profile_tag = j.value("profile", std::string("clear"));
    for (const auto& b : j.at("gt")) {
      const auto v = b.get<std::vector<double>>();
      f.gt_boxes.push_back(geometry::Box3D::from_span(v));
    }
    const auto& c = j.at("calib");
    f.calib = geometry::Calibration(c.at("P").get<std::array<double, 12>>(), c.at("w").get<double>(),
                                    c.at("h").get<double>());
    for (const auto& p : j.at("lidar")) f.lidar_proposals.push_back(proposal_from_json(p, Modality::kLidar));
    for (const auto& p : j.at("camera")) f.camera_proposals.push_back(proposal_from_json(p, Modality::kCamera));
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::kParse, std::string("frame record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::kParse, std::string("frame record: ") + e.what());
  }
}

void write_jsonl(const std::filesystem::path& path, std::span<const Frame> frames) {
  std::string text;
  for (const auto& f : frames) {
    text += frame_to_json(f).dump();
    text += '\n';
  }
  write_text(path, text);
}

std::vector<Frame> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Frame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      frames.push_back(frame_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(IoError::Kind::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(IoError::Kind::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return frames;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError(IoError::Kind::kWrite, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kOpen, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError(IoError::Kind::kWrite, "write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace umoe::io
