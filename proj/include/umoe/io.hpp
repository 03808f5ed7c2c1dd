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

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "umoe/frame.hpp"

namespace umoe::io {

class IoError : public std::runtime_error {
 public:
  enum class Kind { kOpen, kWrite, kParse };

  IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// One frame per line:
// {"frame_id", "profile", "gt": [[7]], "calib": {"P": [12], "w", "h"},
//  "lidar": [{"samples": [{"box": [...], "probs": [...]}], "data_var": [...]}], "camera": [...]}
nlohmann::json frame_to_json(const Frame& frame);
/// Throws IoError(kParse) on schema violations.
Frame frame_from_json(const nlohmann::json& j);

void write_jsonl(const std::filesystem::path& path, std::span<const Frame> frames);
std::vector<Frame> read_jsonl(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, const std::string& text);

nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace umoe::io
