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

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "umoe/io.hpp"
#include "umoe/simgen.hpp"

namespace {

namespace fs = std::filesystem;
using namespace umoe;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("umoe_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void expect_same(const Frame& a, const Frame& b) {
  EXPECT_EQ(a.frame_id, b.frame_id);
  EXPECT_EQ(a.profile_tag, b.profile_tag);
  EXPECT_EQ(a.gt_boxes, b.gt_boxes);
  EXPECT_EQ(a.calib.P, b.calib.P);
  EXPECT_EQ(a.calib.image_width, b.calib.image_width);
  for (auto m : {Modality::kLidar, Modality::kCamera}) {
    ASSERT_EQ(a.proposals(m).size(), b.proposals(m).size());
    for (std::size_t i = 0; i < a.proposals(m).size(); ++i) {
      const auto& p = a.proposals(m)[i];
      const auto& q = b.proposals(m)[i];
      EXPECT_EQ(p.modality, q.modality);
      EXPECT_EQ(p.data_var, q.data_var);
      ASSERT_EQ(p.samples.size(), q.samples.size());
      for (std::size_t s = 0; s < p.samples.size(); ++s) {
        EXPECT_EQ(p.samples[s].box, q.samples[s].box);
        EXPECT_EQ(p.samples[s].class_probs, q.samples[s].class_probs);
      }
    }
  }
}

TEST(Jsonl, RoundTripIsExact) {
  TempDir dir;
  const auto frames = simgen::generate_dataset(4, simgen::profile_by_name("adversarial"), 12);
  const auto path = dir.path() / "nested" / "deeper" / "frames.jsonl";
  io::write_jsonl(path, frames);
  const auto back = io::read_jsonl(path);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) expect_same(frames[i], back[i]);
  // Second write of the reread frames is byte-identical.
  const auto again = dir.path() / "again.jsonl";
  io::write_jsonl(again, back);
  EXPECT_EQ(io::read_text(path), io::read_text(again));
}

TEST(Jsonl, ParseErrorsNameFileAndLine) {
  TempDir dir;
  const auto frames = simgen::generate_dataset(4, simgen::profile_by_name("clear"), 2);
  const auto path = dir.path() / "bad.jsonl";
  std::string text = io::frame_to_json(frames[0]).dump() + "\n{not json\n";
  io::write_text(path, text);
  try {
    io::read_jsonl(path);
    FAIL() << "expected a parse error";
  } catch (const io::IoError& e) {
    EXPECT_EQ(e.kind(), io::IoError::Kind::kParse);
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2"), std::string::npos) << e.what();
  }

  auto j = io::frame_to_json(frames[1]);
  j["lidar"][0]["samples"][0]["box"] = {1.0, 2.0};
  io::write_text(path, j.dump() + "\n");
  try {
    io::read_jsonl(path);
    FAIL() << "expected a schema error";
  } catch (const io::IoError& e) {
    EXPECT_EQ(e.kind(), io::IoError::Kind::kParse);
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:1"), std::string::npos) << e.what();
  }

  auto missing = io::frame_to_json(frames[1]);
  missing.erase("gt");
  EXPECT_THROW(io::frame_from_json(missing), io::IoError);
}

TEST(Jsonl, BlankLinesAreSkipped) {
  TempDir dir;
  const auto frames = simgen::generate_dataset(4, simgen::profile_by_name("clear"), 2);
  const auto path = dir.path() / "gaps.jsonl";
  io::write_text(path, io::frame_to_json(frames[0]).dump() + "\n\n" + io::frame_to_json(frames[1]).dump() + "\n");
  EXPECT_EQ(io::read_jsonl(path).size(), 2u);
}

TEST(Text, MissingFileIsOpenError) {
  TempDir dir;
  try {
    io::read_text(dir.path() / "absent.txt");
    FAIL();
  } catch (const io::IoError& e) {
    EXPECT_EQ(e.kind(), io::IoError::Kind::kOpen);
  }
}

TEST(Text, WriteCreatesDirectoriesAndReadJson) {
  TempDir dir;
  const auto path = dir.path() / "a" / "b" / "c.json";
  io::write_text(path, R"({"x": [1, 2]})");
  EXPECT_TRUE(fs::exists(path));
  EXPECT_EQ(io::read_json(path)["x"][1], 2);
  io::write_text(path, "{oops");
  try {
    io::read_json(path);
    FAIL();
  } catch (const io::IoError& e) {
    EXPECT_EQ(e.kind(), io::IoError::Kind::kParse);
  }
}

}  // namespace
