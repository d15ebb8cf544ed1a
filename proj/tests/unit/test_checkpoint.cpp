// Copyright 2026 The pipedec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pipedec/checkpoint.hpp"

using namespace pipedec;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pipedec_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("round trip preserves names, shapes, values and meta") {
  Parameter<float> a("layer.a", Tensor<float>({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}));
  Parameter<float> b("b", Tensor<float>({4}, -0.5f));
  const auto path = temp_file("rt.ckpt");
  save_checkpoint<float>(path, {&a, &b}, {{"note", "x"}});
  const auto ck = load_checkpoint<float>(path);
  CHECK(ck.meta["note"] == "x");
  CHECK(ck.stored_float_width == 4);
  REQUIRE(ck.find("layer.a"));
  CHECK(ck.find("layer.a")->value == a.value);
  CHECK(ck.find("b")->value == b.value);
  CHECK(ck.find("missing") == nullptr);
}

TEST_CASE("float width conversion") {
  Parameter<double> a("a", Tensor<double>({2}, std::vector<double>{0.25, 1e-3}));
  const auto path = temp_file("wide.ckpt");
  save_checkpoint<double>(path, {&a}, {});
  const auto narrow = load_checkpoint<float>(path);
  CHECK(narrow.stored_float_width == 8);
  CHECK(narrow.find("a")->value[0] == 0.25f);
  CHECK(narrow.find("a")->value[1] == doctest::Approx(1e-3));
}

TEST_CASE("corrupt files are rejected") {
  CHECK_THROWS_AS(load_checkpoint<float>(temp_file("absent.ckpt")), CheckpointError);
  const auto junk = temp_file("junk.ckpt");
  std::ofstream(junk) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint<float>(junk), CheckpointError);

  Parameter<float> a("a", Tensor<float>({64}, 1.f));
  const auto path = temp_file("trunc.ckpt");
  save_checkpoint<float>(path, {&a}, {});
  fs::resize_file(path, fs::file_size(path) - 16);
  CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointError);
}
