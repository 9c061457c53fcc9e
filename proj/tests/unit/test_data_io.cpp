// Copyright 2026 The metareg Authors
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

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include <unistd.h>

#include "metareg/io.hpp"
#include "metareg/losses.hpp"
#include "metareg/metrics.hpp"
#include "metareg/models.hpp"
#include "metareg/phantom.hpp"
#include "metareg/transforms.hpp"
#include "oracles.hpp"

using namespace metareg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("metareg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

IoError::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.kind();
  }
  FAIL("expected an IoError");
  return IoError::Kind::Write;
}

}  // namespace

TEST_CASE("gen_phantom_pair") {
  const Extent e{32, 32, 32};
  SUBCASE("fixed seed is reproducible") {
    CHECK(gen_phantom_pair(5, e, 2.0) == gen_phantom_pair(5, e, 2.0));
    CHECK_FALSE(gen_phantom_pair(5, e, 2.0).fixed.image == gen_phantom_pair(6, e, 2.0).fixed.image);
  }
  SUBCASE("zero magnitude gives identical images and a zero field") {
    const CasePair p = gen_phantom_pair(7, e, 0.0);
    CHECK(p.moving.image == p.fixed.image);
    CHECK(p.moving.gland_mask == p.fixed.gland_mask);
    CHECK(p.ground_truth_ddf == DisplacementField::zeros(e));
  }
  SUBCASE("ground-truth field agrees with the warp operator") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const CasePair p = gen_phantom_pair(seed, e, 2.0);
      CHECK(dice(warp_mask(p.moving.gland_mask, p.ground_truth_ddf), p.fixed.gland_mask) > 0.98);
      const Volume w = warp_volume(p.moving.image, p.ground_truth_ddf);
      double acc = 0;
      std::size_t n = 0;
      for (int z = 2; z < e.z - 2; ++z)
        for (int y = 2; y < e.y - 2; ++y)
          for (int x = 2; x < e.x - 2; ++x, ++n) {
            const double d = w.grid.at(x, y, z) - p.fixed.image.grid.at(x, y, z);
            acc += d * d;
          }
      CHECK(acc / double(n) < 1e-3);
      CHECK(dice(p.moving.gland_mask, p.fixed.gland_mask) < 1.0);
    }
  }
  SUBCASE("landmarks lie inside the grid") {
    const CasePair p = gen_phantom_pair(8, e, 2.0);
    CHECK(p.moving.landmarks.landmarks.size() == 3);
    CHECK_NOTHROW(validate(p.moving.landmarks, e, 0.8));
    CHECK_NOTHROW(validate(p.fixed.landmarks, e, 0.8));
  }
  CHECK_THROWS(gen_phantom_pair(1, {30, 32, 32}, 2.0));
}

TEST_CASE("split_dataset") {
  const Split s = split_dataset(28, 20.0 / 28.0, 9);
  CHECK(s.train.size() == 20);
  CHECK(s.test.size() == 8);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 28);
  CHECK(*all.rbegin() == 27);
  const Split t = split_dataset(28, 20.0 / 28.0, 9);
  CHECK(t.train == s.train);
  CHECK(t.test == s.test);
}

TEST_CASE("volume and field round trips are bit-exact") {
  TempDir dir;
  Rng rng(1);
  const Volume v{oracle::random_tensor<float>({5, 7, 3}, rng), 0.8};
  save_volume(dir.path / "v", v);
  CHECK(load_volume(dir.path / "v") == v);

  const DisplacementField f{oracle::random_tensor<float>({3, 5, 7, 3}, rng, -4, 4)};
  save_ddf(dir.path / "f", f);
  CHECK(load_ddf(dir.path / "f") == f);

  const LandmarkSet l{{{"apex", {1.0 / 3.0, 2.5, 7.125}, 2.0}, {"base", {0.1, 0.2, 0.3}, 1.5}}};
  save_landmarks(dir.path / "l.txt", l);
  CHECK(load_landmarks(dir.path / "l.txt") == l);

  const CasePair p = gen_phantom_pair(3, {16, 16, 16}, 2.0);
  save_case_pair(dir.path / "case", p);
  CHECK(load_case_pair(dir.path / "case") == p);
}

TEST_CASE("parameter blob and checkpoint round trips are bit-exact") {
  TempDir dir;
  Rng rng(2);
  RegNet net = init_regnet(RegNetConfig{4, 4, 8, 8, 4, 4, 0.2}, rng);
  for (float& v : net.params.values()) v += float(rng.uniform(-1e-3, 1e-3));
  save_param_blob(dir.path / "p.bin", net.params);
  CHECK(load_param_blob(dir.path / "p.bin", net.params.layout_ptr()) == net.params);
  CHECK(fs::file_size(dir.path / "p.bin") == 4 * net.params.size());

  save_checkpoint(dir.path / "ck", net);
  const RegNet back = load_checkpoint(dir.path / "ck");
  CHECK(back.config == net.config);
  CHECK(back.params == net.params);

  save_checkpoint(dir.path / "ck2", back);
  CHECK(slurp(dir.path / "ck.params") == slurp(dir.path / "ck2.params"));
  CHECK(slurp(dir.path / "ck.manifest") == slurp(dir.path / "ck2.manifest"));
}

TEST_CASE("I/O failures have distinct diagnostics") {
  TempDir dir;
  Rng rng(3);
  const Volume v{oracle::random_tensor<float>({4, 4, 4}, rng), 0.8};
  save_volume(dir.path / "v", v);
  const std::string hdr = slurp(dir.path / "v.hdr");
  const std::string raw = slurp(dir.path / "v.raw");

  CHECK(kind_of([&] { load_volume(dir.path / "nope"); }) == IoError::Kind::Missing);

  std::string bad = hdr;
  bad.replace(bad.find("f32le"), 5, "f16le");
  spit(dir.path / "v.hdr", bad);
  CHECK(kind_of([&] { load_volume(dir.path / "v"); }) == IoError::Kind::UnknownDtype);

  spit(dir.path / "v.hdr", hdr);
  spit(dir.path / "v.raw", raw.substr(0, raw.size() - 8));
  CHECK(kind_of([&] { load_volume(dir.path / "v"); }) == IoError::Kind::Truncated);

  spit(dir.path / "v.raw", raw + std::string(8, '\0'));
  CHECK(kind_of([&] { load_volume(dir.path / "v"); }) == IoError::Kind::SizeMismatch);

  spit(dir.path / "v.raw", raw);
  spit(dir.path / "v.hdr", "garbage without equals\n");
  CHECK(kind_of([&] { load_volume(dir.path / "v"); }) == IoError::Kind::BadHeader);

  // A volume is not a field.
  spit(dir.path / "v.hdr", hdr);
  CHECK_THROWS(load_ddf(dir.path / "v"));

  auto l = std::make_shared<Layout>();
  l->add("w", {10});
  spit(dir.path / "short.bin", std::string(36, '\0'));
  CHECK(kind_of([&] { load_param_blob(dir.path / "short.bin", l); }) == IoError::Kind::Truncated);

  std::set<std::string> messages;
  for (auto k : {IoError::Kind::Missing, IoError::Kind::BadHeader, IoError::Kind::UnknownDtype, IoError::Kind::SizeMismatch,
                 IoError::Kind::Truncated, IoError::Kind::Write})
    messages.insert(to_string(k));
  CHECK(messages.size() == 6);
}

TEST_CASE("format_double round-trips") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1e3, 1e3) * std::pow(10.0, rng.uniform(-12, 12));
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}
