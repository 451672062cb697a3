#include <filesystem>
#include <map>
#include <set>

#include "adi/errors.hpp"
#include "adi/synthdata.hpp"
#include "doctest.h"
#include "../src/file_io.hpp"
#include "temp_dir.hpp"

using namespace adi::data;
using adi::num::Matrix;
using adi::num::Rng;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.num_videos = 12;
  c.test_fraction = 0.25;
  c.min_frames = 20;
  c.max_frames = 30;
  c.classes = 4;
  c.feature_channels = 6;
  c.min_length = 2;
  c.max_length = 8;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("signatures are orthogonal with the configured norm") {
  auto c = small_config();
  c.separation = 2.5;
  const Matrix s = class_signatures(c);
  for (std::size_t i = 0; i < c.classes; ++i) {
    for (std::size_t j = 0; j < c.classes; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c.feature_channels; ++k) dot += s(i, k) * s(j, k);
      CHECK(dot == doctest::Approx(i == j ? 6.25 : 0.0).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("zero noise gives exact class signatures") {
  auto c = small_config();
  c.noise_std = 0.0;
  const Matrix s = class_signatures(c);
  Rng rng(1);
  auto v = gen_video(c, s, rng, "x");
  std::vector<std::size_t> label(v.annotation.num_frames, 0);
  for (const auto& i : v.annotation.instances)
    for (std::size_t f = i.start; f <= i.end; ++f) label[f] = static_cast<std::size_t>(i.class_id);
  for (std::size_t f = 0; f < label.size(); ++f)
    for (std::size_t k = 0; k < c.feature_channels; ++k) CHECK(v.features(f, k) == s(label[f], k));
}

TEST_CASE("same seed gives the same video") {
  auto c = small_config();
  const Matrix s = class_signatures(c);
  auto a = gen_video_at(c, s, 3);
  auto b = gen_video_at(c, s, 3);
  CHECK(a.features == b.features);
  CHECK(a.annotation == b.annotation);
  CHECK(gen_video_at(c, s, 4).annotation != a.annotation);
}

TEST_CASE("frame means follow the class signature") {
  auto c = small_config();
  c.noise_std = 0.7;
  c.min_instances = 0;
  c.max_instances = 0;
  const Matrix s = class_signatures(c);
  std::vector<double> sum(c.feature_channels, 0.0);
  std::size_t frames = 0;
  for (std::size_t i = 0; frames < 1000; ++i) {
    auto v = gen_video_at(c, s, i);
    for (std::size_t f = 0; f < v.annotation.num_frames && frames < 1000; ++f, ++frames)
      for (std::size_t k = 0; k < c.feature_channels; ++k) sum[k] += v.features(f, k);
  }
  for (std::size_t k = 0; k < c.feature_channels; ++k)
    CHECK(std::abs(sum[k] / 1000.0 - s(0, k)) <= 3.0 * c.noise_std / std::sqrt(1000.0));
}

TEST_CASE("instances never overlap or touch and classes are balanced") {
  auto c = small_config();
  c.min_instances = 1;
  c.max_instances = 4;
  const Matrix s = class_signatures(c);
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t i = 0; total < 2000; ++i) {
    auto v = gen_video_at(c, s, i);
    const auto& inst = v.annotation.instances;
    for (std::size_t k = 0; k < inst.size(); ++k) {
      CHECK(inst[k].start <= inst[k].end);
      CHECK(inst[k].end < v.annotation.num_frames);
      CHECK(inst[k].class_id >= 1);
      CHECK(inst[k].class_id < 4);
      if (k > 0) CHECK(inst[k].start >= inst[k - 1].end + 2);
      ++counts[inst[k].class_id];
      ++total;
    }
  }
  for (int cls = 1; cls < 4; ++cls) {
    const double expect = static_cast<double>(total) / 3.0;
    CHECK(std::abs(static_cast<double>(counts[cls]) - expect) <= 0.2 * expect);
  }
}

TEST_CASE("infeasible configs are rejected") {
  auto c = small_config();
  c.min_instances = 5;
  c.min_length = 5;
  CHECK_THROWS_AS(c.validate(), adi::ConfigError);
  c = small_config();
  c.classes = 1;
  CHECK_THROWS_AS(c.validate(), adi::ConfigError);
  c = small_config();
  c.min_frames = 40;
  CHECK_THROWS_AS(c.validate(), adi::ConfigError);
}

TEST_CASE("gen_dataset writes a reproducible, split dataset") {
  adi::testing::TempDir tmp;
  auto c = small_config();
  auto m = gen_dataset(c, tmp.path() / "a");
  CHECK(m.train.size() + m.test.size() == c.num_videos);
  CHECK(m.test.size() == 3);
  std::set<std::string> all(m.train.begin(), m.train.end());
  for (const auto& id : m.test) CHECK(all.insert(id).second);
  CHECK(all.size() == c.num_videos);

  gen_dataset(c, tmp.path() / "b");
  for (const auto& entry : std::filesystem::recursive_directory_iterator(tmp.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), tmp.path() / "a");
    CHECK(adi::detail::read_file(entry.path()) == adi::detail::read_file(tmp.path() / "b" / rel));
  }

  auto train = load_dataset(tmp.path() / "a", "train");
  auto test = load_dataset(tmp.path() / "a", "test");
  CHECK(train.videos.size() == 9);
  CHECK(test.videos.size() == 3);
  CHECK(test.classes == 4);
  CHECK(test.videos[0].annotation.video_id == m.test[0]);
  CHECK(read_manifest(tmp.path() / "a").config == c);
  CHECK_THROWS_AS(load_dataset(tmp.path() / "a", "valid"), adi::ValidationError);
  CHECK_THROWS_AS(load_dataset(tmp.path() / "missing", "train"), adi::IoError);
}

TEST_CASE("empty dataset writes only the manifest") {
  adi::testing::TempDir tmp;
  auto c = small_config();
  c.num_videos = 0;
  auto m = gen_dataset(c, tmp.path());
  CHECK(m.train.empty());
  CHECK(m.test.empty());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(tmp.path())) files += e.is_regular_file() ? 1 : 0;
  CHECK(files == 1);
  CHECK(std::filesystem::exists(tmp.path() / "manifest.json"));
  CHECK(load_dataset(tmp.path(), "all").videos.empty());
}

TEST_CASE("ADFT feature files") {
  adi::testing::TempDir tmp;
  Rng rng(2);
  Matrix f(7, 3);
  for (double& v : f.data()) v = rng.normal();
  const auto p = tmp.path() / "f.adft";
  write_features(p, f);
  const Matrix back = read_features(p);
  REQUIRE(back.rows() == 7);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(back.data()[i] == static_cast<double>(static_cast<float>(f.data()[i])));

  const std::string bytes = adi::detail::read_file(p);
  CHECK(bytes.substr(0, 4) == "ADFT");
  CHECK(bytes.size() == 16 + 7 * 3 * 4);
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[8]) == 7);
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);

  adi::detail::write_file(tmp.path() / "short.adft", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_features(tmp.path() / "short.adft"), adi::FormatError);
  adi::detail::write_file(tmp.path() / "hdr.adft", bytes.substr(0, 10));
  CHECK_THROWS_AS(read_features(tmp.path() / "hdr.adft"), adi::FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  adi::detail::write_file(tmp.path() / "magic.adft", bad);
  CHECK_THROWS_AS(read_features(tmp.path() / "magic.adft"), adi::FormatError);
  bad = bytes;
  bad[4] = 2;
  adi::detail::write_file(tmp.path() / "ver.adft", bad);
  CHECK_THROWS_AS(read_features(tmp.path() / "ver.adft"), adi::FormatError);
  CHECK_THROWS_AS(write_features(tmp.path() / "empty.adft", Matrix(0, 3)), adi::ValidationError);
}
