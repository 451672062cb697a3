#include "adi/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "adi/errors.hpp"
#include "binary_io.hpp"
#include "file_io.hpp"
#include "json_io.hpp"

namespace adi::data {

using detail::json;
using num::Matrix;

namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint64_t kSignatureStream = std::uint64_t{1} << 63;
constexpr int kManifestVersion = 1;

std::size_t uniform_between(num::Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

json config_to_json(const SynthConfig& c) {
  return {{"num_videos", c.num_videos},       {"test_fraction", c.test_fraction},
          {"min_frames", c.min_frames},       {"max_frames", c.max_frames},
          {"classes", c.classes},             {"feature_channels", c.feature_channels},
          {"min_instances", c.min_instances}, {"max_instances", c.max_instances},
          {"min_length", c.min_length},       {"max_length", c.max_length},
          {"noise_std", c.noise_std},         {"separation", c.separation},
          {"seed", c.seed}};
}

}  // namespace

namespace {

SynthConfig synth_config_from_json(const json& j) {
  detail::require_known_keys(j,
                             {"num_videos", "test_fraction", "min_frames", "max_frames", "classes", "feature_channels",
                              "min_instances", "max_instances", "min_length", "max_length", "noise_std", "separation",
                              "seed"},
                             "synth config");
  SynthConfig c;
  try {
    detail::read_opt(j, "num_videos", c.num_videos);
    detail::read_opt(j, "test_fraction", c.test_fraction);
    detail::read_opt(j, "min_frames", c.min_frames);
    detail::read_opt(j, "max_frames", c.max_frames);
    detail::read_opt(j, "classes", c.classes);
    detail::read_opt(j, "feature_channels", c.feature_channels);
    detail::read_opt(j, "min_instances", c.min_instances);
    detail::read_opt(j, "max_instances", c.max_instances);
    detail::read_opt(j, "min_length", c.min_length);
    detail::read_opt(j, "max_length", c.max_length);
    detail::read_opt(j, "noise_std", c.noise_std);
    detail::read_opt(j, "separation", c.separation);
    detail::read_opt(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

SynthConfig read_synth_config(const std::filesystem::path& path) {
  return synth_config_from_json(detail::parse_json_file(path));
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
  if (classes < 2) fail("classes must be >= 2 (background plus at least one action)");
  if (feature_channels < 1) fail("feature_channels must be >= 1");
  if (min_frames < 1 || min_frames > max_frames) fail("need 1 <= min_frames <= max_frames");
  if (min_length < 1 || min_length > max_length) fail("need 1 <= min_length <= max_length");
  if (min_instances > max_instances) fail("need min_instances <= max_instances");
  if (min_instances * min_length + (min_instances > 0 ? min_instances - 1 : 0) > min_frames) {
    fail(std::to_string(min_instances) + " instances of length " + std::to_string(min_length) +
         " with gaps do not fit in " + std::to_string(min_frames) + " frames");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std must be finite and >= 0");
  if (!(separation > 0.0) || !std::isfinite(separation)) fail("separation must be finite and > 0");
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) fail("test_fraction must lie in [0, 1]");
}

const Video& Dataset::find(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.annotation.video_id == id) return v;
  }
  throw ValidationError("video \"" + id + "\" not found in dataset");
}

std::vector<image::Annotation> Dataset::annotations() const {
  std::vector<image::Annotation> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(v.annotation);
  return out;
}

Matrix class_signatures(const SynthConfig& cfg) {
  num::Rng rng(cfg.seed, kSignatureStream);
  const std::size_t c = cfg.classes;
  const std::size_t d = cfg.feature_channels;
  Matrix sig(c, d);
  for (std::size_t k = 0; k < c; ++k) {
    auto row = sig.row(k);
    for (double& v : row) v = rng.normal();
    // Gram-Schmidt against earlier rows while an orthogonal direction exists.
    if (k < d) {
      for (std::size_t j = 0; j < k; ++j) {
        auto prev = sig.row(j);
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += row[i] * prev[i];
        for (std::size_t i = 0; i < d; ++i) row[i] -= dot * prev[i];
      }
    }
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
  }
  for (double& v : sig.data()) v *= cfg.separation;
  return sig;
}

std::string video_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%05zu", index);
  return buf;
}

Video gen_video(const SynthConfig& cfg, const Matrix& signatures, num::Rng& rng, const std::string& id) {
  cfg.validate();
  if (signatures.rows() != cfg.classes || signatures.cols() != cfg.feature_channels) {
    throw ShapeError("gen_video: signatures must be classes x feature_channels");
  }
  const std::size_t n = uniform_between(rng, cfg.min_frames, cfg.max_frames);
  const std::size_t k = uniform_between(rng, cfg.min_instances, cfg.max_instances);
  std::vector<std::size_t> lengths(k);
  for (auto& len : lengths) len = uniform_between(rng, cfg.min_length, cfg.max_length);

  std::vector<std::size_t> kept = lengths;
  auto needed = [&] {
    std::size_t s = kept.empty() ? 0 : kept.size() - 1;
    for (auto len : kept) s += len;
    return s;
  };
  // Shorten the longest instance until everything fits; validate() ensures
  // min_instances at min_length always does.
  while (needed() > n) {
    auto it = std::max_element(kept.begin(), kept.end());
    if (*it > cfg.min_length) {
      --*it;
    } else {
      kept.pop_back();
    }
  }

  const std::size_t slack = n - needed();
  std::vector<std::size_t> cuts(kept.size());
  for (auto& c : cuts) c = rng.below(slack + 1);
  std::sort(cuts.begin(), cuts.end());

  Video v{Matrix(n, cfg.feature_channels), {id, n, {}}};
  std::vector<int> label(n, 0);
  std::size_t pos = 0;
  std::size_t prev_cut = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    pos += cuts[i] - prev_cut;
    prev_cut = cuts[i];
    const int cls = static_cast<int>(1 + rng.below(cfg.classes - 1));
    image::Instance inst{pos, pos + kept[i] - 1, cls};
    for (std::size_t f = inst.start; f <= inst.end; ++f) label[f] = cls;
    v.annotation.instances.push_back(inst);
    pos = inst.end + 2;
  }

  for (std::size_t f = 0; f < n; ++f) {
    auto sig = signatures.row(static_cast<std::size_t>(label[f]));
    auto row = v.features.row(f);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = sig[c] + (cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0);
  }
  return v;
}

Video gen_video_at(const SynthConfig& cfg, const Matrix& signatures, std::size_t index) {
  num::Rng rng(cfg.seed, index);
  return gen_video(cfg, signatures, rng, video_id(index));
}

Manifest gen_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  Manifest m{cfg, {}, {}};
  const auto num_test = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.num_videos) * cfg.test_fraction));
  const std::size_t num_train = cfg.num_videos - num_test;
  if (cfg.num_videos > 0) {
    const Matrix sig = class_signatures(cfg);
    std::vector<image::Annotation> anns;
    for (std::size_t i = 0; i < cfg.num_videos; ++i) {
      Video v = gen_video_at(cfg, sig, i);
      write_features(out_dir / "features" / (v.annotation.video_id + ".adft"), v.features);
      (i < num_train ? m.train : m.test).push_back(v.annotation.video_id);
      anns.push_back(std::move(v.annotation));
    }
    write_annotations(out_dir / "annotations.json", anns);
  }
  json j = {{"version", kManifestVersion}, {"config", config_to_json(cfg)}, {"train", m.train}, {"test", m.test}};
  detail::write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  return m;
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const json j = detail::parse_json_file(dir / "manifest.json");
  try {
    if (j.at("version").get<int>() != kManifestVersion) {
      throw FormatError(dir.string() + "/manifest.json: unsupported version " + j.at("version").dump());
    }
    Manifest m;
    m.config = synth_config_from_json(j.at("config"));
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/manifest.json: " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& split) {
  const Manifest m = read_manifest(dir);
  std::vector<std::string> ids;
  if (split == "train" || split == "all") ids.insert(ids.end(), m.train.begin(), m.train.end());
  if (split == "test" || split == "all") ids.insert(ids.end(), m.test.begin(), m.test.end());
  if (split != "train" && split != "test" && split != "all") {
    throw ValidationError("unknown split \"" + split + "\" (expected train, test or all)");
  }
  Dataset ds{m.config.classes, m.config.feature_channels, {}};
  if (ids.empty()) return ds;

  std::map<std::string, image::Annotation> by_id;
  for (auto& a : read_annotations(dir / "annotations.json")) by_id.emplace(a.video_id, std::move(a));
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw FormatError(dir.string() + ": no annotation for video " + id);
    const auto path = dir / "features" / (id + ".adft");
    Matrix f = read_features(path);
    if (f.rows() != it->second.num_frames || f.cols() != m.config.feature_channels) {
      throw FormatError(path.string() + ": feature shape " + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                        " does not match the annotation/manifest");
    }
    ds.videos.push_back({std::move(f), it->second});
  }
  return ds;
}

void write_features(const std::filesystem::path& path, const Matrix& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw ValidationError("write_features: empty feature matrix for " + path.string());
  }
  std::string out = "ADFT";
  detail::put_le<std::uint32_t>(out, kFeatureVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) detail::put_le<float>(out, static_cast<float>(v));
  detail::write_file(path, out);
}

Matrix read_features(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::Reader r(bytes, path.string());
  if (r.take(4) != "ADFT") throw FormatError(path.string() + ": bad magic, not an ADFT feature file");
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion) {
    throw FormatError(path.string() + ": unsupported ADFT version " + std::to_string(version));
  }
  const auto n = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  if (n == 0 || c == 0) throw FormatError(path.string() + ": empty feature matrix");
  const std::size_t expect = std::size_t{n} * c * sizeof(float);
  if (r.remaining() != expect) {
    throw FormatError(path.string() + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(expect));
  }
  Matrix m(n, c);
  for (double& v : m.data()) v = r.get<float>();
  return m;
}

std::vector<image::Annotation> read_annotations(const std::filesystem::path& path) {
  const json j = detail::parse_json_file(path);
  if (!j.is_array()) throw FormatError(path.string() + ": expected an array of annotations");
  std::vector<image::Annotation> out;
  for (const auto& a : j) out.push_back(detail::annotation_from_json(a));
  return out;
}

void write_annotations(const std::filesystem::path& path, const std::vector<image::Annotation>& annotations) {
  json j = json::array();
  for (const auto& a : annotations) j.push_back(detail::annotation_to_json(a));
  detail::write_file(path, j.dump(1) + "\n");
}

}  // namespace adi::data
