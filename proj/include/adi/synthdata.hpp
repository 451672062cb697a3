#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adi/adimage.hpp"
#include "adi/matrix.hpp"
#include "adi/rng.hpp"

namespace adi::data {

/// Parameters of the synthetic feature/annotation generator.
struct SynthConfig {
  std::size_t num_videos = 250;
  double test_fraction = 0.2;
  std::size_t min_frames = 48;
  std::size_t max_frames = 64;
  /// Class count including background.
  std::size_t classes = 6;
  std::size_t feature_channels = 16;
  std::size_t min_instances = 1;
  std::size_t max_instances = 3;
  std::size_t min_length = 4;
  std::size_t max_length = 16;
  double noise_std = 0.5;
  double separation = 1.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError if instances cannot fit or ranges are inverted.
  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

/// Reads a JSON object whose keys are SynthConfig field names; missing keys
/// keep their defaults, unknown keys are rejected.
SynthConfig read_synth_config(const std::filesystem::path& path);

/// One video: frozen per-frame features plus its annotation.
struct Video {
  num::Matrix features;  // N x C_ST
  image::Annotation annotation;
};

struct Dataset {
  std::size_t classes = 0;
  std::size_t feature_channels = 0;
  std::vector<Video> videos;

  const Video& find(const std::string& video_id) const;
  std::vector<image::Annotation> annotations() const;
};

/// Row c is the mean feature of class c (row 0 is background). Orthogonal
/// when classes <= feature_channels, scaled to norm `separation`.
num::Matrix class_signatures(const SynthConfig& cfg);

/// Draws one video. Instances never overlap and are separated by at least one
/// background frame.
Video gen_video(const SynthConfig& cfg, const num::Matrix& signatures, num::Rng& rng, const std::string& video_id);

/// Video `index` of the dataset, drawn from stream (seed, index).
Video gen_video_at(const SynthConfig& cfg, const num::Matrix& signatures, std::size_t index);

std::string video_id(std::size_t index);

struct Manifest {
  SynthConfig config;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Writes features/<id>.adft, annotations.json and manifest.json under
/// out_dir. With no videos only the manifest is written.
Manifest gen_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dir);

/// Loads the videos of one split ("train", "test" or "all").
Dataset load_dataset(const std::filesystem::path& dir, const std::string& split);

/// ADFT binary: "ADFT", u32 version, u32 N, u32 C_ST, then f32 row-major.
void write_features(const std::filesystem::path& path, const num::Matrix& features);
num::Matrix read_features(const std::filesystem::path& path);

std::vector<image::Annotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<image::Annotation>& annotations);

}  // namespace adi::data
