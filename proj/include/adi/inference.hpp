#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adi/diffusion.hpp"
#include "adi/evalkit.hpp"
#include "adi/model.hpp"
#include "adi/synthdata.hpp"

namespace adi::infer {

using eval::Detection;

struct DecodeConfig {
  /// Boundary threshold on the left column of the start/end images.
  double delta = 0.9;
  /// Reverse chains per video, averaged at step 0.
  std::size_t samples = 10;
  double nms_sigma = 0.5;
  double score_floor = 0.001;
  std::size_t max_candidates = 200;

  void validate() const;
};

/// One reverse step: x_hat_{t-1} from x_t.
using Denoiser = std::function<image::AdImage(const image::AdImage& x_t, std::size_t t)>;

/// Wraps a trained model; f_t is the step embedding of the input step.
Denoiser model_denoiser(const model::ModelParams& mp, const num::Matrix& features, std::span<const double> mask,
                        std::size_t T);

/// Runs `cfg.samples` chains from step-T noise down to step 0 and averages
/// them, renormalising every block-row.
image::AdImage reverse_chain(const Denoiser& denoise, std::size_t rows, image::ImageKind kind,
                             const std::vector<image::Block>& blocks, const diffusion::Schedule& sched,
                             const DecodeConfig& cfg, num::Rng& rng);

image::AdImage reverse_chain(const model::ModelParams& mp, const num::Matrix& features, std::span<const double> mask,
                             const diffusion::Schedule& sched, const DecodeConfig& cfg, num::Rng& rng);

/// Mean index (rounded half up) of each maximal run with prob > delta.
std::vector<std::size_t> extract_boundaries(std::span<const double> probs, double delta);

/// Couples every start with every later end. Class is the best action
/// column of the mean action rows over the span; score is the geometric mean
/// of start prob, end prob and that class's mean prob. Keeps the top
/// max_candidates. Only the first `valid_rows` rows are considered.
std::vector<Detection> generate_candidates(const image::AdImage& combined, std::size_t valid_rows, double delta,
                                           std::size_t max_candidates, const std::string& video_id = "");

/// Gaussian Soft-NMS: repeatedly keep the best candidate and decay the rest by
/// exp(-tiou^2 / sigma), dropping scores below floor. Sorted by final score.
std::vector<Detection> soft_nms(std::vector<Detection> cands, double sigma, double floor);

/// Boundary extraction, candidate coupling and Soft-NMS on a step-0 image.
std::vector<Detection> decode(const image::AdImage& combined, std::size_t valid_rows, const DecodeConfig& cfg,
                              const std::string& video_id = "");

/// Full pipeline with the combined-image model.
std::vector<Detection> detect(const model::ModelParams& mp, const num::Matrix& features, std::span<const double> mask,
                              const diffusion::Schedule& sched, const DecodeConfig& cfg, num::Rng& rng,
                              const std::string& video_id = "");

/// Separate action/start/end models, each with its own reverse chain; the
/// results are stitched before decoding.
struct SeparateModels {
  model::ModelParams action;
  model::ModelParams start;
  model::ModelParams end;
};

std::vector<Detection> detect_separate(const SeparateModels& models, const num::Matrix& features,
                                       std::span<const double> mask, const diffusion::Schedule& sched,
                                       const DecodeConfig& cfg, num::Rng& rng, const std::string& video_id = "");

/// Per-video detector; video i of the dataset gets Rng(seed, i).
using VideoDetector = std::function<std::vector<Detection>(const data::Video& video, num::Rng& rng)>;

/// Runs `detector` over every video on `jobs` threads. Output order and
/// contents do not depend on `jobs`.
std::vector<Detection> detect_dataset(const data::Dataset& ds, const VideoDetector& detector, std::uint64_t seed,
                                      std::size_t jobs = 1);

}  // namespace adi::infer
