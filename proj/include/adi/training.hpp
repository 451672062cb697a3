#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adi/diffusion.hpp"
#include "adi/model.hpp"
#include "adi/synthdata.hpp"

namespace adi::train {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr0 = 2e-5;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  std::size_t T = 50;
  std::int64_t K = 200;
  double beta_min = 0.05;
  double beta_max = 0.30;
  double sigma = 1.0;
  /// Independent noise draws per example, averaged in the loss.
  std::size_t M_train = 2;
  std::size_t N_max = 64;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many epochs (0: only at the end).
  std::size_t checkpoint_every = 0;
  image::ImageKind image = image::ImageKind::combined;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  std::size_t mlp_hidden = 4;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Reads a JSON object of TrainConfig fields; unknown keys are rejected.
TrainConfig read_train_config(const std::filesystem::path& path);
std::string to_json_text(const TrainConfig& cfg);
TrainConfig train_config_from_json_text(const std::string& text);

/// Model architecture implied by a training config and dataset shape.
model::ModelConfig model_config(const TrainConfig& cfg, std::size_t classes, std::size_t feature_channels);

/// One padded training example.
struct Example {
  num::Matrix features;       // N_max x C_ST, zero on padding
  std::vector<double> mask;   // 1 on real frames
  image::AdImage target;      // combined ground truth, uniform rows on padding
};

/// Throws ValidationError on an empty index list or a video longer than N_max.
std::vector<Example> make_batch(const data::Dataset& ds, const std::vector<std::size_t>& indices, std::size_t N_max);

/// Adam first/second moments, aligned with the model's ParamSet.
struct AdamState {
  std::vector<num::Matrix> m;
  std::vector<num::Matrix> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const num::ParamSet& params);
  bool operator==(const AdamState&) const = default;
};

/// Cosine-decayed learning rate of update k (1-based) out of `total`; zero at k = total.
double cosine_lr(double lr0, std::uint64_t k, std::uint64_t total);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
};

/// Loss and gradient of one batch. Each example uses stream `rng.substream(i)`
/// to draw t ~ U{1..T} and M_train pairs (x_{t-1}, x_t).
struct BatchGradient {
  double loss = 0.0;
  std::vector<num::Matrix> grads;
};
BatchGradient batch_gradient(const model::ModelParams& mp, const std::vector<Example>& batch,
                             const diffusion::Schedule& sched, std::size_t M_train, const num::Rng& rng);

/// Scales grads in place so their global norm is at most `clip`; returns the
/// norm before clipping.
double clip_gradients(std::vector<num::Matrix>& grads, double clip);

/// One AdamW update with decoupled weight decay on parameters marked decay.
void adamw_update(num::ParamSet& params, AdamState& opt, const std::vector<num::Matrix>& grads, double lr,
                  const TrainConfig& cfg);

/// Gradient, clip and AdamW update for update number opt.step + 1 of total_steps.
/// Throws NumericError with t/lr/grad-norm diagnostics on a non-finite loss.
StepResult train_step(model::ModelParams& mp, AdamState& opt, const std::vector<Example>& batch,
                      const diffusion::Schedule& sched, const num::Rng& rng, const TrainConfig& cfg,
                      std::uint64_t total_steps);

struct Checkpoint {
  TrainConfig config;
  model::ModelParams model;
  AdamState adam;
  std::size_t epoch = 0;
  num::Rng::State rng{};

  diffusion::Schedule schedule() const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned little-endian binary: "ADIC", u32 version, u32 header length,
/// JSON header, then named f64 blobs.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& what = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  /// Final checkpoint path; periodic ones go to "<stem>.epoch<k><ext>".
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> metrics_path;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Fresh initial state for a dataset.
Checkpoint initial_checkpoint(const TrainConfig& cfg, const data::Dataset& ds);

/// Runs epochs from ckpt.epoch to cfg.epochs and returns the final state.
/// Resuming from a periodic checkpoint of the same config reproduces an
/// uninterrupted run bit-exactly.
Checkpoint train(Checkpoint ckpt, const data::Dataset& ds, const TrainOptions& opts = {});

/// Path of the periodic checkpoint written after `epoch`.
std::filesystem::path periodic_checkpoint_path(const std::filesystem::path& final_path, std::size_t epoch);

}  // namespace adi::train
