#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adi/adimage.hpp"
#include "adi/autograd.hpp"
#include "adi/rng.hpp"

namespace adi::model {

/// Architecture of the denoiser. Tokens of the column stage are the columns
/// of the N x (image_width + feature_channels + 1) input; tokens of the row
/// stage are its rows.
struct ModelConfig {
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t head_dim = 8;
  image::ImageKind kind = image::ImageKind::combined;
  /// Widths of the distributions in one image row, e.g. {C, 2, 2}.
  std::vector<std::size_t> image_blocks;
  std::size_t feature_channels = 16;
  std::size_t max_frames = 64;
  /// MLP hidden width as a multiple of the token length.
  std::size_t mlp_hidden = 4;

  std::size_t image_width() const;
  std::size_t token_count() const { return image_width() + feature_channels + 1; }
  std::size_t attention_width() const { return heads * head_dim; }
  std::vector<image::Block> blocks() const;

  /// Throws ConfigError on an unusable configuration.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Combined-image config for `classes` classes (background included).
ModelConfig combined_config(std::size_t classes, std::size_t feature_channels, std::size_t max_frames);

/// Config for a model producing a single AD image of the given kind.
ModelConfig single_image_config(image::ImageKind kind, std::size_t classes, std::size_t feature_channels,
                                std::size_t max_frames);

struct ModelParams {
  ModelConfig config;
  num::ParamSet params;
  bool operator==(const ModelParams&) const = default;
};

/// Xavier-uniform weights, zero biases, unit layer-norm gains and N(0, 0.02)
/// positional embeddings.
ModelParams init_model(const ModelConfig& cfg, num::Rng& rng);

/// N x 1 column filled with sin(pi t / (2T)).
num::Matrix step_embedding(std::size_t t, std::size_t T, std::size_t rows);

/// Builds the input matrix [x_t | features | f_t] with padded rows zeroed.
num::Matrix assemble_input(const ModelConfig& cfg, const image::AdImage& x_t, const num::Matrix& features,
                           const num::Matrix& f_t, std::span<const double> mask);

/// Column stage of block `layer`: column-token attention then token MLP, both
/// residual with pre-layer-norm.
num::Var column_stage(num::Graph& g, const ModelParams& mp, std::size_t layer, num::Var x,
                      std::span<const double> mask);

/// Row stage of block `layer`: 1x3 temporal conv, masked row-token
/// attention, row MLP, each residual with pre-layer-norm.
num::Var row_stage(num::Graph& g, const ModelParams& mp, std::size_t layer, num::Var x,
                   std::span<const double> mask);

/// Records the full denoiser on `g` and returns the N x W output, a valid
/// distribution in every block-row. Padded rows come out uniform.
num::Var forward_graph(num::Graph& g, const ModelParams& mp, const image::AdImage& x_t, const num::Matrix& features,
                       const num::Matrix& f_t, std::span<const double> mask);

/// Evaluates the denoiser: x_hat_{t-1} = d(x_t, features, f_t).
image::AdImage forward(const ModelParams& mp, const image::AdImage& x_t, const num::Matrix& features,
                       const num::Matrix& f_t, std::span<const double> mask);

}  // namespace adi::model
