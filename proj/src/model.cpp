#include "adi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "adi/errors.hpp"

namespace adi::model {

using num::Graph;
using num::Matrix;
using num::Var;

namespace {

constexpr double kMaskedKey = -1e9;

std::string block_name(std::size_t layer) { return "block" + std::to_string(layer); }

Matrix xavier(std::size_t rows, std::size_t cols, double fan_in, double fan_out, num::Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = (2.0 * rng.uniform() - 1.0) * a;
  return m;
}

Matrix xavier(std::size_t rows, std::size_t cols, num::Rng& rng) {
  return xavier(rows, cols, static_cast<double>(rows), static_cast<double>(cols), rng);
}

Matrix normal(std::size_t rows, std::size_t cols, double std, num::Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = std * rng.normal();
  return m;
}

void add_norm(num::ParamSet& ps, const std::string& prefix, std::size_t width) {
  ps.add(prefix + ".gamma", Matrix(1, width, 1.0), false);
  ps.add(prefix + ".beta", Matrix(1, width, 0.0), false);
}

// Parameter leaf, restricted to the leading `rows` rows / `cols` columns when
// the input is shorter than max_frames.
Var leaf(Graph& g, const num::ParamSet& ps, const std::string& name) { return g.parameter(ps.at(name)); }

Var leading_rows(Graph& g, const num::ParamSet& ps, const std::string& name, std::size_t rows) {
  Var p = leaf(g, ps, name);
  return g.value(p).rows() == rows ? p : g.slice_rows(p, 0, rows);
}

Var leading_cols(Graph& g, const num::ParamSet& ps, const std::string& name, std::size_t cols) {
  Var p = leaf(g, ps, name);
  return g.value(p).cols() == cols ? p : g.slice_cols(p, 0, cols);
}

Var norm(Graph& g, const num::ParamSet& ps, const std::string& prefix, Var x) {
  return g.layernorm_rows(x, leaf(g, ps, prefix + ".gamma"), leaf(g, ps, prefix + ".beta"));
}

}  // namespace

std::size_t ModelConfig::image_width() const {
  return std::accumulate(image_blocks.begin(), image_blocks.end(), std::size_t{0});
}

std::vector<image::Block> ModelConfig::blocks() const {
  std::vector<image::Block> out;
  std::size_t off = 0;
  for (std::size_t w : image_blocks) {
    out.push_back({off, w});
    off += w;
  }
  return out;
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model needs at least one Row-Column block");
  if (heads < 1 || head_dim < 1) throw ConfigError("model needs heads >= 1 and head_dim >= 1");
  if (attention_width() % heads != 0) throw ConfigError("heads must divide the attention width");
  if (image_blocks.empty()) throw ConfigError("model needs at least one image block");
  for (std::size_t w : image_blocks) {
    if (w < 2) throw ConfigError("image blocks must be at least 2 columns wide");
  }
  if (max_frames < 1) throw ConfigError("max_frames must be positive");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
}

ModelConfig combined_config(std::size_t classes, std::size_t feature_channels, std::size_t max_frames) {
  ModelConfig cfg;
  cfg.kind = image::ImageKind::combined;
  cfg.image_blocks = {classes, 2, 2};
  cfg.feature_channels = feature_channels;
  cfg.max_frames = max_frames;
  return cfg;
}

ModelConfig single_image_config(image::ImageKind kind, std::size_t classes, std::size_t feature_channels,
                                std::size_t max_frames) {
  if (kind == image::ImageKind::combined) return combined_config(classes, feature_channels, max_frames);
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.image_blocks = {kind == image::ImageKind::action ? classes : std::size_t{2}};
  cfg.feature_channels = feature_channels;
  cfg.max_frames = max_frames;
  return cfg;
}

ModelParams init_model(const ModelConfig& cfg, num::Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.max_frames;
  const std::size_t d = cfg.token_count();
  const std::size_t a = cfg.attention_width();
  const std::size_t col_hidden = cfg.mlp_hidden * n;
  const std::size_t row_hidden = cfg.mlp_hidden * d;

  ModelParams mp{cfg, {}};
  auto& ps = mp.params;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string c = block_name(l) + ".col";
    add_norm(ps, c + ".norm1", d);
    ps.add(c + ".pos", normal(n, d, 0.02, rng), false);
    ps.add(c + ".attn.q", xavier(n, a, rng));
    ps.add(c + ".attn.k", xavier(n, a, rng));
    ps.add(c + ".attn.v", xavier(n, a, rng));
    ps.add(c + ".attn.out", xavier(a, n, rng));
    ps.add(c + ".attn.out_bias", Matrix(1, n), false);
    add_norm(ps, c + ".norm2", d);
    ps.add(c + ".mlp.w1", xavier(n, col_hidden, rng));
    ps.add(c + ".mlp.b1", Matrix(1, col_hidden), false);
    ps.add(c + ".mlp.w2", xavier(col_hidden, n, rng));
    ps.add(c + ".mlp.b2", Matrix(1, n), false);

    const std::string r = block_name(l) + ".row";
    add_norm(ps, r + ".norm1", d);
    ps.add(r + ".conv.kernel", xavier(3 * d, d, 3.0 * static_cast<double>(d), 3.0 * static_cast<double>(d), rng));
    ps.add(r + ".conv.bias", Matrix(1, d), false);
    add_norm(ps, r + ".norm2", d);
    ps.add(r + ".pos", normal(n, d, 0.02, rng), false);
    ps.add(r + ".attn.q", xavier(d, a, rng));
    ps.add(r + ".attn.k", xavier(d, a, rng));
    ps.add(r + ".attn.v", xavier(d, a, rng));
    ps.add(r + ".attn.out", xavier(a, d, rng));
    ps.add(r + ".attn.out_bias", Matrix(1, d), false);
    add_norm(ps, r + ".norm3", d);
    ps.add(r + ".mlp.w1", xavier(d, row_hidden, rng));
    ps.add(r + ".mlp.b1", Matrix(1, row_hidden), false);
    ps.add(r + ".mlp.w2", xavier(row_hidden, d, rng));
    ps.add(r + ".mlp.b2", Matrix(1, d), false);
  }
  add_norm(ps, "head.norm", d);
  ps.add("head.w", xavier(d, cfg.image_width(), rng));
  ps.add("head.b", Matrix(1, cfg.image_width()), false);
  return mp;
}

Matrix step_embedding(std::size_t t, std::size_t T, std::size_t rows) {
  if (T == 0 || t > T) throw ValidationError("step_embedding: need 0 <= t <= T and T >= 1");
  const double v = std::sin(std::numbers::pi * static_cast<double>(t) / (2.0 * static_cast<double>(T)));
  return Matrix(rows, 1, v);
}

Matrix assemble_input(const ModelConfig& cfg, const image::AdImage& x_t, const Matrix& features, const Matrix& f_t,
                      std::span<const double> mask) {
  const std::size_t n = x_t.rows();
  if (n == 0 || n > cfg.max_frames) {
    throw ShapeError("model input has " + std::to_string(n) + " rows; expected 1.." + std::to_string(cfg.max_frames));
  }
  if (x_t.width() != cfg.image_width()) {
    throw ShapeError("model input image is " + std::to_string(x_t.width()) + " wide; expected " +
                     std::to_string(cfg.image_width()));
  }
  if (features.rows() != n || features.cols() != cfg.feature_channels) {
    throw ShapeError("features must be " + std::to_string(n) + "x" + std::to_string(cfg.feature_channels));
  }
  if (f_t.rows() != n || f_t.cols() != 1) throw ShapeError("step embedding must be N x 1");
  if (mask.size() != n) throw ShapeError("mask length differs from frame count");

  const std::size_t w = cfg.image_width();
  const std::size_t c = cfg.feature_channels;
  Matrix in(n, cfg.token_count());
  for (std::size_t r = 0; r < n; ++r) {
    if (mask[r] == 0.0) continue;
    auto dst = in.row(r);
    auto img = x_t.data.row(r);
    auto feat = features.row(r);
    std::copy(img.begin(), img.end(), dst.begin());
    std::copy(feat.begin(), feat.end(), dst.begin() + static_cast<std::ptrdiff_t>(w));
    dst[w + c] = f_t(r, 0);
  }
  return in;
}

Var column_stage(Graph& g, const ModelParams& mp, std::size_t layer, Var x, std::span<const double> mask) {
  const auto& ps = mp.params;
  const auto& cfg = mp.config;
  const std::size_t n = g.value(x).rows();
  const std::string p = block_name(layer) + ".col";

  Var h = g.scale_rows(g.add(norm(g, ps, p + ".norm1", x), leading_rows(g, ps, p + ".pos", n)), mask);
  Var tokens = g.transpose(h);  // D x N: one token per column
  Var q = g.matmul(tokens, leading_rows(g, ps, p + ".attn.q", n));
  Var k = g.matmul(tokens, leading_rows(g, ps, p + ".attn.k", n));
  Var v = g.matmul(tokens, leading_rows(g, ps, p + ".attn.v", n));
  Var o = g.attention(q, k, v, cfg.heads);
  Var u = g.add_row(g.matmul(o, leading_cols(g, ps, p + ".attn.out", n)), leading_cols(g, ps, p + ".attn.out_bias", n));
  x = g.add(x, g.scale_rows(g.transpose(u), mask));

  Var h2 = g.transpose(g.scale_rows(norm(g, ps, p + ".norm2", x), mask));
  Var z = g.gelu(g.add_row(g.matmul(h2, leading_rows(g, ps, p + ".mlp.w1", n)), leaf(g, ps, p + ".mlp.b1")));
  Var y = g.add_row(g.matmul(z, leading_cols(g, ps, p + ".mlp.w2", n)), leading_cols(g, ps, p + ".mlp.b2", n));
  return g.add(x, g.scale_rows(g.transpose(y), mask));
}

Var row_stage(Graph& g, const ModelParams& mp, std::size_t layer, Var x, std::span<const double> mask) {
  const auto& ps = mp.params;
  const auto& cfg = mp.config;
  const std::size_t n = g.value(x).rows();
  const std::string p = block_name(layer) + ".row";

  Var h = g.scale_rows(norm(g, ps, p + ".norm1", x), mask);
  Var u = g.add_row(g.conv1d_rows(h, leaf(g, ps, p + ".conv.kernel")), leaf(g, ps, p + ".conv.bias"));
  x = g.add(x, g.scale_rows(u, mask));

  std::vector<double> key_bias(n);
  for (std::size_t r = 0; r < n; ++r) key_bias[r] = mask[r] != 0.0 ? 0.0 : kMaskedKey;
  Var h2 = g.scale_rows(g.add(norm(g, ps, p + ".norm2", x), leading_rows(g, ps, p + ".pos", n)), mask);
  Var q = g.matmul(h2, leaf(g, ps, p + ".attn.q"));
  Var k = g.matmul(h2, leaf(g, ps, p + ".attn.k"));
  Var v = g.matmul(h2, leaf(g, ps, p + ".attn.v"));
  Var o = g.attention(q, k, v, cfg.heads, key_bias);
  Var a = g.add_row(g.matmul(o, leaf(g, ps, p + ".attn.out")), leaf(g, ps, p + ".attn.out_bias"));
  x = g.add(x, g.scale_rows(a, mask));

  Var h3 = g.scale_rows(norm(g, ps, p + ".norm3", x), mask);
  Var z = g.gelu(g.add_row(g.matmul(h3, leaf(g, ps, p + ".mlp.w1")), leaf(g, ps, p + ".mlp.b1")));
  Var y = g.add_row(g.matmul(z, leaf(g, ps, p + ".mlp.w2")), leaf(g, ps, p + ".mlp.b2"));
  return g.add(x, g.scale_rows(y, mask));
}

Var forward_graph(Graph& g, const ModelParams& mp, const image::AdImage& x_t, const Matrix& features, const Matrix& f_t,
                  std::span<const double> mask) {
  const auto& cfg = mp.config;
  Var x = g.constant(assemble_input(cfg, x_t, features, f_t, mask));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    try {
      x = column_stage(g, mp, l, x, mask);
      x = row_stage(g, mp, l, x, mask);
    } catch (const NumericError& e) {
      throw NumericError(block_name(l) + ": " + e.what());
    }
  }
  const auto& ps = mp.params;
  Var logits = g.add_row(g.matmul(norm(g, ps, "head.norm", x), leaf(g, ps, "head.w")), leaf(g, ps, "head.b"));
  Var probs = g.softmax_blocks(logits, cfg.image_blocks);

  const std::size_t n = x_t.rows();
  const bool padded = std::any_of(mask.begin(), mask.end(), [](double m) { return m == 0.0; });
  if (!padded) return probs;
  Matrix fill(n, cfg.image_width());
  const auto blocks = cfg.blocks();
  for (std::size_t r = 0; r < n; ++r) {
    if (mask[r] != 0.0) continue;
    for (const auto& b : blocks) {
      for (std::size_t c = 0; c < b.width; ++c) fill(r, b.offset + c) = 1.0 / static_cast<double>(b.width);
    }
  }
  return g.add(g.scale_rows(probs, mask), g.constant(std::move(fill)));
}

image::AdImage forward(const ModelParams& mp, const image::AdImage& x_t, const Matrix& features, const Matrix& f_t,
                       std::span<const double> mask) {
  Graph g(false);
  Var out = forward_graph(g, mp, x_t, features, f_t, mask);
  return image::AdImage{g.value(out), mp.config.blocks(), mp.config.kind};
}

}  // namespace adi::model
