#include "adi/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adi/errors.hpp"
#include "json_io.hpp"

namespace adi::train {

using detail::json;
using num::Matrix;

namespace {

// Stream ids under Rng(seed); disjoint high bits keep the purposes apart.
constexpr std::uint64_t kInitStream = std::uint64_t{1} << 60;
constexpr std::uint64_t kShuffleStream = std::uint64_t{2} << 60;
constexpr std::uint64_t kStepStream = std::uint64_t{3} << 60;

image::ImageKind kind_from_string(const std::string& s) {
  for (auto k : {image::ImageKind::action, image::ImageKind::start, image::ImageKind::end, image::ImageKind::combined}) {
    if (s == image::to_string(k)) return k;
  }
  throw ConfigError("unknown image kind \"" + s + "\" (expected action, start, end or combined)");
}

json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"weight_decay", c.weight_decay},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"grad_clip", c.grad_clip},
          {"T", c.T},
          {"K", c.K},
          {"beta_min", c.beta_min},
          {"beta_max", c.beta_max},
          {"sigma", c.sigma},
          {"M_train", c.M_train},
          {"N_max", c.N_max},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"image", image::to_string(c.image)},
          {"layers", c.layers},
          {"heads", c.heads},
          {"head_dim", c.head_dim},
          {"mlp_hidden", c.mlp_hidden}};
}

TrainConfig config_from_json(const json& j) {
  detail::require_known_keys(j,
                             {"epochs", "batch_size", "lr0", "weight_decay", "adam_beta1", "adam_beta2", "adam_eps",
                              "grad_clip", "T", "K", "beta_min", "beta_max", "sigma", "M_train", "N_max", "seed",
                              "checkpoint_every", "image", "layers", "heads", "head_dim", "mlp_hidden"},
                             "train config");
  TrainConfig c;
  try {
    detail::read_opt(j, "epochs", c.epochs);
    detail::read_opt(j, "batch_size", c.batch_size);
    detail::read_opt(j, "lr0", c.lr0);
    detail::read_opt(j, "weight_decay", c.weight_decay);
    detail::read_opt(j, "adam_beta1", c.adam_beta1);
    detail::read_opt(j, "adam_beta2", c.adam_beta2);
    detail::read_opt(j, "adam_eps", c.adam_eps);
    detail::read_opt(j, "grad_clip", c.grad_clip);
    detail::read_opt(j, "T", c.T);
    detail::read_opt(j, "K", c.K);
    detail::read_opt(j, "beta_min", c.beta_min);
    detail::read_opt(j, "beta_max", c.beta_max);
    detail::read_opt(j, "sigma", c.sigma);
    detail::read_opt(j, "M_train", c.M_train);
    detail::read_opt(j, "N_max", c.N_max);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "checkpoint_every", c.checkpoint_every);
    if (j.contains("image")) c.image = kind_from_string(j.at("image").get<std::string>());
    detail::read_opt(j, "layers", c.layers);
    detail::read_opt(j, "heads", c.heads);
    detail::read_opt(j, "head_dim", c.head_dim);
    detail::read_opt(j, "mlp_hidden", c.mlp_hidden);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

image::AdImage part_of(const image::AdImage& combined, image::ImageKind kind) {
  if (kind == image::ImageKind::combined) return combined;
  auto parts = image::unstitch(combined);
  switch (kind) {
    case image::ImageKind::action: return parts.action;
    case image::ImageKind::start: return parts.start;
    default: return parts.end;
  }
}

std::uint64_t steps_per_epoch(std::size_t videos, std::size_t batch) { return (videos + batch - 1) / batch; }

std::vector<std::size_t> epoch_order(const TrainConfig& cfg, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng = num::Rng(cfg.seed).substream(kShuffleStream + epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("lr0 must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(grad_clip > 0.0)) fail("grad_clip must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (M_train < 1) fail("M_train must be >= 1");
  if (N_max < 1) fail("N_max must be >= 1");
  if (T < 1 || K < 1) fail("T and K must be >= 1");
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  return config_from_json(detail::parse_json_file(path));
}

std::string to_json_text(const TrainConfig& cfg) { return config_to_json(cfg).dump(); }

TrainConfig train_config_from_json_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
}

model::ModelConfig model_config(const TrainConfig& cfg, std::size_t classes, std::size_t feature_channels) {
  auto mc = model::single_image_config(cfg.image, classes, feature_channels, cfg.N_max);
  mc.layers = cfg.layers;
  mc.heads = cfg.heads;
  mc.head_dim = cfg.head_dim;
  mc.mlp_hidden = cfg.mlp_hidden;
  mc.validate();
  return mc;
}

std::vector<Example> make_batch(const data::Dataset& ds, const std::vector<std::size_t>& indices, std::size_t N_max) {
  if (indices.empty()) throw ValidationError("make_batch: empty index list");
  std::vector<Example> batch;
  batch.reserve(indices.size());
  const auto blocks = image::layout(image::ImageKind::combined, ds.classes);
  for (std::size_t idx : indices) {
    if (idx >= ds.videos.size()) {
      throw ValidationError("make_batch: index " + std::to_string(idx) + " out of range for " +
                            std::to_string(ds.videos.size()) + " videos");
    }
    const auto& v = ds.videos[idx];
    const std::size_t n = v.annotation.num_frames;
    if (n > N_max) {
      throw ValidationError("video " + v.annotation.video_id + " has " + std::to_string(n) +
                            " frames, more than N_max = " + std::to_string(N_max) + "; raise N_max");
    }
    Example ex{Matrix(N_max, ds.feature_channels), std::vector<double>(N_max, 0.0),
               image::uniform_image(N_max, image::ImageKind::combined, blocks)};
    const auto gt = image::stitch(image::encode_ground_truth(v.annotation, ds.classes));
    for (std::size_t r = 0; r < n; ++r) {
      ex.mask[r] = 1.0;
      std::copy(v.features.row(r).begin(), v.features.row(r).end(), ex.features.row(r).begin());
      std::copy(gt.data.row(r).begin(), gt.data.row(r).end(), ex.target.data.row(r).begin());
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

AdamState AdamState::zeros_like(const num::ParamSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.rows(), p.value.cols());
    s.v.emplace_back(p.value.rows(), p.value.cols());
  }
  return s;
}

double cosine_lr(double lr0, std::uint64_t k, std::uint64_t total) {
  if (total == 0 || k >= total) return 0.0;
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(total)));
}

BatchGradient batch_gradient(const model::ModelParams& mp, const std::vector<Example>& batch,
                             const diffusion::Schedule& sched, std::size_t M_train, const num::Rng& rng) {
  BatchGradient out;
  for (const auto& p : mp.params) out.grads.emplace_back(p.value.rows(), p.value.cols());
  const double weight = 1.0 / static_cast<double>(batch.size() * M_train);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    num::Rng ex_rng = rng.substream(i);
    const std::size_t t = 1 + ex_rng.below(sched.T);
    const image::AdImage x0 = part_of(ex.target, mp.config.kind);
    const Matrix ft = model::step_embedding(t, sched.T, ex.features.rows());
    for (std::size_t m = 0; m < M_train; ++m) {
      auto [prev, cur] = diffusion::sample_pair_image(x0, t, sched, ex_rng);
      try {
        num::Graph g;
        num::Var pred = model::forward_graph(g, mp, cur, ex.features, ft, ex.mask);
        num::Var loss = g.mse(pred, g.constant(prev.data), ex.mask);
        out.loss += weight * g.value(loss)(0, 0);
        auto grads = g.backward(loss, mp.params);
        for (std::size_t k = 0; k < grads.size(); ++k) {
          auto dst = out.grads[k].data();
          auto src = grads[k].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += weight * src[j];
        }
      } catch (const NumericError& e) {
        throw NumericError("example " + std::to_string(i) + " (t = " + std::to_string(t) + ", draw " +
                           std::to_string(m) + "): " + e.what());
      }
    }
  }
  return out;
}

double clip_gradients(std::vector<Matrix>& grads, double clip) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double s = clip / norm;
    for (auto& g : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

void adamw_update(num::ParamSet& params, AdamState& opt, const std::vector<Matrix>& grads, double lr,
                  const TrainConfig& cfg) {
  ++opt.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    auto m = opt.m[i].data();
    auto v = opt.v[i].data();
    auto g = grads[i].data();
    const double wd = params[i].decay ? cfg.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + wd * p[j]);
    }
  }
}

StepResult train_step(model::ModelParams& mp, AdamState& opt, const std::vector<Example>& batch,
                      const diffusion::Schedule& sched, const num::Rng& rng, const TrainConfig& cfg,
                      std::uint64_t total_steps) {
  StepResult r;
  r.lr = cosine_lr(cfg.lr0, opt.step + 1, total_steps);
  BatchGradient bg;
  try {
    bg = batch_gradient(mp, batch, sched, cfg.M_train, rng);
  } catch (const NumericError& e) {
    throw NumericError("training step " + std::to_string(opt.step + 1) + " (lr = " + std::to_string(r.lr) +
                       "): " + e.what());
  }
  r.loss = bg.loss;
  r.grad_norm = clip_gradients(bg.grads, cfg.grad_clip);
  if (!std::isfinite(r.loss) || !std::isfinite(r.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite loss at training step " << opt.step + 1 << ": loss = " << r.loss << ", lr = " << r.lr
        << ", grad norm = " << r.grad_norm;
    throw NumericError(msg.str());
  }
  adamw_update(mp.params, opt, bg.grads, r.lr, cfg);
  return r;
}

diffusion::Schedule Checkpoint::schedule() const {
  return diffusion::build_schedule(config.T, config.beta_min, config.beta_max, config.K, config.sigma);
}

Checkpoint initial_checkpoint(const TrainConfig& cfg, const data::Dataset& ds) {
  cfg.validate();
  num::Rng root(cfg.seed);
  num::Rng init = root.substream(kInitStream);
  Checkpoint c;
  c.config = cfg;
  c.model = model::init_model(model_config(cfg, ds.classes, ds.feature_channels), init);
  c.adam = AdamState::zeros_like(c.model.params);
  c.rng = root.state();
  return c;
}

std::filesystem::path periodic_checkpoint_path(const std::filesystem::path& final_path, std::size_t epoch) {
  auto p = final_path;
  p.replace_filename(final_path.stem().string() + ".epoch" + std::to_string(epoch) + final_path.extension().string());
  return p;
}

Checkpoint train(Checkpoint ckpt, const data::Dataset& ds, const TrainOptions& opts) {
  const TrainConfig& cfg = ckpt.config;
  cfg.validate();
  if (ds.videos.empty()) throw ValidationError("train: dataset has no videos");
  if (ckpt.model.config != model_config(cfg, ds.classes, ds.feature_channels)) {
    throw ValidationError("train: checkpoint model does not match the dataset's class/feature shape");
  }
  const auto sched = ckpt.schedule();
  const std::uint64_t per_epoch = steps_per_epoch(ds.videos.size(), cfg.batch_size);
  const std::uint64_t total = per_epoch * cfg.epochs;
  if (ckpt.adam.step != per_epoch * ckpt.epoch) {
    throw ValidationError("train: checkpoint step count does not match its epoch for this dataset");
  }
  const num::Rng root = num::Rng::from_state(ckpt.rng);

  std::ofstream metrics;
  if (opts.metrics_path) {
    metrics.open(*opts.metrics_path, ckpt.epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot open metrics file " + opts.metrics_path->string());
  }

  while (ckpt.epoch < cfg.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(cfg, ckpt.epoch, ds.videos.size());
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + cfg.batch_size)));
      const auto batch = make_batch(ds, idx, cfg.N_max);
      const num::Rng step_rng = root.substream(kStepStream + ckpt.adam.step);
      auto r = train_step(ckpt.model, ckpt.adam, batch, sched, step_rng, cfg, total);
      loss_sum += r.loss;
      lr = r.lr;
    }
    ++ckpt.epoch;
    EpochMetrics em{ckpt.epoch, loss_sum / static_cast<double>(per_epoch), lr,
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
    if (metrics.is_open()) {
      metrics << json{{"epoch", em.epoch}, {"mean_loss", em.mean_loss}, {"lr", em.lr}, {"wall_ms", em.wall_ms}}.dump()
              << "\n";
      metrics.flush();
      if (!metrics) throw IoError("failed writing metrics file " + opts.metrics_path->string());
    }
    if (opts.on_epoch) opts.on_epoch(em);
    if (opts.checkpoint_path && cfg.checkpoint_every > 0 && ckpt.epoch % cfg.checkpoint_every == 0 &&
        ckpt.epoch < cfg.epochs) {
      save_checkpoint(periodic_checkpoint_path(*opts.checkpoint_path, ckpt.epoch), ckpt);
    }
  }
  if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, ckpt);
  return ckpt;
}

}  // namespace adi::train
