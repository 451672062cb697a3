#include "adi/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "adi/errors.hpp"

namespace adi::infer {

using num::Matrix;

void DecodeConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("decode: delta must lie in (0, 1)");
  if (samples < 1) throw ConfigError("decode: samples must be >= 1");
  if (!(nms_sigma > 0.0)) throw ConfigError("decode: nms_sigma must be > 0");
  if (!(score_floor >= 0.0)) throw ConfigError("decode: score_floor must be >= 0");
  if (max_candidates < 1) throw ConfigError("decode: max_candidates must be >= 1");
}

Denoiser model_denoiser(const model::ModelParams& mp, const Matrix& features, std::span<const double> mask,
                        std::size_t T) {
  std::vector<double> m(mask.begin(), mask.end());
  return [&mp, &features, m = std::move(m), T](const image::AdImage& x_t, std::size_t t) {
    return model::forward(mp, x_t, features, model::step_embedding(t, T, x_t.rows()), m);
  };
}

image::AdImage reverse_chain(const Denoiser& denoise, std::size_t rows, image::ImageKind kind,
                             const std::vector<image::Block>& blocks, const diffusion::Schedule& sched,
                             const DecodeConfig& cfg, num::Rng& rng) {
  cfg.validate();
  auto chains = diffusion::init_noise(rows, kind, blocks, sched, rng, cfg.samples);
  for (auto& x : chains) {
    for (std::size_t t = sched.T; t >= 1; --t) x = denoise(x, t);
  }
  image::AdImage out{Matrix(rows, chains.front().width()), blocks, kind};
  for (const auto& x : chains) {
    auto dst = out.data.data();
    auto src = x.data.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& b : blocks) {
      double s = 0.0;
      for (std::size_t c = 0; c < b.width; ++c) s += out.data(r, b.offset + c);
      for (std::size_t c = 0; c < b.width; ++c) out.data(r, b.offset + c) /= s;
    }
  }
  return out;
}

image::AdImage reverse_chain(const model::ModelParams& mp, const Matrix& features, std::span<const double> mask,
                             const diffusion::Schedule& sched, const DecodeConfig& cfg, num::Rng& rng) {
  return reverse_chain(model_denoiser(mp, features, mask, sched.T), features.rows(), mp.config.kind,
                       mp.config.blocks(), sched, cfg, rng);
}

std::vector<std::size_t> extract_boundaries(std::span<const double> probs, double delta) {
  std::vector<std::size_t> out;
  std::size_t i = 0;
  while (i < probs.size()) {
    if (!(probs[i] > delta)) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    while (i < probs.size() && probs[i] > delta) ++i;
    // Mean of first..i-1 is (first + i - 1) / 2; half rounds up.
    out.push_back((first + i) / 2);
  }
  return out;
}

std::vector<Detection> generate_candidates(const image::AdImage& combined, std::size_t valid_rows, double delta,
                                           std::size_t max_candidates, const std::string& video_id) {
  const auto parts = image::unstitch(combined);
  const std::size_t n = std::min(valid_rows, combined.rows());
  std::vector<double> ps(n), pe(n);
  for (std::size_t r = 0; r < n; ++r) {
    ps[r] = parts.start.data(r, 0);
    pe[r] = parts.end.data(r, 0);
  }
  const auto starts = extract_boundaries(ps, delta);
  const auto ends = extract_boundaries(pe, delta);
  const Matrix& a = parts.action.data;
  const std::size_t classes = a.cols();

  // Prefix sums of the action columns make each span mean O(C).
  Matrix prefix(n + 1, classes);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < classes; ++c) prefix(r + 1, c) = prefix(r, c) + a(r, c);

  std::vector<Detection> cands;
  for (std::size_t s : starts) {
    for (std::size_t e : ends) {
      if (e <= s) continue;
      const double len = static_cast<double>(e - s + 1);
      int best = 1;
      double best_mean = -1.0;
      for (std::size_t c = 1; c < classes; ++c) {
        const double mean = (prefix(e + 1, c) - prefix(s, c)) / len;
        if (mean > best_mean) {
          best_mean = mean;
          best = static_cast<int>(c);
        }
      }
      cands.push_back({video_id, s, e, best, std::cbrt(ps[s] * pe[e] * best_mean)});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Detection& x, const Detection& y) { return x.score > y.score; });
  if (cands.size() > max_candidates) cands.resize(max_candidates);
  return cands;
}

std::vector<Detection> soft_nms(std::vector<Detection> cands, double sigma, double floor) {
  std::vector<Detection> kept;
  while (!cands.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
      if (cands[i].score > cands[best].score) best = i;
    }
    const Detection top = cands[best];
    cands.erase(cands.begin() + static_cast<std::ptrdiff_t>(best));
    kept.push_back(top);
    std::vector<Detection> rest;
    rest.reserve(cands.size());
    for (auto& c : cands) {
      const double iou = eval::tiou(top.start, top.end, c.start, c.end);
      c.score *= std::exp(-iou * iou / sigma);
      if (c.score >= floor) rest.push_back(std::move(c));
    }
    cands = std::move(rest);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Detection& x, const Detection& y) { return x.score > y.score; });
  return kept;
}

std::vector<Detection> decode(const image::AdImage& combined, std::size_t valid_rows, const DecodeConfig& cfg,
                              const std::string& video_id) {
  cfg.validate();
  return soft_nms(generate_candidates(combined, valid_rows, cfg.delta, cfg.max_candidates, video_id), cfg.nms_sigma,
                  cfg.score_floor);
}

namespace {

std::size_t count_valid(std::span<const double> mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](double m) { return m != 0.0; }));
}

}  // namespace

std::vector<Detection> detect(const model::ModelParams& mp, const Matrix& features, std::span<const double> mask,
                              const diffusion::Schedule& sched, const DecodeConfig& cfg, num::Rng& rng,
                              const std::string& video_id) {
  if (mp.config.kind != image::ImageKind::combined) {
    throw ValidationError("detect: expected a combined-image model, got " + std::string(image::to_string(mp.config.kind)));
  }
  const auto x0 = reverse_chain(mp, features, mask, sched, cfg, rng);
  return decode(x0, count_valid(mask), cfg, video_id);
}

std::vector<Detection> detect_separate(const SeparateModels& models, const Matrix& features,
                                       std::span<const double> mask, const diffusion::Schedule& sched,
                                       const DecodeConfig& cfg, num::Rng& rng, const std::string& video_id) {
  if (models.action.config.kind != image::ImageKind::action || models.start.config.kind != image::ImageKind::start ||
      models.end.config.kind != image::ImageKind::end) {
    throw ValidationError("detect_separate: models must be action, start and end image models");
  }
  num::Rng ra = rng.substream(0), rs = rng.substream(1), re = rng.substream(2);
  auto a = reverse_chain(models.action, features, mask, sched, cfg, ra);
  auto s = reverse_chain(models.start, features, mask, sched, cfg, rs);
  auto e = reverse_chain(models.end, features, mask, sched, cfg, re);
  return decode(image::stitch(a, s, e), count_valid(mask), cfg, video_id);
}

std::vector<Detection> detect_dataset(const data::Dataset& ds, const VideoDetector& detector, std::uint64_t seed,
                                      std::size_t jobs) {
  const std::size_t n = ds.videos.size();
  std::vector<std::vector<Detection>> per_video(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        num::Rng rng(seed, i);
        per_video[i] = detector(ds.videos[i], rng);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<Detection> out;
  for (auto& v : per_video) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace adi::infer
