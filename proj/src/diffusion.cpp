#include "adi/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adi/errors.hpp"

namespace adi::diffusion {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_step(std::size_t t, const Schedule& sched, std::size_t lo, const char* what) {
  if (t < lo || t > sched.T) {
    throw std::out_of_range(std::string(what) + ": step " + std::to_string(t) + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(sched.T) + "]");
  }
}

void check_simplex(std::span<const double> z, const char* what) {
  if (z.empty()) throw ValidationError(std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (double v : z) {
    if (!(v >= -1e-12) || !std::isfinite(v)) throw ValidationError(std::string(what) + ": negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(std::string(what) + ": entries do not sum to 1");
}

double alpha_bar_of_ramp(std::size_t T, double beta_min, double beta_max) {
  double ab = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    ab *= 1.0 - (beta_min + (beta_max - beta_min) * frac);
  }
  return ab;
}

std::vector<double> linear_betas(std::size_t T, double beta_min, double beta_max) {
  std::vector<double> betas(T);
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    betas[t - 1] = beta_min + (beta_max - beta_min) * frac;
  }
  return betas;
}

// Log Multinomial(trials, 1/C) pmf at the implied counts, or -inf when the
// counts are off the integer lattice.
double lattice_logpmf(std::span<const double> counts, std::int64_t trials) {
  double total = 0.0;
  double log_fact = 0.0;
  for (double m : counts) {
    const double snapped = std::round(m);
    if (m < -kLatticeTolerance || std::abs(m - snapped) > kLatticeTolerance) return kNegInf;
    const double k = std::max(0.0, snapped);
    total += k;
    log_fact += std::lgamma(k + 1.0);
  }
  const double n = static_cast<double>(trials);
  if (std::abs(total - n) > kLatticeTolerance) return kNegInf;
  return std::lgamma(n + 1.0) - log_fact - n * std::log(static_cast<double>(counts.size()));
}

bool nearly_equal(std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-12) return false;
  }
  return true;
}

void enumerate_compositions(std::int64_t total, std::size_t parts, std::vector<std::int64_t>& current,
                            std::vector<std::vector<std::int64_t>>& out) {
  if (parts == 1) {
    current.push_back(total);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (std::int64_t k = 0; k <= total; ++k) {
    current.push_back(k);
    enumerate_compositions(total - k, parts - 1, current, out);
    current.pop_back();
  }
}

}  // namespace

std::int64_t Schedule::jump_trials(std::size_t t) const {
  const auto n = static_cast<std::int64_t>(std::llround(B.at(t) * static_cast<double>(K)));
  return std::max<std::int64_t>(1, n);
}

Schedule schedule_from_betas(std::vector<double> betas, std::int64_t K, double sigma, bool require_convergence) {
  if (betas.empty()) throw ScheduleError("schedule needs at least one step");
  if (K < 1) throw ScheduleError("schedule trial count K must be >= 1");
  if (!(sigma > 0.0)) throw ScheduleError("schedule sigma must be positive");
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ScheduleError("schedule betas must lie in [0, 1)");
  }

  Schedule s;
  s.T = betas.size();
  s.K = K;
  s.sigma = sigma;
  s.beta_min = *std::min_element(betas.begin(), betas.end());
  s.beta_max = *std::max_element(betas.begin(), betas.end());
  s.beta.assign(s.T + 1, 0.0);
  s.alpha.assign(s.T + 1, 1.0);
  s.alpha_bar.assign(s.T + 1, 1.0);
  s.one_minus_alpha_bar.assign(s.T + 1, 0.0);
  s.B.assign(s.T + 1, 1.0);

  // denom_t = sum_i (prod_{tau=i+1..t} alpha_tau)^2 beta_i^2 = alpha_t^2 denom_{t-1} + beta_t^2
  double denom = 0.0;
  for (std::size_t t = 1; t <= s.T; ++t) {
    s.beta[t] = betas[t - 1];
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.one_minus_alpha_bar[t] = s.alpha[t] * s.one_minus_alpha_bar[t - 1] + s.beta[t];
    denom = s.alpha[t] * s.alpha[t] * denom + s.beta[t] * s.beta[t];
    s.B[t] = denom > 0.0 ? s.one_minus_alpha_bar[t] * s.one_minus_alpha_bar[t] / denom : 1.0;
  }
  s.B[1] = 1.0;

  if (require_convergence && s.alpha_bar[s.T] > kConvergenceLimit) {
    std::ostringstream msg;
    msg << "Property-1 violation: alpha_bar_T = " << s.alpha_bar[s.T] << " exceeds " << kConvergenceLimit
        << "; use larger betas or more steps";
    throw ScheduleError(msg.str());
  }
  return s;
}

Schedule build_schedule(std::size_t T, double beta_min, double beta_max, std::int64_t K, double sigma) {
  if (T < 1) throw ScheduleError("schedule needs T >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ScheduleError("schedule needs 0 < beta_min <= beta_max < 1");
  }
  if (K < 1) throw ScheduleError("schedule trial count K must be >= 1");

  const double ab = alpha_bar_of_ramp(T, beta_min, beta_max);
  if (ab > kConvergenceLimit) {
    std::ostringstream msg;
    msg << "Property-1 violation: linear ramp " << beta_min << " -> " << beta_max << " over T=" << T
        << " leaves alpha_bar_T = " << ab << " > " << kConvergenceLimit;
    if (alpha_bar_of_ramp(T, beta_min, 0.999) <= kConvergenceLimit) {
      double lo = beta_max;
      double hi = 0.999;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (alpha_bar_of_ramp(T, beta_min, mid) <= kConvergenceLimit ? hi : lo) = mid;
      }
      msg << "; beta_max must be at least " << hi << " for beta_min = " << beta_min;
    } else {
      msg << "; no beta_max < 1 suffices for beta_min = " << beta_min << ", increase T or beta_min";
    }
    throw ScheduleError(msg.str());
  }

  Schedule s = schedule_from_betas(linear_betas(T, beta_min, beta_max), K, sigma, true);
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  return s;
}

NoisyRow forward_step_with(const NoisyRow& prev, std::size_t t, const Schedule& sched, std::span<const double> v) {
  check_step(t, sched, 1, "forward_step");
  if (v.size() != prev.z.size()) throw ShapeError("forward_step: noise vector length differs from z");
  const double b = sched.beta[t];
  NoisyRow out{std::vector<double>(prev.z.size()), t};
  for (std::size_t i = 0; i < prev.z.size(); ++i) out.z[i] = (1.0 - b) * prev.z[i] + b * v[i];
  return out;
}

NoisyRow forward_step(const NoisyRow& prev, std::size_t t, const Schedule& sched, num::Rng& rng) {
  check_step(t, sched, 1, "forward_step");
  check_simplex(prev.z, "forward_step");
  const auto counts = num::multinomial_uniform(rng, sched.K, prev.z.size());
  std::vector<double> v(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) v[i] = static_cast<double>(counts[i]) / static_cast<double>(sched.K);
  return forward_step_with(prev, t, sched, v);
}

NoisyRow forward_jump(const NoisyRow& z0, std::size_t t, const Schedule& sched, num::Rng& rng) {
  check_step(t, sched, 0, "forward_jump");
  check_simplex(z0.z, "forward_jump");
  if (t == 0 || sched.one_minus_alpha_bar[t] == 0.0) return NoisyRow{z0.z, t};
  const std::int64_t n = sched.jump_trials(t);
  const auto counts = num::multinomial_uniform(rng, n, z0.z.size());
  const double keep = sched.alpha_bar[t];
  const double mix = sched.one_minus_alpha_bar[t];
  NoisyRow out{std::vector<double>(z0.z.size()), t};
  for (std::size_t i = 0; i < out.z.size(); ++i) {
    out.z[i] = keep * z0.z[i] + mix * static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return out;
}

std::pair<NoisyRow, NoisyRow> sample_pair(const NoisyRow& z0, std::size_t t, const Schedule& sched, num::Rng& rng) {
  check_step(t, sched, 1, "sample_pair");
  NoisyRow prev = forward_jump(z0, t - 1, sched, rng);
  NoisyRow cur = forward_step(prev, t, sched, rng);
  return {std::move(prev), std::move(cur)};
}

double forward_logpmf(std::span<const double> z, std::span<const double> cond, std::size_t t, const Schedule& sched,
                      Transition kind) {
  if (z.size() != cond.size() || z.empty()) throw ShapeError("forward_logpmf: length mismatch");
  check_step(t, sched, kind == Transition::step ? 1 : 0, "forward_logpmf");

  double keep = 0.0;
  double mix = 0.0;
  std::int64_t trials = 0;
  if (kind == Transition::step) {
    keep = sched.alpha[t];
    mix = sched.beta[t];
    trials = sched.K;
  } else {
    keep = sched.alpha_bar[t];
    mix = sched.one_minus_alpha_bar[t];
    trials = t == 0 ? 1 : sched.jump_trials(t);
  }
  if (mix == 0.0) return nearly_equal(z, cond) ? 0.0 : kNegInf;

  std::vector<double> counts(z.size());
  const double scale = static_cast<double>(trials) / mix;
  for (std::size_t i = 0; i < z.size(); ++i) counts[i] = scale * (z[i] - keep * cond[i]);
  return lattice_logpmf(counts, trials);
}

double posterior_logpmf(std::span<const double> z_prev, std::span<const double> z_t, std::span<const double> z0,
                        std::size_t t, const Schedule& sched, double sigma) {
  check_step(t, sched, 2, "posterior_logpmf");
  const double s = sigma > 0.0 ? sigma : sched.sigma;
  const double step = forward_logpmf(z_t, z_prev, t, sched, Transition::step);
  if (step == kNegInf) return kNegInf;
  const double jump = forward_logpmf(z_prev, z0, t - 1, sched, Transition::jump);
  if (jump == kNegInf) return kNegInf;
  return step + jump - std::log(s);
}

std::vector<std::vector<double>> jump_lattice(std::span<const double> z0, std::size_t t, const Schedule& sched) {
  check_step(t, sched, 0, "jump_lattice");
  if (t == 0 || sched.one_minus_alpha_bar[t] == 0.0) return {std::vector<double>(z0.begin(), z0.end())};
  const std::int64_t n = sched.jump_trials(t);
  std::vector<std::vector<std::int64_t>> comps;
  std::vector<std::int64_t> current;
  enumerate_compositions(n, z0.size(), current, comps);
  std::vector<std::vector<double>> out;
  out.reserve(comps.size());
  for (const auto& c : comps) {
    std::vector<double> z(z0.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = sched.alpha_bar[t] * z0[i] + sched.one_minus_alpha_bar[t] * static_cast<double>(c[i]) / static_cast<double>(n);
    }
    out.push_back(std::move(z));
  }
  return out;
}

double posterior_normalizer(std::span<const double> z_t, std::span<const double> z0, std::size_t t,
                            const Schedule& sched) {
  check_step(t, sched, 2, "posterior_normalizer");
  double total = 0.0;
  for (const auto& z_prev : jump_lattice(z0, t - 1, sched)) {
    const double lp = forward_logpmf(z_t, z_prev, t, sched, Transition::step) +
                      forward_logpmf(z_prev, z0, t - 1, sched, Transition::jump);
    if (lp != kNegInf) total += std::exp(lp);
  }
  return total;
}

namespace {

template <typename RowOp>
image::AdImage map_block_rows(const image::AdImage& in, num::Rng& rng, RowOp op) {
  const std::uint64_t key = rng.next_u64();
  image::AdImage out = in;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    num::Rng row_rng(key, r);
    auto src = in.data.row(r);
    auto dst = out.data.row(r);
    for (const auto& b : in.blocks) {
      NoisyRow z{std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                     src.begin() + static_cast<std::ptrdiff_t>(b.offset + b.width)),
                 0};
      const NoisyRow res = op(z, row_rng);
      std::copy(res.z.begin(), res.z.end(), dst.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
  }
  return out;
}

}  // namespace

image::AdImage forward_step_image(const image::AdImage& prev, std::size_t t, const Schedule& sched, num::Rng& rng) {
  return map_block_rows(prev, rng, [&](const NoisyRow& z, num::Rng& r) { return forward_step(z, t, sched, r); });
}

image::AdImage forward_jump_image(const image::AdImage& x0, std::size_t t, const Schedule& sched, num::Rng& rng) {
  return map_block_rows(x0, rng, [&](const NoisyRow& z, num::Rng& r) { return forward_jump(z, t, sched, r); });
}

std::pair<image::AdImage, image::AdImage> sample_pair_image(const image::AdImage& x0, std::size_t t,
                                                            const Schedule& sched, num::Rng& rng) {
  check_step(t, sched, 1, "sample_pair");
  const std::uint64_t key = rng.next_u64();
  image::AdImage prev = x0;
  image::AdImage cur = x0;
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    num::Rng row_rng(key, r);
    auto src = x0.data.row(r);
    for (const auto& b : x0.blocks) {
      NoisyRow z{std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                     src.begin() + static_cast<std::ptrdiff_t>(b.offset + b.width)),
                 0};
      auto [p, c] = sample_pair(z, t, sched, row_rng);
      std::copy(p.z.begin(), p.z.end(), prev.data.row(r).begin() + static_cast<std::ptrdiff_t>(b.offset));
      std::copy(c.z.begin(), c.z.end(), cur.data.row(r).begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
  }
  return {std::move(prev), std::move(cur)};
}

std::vector<image::AdImage> init_noise(std::size_t rows, image::ImageKind kind, const std::vector<image::Block>& blocks,
                                       const Schedule& sched, num::Rng& rng, std::size_t samples) {
  if (samples < 1) throw ValidationError("init_noise: need at least one sample");
  const std::int64_t n = sched.jump_trials(sched.T);
  std::vector<image::AdImage> out;
  out.reserve(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    image::AdImage img = image::uniform_image(rows, kind, blocks);
    const std::uint64_t key = rng.next_u64();
    for (std::size_t r = 0; r < rows; ++r) {
      num::Rng row_rng(key, r);
      auto dst = img.data.row(r);
      for (const auto& b : blocks) {
        const auto counts = num::multinomial_uniform(row_rng, n, b.width);
        for (std::size_t c = 0; c < b.width; ++c) {
          dst[b.offset + c] = static_cast<double>(counts[c]) / static_cast<double>(n);
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace adi::diffusion
