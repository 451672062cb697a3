#include "adi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "adi/errors.hpp"

namespace adi::num {
namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + kGamma) ^ mix64(stream * 0xd1b54a32d192ed03ULL + 0x8bb84b93962eacc9ULL));
}

double log_binomial_pmf(std::int64_t n, std::int64_t k, double log_p, double log_q) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0) + static_cast<double>(k) * log_p +
         static_cast<double>(n - k) * log_q;
}

// Inversion from k = 0; used while q^n stays far from underflow.
std::int64_t binomial_inversion(Rng& rng, std::int64_t n, double p) {
  const double q = 1.0 - p;
  const double ratio = p / q;
  double f = std::pow(q, static_cast<double>(n));
  double u = rng.uniform();
  std::int64_t k = 0;
  while (u >= f && k < n) {
    u -= f;
    ++k;
    f *= ratio * static_cast<double>(n - k + 1) / static_cast<double>(k);
  }
  return k;
}

// Inversion that starts at the mode and walks outward, alternating sides.
std::int64_t binomial_mode_search(Rng& rng, std::int64_t n, double p) {
  const double q = 1.0 - p;
  const double ratio = p / q;
  const std::int64_t mode =
      std::min<std::int64_t>(n, static_cast<std::int64_t>(std::floor(static_cast<double>(n + 1) * p)));
  const double f_mode = std::exp(log_binomial_pmf(n, mode, std::log(p), std::log(q)));

  double u = rng.uniform() - f_mode;
  if (u < 0.0) return mode;

  std::int64_t lo = mode - 1;
  std::int64_t hi = mode + 1;
  double f_lo = lo >= 0 ? f_mode * static_cast<double>(mode) / (static_cast<double>(n - mode + 1) * ratio) : 0.0;
  double f_hi = hi <= n ? f_mode * ratio * static_cast<double>(n - mode) / static_cast<double>(mode + 1) : 0.0;

  while (lo >= 0 || hi <= n) {
    if (hi <= n) {
      u -= f_hi;
      if (u < 0.0) return hi;
      f_hi *= ratio * static_cast<double>(n - hi) / static_cast<double>(hi + 1);
      ++hi;
    }
    if (lo >= 0) {
      u -= f_lo;
      if (u < 0.0) return lo;
      f_lo *= static_cast<double>(lo) / (static_cast<double>(n - lo + 1) * ratio);
      --lo;
    }
  }
  // Only reachable through rounding of the tail mass.
  return mode;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : key_(derive_key(seed, stream)), counter_(0) {}

Rng Rng::from_state(State s) {
  Rng r;
  r.key_ = s.key;
  r.counter_ = s.counter;
  return r;
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGamma);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below requires n > 0");
  const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::substream(std::uint64_t stream) const {
  Rng r;
  r.key_ = derive_key(key_, stream);
  r.counter_ = 0;
  return r;
}

Rng Rng::fork() {
  Rng r;
  r.key_ = derive_key(next_u64(), 0);
  r.counter_ = 0;
  return r;
}

std::int64_t binomial(Rng& rng, std::int64_t trials, double p) {
  if (trials < 0) throw ValidationError("binomial: negative trial count");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binomial: p outside [0, 1]");
  if (trials == 0 || p == 0.0) return 0;
  if (p == 1.0) return trials;
  if (p > 0.5) return trials - binomial(rng, trials, 1.0 - p);
  if (static_cast<double>(trials) * p < 30.0) return binomial_inversion(rng, trials, p);
  return binomial_mode_search(rng, trials, p);
}

std::vector<std::int64_t> multinomial_sample(Rng& rng, std::int64_t trials, std::span<const double> probs) {
  if (trials < 1) throw ValidationError("multinomial_sample: trials must be >= 1");
  if (probs.empty()) throw ValidationError("multinomial_sample: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ValidationError("multinomial_sample: probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("multinomial_sample: probabilities sum to " + std::to_string(total) + ", not 1");
  }

  std::vector<std::int64_t> counts(probs.size(), 0);
  std::int64_t remaining = trials;
  double mass = 1.0;
  for (std::size_t i = 0; i + 1 < probs.size() && remaining > 0; ++i) {
    const double cond = mass > 0.0 ? std::clamp(probs[i] / mass, 0.0, 1.0) : 0.0;
    counts[i] = binomial(rng, remaining, cond);
    remaining -= counts[i];
    mass -= probs[i];
  }
  counts.back() += remaining;
  return counts;
}

std::vector<std::int64_t> multinomial_uniform(Rng& rng, std::int64_t trials, std::size_t classes) {
  if (trials < 1) throw ValidationError("multinomial_uniform: trials must be >= 1");
  if (classes == 0) throw ValidationError("multinomial_uniform: zero classes");
  std::vector<std::int64_t> counts(classes, 0);
  std::int64_t remaining = trials;
  for (std::size_t i = 0; i + 1 < classes && remaining > 0; ++i) {
    counts[i] = binomial(rng, remaining, 1.0 / static_cast<double>(classes - i));
    remaining -= counts[i];
  }
  counts.back() += remaining;
  return counts;
}

}  // namespace adi::num
