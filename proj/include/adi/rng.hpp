#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace adi::num {

/// Counter-based generator: the i-th output is SplitMix64's finaliser applied
/// to key + i * golden_gamma. Pure integer arithmetic, so a given (key,
/// counter) pair yields the same bits on every platform.
class Rng {
 public:
  struct State {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;
    bool operator==(const State&) const = default;
  };

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static Rng from_state(State s);
  State state() const { return {key_, counter_}; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one variate per two uniforms).
  double normal();

  /// Independent child stream; does not advance this generator.
  Rng substream(std::uint64_t stream) const;

  /// Child stream keyed by the next output; advances this generator by one.
  Rng fork();

 private:
  Rng() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Exact Binomial(trials, p) draw.
std::int64_t binomial(Rng& rng, std::int64_t trials, double p);

/// Multinomial(trials, probs) counts via sequential conditional binomials.
/// Throws ValidationError when probs is not a simplex within 1e-9 or trials < 1.
std::vector<std::int64_t> multinomial_sample(Rng& rng, std::int64_t trials,
                                             std::span<const double> probs);

/// Multinomial(trials, 1/C * 1) counts.
std::vector<std::int64_t> multinomial_uniform(Rng& rng, std::int64_t trials, std::size_t classes);

}  // namespace adi::num
