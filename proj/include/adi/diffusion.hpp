#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "adi/adimage.hpp"
#include "adi/rng.hpp"

namespace adi::diffusion {

/// Upper bound on alpha_bar_T for a schedule to count as converged to uniform.
inline constexpr double kConvergenceLimit = 1e-3;

/// Tolerance (in count units) for deciding lattice membership of an implied
/// Multinomial count vector.
inline constexpr double kLatticeTolerance = 1e-6;

/// Multinomial noise schedule. Vectors are indexed by step t = 0..T; entry 0
/// describes the clean state (beta 0, alpha_bar 1).
struct Schedule {
  std::size_t T = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::int64_t K = 1;
  double sigma = 1.0;

  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  /// 1 - alpha_bar, accumulated without cancellation.
  std::vector<double> one_minus_alpha_bar;
  /// Effective trial-count multiplier of the t-step jump.
  std::vector<double> B;

  /// Trials of the t-step jump draw: max(1, round(B_t * K)).
  std::int64_t jump_trials(std::size_t t) const;
};

/// Linear beta ramp from beta_min to beta_max over T steps. Throws
/// ScheduleError when alpha_bar_T > kConvergenceLimit, naming the beta_max
/// that would be needed.
Schedule build_schedule(std::size_t T, double beta_min, double beta_max, std::int64_t K, double sigma = 1.0);

/// Schedule from explicit betas (t = 1..T). With require_convergence false,
/// the alpha_bar_T gate is skipped; used for analysis and tests.
Schedule schedule_from_betas(std::vector<double> betas, std::int64_t K, double sigma = 1.0,
                             bool require_convergence = true);

/// One row distribution at diffusion step t.
struct NoisyRow {
  std::vector<double> z;
  std::size_t t = 0;
};

/// z_t = (1 - beta_t) z_{t-1} + beta_t v_t with K v_t ~ Multinomial(K, 1/C).
NoisyRow forward_step(const NoisyRow& prev, std::size_t t, const Schedule& sched, num::Rng& rng);

/// The same update with a caller-supplied noise vector v_t (a simplex).
NoisyRow forward_step_with(const NoisyRow& prev, std::size_t t, const Schedule& sched, std::span<const double> v);

/// z_t = alpha_bar_t z_0 + (1 - alpha_bar_t) counts / n, counts ~ Multinomial(n, 1/C),
/// n = jump_trials(t). t = 0 returns z_0 unchanged.
NoisyRow forward_jump(const NoisyRow& z0, std::size_t t, const Schedule& sched, num::Rng& rng);

/// (z_{t-1}, z_t): jump to t-1, then one forward step.
std::pair<NoisyRow, NoisyRow> sample_pair(const NoisyRow& z0, std::size_t t, const Schedule& sched, num::Rng& rng);

enum class Transition { step, jump };

/// Log-likelihood of z given cond under a single step (cond = z_{t-1}) or a
/// t-step jump (cond = z_0). Returns -infinity off the support lattice.
double forward_logpmf(std::span<const double> z, std::span<const double> cond, std::size_t t, const Schedule& sched,
                      Transition kind);

/// log q(z_t | z_prev) + log q(z_prev | z_0) - log sigma for 2 <= t <= T.
/// sigma defaults to the schedule's fixed value when not positive.
double posterior_logpmf(std::span<const double> z_prev, std::span<const double> z_t, std::span<const double> z0,
                        std::size_t t, const Schedule& sched, double sigma = 0.0);

/// All points reachable by the t-step jump from z0. Exponential in C; meant
/// for small C.
std::vector<std::vector<double>> jump_lattice(std::span<const double> z0, std::size_t t, const Schedule& sched);

/// Exact posterior normaliser: sum over the jump lattice at t-1 of the two
/// forward likelihoods.
double posterior_normalizer(std::span<const double> z_t, std::span<const double> z0, std::size_t t,
                            const Schedule& sched);

// Whole-image variants. Each draws one key from `rng`; row r then uses
// Rng(key, r) for its blocks in order, so results do not depend on how many
// other rows the image has.

image::AdImage forward_step_image(const image::AdImage& prev, std::size_t t, const Schedule& sched, num::Rng& rng);
image::AdImage forward_jump_image(const image::AdImage& x0, std::size_t t, const Schedule& sched, num::Rng& rng);
std::pair<image::AdImage, image::AdImage> sample_pair_image(const image::AdImage& x0, std::size_t t,
                                                            const Schedule& sched, num::Rng& rng);

/// M independent step-T images: each block-row is counts / n_T with
/// counts ~ Multinomial(n_T, 1/width).
std::vector<image::AdImage> init_noise(std::size_t rows, image::ImageKind kind, const std::vector<image::Block>& blocks,
                                       const Schedule& sched, num::Rng& rng, std::size_t samples);

}  // namespace adi::diffusion
