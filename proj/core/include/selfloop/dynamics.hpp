#pragma once

#include <selfloop/gaussian.hpp>
#include <selfloop/rng.hpp>
#include <selfloop/types.hpp>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace selfloop::dynamics {

enum class SourceTag : std::uint8_t {
  real = 0,
  self_synth = 1,
  cross_synth = 2,
  self_curated = 3,
  cross_curated = 4,
};
inline constexpr int source_tag_count = 5;
std::string_view source_tag_name(SourceTag tag);

struct DataBatch {
  std::vector<Vec> samples;
  std::vector<SourceTag> tags;

  int count(SourceTag tag) const;
};

/// Largest-remainder allocation of n samples over the five source tags
/// (real, self-synth, cross-synth, self-curated, cross-curated). Exact
/// quotas are n * weight; floors are taken first and leftover units go to
/// the largest fractional remainders, ties broken by tag order. Deterministic
/// given n and the spec.
std::array<int, source_tag_count> allocate_counts(const MixtureSpec& spec, int n);

/// Draws index k with probability exp(r_k) / sum_j exp(r_j), computed with
/// max-subtraction. Throws ValidationError on an empty candidate list or
/// non-finite rewards.
int bradley_terry_select(std::span<const double> rewards, Rng& rng);

/// Raw per-channel sample generators for one model.
struct Generators {
  std::function<Vec(Rng&)> real;
  std::function<Vec(Rng&)> self_synth;
  std::function<Vec(Rng&)> cross_synth;
};

/// How curated samples are produced. When direct generators are set the
/// curated channels sample them as-is (the Gaussian system already encodes
/// curation as the shifted mixture component). Otherwise K candidates are
/// drawn from the corresponding synthetic generator and one is kept by
/// Bradley-Terry selection under `reward`.
struct CurationPolicy {
  std::function<Vec(Rng&)> direct_self;
  std::function<Vec(Rng&)> direct_cross;
  std::function<double(const Vec&)> reward;
  int K{2};
};

/// Assembles one training batch: largest-remainder source counts, generator
/// draws, curation per policy. Sample order is real, self-synth, cross-synth,
/// self-curated, cross-curated.
DataBatch sample_mixture_batch(const MixtureSpec& spec, int n, const Generators& gen,
                               const CurationPolicy& cur, Rng& rng);

/// Exact argmin of the empirical quadratic loss 1/2 |theta - z|^2: the batch
/// mean. Throws ValidationError on an empty batch.
Vec fit_quadratic_loss(const DataBatch& batch);

struct LoopConfig {
  MixtureSpec theta_mix;
  MixtureSpec phi_mix;
  UpdateSchedule schedule{UpdateSchedule::synchronous};
  int iterations{100};
  /// Samples per model update; empty selects exact-expectation mode where
  /// each update is the population mean of its mixture.
  std::optional<int> batch_size{};
  double divergence_guard{1e6};
  /// First iteration (1-based) of the tail window used for the fixed-point
  /// estimate; with the 100-iteration protocol this is 81 (mean over 81..100).
  int tail_start{81};
  Vec theta0;  // empty -> zero start
  Vec phi0;
};

struct Trajectory {
  std::vector<Vec> theta;  // length iterations + 1, including the start state
  std::vector<Vec> phi;
  std::vector<double> J_p;
  std::vector<double> J_q;
  Vec tail_mean_theta;
  Vec tail_mean_phi;
  RunSeed seed{};
};

/// Runs the iterative retraining loop on the Gaussian system. Exact mode
/// reduces the theta update to lambda_real mu_R + (1 - lambda_real) mix +
/// lambda_cur a with mix the cross-weighted combination of phi and A theta;
/// finite-sample mode fits the quadratic loss on a sampled mixture batch.
/// Asynchronous schedules use the already-updated peer parameter for
/// cross-generation within the round. Throws NumericError when a parameter
/// norm passes the divergence guard.
Trajectory run_loop(const gaussian::GaussianSystem& sys, const LoopConfig& cfg, RunSeed seed);

/// Relative parameter change |x_t - x_{t-j}| / |x_{t-j}| for t = j..T.
/// Entries with a zero denominator are reported as NaN.
std::vector<double> convergence_metric(const std::vector<Vec>& params, int lag);

struct ContractionEstimate {
  /// exp(lag * slope) of the least-squares fit of log distance vs iteration:
  /// the contraction factor per `lag` iterations.
  double rate{};
  std::optional<double> theoretical_kappa{};
};

/// Least-squares contraction estimate from a distance-to-fixed-point series.
/// Throws ValidationError with fewer than 3 usable points or when the series
/// starts at the fixed point. Rates above 1 are reported, not errors.
ContractionEstimate contraction_rate_from_distances(std::span<const double> distances, int lag);

ContractionEstimate empirical_contraction_rate(const Trajectory& traj, const gaussian::FixedPoint& star,
                                               int lag = 1,
                                               const RegularityConstants* constants = nullptr);

}  // namespace selfloop::dynamics
