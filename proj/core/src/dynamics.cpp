#include <selfloop/dynamics.hpp>

#include <selfloop/sensitivity.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace selfloop::dynamics {

std::string_view source_tag_name(SourceTag tag) {
  switch (tag) {
    case SourceTag::real: return "real";
    case SourceTag::self_synth: return "self-synth";
    case SourceTag::cross_synth: return "cross-synth";
    case SourceTag::self_curated: return "self-curated";
    case SourceTag::cross_curated: return "cross-curated";
  }
  return "?";
}

int DataBatch::count(SourceTag tag) const {
  return static_cast<int>(std::count(tags.begin(), tags.end(), tag));
}

std::array<int, source_tag_count> allocate_counts(const MixtureSpec& spec, int n) {
  validate_mixture(spec);
  if (n < 1) throw ValidationError("batch size must be at least 1");
  const double x = spec.cross_fraction;
  const std::array<double, source_tag_count> quotas = {
      n * spec.lambda_real,
      n * spec.lambda_synth * (1.0 - x),
      n * spec.lambda_synth * x,
      n * spec.lambda_cur * (1.0 - x),
      n * spec.lambda_cur * x,
  };
  std::array<int, source_tag_count> counts{};
  std::array<double, source_tag_count> remainders{};
  int total = 0;
  for (int i = 0; i < source_tag_count; ++i) {
    counts[i] = static_cast<int>(std::floor(quotas[i] + 1e-9));
    remainders[i] = quotas[i] - counts[i];
    total += counts[i];
  }
  // Hand leftover units to the largest remainders; ties resolve in tag order.
  std::array<int, source_tag_count> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int k = 0; total < n; ++k) {
    counts[order[static_cast<std::size_t>(k) % source_tag_count]] += 1;
    ++total;
  }
  return counts;
}

int bradley_terry_select(std::span<const double> rewards, Rng& rng) {
  if (rewards.empty()) throw ValidationError("bradley_terry_select: empty candidate list");
  double max_r = -std::numeric_limits<double>::infinity();
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ValidationError("bradley_terry_select: non-finite reward");
    max_r = std::max(max_r, r);
  }
  double total = 0.0;
  std::vector<double> weights(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    weights[i] = std::exp(rewards[i] - max_r);
    total += weights[i];
  }
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(rewards.size()) - 1;  // u == total due to rounding
}

namespace {

Vec curated_draw(const std::function<Vec(Rng&)>& direct, const std::function<Vec(Rng&)>& synth,
                 const CurationPolicy& cur, Rng& rng) {
  if (direct) return direct(rng);
  if (!cur.reward) throw ValidationError("curation policy needs a direct generator or a reward");
  if (cur.K < 1) throw ValidationError("curation candidate count must be at least 1");
  std::vector<Vec> candidates;
  std::vector<double> rewards;
  candidates.reserve(cur.K);
  rewards.reserve(cur.K);
  for (int k = 0; k < cur.K; ++k) {
    candidates.push_back(synth(rng));
    rewards.push_back(cur.reward(candidates.back()));
  }
  return candidates[bradley_terry_select(rewards, rng)];
}

}  // namespace

DataBatch sample_mixture_batch(const MixtureSpec& spec, int n, const Generators& gen,
                               const CurationPolicy& cur, Rng& rng) {
  const auto counts = allocate_counts(spec, n);
  DataBatch batch;
  batch.samples.reserve(n);
  batch.tags.reserve(n);
  auto emit = [&](SourceTag tag, int count, const std::function<Vec(Rng&)>& draw) {
    if (count > 0 && !draw) {
      throw ValidationError(std::string("no generator for source ") +
                            std::string(source_tag_name(tag)));
    }
    for (int k = 0; k < count; ++k) {
      Vec z = draw(rng);
      ensure_finite(z, "sampled data point");
      batch.samples.push_back(std::move(z));
      batch.tags.push_back(tag);
    }
  };
  emit(SourceTag::real, counts[0], gen.real);
  emit(SourceTag::self_synth, counts[1], gen.self_synth);
  emit(SourceTag::cross_synth, counts[2], gen.cross_synth);
  emit(SourceTag::self_curated, counts[3],
       [&](Rng& r) { return curated_draw(cur.direct_self, gen.self_synth, cur, r); });
  emit(SourceTag::cross_curated, counts[4],
       [&](Rng& r) { return curated_draw(cur.direct_cross, gen.cross_synth, cur, r); });
  return batch;
}

Vec fit_quadratic_loss(const DataBatch& batch) {
  if (batch.samples.empty()) throw ValidationError("fit_quadratic_loss: empty batch");
  Vec mean = Vec::Zero(batch.samples.front().size());
  for (const auto& z : batch.samples) mean += z;
  return mean / static_cast<double>(batch.samples.size());
}

namespace {

struct GaussianUpdater {
  const gaussian::GaussianSystem& sys;
  const LoopConfig& cfg;
  Mat A;

  // Population means of each channel given the generating parameters.
  // Model theta: self channel N(phi, s^2), cross channel N(A theta, s^2),
  // curated channels shifted by a. Model phi: self N(A theta, s^2), cross
  // N(phi, s^2); its curated channel carries no shift (the reference system
  // wires curation only into the theta model).
  Vec exact_theta_update(const Vec& theta_in, const Vec& phi_in) const {
    const auto& m = cfg.theta_mix;
    const Vec self_mean = phi_in;
    const Vec cross_mean = A * theta_in;
    const Vec mix = (1.0 - m.cross_fraction) * self_mean + m.cross_fraction * cross_mean;
    return m.lambda_real * sys.real_mean + (m.lambda_synth + m.lambda_cur) * mix +
           m.lambda_cur * sys.a;
  }

  Vec exact_phi_update(const Vec& theta_in, const Vec& phi_in) const {
    const auto& m = cfg.phi_mix;
    const Vec self_mean = A * theta_in;
    const Vec cross_mean = phi_in;
    const Vec mix = (1.0 - m.cross_fraction) * self_mean + m.cross_fraction * cross_mean;
    return m.lambda_real * sys.real_mean + (m.lambda_synth + m.lambda_cur) * mix;
  }

  Vec gaussian_point(const Vec& mean, Rng& rng) const {
    Vec z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = mean[i] + sys.sigma * rng.normal();
    return z;
  }

  // Batch mean without materializing the batch. Draw order matches
  // sample_mixture_batch (tag order, one sample at a time), so the generic
  // path produces the same trajectory from the same stream; this path just
  // skips the per-sample storage. The Monte Carlo checks lean on it.
  void accumulate_channel(Vec& sum, const Vec& mean, int count, Rng& rng) const {
    for (int k = 0; k < count; ++k) {
      for (Eigen::Index i = 0; i < sum.size(); ++i) sum[i] += mean[i] + sys.sigma * rng.normal();
    }
  }

  Vec sampled_theta_update(const Vec& theta_in, const Vec& phi_in, int n, Rng& rng) const {
    const auto counts = allocate_counts(cfg.theta_mix, n);
    const Vec cross_mean = A * theta_in;
    Vec sum = Vec::Zero(theta_in.size());
    accumulate_channel(sum, sys.real_mean, counts[0], rng);
    accumulate_channel(sum, phi_in, counts[1], rng);
    accumulate_channel(sum, cross_mean, counts[2], rng);
    accumulate_channel(sum, phi_in + sys.a, counts[3], rng);
    accumulate_channel(sum, cross_mean + sys.a, counts[4], rng);
    return sum / n;
  }

  Vec sampled_phi_update(const Vec& theta_in, const Vec& phi_in, int n, Rng& rng) const {
    const auto counts = allocate_counts(cfg.phi_mix, n);
    const Vec self_mean = A * theta_in;
    Vec sum = Vec::Zero(phi_in.size());
    accumulate_channel(sum, sys.real_mean, counts[0], rng);
    accumulate_channel(sum, self_mean, counts[1], rng);
    accumulate_channel(sum, phi_in, counts[2], rng);
    accumulate_channel(sum, self_mean, counts[3], rng);
    accumulate_channel(sum, phi_in, counts[4], rng);
    return sum / n;
  }

  Vec update_theta(const Vec& theta_in, const Vec& phi_in, Rng& rng) const {
    return cfg.batch_size ? sampled_theta_update(theta_in, phi_in, *cfg.batch_size, rng)
                          : exact_theta_update(theta_in, phi_in);
  }

  Vec update_phi(const Vec& theta_in, const Vec& phi_in, Rng& rng) const {
    return cfg.batch_size ? sampled_phi_update(theta_in, phi_in, *cfg.batch_size, rng)
                          : exact_phi_update(theta_in, phi_in);
  }
};

}  // namespace

Trajectory run_loop(const gaussian::GaussianSystem& sys, const LoopConfig& cfg, RunSeed seed) {
  validate_mixture(cfg.theta_mix);
  validate_mixture(cfg.phi_mix);
  if (cfg.iterations < 1) throw ValidationError("run_loop: need at least one iteration");
  if (cfg.batch_size && *cfg.batch_size < 1) throw ValidationError("run_loop: batch size >= 1");
  if (std::abs(cfg.theta_mix.lambda_cur - sys.lambda_cur) > simplex_tolerance) {
    throw ValidationError("run_loop: theta mixture curation weight disagrees with the system");
  }

  GaussianUpdater upd{sys, cfg, sys.A()};
  Rng rng(seed);

  Trajectory traj;
  traj.seed = seed;
  const int T = cfg.iterations;
  traj.theta.reserve(T + 1);
  traj.phi.reserve(T + 1);
  traj.theta.push_back(cfg.theta0.size() ? cfg.theta0 : Vec::Zero(gaussian::dim));
  traj.phi.push_back(cfg.phi0.size() ? cfg.phi0 : Vec::Zero(gaussian::dim));

  for (int t = 0; t < T; ++t) {
    const Vec& th = traj.theta.back();
    const Vec& ph = traj.phi.back();
    Vec th_next, ph_next;
    switch (cfg.schedule) {
      case UpdateSchedule::synchronous:
        th_next = upd.update_theta(th, ph, rng);
        ph_next = upd.update_phi(th, ph, rng);
        break;
      case UpdateSchedule::async_theta_first:
        th_next = upd.update_theta(th, ph, rng);
        ph_next = upd.update_phi(th_next, ph, rng);
        break;
      case UpdateSchedule::async_phi_first:
        ph_next = upd.update_phi(th, ph, rng);
        th_next = upd.update_theta(th, ph_next, rng);
        break;
    }
    if (th_next.norm() > cfg.divergence_guard || ph_next.norm() > cfg.divergence_guard) {
      std::ostringstream os;
      os << "run_loop diverged at iteration " << (t + 1) << ": |theta| = " << th_next.norm()
         << ", |phi| = " << ph_next.norm() << " exceeded guard " << cfg.divergence_guard;
      throw NumericError(os.str());
    }
    traj.theta.push_back(std::move(th_next));
    traj.phi.push_back(std::move(ph_next));
  }

  traj.J_p.reserve(T + 1);
  traj.J_q.reserve(T + 1);
  for (int t = 0; t <= T; ++t) {
    traj.J_p.push_back(gaussian::reward_J(traj.theta[t], sys.g_p, sys.eta_p));
    traj.J_q.push_back(gaussian::reward_J(traj.phi[t], sys.g_q, sys.eta_q));
  }

  const int lo = std::clamp(cfg.tail_start, 1, T);
  traj.tail_mean_theta = Vec::Zero(traj.theta.front().size());
  traj.tail_mean_phi = Vec::Zero(traj.phi.front().size());
  for (int t = lo; t <= T; ++t) {
    traj.tail_mean_theta += traj.theta[t];
    traj.tail_mean_phi += traj.phi[t];
  }
  const double window = T - lo + 1;
  traj.tail_mean_theta /= window;
  traj.tail_mean_phi /= window;
  return traj;
}

std::vector<double> convergence_metric(const std::vector<Vec>& params, int lag) {
  if (lag < 1) throw ValidationError("convergence metric lag must be >= 1");
  std::vector<double> deltas;
  if (params.size() <= static_cast<std::size_t>(lag)) return deltas;
  deltas.reserve(params.size() - lag);
  for (std::size_t t = lag; t < params.size(); ++t) {
    const double denom = params[t - lag].norm();
    if (denom == 0.0) {
      deltas.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      deltas.push_back((params[t] - params[t - lag]).norm() / denom);
    }
  }
  return deltas;
}

ContractionEstimate contraction_rate_from_distances(std::span<const double> distances, int lag) {
  if (lag < 1) throw ValidationError("contraction lag must be >= 1");
  double dmax = 0.0;
  for (double d : distances) {
    if (std::isfinite(d)) dmax = std::max(dmax, d);
  }
  // Distances more than ~13 decades below the peak sit at the rounding floor
  // of the trajectory arithmetic; fitting them would flatten the slope.
  const double floor = dmax * 1e-13;
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t < distances.size(); ++t) {
    if (distances[t] > floor && std::isfinite(distances[t])) {
      xs.push_back(static_cast<double>(t));
      ys.push_back(std::log(distances[t]));
    }
  }
  if (xs.size() < 3) {
    throw ValidationError("contraction rate needs at least 3 nonzero distances");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  ContractionEstimate est;
  est.rate = std::exp(lag * sxy / sxx);
  return est;
}

ContractionEstimate empirical_contraction_rate(const Trajectory& traj,
                                               const gaussian::FixedPoint& star, int lag,
                                               const RegularityConstants* constants) {
  std::vector<double> dist(traj.theta.size());
  for (std::size_t t = 0; t < traj.theta.size(); ++t) {
    dist[t] = std::sqrt((traj.theta[t] - star.theta).squaredNorm() +
                        (traj.phi[t] - star.phi).squaredNorm());
  }
  if (dist.front() == 0.0) {
    throw ValidationError("trajectory starts at the fixed point; rate is degenerate");
  }
  auto est = contraction_rate_from_distances(dist, lag);
  if (constants) {
    est.theoretical_kappa = sensitivity::compute_kappa(*constants);
  }
  return est;
}

}  // namespace selfloop::dynamics
