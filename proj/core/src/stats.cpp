#include <selfloop/stats.hpp>

#include <cmath>
#include <vector>

namespace selfloop::stats {

EstimateWithCI mc_estimate(const std::function<double(Rng&)>& statistic, int n_replicas,
                           RunSeed seed) {
  if (n_replicas < 2) throw ValidationError("mc_estimate needs at least 2 replicas");
  std::vector<double> values(n_replicas);
  for (int i = 0; i < n_replicas; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    values[i] = statistic(rng);
    ensure_finite(values[i], "mc_estimate replica value");
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n_replicas;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n_replicas - 1));
  EstimateWithCI e;
  e.mean = mean;
  e.half_width = 1.96 * sd / std::sqrt(static_cast<double>(n_replicas));
  e.n_replicas = n_replicas;
  return e;
}

double fd_derivative(const std::function<double(double)>& f, double x0, double step) {
  if (!(step > 0)) throw ValidationError("fd_derivative: step must be positive");
  const double hi = f(x0 + step);
  const double lo = f(x0 - step);
  ensure_finite(hi, "fd_derivative f(x0+step)");
  ensure_finite(lo, "fd_derivative f(x0-step)");
  return (hi - lo) / (2.0 * step);
}

}  // namespace selfloop::stats
