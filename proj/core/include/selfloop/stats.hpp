#pragma once

#include <selfloop/rng.hpp>
#include <selfloop/types.hpp>

#include <functional>

namespace selfloop::stats {

struct EstimateWithCI {
  double mean{};
  double half_width{};  // 95% level, normal approximation
  int n_replicas{};
  double level{0.95};
};

/// Plain Monte Carlo: runs `statistic` once per replica on an independent
/// derived stream (Rng::derive(seed, replica)), reduces in replica order,
/// and reports mean +- 1.96 sd / sqrt(n). Requires n_replicas >= 2.
EstimateWithCI mc_estimate(const std::function<double(Rng&)>& statistic, int n_replicas,
                           RunSeed seed);

/// Central difference (f(x0+step) - f(x0-step)) / (2 step), step > 0.
double fd_derivative(const std::function<double(double)>& f, double x0, double step);

}  // namespace selfloop::stats
