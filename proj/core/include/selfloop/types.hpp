#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace selfloop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad user input: malformed config, violated simplex constraint, bad ranges.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: singular system, divergence past the guard norm.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tolerance for the mixture simplex constraint. Strict enough to catch typos,
/// loose enough for 0.1 + 0.2 style decimal literals.
inline constexpr double simplex_tolerance = 1e-12;

/// A matrix factorization with reciprocal condition below this is treated as
/// singular (condition estimate above 1e12), not warned about.
inline constexpr double rcond_floor = 1e-12;

/// Per-model data-source weights. lambda_real + lambda_synth + lambda_cur
/// must equal 1; cross_fraction is the share of the synthetic and curated
/// channels generated by the peer model.
struct MixtureSpec {
  double lambda_real{1.0};
  double lambda_synth{0.0};
  double lambda_cur{0.0};
  double cross_fraction{0.0};
};

/// Returns the spec unchanged when valid. Throws ValidationError on negative
/// weights, weights above 1, or a simplex violation beyond simplex_tolerance.
/// No operation elsewhere re-normalizes silently.
MixtureSpec validate_mixture(const MixtureSpec& spec);

enum class UpdateSchedule { synchronous, async_theta_first, async_phi_first };

UpdateSchedule parse_schedule(std::string_view name);
std::string_view schedule_name(UpdateSchedule schedule);

using RunSeed = std::uint64_t;

/// Regularity constants of the coupled system: strong-convexity moduli,
/// smoothness constants, distribution sensitivities, model/reward Lipschitz
/// constant, data-space norm bound, and curation candidate count.
struct RegularityConstants {
  double gamma_theta{1.0};
  double gamma_phi{1.0};
  double L_theta{1.0};
  double L_phi{1.0};
  double eps_theta{0.0};
  double eps_phi{0.0};
  double lipschitz_L{1.0};
  double data_bound_B{1.0};
  int curation_K{1};
};

/// Throws ValidationError unless all constants are positive where required
/// (sensitivities may be zero) and curation_K >= 1.
RegularityConstants validate_constants(const RegularityConstants& c);

void ensure_finite(const Vec& v, const char* what);
void ensure_finite(double x, const char* what);

}  // namespace selfloop
