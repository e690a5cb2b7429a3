#include <selfloop/types.hpp>

#include <cmath>
#include <sstream>

namespace selfloop {

MixtureSpec validate_mixture(const MixtureSpec& spec) {
  auto bad = [&](const std::string& why) {
    std::ostringstream os;
    os << "invalid mixture (" << spec.lambda_real << ", " << spec.lambda_synth << ", "
       << spec.lambda_cur << ", cross " << spec.cross_fraction << "): " << why;
    throw ValidationError(os.str());
  };
  for (double w : {spec.lambda_real, spec.lambda_synth, spec.lambda_cur, spec.cross_fraction}) {
    if (!std::isfinite(w)) bad("non-finite weight");
    if (w < 0.0) bad("negative weight");
    if (w > 1.0) bad("weight above 1");
  }
  const double sum = spec.lambda_real + spec.lambda_synth + spec.lambda_cur;
  if (std::abs(sum - 1.0) > simplex_tolerance) {
    std::ostringstream os;
    os << "weights sum to " << sum;
    bad(os.str());
  }
  return spec;
}

UpdateSchedule parse_schedule(std::string_view name) {
  if (name == "synchronous") return UpdateSchedule::synchronous;
  if (name == "async-theta-first") return UpdateSchedule::async_theta_first;
  if (name == "async-phi-first") return UpdateSchedule::async_phi_first;
  throw ValidationError("unknown update schedule: " + std::string(name));
}

std::string_view schedule_name(UpdateSchedule schedule) {
  switch (schedule) {
    case UpdateSchedule::synchronous: return "synchronous";
    case UpdateSchedule::async_theta_first: return "async-theta-first";
    case UpdateSchedule::async_phi_first: return "async-phi-first";
  }
  return "?";
}

RegularityConstants validate_constants(const RegularityConstants& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("regularity constants: ") + what);
  };
  require(c.gamma_theta > 0 && c.gamma_phi > 0, "strong-convexity moduli must be positive");
  require(c.L_theta > 0 && c.L_phi > 0, "smoothness constants must be positive");
  require(c.eps_theta >= 0 && c.eps_phi >= 0, "sensitivities must be nonnegative");
  require(c.lipschitz_L > 0, "Lipschitz constant must be positive");
  require(c.data_bound_B > 0, "data bound must be positive");
  require(c.curation_K >= 1, "curation count must be at least 1");
  for (double v : {c.gamma_theta, c.gamma_phi, c.L_theta, c.L_phi, c.eps_theta, c.eps_phi,
                   c.lipschitz_L, c.data_bound_B}) {
    require(std::isfinite(v), "all constants must be finite");
  }
  return c;
}

void ensure_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

void ensure_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace selfloop
