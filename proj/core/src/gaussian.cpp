#include <selfloop/gaussian.hpp>

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <sstream>

namespace selfloop::gaussian {

namespace {

constexpr double deg2rad = std::numbers::pi / 180.0;

Vec solve_checked(const Mat& M, const Vec& rhs, const char* what) {
  Eigen::PartialPivLU<Mat> lu(M);
  const double rc = lu.rcond();
  if (!(rc > rcond_floor)) {
    std::ostringstream os;
    os << what << ": system numerically singular (condition estimate "
       << (rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity()) << ")";
    throw NumericError(os.str());
  }
  return lu.solve(rhs);
}

}  // namespace

Eigen::Matrix2d rotation2(double angle_deg) {
  const double r = angle_deg * deg2rad;
  Eigen::Matrix2d R;
  R << std::cos(r), -std::sin(r), std::sin(r), std::cos(r);
  return R;
}

std::array<double, block_count> default_betas() {
  std::array<double, block_count> b{};
  for (int i = 0; i < block_count; ++i) {
    b[i] = 0.5 + (0.95 - 0.5) * static_cast<double>(i) / (block_count - 1);
  }
  return b;
}

BlockCouplingSpec reference_coupling(double t) {
  BlockCouplingSpec spec;
  spec.t = t;
  spec.betas = default_betas();
  spec.angles_deg = reference_angles_deg;
  return spec;
}

Mat build_coupling_matrix(const BlockCouplingSpec& spec) {
  if (!std::isfinite(spec.t) || spec.t < 0.0) {
    throw ValidationError("coupling scale t must be finite and nonnegative");
  }
  for (double b : spec.betas) {
    if (!std::isfinite(b) || b < 0.0) {
      throw ValidationError("coupling magnitudes must be finite and nonnegative");
    }
  }
  for (double x : spec.angles_deg) {
    if (!std::isfinite(x)) throw ValidationError("coupling angles must be finite");
  }
  Mat A = Mat::Zero(dim, dim);
  for (int i = 0; i < block_count; ++i) {
    A.block<2, 2>(2 * i, 2 * i) = spec.t * spec.betas[i] * rotation2(spec.angles_deg[i]);
  }
  return A;
}

DirectionVectors build_direction_vectors() {
  DirectionVectors d;
  d.a = Vec::Zero(dim);
  d.g_p = Vec::Zero(dim);
  d.g_q = Vec::Zero(dim);
  const Eigen::Vector2d base_a(1.0, 2.0);
  const Eigen::Vector2d base_p(1.0, 0.0);
  const Eigen::Vector2d base_q(1.0, 4.0);
  for (int i = 1; i <= block_count; ++i) {
    const double u = static_cast<double>(i - 1) / 11.0;
    const double decay = std::pow(0.9, i);
    const double sa = decay * (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * u));
    const double sp = decay * (1.0 + 0.15 * std::cos(1.5 * std::numbers::pi * u));
    const double sq = decay * (1.0 + 0.18 * std::sin(1.5 * std::numbers::pi * u + 0.3));
    d.a.segment<2>(2 * (i - 1)) = sa * (rotation2(140.0 * u - 70.0) * base_a);
    d.g_p.segment<2>(2 * (i - 1)) = sp * (rotation2(80.0 * u - 55.0) * base_p);
    d.g_q.segment<2>(2 * (i - 1)) = sq * (rotation2(100.0 * u - 40.0) * base_q);
  }
  return d;
}

GaussianSystem reference_system(double t, double lambda_cur) {
  GaussianSystem sys;
  sys.coupling = reference_coupling(t);
  auto dirs = build_direction_vectors();
  sys.a = std::move(dirs.a);
  sys.g_p = std::move(dirs.g_p);
  sys.g_q = std::move(dirs.g_q);
  sys.lambda_cur = lambda_cur;
  sys.real_mean = Vec::Zero(dim);
  return sys;
}

FixedPoint closed_form_fixed_point(const Mat& A, const Vec& a, double lambda_cur) {
  if (A.rows() != A.cols() || A.rows() != a.size()) {
    throw ValidationError("fixed point: dimension mismatch");
  }
  const Mat M = Mat::Identity(A.rows(), A.cols()) - A;
  FixedPoint fp;
  fp.theta = solve_checked(M, lambda_cur * a, "closed_form_fixed_point");
  fp.phi = A * fp.theta;
  ensure_finite(fp.theta, "fixed point theta");
  ensure_finite(fp.phi, "fixed point phi");
  return fp;
}

FixedPoint generalized_fixed_point(const Mat& A, const Vec& a, const Vec& real_mean,
                                   double lambda_real, double lambda_cur) {
  if (lambda_real < 0.0 || lambda_real > 1.0) {
    throw ValidationError("lambda_real must lie in [0, 1]");
  }
  const Mat M = Mat::Identity(A.rows(), A.cols()) - (1.0 - lambda_real) * A;
  const Vec rhs = lambda_real * real_mean + lambda_cur * a;
  FixedPoint fp;
  fp.theta = solve_checked(M, rhs, "generalized_fixed_point");
  fp.phi = A * fp.theta;
  return fp;
}

double reward_J(const Vec& x, const Vec& g, double eta) {
  if (x.size() != g.size()) throw ValidationError("reward_J: dimension mismatch");
  return g.dot(x) - 0.5 * eta * x.squaredNorm();
}

RewardDerivatives analytic_dJ_dlambda(const GaussianSystem& sys) {
  const Mat A = sys.A();
  const auto fp = closed_form_fixed_point(A, sys.a, sys.lambda_cur);
  const Mat M = Mat::Identity(dim, dim) - A;
  const Vec dtheta = solve_checked(M, sys.a, "analytic_dJ_dlambda");
  const Vec dphi = A * dtheta;
  RewardDerivatives d;
  d.dJp_dlambda = (sys.g_p - sys.eta_p * fp.theta).dot(dtheta);
  d.dJq_dlambda = (sys.g_q - sys.eta_q * fp.phi).dot(dphi);
  return d;
}

EpsilonEstimates epsilon_estimates(const GaussianSystem& sys, double lambda_real_theta) {
  EpsilonEstimates e;
  e.eps_theta = 1.0 - lambda_real_theta;
  double beta_max = 0.0;
  for (double b : sys.coupling.betas) beta_max = std::max(beta_max, b);
  e.eps_phi = sys.coupling.t * beta_max;
  return e;
}

}  // namespace selfloop::gaussian
