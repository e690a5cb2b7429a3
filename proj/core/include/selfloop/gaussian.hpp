#pragma once

#include <selfloop/types.hpp>

#include <array>

namespace selfloop::gaussian {

inline constexpr int block_count = 12;
inline constexpr int dim = 24;

/// Rotation angles of the twelve 2x2 coupling blocks, in degrees.
inline constexpr std::array<double, block_count> reference_angles_deg = {
    -80, -66, -52, -38, -24, -10, 5, 21, 37, 53, 69, 85};

/// Default per-block interaction magnitudes: ascending linear from 0.5 to
/// 0.95. The construction only pins the admissible range [0.08, 0.95]; this
/// schedule is the deterministic default that reproduces the qualitative
/// cross-influence sign pattern (positive at t = 0.2, negative at t = 0.9)
/// which the verification suite asserts. Overridable in config.
std::array<double, block_count> default_betas();

/// Spec of the 24x24 block-diagonal coupling matrix A(t): twelve 2x2 blocks
/// A_i = t * beta_i * R(angle_i). Spectral norm is t * max beta (rotations
/// are orthogonal).
struct BlockCouplingSpec {
  double t{0.2};
  std::array<double, block_count> betas{};
  std::array<double, block_count> angles_deg{};
};

BlockCouplingSpec reference_coupling(double t);

/// Assembles A(t). Throws ValidationError when t or any beta is outside its
/// admissible range ([0, 1] for t at construction sites that sweep, betas
/// finite and nonnegative).
Mat build_coupling_matrix(const BlockCouplingSpec& spec);

/// 2x2 rotation by an angle given in degrees.
Eigen::Matrix2d rotation2(double angle_deg);

struct DirectionVectors {
  Vec a;    // curation shift
  Vec g_p;  // theta-model reward linear term
  Vec g_q;  // phi-model reward linear term
};

/// The fixed blockwise construction of the curation shift and the two reward
/// directions. Block i (1-based) of each vector is a scaled rotation of a
/// base vector:
///   a_i   = 0.9^i (1 + 0.2 sin(2 pi (i-1)/11))        R((140(i-1)/11 - 70) deg) (1,2)^T
///   g_p,i = 0.9^i (1 + 0.15 cos(1.5 pi (i-1)/11))     R(( 80(i-1)/11 - 55) deg) (1,0)^T
///   g_q,i = 0.9^i (1 + 0.18 sin(1.5 pi (i-1)/11+0.3)) R((100(i-1)/11 - 40) deg) (1,4)^T
DirectionVectors build_direction_vectors();

/// The fully specified coupled Gaussian system. Model theta trains on the
/// mixture (1-lambda_cur) N(phi, sigma^2 I) + lambda_cur N(phi + a, sigma^2 I);
/// model phi trains on N(A(t) theta, sigma^2 I). Rewards are linear-quadratic:
/// J_p(x) = g_p.x - eta_p |x|^2 / 2 and the g_q/eta_q analogue.
struct GaussianSystem {
  BlockCouplingSpec coupling;
  Vec a;
  Vec g_p;
  Vec g_q;
  double eta_p{0.18};
  double eta_q{0.22};
  double sigma{1.0};
  double lambda_cur{0.4};
  Vec real_mean;  // mean of the real-data channel; zero when absent

  Mat A() const { return build_coupling_matrix(coupling); }
};

GaussianSystem reference_system(double t, double lambda_cur);

struct FixedPoint {
  Vec theta;
  Vec phi;
};

/// Closed form of the stable point: theta* = (I - A)^-1 lambda a, phi* = A theta*.
/// Throws NumericError when I - A is numerically singular (reciprocal
/// condition below rcond_floor). Residuals |theta* - phi* - lambda a| and
/// |phi* - A theta*| are below 1e-10 by construction of the solve.
FixedPoint closed_form_fixed_point(const Mat& A, const Vec& a, double lambda_cur);

/// Stable point when model theta also trains on a real channel with mean
/// real_mean and weight lambda_real:
///   theta* = (I - (1-lambda_real) A)^-1 (lambda_real real_mean + lambda_cur a)
/// Reduces to closed_form_fixed_point at lambda_real = 0.
FixedPoint generalized_fixed_point(const Mat& A, const Vec& a, const Vec& real_mean,
                                   double lambda_real, double lambda_cur);

/// g.x - eta |x|^2 / 2.
double reward_J(const Vec& x, const Vec& g, double eta);

struct RewardDerivatives {
  double dJp_dlambda{};
  double dJq_dlambda{};
};

/// Chain rule through the closed-form fixed point:
///   dJp/dlambda = (g_p - eta_p theta*) . (I-A)^-1 a
///   dJq/dlambda = (g_q - eta_q phi*)  . (I-A)^-1 A a
RewardDerivatives analytic_dJ_dlambda(const GaussianSystem& sys);

/// Translation-sensitivity upper estimates for the mixture maps, derived from
/// the mixture structure (these are estimates, not assumption-level givens):
/// the theta mixture moves by at most (1 - lambda_real) |dphi| in Wasserstein
/// distance, the phi mixture by at most |A| |dtheta|.
struct EpsilonEstimates {
  double eps_theta{};
  double eps_phi{};
};
EpsilonEstimates epsilon_estimates(const GaussianSystem& sys, double lambda_real_theta);

}  // namespace selfloop::gaussian
