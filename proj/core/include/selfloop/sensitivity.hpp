#pragma once

#include <selfloop/gaussian.hpp>
#include <selfloop/types.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace selfloop::sensitivity {

/// Jacobians of the two gradient maps F_p, F_q evaluated at the stable point.
struct JacobianSet {
  Mat dFp_dtheta;
  Mat dFp_dphi;
  Mat dFq_dtheta;
  Mat dFq_dphi;
};

/// Jacobians for the Gaussian system at its fixed point: dFp/dtheta = I,
/// dFp/dphi = -(1 - lambda_real) I, dFq/dtheta = -A, dFq/dphi = I.
JacobianSet jacobians_analytic(const gaussian::GaussianSystem& sys, double lambda_real = 0.0);

/// Jacobians for the linear pair F_p = theta - W1 phi - a lambda,
/// F_q = phi - W2 theta (the 2-d text/image example).
JacobianSet jacobians_linear_pair(const Mat& W1, const Mat& W2);

using FieldFn = std::function<Vec(const Vec& theta, const Vec& phi)>;

/// Central-difference Jacobians; each column comes from perturbing one
/// coordinate by +-step. Throws NumericError on non-finite callback output.
JacobianSet jacobians_numeric(const FieldFn& Fp, const FieldFn& Fq, const Vec& theta,
                              const Vec& phi, double step);

struct SensitivityMatrices {
  Mat S_p;
  Mat S_q;
};

/// S_p = (dFp/dtheta - dFp/dphi (dFq/dphi)^-1 dFq/dtheta)^-1 and the
/// symmetric S_q. When the cross blocks vanish this reduces to the
/// single-model (dFp/dtheta)^-1. Singular inner or outer inverses raise
/// NumericError with the condition estimate in the message.
SensitivityMatrices sensitivity_matrices(const JacobianSet& J);

struct CrossInfluenceMatrices {
  Mat C_p;
  Mat C_q;
};

/// C_p = -dFp/dphi (dFq/dphi)^-1, C_q = -dFq/dtheta (dFp/dtheta)^-1.
CrossInfluenceMatrices cross_influence_matrices(const JacobianSet& J);

struct InfluenceDerivatives {
  double dJp{};
  double dJq{};
};

/// Curation-effect derivatives at the stable point:
///   dJp/dlambda = 1/(1-lambda) < grad J_p, S_p dir >
///   dJq/dlambda = 1/(1-lambda) < grad J_q, S_q C_q dir >
/// with dir the mean curation update direction E[-grad loss] under the
/// curated distribution. lambda must be < 1.
InfluenceDerivatives influence_derivatives(const Mat& S_p, const Mat& S_q, const Mat& C_q,
                                           const Vec& curation_dir, const Vec& grad_Jp,
                                           const Vec& grad_Jq, double lambda_cur);

/// Mean loss gradients at the fixed point, one per data source.
struct SourceGradients {
  Vec real;
  Vec synth;
  Vec curated;
};

struct ResizeProportions {
  double a_r{};
  double a_s{};
  double a_h{};
};

/// Derivatives when the curation weight moves by resizing the real /
/// synthetic / curated datasets in fixed proportions (a_r, a_s, a_h):
///   dJp/dlambda_cur = -1/(a_h - lambda) < grad J_p, S_p [a_s E_S grad + a_h E_H grad + a_r E_R grad] >
/// and the S_q C_q analogue. (0, 0, 1) reduces exactly to
/// influence_derivatives. Throws ValidationError when the proportions do not
/// sum to 1 or the denominator a_h - lambda vanishes.
InfluenceDerivatives generalized_derivatives(const ResizeProportions& prop,
                                             const SourceGradients& grads, const Mat& S_p,
                                             const Mat& S_q, const Mat& C_q, const Vec& grad_Jp,
                                             const Vec& grad_Jq, double lambda_cur);

struct Cosines {
  double rho_p{};
  double rho_q{};
};

/// rho_p = cos(grad J_p, dir); rho_q = cos(grad J_q, C_q dir). Zero-length
/// inputs raise ValidationError (undefined cosine).
Cosines alignment_cosines(const Vec& grad_Jp, const Vec& grad_Jq, const Vec& curation_dir,
                          const Mat& C_q);

enum class SignPrediction : int { negative = -1, indeterminate = 0, positive = 1 };

struct SufficiencyResult {
  SignPrediction predicted_sign{SignPrediction::indeterminate};
  double threshold{};
  bool decisive{false};
};

/// threshold = 1 / sqrt(1 + m^2 tau^2); the cosine is decisive when |rho|
/// exceeds it, and then the predicted derivative sign is sign(rho).
SufficiencyResult sufficiency_check(double rho, double m, double tau_margin);

struct MarginConstants {
  double tau_p{};
  double tau_q{};
};

/// tau_p = gamma_theta - L_theta eps_theta
///         - L_theta eps_theta L_phi eps_phi / (gamma_phi - L_phi eps_phi),
/// tau_q symmetric. Requires gamma > L eps on both sides; guarantees
/// |S_p| <= 1/tau_p.
MarginConstants margin_constants(const RegularityConstants& c);

/// Contraction constant of the coupled loop; the max of three terms.
/// Convergence is guaranteed iff kappa < 1. Returns +infinity when a
/// denominator is nonpositive (no guarantee).
double compute_kappa(const RegularityConstants& c);

struct TauResult {
  double tau{};
  /// Stability holds when each model's synthetic fraction stays below tau,
  /// i.e. its real-data fraction stays above this value.
  double min_real_fraction{};
};

/// Stability threshold tau = min(tau1, tau2) with K_c = L K (1 + L B / 2),
/// tau1 the curation-count term and tau2 the six-term schedule minimum.
TauResult compute_tau(const RegularityConstants& c);

struct DeviationBounds {
  double theta_bound{};
  double phi_bound{};
};

/// Upper bound on the alignment gap versus all-real training:
/// (1 - lambda_real) * 6 L_theta L^2 / tau_p, and the phi analogue.
DeviationBounds deviation_bound(const RegularityConstants& c, double lambda_real);

struct BlockContributions {
  std::vector<double> self_pre;    // < grad_i J_p, dir_i >
  std::vector<double> self_post;   // < grad_i J_p, S_p,i dir_i >
  std::vector<double> cross_pre;   // < grad_i J_q, C_q,i dir_i >
  std::vector<double> cross_post;  // < grad_i J_q, S_q,i C_q,i dir_i >
};

/// Per-block inner-product contributions for block-diagonal systems. The
/// post-projection columns sum to the corresponding total inner products.
/// Throws ValidationError when any matrix has off-block mass.
BlockContributions blockwise_decomposition(const Mat& S_p, const Mat& S_q, const Mat& C_q,
                                           const Vec& grad_Jp, const Vec& grad_Jq,
                                           const Vec& curation_dir, int block_size = 2);

/// Everything the sensitivity analysis produces for one system, ready for
/// serialization.
struct SensitivityReport {
  Mat S_p, S_q, C_p, C_q;
  Vec curation_dir;
  Vec grad_Jp, grad_Jq;
  double lambda_cur{};
  double dJp_dlambda{}, dJq_dlambda{};
  double rho_p{}, rho_q{};
  double m_p{}, m_q{};
  double norm_S_p{}, norm_S_q{};
  /// Margin constants used for the thresholds: from RegularityConstants when
  /// supplied, otherwise the norm-based fallback 1/|S|.
  double tau_p{}, tau_q{};
  bool margins_from_constants{false};
  SufficiencyResult sufficiency_p{}, sufficiency_q{};
  std::optional<BlockContributions> blockwise{};
  /// The cross-influence sufficiency statement as printed in its source
  /// conflicts with its own proof mechanism on the sign; the implemented
  /// prediction is sign(rho_q). Both appear in serialized output.
  std::string cross_sign_note;
};

/// Full report for the Gaussian system at its closed-form fixed point.
SensitivityReport build_report(const gaussian::GaussianSystem& sys,
                               const std::optional<RegularityConstants>& constants = {});

/// Minimal eigenvalue of (M + M^T)/2.
double min_symmetrized_eigenvalue(const Mat& M);

}  // namespace selfloop::sensitivity
