#include <selfloop/sensitivity.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <sstream>

namespace selfloop::sensitivity {

namespace {

Mat checked_inverse(const Mat& M, const char* what) {
  Eigen::PartialPivLU<Mat> lu(M);
  const double rc = lu.rcond();
  if (!(rc > rcond_floor)) {
    std::ostringstream os;
    os << what << ": singular matrix (condition estimate "
       << (rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity()) << ")";
    throw NumericError(os.str());
  }
  return lu.inverse();
}

double operator_norm(const Mat& M) {
  return M.jacobiSvd().singularValues()(0);
}

}  // namespace

JacobianSet jacobians_analytic(const gaussian::GaussianSystem& sys, double lambda_real) {
  const int d = gaussian::dim;
  JacobianSet J;
  J.dFp_dtheta = Mat::Identity(d, d);
  J.dFp_dphi = -(1.0 - lambda_real) * Mat::Identity(d, d);
  J.dFq_dtheta = -sys.A();
  J.dFq_dphi = Mat::Identity(d, d);
  return J;
}

JacobianSet jacobians_linear_pair(const Mat& W1, const Mat& W2) {
  if (W1.rows() != W1.cols() || W2.rows() != W2.cols() || W1.rows() != W2.rows()) {
    throw ValidationError("jacobians_linear_pair: W1, W2 must be square and same size");
  }
  const auto d = W1.rows();
  JacobianSet J;
  J.dFp_dtheta = Mat::Identity(d, d);
  J.dFp_dphi = -W1;
  J.dFq_dtheta = -W2;
  J.dFq_dphi = Mat::Identity(d, d);
  return J;
}

JacobianSet jacobians_numeric(const FieldFn& Fp, const FieldFn& Fq, const Vec& theta,
                              const Vec& phi, double step) {
  if (!(step > 0)) throw ValidationError("jacobians_numeric: step must be positive");
  const auto dt = theta.size();
  const auto dp = phi.size();
  auto column = [&](const FieldFn& F, bool wrt_theta, Eigen::Index j) {
    Vec tp = theta, tm = theta, pp = phi, pm = phi;
    if (wrt_theta) {
      tp[j] += step;
      tm[j] -= step;
    } else {
      pp[j] += step;
      pm[j] -= step;
    }
    const Vec hi = F(tp, pp);
    const Vec lo = F(tm, pm);
    if (!hi.allFinite() || !lo.allFinite()) {
      throw NumericError("jacobians_numeric: non-finite callback output");
    }
    return Vec((hi - lo) / (2.0 * step));
  };
  JacobianSet J;
  J.dFp_dtheta.resize(dt, dt);
  J.dFp_dphi.resize(dt, dp);
  J.dFq_dtheta.resize(dp, dt);
  J.dFq_dphi.resize(dp, dp);
  for (Eigen::Index j = 0; j < dt; ++j) {
    J.dFp_dtheta.col(j) = column(Fp, true, j);
    J.dFq_dtheta.col(j) = column(Fq, true, j);
  }
  for (Eigen::Index j = 0; j < dp; ++j) {
    J.dFp_dphi.col(j) = column(Fp, false, j);
    J.dFq_dphi.col(j) = column(Fq, false, j);
  }
  return J;
}

SensitivityMatrices sensitivity_matrices(const JacobianSet& J) {
  const Mat inv_q = checked_inverse(J.dFq_dphi, "sensitivity: dFq/dphi");
  const Mat inv_p = checked_inverse(J.dFp_dtheta, "sensitivity: dFp/dtheta");
  SensitivityMatrices S;
  S.S_p = checked_inverse(J.dFp_dtheta - J.dFp_dphi * inv_q * J.dFq_dtheta, "sensitivity: S_p");
  S.S_q = checked_inverse(J.dFq_dphi - J.dFq_dtheta * inv_p * J.dFp_dphi, "sensitivity: S_q");
  return S;
}

CrossInfluenceMatrices cross_influence_matrices(const JacobianSet& J) {
  CrossInfluenceMatrices C;
  C.C_p = -J.dFp_dphi * checked_inverse(J.dFq_dphi, "cross influence: dFq/dphi");
  C.C_q = -J.dFq_dtheta * checked_inverse(J.dFp_dtheta, "cross influence: dFp/dtheta");
  return C;
}

InfluenceDerivatives influence_derivatives(const Mat& S_p, const Mat& S_q, const Mat& C_q,
                                           const Vec& curation_dir, const Vec& grad_Jp,
                                           const Vec& grad_Jq, double lambda_cur) {
  if (lambda_cur >= 1.0) {
    throw ValidationError("influence derivatives undefined at curation weight 1");
  }
  const double scale = 1.0 / (1.0 - lambda_cur);
  InfluenceDerivatives d;
  d.dJp = scale * grad_Jp.dot(S_p * curation_dir);
  d.dJq = scale * grad_Jq.dot(S_q * (C_q * curation_dir));
  return d;
}

InfluenceDerivatives generalized_derivatives(const ResizeProportions& prop,
                                             const SourceGradients& grads, const Mat& S_p,
                                             const Mat& S_q, const Mat& C_q, const Vec& grad_Jp,
                                             const Vec& grad_Jq, double lambda_cur) {
  if (std::abs(prop.a_r + prop.a_s + prop.a_h - 1.0) > simplex_tolerance) {
    throw ValidationError("resize proportions must sum to 1");
  }
  const double denom = prop.a_h - lambda_cur;
  if (std::abs(denom) < 1e-12) {
    std::ostringstream os;
    os << "generalized derivative degenerate: a_h - lambda = " << denom
       << " (the mixing weight cannot move under these proportions)";
    throw ValidationError(os.str());
  }
  // Direction the theta update gains per unit of lambda_cur: resizing the
  // three source pools composes their mean loss gradients with weights
  // (a_s, a_h, a_r); the stable point moves along -S_p times that vector.
  const Vec mix = prop.a_s * grads.synth + prop.a_h * grads.curated + prop.a_r * grads.real;
  InfluenceDerivatives d;
  d.dJp = -grad_Jp.dot(S_p * mix) / denom;
  d.dJq = -grad_Jq.dot(S_q * (C_q * mix)) / denom;
  return d;
}

Cosines alignment_cosines(const Vec& grad_Jp, const Vec& grad_Jq, const Vec& curation_dir,
                          const Mat& C_q) {
  const Vec projected = C_q * curation_dir;
  auto cosine = [](const Vec& u, const Vec& v, const char* what) {
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
      throw ValidationError(std::string("undefined cosine (zero vector): ") + what);
    }
    return u.dot(v) / (nu * nv);
  };
  Cosines r;
  r.rho_p = cosine(grad_Jp, curation_dir, "rho_p");
  r.rho_q = cosine(grad_Jq, projected, "rho_q");
  return r;
}

SufficiencyResult sufficiency_check(double rho, double m, double tau_margin) {
  if (!(m > 0) || !(tau_margin > 0)) {
    throw ValidationError("sufficiency check needs positive m and tau");
  }
  SufficiencyResult r;
  r.threshold = 1.0 / std::sqrt(1.0 + m * m * tau_margin * tau_margin);
  r.decisive = std::abs(rho) > r.threshold;
  r.predicted_sign = !r.decisive           ? SignPrediction::indeterminate
                     : (rho > 0.0)         ? SignPrediction::positive
                                           : SignPrediction::negative;
  return r;
}

MarginConstants margin_constants(const RegularityConstants& raw) {
  const auto c = validate_constants(raw);
  const double at = c.L_theta * c.eps_theta;
  const double ap = c.L_phi * c.eps_phi;
  if (c.gamma_theta <= at || c.gamma_phi <= ap) {
    throw ValidationError("margin constants need gamma > L * eps for both models");
  }
  MarginConstants m;
  m.tau_p = c.gamma_theta - at - at * ap / (c.gamma_phi - ap);
  m.tau_q = c.gamma_phi - ap - at * ap / (c.gamma_theta - at);
  return m;
}

double compute_kappa(const RegularityConstants& raw) {
  const auto c = validate_constants(raw);
  const double at = c.L_theta * c.eps_theta;
  const double ap = c.L_phi * c.eps_phi;
  const double d1 = c.gamma_phi * (c.gamma_theta - at);
  const double d2 = c.gamma_theta * (c.gamma_phi - ap);
  if (d1 <= 0.0 || d2 <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max({(c.gamma_theta * ap + 2.0 * c.gamma_phi * at) / d1,
                   (c.gamma_phi * at + 2.0 * c.gamma_theta * ap) / d2,
                   at / c.gamma_theta + ap / c.gamma_phi});
}

TauResult compute_tau(const RegularityConstants& raw) {
  const auto c = validate_constants(raw);
  const double gt = c.gamma_theta, gp = c.gamma_phi;
  const double Lt = c.L_theta, Lp = c.L_phi;
  const double Kc = c.lipschitz_L * c.curation_K * (1.0 + 0.5 * c.lipschitz_L * c.data_bound_B);
  const double tau1 = gt * gp / ((Kc + 1.0) * (Lt * gp + Lp * gt + 2.0 * gt * gp));
  const double cross = gt * Lp + gp * Lt;
  const double ramp = (2.0 * Kc + 1.0) / (Kc + 1.0);
  const double tau2 = std::min({(cross * ramp + 2.0 * gt * gp) / (4.0 * Kc * cross),
                                gt * gp / (Kc * cross),
                                (gp * Lt * ramp + 2.0 * gt * gp) / (4.0 * Kc * gp * Lt),
                                gt / (Kc * Lt),
                                (gt * Lp * ramp + 2.0 * gt * gp) / (4.0 * Kc * gt * Lp),
                                gp / (Kc * Lp)});
  TauResult r;
  r.tau = std::min(tau1, tau2);
  r.min_real_fraction = 1.0 - r.tau;
  return r;
}

DeviationBounds deviation_bound(const RegularityConstants& c, double lambda_real) {
  if (lambda_real < 0.0 || lambda_real > 1.0) {
    throw ValidationError("deviation bound: real fraction must lie in [0, 1]");
  }
  const auto m = margin_constants(c);  // also enforces tau_p, tau_q > 0
  const double L2 = c.lipschitz_L * c.lipschitz_L;
  DeviationBounds b;
  b.theta_bound = (1.0 - lambda_real) * 6.0 * c.L_theta * L2 / m.tau_p;
  b.phi_bound = (1.0 - lambda_real) * 6.0 * c.L_phi * L2 / m.tau_q;
  return b;
}

BlockContributions blockwise_decomposition(const Mat& S_p, const Mat& S_q, const Mat& C_q,
                                           const Vec& grad_Jp, const Vec& grad_Jq,
                                           const Vec& curation_dir, int block_size) {
  const auto d = S_p.rows();
  if (block_size < 1 || d % block_size != 0) {
    throw ValidationError("blockwise decomposition: dimension not divisible by block size");
  }
  auto require_block_diagonal = [&](const Mat& M, const char* what) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i / block_size != j / block_size && std::abs(M(i, j)) > 1e-12) {
          throw ValidationError(std::string(what) + " is not block-diagonal");
        }
      }
    }
  };
  require_block_diagonal(S_p, "S_p");
  require_block_diagonal(S_q, "S_q");
  require_block_diagonal(C_q, "C_q");

  const int blocks = static_cast<int>(d) / block_size;
  BlockContributions out;
  out.self_pre.resize(blocks);
  out.self_post.resize(blocks);
  out.cross_pre.resize(blocks);
  out.cross_post.resize(blocks);
  for (int b = 0; b < blocks; ++b) {
    const auto lo = b * block_size;
    const Vec dir_b = curation_dir.segment(lo, block_size);
    const Vec gp_b = grad_Jp.segment(lo, block_size);
    const Vec gq_b = grad_Jq.segment(lo, block_size);
    const Mat Sp_b = S_p.block(lo, lo, block_size, block_size);
    const Mat Sq_b = S_q.block(lo, lo, block_size, block_size);
    const Mat Cq_b = C_q.block(lo, lo, block_size, block_size);
    out.self_pre[b] = gp_b.dot(dir_b);
    out.self_post[b] = gp_b.dot(Sp_b * dir_b);
    out.cross_pre[b] = gq_b.dot(Cq_b * dir_b);
    out.cross_post[b] = gq_b.dot(Sq_b * Cq_b * dir_b);
  }
  return out;
}

double min_symmetrized_eigenvalue(const Mat& M) {
  const Mat sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  return es.eigenvalues().minCoeff();
}

SensitivityReport build_report(const gaussian::GaussianSystem& sys,
                               const std::optional<RegularityConstants>& constants) {
  const Mat A = sys.A();
  const auto fp = gaussian::closed_form_fixed_point(A, sys.a, sys.lambda_cur);
  const auto J = jacobians_analytic(sys);
  const auto S = sensitivity_matrices(J);
  const auto C = cross_influence_matrices(J);

  SensitivityReport r;
  r.S_p = S.S_p;
  r.S_q = S.S_q;
  r.C_p = C.C_p;
  r.C_q = C.C_q;
  r.lambda_cur = sys.lambda_cur;
  r.grad_Jp = sys.g_p - sys.eta_p * fp.theta;
  r.grad_Jq = sys.g_q - sys.eta_q * fp.phi;
  // Mean curated update direction E[-grad loss] = (phi* + a) - theta*.
  r.curation_dir = fp.phi + sys.a - fp.theta;

  const auto d = influence_derivatives(r.S_p, r.S_q, r.C_q, r.curation_dir, r.grad_Jp, r.grad_Jq,
                                       sys.lambda_cur);
  r.dJp_dlambda = d.dJp;
  r.dJq_dlambda = d.dJq;

  const auto cos = alignment_cosines(r.grad_Jp, r.grad_Jq, r.curation_dir, r.C_q);
  r.rho_p = cos.rho_p;
  r.rho_q = cos.rho_q;

  r.m_p = min_symmetrized_eigenvalue(r.S_p);
  r.m_q = min_symmetrized_eigenvalue(r.S_q);
  r.norm_S_p = operator_norm(r.S_p);
  r.norm_S_q = operator_norm(r.S_q);

  if (constants) {
    const auto m = margin_constants(*constants);
    r.tau_p = m.tau_p;
    r.tau_q = m.tau_q;
    r.margins_from_constants = true;
  } else {
    // Norm-based fallback margin; |S| <= 1/tau always holds for it.
    r.tau_p = 1.0 / r.norm_S_p;
    r.tau_q = 1.0 / r.norm_S_q;
    r.margins_from_constants = false;
  }
  r.sufficiency_p = sufficiency_check(r.rho_p, r.m_p, r.tau_p);
  r.sufficiency_q = sufficiency_check(r.rho_q, r.m_q, r.tau_q);
  r.cross_sign_note =
      "cross-influence sign prediction implemented as sign(rho_q) when decisive; the printed "
      "corollary states the opposite sign while its proof follows the self-influence mechanism";

  r.blockwise = blockwise_decomposition(r.S_p, r.S_q, r.C_q, r.grad_Jp, r.grad_Jq, r.curation_dir);
  return r;
}

}  // namespace selfloop::sensitivity
