#include "ngvi/projections.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "ngvi/errors.hpp"

namespace ngvi {

namespace {

// Values within this absolute distance of a clip bound are snapped onto it.
constexpr double kSnapTol = 1e-12;

double clip_snap(double x, double lo, double hi) {
  if (std::abs(x - lo) <= kSnapTol) return lo;
  if (std::abs(x - hi) <= kSnapTol) return hi;
  return std::min(hi, std::max(lo, x));
}

}  // namespace

ConstraintSet ConstraintSet::unconstrained() { return ConstraintSet{}; }

ConstraintSet ConstraintSet::eigen_clip(double alpha, double beta) {
  if (!(alpha > 0.0) || !(alpha < beta) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error(ErrorCode::InvalidConstraint, "eigen clip requires 0 < alpha < beta");
  }
  return ConstraintSet{ConstraintKind::EigenClip, alpha, beta};
}

ConstraintSet ConstraintSet::non_negative_mean() {
  return ConstraintSet{ConstraintKind::NonNegativeMean, 0.0, 0.0};
}

bool feasible(const ExpParam& omega, const ConstraintSet& c) {
  switch (c.kind) {
    case ConstraintKind::Unconstrained:
      return true;
    case ConstraintKind::EigenClip: {
      if (omega.family().diagonal_quad()) {
        return (omega.var().array() >= c.alpha - kSnapTol).all() &&
               (omega.var().array() <= c.beta + kSnapTol).all();
      }
      const Eigen::MatrixXd sigma = omega.sigma_chol() * omega.sigma_chol().transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
      return es.eigenvalues().minCoeff() >= c.alpha - kSnapTol &&
             es.eigenvalues().maxCoeff() <= c.beta + kSnapTol;
    }
    case ConstraintKind::NonNegativeMean:
      if (omega.family().kind != FamilyKind::GaussianDiag) {
        throw Error(ErrorCode::WrongFamily,
                    "non-negative-mean constraint applies to the diagonal kind only");
      }
      return (omega.mu().array() >= 0.0).all();
  }
  return true;
}

ExpParam project(const ExpParam& omega, const ConstraintSet& c) {
  switch (c.kind) {
    case ConstraintKind::Unconstrained:
      return omega;

    case ConstraintKind::EigenClip: {
      if (omega.family().diagonal_quad()) {
        Eigen::VectorXd var = omega.var();
        bool changed = false;
        for (Eigen::Index i = 0; i < var.size(); ++i) {
          const double v = clip_snap(var(i), c.alpha, c.beta);
          changed |= v != var(i);
          var(i) = v;
        }
        if (!changed) return omega;
        MomentParam m;
        m.mu = omega.mu();
        m.sigma = var;
        return ExpParam::from_moments(omega.family(), m);
      }
      const Eigen::MatrixXd sigma = omega.sigma_chol() * omega.sigma_chol().transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
      const Eigen::VectorXd& ev = es.eigenvalues();
      if (ev.minCoeff() >= c.alpha - kSnapTol && ev.maxCoeff() <= c.beta + kSnapTol) {
        return omega;
      }
      Eigen::VectorXd clipped(ev.size());
      for (Eigen::Index i = 0; i < ev.size(); ++i) {
        clipped(i) = clip_snap(ev(i), c.alpha, c.beta);
      }
      MomentParam m;
      m.mu = omega.mu();
      m.sigma = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
      return ExpParam::from_moments(omega.family(), m);
    }

    case ConstraintKind::NonNegativeMean: {
      if (omega.family().kind != FamilyKind::GaussianDiag) {
        throw Error(ErrorCode::WrongFamily,
                    "non-negative-mean constraint applies to the diagonal kind only");
      }
      if ((omega.mu().array() >= 0.0).all()) return omega;
      MomentParam m;
      m.mu = omega.mu().cwiseMax(0.0);
      m.sigma = omega.var();
      return ExpParam::from_moments(omega.family(), m);
    }
  }
  return omega;
}

}  // namespace ngvi
