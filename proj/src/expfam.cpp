#include "ngvi/expfam.hpp"

#include <cmath>
#include <string>

#include "ngvi/errors.hpp"

namespace ngvi {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Cholesky with strict failure on any non-positive pivot; no tolerance.
Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& spd, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(spd);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::DomainViolation, std::string(what) + " is not positive definite");
  }
  return llt.matrixL();
}

double logdet_from_chol(const Eigen::MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

void check_positive(const Eigen::VectorXd& v, const char* what) {
  if (!(v.array() > 0.0).all()) {
    throw Error(ErrorCode::DomainViolation, std::string(what) + " must be componentwise positive");
  }
}

}  // namespace

NatParam NatParam::create(ParamVec coords) {
  check_layout(coords);
  NatParam p;
  if (coords.family.diagonal_quad()) {
    p.prec_diag_ = -2.0 * coords.quad.col(0);
    check_positive(p.prec_diag_, "precision");
  } else {
    coords.quad = symmetrized(coords.quad);
    p.prec_chol_ = chol_lower(-2.0 * coords.quad, "precision");
  }
  p.v_ = std::move(coords);
  return p;
}

ExpParam ExpParam::create(ParamVec coords) {
  check_layout(coords);
  ExpParam p;
  if (coords.family.diagonal_quad()) {
    p.mu_ = coords.family.has_mean_block() ? coords.linear
                                           : Eigen::VectorXd::Zero(coords.family.dim);
    p.var_ = coords.quad.col(0) - p.mu_.cwiseProduct(p.mu_);
    check_positive(p.var_, "implied variance");
  } else {
    coords.quad = symmetrized(coords.quad);
    p.mu_ = coords.linear;
    p.sigma_chol_ = chol_lower(coords.quad - p.mu_ * p.mu_.transpose(), "implied covariance");
  }
  p.v_ = std::move(coords);
  return p;
}

ExpParam ExpParam::from_moments(const Family& family, const MomentParam& m) {
  const int d = family.dim;
  const Eigen::VectorXd mu =
      family.has_mean_block() ? m.mu : Eigen::VectorXd::Zero(d);
  if (mu.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "moment mean has wrong size");
  }
  ExpParam p;
  ParamVec v;
  v.family = family;
  v.linear = family.has_mean_block() ? mu : Eigen::VectorXd();
  if (family.diagonal_quad()) {
    if (m.sigma.rows() != d || m.sigma.cols() != 1) {
      throw Error(ErrorCode::DimensionMismatch, "diagonal covariance must be d x 1");
    }
    p.var_ = m.sigma.col(0);
    check_positive(p.var_, "variance");
    v.quad = p.var_ + mu.cwiseProduct(mu);
  } else {
    if (m.sigma.rows() != d || m.sigma.cols() != d) {
      throw Error(ErrorCode::DimensionMismatch, "covariance must be d x d");
    }
    const Eigen::MatrixXd sigma = symmetrized(m.sigma);
    p.sigma_chol_ = chol_lower(sigma, "covariance");
    v.quad = sigma + mu * mu.transpose();
  }
  p.mu_ = mu;
  p.v_ = std::move(v);
  check_layout(p.v_);
  return p;
}

MomentParam ExpParam::moments() const {
  MomentParam m;
  m.mu = mu_;
  if (family().diagonal_quad()) {
    m.sigma = var_;
  } else {
    m.sigma = sigma_chol_ * sigma_chol_.transpose();
  }
  return m;
}

ExpParam nat_to_exp(const NatParam& theta) {
  const Family& f = theta.family();
  MomentParam m;
  if (f.diagonal_quad()) {
    const Eigen::VectorXd var = theta.prec_diag().cwiseInverse();
    m.mu = f.has_mean_block() ? Eigen::VectorXd(theta.coords().linear.cwiseProduct(var))
                              : Eigen::VectorXd::Zero(f.dim);
    m.sigma = var;
  } else {
    const Eigen::MatrixXd& l = theta.prec_chol();
    const auto solve = [&](const Eigen::MatrixXd& rhs) -> Eigen::MatrixXd {
      Eigen::MatrixXd y = rhs;
      l.triangularView<Eigen::Lower>().solveInPlace(y);
      l.triangularView<Eigen::Lower>().transpose().solveInPlace(y);
      return y;
    };
    m.mu = solve(theta.coords().linear);
    m.sigma = symmetrized(solve(Eigen::MatrixXd::Identity(f.dim, f.dim)));
  }
  return ExpParam::from_moments(f, m);
}

NatParam exp_to_nat(const ExpParam& omega) {
  const Family& f = omega.family();
  ParamVec v;
  v.family = f;
  if (f.diagonal_quad()) {
    const Eigen::VectorXd prec = omega.var().cwiseInverse();
    v.linear = f.has_mean_block() ? Eigen::VectorXd(omega.mu().cwiseProduct(prec))
                                  : Eigen::VectorXd();
    v.quad = -0.5 * prec;
  } else {
    const Eigen::MatrixXd& l = omega.sigma_chol();
    const auto solve = [&](const Eigen::MatrixXd& rhs) -> Eigen::MatrixXd {
      Eigen::MatrixXd y = rhs;
      l.triangularView<Eigen::Lower>().solveInPlace(y);
      l.triangularView<Eigen::Lower>().transpose().solveInPlace(y);
      return y;
    };
    v.linear = solve(omega.mu());
    v.quad = -0.5 * symmetrized(solve(Eigen::MatrixXd::Identity(f.dim, f.dim)));
  }
  return NatParam::create(std::move(v));
}

double log_partition(const NatParam& theta) {
  const Family& f = theta.family();
  if (f.diagonal_quad()) {
    const Eigen::VectorXd& p = theta.prec_diag();
    double a = -0.5 * p.array().log().sum();
    if (f.has_mean_block()) {
      a += 0.5 * (theta.coords().linear.array().square() / p.array()).sum();
    }
    return a;
  }
  const Eigen::MatrixXd& l = theta.prec_chol();
  const Eigen::VectorXd t =
      l.triangularView<Eigen::Lower>().solve(theta.coords().linear);
  return 0.5 * t.squaredNorm() - 0.5 * logdet_from_chol(l);
}

double negative_entropy(const ExpParam& omega) {
  const Family& f = omega.family();
  const double logdet = f.diagonal_quad()
                            ? omega.var().array().log().sum()
                            : logdet_from_chol(omega.sigma_chol());
  return -0.5 * f.dim - 0.5 * logdet;
}

double bregman_dual(const ExpParam& a, const ExpParam& b) {
  check_same_family(a.coords(), b.coords());
  const NatParam theta_b = exp_to_nat(b);
  const ParamVec diff = axpby(1.0, a.coords(), -1.0, b.coords());
  return negative_entropy(a) - negative_entropy(b) - inner(theta_b.coords(), diff);
}

double kl_gaussian_oracle(const MomentParam& p, const MomentParam& q) {
  const Eigen::Index d = p.mu.size();
  if (q.mu.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "moment means differ in size");
  }
  if (p.sigma.rows() != d || q.sigma.rows() != d) {
    throw Error(ErrorCode::DimensionMismatch, "covariance rows differ from mean size");
  }
  if (p.diagonal_sigma() && q.diagonal_sigma()) {
    const Eigen::ArrayXd vp = p.sigma.col(0).array();
    const Eigen::ArrayXd vq = q.sigma.col(0).array();
    if (!(vp > 0.0).all() || !(vq > 0.0).all()) {
      throw Error(ErrorCode::DomainViolation, "variances must be positive");
    }
    const Eigen::ArrayXd dm = (q.mu - p.mu).array();
    return 0.5 * (vp / vq + dm.square() / vq - 1.0 + vq.log() - vp.log()).sum();
  }
  const auto to_full = [d](const Eigen::MatrixXd& s) -> Eigen::MatrixXd {
    if (s.cols() == 1 && d > 1) return s.col(0).asDiagonal();
    if (s.cols() != d) throw Error(ErrorCode::DimensionMismatch, "covariance must be d x d or d x 1");
    return 0.5 * (s + s.transpose());
  };
  const Eigen::MatrixXd sp = to_full(p.sigma);
  const Eigen::MatrixXd sq = to_full(q.sigma);
  const Eigen::MatrixXd lp = chol_lower(sp, "covariance of p");
  const Eigen::MatrixXd lq = chol_lower(sq, "covariance of q");
  // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2;  (mq-mp)' Sq^-1 (mq-mp) = ||Lq^-1 (mq-mp)||^2.
  const Eigen::MatrixXd w = lq.triangularView<Eigen::Lower>().solve(lp);
  const Eigen::VectorXd u = lq.triangularView<Eigen::Lower>().solve(q.mu - p.mu);
  return 0.5 * (w.squaredNorm() + u.squaredNorm() - static_cast<double>(d) +
                logdet_from_chol(lq) - logdet_from_chol(lp));
}

Eigen::MatrixXd sample(const ExpParam& omega, int n, Rng& rng) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  const int d = omega.family().dim;
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(d, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) z(i, j) = normal(rng);
  }
  if (omega.family().diagonal_quad()) {
    const Eigen::VectorXd sd = omega.var().cwiseSqrt();
    return (sd.asDiagonal() * z).colwise() + omega.mu();
  }
  return (omega.sigma_chol() * z).colwise() + omega.mu();
}

ExpParam embed_diag_to_full(const ExpParam& omega) {
  const Family& f = omega.family();
  if (!f.diagonal_quad()) {
    throw Error(ErrorCode::WrongFamily, "embedding expects a diagonal-kind parameter");
  }
  ParamVec v;
  v.family = Family{FamilyKind::GaussianFull, f.dim};
  v.linear = f.has_mean_block() ? omega.coords().linear : Eigen::VectorXd::Zero(f.dim);
  v.quad = Eigen::MatrixXd(omega.coords().quad.col(0).asDiagonal());
  return ExpParam::create(std::move(v));
}

}  // namespace ngvi
