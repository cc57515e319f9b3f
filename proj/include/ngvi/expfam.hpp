#pragma once

#include <Eigen/Dense>

#include "ngvi/rng.hpp"
#include "ngvi/types.hpp"

namespace ngvi {

// Natural parametrization.  Construction enforces interior domain membership:
// the implied precision (-2 * quad block) must pass a Cholesky factorization
// for the full kind, or be componentwise positive for the diagonal kinds.
// The factor is cached; values are immutable afterwards.
class NatParam {
 public:
  static NatParam create(ParamVec coords);

  const ParamVec& coords() const { return v_; }
  const Family& family() const { return v_.family; }
  // Lower Cholesky factor of the precision matrix (full kind only).
  const Eigen::MatrixXd& prec_chol() const { return prec_chol_; }
  // Componentwise precision (diagonal kinds only).
  const Eigen::VectorXd& prec_diag() const { return prec_diag_; }

 private:
  NatParam() = default;
  ParamVec v_;
  Eigen::MatrixXd prec_chol_;
  Eigen::VectorXd prec_diag_;
};

// Expectation parametrization.  Construction enforces that the implied
// covariance is positive definite (Cholesky for the full kind, componentwise
// positivity for the diagonal kinds); the factor and mean are cached.
class ExpParam {
 public:
  // From raw coordinates; the full-kind covariance is recovered as
  // quad - linear*linear^T, which loses precision when |mu| dwarfs sigma.
  static ExpParam create(ParamVec coords);
  // From a mean/covariance pair; avoids the subtraction above.  sigma must be
  // d x d for the full kind and d x 1 for the diagonal kinds.
  static ExpParam from_moments(const Family& family, const MomentParam& m);

  const ParamVec& coords() const { return v_; }
  const Family& family() const { return v_.family; }
  const Eigen::VectorXd& mu() const { return mu_; }
  // Lower Cholesky factor of the covariance (full kind only).
  const Eigen::MatrixXd& sigma_chol() const { return sigma_chol_; }
  // Componentwise variances (diagonal kinds only).
  const Eigen::VectorXd& var() const { return var_; }
  MomentParam moments() const;

 private:
  ExpParam() = default;
  ParamVec v_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_chol_;
  Eigen::VectorXd var_;
};

ExpParam nat_to_exp(const NatParam& theta);
NatParam exp_to_nat(const ExpParam& omega);

// Log partition A(theta) relative to the Gaussian base measure
// (2*pi)^(-d/2) * Lebesgue, so the standard normal has A = 0.
double log_partition(const NatParam& theta);

// Convex conjugate A*(omega) = <theta, omega> - A(theta) at the paired theta;
// equals the negative differential entropy relative to the base measure.
double negative_entropy(const ExpParam& omega);

// Bregman divergence of A* between expectation parameters,
// d(a, b) = A*(a) - A*(b) - <exp_to_nat(b), a - b>;  equals KL(q_a || q_b).
double bregman_dual(const ExpParam& a, const ExpParam& b);

// Closed-form Gaussian KL(p || q) from moments, as an independent check of
// bregman_dual.  Diagonal covariances are handled componentwise; a mixed
// pair promotes the diagonal side to a full matrix.
double kl_gaussian_oracle(const MomentParam& p, const MomentParam& q);

// n i.i.d. draws from q_omega, one per column.
Eigen::MatrixXd sample(const ExpParam& omega, int n, Rng& rng);

// Linear embedding of a diagonal-kind expectation parameter into the full
// family: (omega1, omega2) -> (omega1, diag(omega2)) for the diagonal kind,
// omega -> (0, diag(omega)) for the centered kind.  The centered embedding
// preserves the distribution; the non-centered one preserves it only when at
// most one mean component is nonzero.
ExpParam embed_diag_to_full(const ExpParam& omega);

}  // namespace ngvi
