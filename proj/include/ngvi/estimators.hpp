#pragma once

#include <vector>

#include "ngvi/expfam.hpp"
#include "ngvi/models.hpp"
#include "ngvi/rng.hpp"
#include "ngvi/types.hpp"

namespace ngvi {

enum class EstimatorKind { BonnetPrice, Subsample, Exact };

const char* estimator_kind_name(EstimatorKind kind);

// Estimate of the gradient of E_{q_omega}[log pi(X)] with respect to the
// expectation parameter.  Laid out like a natural parameter but lives in the
// ambient space: no domain membership is implied or required.
struct GradientEstimate {
  ParamVec value;
  int n_used = 0;
};

// Gaussian-gradient identities: draws n samples from q_omega and returns
//   g1 = (1/n) sum (grad log pi(X_k) - H_k mu),   g2 = (1/2n) sum H_k,
// with H_k the log-density Hessian.  The diagonal family uses diag(H_k) in
// both places; the centered kind has no mean block and is not supported.
GradientEstimate bonnet_price(const TargetModel& model, const ExpParam& omega, int n, Rng& rng);

// Finite-sum estimator: prior image plus (M/n) times the sum of per-datum
// contributions at n indices drawn i.i.d. uniform on the dataset.  Full
// family only; the per-datum closed form fixes the layout.
GradientEstimate subsample_gradient(const TargetModel& model, const ExpParam& omega, int n,
                                    Rng& rng);
// Same formula at caller-chosen indices; lets tests enumerate the support.
GradientEstimate subsample_gradient_at(const TargetModel& model, const ExpParam& omega,
                                       const std::vector<int>& indices);

// Closed-form gradient for conjugate models, mapped into omega's family by
// the embedding adjoint.  Constant in omega on its whole support; n_used is
// the dataset size (0 for the synthetic Gaussian target).
GradientEstimate exact_gradient(const TargetModel& model, const ExpParam& omega);

// Dispatch on the configured estimator; n and rng are ignored by Exact.
GradientEstimate estimate_gradient(EstimatorKind kind, const TargetModel& model,
                                   const ExpParam& omega, int n, Rng& rng);

// theta_plus = (1 - eta)*theta + eta*g, validated to stay inside the natural
// domain.  This is the well-posedness guard of the stochastic step: a mix
// that leaves int dom A raises WellPosednessViolated instead of propagating
// the raw domain error.
NatParam mix_toward(const ParamVec& theta, double eta, const ParamVec& g);

// Monte Carlo estimate of (1/eta^2) E[d_{A*}(omega_bar_plus, omega_plus)] at
// the given omega: the computable upper-bound surrogate for the estimator
// variance, averaged over `trials` independent draws.  Zero for Exact.
double variance_proxy(const TargetModel& model, const ExpParam& omega, double eta, int n,
                      int trials, Rng& rng, EstimatorKind kind);

}  // namespace ngvi
