#include "ngvi/estimators.hpp"

#include <random>
#include <string>

#include "ngvi/errors.hpp"

namespace ngvi {

namespace {

void require_positive_count(int n, const char* what) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be >= 1");
}

void require_finite(const ParamVec& v) {
  if (!all_finite(v)) {
    throw Error(ErrorCode::NonFiniteGradient, "gradient estimate has non-finite entries");
  }
}

}  // namespace

const char* estimator_kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::BonnetPrice: return "bonnet_price";
    case EstimatorKind::Subsample: return "subsample";
    case EstimatorKind::Exact: return "exact";
  }
  return "?";
}

GradientEstimate bonnet_price(const TargetModel& model, const ExpParam& omega, int n, Rng& rng) {
  require_positive_count(n, "sample count");
  const Family& fam = omega.family();
  if (fam.kind == FamilyKind::GaussianDiagCentered) {
    throw Error(ErrorCode::WrongFamily, "centered family has no mean block to correct");
  }
  if (!model.capabilities().gradient || !model.capabilities().hessian) {
    throw Error(ErrorCode::ModelCapabilityMissing, "needs log-density gradients and Hessians");
  }
  if (model.dim() != fam.dim) {
    throw Error(ErrorCode::DimensionMismatch, "model and family dimensions differ");
  }

  const Eigen::MatrixXd xs = sample(omega, n, rng);
  Eigen::VectorXd grad_sum;
  Eigen::MatrixXd hess_sum;
  model.accumulate_grad_hess(xs, grad_sum, hess_sum);

  GradientEstimate g;
  g.value.family = fam;
  g.n_used = n;
  if (fam.kind == FamilyKind::GaussianFull) {
    g.value.linear = grad_sum / n - (hess_sum / n) * omega.mu();
    g.value.quad = hess_sum / (2.0 * n);
  } else {
    const Eigen::VectorXd hdiag = hess_sum.diagonal() / n;
    g.value.linear = grad_sum / n - hdiag.cwiseProduct(omega.mu());
    g.value.quad = 0.5 * hdiag;
  }
  require_finite(g.value);
  return g;
}

GradientEstimate subsample_gradient_at(const TargetModel& model, const ExpParam& omega,
                                       const std::vector<int>& indices) {
  require_positive_count(static_cast<int>(indices.size()), "index count");
  if (!model.capabilities().finite_sum) {
    throw Error(ErrorCode::ModelCapabilityMissing, "subsampling needs a finite-sum model");
  }
  if (model.kind() != ModelKind::BayesLinReg) {
    throw Error(ErrorCode::ModelCapabilityMissing,
                "per-datum contributions exist in closed form only for the linear regression");
  }
  if (omega.family().kind != FamilyKind::GaussianFull) {
    throw Error(ErrorCode::WrongFamily, "per-datum contributions live in the full family");
  }
  if (omega.family().dim != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "model and family dimensions differ");
  }

  const int m_total = model.data_size();
  const int n = static_cast<int>(indices.size());
  const Eigen::MatrixXd& z = model.data().z;
  const Eigen::VectorXd& y = model.data().y;
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(model.dim());
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(model.dim(), model.dim());
  for (const int m : indices) {
    if (m < 0 || m >= m_total) {
      throw Error(ErrorCode::InvalidArgument, "datum index out of range");
    }
    const Eigen::VectorXd zm = z.row(m).transpose();
    lin += y(m) * zm;
    quad += zm * zm.transpose();
  }
  const double scale = static_cast<double>(m_total) / (n * model.noise_var());

  GradientEstimate g;
  g.value = prior_nat_image(model);
  g.value.linear += scale * lin;
  g.value.quad += -0.5 * scale * quad;
  g.n_used = n;
  require_finite(g.value);
  return g;
}

GradientEstimate subsample_gradient(const TargetModel& model, const ExpParam& omega, int n,
                                    Rng& rng) {
  require_positive_count(n, "sample count");
  if (!model.capabilities().finite_sum) {
    throw Error(ErrorCode::ModelCapabilityMissing, "subsampling needs a finite-sum model");
  }
  if (model.data_size() < 1) {
    throw Error(ErrorCode::EmptyInput, "cannot subsample an empty dataset");
  }
  std::uniform_int_distribution<int> pick(0, model.data_size() - 1);
  std::vector<int> indices(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) indices[static_cast<std::size_t>(k)] = pick(rng);
  return subsample_gradient_at(model, omega, indices);
}

GradientEstimate exact_gradient(const TargetModel& model, const ExpParam& omega) {
  if (!model.capabilities().conjugate) {
    throw Error(ErrorCode::ModelCapabilityMissing, "no closed-form gradient for this model");
  }
  GradientEstimate g;
  if (model.kind() == ModelKind::SyntheticGaussian) {
    g.value = family_adjoint_nat(model.gaussian_target_nat().coords(), omega.family());
    g.n_used = 0;
  } else {
    g.value = family_adjoint_nat(blr_posterior_nat(model).coords(), omega.family());
    g.n_used = model.data_size();
  }
  require_finite(g.value);
  return g;
}

GradientEstimate estimate_gradient(EstimatorKind kind, const TargetModel& model,
                                   const ExpParam& omega, int n, Rng& rng) {
  switch (kind) {
    case EstimatorKind::BonnetPrice: return bonnet_price(model, omega, n, rng);
    case EstimatorKind::Subsample: return subsample_gradient(model, omega, n, rng);
    case EstimatorKind::Exact: return exact_gradient(model, omega);
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable");
}

NatParam mix_toward(const ParamVec& theta, double eta, const ParamVec& g) {
  try {
    return NatParam::create(axpby(1.0 - eta, theta, eta, g));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DomainViolation) {
      throw Error(ErrorCode::WellPosednessViolated,
                  "mixed natural parameter left the interior domain");
    }
    throw;
  }
}

double variance_proxy(const TargetModel& model, const ExpParam& omega, double eta, int n,
                      int trials, Rng& rng, EstimatorKind kind) {
  if (!(eta > 0.0) || eta > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "eta must lie in (0,1]");
  }
  require_positive_count(trials, "trial count");
  const ParamVec theta = exp_to_nat(omega).coords();
  const GradientEstimate exact = exact_gradient(model, omega);
  const ExpParam mean_next = nat_to_exp(mix_toward(theta, eta, exact.value));

  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    const GradientEstimate g = estimate_gradient(kind, model, omega, n, rng);
    const ExpParam next = nat_to_exp(mix_toward(theta, eta, g.value));
    acc += std::max(0.0, bregman_dual(mean_next, next));
  }
  return acc / (trials * eta * eta);
}

}  // namespace ngvi
