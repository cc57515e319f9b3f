#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ngvi/expfam.hpp"
#include "ngvi/projections.hpp"
#include "ngvi/types.hpp"

namespace ngvi {

struct Dataset {
  Eigen::MatrixXd z;  // M x d covariates
  Eigen::VectorXd y;  // M responses
  bool standardized = false;

  int size() const { return static_cast<int>(y.size()); }
  int dim() const { return static_cast<int>(z.cols()); }
};

// Comma-separated, first row headers, '.' decimal separator.  Standardization
// shifts/scales covariate columns to mean 0 and sample standard deviation 1;
// the response column is left untouched.
Dataset load_csv(const std::string& path, const std::string& response_column,
                 const std::vector<std::string>& covariate_columns, bool standardize);

// Seeded generators standing in for the benchmark regression data at desk
// scale; deterministic per seed.
Dataset synthetic_regression_data(int m, int d, double noise_sd, std::uint64_t seed);
// Covariates uniform on [-5,5]^d, labels Bernoulli with logit <signal*1, z>.
Dataset synthetic_logistic_data(int m, int d, double signal, std::uint64_t seed);
// Gaussian covariates with heavy-tailed responses: noise sqrt(scale2) * t(dof).
Dataset synthetic_student_data(int m, int d, double scale2, double dof, std::uint64_t seed);

enum class ModelKind { SyntheticGaussian, BayesLinReg, Logistic, StudentReg };

const char* model_kind_name(ModelKind kind);

struct Capabilities {
  bool log_density = false;
  bool gradient = false;
  bool hessian = false;
  bool finite_sum = false;
  bool conjugate = false;
};

// Immutable target posterior.  Log-densities are tracked up to an additive
// constant; the synthetic Gaussian is normalized relative to the Gaussian
// base measure so that divergences to it vanish exactly at the target.
class TargetModel {
 public:
  // Sigma_pi = Q^T diag(lambda) Q with lambda log-spaced on [1, kappa] and Q a
  // seeded random orthogonal matrix; mu_pi uniform on [-1,1]^d.
  static TargetModel synthetic_gaussian(int dim, double kappa, std::uint64_t seed);
  // Centered Gaussian prior N(0, prior_sigma0), Gaussian likelihood noise.
  static TargetModel bayes_lin_reg(Dataset data, Eigen::MatrixXd prior_sigma0, double noise_var);
  static TargetModel logistic(Dataset data, Eigen::MatrixXd prior_sigma0);
  static TargetModel student_reg(Dataset data, Eigen::VectorXd prior_mu0,
                                 Eigen::MatrixXd prior_sigma0, double noise_var, double dof);

  ModelKind kind() const { return kind_; }
  const Capabilities& capabilities() const { return caps_; }
  int dim() const { return dim_; }
  int data_size() const { return data_.size(); }
  const Dataset& data() const;

  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd log_density_batch(const Eigen::MatrixXd& xs) const;
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hess_log_density(const Eigen::VectorXd& x) const;
  // Sums of gradient and Hessian over the columns of xs in one pass; for the
  // data models this costs one weighted Gram product per batch instead of n.
  void accumulate_grad_hess(const Eigen::MatrixXd& xs, Eigen::VectorXd& grad_sum,
                            Eigen::MatrixXd& hess_sum) const;

  // Natural parameter of the synthetic Gaussian target; other kinds lack it.
  const NatParam& gaussian_target_nat() const;

  const Eigen::MatrixXd& prior_precision() const;  // Sigma0^{-1}
  const Eigen::VectorXd& prior_mu0() const;        // StudentReg only
  double noise_var() const;
  double dof() const;

 private:
  TargetModel() = default;

  ModelKind kind_ = ModelKind::SyntheticGaussian;
  Capabilities caps_;
  int dim_ = 0;
  Dataset data_;

  // synthetic Gaussian target
  std::optional<NatParam> nat_pi_;
  Eigen::MatrixXd prec_pi_;  // Sigma_pi^{-1}
  Eigen::VectorXd mu_pi_;
  double logdet_sigma_pi_ = 0.0;

  // data models
  Eigen::MatrixXd sigma0_inv_;
  Eigen::VectorXd prior_mu0_;
  double noise_var_ = 0.0;
  double dof_ = 0.0;
  Eigen::VectorXd zty_;        // Z^T y
  Eigen::MatrixXd hess_blr_;   // -Sigma0^{-1} - Z^T Z / noise_var
};

// Posterior natural parameter of the conjugate linear-regression model:
// theta_pi = ((1/s2) sum y_m z_m, -Sigma0^{-1}/2 - (1/2s2) sum z_m z_m^T).
NatParam blr_posterior_nat(const TargetModel& model);

// Prior contribution to the exact gradient in the full-family layout
// (zero mean block for centered priors).  Finite-sum models only.
ParamVec prior_nat_image(const TargetModel& model);

// Per-datum gradient contribution theta_{y_m}; closed form exists only for
// the conjugate linear regression, where it is constant in omega (the omega
// argument mirrors the general definition).  Index m is 0-based.
ParamVec per_datum_nat(const TargetModel& model, int m, const ExpParam& omega);

// Adjoint image L^T theta of a full-family natural parameter, laid out in the
// given family's coordinates: identity for the full family, diagonal
// extraction for the centered kind.  The mean-carrying diagonal kind requires
// the quad block to be diagonal (relative off-diagonal mass below 1e-12),
// since that family embeds linearly only into diagonal-precision targets.
ParamVec family_adjoint_nat(const ParamVec& theta_full, const Family& family);

// Unique solution of the constrained VI problem for conjugate models:
// omega_* = project(nat_to_exp(L^T theta_pi), c) with L^T the adjoint of the
// family embedding (identity for the full family; diagonal extraction for the
// centered-diagonal family, which recovers any full target; the mean-carrying
// diagonal family only recovers targets whose precision is itself diagonal).
// nullopt when the model has no closed-form optimum.
std::optional<ExpParam> optimum(const TargetModel& model, const Family& family,
                                const ConstraintSet& c);

}  // namespace ngvi
