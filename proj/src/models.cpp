#include "ngvi/models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ngvi/errors.hpp"
#include "ngvi/rng.hpp"

namespace ngvi {

namespace {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double log1pexp(double v) {
  if (v > 37.0) return v;  // log1p(exp(-v)) underflows the addition
  if (v < -37.0) return std::exp(v);
  return std::log1p(std::exp(v));
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

void check_dataset(const Dataset& data, int expect_dim) {
  if (data.z.rows() != data.y.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "covariate rows " + std::to_string(data.z.rows()) + " vs responses " +
                    std::to_string(data.y.size()));
  }
  if (expect_dim > 0 && data.dim() != expect_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "covariate dim " + std::to_string(data.dim()) + " vs prior dim " +
                    std::to_string(expect_dim));
  }
  if (!data.z.allFinite() || !data.y.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "dataset contains non-finite entries");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::SyntheticGaussian: return "gaussian";
    case ModelKind::BayesLinReg: return "blr";
    case ModelKind::Logistic: return "logistic";
    case ModelKind::StudentReg: return "student";
  }
  return "?";
}

Dataset load_csv(const std::string& path, const std::string& response_column,
                 const std::vector<std::string>& covariate_columns, bool standardize) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  const auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw Error(ErrorCode::SchemaError, "missing column '" + name + "'");
  };

  const int y_idx = column_index(response_column);
  std::vector<int> z_idx;
  z_idx.reserve(covariate_columns.size());
  for (const auto& name : covariate_columns) z_idx.push_back(column_index(name));
  if (z_idx.empty()) throw Error(ErrorCode::SchemaError, "no covariate columns requested");

  const auto parse_cell = [&](const std::string& tok, int row, const std::string& col) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || tok.empty() || !std::isfinite(v)) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(row) + ", column '" + col + "': cannot parse '" + tok + "'");
    }
    return v;
  };

  std::vector<double> ys;
  std::vector<std::vector<double>> zs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + " has " +
                                             std::to_string(cells.size()) + " fields, expected " +
                                             std::to_string(header.size()));
    }
    ys.push_back(parse_cell(cells[y_idx], row, response_column));
    std::vector<double> zr(z_idx.size());
    for (std::size_t j = 0; j < z_idx.size(); ++j) {
      zr[j] = parse_cell(cells[z_idx[j]], row, covariate_columns[j]);
    }
    zs.push_back(std::move(zr));
  }
  if (ys.empty()) throw Error(ErrorCode::EmptyInput, "no data rows in " + path);

  Dataset data;
  const int m = static_cast<int>(ys.size());
  const int d = static_cast<int>(z_idx.size());
  data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), m);
  data.z.resize(m, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) data.z(i, j) = zs[i][j];
  }

  if (standardize) {
    if (m < 2) {
      throw Error(ErrorCode::InvalidArgument, "standardization requires at least 2 rows");
    }
    for (int j = 0; j < d; ++j) {
      const double mean = data.z.col(j).mean();
      const double sd = std::sqrt((data.z.col(j).array() - mean).square().sum() / (m - 1));
      if (!(sd > 0.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    "constant column '" + covariate_columns[j] + "' cannot be standardized");
      }
      data.z.col(j) = (data.z.col(j).array() - mean) / sd;
    }
    data.standardized = true;
  }
  return data;
}

Dataset synthetic_regression_data(int m, int d, double noise_sd, std::uint64_t seed) {
  if (m < 1 || d < 1) throw Error(ErrorCode::InvalidArgument, "need m >= 1 and d >= 1");
  if (!(noise_sd >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sd must be >= 0");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  Dataset data;
  data.z.resize(m, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) data.z(i, j) = gauss(rng);
  }
  Eigen::VectorXd x_star(d);
  for (int j = 0; j < d; ++j) x_star(j) = coef(rng);
  data.y = data.z * x_star;
  for (int i = 0; i < m; ++i) data.y(i) += noise_sd * gauss(rng);
  return data;
}

Dataset synthetic_logistic_data(int m, int d, double signal, std::uint64_t seed) {
  if (m < 1 || d < 1) throw Error(ErrorCode::InvalidArgument, "need m >= 1 and d >= 1");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> box(-5.0, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset data;
  data.z.resize(m, d);
  data.y.resize(m);
  const Eigen::VectorXd x_star = Eigen::VectorXd::Constant(d, signal);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) data.z(i, j) = box(rng);
    data.y(i) = unit(rng) < sigmoid(data.z.row(i) * x_star) ? 1.0 : 0.0;
  }
  return data;
}

Dataset synthetic_student_data(int m, int d, double scale2, double dof, std::uint64_t seed) {
  if (m < 1 || d < 1) throw Error(ErrorCode::InvalidArgument, "need m >= 1 and d >= 1");
  if (!(scale2 > 0.0) || !(dof > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "need scale2 > 0 and dof > 0");
  }
  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::student_t_distribution<double> student(dof);
  Dataset data;
  data.z.resize(m, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) data.z(i, j) = gauss(rng);
  }
  Eigen::VectorXd x_star(d);
  for (int j = 0; j < d; ++j) x_star(j) = coef(rng);
  data.y = data.z * x_star;
  const double scale = std::sqrt(scale2);
  for (int i = 0; i < m; ++i) data.y(i) += scale * student(rng);
  return data;
}

TargetModel TargetModel::synthetic_gaussian(int dim, double kappa, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  if (!(kappa >= 1.0)) throw Error(ErrorCode::InvalidArgument, "kappa must be >= 1");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd a(dim, dim);
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < dim; ++i) a(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::VectorXd rdiag = qr.matrixQR().diagonal();
  for (int j = 0; j < dim; ++j) {
    if (rdiag(j) < 0.0) q.col(j) = -q.col(j);
  }

  Eigen::VectorXd lam(dim);
  for (int i = 0; i < dim; ++i) {
    lam(i) = dim == 1 ? 1.0 : std::pow(kappa, static_cast<double>(i) / (dim - 1));
  }
  const Eigen::MatrixXd sigma = q.transpose() * lam.asDiagonal() * q;

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd mu(dim);
  for (int i = 0; i < dim; ++i) mu(i) = unit(rng);

  TargetModel model;
  model.kind_ = ModelKind::SyntheticGaussian;
  model.caps_ = {true, true, true, false, true};
  model.dim_ = dim;
  model.prec_pi_ = spd_inverse(sigma, "target covariance");
  model.mu_pi_ = mu;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  model.logdet_sigma_pi_ = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();

  ParamVec theta;
  theta.family = Family{FamilyKind::GaussianFull, dim};
  theta.linear = model.prec_pi_ * mu;
  theta.quad = -0.5 * model.prec_pi_;
  model.nat_pi_ = NatParam::create(std::move(theta));
  return model;
}

TargetModel TargetModel::bayes_lin_reg(Dataset data, Eigen::MatrixXd prior_sigma0,
                                       double noise_var) {
  if (prior_sigma0.rows() != prior_sigma0.cols() || prior_sigma0.rows() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "prior covariance must be square");
  }
  check_dataset(data, static_cast<int>(prior_sigma0.rows()));
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_var must be > 0");

  TargetModel model;
  model.kind_ = ModelKind::BayesLinReg;
  model.caps_ = {true, true, true, true, true};
  model.dim_ = static_cast<int>(prior_sigma0.rows());
  model.sigma0_inv_ = spd_inverse(prior_sigma0, "prior covariance");
  model.noise_var_ = noise_var;
  model.zty_ = data.z.transpose() * data.y;
  model.hess_blr_ = -(model.sigma0_inv_ + data.z.transpose() * data.z / noise_var);
  model.data_ = std::move(data);
  return model;
}

TargetModel TargetModel::logistic(Dataset data, Eigen::MatrixXd prior_sigma0) {
  if (prior_sigma0.rows() != prior_sigma0.cols() || prior_sigma0.rows() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "prior covariance must be square");
  }
  check_dataset(data, static_cast<int>(prior_sigma0.rows()));
  for (int i = 0; i < data.size(); ++i) {
    if (data.y(i) != 0.0 && data.y(i) != 1.0) {
      throw Error(ErrorCode::InvalidArgument, "logistic responses must be 0 or 1");
    }
  }

  TargetModel model;
  model.kind_ = ModelKind::Logistic;
  model.caps_ = {true, true, true, true, false};
  model.dim_ = static_cast<int>(prior_sigma0.rows());
  model.sigma0_inv_ = spd_inverse(prior_sigma0, "prior covariance");
  model.data_ = std::move(data);
  return model;
}

TargetModel TargetModel::student_reg(Dataset data, Eigen::VectorXd prior_mu0,
                                     Eigen::MatrixXd prior_sigma0, double noise_var, double dof) {
  if (prior_sigma0.rows() != prior_sigma0.cols() || prior_sigma0.rows() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "prior covariance must be square");
  }
  if (prior_mu0.size() != prior_sigma0.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "prior mean and covariance dims differ");
  }
  check_dataset(data, static_cast<int>(prior_sigma0.rows()));
  if (!(noise_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_var must be > 0");
  if (!(dof > 0.0)) throw Error(ErrorCode::InvalidArgument, "dof must be > 0");

  TargetModel model;
  model.kind_ = ModelKind::StudentReg;
  model.caps_ = {true, true, true, true, false};
  model.dim_ = static_cast<int>(prior_sigma0.rows());
  model.sigma0_inv_ = spd_inverse(prior_sigma0, "prior covariance");
  model.prior_mu0_ = std::move(prior_mu0);
  model.noise_var_ = noise_var;
  model.dof_ = dof;
  model.data_ = std::move(data);
  return model;
}

const Dataset& TargetModel::data() const {
  if (!caps_.finite_sum) {
    throw Error(ErrorCode::ModelCapabilityMissing, "model has no dataset");
  }
  return data_;
}

const NatParam& TargetModel::gaussian_target_nat() const {
  if (!nat_pi_) {
    throw Error(ErrorCode::ModelCapabilityMissing, "only the synthetic Gaussian target has theta_pi");
  }
  return *nat_pi_;
}

const Eigen::MatrixXd& TargetModel::prior_precision() const {
  if (kind_ == ModelKind::SyntheticGaussian) {
    throw Error(ErrorCode::ModelCapabilityMissing, "synthetic Gaussian target has no prior");
  }
  return sigma0_inv_;
}

const Eigen::VectorXd& TargetModel::prior_mu0() const {
  if (kind_ != ModelKind::StudentReg) {
    throw Error(ErrorCode::ModelCapabilityMissing, "only the heavy-tailed model has a shifted prior");
  }
  return prior_mu0_;
}

double TargetModel::noise_var() const { return noise_var_; }
double TargetModel::dof() const { return dof_; }

double TargetModel::log_density(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "point has wrong dimension");
  double v = 0.0;
  switch (kind_) {
    case ModelKind::SyntheticGaussian: {
      const Eigen::VectorXd dxy = x - mu_pi_;
      v = -0.5 * dxy.dot(prec_pi_ * dxy) - 0.5 * logdet_sigma_pi_;
      break;
    }
    case ModelKind::BayesLinReg:
      v = -(data_.y - data_.z * x).squaredNorm() / (2.0 * noise_var_) -
          0.5 * x.dot(sigma0_inv_ * x);
      break;
    case ModelKind::Logistic: {
      const Eigen::VectorXd u = data_.z * x;
      v = data_.y.dot(u) - 0.5 * x.dot(sigma0_inv_ * x);
      for (int i = 0; i < u.size(); ++i) v -= log1pexp(u(i));
      break;
    }
    case ModelKind::StudentReg: {
      const Eigen::VectorXd r = data_.y - data_.z * x;
      const double a = dof_ * noise_var_;
      v = -0.5 * (dof_ + 1.0) * (r.array().square() / a).log1p().sum();
      const Eigen::VectorXd dx0 = x - prior_mu0_;
      v -= 0.5 * dx0.dot(sigma0_inv_ * dx0);
      break;
    }
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "log-density is not finite");
  return v;
}

Eigen::VectorXd TargetModel::log_density_batch(const Eigen::MatrixXd& xs) const {
  if (xs.rows() != dim_) throw Error(ErrorCode::DimensionMismatch, "points have wrong dimension");
  const int n = static_cast<int>(xs.cols());
  Eigen::VectorXd out(n);
  const auto quad_form_cols = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& d) {
    Eigen::RowVectorXd q = d.cwiseProduct(p * d).colwise().sum();
    return Eigen::VectorXd(q.transpose());
  };
  switch (kind_) {
    case ModelKind::SyntheticGaussian: {
      const Eigen::MatrixXd dxy = xs.colwise() - mu_pi_;
      out = -0.5 * quad_form_cols(prec_pi_, dxy);
      out.array() -= 0.5 * logdet_sigma_pi_;
      break;
    }
    case ModelKind::BayesLinReg: {
      const Eigen::MatrixXd r = (-(data_.z * xs)).colwise() + data_.y;
      Eigen::RowVectorXd rs = r.colwise().squaredNorm();
      out = -rs.transpose() / (2.0 * noise_var_);
      out -= 0.5 * quad_form_cols(sigma0_inv_, xs);
      break;
    }
    case ModelKind::Logistic: {
      const Eigen::MatrixXd u = data_.z * xs;
      out = (data_.y.transpose() * u).transpose();
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < u.rows(); ++i) out(j) -= log1pexp(u(i, j));
      }
      out -= 0.5 * quad_form_cols(sigma0_inv_, xs);
      break;
    }
    case ModelKind::StudentReg: {
      const Eigen::MatrixXd r = (-(data_.z * xs)).colwise() + data_.y;
      const double a = dof_ * noise_var_;
      Eigen::RowVectorXd tails = (r.array().square() / a).log1p().colwise().sum();
      out = -0.5 * (dof_ + 1.0) * tails.transpose();
      const Eigen::MatrixXd dx0 = xs.colwise() - prior_mu0_;
      out -= 0.5 * quad_form_cols(sigma0_inv_, dx0);
      break;
    }
  }
  if (!out.allFinite()) throw Error(ErrorCode::NonFiniteValue, "log-density is not finite");
  return out;
}

Eigen::VectorXd TargetModel::grad_log_density(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "point has wrong dimension");
  switch (kind_) {
    case ModelKind::SyntheticGaussian:
      return prec_pi_ * (mu_pi_ - x);
    case ModelKind::BayesLinReg:
      return zty_ / noise_var_ + hess_blr_ * x;
    case ModelKind::Logistic: {
      const Eigen::VectorXd u = data_.z * x;
      Eigen::VectorXd s(u.size());
      for (int i = 0; i < u.size(); ++i) s(i) = sigmoid(u(i));
      return data_.z.transpose() * (data_.y - s) - sigma0_inv_ * x;
    }
    case ModelKind::StudentReg: {
      const Eigen::VectorXd r = data_.y - data_.z * x;
      const double a = dof_ * noise_var_;
      const Eigen::VectorXd w =
          (dof_ + 1.0) * r.array() / (a + r.array().square());
      return data_.z.transpose() * w - sigma0_inv_ * (x - prior_mu0_);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable");
}

Eigen::MatrixXd TargetModel::hess_log_density(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "point has wrong dimension");
  switch (kind_) {
    case ModelKind::SyntheticGaussian:
      return -prec_pi_;
    case ModelKind::BayesLinReg:
      return hess_blr_;
    case ModelKind::Logistic: {
      const Eigen::VectorXd u = data_.z * x;
      Eigen::VectorXd w(u.size());
      for (int i = 0; i < u.size(); ++i) {
        const double s = sigmoid(u(i));
        w(i) = s * (1.0 - s);
      }
      return -data_.z.transpose() * (data_.z.array().colwise() * w.array()).matrix() - sigma0_inv_;
    }
    case ModelKind::StudentReg: {
      const Eigen::VectorXd r = data_.y - data_.z * x;
      const double a = dof_ * noise_var_;
      const Eigen::ArrayXd den = a + r.array().square();
      const Eigen::VectorXd w = (dof_ + 1.0) * (a - r.array().square()) / den.square();
      return -data_.z.transpose() * (data_.z.array().colwise() * w.array()).matrix() - sigma0_inv_;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable");
}

void TargetModel::accumulate_grad_hess(const Eigen::MatrixXd& xs, Eigen::VectorXd& grad_sum,
                                       Eigen::MatrixXd& hess_sum) const {
  if (xs.rows() != dim_) throw Error(ErrorCode::DimensionMismatch, "points have wrong dimension");
  const int n = static_cast<int>(xs.cols());
  const Eigen::VectorXd xsum = xs.rowwise().sum();
  switch (kind_) {
    case ModelKind::SyntheticGaussian:
      grad_sum = prec_pi_ * (n * mu_pi_ - xsum);
      hess_sum = -n * prec_pi_;
      return;
    case ModelKind::BayesLinReg:
      grad_sum = n * zty_ / noise_var_ + hess_blr_ * xsum;
      hess_sum = n * hess_blr_;
      return;
    case ModelKind::Logistic: {
      const Eigen::MatrixXd u = data_.z * xs;  // M x n
      Eigen::VectorXd s_sum = Eigen::VectorXd::Zero(u.rows());
      Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(u.rows());
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < u.rows(); ++i) {
          const double s = sigmoid(u(i, j));
          s_sum(i) += s;
          w_sum(i) += s * (1.0 - s);
        }
      }
      grad_sum = data_.z.transpose() * (n * data_.y - s_sum) - sigma0_inv_ * xsum;
      hess_sum =
          -data_.z.transpose() * (data_.z.array().colwise() * w_sum.array()).matrix() -
          n * sigma0_inv_;
      return;
    }
    case ModelKind::StudentReg: {
      const Eigen::MatrixXd r = (-(data_.z * xs)).colwise() + data_.y;  // M x n
      const double a = dof_ * noise_var_;
      const Eigen::ArrayXXd den = a + r.array().square();
      const Eigen::VectorXd w_grad = ((dof_ + 1.0) * r.array() / den).rowwise().sum();
      const Eigen::VectorXd w_hess =
          ((dof_ + 1.0) * (a - r.array().square()) / den.square()).rowwise().sum();
      grad_sum = data_.z.transpose() * w_grad - sigma0_inv_ * (xsum - n * prior_mu0_);
      hess_sum =
          -data_.z.transpose() * (data_.z.array().colwise() * w_hess.array()).matrix() -
          n * sigma0_inv_;
      return;
    }
  }
}

NatParam blr_posterior_nat(const TargetModel& model) {
  if (model.kind() != ModelKind::BayesLinReg) {
    throw Error(ErrorCode::ModelCapabilityMissing,
                "posterior closed form requires the conjugate linear regression");
  }
  ParamVec theta;
  theta.family = Family{FamilyKind::GaussianFull, model.dim()};
  const Dataset& data = model.data();
  theta.linear = data.z.transpose() * data.y / model.noise_var();
  theta.quad = -0.5 * model.prior_precision() -
               data.z.transpose() * data.z / (2.0 * model.noise_var());
  return NatParam::create(std::move(theta));
}

ParamVec prior_nat_image(const TargetModel& model) {
  if (!model.capabilities().finite_sum) {
    throw Error(ErrorCode::ModelCapabilityMissing, "prior image requires a finite-sum model");
  }
  ParamVec v;
  v.family = Family{FamilyKind::GaussianFull, model.dim()};
  v.quad = -0.5 * model.prior_precision();
  if (model.kind() == ModelKind::StudentReg) {
    v.linear = model.prior_precision() * model.prior_mu0();
  } else {
    v.linear = Eigen::VectorXd::Zero(model.dim());
  }
  return v;
}

ParamVec per_datum_nat(const TargetModel& model, int m, const ExpParam& omega) {
  if (model.kind() != ModelKind::BayesLinReg) {
    throw Error(ErrorCode::ModelCapabilityMissing,
                "per-datum contributions exist in closed form only for the linear regression");
  }
  if (omega.family().dim != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "omega dimension does not match model");
  }
  if (m < 0 || m >= model.data_size()) {
    throw Error(ErrorCode::InvalidArgument, "datum index out of range");
  }
  const Eigen::VectorXd zm = model.data().z.row(m).transpose();
  ParamVec v;
  v.family = Family{FamilyKind::GaussianFull, model.dim()};
  v.linear = model.data().y(m) * zm / model.noise_var();
  v.quad = -zm * zm.transpose() / (2.0 * model.noise_var());
  return v;
}

ParamVec family_adjoint_nat(const ParamVec& theta_full, const Family& family) {
  if (theta_full.family.kind != FamilyKind::GaussianFull) {
    throw Error(ErrorCode::InvalidArgument, "expected a full-family natural parameter");
  }
  if (theta_full.family.dim != family.dim) {
    throw Error(ErrorCode::DimensionMismatch, "family dimension does not match parameter");
  }
  ParamVec out;
  out.family = family;
  switch (family.kind) {
    case FamilyKind::GaussianFull:
      return theta_full;
    case FamilyKind::GaussianDiagCentered:
      out.linear = Eigen::VectorXd();
      out.quad = theta_full.quad.diagonal();
      return out;
    case FamilyKind::GaussianDiag: {
      Eigen::MatrixXd off = theta_full.quad;
      off.diagonal().setZero();
      if (off.norm() > 1e-12 * theta_full.quad.norm()) {
        throw Error(ErrorCode::WrongFamily,
                    "mean-carrying diagonal family recovers only diagonal-precision targets");
      }
      out.linear = theta_full.linear;
      out.quad = theta_full.quad.diagonal();
      return out;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable");
}

std::optional<ExpParam> optimum(const TargetModel& model, const Family& family,
                                const ConstraintSet& c) {
  if (!model.capabilities().conjugate) return std::nullopt;
  if (family.dim != model.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "family dimension does not match model");
  }
  const NatParam theta_pi = model.kind() == ModelKind::SyntheticGaussian
                                ? model.gaussian_target_nat()
                                : blr_posterior_nat(model);
  ParamVec mapped = family_adjoint_nat(theta_pi.coords(), family);
  return project(nat_to_exp(NatParam::create(std::move(mapped))), c);
}

}  // namespace ngvi
