#include "ngvi/types.hpp"

#include <cmath>
#include <string>

#include "ngvi/errors.hpp"

namespace ngvi {

const char* family_kind_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::GaussianFull: return "gaussian_full";
    case FamilyKind::GaussianDiag: return "gaussian_diag";
    case FamilyKind::GaussianDiagCentered: return "gaussian_diag_centered";
  }
  return "unknown";
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::WrongFamily: return "WrongFamily";
    case ErrorCode::InvalidConstraint: return "InvalidConstraint";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ModelCapabilityMissing: return "ModelCapabilityMissing";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::WellPosednessViolated: return "WellPosednessViolated";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MisalignedTraces: return "MisalignedTraces";
  }
  return "Error";
}

void check_layout(const ParamVec& x) {
  const int d = x.family.dim;
  if (d < 1) throw Error(ErrorCode::DimensionMismatch, "family dimension must be >= 1");
  const Eigen::Index lin = x.family.has_mean_block() ? d : 0;
  if (x.linear.size() != lin) {
    throw Error(ErrorCode::DimensionMismatch,
                "linear block has size " + std::to_string(x.linear.size()) +
                    ", expected " + std::to_string(lin));
  }
  const Eigen::Index qcols = x.family.diagonal_quad() ? 1 : d;
  if (x.quad.rows() != d || x.quad.cols() != qcols) {
    throw Error(ErrorCode::DimensionMismatch,
                "quad block is " + std::to_string(x.quad.rows()) + "x" +
                    std::to_string(x.quad.cols()) + ", expected " +
                    std::to_string(d) + "x" + std::to_string(qcols));
  }
}

void check_same_family(const ParamVec& x, const ParamVec& y) {
  if (x.family.kind != y.family.kind) {
    throw Error(ErrorCode::WrongFamily,
                std::string(family_kind_name(x.family.kind)) + " vs " +
                    family_kind_name(y.family.kind));
  }
  if (x.family.dim != y.family.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "dimension " + std::to_string(x.family.dim) + " vs " +
                    std::to_string(y.family.dim));
  }
}

ParamVec zero_vec(const Family& family) {
  ParamVec v;
  v.family = family;
  v.linear = Eigen::VectorXd::Zero(family.has_mean_block() ? family.dim : 0);
  v.quad = Eigen::MatrixXd::Zero(family.dim, family.diagonal_quad() ? 1 : family.dim);
  return v;
}

ParamVec axpby(double a, const ParamVec& x, double b, const ParamVec& y) {
  check_same_family(x, y);
  ParamVec r;
  r.family = x.family;
  r.linear = a * x.linear + b * y.linear;
  r.quad = a * x.quad + b * y.quad;
  return r;
}

double inner(const ParamVec& x, const ParamVec& y) {
  check_same_family(x, y);
  return x.linear.dot(y.linear) + x.quad.cwiseProduct(y.quad).sum();
}

bool all_finite(const ParamVec& x) {
  return x.linear.allFinite() && x.quad.allFinite();
}

}  // namespace ngvi
