#pragma once

#include <Eigen/Dense>

namespace ngvi {

enum class FamilyKind { GaussianFull, GaussianDiag, GaussianDiagCentered };

const char* family_kind_name(FamilyKind kind);

// Which Gaussian parametrization the coordinates live in, and its dimension.
struct Family {
  FamilyKind kind;
  int dim;

  bool has_mean_block() const { return kind != FamilyKind::GaussianDiagCentered; }
  bool diagonal_quad() const { return kind != FamilyKind::GaussianFull; }
  bool operator==(const Family&) const = default;
};

// Element of the ambient coordinate space of a family, with no domain
// membership implied.  "linear" is the mean-statistic block (size 0 for the
// centered kind).  "quad" is the second-moment block: a d x d symmetric matrix
// for the full kind, a d x 1 column for the diagonal kinds.
struct ParamVec {
  Family family;
  Eigen::VectorXd linear;
  Eigen::MatrixXd quad;
};

ParamVec zero_vec(const Family& family);
ParamVec axpby(double a, const ParamVec& x, double b, const ParamVec& y);
// Dot product on the linear block plus Frobenius product on the quad block.
double inner(const ParamVec& x, const ParamVec& y);
bool all_finite(const ParamVec& x);
// Throws DimensionMismatch when block shapes disagree with the family.
void check_layout(const ParamVec& x);
// Throws WrongFamily / DimensionMismatch when the two disagree.
void check_same_family(const ParamVec& x, const ParamVec& y);

// Mean/covariance view.  sigma is d x d for a full covariance or d x 1 for a
// diagonal one (for d = 1 the two coincide and are treated as full).
struct MomentParam {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  bool diagonal_sigma() const { return sigma.cols() == 1 && sigma.rows() > 1; }
};

}  // namespace ngvi
