#pragma once

#include "ngvi/expfam.hpp"
#include "ngvi/types.hpp"

namespace ngvi {

enum class ConstraintKind { Unconstrained, EigenClip, NonNegativeMean };

// Closed convex constraint set over moment space.  EigenClip bounds the
// covariance spectrum to [alpha, beta] (componentwise variance bounds for the
// diagonal kinds, which extends the full-family definition in the natural
// way); NonNegativeMean requires the mean to be componentwise non-negative and
// applies to the non-centered diagonal kind only.
struct ConstraintSet {
  ConstraintKind kind = ConstraintKind::Unconstrained;
  double alpha = 0.0;
  double beta = 0.0;

  static ConstraintSet unconstrained();
  static ConstraintSet eigen_clip(double alpha, double beta);  // InvalidConstraint unless 0 < alpha < beta
  static ConstraintSet non_negative_mean();
};

// Bregman projection of omega onto the constraint set.  Both supported sets
// admit closed forms: EigenClip clips the covariance eigenvalues (variances
// for diagonal kinds) into [alpha, beta] leaving the mean unchanged;
// NonNegativeMean clips negative mean components to zero leaving variances
// unchanged.  Feasible inputs are returned unchanged.
ExpParam project(const ExpParam& omega, const ConstraintSet& c);

// True when omega already satisfies the constraints.
bool feasible(const ExpParam& omega, const ConstraintSet& c);

}  // namespace ngvi
