#pragma once

// Shared helpers for the unit and acceptance suites.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "ngvi/errors.hpp"
#include "ngvi/expfam.hpp"
#include "ngvi/rng.hpp"
#include "ngvi/types.hpp"

namespace testutil {

using ngvi::ExpParam;
using ngvi::Family;
using ngvi::FamilyKind;
using ngvi::MomentParam;
using ngvi::NatParam;
using ngvi::ParamVec;
using ngvi::Rng;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-12, std::abs(a), std::abs(b)});
}

inline double mat_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

inline ParamVec pvec(const Family& f, Eigen::VectorXd lin, Eigen::MatrixXd quad) {
  ParamVec v;
  v.family = f;
  v.linear = std::move(lin);
  v.quad = std::move(quad);
  return v;
}

inline Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }
inline Eigen::MatrixXd m1(double x) { return Eigen::MatrixXd::Constant(1, 1, x); }

inline Eigen::VectorXd randn_vec(int d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n;
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * n(rng);
  return v;
}

inline Eigen::MatrixXd random_spd(int d, Rng& rng, double jitter = 0.2) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(d, d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) a(i, j) = n(rng);
  }
  return a * a.transpose() + jitter * static_cast<double>(d) * Eigen::MatrixXd::Identity(d, d);
}

inline Eigen::VectorXd random_positive(int d, Rng& rng, double lo = -1.5, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = std::exp(u(rng));
  return v;
}

inline ExpParam random_exp(const Family& f, Rng& rng) {
  MomentParam m;
  m.mu = f.has_mean_block() ? randn_vec(f.dim, rng) : Eigen::VectorXd::Zero(f.dim);
  if (f.diagonal_quad()) {
    m.sigma = random_positive(f.dim, rng);
  } else {
    m.sigma = random_spd(f.dim, rng);
  }
  return ExpParam::from_moments(f, m);
}

inline NatParam random_nat(const Family& f, Rng& rng) {
  ParamVec v;
  v.family = f;
  v.linear = f.has_mean_block() ? randn_vec(f.dim, rng) : Eigen::VectorXd();
  if (f.diagonal_quad()) {
    v.quad = -0.5 * random_positive(f.dim, rng);
  } else {
    v.quad = -0.5 * random_spd(f.dim, rng);
  }
  return NatParam::create(std::move(v));
}

// Runs fn and reports which library error code it threw, if any.
template <typename Fn>
std::optional<ngvi::ErrorCode> thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const ngvi::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline const Family kFull2{FamilyKind::GaussianFull, 2};

inline std::vector<Family> all_families(int dim) {
  return {Family{FamilyKind::GaussianFull, dim},
          Family{FamilyKind::GaussianDiag, dim},
          Family{FamilyKind::GaussianDiagCentered, dim}};
}

}  // namespace testutil
