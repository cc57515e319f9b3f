#include "ngvi/estimators.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "ngvi/errors.hpp"
#include "ngvi/expfam.hpp"
#include "ngvi/models.hpp"
#include "support/test_util.hpp"

using namespace ngvi;
using namespace testutil;

namespace {

double sample_variance(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return ss / (v.size() - 1);
}

TargetModel small_blr(int m, int d, std::uint64_t seed) {
  Rng rng = make_rng(seed ^ 0x9e3779b9u);
  return TargetModel::bayes_lin_reg(synthetic_regression_data(m, d, 0.5, seed),
                                    random_spd(d, rng), 0.8);
}

}  // namespace

TEST_CASE("hessian based estimator on quadratic targets") {
  Rng rng = make_rng(811);
  const auto model = TargetModel::synthetic_gaussian(3, 6.0, 7);
  const ParamVec& theta_pi = model.gaussian_target_nat().coords();
  const Eigen::MatrixXd p = Eigen::MatrixXd(-2.0 * theta_pi.quad);

  SUBCASE("second block is exact and draw independent") {
    const auto omega = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    const auto g1 = bonnet_price(model, omega, 50, rng);
    CHECK(g1.n_used == 50);
    CHECK(mat_rel_err(g1.value.quad, theta_pi.quad) < 1e-13);
    const auto g2 = bonnet_price(model, omega, 50, rng);  // rng has advanced: fresh draws
    CHECK(g1.value.quad == g2.value.quad);
  }
  SUBCASE("mean block concentrates on the target value") {
    const int n = 100000;
    const auto omega = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    const auto g = bonnet_price(model, omega, n, rng);
    const Eigen::MatrixXd cov = p * omega.moments().sigma * p / n;
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(g.value.linear(i) - theta_pi.linear(i)) <= 4.0 * std::sqrt(cov(i, i)));
    }
  }
  SUBCASE("diagonal family uses the hessian diagonal") {
    const Family fam{FamilyKind::GaussianDiag, 3};
    const auto omega = random_exp(fam, rng);
    const auto g = bonnet_price(model, omega, 40, rng);
    CHECK(g.value.family.kind == FamilyKind::GaussianDiag);
    CHECK((g.value.quad - Eigen::MatrixXd(-0.5 * p.diagonal())).norm() < 1e-13);

    const int n = 100000;
    const auto big = bonnet_price(model, omega, n, rng);
    const Eigen::MatrixXd sigma_pi = p.llt().solve(Eigen::MatrixXd::Identity(3, 3));
    const Eigen::VectorXd mu_pi = sigma_pi * theta_pi.linear;
    const Eigen::VectorXd truth =
        p * (mu_pi - omega.mu()) + p.diagonal().cwiseProduct(omega.mu());
    const Eigen::MatrixXd cov =
        p * omega.var().asDiagonal() * p / n;  // covariance of the sample-mean term
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(big.value.linear(i) - truth(i)) <= 4.0 * std::sqrt(cov(i, i)));
    }
  }
  SUBCASE("argument guards") {
    const auto omega = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    CHECK(thrown_code([&] { (void)bonnet_price(model, omega, 0, rng); }) ==
          ErrorCode::InvalidArgument);
    const auto centered = random_exp(Family{FamilyKind::GaussianDiagCentered, 3}, rng);
    CHECK(thrown_code([&] { (void)bonnet_price(model, centered, 5, rng); }) ==
          ErrorCode::WrongFamily);
    const auto small = random_exp(Family{FamilyKind::GaussianFull, 2}, rng);
    CHECK(thrown_code([&] { (void)bonnet_price(model, small, 5, rng); }) ==
          ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("subsampled gradient") {
  Rng rng = make_rng(409);
  const auto model = small_blr(30, 3, 5);
  const Family fam{FamilyKind::GaussianFull, 3};
  const auto omega = random_exp(fam, rng);

  SUBCASE("enumeration over single indices averages to the exact gradient") {
    const auto exact = exact_gradient(model, omega);
    ParamVec acc = zero_vec(fam);
    for (int m = 0; m < model.data_size(); ++m) {
      acc = axpby(1.0, acc, 1.0 / model.data_size(),
                  subsample_gradient_at(model, omega, {m}).value);
    }
    CHECK((acc.linear - exact.value.linear).norm() <=
          1e-12 * std::max(1.0, exact.value.linear.norm()));
    CHECK(mat_rel_err(acc.quad, exact.value.quad) < 1e-12);
    CHECK(exact.n_used == 30);
  }
  SUBCASE("every draw stays inside the natural domain") {
    for (int rep = 0; rep < 200; ++rep) {
      const auto g = subsample_gradient(model, omega, 3, rng);
      CHECK(g.n_used == 3);
      CHECK_NOTHROW((void)NatParam::create(g.value));
    }
  }
  SUBCASE("constant index batch reduces to prior plus a scaled datum") {
    const int m = 7;
    const std::vector<int> all_same(static_cast<std::size_t>(model.data_size()), m);
    const auto g = subsample_gradient_at(model, omega, all_same);
    const ParamVec expect =
        axpby(1.0, prior_nat_image(model), model.data_size(), per_datum_nat(model, m, omega));
    CHECK((g.value.linear - expect.linear).norm() <= 1e-14 * std::max(1.0, expect.linear.norm()));
    CHECK(mat_rel_err(g.value.quad, expect.quad) < 1e-14);
  }
  SUBCASE("argument guards") {
    const auto gauss = TargetModel::synthetic_gaussian(3, 2.0, 1);
    CHECK(thrown_code([&] { (void)subsample_gradient(gauss, omega, 2, rng); }) ==
          ErrorCode::ModelCapabilityMissing);
    const auto logit = TargetModel::logistic(synthetic_logistic_data(6, 3, 1.0, 2),
                                             Eigen::MatrixXd::Identity(3, 3));
    CHECK(thrown_code([&] { (void)subsample_gradient(logit, omega, 2, rng); }) ==
          ErrorCode::ModelCapabilityMissing);
    const auto diag = random_exp(Family{FamilyKind::GaussianDiag, 3}, rng);
    CHECK(thrown_code([&] { (void)subsample_gradient(model, diag, 2, rng); }) ==
          ErrorCode::WrongFamily);
    CHECK(thrown_code([&] { (void)subsample_gradient_at(model, omega, {}); }) ==
          ErrorCode::InvalidArgument);
    CHECK(thrown_code([&] { (void)subsample_gradient_at(model, omega, {30}); }) ==
          ErrorCode::InvalidArgument);
  }
}

TEST_CASE("exact gradient closed forms") {
  Rng rng = make_rng(271);
  const auto model = TargetModel::synthetic_gaussian(3, 9.0, 17);
  const ParamVec& theta_pi = model.gaussian_target_nat().coords();

  SUBCASE("full family returns the target parameter") {
    const auto w1 = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    const auto w2 = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    const auto g1 = exact_gradient(model, w1);
    const auto g2 = exact_gradient(model, w2);
    CHECK(g1.value.linear == theta_pi.linear);
    CHECK(g1.value.quad == theta_pi.quad);
    CHECK(g1.n_used == 0);
    CHECK(g1.value.linear == g2.value.linear);
    CHECK(g1.value.quad == g2.value.quad);
  }
  SUBCASE("centered family takes the precision diagonal") {
    const auto w = random_exp(Family{FamilyKind::GaussianDiagCentered, 3}, rng);
    const auto g = exact_gradient(model, w);
    CHECK(g.value.linear.size() == 0);
    CHECK(g.value.quad == Eigen::MatrixXd(theta_pi.quad.diagonal()));
  }
  SUBCASE("mean carrying diagonal family needs a diagonal precision") {
    const auto w = random_exp(Family{FamilyKind::GaussianDiag, 3}, rng);
    CHECK(thrown_code([&] { (void)exact_gradient(model, w); }) == ErrorCode::WrongFamily);
    const auto d1 = TargetModel::synthetic_gaussian(1, 4.0, 3);
    const auto w1 = random_exp(Family{FamilyKind::GaussianDiag, 1}, rng);
    CHECK_NOTHROW((void)exact_gradient(d1, w1));
  }
  SUBCASE("not available without conjugacy") {
    const auto logit = TargetModel::logistic(synthetic_logistic_data(6, 3, 1.0, 2),
                                             Eigen::MatrixXd::Identity(3, 3));
    const auto w = random_exp(Family{FamilyKind::GaussianFull, 3}, rng);
    CHECK(thrown_code([&] { (void)exact_gradient(logit, w); }) ==
          ErrorCode::ModelCapabilityMissing);
  }
}

TEST_CASE("guarded natural parameter mixing") {
  Rng rng = make_rng(563);
  const Family fam{FamilyKind::GaussianFull, 2};
  const auto theta = random_nat(fam, rng).coords();

  SUBCASE("interior mixes reproduce the affine combination") {
    const auto g = random_nat(fam, rng).coords();
    const auto mixed = mix_toward(theta, 0.25, g);
    const ParamVec expect = axpby(0.75, theta, 0.25, g);
    CHECK(mixed.coords().linear == expect.linear);
    CHECK(mixed.coords().quad == expect.quad);
    const auto full_step = mix_toward(theta, 1.0, g);
    CHECK(full_step.coords().quad == g.quad);
  }
  SUBCASE("leaving the domain is a well posedness failure") {
    ParamVec bad = theta;
    bad.quad = Eigen::MatrixXd::Identity(2, 2);
    CHECK(thrown_code([&] { (void)mix_toward(theta, 1.0, bad); }) ==
          ErrorCode::WellPosednessViolated);
    CHECK_NOTHROW((void)mix_toward(theta, 1e-3, bad));  // tiny mix keeps the precision dominant
  }
  SUBCASE("a heavy tailed draw can push the mix outside the domain") {
    Dataset data;
    data.z = m1(1.0);
    data.y = v1(3.0);  // residual near sqrt(3 * noise_var * 3) maximizes the positive curvature
    const auto model = TargetModel::student_reg(data, v1(0.0), m1(100.0), 1.0, 3.0);
    MomentParam tight;
    tight.mu = v1(0.0);
    tight.sigma = m1(1e-6);
    const auto omega = ExpParam::from_moments(Family{FamilyKind::GaussianFull, 1}, tight);
    const auto g = bonnet_price(model, omega, 4, rng);
    REQUIRE(g.value.quad(0, 0) > 0.0);
    CHECK(thrown_code([&] {
            (void)mix_toward(exp_to_nat(omega).coords(), 1.0, g.value);
          }) == ErrorCode::WellPosednessViolated);
  }
}

TEST_CASE("variance proxy") {
  Rng rng = make_rng(907);
  const auto model = TargetModel::synthetic_gaussian(2, 4.0, 23);
  const Family fam{FamilyKind::GaussianFull, 2};
  const auto omega = random_exp(fam, rng);

  SUBCASE("exact estimator gives exactly zero") {
    CHECK(variance_proxy(model, omega, 0.3, 5, 10, rng, EstimatorKind::Exact) == 0.0);
  }
  SUBCASE("fourfold batch growth cuts the proxy fourfold") {
    const double p1 = variance_proxy(model, omega, 0.3, 4, 10000, rng, EstimatorKind::BonnetPrice);
    const double p4 = variance_proxy(model, omega, 0.3, 16, 10000, rng, EstimatorKind::BonnetPrice);
    CHECK(p1 > 0.0);
    CHECK(p4 > 0.0);
    const double ratio = p1 / p4;
    CHECK(ratio > 2.8);
    CHECK(ratio < 5.2);
  }
  SUBCASE("subsampling obeys the same scaling law") {
    const auto blr = small_blr(12, 2, 29);
    const auto w = random_exp(fam, rng);
    const double p1 = variance_proxy(blr, w, 0.4, 2, 10000, rng, EstimatorKind::Subsample);
    const double p4 = variance_proxy(blr, w, 0.4, 8, 10000, rng, EstimatorKind::Subsample);
    CHECK(p1 >= 0.0);
    const double ratio = p1 / p4;
    CHECK(ratio > 2.8);
    CHECK(ratio < 5.2);
  }
  SUBCASE("argument guards") {
    CHECK(thrown_code([&] {
            (void)variance_proxy(model, omega, 0.0, 4, 10, rng, EstimatorKind::BonnetPrice);
          }) == ErrorCode::InvalidArgument);
    CHECK(thrown_code([&] {
            (void)variance_proxy(model, omega, 1.5, 4, 10, rng, EstimatorKind::BonnetPrice);
          }) == ErrorCode::InvalidArgument);
    CHECK(thrown_code([&] {
            (void)variance_proxy(model, omega, 0.3, 4, 0, rng, EstimatorKind::BonnetPrice);
          }) == ErrorCode::InvalidArgument);
    const auto logit = TargetModel::logistic(synthetic_logistic_data(6, 2, 1.0, 2),
                                             Eigen::MatrixXd::Identity(2, 2));
    CHECK(thrown_code([&] {
            (void)variance_proxy(logit, omega, 0.3, 4, 10, rng, EstimatorKind::BonnetPrice);
          }) == ErrorCode::ModelCapabilityMissing);
  }
}

TEST_CASE("component variances shrink with the batch size") {
  Rng rng = make_rng(1201);
  SUBCASE("hessian based estimator on a non quadratic target") {
    const auto model = TargetModel::logistic(synthetic_logistic_data(20, 2, 1.0, 31),
                                             Eigen::MatrixXd::Identity(2, 2));
    const auto omega = random_exp(Family{FamilyKind::GaussianFull, 2}, rng);
    const auto component_var = [&](int n) {
      std::vector<double> vals;
      vals.reserve(10000);
      for (int t = 0; t < 10000; ++t) {
        vals.push_back(bonnet_price(model, omega, n, rng).value.linear(0));
      }
      return sample_variance(vals);
    };
    const double ratio = component_var(2) / component_var(8);
    CHECK(ratio > 2.8);
    CHECK(ratio < 5.2);
  }
  SUBCASE("subsampled estimator") {
    const auto model = small_blr(15, 2, 37);
    const auto omega = random_exp(Family{FamilyKind::GaussianFull, 2}, rng);
    const auto component_var = [&](int n) {
      std::vector<double> vals;
      vals.reserve(10000);
      for (int t = 0; t < 10000; ++t) {
        vals.push_back(subsample_gradient(model, omega, n, rng).value.quad(0, 0));
      }
      return sample_variance(vals);
    };
    const double ratio = component_var(2) / component_var(8);
    CHECK(ratio > 2.8);
    CHECK(ratio < 5.2);
  }
}

TEST_CASE("estimator dispatch and names") {
  CHECK(std::string(estimator_kind_name(EstimatorKind::BonnetPrice)) == "bonnet_price");
  CHECK(std::string(estimator_kind_name(EstimatorKind::Subsample)) == "subsample");
  CHECK(std::string(estimator_kind_name(EstimatorKind::Exact)) == "exact");

  const auto model = TargetModel::synthetic_gaussian(2, 3.0, 3);
  Rng rng = make_rng(5);
  const auto omega = random_exp(Family{FamilyKind::GaussianFull, 2}, rng);
  Rng r1 = make_rng(99), r2 = make_rng(99);
  const auto a = estimate_gradient(EstimatorKind::BonnetPrice, model, omega, 7, r1);
  const auto b = bonnet_price(model, omega, 7, r2);
  CHECK(a.value.linear == b.value.linear);
  CHECK(a.value.quad == b.value.quad);

  const auto blr = small_blr(10, 2, 41);
  Rng r3 = make_rng(7), r4 = make_rng(7);
  const auto c = estimate_gradient(EstimatorKind::Subsample, blr, omega, 3, r3);
  const auto d = subsample_gradient(blr, omega, 3, r4);
  CHECK(c.value.linear == d.value.linear);
  CHECK(c.value.quad == d.value.quad);

  const auto e = estimate_gradient(EstimatorKind::Exact, model, omega, 1, r1);
  const auto f = exact_gradient(model, omega);
  CHECK(e.value.linear == f.value.linear);
  CHECK(e.value.quad == f.value.quad);
}
