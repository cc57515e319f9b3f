#include <doctest.h>

#include <cmath>

#include "ngvi/errors.hpp"
#include "ngvi/expfam.hpp"
#include "support/test_util.hpp"

using namespace ngvi;
using namespace testutil;

namespace {
const Family kF1{FamilyKind::GaussianFull, 1};
const Family kF2{FamilyKind::GaussianFull, 2};
const Family kC1{FamilyKind::GaussianDiagCentered, 1};
const Family kC2{FamilyKind::GaussianDiagCentered, 2};
}  // namespace

TEST_CASE("nat_to_exp fixed values") {
  // d=1, theta = (0.5, -0.25): mu = 1, second moment = 3.
  auto th = NatParam::create(pvec(kF1, v1(0.5), m1(-0.25)));
  auto om = nat_to_exp(th);
  CHECK(om.coords().linear(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(om.coords().quad(0, 0) == doctest::Approx(3.0).epsilon(1e-12));

  // Standard normal is a fixed point of the parametrization pair.
  auto std2 = NatParam::create(
      pvec(kF2, Eigen::VectorXd::Zero(2), -0.5 * Eigen::MatrixXd::Identity(2, 2)));
  auto om2 = nat_to_exp(std2);
  CHECK(om2.coords().linear.norm() == doctest::Approx(0.0));
  CHECK(mat_rel_err(om2.coords().quad, Eigen::MatrixXd::Identity(2, 2)) < 1e-14);
}

TEST_CASE("exp_to_nat fixed values and domain guard") {
  auto om = ExpParam::create(
      pvec(kF2, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)));
  auto th = exp_to_nat(om);
  CHECK(th.coords().linear.norm() == doctest::Approx(0.0));
  CHECK(mat_rel_err(th.coords().quad, -0.5 * Eigen::MatrixXd::Identity(2, 2)) < 1e-14);

  // omega = (1, 1) in d=1 implies zero variance: outside the open domain.
  CHECK_THROWS_AS(ExpParam::create(pvec(kF1, v1(1.0), m1(1.0))), Error);
  try {
    ExpParam::create(pvec(kF1, v1(1.0), m1(1.0)));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainViolation);
  }
}

TEST_CASE("natural-domain guard rejects singular precision") {
  Eigen::MatrixXd q2(2, 2);
  q2 << 0.0, 0.0, 0.0, -1.0;  // -2*theta2 = diag(0, 2) has a zero eigenvalue
  CHECK_THROWS_AS(NatParam::create(pvec(kF2, Eigen::VectorXd::Zero(2), q2)), Error);

  // Diagonal kinds: componentwise sign check.
  const Family diag2{FamilyKind::GaussianDiag, 2};
  Eigen::MatrixXd qd(2, 1);
  qd << -0.5, 0.0;
  CHECK_THROWS_AS(NatParam::create(pvec(diag2, Eigen::VectorXd::Zero(2), qd)), Error);
}

TEST_CASE("log_partition fixed values") {
  auto std3 = NatParam::create(
      pvec(Family{FamilyKind::GaussianFull, 3}, Eigen::VectorXd::Zero(3),
           -0.5 * Eigen::MatrixXd::Identity(3, 3)));
  CHECK(std::abs(log_partition(std3)) < 1e-14);

  auto th = NatParam::create(pvec(kF1, v1(0.5), m1(-0.25)));
  CHECK(log_partition(th) == doctest::Approx(0.25 + 0.5 * std::log(2.0)).epsilon(1e-12));

  // Centered kind, theta = -1/2: unit variance, A = 0.
  auto thc = NatParam::create(pvec(kC1, Eigen::VectorXd(), m1(-0.5)));
  CHECK(std::abs(log_partition(thc)) < 1e-14);
}

TEST_CASE("negative_entropy fixed values") {
  for (int d : {1, 2, 5}) {
    const Family f{FamilyKind::GaussianFull, d};
    auto om = ExpParam::create(
        pvec(f, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)));
    CHECK(negative_entropy(om) == doctest::Approx(-0.5 * d).epsilon(1e-12));
  }
  auto om = ExpParam::create(pvec(kF1, v1(0.0), m1(4.0)));
  CHECK(negative_entropy(om) ==
        doctest::Approx(-0.5 - 0.5 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("round trips across kinds") {
  Rng rng = make_rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rep % 5;
    for (const Family& f : all_families(d)) {
      auto th = random_nat(f, rng);
      auto back = exp_to_nat(nat_to_exp(th));
      CHECK(mat_rel_err(back.coords().quad, th.coords().quad) < 1e-10);
      if (f.has_mean_block()) {
        CHECK((back.coords().linear - th.coords().linear).norm() <
              1e-10 * (1.0 + th.coords().linear.norm()));
      }

      auto om = random_exp(f, rng);
      auto fwd = nat_to_exp(exp_to_nat(om));
      CHECK(mat_rel_err(fwd.coords().quad, om.coords().quad) < 1e-10);
    }
  }
}

TEST_CASE("Fenchel-Young equality at paired points") {
  Rng rng = make_rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rep % 5;
    for (const Family& f : all_families(d)) {
      auto th = random_nat(f, rng);
      auto om = nat_to_exp(th);
      const double gap =
          log_partition(th) + negative_entropy(om) - inner(th.coords(), om.coords());
      CHECK(std::abs(gap) < 1e-10);
    }
  }
}

TEST_CASE("bregman_dual fixed values") {
  auto n01 = ExpParam::create(pvec(kF1, v1(0.0), m1(1.0)));
  auto n11 = ExpParam::create(pvec(kF1, v1(1.0), m1(2.0)));
  CHECK(bregman_dual(n01, n11) == doctest::Approx(0.5).epsilon(1e-12));

  auto n02 = ExpParam::create(pvec(kF1, v1(0.0), m1(2.0)));
  CHECK(bregman_dual(n02, n01) ==
        doctest::Approx(0.5 * (1.0 - std::log(2.0))).epsilon(1e-12));

  CHECK(std::abs(bregman_dual(n11, n11)) <= 1e-12);
}

TEST_CASE("bregman_dual agrees with the KL oracle") {
  Rng rng = make_rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const int d = 1 + rep % 5;
    for (const Family& f : all_families(d)) {
      auto a = random_exp(f, rng);
      auto b = random_exp(f, rng);
      const double lhs = bregman_dual(a, b);
      const double rhs = kl_gaussian_oracle(a.moments(), b.moments());
      CHECK(lhs >= -1e-12);
      CHECK(rel_err(lhs, rhs) < 1e-8);
    }
  }
}

TEST_CASE("kl_gaussian_oracle fixed values and errors") {
  MomentParam p{v1(0.0), m1(1.0)};
  MomentParam q{v1(1.0), m1(1.0)};
  CHECK(kl_gaussian_oracle(p, q) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_gaussian_oracle(p, p) == doctest::Approx(0.0));

  MomentParam bad{Eigen::VectorXd::Zero(2), m1(1.0)};
  CHECK_THROWS_AS(kl_gaussian_oracle(p, bad), Error);

  // Mixed diagonal/full pair promotes the diagonal side.
  Rng rng = make_rng(17);
  MomentParam diag;
  diag.mu = randn_vec(3, rng);
  diag.sigma = random_positive(3, rng);
  MomentParam full;
  full.mu = diag.mu;
  full.sigma = Eigen::MatrixXd(diag.sigma.col(0).asDiagonal());
  MomentParam other;
  other.mu = randn_vec(3, rng);
  other.sigma = random_spd(3, rng);
  CHECK(rel_err(kl_gaussian_oracle(diag, other), kl_gaussian_oracle(full, other)) < 1e-12);
}

TEST_CASE("sampling moments and determinism") {
  const Family f{FamilyKind::GaussianFull, 3};
  auto om = ExpParam::create(
      pvec(f, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)));
  const int n = 100000;
  Rng rng = make_rng(23);
  Eigen::MatrixXd x = sample(om, n, rng);
  const Eigen::VectorXd mean = x.rowwise().mean();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(mean(i)) < 4.0 / std::sqrt(double(n)));

  const Eigen::MatrixXd second = x * x.transpose() / double(n);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      const double sd = std::sqrt((i == j ? 2.0 : 1.0) / double(n));
      CHECK(std::abs(second(i, j) - target) < 5.0 * sd);
    }
  }

  Rng r1 = make_rng(29), r2 = make_rng(29);
  CHECK(sample(om, 64, r1) == sample(om, 64, r2));
  CHECK_THROWS_AS(sample(om, 0, r1), Error);
}

TEST_CASE("embedding of diagonal kinds into the full family") {
  // Centered with unit variances embeds to the standard full Gaussian.
  auto c = ExpParam::create(pvec(kC2, Eigen::VectorXd(), Eigen::MatrixXd::Ones(2, 1)));
  auto e = embed_diag_to_full(c);
  CHECK(e.family().kind == FamilyKind::GaussianFull);
  CHECK(e.coords().linear.norm() == doctest::Approx(0.0));
  CHECK(mat_rel_err(e.coords().quad, Eigen::MatrixXd::Identity(2, 2)) < 1e-14);

  // Linearity of the coordinate map for both diagonal kinds.  Means are kept
  // small so the non-centered images stay inside the full-family domain
  // (the embedded covariance is diag(var) + diag(mu - mu mu^T), which is
  // positive definite whenever |mu|^2 < min var).
  Rng rng = make_rng(31);
  std::uniform_real_distribution<double> mu_small(-0.3, 0.3);
  std::uniform_real_distribution<double> var_mid(0.5, 1.5);
  const auto small_mean_exp = [&](const Family& f) {
    MomentParam m;
    m.mu.resize(f.dim);
    Eigen::MatrixXd s(f.dim, 1);
    for (int i = 0; i < f.dim; ++i) {
      m.mu(i) = f.has_mean_block() ? mu_small(rng) : 0.0;
      s(i, 0) = var_mid(rng);
    }
    m.sigma = s;
    return ExpParam::from_moments(f, m);
  };
  for (const FamilyKind kind :
       {FamilyKind::GaussianDiag, FamilyKind::GaussianDiagCentered}) {
    const Family f{kind, 3};
    for (int rep = 0; rep < 25; ++rep) {
      auto a = small_mean_exp(f);
      auto b = small_mean_exp(f);
      std::uniform_real_distribution<double> u(0.1, 0.9);
      const double al = u(rng), be = 1.0 - al;
      auto combo = ExpParam::create(axpby(al, a.coords(), be, b.coords()));
      auto lhs = embed_diag_to_full(combo);
      auto rhs = axpby(al, embed_diag_to_full(a).coords(), be,
                       embed_diag_to_full(b).coords());
      CHECK((lhs.coords().linear - rhs.linear).norm() <= 1e-12);
      CHECK((lhs.coords().quad - rhs.quad).norm() <= 1e-12);
    }
  }

  // The centered embedding preserves distributions, so KL computed natively
  // and KL computed in the embedded family agree.
  for (int rep = 0; rep < 25; ++rep) {
    const Family f{FamilyKind::GaussianDiagCentered, 3};
    auto a = random_exp(f, rng);
    auto b = random_exp(f, rng);
    const double native = kl_gaussian_oracle(a.moments(), b.moments());
    const double embedded = kl_gaussian_oracle(embed_diag_to_full(a).moments(),
                                               embed_diag_to_full(b).moments());
    CHECK(rel_err(native, embedded) < 1e-8);
    CHECK(rel_err(bregman_dual(a, b),
                  bregman_dual(embed_diag_to_full(a), embed_diag_to_full(b))) < 1e-8);
  }

  CHECK_THROWS_AS(
      embed_diag_to_full(ExpParam::create(
          pvec(kF2, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)))),
      Error);
}

TEST_CASE("family mismatches are rejected") {
  auto a = ExpParam::create(pvec(kF1, v1(0.0), m1(1.0)));
  auto b = ExpParam::create(pvec(kC1, Eigen::VectorXd(), m1(1.0)));
  CHECK_THROWS_AS(bregman_dual(a, b), Error);
  try {
    bregman_dual(a, b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WrongFamily);
  }
}
