#include "ngvi/optimizer.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "ngvi/errors.hpp"

namespace ngvi {

namespace {

void require_unit_interval(double eta) {
  if (!(eta > 0.0) || !(eta <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "eta must lie in (0, 1]");
  }
}

int poly_batch(long t, double gamma) {
  double v = std::pow(static_cast<double>(t) + 1.0, gamma);
  double r = std::round(v);
  // pow() can overshoot an exact integer power by an ulp; without the snap the
  // ceiling would report e.g. 3 instead of 2 for (7+1)^(1/3).
  if (std::abs(v - r) < 1e-9) v = r;
  double c = std::ceil(v);
  if (!(c >= 1.0)) c = 1.0;
  if (c > 2.0e9) {
    throw Error(ErrorCode::InvalidArgument, "polynomial batch size exceeds the int range");
  }
  return static_cast<int>(c);
}

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorCode::ConfigError, message);
}

}  // namespace

StepSchedule StepSchedule::constant(double eta) {
  require_unit_interval(eta);
  StepSchedule s;
  s.kind = Kind::Constant;
  s.eta = eta;
  return s;
}

StepSchedule StepSchedule::decreasing(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw Error(ErrorCode::InvalidArgument, "decreasing step needs m > 0");
  }
  StepSchedule s;
  s.kind = Kind::Decreasing;
  s.m = m;
  return s;
}

BatchSchedule BatchSchedule::constant(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
  BatchSchedule b;
  b.kind = Kind::Constant;
  b.n = n;
  return b;
}

BatchSchedule BatchSchedule::poly(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::InvalidArgument, "polynomial batch growth needs gamma > 0");
  }
  BatchSchedule b;
  b.kind = Kind::Poly;
  b.gamma = gamma;
  return b;
}

BatchSchedule BatchSchedule::clipped_poly(int n, double gamma) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "batch floor must be at least 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::InvalidArgument, "polynomial batch growth needs gamma > 0");
  }
  BatchSchedule b;
  b.kind = Kind::ClippedPoly;
  b.n = n;
  b.gamma = gamma;
  return b;
}

std::pair<double, int> schedule_values(const Schedule& schedule, long t) {
  if (t < 0) throw Error(ErrorCode::InvalidArgument, "iteration index must be non-negative");
  double eta = 0.0;
  switch (schedule.step.kind) {
    case StepSchedule::Kind::Constant:
      eta = schedule.step.eta;
      break;
    case StepSchedule::Kind::Decreasing:
      eta = 1.0 / (schedule.step.m * (0.5 * static_cast<double>(t) + 1.0));
      break;
  }
  int n = 1;
  switch (schedule.batch.kind) {
    case BatchSchedule::Kind::Constant:
      n = schedule.batch.n;
      break;
    case BatchSchedule::Kind::Poly:
      n = poly_batch(t, schedule.batch.gamma);
      break;
    case BatchSchedule::Kind::ClippedPoly:
      n = std::max(schedule.batch.n, poly_batch(t, schedule.batch.gamma));
      break;
  }
  return {eta, n};
}

ExpParam ngvi_step(const ExpParam& omega, double eta, const GradientEstimate& g,
                   const ConstraintSet& c) {
  require_unit_interval(eta);
  NatParam theta_plus = mix_toward(exp_to_nat(omega).coords(), eta, g.value);
  return project(nat_to_exp(theta_plus), c);
}

double bregman_to_optimum(const ExpParam& omega, const ExpParam& omega_star) {
  return bregman_dual(omega_star, omega);
}

double elbo_mc(const TargetModel& model, const ExpParam& omega, int n_samples, Rng& rng) {
  if (n_samples < 1) {
    throw Error(ErrorCode::InvalidArgument, "elbo estimate needs at least one sample");
  }
  if (!model.capabilities().log_density) {
    throw Error(ErrorCode::ModelCapabilityMissing, "elbo estimate needs log_density");
  }
  if (model.dim() != omega.family().dim) {
    throw Error(ErrorCode::DimensionMismatch, "model and iterate dimensions disagree");
  }
  const Eigen::MatrixXd xs = sample(omega, n_samples, rng);
  const double value = model.log_density_batch(xs).mean() - negative_entropy(omega);
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NonFiniteValue, "elbo estimate is non-finite");
  }
  return value;
}

RunTrace run(const TargetModel& model, const Family& family, const ConstraintSet& c,
             const Schedule& schedule, EstimatorKind estimator, long iterations,
             const ExpParam& omega0, std::uint64_t seed, const MetricsSpec& metrics) {
  if (iterations < 1) config_error("iterations must be at least 1");
  if (family.dim != model.dim()) config_error("family and model dimensions disagree");
  if (!(omega0.family() == family)) config_error("initial iterate does not live in the run family");
  if (schedule.step.kind == StepSchedule::Kind::Decreasing && schedule.step.m < 1.0) {
    config_error("decreasing step needs m >= 1 so that eta stays in (0, 1]");
  }
  if (c.kind == ConstraintKind::NonNegativeMean && family.kind != FamilyKind::GaussianDiag) {
    config_error("non-negative-mean constraint applies to the mean-carrying diagonal family only");
  }
  switch (estimator) {
    case EstimatorKind::BonnetPrice:
      if (family.kind == FamilyKind::GaussianDiagCentered) {
        config_error("hessian-based estimator cannot target the centered family");
      }
      if (!model.capabilities().gradient || !model.capabilities().hessian) {
        config_error("hessian-based estimator needs gradient and hessian evaluations");
      }
      break;
    case EstimatorKind::Subsample:
      if (!model.capabilities().finite_sum) {
        config_error("subsampling estimator needs a finite-sum model");
      }
      if (model.kind() != ModelKind::BayesLinReg) {
        config_error("subsampling estimator covers the linear-regression model only");
      }
      if (family.kind != FamilyKind::GaussianFull) {
        config_error("subsampling estimator needs the full family");
      }
      if (model.data_size() < 1) {
        config_error("subsampling estimator needs at least one datum");
      }
      break;
    case EstimatorKind::Exact:
      if (!model.capabilities().conjugate) {
        config_error("exact gradient needs a conjugate model");
      }
      break;
  }
  if (metrics.stride < 1) config_error("metric stride must be at least 1");
  if (metrics.elbo) {
    if (metrics.elbo_samples < 1) config_error("elbo metric needs at least one sample");
    if (!model.capabilities().log_density) config_error("elbo metric needs log_density");
  }

  std::optional<ExpParam> omega_star;
  if (metrics.bregman) {
    if (metrics.omega_star.has_value()) {
      if (!(metrics.omega_star->family() == family)) {
        config_error("omega_star does not live in the run family");
      }
      omega_star = metrics.omega_star;
    } else {
      if (!model.capabilities().conjugate) {
        config_error("bregman metric needs a conjugate model or an explicit omega_star");
      }
      try {
        omega_star = optimum(model, family, c);
      } catch (const Error& e) {
        config_error(std::string("bregman metric: ") + e.what());
      }
      if (!omega_star.has_value()) config_error("bregman metric: optimum unavailable");
    }
  }

  // Constant in omega, so one evaluation serves every step.  Failures here are
  // structural (family cannot host the target), hence ConfigError.
  std::optional<GradientEstimate> exact;
  if (estimator == EstimatorKind::Exact) {
    try {
      exact = exact_gradient(model, omega0);
    } catch (const Error& e) {
      config_error(std::string("exact gradient: ") + e.what());
    }
  }

  Rng rng_est = make_rng(seed);
  // Metrics draw from a decorrelated stream so that turning them on or off, or
  // thinning them, never changes the iterate sequence.
  Rng rng_metric = make_rng(seed ^ 0x9e3779b97f4a7c15ull);

  ExpParam omega = project(omega0, c);

  RunTrace trace;
  trace.records.reserve(static_cast<std::size_t>(iterations) + 1);

  auto emit = [&](long t, double eta, int batch, long budget, bool with_metrics) {
    TraceRecord rec;
    rec.t = t;
    rec.eta = eta;
    rec.batch = batch;
    rec.budget = budget;
    if (with_metrics) {
      if (omega_star.has_value()) {
        const double v = bregman_to_optimum(omega, *omega_star);
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::NonFiniteValue, "bregman metric is non-finite");
        }
        rec.bregman_to_opt = v;
      }
      if (metrics.elbo) {
        rec.elbo_mc = elbo_mc(model, omega, metrics.elbo_samples, rng_metric);
      }
    }
    trace.records.push_back(std::move(rec));
  };

  try {
    emit(0, 0.0, 0, 0, true);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::NonFiniteValue) {
      trace.status = {RunStatusKind::NonFinite, 0};
      return trace;
    }
    throw;
  }

  long budget = 0;
  for (long t = 0; t < iterations; ++t) {
    const auto [eta, n] = schedule_values(schedule, t);
    try {
      const GradientEstimate g =
          exact.has_value() ? *exact : estimate_gradient(estimator, model, omega, n, rng_est);
      omega = ngvi_step(omega, eta, g, c);
      if (!all_finite(omega.coords())) {
        throw Error(ErrorCode::NonFiniteValue, "iterate has non-finite coordinates");
      }
      budget += n;
      const bool with_metrics = ((t + 1) % metrics.stride == 0) || (t + 1 == iterations);
      emit(t + 1, eta, n, budget, with_metrics);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::WellPosednessViolated) {
        trace.status = {RunStatusKind::WellPosednessViolated, t};
        return trace;
      }
      if (e.code() == ErrorCode::NonFiniteGradient || e.code() == ErrorCode::NonFiniteValue) {
        trace.status = {RunStatusKind::NonFinite, t};
        return trace;
      }
      throw;
    }
  }
  trace.status = {RunStatusKind::Completed, -1};
  return trace;
}

}  // namespace ngvi
