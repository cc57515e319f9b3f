#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ngvi/estimators.hpp"
#include "ngvi/models.hpp"
#include "ngvi/projections.hpp"

namespace ngvi {

// Step-size rule.  Constant holds eta fixed; Decreasing follows
// eta_t = 1 / (m * (t/2 + 1)), which starts at 1/m and decays like 2/(m t).
struct StepSchedule {
  enum class Kind { Constant, Decreasing };

  Kind kind = Kind::Constant;
  double eta = 0.1;  // Constant only
  double m = 1.0;    // Decreasing only

  static StepSchedule constant(double eta);     // InvalidArgument unless eta in (0, 1]
  static StepSchedule decreasing(double m = 1.0);  // InvalidArgument unless m > 0
};

// Batch-size rule.  Constant holds N fixed; Poly grows as ceil((t+1)^gamma);
// ClippedPoly is the pointwise max of a Constant floor and a Poly ramp.
struct BatchSchedule {
  enum class Kind { Constant, Poly, ClippedPoly };

  Kind kind = Kind::Constant;
  int n = 1;           // Constant and ClippedPoly floor
  double gamma = 1.0;  // Poly and ClippedPoly exponent

  static BatchSchedule constant(int n);                   // InvalidArgument unless n >= 1
  static BatchSchedule poly(double gamma);                // InvalidArgument unless gamma > 0
  static BatchSchedule clipped_poly(int n, double gamma);
};

struct Schedule {
  StepSchedule step;
  BatchSchedule batch;
};

// (eta_t, N_t) for iteration t >= 0.  Powers that land within 1e-9 of an
// integer are snapped to it before the ceiling so that e.g. gamma = 1/3 at
// t = 7 yields 2 rather than 3 when pow() rounds up by one ulp.
std::pair<double, int> schedule_values(const Schedule& schedule, long t);

// One projected natural-gradient step: mixes theta_plus = (1-eta) theta + eta g
// in natural coordinates, requires theta_plus to stay in the interior domain
// (WellPosednessViolated otherwise, raised before any projection), then maps to
// moment coordinates and projects onto c.  eta must lie in (0, 1].
ExpParam ngvi_step(const ExpParam& omega, double eta, const GradientEstimate& g,
                   const ConstraintSet& c);

// Which per-iteration diagnostics run() should record, and how often.  Metrics
// draw from their own generator, so enabling them never perturbs the iterate
// sequence.  stride thins the expensive metric evaluations: metrics appear at
// t = 0, at every stride-th subsequent record, and at the final one.
struct MetricsSpec {
  bool bregman = false;  // distance to the optimum; needs a conjugate model or omega_star
  bool elbo = false;     // Monte Carlo ELBO estimate
  int elbo_samples = 100;
  int stride = 1;
  std::optional<ExpParam> omega_star;  // overrides models::optimum for the bregman metric
};

// One trace row.  Row 0 describes the (projected) initial iterate before any
// step and carries eta = 0, batch = 0, budget = 0; row t >= 1 describes the
// iterate after step t-1 together with the step size and batch size consumed
// by that step and the cumulative sample budget through it.
struct TraceRecord {
  long t = 0;
  double eta = 0.0;
  int batch = 0;
  long budget = 0;
  std::optional<double> bregman_to_opt;
  std::optional<double> elbo_mc;
};

enum class RunStatusKind { Completed, WellPosednessViolated, NonFinite };

struct RunStatus {
  RunStatusKind kind = RunStatusKind::Completed;
  long failed_at = -1;  // iteration index of the failing step; -1 when Completed
};

// Records are contiguous from t = 0; a failed run keeps every row produced
// before the failing step and reports the failure in status instead of
// throwing.
struct RunTrace {
  std::vector<TraceRecord> records;
  RunStatus status;
};

// Runs `iterations` projected stochastic natural-gradient steps from omega0
// (projected onto c first if infeasible), drawing estimator randomness from a
// generator seeded with `seed`.  Structural problems -- family/model/estimator
// mismatches, constraints the family cannot host, metrics that cannot be
// computed, step schedules that would leave (0, 1] -- raise ConfigError before
// iteration 0.  Guard trips during iteration (interior-domain violations,
// non-finite values) truncate the trace and set status instead of throwing.
RunTrace run(const TargetModel& model, const Family& family, const ConstraintSet& c,
             const Schedule& schedule, EstimatorKind estimator, long iterations,
             const ExpParam& omega0, std::uint64_t seed, const MetricsSpec& metrics);

// d_{A*}(omega_star, omega): the divergence is measured FROM the optimum TO
// the iterate, i.e. KL(q_star || q_omega), matching the convergence theory.
double bregman_to_optimum(const ExpParam& omega, const ExpParam& omega_star);

// Monte Carlo ELBO: mean of log pi-tilde over n_samples draws from q_omega,
// minus the negative entropy A*(omega).  Exact up to the (constant) log
// normalizer of the target, and exactly -KL in expectation for the synthetic
// Gaussian model.
double elbo_mc(const TargetModel& model, const ExpParam& omega, int n_samples, Rng& rng);

}  // namespace ngvi
