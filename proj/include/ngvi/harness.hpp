#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ngvi/optimizer.hpp"

namespace ngvi {

using Json = nlohmann::json;

// An experiment document as parsed JSON.  The document may be structurally
// arbitrary until validate() returns an empty list; compile() then turns it
// into runnable pieces.
struct ExperimentConfig {
  Json doc;
};

ExperimentConfig parse_config(const std::string& text);  // ParseError on bad JSON
ExperimentConfig load_config(const std::string& path);   // IoError + ParseError

// Collects every violation of the config contract, each prefixed with the
// field path it concerns ("schedule.step.eta must lie in (0,1]").  Returns
// an empty list exactly when the document is runnable.  Never mutates; the
// only I/O is an existence probe on a referenced data file.
std::vector<std::string> validate(const ExperimentConfig& config);

// A validated config resolved into concrete objects.  `init` fixes the same
// starting moments for every run; when absent each run draws its own mean
// uniformly from [-5, 5]^d with covariance 10 I (0.5 I for the logistic
// model), seeded by the run seed.
struct CompiledExperiment {
  TargetModel model;
  Family family{FamilyKind::GaussianFull, 1};
  ConstraintSet constraint{};
  Schedule schedule{};
  EstimatorKind estimator = EstimatorKind::BonnetPrice;
  long iterations = 1;
  int runs = 1;
  std::uint64_t base_seed = 0;
  MetricsSpec metrics{};
  std::optional<MomentParam> init{};
  std::string output{};  // default output directory, possibly empty
};

// ConfigError listing the violations when validate() is non-empty; data
// loading may also raise IoError / ParseError / SchemaError.
CompiledExperiment compile(const ExperimentConfig& config);

// The starting iterate for one run, honoring the init override.
ExpParam initial_iterate(const CompiledExperiment& ex, std::uint64_t run_seed);

struct ExperimentResult {
  std::vector<RunTrace> traces;  // index r ran with seed base_seed + r
  int failures = 0;              // traces whose status is not Completed
  double wall_seconds = 0.0;
};

// Executes all runs with seeds base_seed + 0 .. base_seed + R-1 across a
// worker pool.  Every numeric output is determined by the config alone; the
// pool size only affects wall time.
ExperimentResult run_experiment(const CompiledExperiment& ex, int jobs);

// jobs <= 0 means use the hardware concurrency; the NGVI_JOBS environment
// variable, when set to a positive integer, overrides both.
int resolve_jobs(int requested);

// results.csv: header run,iter,eta,batch,budget,metric,value; one row per
// recorded metric value; doubles printed with %.17g so reruns are
// byte-identical.
void write_results_csv(const std::string& path, const ExperimentResult& result);

// Echoes the config plus seeds, per-run statuses, failure count, wall time.
void write_manifest(const std::string& path, const ExperimentConfig& config,
                    const CompiledExperiment& ex, const ExperimentResult& result);

// validate + compile + run + write results.csv and manifest.json into out_dir
// (created if missing).
ExperimentResult run_experiment_to_dir(const ExperimentConfig& config, const std::string& out_dir,
                                       int jobs);

// Rebuilds partial traces from a results CSV: one record per (run, iter) seen,
// carrying whichever metrics were written.  Statuses are not stored in the
// CSV, so every trace comes back Completed; load_traces overlays the statuses
// from a manifest when one sits next to the CSV.
std::vector<RunTrace> read_results_csv(const std::string& path);
std::vector<RunTrace> load_traces(const std::string& run_dir);

enum class Abscissa { Iteration, Budget };
enum class Statistic { Mean, MedianIqr };

struct AggregateRow {
  double x = 0.0;
  double center = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct AggregateSeries {
  Abscissa abscissa = Abscissa::Iteration;
  Statistic statistic = Statistic::Mean;
  std::string metric;
  std::vector<AggregateRow> rows;
};

// Pools one metric across runs.  Mean sets lo = hi = center; MedianIqr uses
// the 0.25/0.5/0.75 quantiles with linear interpolation between order
// statistics.  Truncated runs contribute the iterations they recorded.
// EmptyInput when there are no traces, no completed trace, or no values for
// the metric; MisalignedTraces when schedules disagree on a shared iteration.
AggregateSeries aggregate(const std::vector<RunTrace>& traces, const std::string& metric,
                          Abscissa abscissa, Statistic statistic);

// Metric names ("bregman", "elbo") with at least one recorded value.
std::vector<std::string> metrics_present(const std::vector<RunTrace>& traces);

// CSV with header x,center,lo,hi, doubles printed with %.17g.
void write_aggregate_csv(const std::string& path, const AggregateSeries& series);

// Interpolated quantile of order p (0 <= p <= 1) over an unsorted sample.
double interpolated_quantile(std::vector<double> values, double p);

// One grid expansion: `name` is "key=value" pairs joined with commas, usable
// as a directory name.
struct SweepEntry {
  std::string name;
  ExperimentConfig config;
};

// grid: an object mapping dotted key paths into arrays of JSON values; the
// cartesian product in sorted-key order, last key fastest.  Each entry is the
// base config with the dotted paths replaced.  SchemaError on a malformed
// grid.
std::vector<SweepEntry> expand_grid(const ExperimentConfig& base, const Json& grid);

// Replaces the value at a dotted key path, creating intermediate objects as
// needed ("schedule.step.eta").  SchemaError on an empty path segment.
void set_config_key(ExperimentConfig& config, const std::string& dotted_key, const Json& value);

}  // namespace ngvi
