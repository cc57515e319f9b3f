// Experiment CLI.  Talks to the library exclusively through the C interface
// in ngvi.h, so a working binary also certifies the shared-library surface.
//
// Exit codes: 0 success, 1 config/validation failure, 2 runtime failure.

#include <cstdio>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "ngvi.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct ConfigDeleter {
  void operator()(ngvi_config* c) const { ngvi_config_free(c); }
};
using ConfigPtr = std::unique_ptr<ngvi_config, ConfigDeleter>;

int report_failure(ngvi_status rc) {
  std::fprintf(stderr, "error: %s\n", ngvi_last_error());
  switch (rc) {
    case NGVI_ERR_CONFIG:
    case NGVI_ERR_PARSE:
    case NGVI_ERR_SCHEMA:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

// Config-file problems (missing, unreadable, bad JSON) count as validation
// failures for every subcommand.
int config_load_failure() {
  std::fprintf(stderr, "error: %s\n", ngvi_last_error());
  return kExitConfig;
}

bool apply_override(ngvi_config* cfg, const char* key, long long value) {
  const ngvi_status rc = ngvi_config_set(cfg, key, std::to_string(value).c_str());
  if (rc != NGVI_OK) std::fprintf(stderr, "error: %s\n", ngvi_last_error());
  return rc == NGVI_OK;
}

const char* dir_or_null(const std::string& dir) { return dir.empty() ? nullptr : dir.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projected natural-gradient VI experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string grid_path;
  std::string stat = "mean";
  std::string abscissa = "iteration";
  std::string metric;
  std::string out_csv;
  long long seed = 0;
  long long runs = 0;
  long long iters = 0;
  int jobs = 0;

  CLI::App* cmd_validate = app.add_subcommand("validate", "Check a config document");
  cmd_validate->add_option("config", config_path, "experiment config (JSON)")->required();

  CLI::App* cmd_run = app.add_subcommand("run", "Execute all runs of an experiment");
  cmd_run->add_option("config", config_path, "experiment config (JSON)")->required();
  cmd_run->add_option("--out", out_dir, "output directory (overrides config \"output\")");
  CLI::Option* opt_seed =
      cmd_run->add_option("--seed", seed, "override base_seed")->check(CLI::NonNegativeNumber);
  CLI::Option* opt_runs =
      cmd_run->add_option("--runs", runs, "override the run count")->check(CLI::PositiveNumber);
  CLI::Option* opt_iters = cmd_run->add_option("--iters", iters, "override the iteration count")
                               ->check(CLI::PositiveNumber);
  cmd_run->add_option("--jobs", jobs, "worker pool size (0 = hardware)");

  CLI::App* cmd_aggregate = app.add_subcommand("aggregate", "Pool a run directory into a CSV");
  cmd_aggregate->add_option("dir", out_dir, "directory holding results.csv")->required();
  cmd_aggregate->add_option("--stat", stat, "mean | median-iqr");
  cmd_aggregate->add_option("--x", abscissa, "iteration | budget");
  cmd_aggregate->add_option("--metric", metric, "bregman | elbo (default: the one recorded)");
  cmd_aggregate->add_option("--out", out_csv, "aggregate CSV path")->required();

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "Expand a grid and run every child config");
  cmd_sweep->add_option("config", config_path, "base experiment config (JSON)")->required();
  cmd_sweep->add_option("--grid", grid_path, "grid file (JSON object: key -> values)")
      ->required();
  cmd_sweep->add_option("--out", out_dir, "output directory (overrides config \"output\")");
  cmd_sweep->add_option("--jobs", jobs, "worker pool size (0 = hardware)");

  CLI11_PARSE(app, argc, argv);

  if (cmd_validate->parsed()) {
    const ConfigPtr cfg(ngvi_config_load(config_path.c_str()));
    if (!cfg) return config_load_failure();
    char* report = nullptr;
    int count = 0;
    const ngvi_status rc = ngvi_config_validate(cfg.get(), &report, &count);
    if (rc == NGVI_OK) {
      std::printf("ok\n");
      return kExitOk;
    }
    if (report) {
      std::fprintf(stderr, "%s\n", report);
      ngvi_string_free(report);
    }
    if (rc == NGVI_ERR_CONFIG) {
      std::fprintf(stderr, "%d violation%s\n", count, count == 1 ? "" : "s");
      return kExitConfig;
    }
    return report_failure(rc);
  }

  if (cmd_run->parsed()) {
    const ConfigPtr cfg(ngvi_config_load(config_path.c_str()));
    if (!cfg) return config_load_failure();
    if (*opt_seed && !apply_override(cfg.get(), "base_seed", seed)) return kExitConfig;
    if (*opt_runs && !apply_override(cfg.get(), "runs", runs)) return kExitConfig;
    if (*opt_iters && !apply_override(cfg.get(), "iterations", iters)) return kExitConfig;
    int failures = 0;
    const ngvi_status rc = ngvi_run(cfg.get(), dir_or_null(out_dir), jobs, &failures);
    if (rc != NGVI_OK) return report_failure(rc);
    std::printf("%d failed run%s\n", failures, failures == 1 ? "" : "s");
    return kExitOk;
  }

  if (cmd_aggregate->parsed()) {
    const ngvi_status rc =
        ngvi_aggregate(out_dir.c_str(), metric.empty() ? nullptr : metric.c_str(), stat.c_str(),
                       abscissa.c_str(), out_csv.c_str());
    if (rc != NGVI_OK) return report_failure(rc);
    std::printf("wrote %s\n", out_csv.c_str());
    return kExitOk;
  }

  if (cmd_sweep->parsed()) {
    const ConfigPtr cfg(ngvi_config_load(config_path.c_str()));
    if (!cfg) return config_load_failure();
    int failures = 0;
    const ngvi_status rc =
        ngvi_sweep(cfg.get(), grid_path.c_str(), dir_or_null(out_dir), jobs, &failures);
    if (rc != NGVI_OK) return report_failure(rc);
    std::printf("%d failed run%s\n", failures, failures == 1 ? "" : "s");
    return kExitOk;
  }

  return kExitOk;
}
