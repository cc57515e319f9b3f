#include "ngvi.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ngvi/errors.hpp"
#include "ngvi/harness.hpp"

struct ngvi_config {
  ngvi::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

ngvi_status map_code(ngvi::ErrorCode code) {
  switch (code) {
    case ngvi::ErrorCode::DomainViolation: return NGVI_ERR_DOMAIN_VIOLATION;
    case ngvi::ErrorCode::DimensionMismatch: return NGVI_ERR_DIMENSION_MISMATCH;
    case ngvi::ErrorCode::WrongFamily: return NGVI_ERR_WRONG_FAMILY;
    case ngvi::ErrorCode::InvalidConstraint: return NGVI_ERR_INVALID_CONSTRAINT;
    case ngvi::ErrorCode::NoConvergence: return NGVI_ERR_NO_CONVERGENCE;
    case ngvi::ErrorCode::ModelCapabilityMissing: return NGVI_ERR_MODEL_CAPABILITY_MISSING;
    case ngvi::ErrorCode::NonFiniteGradient: return NGVI_ERR_NON_FINITE_GRADIENT;
    case ngvi::ErrorCode::NonFiniteValue: return NGVI_ERR_NON_FINITE_VALUE;
    case ngvi::ErrorCode::WellPosednessViolated: return NGVI_ERR_WELL_POSEDNESS_VIOLATED;
    case ngvi::ErrorCode::InvalidArgument: return NGVI_ERR_INVALID_ARGUMENT;
    case ngvi::ErrorCode::ConfigError: return NGVI_ERR_CONFIG;
    case ngvi::ErrorCode::ParseError: return NGVI_ERR_PARSE;
    case ngvi::ErrorCode::SchemaError: return NGVI_ERR_SCHEMA;
    case ngvi::ErrorCode::IoError: return NGVI_ERR_IO;
    case ngvi::ErrorCode::EmptyInput: return NGVI_ERR_EMPTY_INPUT;
    case ngvi::ErrorCode::MisalignedTraces: return NGVI_ERR_MISALIGNED_TRACES;
  }
  return NGVI_ERR_UNKNOWN;
}

ngvi_status fail(const std::exception& e, ngvi_status code) {
  g_last_error = e.what();
  return code;
}

ngvi_status fail_null(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return NGVI_ERR_INVALID_ARGUMENT;
}

// Runs fn, translating ngvi::Error codes and catching everything else.
template <typename Fn>
ngvi_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NGVI_OK;
  } catch (const ngvi::Error& e) {
    return fail(e, map_code(e.code()));
  } catch (const std::exception& e) {
    return fail(e, NGVI_ERR_UNKNOWN);
  } catch (...) {
    g_last_error = "unknown failure";
    return NGVI_ERR_UNKNOWN;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string resolve_out_dir(const ngvi::ExperimentConfig& cfg, const char* out_dir) {
  std::string dir = out_dir ? out_dir : "";
  if (dir.empty() && cfg.doc.is_object() && cfg.doc.contains("output") &&
      cfg.doc["output"].is_string()) {
    dir = cfg.doc["output"].get<std::string>();
  }
  if (dir.empty()) {
    throw ngvi::Error(ngvi::ErrorCode::ConfigError,
                      "no output directory: pass one or set the config's \"output\" key");
  }
  return dir;
}

}  // namespace

extern "C" {

ngvi_config* ngvi_config_parse(const char* json_text) {
  if (!json_text) {
    fail_null("json_text");
    return nullptr;
  }
  ngvi_config* out = nullptr;
  guarded([&] { out = new ngvi_config{ngvi::parse_config(json_text)}; });
  return out;
}

ngvi_config* ngvi_config_load(const char* path) {
  if (!path) {
    fail_null("path");
    return nullptr;
  }
  ngvi_config* out = nullptr;
  guarded([&] { out = new ngvi_config{ngvi::load_config(path)}; });
  return out;
}

void ngvi_config_free(ngvi_config* config) { delete config; }

ngvi_status ngvi_config_set(ngvi_config* config, const char* dotted_key,
                            const char* json_value) {
  if (!config) return fail_null("config");
  if (!dotted_key) return fail_null("dotted_key");
  if (!json_value) return fail_null("json_value");
  return guarded([&] {
    ngvi::Json value = ngvi::Json::parse(json_value, nullptr, false);
    if (value.is_discarded()) {
      throw ngvi::Error(ngvi::ErrorCode::ParseError,
                        std::string("value for '") + dotted_key + "' is not valid JSON");
    }
    ngvi::set_config_key(config->cfg, dotted_key, value);
  });
}

ngvi_status ngvi_config_validate(const ngvi_config* config, char** report, int* count) {
  if (report) *report = nullptr;
  if (count) *count = 0;
  if (!config) return fail_null("config");
  std::vector<std::string> errs;
  const ngvi_status rc = guarded([&] { errs = ngvi::validate(config->cfg); });
  if (rc != NGVI_OK) return rc;
  if (errs.empty()) return NGVI_OK;
  std::string joined;
  for (const auto& e : errs) {
    if (!joined.empty()) joined += '\n';
    joined += e;
  }
  g_last_error = joined;
  if (report) *report = dup_string(joined);
  if (count) *count = static_cast<int>(errs.size());
  return NGVI_ERR_CONFIG;
}

ngvi_status ngvi_run(const ngvi_config* config, const char* out_dir, int jobs, int* failures) {
  if (failures) *failures = 0;
  if (!config) return fail_null("config");
  return guarded([&] {
    const std::string dir = resolve_out_dir(config->cfg, out_dir);
    const ngvi::ExperimentResult result = ngvi::run_experiment_to_dir(config->cfg, dir, jobs);
    if (failures) *failures = result.failures;
  });
}

ngvi_status ngvi_aggregate(const char* run_dir, const char* metric, const char* stat,
                           const char* abscissa, const char* out_csv) {
  if (!run_dir) return fail_null("run_dir");
  if (!stat) return fail_null("stat");
  if (!abscissa) return fail_null("abscissa");
  if (!out_csv) return fail_null("out_csv");
  return guarded([&] {
    ngvi::Statistic statistic;
    const std::string stat_s = stat;
    if (stat_s == "mean") statistic = ngvi::Statistic::Mean;
    else if (stat_s == "median-iqr") statistic = ngvi::Statistic::MedianIqr;
    else {
      throw ngvi::Error(ngvi::ErrorCode::InvalidArgument,
                        "stat must be mean or median-iqr, got '" + stat_s + "'");
    }
    ngvi::Abscissa x;
    const std::string x_s = abscissa;
    if (x_s == "iteration") x = ngvi::Abscissa::Iteration;
    else if (x_s == "budget") x = ngvi::Abscissa::Budget;
    else {
      throw ngvi::Error(ngvi::ErrorCode::InvalidArgument,
                        "abscissa must be iteration or budget, got '" + x_s + "'");
    }

    const std::vector<ngvi::RunTrace> traces = ngvi::load_traces(run_dir);
    std::string metric_s;
    if (metric) {
      metric_s = metric;
    } else {
      const std::vector<std::string> present = ngvi::metrics_present(traces);
      if (present.size() != 1) {
        throw ngvi::Error(ngvi::ErrorCode::InvalidArgument,
                          present.empty() ? "no metric recorded in " + std::string(run_dir)
                                          : "several metrics recorded; pass one explicitly");
      }
      metric_s = present[0];
    }
    ngvi::write_aggregate_csv(out_csv, ngvi::aggregate(traces, metric_s, x, statistic));
  });
}

ngvi_status ngvi_sweep(const ngvi_config* base, const char* grid_path, const char* out_dir,
                       int jobs, int* total_failures) {
  if (total_failures) *total_failures = 0;
  if (!base) return fail_null("base");
  if (!grid_path) return fail_null("grid_path");
  return guarded([&] {
    const std::string root = resolve_out_dir(base->cfg, out_dir);
    std::ifstream in(grid_path);
    if (!in) throw ngvi::Error(ngvi::ErrorCode::IoError,
                               std::string("cannot open grid file: ") + grid_path);
    ngvi::Json grid = ngvi::Json::parse(in, nullptr, false);
    if (grid.is_discarded()) {
      throw ngvi::Error(ngvi::ErrorCode::ParseError,
                        std::string("grid file is not valid JSON: ") + grid_path);
    }
    const std::vector<ngvi::SweepEntry> entries = ngvi::expand_grid(base->cfg, grid);

    // Every child must validate before anything runs, so a sweep is all or
    // nothing at the config level.
    for (const auto& entry : entries) {
      const std::vector<std::string> errs = ngvi::validate(entry.config);
      if (!errs.empty()) {
        std::string joined = "child '" + entry.name + "' is invalid";
        for (const auto& e : errs) joined += "; " + e;
        throw ngvi::Error(ngvi::ErrorCode::ConfigError, joined);
      }
    }

    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw ngvi::Error(ngvi::ErrorCode::IoError, "cannot create directory: " + root);

    int failures = 0;
    ngvi::Json index = ngvi::Json::array();
    for (const auto& entry : entries) {
      const ngvi::ExperimentResult result =
          ngvi::run_experiment_to_dir(entry.config, root + "/" + entry.name, jobs);
      failures += result.failures;
      index.push_back(ngvi::Json{{"name", entry.name},
                                 {"dir", entry.name},
                                 {"failures", result.failures},
                                 {"runs", static_cast<int>(result.traces.size())}});
    }
    std::ofstream out(root + "/sweep.json", std::ios::binary);
    if (!out) throw ngvi::Error(ngvi::ErrorCode::IoError, "cannot open for writing: " + root);
    out << ngvi::Json{{"entries", index}}.dump(2) << '\n';
    if (total_failures) *total_failures = failures;
  });
}

const char* ngvi_last_error(void) { return g_last_error.c_str(); }

void ngvi_string_free(char* s) { std::free(s); }

const char* ngvi_version(void) { return "0.1.0"; }

}  // extern "C"
