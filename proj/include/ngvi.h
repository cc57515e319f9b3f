#ifndef NGVI_H
#define NGVI_H

/* C interface to the projected natural-gradient VI experiment harness.
 * Every entry point returns an ngvi_status; on failure ngvi_last_error()
 * carries a message for the calling thread.  Strings returned through
 * out-parameters are heap-allocated and must be released with
 * ngvi_string_free. */

#if defined(_WIN32)
#  define NGVI_API __declspec(dllexport)
#else
#  define NGVI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ngvi_status {
  NGVI_OK = 0,
  NGVI_ERR_DOMAIN_VIOLATION = 1,
  NGVI_ERR_DIMENSION_MISMATCH = 2,
  NGVI_ERR_WRONG_FAMILY = 3,
  NGVI_ERR_INVALID_CONSTRAINT = 4,
  NGVI_ERR_NO_CONVERGENCE = 5,
  NGVI_ERR_MODEL_CAPABILITY_MISSING = 6,
  NGVI_ERR_NON_FINITE_GRADIENT = 7,
  NGVI_ERR_NON_FINITE_VALUE = 8,
  NGVI_ERR_WELL_POSEDNESS_VIOLATED = 9,
  NGVI_ERR_INVALID_ARGUMENT = 10,
  NGVI_ERR_CONFIG = 11,
  NGVI_ERR_PARSE = 12,
  NGVI_ERR_SCHEMA = 13,
  NGVI_ERR_IO = 14,
  NGVI_ERR_EMPTY_INPUT = 15,
  NGVI_ERR_MISALIGNED_TRACES = 16,
  NGVI_ERR_UNKNOWN = 99
} ngvi_status;

/* An owned experiment configuration document. */
typedef struct ngvi_config ngvi_config;

/* Parse a JSON document from memory / from a file.  NULL on failure. */
NGVI_API ngvi_config* ngvi_config_parse(const char* json_text);
NGVI_API ngvi_config* ngvi_config_load(const char* path);
NGVI_API void ngvi_config_free(ngvi_config* config);

/* Replace the value at a dotted key path ("schedule.step.eta") with a JSON
 * value given in text form ("0.25", "\"exact\"", "{\"kind\":\"poly\"}").
 * Intermediate objects are created as needed. */
NGVI_API ngvi_status ngvi_config_set(ngvi_config* config, const char* dotted_key,
                                     const char* json_value);

/* NGVI_OK when the document is runnable.  Otherwise NGVI_ERR_CONFIG, and when
 * report/count are non-NULL they receive the newline-joined violation list
 * and its length. */
NGVI_API ngvi_status ngvi_config_validate(const ngvi_config* config, char** report, int* count);

/* Validate, run all configured seeds, and write results.csv + manifest.json
 * into out_dir (created if missing); NULL out_dir falls back to the config's
 * "output" key and fails with NGVI_ERR_CONFIG when neither is set.  jobs <= 0
 * picks the hardware concurrency; the NGVI_JOBS environment variable
 * overrides either.  When failures is non-NULL it receives the number of
 * runs that ended in a guard trip rather than completing. */
NGVI_API ngvi_status ngvi_run(const ngvi_config* config, const char* out_dir, int jobs,
                              int* failures);

/* Pool one metric across the runs recorded in run_dir and write an aggregate
 * CSV (header x,center,lo,hi).  metric: "bregman", "elbo", or NULL to pick
 * the single recorded metric (ambiguous -> NGVI_ERR_INVALID_ARGUMENT).
 * stat: "mean" or "median-iqr".  abscissa: "iteration" or "budget". */
NGVI_API ngvi_status ngvi_aggregate(const char* run_dir, const char* metric, const char* stat,
                                    const char* abscissa, const char* out_csv);

/* Expand a JSON grid file (object: dotted key -> array of values) against the
 * base config and run every combination into out_dir/<name>/.  NULL out_dir
 * falls back to the config's "output" key.  Writes out_dir/sweep.json listing
 * the entries.  total_failures, when non-NULL, receives the failed-run count
 * summed over children. */
NGVI_API ngvi_status ngvi_sweep(const ngvi_config* base, const char* grid_path,
                                const char* out_dir, int jobs, int* total_failures);

/* Message from the most recent failing call on this thread ("" when none). */
NGVI_API const char* ngvi_last_error(void);

NGVI_API void ngvi_string_free(char* s);

NGVI_API const char* ngvi_version(void);

#ifdef __cplusplus
}
#endif

#endif /* NGVI_H */
