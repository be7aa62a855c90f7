/* Speed-density fundamental-diagram calibration: LS, WLS, sparse GP (MLE) and
 * sparse GP (NUTS) behind a plain C interface.
 *
 * Conventions:
 *   - Every call returns an fdcal_status; on failure fdcal_last_error() holds a
 *     message for the calling thread until its next failing call.
 *   - Strings returned through char** are heap-allocated; release them with
 *     fdcal_string_free. Output pointers are left untouched on failure.
 *   - Handles are immutable after creation and may be shared across threads.
 */
#ifndef FDCAL_FDCAL_H
#define FDCAL_FDCAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(FDCAL_BUILDING_LIBRARY)
#define FDCAL_API __attribute__((visibility("default")))
#else
#define FDCAL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fdcal_status {
  FDCAL_OK = 0,
  FDCAL_ERR_INVALID_ARGUMENT = 1,
  FDCAL_ERR_IO = 2,
  FDCAL_ERR_PARSE = 3,
  FDCAL_ERR_DOMAIN = 4,
  FDCAL_ERR_NUMERICAL = 5,
  /* The call completed and wrote its outputs, but some fit did not converge. */
  FDCAL_ERR_NOT_CONVERGED = 6,
  FDCAL_ERR_INTERNAL = 7
} fdcal_status;

FDCAL_API const char* fdcal_version(void);
FDCAL_API const char* fdcal_last_error(void);
FDCAL_API const char* fdcal_status_name(fdcal_status status);
FDCAL_API void fdcal_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct fdcal_dataset fdcal_dataset;

/* Column names may be NULL for the defaults "density" and "speed".
 * load_stats_json (nullable) receives {"raw_rows", "rejected_rows", "accepted_rows"}. */
FDCAL_API fdcal_status fdcal_dataset_load_csv(const char* path, const char* density_column,
                                              const char* speed_column, fdcal_dataset** out,
                                              char** load_stats_json);
FDCAL_API fdcal_status fdcal_dataset_from_arrays(const double* density, const double* speed,
                                                 size_t n, fdcal_dataset** out);
/* spec_json: {"model", "params": {...}, "n", "seed", "noise_sd", "residual_kernel":
 * {"variance", "lengthscale"} | null, "k_s", "sampler": {...}}.
 * truth_json (nullable) receives the ground-truth record. */
FDCAL_API fdcal_status fdcal_dataset_synthesize(const char* spec_json, fdcal_dataset** out,
                                                char** truth_json);
FDCAL_API fdcal_status fdcal_dataset_write_csv(const fdcal_dataset* ds, const char* path);
FDCAL_API size_t fdcal_dataset_size(const fdcal_dataset* ds);
/* Observation i in ascending-density order. */
FDCAL_API fdcal_status fdcal_dataset_get(const fdcal_dataset* ds, size_t i, double* density,
                                         double* speed);
/* counts must hold n_edges - 1 entries. */
FDCAL_API fdcal_status fdcal_dataset_histogram(const fdcal_dataset* ds, const double* edges,
                                               size_t n_edges, size_t* counts);
FDCAL_API fdcal_status fdcal_dataset_summary(const fdcal_dataset* ds, char** json);
FDCAL_API void fdcal_dataset_free(fdcal_dataset* ds);

/* ---- models ------------------------------------------------------------ */

/* Speed at density k; params in the model's documented order. */
FDCAL_API fdcal_status fdcal_model_speed(const char* model, const double* params,
                                         size_t n_params, double k, double* speed);
/* Number of parameters, and the name of parameter i (static storage). */
FDCAL_API fdcal_status fdcal_model_param_count(const char* model, size_t* count);
FDCAL_API fdcal_status fdcal_model_param_name(const char* model, size_t i, const char** name);

/* ---- fitting ----------------------------------------------------------- */

/* One (model, method) fit; method is "ls", "wls", "gp-mle" or "gp-mcmc".
 * options_json (nullable) takes run-configuration keys (see fdcal_calibrate).
 * result_json receives the fit record. */
FDCAL_API fdcal_status fdcal_fit(const fdcal_dataset* ds, const char* model, const char* method,
                                 const char* options_json, char** result_json);

/* Runs every requested (model, method) pair. config_json (nullable) keys:
 *   models, methods, inducing, burn_in, draws, target_accept, max_depth,
 *   adapt_metric, dense_metric, chains, noise, max_divergence_fraction, bin_edges,
 *   eti_levels, grid_points, k_s, threads, seed.
 * With out_dir non-NULL the report, curve CSVs, RMSE CSV and chain CSVs are
 * written there. Returns FDCAL_ERR_NOT_CONVERGED (report still produced) when
 * any fit failed. */
FDCAL_API fdcal_status fdcal_calibrate(const fdcal_dataset* ds, const char* config_json,
                                       const char* out_dir, char** report_json);

/* ---- sampling ---------------------------------------------------------- */

typedef struct fdcal_chain fdcal_chain;

/* NUTS over the whitened sparse GP for one model. config_json as above. */
FDCAL_API fdcal_status fdcal_sample(const fdcal_dataset* ds, const char* model,
                                    const char* config_json, fdcal_chain** out);
FDCAL_API size_t fdcal_chain_count(const fdcal_chain* c);
FDCAL_API size_t fdcal_chain_draws(const fdcal_chain* c);
FDCAL_API size_t fdcal_chain_columns(const fdcal_chain* c);
FDCAL_API fdcal_status fdcal_chain_column_name(const fdcal_chain* c, size_t col, const char** name);
/* Constrained-space value of draw i, column col, in chain `chain`. */
FDCAL_API fdcal_status fdcal_chain_value(const fdcal_chain* c, size_t chain, size_t i, size_t col,
                                         double* value);
FDCAL_API fdcal_status fdcal_chain_diagnostics(const fdcal_chain* c, char** json);
/* Nonzero when divergences stayed within the configured fraction. */
FDCAL_API int fdcal_chain_ok(const fdcal_chain* c);
/* Writes chain CSVs and diagnostics.json into dir. */
FDCAL_API fdcal_status fdcal_chain_write(const fdcal_chain* c, const char* dir);
FDCAL_API void fdcal_chain_free(fdcal_chain* c);

/* ---- analysis ---------------------------------------------------------- */

/* Equal-tailed interval of n samples at level in (0, 1). */
FDCAL_API fdcal_status fdcal_eti(const double* samples, size_t n, double level, double* lower,
                                 double* upper);

/* Reads a report file and renders it as "text", "csv" or "json". */
FDCAL_API fdcal_status fdcal_report_render(const char* report_path, const char* format, char** out);

#ifdef __cplusplus
}
#endif

#endif
