#ifndef SIMPROV_SIMPROV_H
#define SIMPROV_SIMPROV_H

/* C interface to the simprov library. Every call returns a status code; on
 * failure simprov_last_error() describes the problem (thread-local, valid
 * until the next call on the same thread). Objects are opaque handles owned by
 * the caller and released with the matching _free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SIMPROV_API __declspec(dllexport)
#else
#define SIMPROV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum simprov_status {
  SIMPROV_OK = 0,
  SIMPROV_ERR_ARGUMENT = 1, /* null handle, bad buffer size, unknown name */
  SIMPROV_ERR_INPUT = 2,
  SIMPROV_ERR_SHAPE = 3,
  SIMPROV_ERR_NUMERIC = 4,
  SIMPROV_ERR_PARSE = 5,
  SIMPROV_ERR_SCHEMA = 6,
  SIMPROV_ERR_CONFIG = 7,
  SIMPROV_ERR_IO = 8,
  SIMPROV_ERR_INTERNAL = 9
} simprov_status;

typedef struct simprov_config simprov_config;
typedef struct simprov_model simprov_model;
typedef struct simprov_dataset simprov_dataset;

SIMPROV_API const char* simprov_version(void);
SIMPROV_API const char* simprov_last_error(void);
SIMPROV_API const char* simprov_status_name(simprov_status s);

/* Configuration */
SIMPROV_API simprov_status simprov_config_default(simprov_config** out);
SIMPROV_API simprov_status simprov_config_load(const char* path, simprov_config** out);
SIMPROV_API simprov_status simprov_config_parse(const char* json_text, simprov_config** out);
SIMPROV_API simprov_status simprov_config_set_seed(simprov_config* cfg, uint64_t master_seed);
SIMPROV_API simprov_status simprov_config_set_output_dir(simprov_config* cfg, const char* dir);
SIMPROV_API simprov_status simprov_config_set_trials(simprov_config* cfg, size_t n_trials);
/* Writes 16 hex digits plus a terminator; buf_len must be at least 17. */
SIMPROV_API simprov_status simprov_config_hash(const simprov_config* cfg, char* buf, size_t buf_len);
/* Canonical JSON. Pass buf = NULL to query the required size (terminator included) via *needed. */
SIMPROV_API simprov_status simprov_config_to_json(const simprov_config* cfg, char* buf, size_t buf_len,
                                                  size_t* needed);
SIMPROV_API void simprov_config_free(simprov_config* cfg);

/* Datasets. Generation writes train_<e>.csv, target.csv and target_eval.csv into dir
 * for the config's master seed. */
SIMPROV_API simprov_status simprov_generate_data(const simprov_config* cfg, const char* dir);
SIMPROV_API simprov_status simprov_dataset_load(const char* csv_path, simprov_dataset** out);
SIMPROV_API size_t simprov_dataset_rows(const simprov_dataset* ds);
SIMPROV_API size_t simprov_dataset_cols(const simprov_dataset* ds);
SIMPROV_API void simprov_dataset_free(simprov_dataset* ds);

/* Training and adaptation read train_<e>.csv files from data_dir; adaptation also reads
 * the feature columns of target.csv. target_eval.csv is never opened by either. */
SIMPROV_API simprov_status simprov_train_base(const simprov_config* cfg, const char* data_dir, simprov_model** out);
/* history_path may be NULL; otherwise one JSON line per iteration is written there. */
SIMPROV_API simprov_status simprov_adapt(const simprov_config* cfg, const simprov_model* base, const char* data_dir,
                                         const char* history_path, simprov_model** out);

/* Models */
SIMPROV_API size_t simprov_model_input_dim(const simprov_model* m);
SIMPROV_API size_t simprov_model_n_classes(const simprov_model* m);
/* x is rows x cols row-major; logits receives rows x n_classes. */
SIMPROV_API simprov_status simprov_model_forward(const simprov_model* m, const double* x, size_t rows, size_t cols,
                                                 double* logits, size_t logits_len);
SIMPROV_API simprov_status simprov_model_accuracy(const simprov_model* m, const simprov_dataset* ds, double* acc);
SIMPROV_API simprov_status simprov_model_save(const simprov_model* m, const simprov_config* cfg, const char* path);
SIMPROV_API simprov_status simprov_model_load(const char* path, simprov_model** out);
SIMPROV_API void simprov_model_free(simprov_model* m);

/* Harness. failed_trials may be NULL. */
SIMPROV_API simprov_status simprov_run_experiment(const simprov_config* cfg, size_t* failed_trials);
/* kind is "deepness" or "drand_scatter". */
SIMPROV_API simprov_status simprov_emit_plot_data(const char* metrics_path, const char* kind, const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif
