/* C interface to the mgan library. Every function returns an mgan_status;
 * on failure mgan_last_error() describes the problem for the calling
 * thread. Handles are opaque and owned by the caller. */
#ifndef MGAN_MGAN_H
#define MGAN_MGAN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MGAN_API __declspec(dllexport)
#else
#define MGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mgan_status
{
  MGAN_OK = 0,
  MGAN_ERR_CONFIG = 1,
  MGAN_ERR_SHAPE = 2,
  MGAN_ERR_CONTRACT = 3,
  MGAN_ERR_NUMERICAL = 4,
  MGAN_ERR_DOMAIN = 5,
  MGAN_ERR_IO = 6,
  MGAN_ERR_ARGUMENT = 7,
  MGAN_ERR_INTERNAL = 8
} mgan_status;

typedef struct mgan_config mgan_config;
typedef struct mgan_dataset mgan_dataset;
typedef struct mgan_map mgan_map;

/* Receives one progress line; `user` is passed through unchanged. */
typedef void (*mgan_progress_fn)(const char* message, void* user);

MGAN_API const char* mgan_version(void);
MGAN_API const char* mgan_last_error(void);
MGAN_API const char* mgan_status_name(mgan_status status);
/* Process exit code: 0 success, 2 configuration, 3 numerical, 4 I/O, 1 other. */
MGAN_API int mgan_exit_code(mgan_status status);

/* Strings returned through char** are released with mgan_string_free. */
MGAN_API void mgan_string_free(char* s);

MGAN_API mgan_status mgan_config_parse(const char* json, mgan_config** out);
MGAN_API mgan_status mgan_config_load(const char* path, mgan_config** out);
MGAN_API mgan_status mgan_config_serialize(const mgan_config* cfg, char** out_json);
MGAN_API mgan_status mgan_config_set_seed(mgan_config* cfg, uint64_t seed);
MGAN_API mgan_status mgan_config_set_output_dir(mgan_config* cfg, const char* dir);
MGAN_API void mgan_config_free(mgan_config* cfg);

MGAN_API mgan_status mgan_cmd_generate(const mgan_config* cfg, char** out_dataset_path);
MGAN_API mgan_status mgan_cmd_train(const mgan_config* cfg, const char* dataset_path, mgan_progress_fn progress,
                                    void* user, char** out_checkpoint_path);
/* `checkpoint_path` is a checkpoint file or a training directory. */
MGAN_API mgan_status mgan_cmd_evaluate(const mgan_config* cfg, const char* checkpoint_path,
                                       mgan_progress_fn progress, void* user);
MGAN_API mgan_status mgan_cmd_mcmc(const mgan_config* cfg, mgan_progress_fn progress, void* user);
/* `checkpoint_path` may be NULL. */
MGAN_API mgan_status mgan_cmd_kr_oracle(const mgan_config* cfg, const char* checkpoint_path, char** out_path);

MGAN_API mgan_status mgan_dataset_load(const char* path, int n, mgan_dataset** out);
MGAN_API mgan_status mgan_dataset_shape(const mgan_dataset* data, size_t* rows, int* n, int* m);
/* Row-major (x, y) rows into a buffer of rows * (n + m) doubles. */
MGAN_API mgan_status mgan_dataset_copy(const mgan_dataset* data, double* out, size_t capacity);
MGAN_API void mgan_dataset_free(mgan_dataset* data);

MGAN_API mgan_status mgan_map_load(const char* path, mgan_map** out);
MGAN_API mgan_status mgan_map_shape(const mgan_map* map, int* n, int* m);
/* Draws `count` samples of y | x* into `out` (count * m doubles, row-major). */
MGAN_API mgan_status mgan_map_sample(const mgan_map* map, const double* x_star, size_t count, uint64_t seed,
                                     double* out);
/* Applies T to `rows` points w = (x, y) given in the map's training
 * coordinates; writes rows * (n + m) doubles. */
MGAN_API mgan_status mgan_map_apply(const mgan_map* map, const double* w, size_t rows, double* out);
MGAN_API void mgan_map_free(mgan_map* map);

#ifdef __cplusplus
}
#endif

#endif
