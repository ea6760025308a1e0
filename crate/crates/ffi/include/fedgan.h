#ifndef FEDGAN_H
#define FEDGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum FedganStatus {
  FEDGAN_STATUS_OK = 0,
  FEDGAN_STATUS_NULL_POINTER = 1,
  FEDGAN_STATUS_INVALID_ARGUMENT = 2,
  FEDGAN_STATUS_CONFIG = 3,
  FEDGAN_STATUS_SHAPE = 4,
  FEDGAN_STATUS_NON_FINITE = 5,
  FEDGAN_STATUS_PARSE = 6,
  FEDGAN_STATUS_IO = 7,
  FEDGAN_STATUS_PANIC = 8,
  FEDGAN_STATUS_OTHER = 9,
} FedganStatus;

// A trained denoising autoencoder.
typedef struct FedganAutoencoder FedganAutoencoder;

// Experiment configuration, starting from the built-in defaults.
typedef struct FedganConfig FedganConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error on this thread, or NULL if the previous call succeeded.
// The caller frees the result with `fedgan_string_free`.
char *fedgan_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library, freed at most once.
void fedgan_string_free(char *s);

// (epsilon, delta)-DP of `rounds` compositions of the sampled Gaussian
// mechanism at rate `q` and noise multiplier `z`, over the default orders.
// `out_order` may be NULL.
//
// # Safety
// `out_epsilon` must be valid for writes; `out_order` must be NULL or valid.
enum FedganStatus fedgan_epsilon(double q,
                                 double z,
                                 uint64_t rounds,
                                 double delta,
                                 double *out_epsilon,
                                 double *out_order);

// Fréchet distance between two feature sets stored row-major as
// `[n_real, dim]` and `[n_fake, dim]`.
//
// # Safety
// `real` and `fake` must point to `n_real * dim` and `n_fake * dim` doubles.
enum FedganStatus fedgan_fid(const double *real,
                             size_t n_real,
                             const double *fake,
                             size_t n_fake,
                             size_t dim,
                             double *out);

// A configuration holding the built-in defaults.
struct FedganConfig *fedgan_config_new(void);

// # Safety
// `cfg` must be NULL or a handle from `fedgan_config_new`, freed at most once.
void fedgan_config_free(struct FedganConfig *cfg);

// Applies a named preset: `nodp`, `dp`, `dp_denoise` or `full`.
//
// # Safety
// `cfg` must be a live handle and `name` a NUL-terminated string.
enum FedganStatus fedgan_config_apply_preset(struct FedganConfig *cfg, const char *name);

// Sets one `key` to `value`, parsed as in a config file.
//
// # Safety
// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
enum FedganStatus fedgan_config_set(struct FedganConfig *cfg, const char *key, const char *value);

// Applies a file of `key = value` lines.
//
// # Safety
// `cfg` must be a live handle and `path` a NUL-terminated string.
enum FedganStatus fedgan_config_apply_file(struct FedganConfig *cfg, const char *path);

// The configuration as `key = value` lines, or NULL if `cfg` is NULL.
// The caller frees the result with `fedgan_string_free`.
//
// # Safety
// `cfg` must be NULL or a live handle.
char *fedgan_config_to_text(const struct FedganConfig *cfg);

// Runs an experiment and writes `config_resolved`, `metrics.csv` and the
// sample grids into `out_dir`. Blocks until the run finishes.
//
// # Safety
// `cfg` must be a live handle and `out_dir` a NUL-terminated string.
enum FedganStatus fedgan_run(const struct FedganConfig *cfg, const char *out_dir);

// Loads an autoencoder saved by `fedgan train-autoencoder`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum FedganStatus fedgan_autoencoder_load(const char *path, struct FedganAutoencoder **out);

// # Safety
// `ae` must be NULL or a handle from `fedgan_autoencoder_load`, freed at most once.
void fedgan_autoencoder_free(struct FedganAutoencoder *ae);

// Noise level the model was trained at, or NaN if `ae` is NULL.
//
// # Safety
// `ae` must be NULL or a live handle.
double fedgan_autoencoder_noise_level(const struct FedganAutoencoder *ae);

// Denoises `n` images of 28×28 pixels in [0, 1], row-major, into `out`.
//
// # Safety
// `images` and `out` must each hold `n * 784` doubles; they may alias.
enum FedganStatus fedgan_autoencoder_denoise(const struct FedganAutoencoder *ae,
                                             const double *images,
                                             size_t n,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDGAN_H */
