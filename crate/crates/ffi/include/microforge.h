#ifndef MICROFORGE_H
#define MICROFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  MF_STATUS_DIMENSION = 3,
  MF_STATUS_PARAMETER = 4,
  MF_STATUS_DIVERGENCE = 5,
  MF_STATUS_STATE = 6,
  MF_STATUS_DOMAIN = 7,
  MF_STATUS_CONFIG = 8,
  MF_STATUS_FORMAT = 9,
  MF_STATUS_VERSION = 10,
  MF_STATUS_MISSING_ARTIFACT = 11,
  MF_STATUS_UNDEFINED = 12,
  MF_STATUS_IO = 13,
  MF_STATUS_PANIC = 14,
} MfStatus;

/**
 * A labelled microstructure.
 */
typedef struct MfImage MfImage;

/**
 * A trained generator with its four property regressors.
 */
typedef struct MfModels MfModels;

/**
 * FEM outcome for one image and mode.
 */
typedef struct MfProps {
  double sigma_max_mpa;
  double eps_lim;
  /**
   * 1 when necking was detected before the strain cap.
   */
  int32_t necking;
  uint64_t steps;
} MfProps;

/**
 * Best point of a latent-space search.
 */
typedef struct MfSearchResult {
  double z[2];
  uint8_t mode;
  double score;
  double sigma_max_mpa;
  double eps_lim;
} MfSearchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

/**
 * Image from `width * height` row-major phase codes (0 ferrite, 1 and 2
 * the martensite variants).
 *
 * # Safety
 * `codes` must point to `width * height` bytes; `out` must be writable.
 */
enum MfStatus mf_image_new(size_t width, size_t height, const uint8_t *codes, struct MfImage **out);

/**
 * Image filled with one phase.
 *
 * # Safety
 * `out` must be writable.
 */
enum MfStatus mf_image_new_uniform(size_t width,
                                   size_t height,
                                   uint8_t phase,
                                   struct MfImage **out);

/**
 * Reads a dataset image file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MfStatus mf_image_read(const char *path, size_t width, size_t height, struct MfImage **out);

/**
 * Writes an image in the dataset file format.
 *
 * # Safety
 * `image` must be a live handle; `path` a NUL-terminated string.
 */
enum MfStatus mf_image_write(const struct MfImage *image, const char *path);

/**
 * Width, or 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t mf_image_width(const struct MfImage *image);

/**
 * Height, or 0 for a null handle.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t mf_image_height(const struct MfImage *image);

/**
 * Copies the row-major phase codes into `codes`, which holds `len` bytes.
 *
 * # Safety
 * `image` must be a live handle; `codes` must hold `len` writable bytes.
 */
enum MfStatus mf_image_codes(const struct MfImage *image, uint8_t *codes, size_t len);

/**
 * Fraction of martensite pixels.
 *
 * # Safety
 * `image` must be a live handle; `out` must be writable.
 */
enum MfStatus mf_image_martensite_fraction(const struct MfImage *image, double *out);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void mf_image_free(struct MfImage *image);

/**
 * Phase-field run with default material parameters. Writes up to
 * `capacity` snapshot handles into `out` and their number into
 * `out_count`; each handle must be freed.
 *
 * # Safety
 * `out` must hold `capacity` writable pointers; `out_count` must be writable.
 */
enum MfStatus mf_phasefield_run(size_t band_half_width,
                                double noise_amplitude,
                                uint64_t seed,
                                size_t snapshots,
                                size_t interval,
                                struct MfImage **out,
                                size_t capacity,
                                size_t *out_count);

/**
 * Crystal-plasticity simulation with default materials.
 *
 * # Safety
 * `image` must be a live handle; `out` must be writable.
 */
enum MfStatus mf_simulate(const struct MfImage *image, uint8_t mode, struct MfProps *out);

/**
 * Loads the generator and regressors of a finished pipeline run.
 *
 * # Safety
 * `run_root` must be a NUL-terminated string; `out` must be writable.
 */
enum MfStatus mf_models_load(const char *run_root, struct MfModels **out);

/**
 * Scores of the four modes at latent point `(z0, z1)`; optionally the
 * generated image (pass null to skip).
 *
 * # Safety
 * `models` must be a live handle; `scores` must hold 4 writable doubles;
 * `image_out` must be null or writable.
 */
enum MfStatus mf_models_evaluate(const struct MfModels *models,
                                 double z0,
                                 double z1,
                                 double *scores,
                                 struct MfImage **image_out);

/**
 * Seeded random search of `iterations` latent points.
 *
 * # Safety
 * `models` must be a live handle; `out` must be writable.
 */
enum MfStatus mf_models_search(const struct MfModels *models,
                               size_t iterations,
                               uint64_t seed,
                               struct MfSearchResult *out);

/**
 * # Safety
 * `models` must be null or a handle not yet freed.
 */
void mf_models_free(struct MfModels *models);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICROFORGE_H */
