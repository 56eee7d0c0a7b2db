#ifndef RELIGHT_H
#define RELIGHT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_NULL_POINTER = 1,
  RL_STATUS_INVALID_ARGUMENT = 2,
  RL_STATUS_FORMAT = 3,
  RL_STATUS_SHAPE = 4,
  RL_STATUS_NON_FINITE = 5,
  RL_STATUS_IO = 6,
  RL_STATUS_CONFIG = 7,
  RL_STATUS_PANIC = 8,
} RlStatus;

typedef enum RlRigPreset {
  RL_RIG_PRESET_DESK = 0,
  RL_RIG_PRESET_STAGE = 1,
} RlRigPreset;

typedef enum RlTask {
  RL_TASK_DELIGHT = 0,
  RL_TASK_RELIGHT = 1,
} RlTask;

/**
 * Equirectangular HDR environment map.
 */
typedef struct RlEnvMap RlEnvMap;

/**
 * Linear RGB float image.
 */
typedef struct RlImage RlImage;

/**
 * A trained delighting or relighting model.
 */
typedef struct RlModel RlModel;

typedef struct RlRig RlRig;

/**
 * Sampling parameters for video inference.
 */
typedef struct RlInferSettings {
  size_t steps;
  size_t window;
  size_t overlap;
  uint64_t seed;
} RlInferSettings;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *rl_last_error(void);

/**
 * Desk defaults: 30 steps, 30-frame windows, 4 overlap frames, seed 0.
 */
struct RlInferSettings rl_infer_settings_default(void);

/**
 * Copies `width * height * 3` interleaved RGB floats into a new image.
 *
 * # Safety
 * `rgb` must point to that many floats; `out` must be writable.
 */
enum RlStatus rl_image_new(size_t width, size_t height, const float *rgb, struct RlImage **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RlStatus rl_image_read_pfm(const char *path, struct RlImage **out);

/**
 * # Safety
 * `image` must be a live handle; `path` a NUL-terminated string.
 */
enum RlStatus rl_image_write_pfm(const struct RlImage *image, const char *path);

/**
 * # Safety
 * `image` must be a live handle; `width` and `height` writable.
 */
enum RlStatus rl_image_dims(const struct RlImage *image, size_t *width, size_t *height);

/**
 * Copies the pixels out as interleaved RGB; `len` must equal `width * height * 3`.
 *
 * # Safety
 * `image` must be a live handle; `rgb` must hold `len` floats.
 */
enum RlStatus rl_image_pixels(const struct RlImage *image, float *rgb, size_t len);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void rl_image_free(struct RlImage *image);

/**
 * Reads an environment map; `.pfm` files are read as PFM, anything else as Radiance RGBE.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RlStatus rl_env_read(const char *path, struct RlEnvMap **out);

/**
 * Builds an environment map from `width * height * 3` interleaved RGB floats.
 *
 * # Safety
 * `rgb` must point to that many floats; `out` must be writable.
 */
enum RlStatus rl_env_new(size_t width, size_t height, const float *rgb, struct RlEnvMap **out);

/**
 * Solid-angle-weighted radiance integral per channel.
 *
 * # Safety
 * `env` must be a live handle; `rgb` must hold 3 doubles.
 */
enum RlStatus rl_env_total_energy(const struct RlEnvMap *env, double *rgb);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void rl_env_free(struct RlEnvMap *env);

/**
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_rig_preset(enum RlRigPreset preset,
                            size_t map_width,
                            size_t map_height,
                            struct RlRig **out);

/**
 * Rebuilds a rig from the JSON manifest written by `relight rig build`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum RlStatus rl_rig_from_manifest(const char *json, struct RlRig **out);

/**
 * # Safety
 * `rig` must be a live handle; `count` writable.
 */
enum RlStatus rl_rig_light_count(const struct RlRig *rig, size_t *count);

/**
 * Per-light RGB weights of `env`, written as `3 * light_count` doubles.
 *
 * # Safety
 * `rig` and `env` must be live handles; `weights` must hold `len` doubles.
 */
enum RlStatus rl_rig_project(const struct RlRig *rig,
                             const struct RlEnvMap *env,
                             double *weights,
                             size_t len);

/**
 * # Safety
 * `rig` must be null or a handle not yet freed.
 */
void rl_rig_free(struct RlRig *rig);

/**
 * PSNR in dB on [0, 1] frames, capped at 99.
 *
 * # Safety
 * `a` and `b` must be live handles; `db` writable.
 */
enum RlStatus rl_psnr(const struct RlImage *a, const struct RlImage *b, double *db);

/**
 * # Safety
 * `a` and `b` must be live handles; `score` writable.
 */
enum RlStatus rl_ssim(const struct RlImage *a, const struct RlImage *b, double *score);

/**
 * Loads the model stored in a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RlStatus rl_model_load(const char *path, struct RlModel **out);

/**
 * # Safety
 * `model` must be a live handle; `task` writable.
 */
enum RlStatus rl_model_task(const struct RlModel *model, enum RlTask *task);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void rl_model_free(struct RlModel *model);

/**
 * Lit frames to albedo. On success `out[0..count]` receives new image
 * handles owned by the caller.
 *
 * # Safety
 * `frames` must hold `count` live handles; `out` must hold `count` slots.
 */
enum RlStatus rl_delight_video(const struct RlModel *model,
                               const struct RlImage *const *frames,
                               size_t count,
                               struct RlInferSettings settings,
                               struct RlImage **out);

/**
 * Albedo frames relit by `env`. Output ownership as in [`rl_delight_video`].
 *
 * # Safety
 * Handles must be live; `frames` holds `count` handles, `out` `count` slots.
 */
enum RlStatus rl_relight_video(const struct RlModel *model,
                               const struct RlRig *rig,
                               const struct RlEnvMap *env,
                               const struct RlImage *const *frames,
                               size_t count,
                               struct RlInferSettings settings,
                               struct RlImage **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELIGHT_H */
