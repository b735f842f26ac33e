#ifndef PTSEG_H
#define PTSEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtsegStatus {
  PTSEG_STATUS_OK = 0,
  PTSEG_STATUS_NULL_POINTER = 1,
  PTSEG_STATUS_INVALID_INPUT = 2,
  PTSEG_STATUS_NOT_FOUND = 3,
  PTSEG_STATUS_PRECONDITION = 4,
  PTSEG_STATUS_UNSUPPORTED = 5,
  PTSEG_STATUS_PROTOCOL = 6,
  PTSEG_STATUS_TRANSPORT = 7,
  PTSEG_STATUS_IO = 8,
  PTSEG_STATUS_BUFFER_TOO_SMALL = 9,
  PTSEG_STATUS_PANIC = 10,
} PtsegStatus;

/*
 A synthetic scene with oracle backends, a configuration and the latest run.
 */
typedef struct PtsegEngine PtsegEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into the library on the same thread.
 */
const char *ptseg_last_error(void);

/*
 Static version string.
 */
const char *ptseg_version(void);

/*
 Renders a scene from its JSON spec. `out` receives a handle to free with
 `ptseg_engine_free`.

 # Safety
 `scene_json` must be a NUL-terminated string; `out` must be writable.
 */
enum PtsegStatus ptseg_engine_from_scene_json(const char *scene_json, struct PtsegEngine **out);

/*
 # Safety
 `engine` must come from this library and not be used afterwards.
 */
void ptseg_engine_free(struct PtsegEngine *engine);

/*
 Replaces the pipeline configuration; missing fields take defaults.

 # Safety
 `engine` must be a live handle; `config_json` NUL-terminated.
 */
enum PtsegStatus ptseg_engine_set_config_json(struct PtsegEngine *engine, const char *config_json);

/*
 Frame count and size of the scene.

 # Safety
 `engine` must be a live handle; the out pointers writable.
 */
enum PtsegStatus ptseg_engine_dims(const struct PtsegEngine *engine,
                                   size_t *frames,
                                   uint32_t *width,
                                   uint32_t *height);

/*
 Runs the semi-supervised pipeline, seeding every object from its
 first-appearance ground truth.

 # Safety
 `engine` must be a live handle.
 */
enum PtsegStatus ptseg_engine_run(struct PtsegEngine *engine);

/*
 Copies the predicted mask of `object` on `frame` as `width * height`
 bytes of 0 or 1, row-major.

 # Safety
 `engine` must be a live handle; `out` must hold `len` bytes.
 */
enum PtsegStatus ptseg_engine_mask(const struct PtsegEngine *engine,
                                   uint32_t object,
                                   size_t frame,
                                   uint8_t *out,
                                   size_t len);

/*
 J&F of the latest run against the scene's ground truth.

 # Safety
 `engine` must be a live handle; `jf` writable.
 */
enum PtsegStatus ptseg_engine_score(const struct PtsegEngine *engine, double *jf);

/*
 Region similarity of two `width * height` byte masks (non-zero = set).

 # Safety
 Both buffers must hold `width * height` bytes; `out` writable.
 */
enum PtsegStatus ptseg_region_j(const uint8_t *pred,
                                const uint8_t *gt,
                                uint32_t width,
                                uint32_t height,
                                double *out);

/*
 Boundary F-measure; `tolerance` 0 selects the size-dependent default.

 # Safety
 Both buffers must hold `width * height` bytes; `out` writable.
 */
enum PtsegStatus ptseg_contour_f(const uint8_t *pred,
                                 const uint8_t *gt,
                                 uint32_t width,
                                 uint32_t height,
                                 uint32_t tolerance,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTSEG_H */
