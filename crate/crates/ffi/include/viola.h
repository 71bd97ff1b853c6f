#ifndef VIOLA_H
#define VIOLA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ViolaStatus {
  VIOLA_STATUS_OK = 0,
  VIOLA_STATUS_NULL_POINTER = 1,
  VIOLA_STATUS_INVALID_ARGUMENT = 2,
  VIOLA_STATUS_IO = 3,
  VIOLA_STATUS_MALFORMED_HEADER = 4,
  VIOLA_STATUS_UNSUPPORTED_DTYPE = 5,
  VIOLA_STATUS_TRUNCATED = 6,
  VIOLA_STATUS_SHAPE = 7,
  VIOLA_STATUS_CONFIG = 8,
  VIOLA_STATUS_NUMERIC = 9,
  VIOLA_STATUS_DATASET = 10,
  VIOLA_STATUS_PANIC = 11,
} ViolaStatus;

typedef enum ViolaVolumeKind {
  VIOLA_VOLUME_KIND_HU = 0,
  VIOLA_VOLUME_KIND_LABEL = 1,
  VIOLA_VOLUME_KIND_PROBABILITY = 2,
} ViolaVolumeKind;

// Opaque network handle.
typedef struct ViolaModel ViolaModel;

// Opaque volume handle.
typedef struct ViolaVolume ViolaVolume;

// Per-case scores. A `has_*` flag of false means the metric is undefined
// for this case (empty mask) and the value field is NaN.
typedef struct ViolaMetrics {
  double dsc;
  double hd_mm;
  double hd95_mm;
  double nsd;
  double rvd;
  bool has_hd;
  bool has_hd95;
  bool has_nsd;
  bool has_rvd;
} ViolaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call on this thread.
const char *viola_last_error(void);

// Library version as a static NUL-terminated string.
const char *viola_version(void);

// Reads a NIfTI or raw volume.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ViolaStatus viola_volume_load(const char *path, struct ViolaVolume **out);

// Writes a volume; `.vol` selects the raw format, anything else NIfTI.
//
// # Safety
// `v` must come from this library; `path` must be NUL-terminated.
enum ViolaStatus viola_volume_save(const struct ViolaVolume *v, const char *path);

// Builds a volume from `dims[0]*dims[1]*dims[2]` values in H, W, D
// row-major order.
//
// # Safety
// `dims` and `spacing` must point to 3 elements, `data` to `len`.
enum ViolaStatus viola_volume_new(const size_t *dims,
                                  const double *spacing,
                                  enum ViolaVolumeKind kind,
                                  const double *data,
                                  size_t len,
                                  struct ViolaVolume **out);

// # Safety
// `v` must come from this library and not be used afterwards. Null is ignored.
void viola_volume_free(struct ViolaVolume *v);

// # Safety
// `v` must be valid; `dims` must have room for 3 values.
enum ViolaStatus viola_volume_dims(const struct ViolaVolume *v, size_t *dims);

// # Safety
// `v` must be valid; `spacing` must have room for 3 values.
enum ViolaStatus viola_volume_spacing(const struct ViolaVolume *v, double *spacing);

// # Safety
// `v` must be valid; `kind` writable.
enum ViolaStatus viola_volume_kind(const struct ViolaVolume *v, enum ViolaVolumeKind *kind);

// Copies the voxel values into `out`, which must hold exactly the
// volume's voxel count.
//
// # Safety
// `v` must be valid; `out` must point to `len` writable values.
enum ViolaStatus viola_volume_data(const struct ViolaVolume *v, double *out, size_t len);

// Loads a network from a checkpoint file.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum ViolaStatus viola_model_load(const char *path, struct ViolaModel **out);

// # Safety
// `m` must come from this library and not be used afterwards. Null is ignored.
void viola_model_free(struct ViolaModel *m);

// Sliding-window segmentation of an HU volume. Either output may be null
// if not wanted.
//
// # Safety
// Handles must be valid; non-null outputs must be writable.
enum ViolaStatus viola_model_infer(const struct ViolaModel *m,
                                   const struct ViolaVolume *image,
                                   double overlap,
                                   struct ViolaVolume **out_prob,
                                   struct ViolaVolume **out_label);

// Scores a predicted mask against ground truth.
//
// # Safety
// Handles must be valid; `out` writable.
enum ViolaStatus viola_metrics(const struct ViolaVolume *pred,
                               const struct ViolaVolume *gt,
                               double nsd_tau_mm,
                               double hd_percentile,
                               struct ViolaMetrics *out);

// Learning rate at `step` for a linear-warmup, cosine-decay schedule.
//
// # Safety
// `out` must be writable.
enum ViolaStatus viola_lr_at(size_t step,
                             double base_lr,
                             size_t warmup_steps,
                             size_t total_steps,
                             double *out);

// Windows an HU volume into `[0, 1]`, writing one value per voxel.
//
// # Safety
// `v` must be valid; `out` must point to `len` writable values.
enum ViolaStatus viola_hu_window(const struct ViolaVolume *v,
                                 double low,
                                 double high,
                                 double *out,
                                 size_t len);

// Voxel-wise mean of `n` probability volumes and its label map at 0.5.
//
// # Safety
// `inputs` must point to `n` valid handles; non-null outputs writable.
enum ViolaStatus viola_ensemble(const struct ViolaVolume *const *inputs,
                                size_t n,
                                struct ViolaVolume **out_prob,
                                struct ViolaVolume **out_label);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIOLA_H */
