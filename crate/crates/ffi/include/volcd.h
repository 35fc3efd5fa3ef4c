#ifndef VOLCD_H
#define VOLCD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `VOLCD_STATUS_OK` is zero.
typedef enum VolcdStatus {
  VOLCD_STATUS_OK = 0,
  VOLCD_STATUS_NULL_POINTER = 1,
  VOLCD_STATUS_INVALID_PARAMETER = 2,
  VOLCD_STATUS_NON_FINITE_SAMPLE = 3,
  VOLCD_STATUS_CHANNEL_MISMATCH = 4,
  VOLCD_STATUS_DEGENERATE = 5,
  VOLCD_STATUS_INTERNAL = 6,
} VolcdStatus;

typedef enum VolcdWeightScheme {
  VOLCD_WEIGHT_SCHEME_TRIANGULAR = 0,
  VOLCD_WEIGHT_SCHEME_UNIFORM = 1,
} VolcdWeightScheme;

typedef enum VolcdMuNormalization {
  VOLCD_MU_NORMALIZATION_CONTINUOUS = 0,
  VOLCD_MU_NORMALIZATION_AT_DETECTION = 1,
} VolcdMuNormalization;

// Opaque single-channel adaptive detector.
typedef struct VolcdAfcd VolcdAfcd;

// Opaque cooperative multichannel detector.
typedef struct VolcdCafcd VolcdCafcd;

// Opaque single-channel GLR detector.
typedef struct VolcdGlr VolcdGlr;

// Parameters of the adaptive detectors. Start from
// [`volcd_afcd_params_default`] and override fields as needed.
typedef struct VolcdAfcdParams {
  double mu;
  size_t slow_window;
  size_t fast_window;
  size_t desired_window;
  double gamma;
  double rho;
  size_t refractory;
  enum VolcdWeightScheme weight_scheme;
  enum VolcdMuNormalization mu_normalization;
  uint64_t seed;
} VolcdAfcdParams;

typedef struct VolcdGlrParams {
  size_t window;
  double threshold;
  size_t refractory;
  size_t min_location_segment;
} VolcdGlrParams;

// What one pushed sample produced.
typedef struct VolcdStep {
  // False while the detector is still filling its windows.
  bool ready;
  // lambda, psi or the GLR statistic; NaN when not ready or undefined.
  double statistic;
  bool event;
  uint64_t detect_time;
  bool has_location;
  uint64_t location;
} VolcdStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *volcd_last_error(void);

// Static description of a status code.
const char *volcd_status_str(enum VolcdStatus status);

struct VolcdAfcdParams volcd_afcd_params_default(void);

struct VolcdGlrParams volcd_glr_params_default(void);

// Creates a single-channel adaptive detector in `*out`.
//
// # Safety
// `params` must be null or point to a valid struct; `out` must be null or writable.
enum VolcdStatus volcd_afcd_new(const struct VolcdAfcdParams *params, struct VolcdAfcd **out);

// Feeds one sample. `step` may be null when the caller only needs the status.
//
// # Safety
// `handle` must come from [`volcd_afcd_new`] and not be freed; `step` must be null or writable.
enum VolcdStatus volcd_afcd_push(struct VolcdAfcd *handle, double x, struct VolcdStep *step);

// # Safety
// `handle` must be null or come from [`volcd_afcd_new`]; it must not be used afterwards.
void volcd_afcd_free(struct VolcdAfcd *handle);

// Creates a cooperative detector over `n_channels` channels with uniform
// combiner weights. Channel `c` uses a dither seed derived from `params.seed`.
//
// # Safety
// As for [`volcd_afcd_new`].
enum VolcdStatus volcd_cafcd_new(const struct VolcdAfcdParams *params,
                                 size_t n_channels,
                                 struct VolcdCafcd **out);

// Feeds one time-aligned sample of `n` channel values.
//
// # Safety
// `handle` must be live; `x` must point to `n` readable doubles; `step` null or writable.
enum VolcdStatus volcd_cafcd_push(struct VolcdCafcd *handle,
                                  const double *x,
                                  size_t n,
                                  struct VolcdStep *step);

// # Safety
// `handle` must be null or come from [`volcd_cafcd_new`]; it must not be used afterwards.
void volcd_cafcd_free(struct VolcdCafcd *handle);

// # Safety
// As for [`volcd_afcd_new`].
enum VolcdStatus volcd_glr_new(const struct VolcdGlrParams *params, struct VolcdGlr **out);

// Feeds one sample. Events carry the located change time.
//
// # Safety
// As for [`volcd_afcd_push`].
enum VolcdStatus volcd_glr_push(struct VolcdGlr *handle, double x, struct VolcdStep *step);

// # Safety
// `handle` must be null or come from [`volcd_glr_new`]; it must not be used afterwards.
void volcd_glr_free(struct VolcdGlr *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLCD_H */
