#ifndef VORA_FILTER_H
#define VORA_FILTER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VoraStatus {
  VORA_STATUS_OK = 0,
  VORA_STATUS_INVALID_ARGUMENT = 1,
  VORA_STATUS_NULL_POINTER = 2,
  VORA_STATUS_GRID_MISMATCH = 3,
  VORA_STATUS_SINGULAR = 4,
  VORA_STATUS_INVALID_FILTER = 5,
  VORA_STATUS_PROJECTION_FAILURE = 6,
  VORA_STATUS_DATA_ERROR = 7,
  VORA_STATUS_PANIC = 8,
} VoraStatus;

typedef enum VoraAscentStatus {
  VORA_ASCENT_STATUS_CONVERGED = 0,
  VORA_ASCENT_STATUS_ITERATION_CAP = 1,
  VORA_ASCENT_STATUS_STALLED = 2,
} VoraAscentStatus;

/*
 A solved filter and its run statistics.
 */
typedef struct VoraResult VoraResult;

/*
 Three spectral sensitivity curves on a uniform grid.
 */
typedef struct VoraSensorSet VoraSensorSet;

/*
 Gradient ascent settings; obtain defaults from [`vora_ascent_config_default`].
 */
typedef struct VoraAscentConfig {
  double eta;
  size_t max_iters;
  double armijo_c;
  double backtrack_beta;
  double t0;
  double f_floor;
} VoraAscentConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *vora_last_error_message(void);

struct VoraAscentConfig vora_ascent_config_default(void);

/*
 Creates a sensor set on the grid `start, start + step, ...` with `n` samples.

 # Safety
 `values` must point to `3 * n` doubles; `label` must be NULL or a NUL-terminated string.
 */
enum VoraStatus vora_sensor_set_new(double start,
                                    double step,
                                    size_t n,
                                    const double *values,
                                    const char *label,
                                    struct VoraSensorSet **out);

/*
 CIE 1931 2° color matching functions on 400–700 nm at 10 nm.

 # Safety
 `out` must be a valid pointer.
 */
enum VoraStatus vora_sensor_set_cie1931(struct VoraSensorSet **out);

/*
 One of the bundled camera sensitivity sets, by label.

 # Safety
 `label` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VoraStatus vora_sensor_set_bundled_camera(const char *label, struct VoraSensorSet **out);

/*
 # Safety
 `set` must be NULL or a handle from this library that has not been freed.
 */
void vora_sensor_set_free(struct VoraSensorSet *set);

/*
 Number of wavelength samples, or 0 for NULL.

 # Safety
 `set` must be NULL or a live handle.
 */
size_t vora_sensor_set_len(const struct VoraSensorSet *set);

/*
 Vora-Value of the unfiltered camera `q` against observer `x`.

 # Safety
 Handles must be live and `out` valid.
 */
enum VoraStatus vora_value_of(const struct VoraSensorSet *q,
                              const struct VoraSensorSet *x,
                              double *out);

/*
 Vora-Value of camera `q` behind `filter` (`n` samples).

 # Safety
 `filter` must point to `n` doubles; handles must be live and `out` valid.
 */
enum VoraStatus vora_filtered_value(const double *filter,
                                    size_t n,
                                    const struct VoraSensorSet *q,
                                    const struct VoraSensorSet *x,
                                    double *out);

/*
 Gradient of the filtered Vora-Value with respect to the filter, written to `grad`.

 # Safety
 `filter` and `grad` must each point to `n` doubles; handles must be live.
 */
enum VoraStatus vora_gradient(const double *filter,
                              size_t n,
                              const struct VoraSensorSet *q,
                              const struct VoraSensorSet *x,
                              double *grad);

/*
 Unconstrained gradient ascent. `f0` may be NULL for the default start, `config` NULL for defaults.

 # Safety
 `f0` must be NULL or point to `n` doubles; handles must be live and `out` valid.
 */
enum VoraStatus vora_optimize_unconstrained(const struct VoraSensorSet *q,
                                            const struct VoraSensorSet *x,
                                            const double *f0,
                                            size_t n,
                                            const struct VoraAscentConfig *config,
                                            struct VoraResult **out);

/*
 Projected ascent over `k` cosine basis terms with `f_min <= f <= f_max`.

 # Safety
 Handles must be live, `config` NULL or valid, and `out` valid.
 */
enum VoraStatus vora_optimize_constrained(const struct VoraSensorSet *q,
                                          const struct VoraSensorSet *x,
                                          size_t k,
                                          double f_min,
                                          double f_max,
                                          const struct VoraAscentConfig *config,
                                          struct VoraResult **out);

/*
 Luther-condition filter. `k == 0` leaves every wavelength free; otherwise the
 filter is restricted to `k` cosine terms within `[f_min, f_max]`.

 # Safety
 Handles must be live and `out` valid.
 */
enum VoraStatus vora_luther(const struct VoraSensorSet *q,
                            const struct VoraSensorSet *x,
                            size_t k,
                            double f_min,
                            double f_max,
                            struct VoraResult **out);

/*
 # Safety
 `result` must be NULL or a live handle.
 */
void vora_result_free(struct VoraResult *result);

/*
 # Safety
 `result` must be NULL or a live handle.
 */
size_t vora_result_len(const struct VoraResult *result);

/*
 Copies the filter (max transmittance 1) into `out`, which holds `n` doubles.

 # Safety
 `result` must be live and `out` point to `n` doubles.
 */
enum VoraStatus vora_result_filter(const struct VoraResult *result, double *out, size_t n);

/*
 NaN for NULL.

 # Safety
 `result` must be NULL or a live handle.
 */
double vora_result_initial_value(const struct VoraResult *result);

/*
 NaN for NULL.

 # Safety
 `result` must be NULL or a live handle.
 */
double vora_result_final_value(const struct VoraResult *result);

/*
 # Safety
 `result` must be NULL or a live handle.
 */
size_t vora_result_iterations(const struct VoraResult *result);

/*
 # Safety
 `result` must be a live handle.
 */
enum VoraStatus vora_result_status(const struct VoraResult *result, enum VoraAscentStatus *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VORA_FILTER_H */
