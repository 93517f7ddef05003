#ifndef GAPCERT_H
#define GAPCERT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GapcertPlatform {
  GAPCERT_PLATFORM_ROBOTARIUM = 0,
  GAPCERT_PLATFORM_QUADRUPED = 1,
} GapcertPlatform;

typedef enum GapcertStatus {
  GAPCERT_STATUS_OK = 0,
  GAPCERT_STATUS_NULL_POINTER = 1,
  GAPCERT_STATUS_INVALID_ARGUMENT = 2,
  GAPCERT_STATUS_CONFIG = 3,
  GAPCERT_STATUS_SIMULATION = 4,
  GAPCERT_STATUS_IO = 5,
  GAPCERT_STATUS_PANIC = 6,
} GapcertStatus;

/**
 * Opaque certified gap.
 */
typedef struct GapcertGapResult GapcertGapResult;

/**
 * Opaque platform profile.
 */
typedef struct GapcertProfile GapcertProfile;

/**
 * Opaque controller verification result.
 */
typedef struct GapcertVerification GapcertVerification;

/**
 * Planar pose `(x, y, theta)`.
 */
typedef struct GapcertPose {
  double x;
  double y;
  double theta;
} GapcertPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *gapcert_last_error(void);

/**
 * `1 - (1 - epsilon)^samples`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum GapcertStatus gapcert_confidence(uint64_t samples, double epsilon, double *out);

/**
 * Probability that a scenario solution with `dimension` support
 * constraints violates more than `epsilon`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum GapcertStatus gapcert_violation_bound(uint64_t samples,
                                           uint64_t dimension,
                                           double epsilon,
                                           double *out);

/**
 * # Safety
 * `out` must be valid for a write.
 */
enum GapcertStatus gapcert_profile_new(enum GapcertPlatform platform, struct GapcertProfile **out);

/**
 * Model time step of the profile, seconds.
 *
 * # Safety
 * `profile` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_profile_dt(const struct GapcertProfile *profile, double *out);

/**
 * # Safety
 * `profile` must be null or a handle not yet freed.
 */
void gapcert_profile_free(struct GapcertProfile *profile);

/**
 * Samples `samples` plant/model comparisons and certifies their maximum.
 *
 * # Safety
 * `profile` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_estimate_gap(const struct GapcertProfile *profile,
                                        uint64_t samples,
                                        double epsilon,
                                        uint64_t seed,
                                        uint32_t workers,
                                        struct GapcertGapResult **out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_gap_result_gap(const struct GapcertGapResult *result, double *out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_gap_result_confidence(const struct GapcertGapResult *result,
                                                 double *out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_gap_result_sample_count(const struct GapcertGapResult *result,
                                                   uint64_t *out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void gapcert_gap_result_free(struct GapcertGapResult *result);

/**
 * Whether `observed` lies in the one-step reachable set of `start` under
 * input `(v, omega)` and disturbance radius `radius`.
 *
 * # Safety
 * `profile` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_reachable_contains(const struct GapcertProfile *profile,
                                              struct GapcertPose start,
                                              double v,
                                              double omega,
                                              struct GapcertPose observed,
                                              double radius,
                                              bool *out);

/**
 * Verifies the platform's navigation controller with `samples` rollouts
 * of the uncertain model at disturbance radius `radius`.
 *
 * # Safety
 * `profile` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_verify(const struct GapcertProfile *profile,
                                  double radius,
                                  uint64_t samples,
                                  double epsilon,
                                  uint64_t seed,
                                  uint32_t workers,
                                  struct GapcertVerification **out);

/**
 * Minimum safety value over the rollouts; −1 means a rollout crashed.
 *
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_verification_min_safety(const struct GapcertVerification *result,
                                                   double *out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_verification_passed(const struct GapcertVerification *result, bool *out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for a write.
 */
enum GapcertStatus gapcert_verification_confidence(const struct GapcertVerification *result,
                                                   double *out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void gapcert_verification_free(struct GapcertVerification *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAPCERT_H */
