/* SPDX-License-Identifier: Apache-2.0 */

#ifndef RISKPROBE_H
#define RISKPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define RP_ACCESS_BLACK_BOX 0

#define RP_ACCESS_WHITE_BOX 1

#define RP_AUX_PARTIAL 0

#define RP_AUX_SHADOW 1

#define RP_AUX_NONE 2

#define RP_ATTACK_MEMINF 1

#define RP_ATTACK_MODINV 2

#define RP_ATTACK_ATTRINF 4

#define RP_ATTACK_MODSTEAL 8

typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_CONFIG_ERROR = 2,
  RP_STATUS_CAPABILITY_ERROR = 3,
  RP_STATUS_RUNTIME_ERROR = 4,
  RP_STATUS_NULL_ARGUMENT = 5,
  RP_STATUS_INVALID_ARGUMENT = 6,
  RP_STATUS_PANIC = 7,
} RpStatus;

/**
 * Opaque zCDP accountant.
 */
typedef struct RpAccountant RpAccountant;

/**
 * Opaque handle to a finished assessment.
 */
typedef struct RpReport RpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rp_version(void);

/**
 * Bit mask (`RP_ATTACK_*`) of the attacks applicable under a threat model.
 * Black-box access without auxiliary data is rejected as a config error.
 */
enum RpStatus rp_applicable_attacks(uint32_t access, uint32_t auxiliary, uint32_t *out_mask);

/**
 * Per-step noise multiplier so that `steps` Gaussian steps compose to
 * (`epsilon`, `delta`)-DP under zCDP.
 */
enum RpStatus rp_zcdp_sigma_for_budget(double epsilon,
                                       double delta,
                                       uint64_t steps,
                                       double *out_sigma);

/**
 * Classic single-release Gaussian mechanism noise multiplier.
 */
enum RpStatus rp_gaussian_sigma_single(double epsilon, double delta, double *out_sigma);

/**
 * Writes `g / max(1, |g| / clip)` to `out` (both of length `len`).
 */
enum RpStatus rp_clip_gradient(const float *g, uintptr_t len, float clip, float *out);

/**
 * ROC AUC of `scores` against 0/1 `labels`.
 */
enum RpStatus rp_auc(const double *scores, const uint8_t *labels, uintptr_t n, double *out);

enum RpStatus rp_pearson(const double *x, const double *y, uintptr_t n, double *out);

/**
 * Fraction of positions where the two label sequences agree.
 */
enum RpStatus rp_agreement(const uint32_t *a, const uint32_t *b, uintptr_t n, double *out);

enum RpStatus rp_accountant_new(double delta, struct RpAccountant **out);

/**
 * Records one Gaussian step with noise multiplier `sigma` and clip norm `clip`.
 */
enum RpStatus rp_accountant_record(struct RpAccountant *acc, double sigma, double clip);

enum RpStatus rp_accountant_epsilon(const struct RpAccountant *acc, double *out);

enum RpStatus rp_accountant_rho(const struct RpAccountant *acc, double *out);

enum RpStatus rp_accountant_steps(const struct RpAccountant *acc, uint64_t *out);

void rp_accountant_free(struct RpAccountant *acc);

/**
 * Runs a full assessment from a YAML config and writes artifacts under
 * `out_dir`. On success `*out` owns the report.
 */
enum RpStatus rp_run_assessment(const char *config_yaml,
                                const char *out_dir,
                                struct RpReport **out);

/**
 * The report as JSON; owned by the handle.
 */
const char *rp_report_json(const struct RpReport *report);

/**
 * Path of `report.json` on disk; owned by the handle.
 */
const char *rp_report_path(const struct RpReport *report);

void rp_report_free(struct RpReport *report);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RISKPROBE_H */
