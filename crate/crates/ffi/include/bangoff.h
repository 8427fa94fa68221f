/* Copyright 2026 The bangoff Contributors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef BANGOFF_H
#define BANGOFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; values 1–3 match the CLI exit codes.
 */
typedef enum BangoffStatus {
  BANGOFF_STATUS_OK = 0,
  BANGOFF_STATUS_INVALID_INPUT = 1,
  BANGOFF_STATUS_RESOURCE_LIMIT = 2,
  BANGOFF_STATUS_NO_CONVERGENCE = 3,
  BANGOFF_STATUS_NUMERICAL_FAILURE = 4,
  BANGOFF_STATUS_OUT_OF_REGIME = 5,
  BANGOFF_STATUS_PARSE_ERROR = 6,
  BANGOFF_STATUS_NULL_POINTER = 7,
  BANGOFF_STATUS_BUFFER_TOO_SMALL = 8,
  BANGOFF_STATUS_PANIC = 9,
} BangoffStatus;

/**
 * Opaque QSL report handle.
 */
typedef struct BangoffQslReport BangoffQslReport;

/**
 * Opaque system handle.
 */
typedef struct BangoffSystem BangoffSystem;

/**
 * Closed-form one-switch optimum of the two-level `|0> -> |1>` transfer.
 */
typedef struct BangoffCase1 {
  double t1;
  double t2;
  double t_qsl;
} BangoffCase1;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library from the same thread.
 */
const char *bangoff_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bangoff_version(void);

/**
 * Two-level system `H = -E sz + u sx`, `|u| <= M`, from `|0>` to the
 * target with amplitudes `re[k] + i im[k]`, `k = 0, 1`.
 */
enum BangoffStatus bangoff_system_two_level(double energy,
                                            double bound,
                                            const double *target_re,
                                            const double *target_im,
                                            struct BangoffSystem **out);

/**
 * Three-level ladder from `|1>` to `|3>`.
 */
enum BangoffStatus bangoff_system_three_level(double energy,
                                              double mu1,
                                              double mu2,
                                              double bound,
                                              struct BangoffSystem **out);

/**
 * System from the text of a TOML system file.
 */
enum BangoffStatus bangoff_system_from_toml(const char *text, struct BangoffSystem **out);

void bangoff_system_free(struct BangoffSystem *sys);

/**
 * Hilbert-space dimension, or 0 for NULL.
 */
size_t bangoff_system_dim(const struct BangoffSystem *sys);

/**
 * Control bound `M`, or NaN for NULL.
 */
double bangoff_system_bound(const struct BangoffSystem *sys);

/**
 * Fidelity of the bang-off control `type` (e.g. "P0N") with `n` durations.
 */
enum BangoffStatus bangoff_fidelity(const struct BangoffSystem *sys,
                                    const char *kind,
                                    const double *durations,
                                    size_t n,
                                    double *out);

/**
 * `1 - F`, computed without cancellation.
 */
enum BangoffStatus bangoff_infidelity(const struct BangoffSystem *sys,
                                      const char *kind,
                                      const double *durations,
                                      size_t n,
                                      double *out);

/**
 * Bures distance from an infidelity in `[0, 1]`.
 */
enum BangoffStatus bangoff_bures(double infidelity, double *out);

enum BangoffStatus bangoff_analytic_case1(double energy, double bound, struct BangoffCase1 *out);

/**
 * Runs the QSL search with default budgets. A report is produced even when
 * the stopping rule did not fire; check [`bangoff_qsl_converged`].
 */
enum BangoffStatus bangoff_qsl_estimate(const struct BangoffSystem *sys,
                                        double delta,
                                        size_t ns_max,
                                        uint64_t seed,
                                        struct BangoffQslReport **out);

void bangoff_qsl_report_free(struct BangoffQslReport *report);

/**
 * 1 when the stopping rule fired, 0 otherwise (or for NULL).
 */
int32_t bangoff_qsl_converged(const struct BangoffQslReport *report);

/**
 * QSL estimate; `BANGOFF_STATUS_NO_CONVERGENCE` when there is none.
 */
enum BangoffStatus bangoff_qsl_value(const struct BangoffQslReport *report, double *out);

/**
 * Switch count at which the estimate stabilised.
 */
enum BangoffStatus bangoff_qsl_ns_star(const struct BangoffQslReport *report, size_t *out);

/**
 * First optimal type word; owned by the report. NULL when there is none.
 */
const char *bangoff_qsl_witness_type(const struct BangoffQslReport *report);

/**
 * Copies the durations of the first optimal control into `buf`. `len`
 * receives the number of durations even when `cap` is too small.
 */
enum BangoffStatus bangoff_qsl_witness_durations(const struct BangoffQslReport *report,
                                                 double *buf,
                                                 size_t cap,
                                                 size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANGOFF_H */
