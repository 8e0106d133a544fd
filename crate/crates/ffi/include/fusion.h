#ifndef FUSION_H
#define FUSION_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum FusionStatus {
  FUSION_STATUS_OK = 0,
  FUSION_STATUS_NULL_POINTER = 1,
  FUSION_STATUS_INVALID_UTF8 = 2,
  FUSION_STATUS_PARSE_ERROR = 3,
  FUSION_STATUS_ANALYSIS_ERROR = 4,
  FUSION_STATUS_PANIC = 5,
} FusionStatus;

/**
 * Outcome of an identification run.
 */
typedef enum FusionVerdict {
  FUSION_VERDICT_IDENTIFIED = 0,
  /**
   * Not identifiable by the implemented rule set.
   */
  FUSION_VERDICT_NOT_IDENTIFIED = 1,
  FUSION_VERDICT_UNDETERMINED = 2,
} FusionVerdict;

/**
 * A parsed problem file.
 */
typedef struct FusionProblem FusionProblem;

/**
 * The result of [`fusion_identify`].
 */
typedef struct FusionReport FusionReport;

/**
 * Options for [`fusion_identify`]. Obtain defaults from
 * [`fusion_options_default`].
 */
typedef struct FusionOptions {
  bool prune;
  /**
   * Choose transit clusters automatically.
   */
  bool cluster;
  size_t max_terms;
  size_t max_depth;
} FusionOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on this thread.
 */
const char *fusion_last_error(void);

/**
 * Library version as a static string.
 */
const char *fusion_version(void);

struct FusionOptions fusion_options_default(void);

/**
 * Parses a problem file held in `text` and stores a new handle in `out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FusionStatus fusion_problem_parse(const char *text, struct FusionProblem **out);

/**
 * # Safety
 * `p` must come from [`fusion_problem_parse`] and not be used afterwards.
 */
void fusion_problem_free(struct FusionProblem *p);

/**
 * Runs the pruning stage and stores its JSON report in `out`.
 *
 * # Safety
 * `p` must be a live problem handle and `out` a valid pointer.
 */
enum FusionStatus fusion_prune_json(const struct FusionProblem *p, char **out);

/**
 * Identifies the query of `p`. `options` may be null for defaults.
 *
 * # Safety
 * `p` must be a live problem handle, `options` null or valid, and `out`
 * a valid pointer.
 */
enum FusionStatus fusion_identify(const struct FusionProblem *p,
                                  const struct FusionOptions *options,
                                  struct FusionReport **out);

/**
 * # Safety
 * `r` must be a live report handle.
 */
enum FusionVerdict fusion_report_verdict(const struct FusionReport *r);

/**
 * Identifying functional over the original inputs, or null when the
 * query was not identified.
 *
 * # Safety
 * `r` must be a live report handle.
 */
char *fusion_report_expression(const struct FusionReport *r);

/**
 * Full report as JSON.
 *
 * # Safety
 * `r` must be a live report handle.
 */
char *fusion_report_json(const struct FusionReport *r);

/**
 * # Safety
 * `r` must come from [`fusion_identify`] and not be used afterwards.
 */
void fusion_report_free(struct FusionReport *r);

/**
 * # Safety
 * `s` must be a string returned by this library, or null.
 */
void fusion_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSION_H */
