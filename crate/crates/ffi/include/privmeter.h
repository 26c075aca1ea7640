#ifndef PRIVMETER_H
#define PRIVMETER_H

/* Generated by cbindgen from privmeter-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum PrivmeterStatus {
  PRIVMETER_STATUS_OK = 0,
  PRIVMETER_STATUS_NULL_ARGUMENT = 1,
  PRIVMETER_STATUS_INVALID_UTF8 = 2,
  PRIVMETER_STATUS_PARSE_ERROR = 3,
  PRIVMETER_STATUS_IO_ERROR = 4,
  PRIVMETER_STATUS_INVALID_INPUT = 5,
  // The host has no registrable domain (public suffix or IP literal).
  PRIVMETER_STATUS_NO_DOMAIN = 6,
  PRIVMETER_STATUS_BUFFER_TOO_SMALL = 7,
} PrivmeterStatus;

// Opaque Public Suffix List handle.
typedef struct PrivmeterPsl PrivmeterPsl;

// Two-sample KS test result.
typedef struct PrivmeterKsResult {
  double d_statistic;
  double p_value;
  size_t n;
  size_t m;
  bool same_distribution;
} PrivmeterKsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *privmeter_version(void);

// Copy the last error message for this thread into `buf`; returns the
// number of bytes the full message needs (including the NUL).
//
// # Safety
// `buf` must point to `buf_len` writable bytes, or be NULL to query the
// required size.
size_t privmeter_last_error(char *buf, size_t buf_len);

// Load the bundled Public Suffix List snapshot.
//
// # Safety
// `out` must be a valid pointer; the returned handle must be released with
// `privmeter_psl_free`.
enum PrivmeterStatus privmeter_psl_bundled(struct PrivmeterPsl **out);

// Parse a Public Suffix List from text.
//
// # Safety
// `text` must be NUL-terminated; `out` must be valid. Release the handle
// with `privmeter_psl_free`.
enum PrivmeterStatus privmeter_psl_parse(const char *text, struct PrivmeterPsl **out);

// # Safety
// `psl` must be a handle from `privmeter_psl_parse`/`privmeter_psl_bundled`
// that has not been freed, or NULL (a no-op).
void privmeter_psl_free(struct PrivmeterPsl *psl);

// Write the registrable domain (eTLD+1) of `host` into `buf`. Returns
// `NoDomain` when the host is a public suffix, an IP literal or invalid.
//
// # Safety
// `psl` must be a live handle; `host` NUL-terminated; `buf` writable for
// `buf_len` bytes.
enum PrivmeterStatus privmeter_registrable_domain(const struct PrivmeterPsl *psl,
                                                  const char *host,
                                                  char *buf,
                                                  size_t buf_len);

// Classify a request against a visited site: `*out` is set to true for a
// third-party request.
//
// # Safety
// `psl` must be a live handle; both hosts NUL-terminated; `out` valid.
enum PrivmeterStatus privmeter_is_third_party(const struct PrivmeterPsl *psl,
                                              const char *request_host,
                                              const char *site_host,
                                              bool *out);

// Two-sample KS test over `a[0..n]` and `b[0..m]`.
//
// # Safety
// `a` and `b` must point to `n` and `m` readable doubles; `out` valid.
enum PrivmeterStatus privmeter_ks_two_sample(const double *a,
                                             size_t n,
                                             const double *b,
                                             size_t m,
                                             double alpha,
                                             struct PrivmeterKsResult *out);

// Relative standard error of the mean of `samples[0..n]`.
//
// # Safety
// `samples` must point to `n` readable doubles; `out` valid.
enum PrivmeterStatus privmeter_relative_standard_error(const double *samples,
                                                       size_t n,
                                                       double *out);

// Filter a bare crawl log through every blocker in a roster file and write
// the protected log (same behavior as `privmeter simulate`).
//
// # Safety
// `psl` must be a live handle; all paths NUL-terminated.
enum PrivmeterStatus privmeter_simulate_file(const struct PrivmeterPsl *psl,
                                             const char *bare_path,
                                             const char *roster_path,
                                             const char *out_path);

// Compute the metrics table of a crawl log and write it as CSV (same
// behavior as `privmeter metrics`).
//
// # Safety
// `psl` must be a live handle; both paths NUL-terminated.
enum PrivmeterStatus privmeter_metrics_csv_file(const struct PrivmeterPsl *psl,
                                                const char *log_path,
                                                const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVMETER_H */
