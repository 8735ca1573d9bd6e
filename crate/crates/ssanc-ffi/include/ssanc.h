/* C interface to the spatially selective noise-control toolkit. */

#ifndef SSANC_H
#define SSANC_H

/* Generated from the ssanc-ffi crate by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. `SSANC_STATUS_OK` is zero; the other
// values match the CLI exit codes for the same failure classes, plus
// `SSANC_STATUS_INTERNAL` for a caught library panic. On any non-zero
// status, `ssanc_last_error_message` describes what went wrong.
typedef enum SsancStatus {
  SSANC_STATUS_OK = 0,
  // An argument, dimension, or configuration value is invalid.
  SSANC_STATUS_INVALID = 2,
  // A numeric procedure failed or a metric is undefined.
  SSANC_STATUS_NUMERIC = 3,
  // A file could not be read, written, or parsed.
  SSANC_STATUS_IO = 4,
  // The library panicked; state is still consistent but the call did
  // nothing.
  SSANC_STATUS_INTERNAL = 5,
} SsancStatus;

// A multichannel control filter: one tap block per outer microphone
// followed by one block for the leakage-estimate (feedback) input.
// Create with `ssanc_filter_from_coeffs`, `ssanc_filter_load`, or
// `ssanc_design_from_artifacts`; release with `ssanc_filter_free`.
typedef struct SsancFilter SsancFilter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the library, as a static NUL-terminated string.
const char *ssanc_version(void);

// Copy the calling thread's most recent error message into `buf` as a
// NUL-terminated string, truncating to `cap` bytes including the
// terminator. Returns the full message length in bytes (excluding the
// terminator); call with a NULL `buf` or zero `cap` to query the
// length. The message is cleared by the next successful call on the
// same thread.
//
// # Safety
//
// `buf`, when non-NULL, must point to `cap` writable bytes.
size_t ssanc_last_error_message(char *buf, size_t cap);

// Build a filter handle from raw coefficients. `coeffs` holds the
// channel blocks back to back (`n_channels * filter_len` doubles), the
// last block being the feedback channel. The handle carries no design
// metadata, so it cannot be saved — it exists to feed the simulator
// and coefficient queries.
//
// # Safety
//
// `coeffs` must point to `n_channels * filter_len` readable doubles
// and `out` to a writable pointer slot.
enum SsancStatus ssanc_filter_from_coeffs(const double *coeffs,
                                          size_t n_channels,
                                          size_t filter_len,
                                          uint32_t sample_rate,
                                          struct SsancFilter **out);

// Load a filter saved by the design tools (a manifest plus one WAV per
// channel) from `dir`.
//
// # Safety
//
// `dir` must be a valid NUL-terminated path and `out` a writable
// pointer slot.
enum SsancStatus ssanc_filter_load(const char *dir, struct SsancFilter **out);

// Save a designed or loaded filter (with its metadata) into `dir`.
// Handles built from raw coefficients carry no metadata and are
// rejected.
//
// # Safety
//
// `filter` must be a live handle and `dir` a valid NUL-terminated
// path.
enum SsancStatus ssanc_filter_save(const struct SsancFilter *filter, const char *dir);

// Release a filter handle. NULL is a no-op.
//
// # Safety
//
// `filter` must be a pointer previously returned by this library and
// not yet freed.
void ssanc_filter_free(struct SsancFilter *filter);

// Number of channel blocks (outer microphones plus one feedback
// block). Returns 0 for a NULL handle.
//
// # Safety
//
// `filter` must be a live handle or NULL.
size_t ssanc_filter_n_channels(const struct SsancFilter *filter);

// Taps per channel block. Returns 0 for a NULL handle.
//
// # Safety
//
// `filter` must be a live handle or NULL.
size_t ssanc_filter_len(const struct SsancFilter *filter);

// Sample rate the coefficients are designed for, Hz. Returns 0 for a
// NULL handle.
//
// # Safety
//
// `filter` must be a live handle or NULL.
uint32_t ssanc_filter_sample_rate(const struct SsancFilter *filter);

// Copy all coefficients, channel blocks back to back, into `out`
// (`cap` doubles, at least `n_channels * filter_len`).
//
// # Safety
//
// `filter` must be a live handle and `out` must point to `cap`
// writable doubles.
enum SsancStatus ssanc_filter_copy_coeffs(const struct SsancFilter *filter,
                                          double *out,
                                          size_t cap);

// Run the closed control loop over `n` samples and write the ear-drum
// error signal to `error_out`.
//
// Inputs: `outer` holds the outer-microphone signals channel block by
// channel block (`n_outer * n` doubles); `leakage` is the sound
// reaching the ear drum without control (`n` doubles); `g_true` is
// the loudspeaker-to-ear path the loop really sees and `g_hat` the
// internal model used to estimate the leakage from the measured
// error. `ff_latency`/`fb_latency` are the processing delays on the
// microphone and leakage-estimate inputs (the latter at least 1).
// A non-positive `instability_threshold` selects the default, one
// million times the peak input amplitude.
//
// Outputs: `error_out` (`n` doubles) is required; `feed_out` (`n`
// doubles, the loudspeaker feed), `stable_out`, and `divergence_out`
// (first offending sample, -1 when stable) may be NULL. A diverged
// run still returns `SSANC_STATUS_OK` with `*stable_out` false and
// the outputs zero past the divergence point.
//
// # Safety
//
// Every pointer must cover the documented number of elements; the
// optional outputs may be NULL.
enum SsancStatus ssanc_simulate_loop(const struct SsancFilter *filter,
                                     const double *g_true,
                                     size_t g_true_len,
                                     const double *g_hat,
                                     size_t g_hat_len,
                                     const double *outer,
                                     size_t n_outer,
                                     const double *leakage,
                                     size_t n,
                                     uint32_t sample_rate,
                                     size_t ff_latency,
                                     size_t fb_latency,
                                     double instability_threshold,
                                     double *error_out,
                                     double *feed_out,
                                     bool *stable_out,
                                     int64_t *divergence_out);

// Noise reduction in dB: the power of `before` over the power of
// `after` (both `n` doubles). Positive means the controller reduced
// the noise.
//
// # Safety
//
// `before` and `after` must point to `n` readable doubles and `out`
// to a writable double.
enum SsancStatus ssanc_noise_reduction_db(const double *before,
                                          const double *after,
                                          size_t n,
                                          double *out);

// Speech-to-noise power ratio in dB of two `n`-sample signals.
//
// # Safety
//
// `speech` and `noise` must point to `n` readable doubles and `out`
// to a writable double.
enum SsancStatus ssanc_snr_db(const double *speech, const double *noise, size_t n, double *out);

// Intelligibility-weighted spectral distortion in dB of the speech
// component `error` against the passthrough target — `target_gain`
// times the reference `reference` delayed by `passthrough_delay`
// samples — using third-octave band-importance weights appropriate
// for speech at the given sample rate. More negative is better.
//
// # Safety
//
// `error` and `reference` must point to `n` readable doubles and
// `out` to a writable double.
enum SsancStatus ssanc_sd_intellig_db(const double *error,
                                      const double *reference,
                                      size_t n,
                                      double target_gain,
                                      size_t passthrough_delay,
                                      uint32_t sample_rate,
                                      double *out);

// Design a control filter from a saved scene and path ensemble and
// return a handle carrying the coefficients plus full metadata (so it
// can be saved with `ssanc_filter_save`).
//
// `config_path` names a study configuration file, or NULL for the
// small desk-scale defaults. A positive `mu` overrides the constraint
// weight (otherwise the first grid point of the configuration is
// used). With `robust` true the design averages over the whole
// ensemble and `path_label` must be NULL; otherwise `path_label`
// names the assumed path variant (NULL for the first).
//
// # Safety
//
// The path arguments must be valid NUL-terminated strings (or NULL
// where documented) and `out` a writable pointer slot.
enum SsancStatus ssanc_design_from_artifacts(const char *scenario_dir,
                                             const char *ensemble_dir,
                                             const char *config_path,
                                             double mu,
                                             bool robust,
                                             const char *path_label,
                                             struct SsancFilter **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSANC_H */
