//! C ABI over the noise-control toolkit.
//!
//! The surface follows the usual conventions for embedding a Rust
//! library: opaque handles behind pointers, integer status codes, a
//! thread-local last-error message, and no panics across the boundary
//! (every entry point catches unwinds and reports them as a status).
//! Status values match the CLI exit codes: 2 for invalid arguments or
//! configuration, 3 for numeric failures, 4 for I/O.
//!
//! The generated header lives at `include/ssanc.h`.

use std::cell::RefCell;
use std::ffi::CStr;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ssanc_core::design::{
    design_robust_with, design_soft_with, load_filter, save_filter, FilterMetadata, SolverOptions,
    StackedControlFilter,
};
use ssanc_core::dsp::{ImpulseResponse, MultichannelSignal};
use ssanc_core::error::Error;
use ssanc_core::metrics::{noise_reduction_db, sd_intellig_db, snr_db, BandAnalysis};
use ssanc_core::path_model::load_ensemble;
use ssanc_core::scenario::{load_config, load_scenario, prepare_design, CaseStudyConfig};
use ssanc_core::sim::{simulate_loop, LoopConfig, ScenarioSignals};

/// Result of every fallible call. `SSANC_STATUS_OK` is zero; the other
/// values match the CLI exit codes for the same failure classes, plus
/// `SSANC_STATUS_INTERNAL` for a caught library panic. On any non-zero
/// status, `ssanc_last_error_message` describes what went wrong.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SsancStatus {
    Ok = 0,
    /// An argument, dimension, or configuration value is invalid.
    Invalid = 2,
    /// A numeric procedure failed or a metric is undefined.
    Numeric = 3,
    /// A file could not be read, written, or parsed.
    Io = 4,
    /// The library panicked; state is still consistent but the call did
    /// nothing.
    Internal = 5,
}

/// A multichannel control filter: one tap block per outer microphone
/// followed by one block for the leakage-estimate (feedback) input.
/// Create with `ssanc_filter_from_coeffs`, `ssanc_filter_load`, or
/// `ssanc_design_from_artifacts`; release with `ssanc_filter_free`.
pub struct SsancFilter {
    filter: StackedControlFilter,
    sample_rate: u32,
    meta: Option<FilterMetadata>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.replace('\0', " "));
}

fn clear_error() {
    LAST_ERROR.with(|e| e.borrow_mut().clear());
}

fn status_of(e: &Error) -> SsancStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => SsancStatus::Invalid,
        Error::Numeric(_) | Error::Identification(_) | Error::UndefinedMetric(_) => {
            SsancStatus::Numeric
        }
        Error::Io(_) => SsancStatus::Io,
    }
}

/// Run a fallible body with panic containment and last-error recording.
fn guarded(body: impl FnOnce() -> Result<(), Error>) -> SsancStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_error();
            SsancStatus::Ok
        }
        Ok(Err(e)) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SsancStatus::Internal
        }
    }
}

fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(msg.into())
}

/// # Safety: `ptr` must be a valid NUL-terminated string or NULL.
unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, Error> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} must not be NULL")));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))?;
    Ok(Path::new(s))
}

/// # Safety: `ptr` must point to `len` readable doubles.
unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Error> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} must not be NULL")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety: `ptr` must be valid to dereference or NULL (checked).
unsafe fn filter_arg<'a>(ptr: *const SsancFilter) -> Result<&'a SsancFilter, Error> {
    ptr.as_ref()
        .ok_or_else(|| invalid("filter handle must not be NULL"))
}

// -------------------------------------------------------------------
// version and error reporting

/// Version of the library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssanc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the calling thread's most recent error message into `buf` as a
/// NUL-terminated string, truncating to `cap` bytes including the
/// terminator. Returns the full message length in bytes (excluding the
/// terminator); call with a NULL `buf` or zero `cap` to query the
/// length. The message is cleared by the next successful call on the
/// same thread.
///
/// # Safety
///
/// `buf`, when non-NULL, must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ssanc_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// -------------------------------------------------------------------
// filter handles

/// Build a filter handle from raw coefficients. `coeffs` holds the
/// channel blocks back to back (`n_channels * filter_len` doubles), the
/// last block being the feedback channel. The handle carries no design
/// metadata, so it cannot be saved — it exists to feed the simulator
/// and coefficient queries.
///
/// # Safety
///
/// `coeffs` must point to `n_channels * filter_len` readable doubles
/// and `out` to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_from_coeffs(
    coeffs: *const f64,
    n_channels: usize,
    filter_len: usize,
    sample_rate: u32,
    out: *mut *mut SsancFilter,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output handle slot must not be NULL"));
        }
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        let total = n_channels
            .checked_mul(filter_len)
            .ok_or_else(|| invalid("coefficient count overflows"))?;
        let stacked = slice_arg(coeffs, total, "coefficient array")?;
        let filter = StackedControlFilter::from_stacked(stacked, n_channels)?;
        *out = Box::into_raw(Box::new(SsancFilter {
            filter,
            sample_rate,
            meta: None,
        }));
        Ok(())
    })
}

/// Load a filter saved by the design tools (a manifest plus one WAV per
/// channel) from `dir`.
///
/// # Safety
///
/// `dir` must be a valid NUL-terminated path and `out` a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_load(
    dir: *const c_char,
    out: *mut *mut SsancFilter,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output handle slot must not be NULL"));
        }
        let dir = path_arg(dir, "filter directory")?;
        let (filter, meta) = load_filter(dir)?;
        *out = Box::into_raw(Box::new(SsancFilter {
            filter,
            sample_rate: meta.sample_rate,
            meta: Some(meta),
        }));
        Ok(())
    })
}

/// Save a designed or loaded filter (with its metadata) into `dir`.
/// Handles built from raw coefficients carry no metadata and are
/// rejected.
///
/// # Safety
///
/// `filter` must be a live handle and `dir` a valid NUL-terminated
/// path.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_save(
    filter: *const SsancFilter,
    dir: *const c_char,
) -> SsancStatus {
    guarded(|| {
        let handle = filter_arg(filter)?;
        let dir = path_arg(dir, "output directory")?;
        let meta = handle.meta.as_ref().ok_or_else(|| {
            invalid(
                "this handle was built from raw coefficients and carries no \
                 design metadata; only loaded or designed filters can be saved",
            )
        })?;
        save_filter(dir, &handle.filter, meta)
    })
}

/// Release a filter handle. NULL is a no-op.
///
/// # Safety
///
/// `filter` must be a pointer previously returned by this library and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_free(filter: *mut SsancFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Number of channel blocks (outer microphones plus one feedback
/// block). Returns 0 for a NULL handle.
///
/// # Safety
///
/// `filter` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_n_channels(filter: *const SsancFilter) -> usize {
    filter.as_ref().map_or(0, |h| h.filter.n_channels())
}

/// Taps per channel block. Returns 0 for a NULL handle.
///
/// # Safety
///
/// `filter` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_len(filter: *const SsancFilter) -> usize {
    filter.as_ref().map_or(0, |h| h.filter.filter_len())
}

/// Sample rate the coefficients are designed for, Hz. Returns 0 for a
/// NULL handle.
///
/// # Safety
///
/// `filter` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_sample_rate(filter: *const SsancFilter) -> u32 {
    filter.as_ref().map_or(0, |h| h.sample_rate)
}

/// Copy all coefficients, channel blocks back to back, into `out`
/// (`cap` doubles, at least `n_channels * filter_len`).
///
/// # Safety
///
/// `filter` must be a live handle and `out` must point to `cap`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ssanc_filter_copy_coeffs(
    filter: *const SsancFilter,
    out: *mut f64,
    cap: usize,
) -> SsancStatus {
    guarded(|| {
        let handle = filter_arg(filter)?;
        let stacked = handle.filter.stacked();
        if out.is_null() {
            return Err(invalid("output array must not be NULL"));
        }
        if cap < stacked.len() {
            return Err(invalid(&format!(
                "output capacity {cap} is below the {} coefficients",
                stacked.len()
            )));
        }
        std::ptr::copy_nonoverlapping(stacked.as_ptr(), out, stacked.len());
        Ok(())
    })
}

// -------------------------------------------------------------------
// closed-loop simulation

/// Run the closed control loop over `n` samples and write the ear-drum
/// error signal to `error_out`.
///
/// Inputs: `outer` holds the outer-microphone signals channel block by
/// channel block (`n_outer * n` doubles); `leakage` is the sound
/// reaching the ear drum without control (`n` doubles); `g_true` is
/// the loudspeaker-to-ear path the loop really sees and `g_hat` the
/// internal model used to estimate the leakage from the measured
/// error. `ff_latency`/`fb_latency` are the processing delays on the
/// microphone and leakage-estimate inputs (the latter at least 1).
/// A non-positive `instability_threshold` selects the default, one
/// million times the peak input amplitude.
///
/// Outputs: `error_out` (`n` doubles) is required; `feed_out` (`n`
/// doubles, the loudspeaker feed), `stable_out`, and `divergence_out`
/// (first offending sample, -1 when stable) may be NULL. A diverged
/// run still returns `SSANC_STATUS_OK` with `*stable_out` false and
/// the outputs zero past the divergence point.
///
/// # Safety
///
/// Every pointer must cover the documented number of elements; the
/// optional outputs may be NULL.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ssanc_simulate_loop(
    filter: *const SsancFilter,
    g_true: *const f64,
    g_true_len: usize,
    g_hat: *const f64,
    g_hat_len: usize,
    outer: *const f64,
    n_outer: usize,
    leakage: *const f64,
    n: usize,
    sample_rate: u32,
    ff_latency: usize,
    fb_latency: usize,
    instability_threshold: f64,
    error_out: *mut f64,
    feed_out: *mut f64,
    stable_out: *mut bool,
    divergence_out: *mut i64,
) -> SsancStatus {
    guarded(|| {
        let handle = filter_arg(filter)?;
        if n == 0 {
            return Err(invalid("signal length must be positive"));
        }
        if n_outer == 0 {
            return Err(invalid("at least one outer microphone is required"));
        }
        if error_out.is_null() {
            return Err(invalid("error output array must not be NULL"));
        }
        let g_true = slice_arg(g_true, g_true_len, "true path")?;
        let g_hat = slice_arg(g_hat, g_hat_len, "path model")?;
        let total = n_outer
            .checked_mul(n)
            .ok_or_else(|| invalid("outer signal size overflows"))?;
        let outer = slice_arg(outer, total, "outer microphone signals")?;
        let leakage = slice_arg(leakage, n, "leakage signal")?;

        let channels: Vec<Vec<f64>> = (0..n_outer)
            .map(|k| outer[k * n..(k + 1) * n].to_vec())
            .collect();
        let signals = ScenarioSignals::new(
            MultichannelSignal::new(channels, sample_rate)?,
            vec![0.0; n],
            leakage.to_vec(),
            MultichannelSignal::new(vec![vec![0.0; n]; n_outer], sample_rate)?,
        )?;
        let g_true = ImpulseResponse::new(g_true.to_vec(), sample_rate)?;
        let g_hat = ImpulseResponse::new(g_hat.to_vec(), sample_rate)?;
        let cfg = LoopConfig {
            ff_latency,
            fb_latency,
            instability_threshold: if instability_threshold > 0.0 {
                instability_threshold
            } else {
                LoopConfig::default_threshold(signals.peak_amplitude())
            },
            max_samples: n,
        };
        let run = simulate_loop(&handle.filter, &g_true, &g_hat, &signals, &cfg)?;

        std::ptr::copy_nonoverlapping(run.error.as_ptr(), error_out, n);
        if !feed_out.is_null() {
            std::ptr::copy_nonoverlapping(run.loudspeaker.as_ptr(), feed_out, n);
        }
        if !stable_out.is_null() {
            *stable_out = run.stable;
        }
        if !divergence_out.is_null() {
            *divergence_out = run.divergence_sample.map_or(-1, |s| s as i64);
        }
        Ok(())
    })
}

// -------------------------------------------------------------------
// metrics

/// Noise reduction in dB: the power of `before` over the power of
/// `after` (both `n` doubles). Positive means the controller reduced
/// the noise.
///
/// # Safety
///
/// `before` and `after` must point to `n` readable doubles and `out`
/// to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ssanc_noise_reduction_db(
    before: *const f64,
    after: *const f64,
    n: usize,
    out: *mut f64,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output must not be NULL"));
        }
        let before = slice_arg(before, n, "uncontrolled signal")?;
        let after = slice_arg(after, n, "controlled signal")?;
        *out = noise_reduction_db(before, after)?;
        Ok(())
    })
}

/// Speech-to-noise power ratio in dB of two `n`-sample signals.
///
/// # Safety
///
/// `speech` and `noise` must point to `n` readable doubles and `out`
/// to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ssanc_snr_db(
    speech: *const f64,
    noise: *const f64,
    n: usize,
    out: *mut f64,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output must not be NULL"));
        }
        let speech = slice_arg(speech, n, "speech signal")?;
        let noise = slice_arg(noise, n, "noise signal")?;
        *out = snr_db(speech, noise)?;
        Ok(())
    })
}

/// Intelligibility-weighted spectral distortion in dB of the speech
/// component `error` against the passthrough target — `target_gain`
/// times the reference `reference` delayed by `passthrough_delay`
/// samples — using third-octave band-importance weights appropriate
/// for speech at the given sample rate. More negative is better.
///
/// # Safety
///
/// `error` and `reference` must point to `n` readable doubles and
/// `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ssanc_sd_intellig_db(
    error: *const f64,
    reference: *const f64,
    n: usize,
    target_gain: f64,
    passthrough_delay: usize,
    sample_rate: u32,
    out: *mut f64,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output must not be NULL"));
        }
        let error = slice_arg(error, n, "speech-component error")?;
        let reference = slice_arg(reference, n, "reference speech")?;
        let bands = BandAnalysis::speech_intelligibility_default(sample_rate)?;
        *out = sd_intellig_db(error, reference, target_gain, passthrough_delay, &bands)?;
        Ok(())
    })
}

// -------------------------------------------------------------------
// design from saved artifacts

/// Design a control filter from a saved scene and path ensemble and
/// return a handle carrying the coefficients plus full metadata (so it
/// can be saved with `ssanc_filter_save`).
///
/// `config_path` names a study configuration file, or NULL for the
/// small desk-scale defaults. A positive `mu` overrides the constraint
/// weight (otherwise the first grid point of the configuration is
/// used). With `robust` true the design averages over the whole
/// ensemble and `path_label` must be NULL; otherwise `path_label`
/// names the assumed path variant (NULL for the first).
///
/// # Safety
///
/// The path arguments must be valid NUL-terminated strings (or NULL
/// where documented) and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ssanc_design_from_artifacts(
    scenario_dir: *const c_char,
    ensemble_dir: *const c_char,
    config_path: *const c_char,
    mu: f64,
    robust: bool,
    path_label: *const c_char,
    out: *mut *mut SsancFilter,
) -> SsancStatus {
    guarded(|| {
        if out.is_null() {
            return Err(invalid("output handle slot must not be NULL"));
        }
        if robust && !path_label.is_null() {
            return Err(invalid(
                "a robust design averages over the whole ensemble; do not \
                 name a path variant",
            ));
        }
        let scenario_dir = path_arg(scenario_dir, "scenario directory")?;
        let ensemble_dir = path_arg(ensemble_dir, "ensemble directory")?;
        let mut cfg = if config_path.is_null() {
            CaseStudyConfig::desk_preset()
        } else {
            load_config(path_arg(config_path, "configuration path")?)?
        };
        cfg.scenario_ref = scenario_dir.to_path_buf();
        cfg.ensemble_ref = ensemble_dir.to_path_buf();
        if mu > 0.0 {
            cfg.mu_grid = vec![mu];
        } else if !mu.is_nan() && mu != 0.0 {
            return Err(invalid("the constraint weight must be positive"));
        }
        cfg.validate()?;

        let scenario = load_scenario(scenario_dir)?;
        let (ensemble, _) = load_ensemble(ensemble_dir)?;
        let setup = prepare_design(&cfg, &scenario, &ensemble)?;
        let options = SolverOptions::default();

        let (filter, labels) = if robust {
            let filter = design_robust_with(&setup.problem, &setup.operators, &options)?;
            (filter, ensemble.labels().to_vec())
        } else {
            let index = if path_label.is_null() {
                0
            } else {
                let label = CStr::from_ptr(path_label)
                    .to_str()
                    .map_err(|_| invalid("path label is not valid UTF-8"))?;
                ensemble
                    .labels()
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| {
                        invalid(&format!(
                            "no path variant labeled {label:?}; available: {}",
                            ensemble.labels().join(", ")
                        ))
                    })?
            };
            let filter = design_soft_with(&setup.problem, &setup.operators[index], &options)?;
            (filter, vec![ensemble.labels()[index].clone()])
        };

        let sample_rate = scenario.signals.sample_rate();
        let meta = FilterMetadata::new(
            &filter,
            sample_rate,
            cfg.mu_grid[0],
            cfg.target_gain,
            cfg.passthrough_delay,
            cfg.ff_latency,
            cfg.fb_latency,
            setup.beta_ff,
            setup.beta_fb,
            labels,
        );
        *out = Box::into_raw(Box::new(SsancFilter {
            filter,
            sample_rate,
            meta: Some(meta),
        }));
        Ok(())
    })
}
