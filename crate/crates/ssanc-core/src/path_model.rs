//! FIR path identification and synthetic secondary-path ensembles.
//!
//! Two least-squares identifiers recover acoustic paths from data: a
//! causal FIR fit of an excitation/response pair, and relative impulse
//! responses (with an acausal part) of a microphone set against a
//! reference microphone. A parametric spectral-perturbation model then
//! manufactures ensembles of plausible secondary-path variants around a
//! nominal response, standing in for measured inter-subject variation.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::design::{solve_spd_cg, solve_spd_dense};
use crate::dsp::{
    convolve, convolve_full, read_multichannel_wav, sliding_dot, write_multichannel_wav,
    ImpulseResponse, MultichannelSignal, ReirFilter, WavFormat,
};
use crate::error::{Error, Result};

/// Unknown counts up to which the reir normal equations are solved
/// densely; larger systems go through FFT-accelerated conjugate gradients.
const REIR_DENSE_THRESHOLD: usize = 2048;

/// Least-squares FIR fit of `response ≈ h * excitation` with `order` taps.
///
/// The normal equations are the exact finite sums over the full record
/// (no windowing approximations), so a response generated by an
/// order-length path is recovered to solver precision. Returns the fitted
/// response together with the relative residual
/// `‖response − h*excitation‖ / ‖response‖`.
pub fn identify_fir_ls(
    excitation: &[f64],
    response: &[f64],
    order: usize,
    sample_rate: u32,
) -> Result<(ImpulseResponse, f64)> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "identification order must be at least 1".into(),
        ));
    }
    if excitation.len() != response.len() {
        return Err(Error::InvalidArgument(format!(
            "excitation length {} and response length {} must match",
            excitation.len(),
            response.len()
        )));
    }
    let n = excitation.len();
    if n < 4 * order {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples to identify {order} taps, got {n}",
            4 * order
        )));
    }
    if excitation.iter().all(|&x| x == 0.0) {
        return Err(Error::Identification(
            "excitation has zero energy; use a longer or whiter excitation".into(),
        ));
    }

    // Gram matrix of the shifted excitations: entry (i, i+τ) is the exact
    // sum Σ_{m=0}^{N−1−i} x(m)·x(m−τ), one prefix pass per diagonal.
    let mut gram = DMatrix::zeros(order, order);
    let mut prefix = vec![0.0; n + 1];
    for tau in 0..order {
        for m in 0..n {
            let p = if m >= tau {
                excitation[m] * excitation[m - tau]
            } else {
                0.0
            };
            prefix[m + 1] = prefix[m] + p;
        }
        for i in 0..order - tau {
            let value = prefix[n - i];
            gram[(i, i + tau)] = value;
            gram[(i + tau, i)] = value;
        }
    }
    let rhs = sliding_dot(excitation, response, order);
    let taps = solve_spd_dense(&gram, &rhs).map_err(|_| {
        Error::Identification(
            "excitation autocorrelation is rank-deficient; use a longer or \
             whiter excitation"
                .into(),
        )
    })?;

    let fit = convolve(&taps, excitation)?;
    let response_norm: f64 = response.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual = if response_norm == 0.0 {
        0.0
    } else {
        response
            .iter()
            .zip(&fit)
            .map(|(y, f)| (y - f) * (y - f))
            .sum::<f64>()
            .sqrt()
            / response_norm
    };
    Ok((ImpulseResponse::new(taps, sample_rate)?, residual))
}

/// Relative impulse responses of every microphone against one reference
/// microphone, each with `acausal_len` leading (time-advance) taps and
/// `causal_len` trailing ones.
///
/// The fit is least squares under white-noise excitation through the
/// absolute responses, taken in expectation: second-order statistics of
/// white noise reduce the normal equations to exact correlations of the
/// impulse responses themselves, giving a Toeplitz system per microphone.
/// A ridge of 1e-8 times the mean diagonal keeps reverberant,
/// ill-conditioned references solvable; the reference's own relative
/// response comes out as a unit impulse at lag zero.
pub fn identify_reir_set(
    ir_to_mics: &[ImpulseResponse],
    reference_index: usize,
    acausal_len: usize,
    causal_len: usize,
) -> Result<Vec<ReirFilter>> {
    if ir_to_mics.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one microphone response".into(),
        ));
    }
    if reference_index >= ir_to_mics.len() {
        return Err(Error::InvalidArgument(format!(
            "reference index {reference_index} is out of range for {} responses",
            ir_to_mics.len()
        )));
    }
    if causal_len == 0 {
        return Err(Error::InvalidArgument(
            "relative responses need at least one causal tap".into(),
        ));
    }
    let sample_rate = ir_to_mics[0].sample_rate();
    if ir_to_mics.iter().any(|ir| ir.sample_rate() != sample_rate) {
        return Err(Error::InvalidArgument(
            "all microphone responses must share one sample rate".into(),
        ));
    }
    let reference = ir_to_mics[reference_index].taps();
    let max_energy = ir_to_mics
        .iter()
        .map(|ir| ir.energy())
        .fold(0.0f64, f64::max);
    let ref_energy = ir_to_mics[reference_index].energy();
    if ref_energy <= 1e-12 * max_energy || ref_energy == 0.0 {
        return Err(Error::Identification(
            "reference impulse response has near-zero energy; choose a \
             different reference microphone"
                .into(),
        ));
    }

    let dim = acausal_len + causal_len;
    // Autocorrelation of the reference response at lags 0..dim−1.
    let mut reversed = reference.to_vec();
    reversed.reverse();
    let auto_full = convolve_full(&reversed, reference);
    let center = reference.len() - 1;
    let autocorr: Vec<f64> = (0..dim)
        .map(|tau| auto_full.get(center + tau).copied().unwrap_or(0.0))
        .collect();
    let ridge = 1e-8 * autocorr[0];

    let mut filters = Vec::with_capacity(ir_to_mics.len());
    for ir in ir_to_mics {
        // Cross-correlation with the reference at each modeled lag.
        let cross_full = convolve_full(&reversed, ir.taps());
        let rhs: Vec<f64> = (0..dim)
            .map(|i| {
                let lag = i as isize - acausal_len as isize;
                let idx = center as isize + lag;
                if idx >= 0 && (idx as usize) < cross_full.len() {
                    cross_full[idx as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let taps =
            solve_toeplitz_spd(&autocorr, &rhs, ridge, REIR_DENSE_THRESHOLD).map_err(|e| {
                Error::Identification(format!(
                    "relative-response fit failed ({e}); the reference \
                     response may be too reverberant for this tap count"
                ))
            })?;
        filters.push(ReirFilter::new(taps, acausal_len)?);
    }
    Ok(filters)
}

/// Solve `(T + ridge·I) x = rhs` with `T` the symmetric Toeplitz matrix
/// whose first row is `autocorr`. Dense Cholesky below the threshold,
/// conjugate gradients with an FFT matrix action above it.
pub(crate) fn solve_toeplitz_spd(
    autocorr: &[f64],
    rhs: &[f64],
    ridge: f64,
    dense_threshold: usize,
) -> Result<Vec<f64>> {
    let dim = rhs.len();
    assert_eq!(autocorr.len(), dim, "autocorrelation must cover every lag");
    if dim <= dense_threshold {
        let mut matrix = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                matrix[(i, j)] = autocorr[i.abs_diff(j)];
            }
            matrix[(i, i)] += ridge;
        }
        solve_spd_dense(&matrix, rhs)
    } else {
        // Embed the Toeplitz action in one full convolution: kernel index
        // dim−1+i−j carries autocorr[|i−j|].
        let mut kernel = vec![0.0; 2 * dim - 1];
        for (k, slot) in kernel.iter_mut().enumerate() {
            *slot = autocorr[k.abs_diff(dim - 1)];
        }
        solve_spd_cg(
            |v| {
                let full = convolve_full(&kernel, v);
                (0..dim).map(|i| full[dim - 1 + i] + ridge * v[i]).collect()
            },
            rhs,
            1e-10,
            100_000,
        )
    }
}

/// Parameters of the random spectral-perturbation model behind
/// [`generate_path_ensemble`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationSpec {
    /// Standard deviation of the per-band log-magnitude perturbation.
    pub magnitude_db_std: f64,
    /// Number of geometrically spaced frequency bands the perturbation is
    /// drawn on.
    pub n_bands: usize,
    /// Standard deviation of the per-band phase jitter, radians.
    pub phase_jitter_std: f64,
    /// Length of the causal fade window applied to each perturbation
    /// filter, samples.
    pub window_length: usize,
    /// RNG seed; ensembles are a pure function of (nominal, spec, count).
    pub seed: u64,
}

impl VariationSpec {
    /// Defaults scaled to a given nominal path length.
    pub fn for_path_len(path_len: usize, seed: u64) -> Self {
        Self {
            magnitude_db_std: 3.0,
            n_bands: 24,
            phase_jitter_std: 0.2,
            window_length: (path_len / 4).max(8).min(path_len.max(1)),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.magnitude_db_std.is_finite() && self.magnitude_db_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "magnitude deviation must be non-negative and finite".into(),
            ));
        }
        if !(self.phase_jitter_std.is_finite() && self.phase_jitter_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "phase jitter must be non-negative and finite".into(),
            ));
        }
        if self.n_bands == 0 {
            return Err(Error::InvalidArgument(
                "perturbation model needs at least one band".into(),
            ));
        }
        if self.window_length == 0 {
            return Err(Error::InvalidArgument(
                "perturbation window must have at least one sample".into(),
            ));
        }
        Ok(())
    }
}

/// A nominal secondary path with an ordered set of labeled variants of
/// the same length and sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    nominal: ImpulseResponse,
    variants: Vec<ImpulseResponse>,
    labels: Vec<String>,
}

impl PathEnsemble {
    pub fn new(
        nominal: ImpulseResponse,
        variants: Vec<ImpulseResponse>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if variants.is_empty() {
            return Err(Error::InvalidArgument(
                "an ensemble needs at least one variant".into(),
            ));
        }
        if labels.len() != variants.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} variants",
                labels.len(),
                variants.len()
            )));
        }
        if variants
            .iter()
            .any(|v| v.len() != nominal.len() || v.sample_rate() != nominal.sample_rate())
        {
            return Err(Error::InvalidArgument(
                "variants must share the nominal path's length and sample rate".into(),
            ));
        }
        Ok(Self {
            nominal,
            variants,
            labels,
        })
    }

    pub fn nominal(&self) -> &ImpulseResponse {
        &self.nominal
    }

    pub fn variants(&self) -> &[ImpulseResponse] {
        &self.variants
    }

    pub fn variant(&self, j: usize) -> &ImpulseResponse {
        &self.variants[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    /// Element-wise mean of the variants, as a path of the same geometry.
    pub fn mean_variant(&self) -> ImpulseResponse {
        let mut mean = vec![0.0; self.nominal.len()];
        for v in &self.variants {
            for (m, t) in mean.iter_mut().zip(v.taps()) {
                *m += t / self.variants.len() as f64;
            }
        }
        ImpulseResponse::new(mean, self.nominal.sample_rate())
            .expect("mean of valid responses is valid")
    }
}

/// Generate `count` secondary-path variants around `nominal`.
///
/// Each variant is the nominal response filtered by a random perturbation:
/// a smooth log-magnitude curve drawn per band, interpolated across
/// frequency, realized as a minimum-phase filter with band-interpolated
/// phase jitter, brought to the time domain, faded to zero over
/// `window_length` samples, and convolved with the nominal (result
/// truncated to the nominal length). Deterministic given the variation's seed;
/// each variant has its own RNG stream, so the result is independent of
/// evaluation order.
pub fn generate_path_ensemble(
    nominal: &ImpulseResponse,
    spec: &VariationSpec,
    count: usize,
) -> Result<PathEnsemble> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument(
            "an ensemble needs at least one variant".into(),
        ));
    }
    if nominal.len() < spec.window_length {
        return Err(Error::InvalidArgument(format!(
            "nominal path of {} samples is shorter than the perturbation \
             window of {}",
            nominal.len(),
            spec.window_length
        )));
    }
    let mut variants = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for j in 0..count {
        let filter = perturbation_filter(spec, nominal.sample_rate(), j as u64);
        let taps = convolve(&filter, nominal.taps())?;
        variants.push(ImpulseResponse::new(taps, nominal.sample_rate())?);
        labels.push(format!("variant_{:02}", j + 1));
    }
    PathEnsemble::new(nominal.clone(), variants, labels)
}

/// One causal perturbation filter of `spec.window_length` taps.
pub(crate) fn perturbation_filter(spec: &VariationSpec, sample_rate: u32, stream: u64) -> Vec<f64> {
    if spec.magnitude_db_std == 0.0 && spec.phase_jitter_std == 0.0 {
        // No perturbation: exactly the identity filter.
        return vec![1.0];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream.wrapping_add(1));

    let n_fft = 2048usize.max(4 * spec.window_length).next_power_of_two();
    let half = n_fft / 2;
    let centers = band_centers_ln(sample_rate, spec.n_bands);

    // Per-band draws, clamped at 2.5σ so the overall gain stays inside
    // the documented ±3σ energy envelope even after windowing.
    let draw = |rng: &mut ChaCha8Rng, std: f64| -> Vec<f64> {
        let normal = Normal::new(0.0, std).expect("validated std");
        (0..spec.n_bands)
            .map(|_| {
                let x: f64 = normal.sample(rng);
                x.clamp(-2.5 * std, 2.5 * std)
            })
            .collect()
    };
    let gains_db = draw(&mut rng, spec.magnitude_db_std);
    let jitters = draw(&mut rng, spec.phase_jitter_std);

    // Log-magnitude per bin, interpolated over log frequency; kept
    // symmetric so the cepstrum below is real.
    let ln10_over_20 = std::f64::consts::LN_10 / 20.0;
    let mut log_mag = vec![0.0; n_fft];
    let mut jitter_phase = vec![0.0; half + 1];
    for i in 0..=half {
        let f = i as f64 * sample_rate as f64 / n_fft as f64;
        log_mag[i] = interp_log_f(&centers, &gains_db, f) * ln10_over_20;
        if i > 0 && i < n_fft {
            log_mag[n_fft - i] = log_mag[i];
        }
        jitter_phase[i] = interp_log_f(&centers, &jitters, f);
    }

    // Minimum-phase spectrum from the folded real cepstrum of ln|V|.
    let mut planner = FftPlanner::new();
    let inverse = planner.plan_fft_inverse(n_fft);
    let forward = planner.plan_fft_forward(n_fft);
    let mut cepstrum: Vec<Complex<f64>> = log_mag.iter().map(|&x| Complex::new(x, 0.0)).collect();
    inverse.process(&mut cepstrum);
    let scale = 1.0 / n_fft as f64;
    let mut folded = vec![Complex::new(0.0, 0.0); n_fft];
    folded[0] = cepstrum[0] * scale;
    folded[half] = cepstrum[half] * scale;
    for k in 1..half {
        folded[k] = cepstrum[k] * (2.0 * scale);
    }
    forward.process(&mut folded); // now ln V_min per bin

    let mut spectrum = vec![Complex::new(0.0, 0.0); n_fft];
    for i in 0..=half {
        let z = folded[i].exp();
        let value = if i == 0 || i == half {
            // DC and Nyquist of a real filter are real.
            Complex::new(z.re, 0.0)
        } else {
            z * Complex::from_polar(1.0, jitter_phase[i])
        };
        spectrum[i] = value;
        if i > 0 && i < half {
            spectrum[n_fft - i] = value.conj();
        }
    }
    let mut time = spectrum;
    inverse.process(&mut time);

    // Causal truncation with a raised-cosine fade to zero.
    let wl = spec.window_length;
    (0..wl)
        .map(|m| {
            let fade = if wl == 1 {
                1.0
            } else {
                0.5 * (1.0 + (PI * m as f64 / wl as f64).cos())
            };
            time[m].re * scale * fade
        })
        .collect()
}

/// Natural-log center frequencies of `n_bands` geometrically spaced bands
/// from `fs/64` up to 0.44·fs. The top band stays below Nyquist so the
/// spectrum's conjugate-symmetric mirror image cannot fold onto a band
/// center and inflate its deviation.
fn band_centers_ln(sample_rate: u32, n_bands: usize) -> Vec<f64> {
    let f_lo = sample_rate as f64 / 64.0;
    let f_hi = sample_rate as f64 * 0.44;
    if n_bands == 1 {
        return vec![(f_lo * f_hi).sqrt().ln()];
    }
    (0..n_bands)
        .map(|b| {
            let t = b as f64 / (n_bands - 1) as f64;
            (f_lo.ln() * (1.0 - t)) + (f_hi.ln() * t)
        })
        .collect()
}

/// Piecewise-linear interpolation of band values over log frequency, with
/// constant extrapolation beyond the outermost centers.
fn interp_log_f(centers_ln: &[f64], values: &[f64], f: f64) -> f64 {
    let lf = f.max(1e-6).ln();
    if lf <= centers_ln[0] {
        return values[0];
    }
    if lf >= *centers_ln.last().unwrap() {
        return *values.last().unwrap();
    }
    let hi = centers_ln.partition_point(|&c| c < lf);
    let lo = hi - 1;
    let t = (lf - centers_ln[lo]) / (centers_ln[hi] - centers_ln[lo]);
    values[lo] * (1.0 - t) + values[hi] * t
}

const ENSEMBLE_MANIFEST: &str = "ensemble.json";

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    sample_rate: u32,
    path_len: usize,
    labels: Vec<String>,
    nominal_file: String,
    variant_files: Vec<String>,
    /// Present when the ensemble was generated synthetically.
    generation: Option<VariationSpec>,
}

/// Store an ensemble as single-channel WAV files plus a JSON manifest.
pub fn save_ensemble(
    dir: &Path,
    ensemble: &PathEnsemble,
    generation: Option<&VariationSpec>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let write_ir = |name: &str, ir: &ImpulseResponse| -> Result<()> {
        let sig = MultichannelSignal::new(vec![ir.taps().to_vec()], ir.sample_rate())?;
        write_multichannel_wav(&dir.join(name), &sig, WavFormat::Float32)
    };
    write_ir("nominal.wav", ensemble.nominal())?;
    let mut variant_files = Vec::new();
    for (j, v) in ensemble.variants().iter().enumerate() {
        let name = format!("variant_{:02}.wav", j + 1);
        write_ir(&name, v)?;
        variant_files.push(name);
    }
    let manifest = EnsembleManifest {
        sample_rate: ensemble.nominal().sample_rate(),
        path_len: ensemble.nominal().len(),
        labels: ensemble.labels().to_vec(),
        nominal_file: "nominal.wav".into(),
        variant_files,
        generation: generation.copied(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(format!("cannot encode ensemble manifest: {e}")))?;
    fs::write(dir.join(ENSEMBLE_MANIFEST), json)?;
    Ok(())
}

/// Load an ensemble saved by [`save_ensemble`] (or assembled by hand in
/// the same layout, e.g. from measured responses).
pub fn load_ensemble(dir: &Path) -> Result<(PathEnsemble, Option<VariationSpec>)> {
    let manifest_path = dir.join(ENSEMBLE_MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Io(format!(
            "cannot read ensemble manifest {}: {e}",
            manifest_path.display()
        ))
    })?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Io(format!("malformed ensemble manifest: {e}")))?;
    let read_ir = |name: &str| -> Result<ImpulseResponse> {
        let sig = read_multichannel_wav(&dir.join(name))?;
        if sig.n_channels() != 1 {
            return Err(Error::Io(format!(
                "{name} should hold one channel, found {}",
                sig.n_channels()
            )));
        }
        if sig.len() != manifest.path_len || sig.sample_rate() != manifest.sample_rate {
            return Err(Error::Io(format!(
                "{name} does not match the manifest's length or sample rate"
            )));
        }
        ImpulseResponse::new(sig.into_channels().remove(0), manifest.sample_rate)
    };
    let nominal = read_ir(&manifest.nominal_file)?;
    let variants = manifest
        .variant_files
        .iter()
        .map(|f| read_ir(f))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = PathEnsemble::new(nominal, variants, manifest.labels)?;
    Ok((ensemble, manifest.generation))
}
