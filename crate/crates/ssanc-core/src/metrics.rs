//! Evaluation metrics: broadband noise reduction, intelligibility-weighted
//! spectral distortion of the passed-through speech, and signal-to-noise
//! ratio.
//!
//! Spectral distortion compares the speech component of the ear-drum error
//! against the target of a delayed, scaled reference-microphone speech
//! signal, band by band over one-third-octave bands weighted by a speech
//! band-importance function. Perceptual scores (PESQ, ESTOI, loudness) are
//! deliberately out of scope; report files reserve columns so external
//! tools can merge them.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Sentinel for "no measurable distortion anywhere": replaces −∞ dB.
pub const SD_FLOOR_DB: f64 = -100.0;

/// Relative power below which a band is treated as empty.
const BAND_POWER_FLOOR: f64 = 1e-10;

/// Embedded one-third-octave speech band-importance table; see the data
/// file for the citation.
const BAND_TABLE: &str = include_str!("../data/band_importance_v1.csv");
const BAND_TABLE_VERSION: &str = "band_importance_v1";

/// Welch periodogram-averaging parameters. The window is a periodic Hann
/// and segments overlap by half; segment length and sample rate together
/// fix the bin spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WelchSpec {
    pub segment_length: usize,
    pub sample_rate: u32,
}

impl WelchSpec {
    /// Segment length `sample_rate / 8` rounded to a power of two, giving
    /// comparable spectral resolution across sample rates.
    pub fn for_sample_rate(sample_rate: u32) -> Result<Self> {
        if sample_rate < 64 {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate} Hz is too low for spectral analysis"
            )));
        }
        let exponent = (sample_rate as f64 / 8.0).log2().round() as u32;
        Ok(Self {
            segment_length: 1usize << exponent,
            sample_rate,
        })
    }

    /// Spacing of the periodogram bins in Hz.
    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate as f64 / self.segment_length as f64
    }

    fn validate(&self) -> Result<()> {
        if self.segment_length < 8 || !self.segment_length.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "Welch segment length must be a power of two of at least 8, \
                 got {}",
                self.segment_length
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "Welch sample rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One-third-octave band layout with importance weights and the spectral
/// estimation parameters used to fill the bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandAnalysis {
    center_frequencies: Vec<f64>,
    importance_weights: Vec<f64>,
    band_powers: WelchSpec,
    table_version: String,
}

impl BandAnalysis {
    /// Build a band layout from explicit centers and weights. Weights must
    /// be non-negative and sum to one within 1e−6; they are renormalized
    /// to sum to one exactly.
    pub fn new(
        center_frequencies: Vec<f64>,
        importance_weights: Vec<f64>,
        band_powers: WelchSpec,
    ) -> Result<Self> {
        band_powers.validate()?;
        if center_frequencies.is_empty() || center_frequencies.len() != importance_weights.len() {
            return Err(Error::InvalidArgument(
                "band centers and weights must be non-empty lists of one length".into(),
            ));
        }
        if center_frequencies.windows(2).any(|w| w[1] <= w[0])
            || center_frequencies[0] <= 0.0
            || center_frequencies.iter().any(|f| !f.is_finite())
        {
            return Err(Error::InvalidArgument(
                "band centers must be positive, finite, and strictly increasing".into(),
            ));
        }
        if importance_weights
            .iter()
            .any(|w| *w < 0.0 || !w.is_finite())
        {
            return Err(Error::InvalidArgument(
                "band importance weights must be non-negative and finite".into(),
            ));
        }
        let sum: f64 = importance_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "band importance weights must sum to one, got {sum:.8}"
            )));
        }
        let importance_weights = importance_weights.iter().map(|w| w / sum).collect();
        Ok(Self {
            center_frequencies,
            importance_weights,
            band_powers,
            table_version: "custom".into(),
        })
    }

    /// The speech-intelligibility band-importance table shipped with the
    /// crate, restricted to bands that fit below the Nyquist frequency
    /// (a band is kept when its upper edge is at most `sample_rate / 2`),
    /// with weights renormalized over the kept bands.
    pub fn speech_intelligibility_default(sample_rate: u32) -> Result<Self> {
        let welch = WelchSpec::for_sample_rate(sample_rate)?;
        let nyquist = sample_rate as f64 / 2.0;
        let mut centers = Vec::new();
        let mut weights = Vec::new();
        for line in BAND_TABLE.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (f, w) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidArgument("malformed band table line".into()))?;
            let f: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument("malformed band center frequency".into()))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument("malformed band importance weight".into()))?;
            if f * 2f64.powf(1.0 / 6.0) <= nyquist {
                centers.push(f);
                weights.push(w);
            }
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "sample rate {sample_rate} Hz leaves no usable analysis band"
            )));
        }
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        let mut analysis = Self::new(centers, weights, welch)?;
        analysis.table_version = BAND_TABLE_VERSION.into();
        Ok(analysis)
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.center_frequencies
    }

    pub fn importance_weights(&self) -> &[f64] {
        &self.importance_weights
    }

    pub fn band_powers(&self) -> WelchSpec {
        self.band_powers
    }

    /// Identifier of the weight table used, recorded in reports.
    pub fn table_version(&self) -> &str {
        &self.table_version
    }

    pub fn n_bands(&self) -> usize {
        self.center_frequencies.len()
    }

    /// Lower and upper edge of band `b`, one-sixth octave off the center.
    pub fn band_edges(&self, b: usize) -> (f64, f64) {
        let c = self.center_frequencies[b];
        (c * 2f64.powf(-1.0 / 6.0), c * 2f64.powf(1.0 / 6.0))
    }
}

/// Metric bundle for one evaluated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValues {
    pub nr_db: f64,
    pub sd_db: f64,
    pub snr_db: f64,
    pub stable: bool,
}

/// Broadband noise reduction in dB: the power of the noise leakage
/// relative to the power of the noise component of the controlled error.
/// Positive values mean attenuation.
pub fn noise_reduction_db(p_v: &[f64], e_v: &[f64]) -> Result<f64> {
    if p_v.len() != e_v.len() {
        return Err(Error::InvalidArgument(format!(
            "noise leakage ({}) and controlled error ({}) lengths differ",
            p_v.len(),
            e_v.len()
        )));
    }
    let leak: f64 = p_v.iter().map(|x| x * x).sum();
    let err: f64 = e_v.iter().map(|x| x * x).sum();
    if leak == 0.0 {
        return Err(Error::UndefinedMetric(
            "noise reduction is undefined for a silent noise leakage".into(),
        ));
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (leak / err).log10())
}

/// Signal-to-noise ratio in dB of two equally long sequences.
pub fn snr_db(speech: &[f64], noise: &[f64]) -> Result<f64> {
    if speech.len() != noise.len() {
        return Err(Error::InvalidArgument(format!(
            "speech ({}) and noise ({}) lengths differ",
            speech.len(),
            noise.len()
        )));
    }
    let s: f64 = speech.iter().map(|x| x * x).sum();
    let n: f64 = noise.iter().map(|x| x * x).sum();
    if n == 0.0 {
        return Err(Error::UndefinedMetric(
            "signal-to-noise ratio is undefined for silent noise".into(),
        ));
    }
    Ok(10.0 * (s / n).log10())
}

/// Intelligibility-weighted spectral distortion of the speech component.
///
/// Forms the distortion signal `ε(n) = e_s(n) − α·x_ref(n−Δ)`, estimates
/// per-band powers of `ε` and of the target `α·x_ref(n−Δ)` by Welch
/// averaging aggregated into the one-third-octave bands of `bands`, and
/// returns the importance-weighted sum of per-band dB power ratios.
///
/// Bands where the target has essentially no power are excluded and the
/// remaining weights renormalized; if every band is empty the metric is
/// undefined. A kept band whose distortion power is more than 100 dB below
/// its target power carries no measurable distortion and contributes zero;
/// if that holds in every kept band the result is the [`SD_FLOOR_DB`]
/// sentinel.
pub fn sd_intellig_db(
    e_s: &[f64],
    x_ref_s: &[f64],
    alpha: f64,
    delay: usize,
    bands: &BandAnalysis,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(
            "the target scaling must be positive and finite".into(),
        ));
    }
    if e_s.len() != x_ref_s.len() {
        return Err(Error::InvalidArgument(format!(
            "error ({}) and reference ({}) lengths differ",
            e_s.len(),
            x_ref_s.len()
        )));
    }
    let n = e_s.len();
    let seg = bands.band_powers().segment_length;
    if n <= delay || n < seg {
        return Err(Error::InvalidArgument(format!(
            "sequences of {n} samples are too short for a passthrough delay \
             of {delay} and a spectral segment of {seg} samples"
        )));
    }

    // Target and distortion signals on the common time axis.
    let mut target = vec![0.0; n];
    for i in delay..n {
        target[i] = alpha * x_ref_s[i - delay];
    }
    let eps: Vec<f64> = e_s.iter().zip(&target).map(|(e, t)| e - t).collect();

    let psd_eps = welch_psd(&eps, seg);
    let psd_ref = welch_psd(&target, seg);
    let bin_hz = bands.band_powers().bin_spacing();

    // Band powers: sum of periodogram bins whose frequency falls inside
    // [lower_edge, upper_edge).
    let mut power_eps = vec![0.0; bands.n_bands()];
    let mut power_ref = vec![0.0; bands.n_bands()];
    for b in 0..bands.n_bands() {
        let (lo, hi) = bands.band_edges(b);
        let first = (lo / bin_hz).ceil() as usize;
        for k in first..psd_ref.len() {
            let f = k as f64 * bin_hz;
            if f >= hi {
                break;
            }
            power_eps[b] += psd_eps[k];
            power_ref[b] += psd_ref[k];
        }
    }

    // Exclude bands without measurable target power and renormalize.
    let max_ref = power_ref.iter().cloned().fold(0.0f64, f64::max);
    if max_ref <= 0.0 {
        return Err(Error::UndefinedMetric(
            "the delayed, scaled reference has no power in any analysis band".into(),
        ));
    }
    let kept: Vec<usize> = (0..bands.n_bands())
        .filter(|&b| power_ref[b] > BAND_POWER_FLOOR * max_ref)
        .collect();
    if kept.is_empty() {
        return Err(Error::UndefinedMetric(
            "every analysis band is below the reference power floor".into(),
        ));
    }
    let weight_sum: f64 = kept.iter().map(|&b| bands.importance_weights()[b]).sum();
    if weight_sum <= 0.0 {
        return Err(Error::UndefinedMetric(
            "the bands with reference power all have zero importance".into(),
        ));
    }

    let mut sd = 0.0;
    let mut any_measurable = false;
    for &b in &kept {
        if power_eps[b] <= BAND_POWER_FLOOR * power_ref[b] {
            continue; // no measurable distortion in this band
        }
        any_measurable = true;
        let weight = bands.importance_weights()[b] / weight_sum;
        sd += weight * 10.0 * (power_eps[b] / power_ref[b]).log10();
    }
    if !any_measurable {
        return Ok(SD_FLOOR_DB);
    }
    Ok(sd)
}

/// One-sided Welch power spectrum of `x` under the given analysis
/// parameters: periodic Hann window, half-overlapping segments, scaled so
/// the bins sum to the signal's mean-square power. Returns the bin
/// frequencies in hertz and the per-bin power, `segment_length/2 + 1`
/// values each.
pub fn welch_power_spectrum(x: &[f64], spec: &WelchSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate()?;
    if x.len() < spec.segment_length {
        return Err(Error::InvalidArgument(format!(
            "a {}-sample signal is shorter than one {}-sample analysis segment",
            x.len(),
            spec.segment_length
        )));
    }
    let power = welch_psd(x, spec.segment_length);
    let df = spec.bin_spacing();
    let frequencies = (0..power.len()).map(|i| i as f64 * df).collect();
    Ok((frequencies, power))
}

/// One-sided Welch periodogram: Hann window, half-segment hop. Returns
/// `seg/2 + 1` bins of averaged windowed power; the scaling is consistent
/// across calls with one segment length, so power ratios are meaningful.
fn welch_psd(x: &[f64], seg: usize) -> Vec<f64> {
    let hop = seg / 2;
    let n_segments = 1 + (x.len() - seg) / hop;
    let window: Vec<f64> = (0..seg)
        .map(|m| 0.5 * (1.0 - (std::f64::consts::TAU * m as f64 / seg as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg);
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    for s in 0..n_segments {
        let start = s * hop;
        for (m, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(x[start + m] * window[m], 0.0);
        }
        fft.process(&mut buf);
        for (k, slot) in acc.iter_mut().enumerate() {
            let scale = if k == 0 || k == seg / 2 { 1.0 } else { 2.0 };
            *slot += scale * buf[k].norm_sqr();
        }
    }
    let norm = 1.0 / (n_segments as f64 * window_power * seg as f64);
    for v in &mut acc {
        *v *= norm;
    }
    acc
}
