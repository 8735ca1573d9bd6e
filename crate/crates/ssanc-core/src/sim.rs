//! Sample-accurate closed-loop simulation of the controlled hearable.
//!
//! The loudspeaker feed is produced by the stacked control filter from
//! latency-delayed outer-microphone signals and the recursively estimated
//! leakage; the ear-drum error adds the true secondary-path response of
//! that feed to the leakage; the leakage estimate subtracts the internal
//! secondary-path model's response. The feedback branch forces a strict
//! sample recursion, so the loop runs sample by sample with the
//! feedforward branch precomputed. Acoustic feedback from the loudspeaker
//! back to the outer microphones is assumed perfectly cancelled and is
//! not modeled.

use crate::design::StackedControlFilter;
use crate::dsp::{convolve, ImpulseResponse, MultichannelSignal};
use crate::error::{Error, Result};

/// Latency and safety parameters of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    /// Processing delay on the outer-microphone (feedforward) inputs.
    pub ff_latency: usize,
    /// Processing delay on the leakage-estimate (feedback) input; must be
    /// at least one sample or the loop has no causal ordering.
    pub fb_latency: usize,
    /// Amplitude at which the run is declared unstable and truncated.
    pub instability_threshold: f64,
    /// Upper bound on the number of samples to simulate.
    pub max_samples: usize,
}

impl LoopConfig {
    /// Threshold rule of thumb: a million times the peak input amplitude.
    pub fn default_threshold(peak_input: f64) -> f64 {
        1e6 * peak_input.abs().max(1e-12)
    }

    fn validate(&self) -> Result<()> {
        if self.fb_latency == 0 {
            return Err(Error::Config(
                "feedback latency must be at least one sample; a zero-delay \
                 feedback path is an algebraic loop"
                    .into(),
            ));
        }
        if !(self.instability_threshold.is_finite() && self.instability_threshold > 0.0) {
            return Err(Error::Config(
                "instability threshold must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// The acoustic inputs of one scene: outer-microphone signals, the two
/// leakage components at the ear drum, and the speech-only part of the
/// outer microphones kept aside for component-wise evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSignals {
    outer_mics: MultichannelSignal,
    leakage_speech: Vec<f64>,
    leakage_noise: Vec<f64>,
    outer_speech: MultichannelSignal,
}

impl ScenarioSignals {
    pub fn new(
        outer_mics: MultichannelSignal,
        leakage_speech: Vec<f64>,
        leakage_noise: Vec<f64>,
        outer_speech: MultichannelSignal,
    ) -> Result<Self> {
        let n = outer_mics.len();
        if leakage_speech.len() != n || leakage_noise.len() != n || outer_speech.len() != n {
            return Err(Error::InvalidArgument(
                "all scenario sequences must share one length".into(),
            ));
        }
        if outer_speech.n_channels() != outer_mics.n_channels() {
            return Err(Error::InvalidArgument(format!(
                "speech-only outer signals have {} channels but the outer \
                 microphones have {}",
                outer_speech.n_channels(),
                outer_mics.n_channels()
            )));
        }
        if outer_speech.sample_rate() != outer_mics.sample_rate() {
            return Err(Error::InvalidArgument(
                "outer microphone components must share one sample rate".into(),
            ));
        }
        if leakage_speech
            .iter()
            .chain(&leakage_noise)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidArgument(
                "leakage signals must be finite".into(),
            ));
        }
        Ok(Self {
            outer_mics,
            leakage_speech,
            leakage_noise,
            outer_speech,
        })
    }

    pub fn outer_mics(&self) -> &MultichannelSignal {
        &self.outer_mics
    }

    /// Speech component of the ear-drum leakage.
    pub fn leakage_speech(&self) -> &[f64] {
        &self.leakage_speech
    }

    /// Noise component of the ear-drum leakage.
    pub fn leakage_noise(&self) -> &[f64] {
        &self.leakage_noise
    }

    /// Total leakage `p = p_s + p_v`.
    pub fn leakage_total(&self) -> Vec<f64> {
        self.leakage_speech
            .iter()
            .zip(&self.leakage_noise)
            .map(|(s, v)| s + v)
            .collect()
    }

    pub fn outer_speech(&self) -> &MultichannelSignal {
        &self.outer_speech
    }

    pub fn n_outer(&self) -> usize {
        self.outer_mics.n_channels()
    }

    pub fn len(&self) -> usize {
        self.outer_mics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer_mics.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.outer_mics.sample_rate()
    }

    /// The speech-only scene: speech outer channels, speech leakage.
    pub fn speech_component(&self) -> Self {
        Self {
            outer_mics: self.outer_speech.clone(),
            leakage_speech: self.leakage_speech.clone(),
            leakage_noise: vec![0.0; self.len()],
            outer_speech: self.outer_speech.clone(),
        }
    }

    /// The noise-only scene: outer channels minus their speech component,
    /// noise leakage.
    pub fn noise_component(&self) -> Self {
        let channels: Vec<Vec<f64>> = self
            .outer_mics
            .channels()
            .iter()
            .zip(self.outer_speech.channels())
            .map(|(full, speech)| full.iter().zip(speech).map(|(a, b)| a - b).collect())
            .collect();
        let silent = MultichannelSignal::new(
            vec![vec![0.0; self.len()]; self.n_outer()],
            self.sample_rate(),
        )
        .expect("geometry is valid by construction");
        Self {
            outer_mics: MultichannelSignal::new(channels, self.sample_rate())
                .expect("geometry is valid by construction"),
            leakage_speech: vec![0.0; self.len()],
            leakage_noise: self.leakage_noise.clone(),
            outer_speech: silent,
        }
    }

    /// Largest input amplitude across all channels and leakage components.
    pub fn peak_amplitude(&self) -> f64 {
        let mics = self
            .outer_mics
            .channels()
            .iter()
            .flatten()
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        self.leakage_speech
            .iter()
            .chain(&self.leakage_noise)
            .fold(mics, |a, &b| a.max(b.abs()))
    }
}

/// Signals produced by one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutput {
    /// Ear-drum error signal `e`.
    pub error: Vec<f64>,
    /// Loudspeaker feed `y`.
    pub loudspeaker: Vec<f64>,
    /// Recursive leakage estimate `p̂`.
    pub leakage_estimate: Vec<f64>,
    /// False when the run crossed the instability threshold and was
    /// truncated.
    pub stable: bool,
    /// First sample index whose amplitude crossed the threshold.
    pub divergence_sample: Option<usize>,
}

/// Run the closed loop sample by sample.
///
/// Per sample `n`, in order: the loudspeaker feed from latency-delayed
/// inputs, `y(n) = Σ_k (w_k*x_k)(n−ff) + (w_fb*p̂)(n−fb)`; the ear-drum
/// error `e(n) = p(n) + (g_true*y)(n)`; the leakage estimate
/// `p̂(n) = e(n) − (g_hat*y)(n)`. With a perfect model (`g_hat` equal to
/// `g_true`) the estimate reproduces the leakage exactly.
pub fn simulate_loop(
    filter: &StackedControlFilter,
    g_true: &ImpulseResponse,
    g_hat: &ImpulseResponse,
    signals: &ScenarioSignals,
    cfg: &LoopConfig,
) -> Result<LoopOutput> {
    cfg.validate()?;
    if filter.n_channels() != signals.n_outer() + 1 {
        return Err(Error::InvalidArgument(format!(
            "the control filter has {} channel blocks but the scene needs \
             {} (outer microphones plus the leakage-estimate channel)",
            filter.n_channels(),
            signals.n_outer() + 1
        )));
    }

    let n = signals.len().min(cfg.max_samples);
    let leakage = signals.leakage_total();

    // Feedforward branch is recursion-free: precompute the summed,
    // latency-shifted contribution of every outer channel.
    let mut feedforward = vec![0.0; n];
    for (k, channel) in signals.outer_mics().channels().iter().enumerate() {
        let filtered = convolve(filter.channel(k), channel)?;
        for (dst, src) in feedforward[cfg.ff_latency..].iter_mut().zip(filtered) {
            *dst += src;
        }
    }

    let w_fb = filter.feedback_channel();
    let true_taps = g_true.taps();
    let hat_taps = g_hat.taps();
    let threshold = cfg.instability_threshold;

    let mut y = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut p_hat: Vec<f64> = Vec::with_capacity(n);
    for sample in 0..n {
        // Feedback contribution from strictly past leakage estimates.
        let mut value = feedforward[sample];
        for (t, &tap) in w_fb.iter().enumerate() {
            let idx = sample as isize - cfg.fb_latency as isize - t as isize;
            if idx < 0 {
                break;
            }
            value += tap * p_hat[idx as usize];
        }
        if !value.is_finite() || value.abs() > threshold {
            return Ok(truncated(e, y, p_hat, sample));
        }
        y.push(value);

        let err = leakage[sample] + causal_dot(true_taps, &y);
        if !err.is_finite() || err.abs() > threshold {
            y.pop();
            return Ok(truncated(e, y, p_hat, sample));
        }
        e.push(err);
        p_hat.push(err - causal_dot(hat_taps, &y));
    }

    Ok(LoopOutput {
        error: e,
        loudspeaker: y,
        leakage_estimate: p_hat,
        stable: true,
        divergence_sample: None,
    })
}

/// `Σ_t taps[t] · history[last − t]`: one output sample of a causal FIR
/// fed with `history`, evaluated at its final sample.
fn causal_dot(taps: &[f64], history: &[f64]) -> f64 {
    let last = history.len() - 1;
    let reach = taps.len().min(history.len());
    let mut acc = 0.0;
    for (t, &tap) in taps.iter().enumerate().take(reach) {
        acc += tap * history[last - t];
    }
    acc
}

fn truncated(e: Vec<f64>, y: Vec<f64>, p_hat: Vec<f64>, sample: usize) -> LoopOutput {
    LoopOutput {
        error: e,
        loudspeaker: y,
        leakage_estimate: p_hat,
        stable: false,
        divergence_sample: Some(sample),
    }
}

/// The two component runs of one scene, exploiting the loop's linearity.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSimulation {
    /// Run on the speech-only scene.
    pub speech: LoopOutput,
    /// Run on the noise-only scene.
    pub noise: LoopOutput,
}

impl ComponentSimulation {
    /// Speech component of the ear-drum error.
    pub fn error_speech(&self) -> &[f64] {
        &self.speech.error
    }

    /// Noise component of the ear-drum error.
    pub fn error_noise(&self) -> &[f64] {
        &self.noise.error
    }

    /// Total error `e = e_s + e_v`; equals the full-mixture simulation by
    /// linearity. Truncated to the shorter component if one diverged.
    pub fn error_total(&self) -> Vec<f64> {
        self.speech
            .error
            .iter()
            .zip(&self.noise.error)
            .map(|(s, v)| s + v)
            .collect()
    }

    pub fn stable(&self) -> bool {
        self.speech.stable && self.noise.stable
    }
}

/// Simulate the speech-only and noise-only scenes separately.
///
/// The loop is linear and time-invariant for fixed filter and paths, so
/// the two component errors sum to the full-mixture error; instability in
/// either run marks the whole evaluation unstable.
pub fn simulate_components(
    filter: &StackedControlFilter,
    g_true: &ImpulseResponse,
    g_hat: &ImpulseResponse,
    signals: &ScenarioSignals,
    cfg: &LoopConfig,
) -> Result<ComponentSimulation> {
    let speech = simulate_loop(filter, g_true, g_hat, &signals.speech_component(), cfg)?;
    let noise = simulate_loop(filter, g_true, g_hat, &signals.noise_component(), cfg)?;
    Ok(ComponentSimulation { speech, noise })
}
