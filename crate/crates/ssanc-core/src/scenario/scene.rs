//! Deterministic synthetic scenes: a speech-like source and interfering
//! noise sources propagated through sparse synthetic impulse responses to
//! the outer microphones and to the ear-drum leakage point, plus a
//! secondary-path ensemble for the same device.
//!
//! Real measured scenes (dummy-head recordings, measured paths) drop into
//! the same directory format; the generator exists so the full pipeline
//! runs and is testable without any measurement data.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    convolve, read_multichannel_wav, write_multichannel_wav, ImpulseResponse, MultichannelSignal,
    WavFormat,
};
use crate::error::{Error, Result};
use crate::metrics::snr_db;
use crate::path_model::{generate_path_ensemble, PathEnsemble, VariationSpec};
use crate::sim::ScenarioSignals;

/// Parameters of one synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Number of outer microphones per ear.
    pub n_outer_mics: usize,
    pub sample_rate: u32,
    pub duration_samples: usize,
    /// Outer microphone whose speech component is the passthrough
    /// reference (the entrance microphone).
    pub reference_index: usize,
    /// Number of interfering noise sources (at least one for a scene with
    /// noise).
    pub n_interferers: usize,
    /// Master gain of the noise sources; zero produces a noise-free scene
    /// and disables the leakage-ratio scaling.
    pub noise_gain: f64,
    /// Target speech-to-noise power ratio of the ear-drum leakage, dB.
    pub target_snr_db: f64,
    /// Length of the sparse propagation impulse responses, samples.
    pub propagation_taps: usize,
    /// Length of the loudspeaker-to-ear secondary path, samples.
    pub secondary_path_taps: usize,
    /// Number of secondary-path variants in the generated ensemble.
    pub n_path_variants: usize,
    /// Per-band log-magnitude deviation of the path ensemble, dB.
    pub path_sigma_db: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::desk_preset()
    }
}

impl SceneSpec {
    /// Small configuration that runs the full pipeline in seconds.
    pub fn desk_preset() -> Self {
        Self {
            n_outer_mics: 2,
            sample_rate: 8000,
            duration_samples: 8192,
            reference_index: 0,
            n_interferers: 2,
            noise_gain: 1.0,
            target_snr_db: -7.0,
            propagation_taps: 24,
            secondary_path_taps: 32,
            n_path_variants: 8,
            path_sigma_db: 1.0,
            seed: 1,
        }
    }

    /// Configuration mirroring the published hearable experiment's scale:
    /// four outer microphones per ear at 40 kHz, ten seconds of signal,
    /// an ensemble of 44 path variants.
    pub fn full_scale_preset() -> Self {
        Self {
            n_outer_mics: 4,
            sample_rate: 40_000,
            duration_samples: 400_000,
            reference_index: 0,
            n_interferers: 3,
            noise_gain: 1.0,
            target_snr_db: -7.0,
            propagation_taps: 120,
            secondary_path_taps: 1800,
            n_path_variants: 44,
            path_sigma_db: 3.0,
            seed: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_outer_mics == 0 {
            return Err(Error::Config(
                "a scene needs at least one outer microphone".into(),
            ));
        }
        if self.reference_index >= self.n_outer_mics {
            return Err(Error::Config(format!(
                "reference microphone {} is out of range for {} microphones",
                self.reference_index, self.n_outer_mics
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.propagation_taps < 2 || self.duration_samples < 4 * self.propagation_taps {
            return Err(Error::Config(
                "scene duration must be several times the propagation response length".into(),
            ));
        }
        if self.secondary_path_taps < 2 {
            return Err(Error::Config(
                "the secondary path needs at least two taps".into(),
            ));
        }
        if self.n_path_variants == 0 {
            return Err(Error::Config(
                "the path ensemble needs at least one variant".into(),
            ));
        }
        if !(self.noise_gain.is_finite() && self.noise_gain >= 0.0) {
            return Err(Error::Config(
                "noise gain must be non-negative and finite".into(),
            ));
        }
        if self.n_interferers == 0 && self.noise_gain > 0.0 {
            return Err(Error::Config(
                "a scene with noise needs at least one interferer".into(),
            ));
        }
        if !self.target_snr_db.is_finite() {
            return Err(Error::Config("target leakage ratio must be finite".into()));
        }
        Ok(())
    }

    /// Perturbation model behind the generated secondary-path ensemble;
    /// recorded next to the ensemble so it can be regenerated.
    pub fn path_variation(&self) -> VariationSpec {
        let mut variation =
            VariationSpec::for_path_len(self.secondary_path_taps, self.seed.wrapping_add(0xE0));
        variation.magnitude_db_std = self.path_sigma_db;
        variation
    }
}

/// One ear's scene: the closed-loop input signals plus the ground-truth
/// speech propagation responses needed to identify relative impulse
/// responses (to the outer microphones, and last the ear-drum leakage
/// response).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub signals: ScenarioSignals,
    /// Speech-source responses: one per outer microphone, then the
    /// response to the ear-drum leakage point.
    pub speech_irs: Vec<ImpulseResponse>,
    pub reference_index: usize,
    /// Generation parameters when the scene is synthetic.
    pub spec: Option<SceneSpec>,
}

impl Scenario {
    /// Speech component at the reference microphone — the passthrough
    /// target signal.
    pub fn reference_speech(&self) -> &[f64] {
        self.signals.outer_speech().channel(self.reference_index)
    }
}

/// Deterministic synthetic loudspeaker-to-ear response: a short direct
/// delay followed by a decaying diffuse tail.
pub fn synthetic_secondary_path(
    taps: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<ImpulseResponse> {
    if taps < 2 {
        return Err(Error::InvalidArgument(
            "the secondary path needs at least two taps".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xD1);
    let delay = rng.gen_range(1..=2.min(taps - 1));
    let mut g = vec![0.0; taps];
    g[delay] = 0.8;
    let decay = (taps as f64 / 4.0).max(2.0);
    for (i, tap) in g.iter_mut().enumerate().skip(delay + 1) {
        let falloff = (-((i - delay) as f64) / decay).exp();
        *tap = 0.5 * falloff * rng.gen_range(-1.0..1.0);
    }
    ImpulseResponse::new(g, sample_rate)
}

/// Sparse propagation response: a direct arrival plus a few decaying
/// echoes, all inside `taps` samples.
fn sparse_propagation_ir(
    taps: usize,
    attenuation: f64,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Result<ImpulseResponse> {
    let mut h = vec![0.0; taps];
    let direct = rng.gen_range(1..(taps / 3).max(2));
    h[direct] = attenuation * rng.gen_range(0.7..1.0);
    for echo in 0..3 {
        let at = rng.gen_range(direct..taps);
        h[at] += attenuation * 0.4 * 0.5f64.powi(echo) * rng.gen_range(-1.0..1.0);
    }
    ImpulseResponse::new(h, sample_rate)
}

/// Speech-like excitation: lowpass-filtered noise with a slow syllabic
/// amplitude modulation.
fn speech_like_source(len: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let pole = (-TAU * 1200.0 / fs).exp();
    let phase_a = rng.gen_range(0.0..TAU);
    let phase_b = rng.gen_range(0.0..TAU);
    let mut state = 0.0;
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            state = pole * state + (1.0 - pole) * rng.gen_range(-1.0f64..1.0);
            let syllabic = 0.5 + 0.5 * (TAU * 2.7 * t + phase_a).sin();
            let phrasal = 0.6 + 0.4 * (TAU * 0.5 * t + phase_b).sin();
            // Keep a floor so every band retains some speech power.
            (0.15 + 0.85 * syllabic * phrasal) * state * 8.0
        })
        .collect()
}

fn white_source(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Generate a deterministic synthetic scene and the matching
/// secondary-path ensemble.
///
/// The speech source and every interferer are propagated through sparse
/// synthetic responses to each outer microphone and to the ear-drum
/// leakage point. When noise is present, all noise components are scaled
/// by one common factor so the leakage speech-to-noise ratio hits the
/// target exactly.
pub fn generate_synthetic_scenario(spec: &SceneSpec) -> Result<(Scenario, PathEnsemble)> {
    spec.validate()?;
    let n = spec.duration_samples;
    let k = spec.n_outer_mics;

    let mut source_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    source_rng.set_stream(0xA0);
    let speech = speech_like_source(n, spec.sample_rate, &mut source_rng);
    let interferers: Vec<Vec<f64>> = (0..spec.n_interferers)
        .map(|_| white_source(n, &mut source_rng))
        .collect();

    let mut geom_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    geom_rng.set_stream(0xB0);
    // Speech responses: K microphones, then the leakage point.
    let mut speech_irs = Vec::with_capacity(k + 1);
    for _ in 0..k {
        speech_irs.push(sparse_propagation_ir(
            spec.propagation_taps,
            1.0,
            spec.sample_rate,
            &mut geom_rng,
        )?);
    }
    speech_irs.push(sparse_propagation_ir(
        spec.propagation_taps,
        0.5,
        spec.sample_rate,
        &mut geom_rng,
    )?);
    // Noise responses, same geometry layout per interferer.
    let mut noise_irs = Vec::with_capacity(spec.n_interferers);
    for _ in 0..spec.n_interferers {
        let mut per_mic = Vec::with_capacity(k + 1);
        for _ in 0..=k {
            let attenuation = if per_mic.len() == k { 0.5 } else { 1.0 };
            per_mic.push(sparse_propagation_ir(
                spec.propagation_taps,
                attenuation,
                spec.sample_rate,
                &mut geom_rng,
            )?);
        }
        noise_irs.push(per_mic);
    }

    // Propagate. Outer speech components and the speech leakage.
    let outer_speech: Vec<Vec<f64>> = (0..k)
        .map(|m| convolve(speech_irs[m].taps(), &speech))
        .collect::<Result<_>>()?;
    let leakage_speech = convolve(speech_irs[k].taps(), &speech)?;

    // Raw noise components at master gain.
    let mut outer_noise = vec![vec![0.0; n]; k];
    let mut leakage_noise = vec![0.0; n];
    if spec.noise_gain > 0.0 {
        for (i, interferer) in interferers.iter().enumerate() {
            for (m, acc) in outer_noise.iter_mut().enumerate() {
                let contribution = convolve(noise_irs[i][m].taps(), interferer)?;
                for (dst, src) in acc.iter_mut().zip(contribution) {
                    *dst += spec.noise_gain * src;
                }
            }
            let contribution = convolve(noise_irs[i][k].taps(), interferer)?;
            for (dst, src) in leakage_noise.iter_mut().zip(contribution) {
                *dst += spec.noise_gain * src;
            }
        }

        // Scale every noise component so the leakage ratio hits the
        // target exactly.
        let speech_power: f64 = leakage_speech.iter().map(|x| x * x).sum();
        let noise_power: f64 = leakage_noise.iter().map(|x| x * x).sum();
        if speech_power == 0.0 || noise_power == 0.0 {
            return Err(Error::Numeric(
                "cannot scale a silent source to a target leakage ratio".into(),
            ));
        }
        let measured = 10.0 * (speech_power / noise_power).log10();
        let scale = 10f64.powf((measured - spec.target_snr_db) / 20.0);
        for channel in outer_noise.iter_mut() {
            for x in channel.iter_mut() {
                *x *= scale;
            }
        }
        for x in leakage_noise.iter_mut() {
            *x *= scale;
        }
    }

    let outer_mics: Vec<Vec<f64>> = outer_speech
        .iter()
        .zip(&outer_noise)
        .map(|(s, v)| s.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect();

    let signals = ScenarioSignals::new(
        MultichannelSignal::new(outer_mics, spec.sample_rate)?,
        leakage_speech,
        leakage_noise,
        MultichannelSignal::new(outer_speech, spec.sample_rate)?,
    )?;

    let nominal = synthetic_secondary_path(
        spec.secondary_path_taps,
        spec.sample_rate,
        spec.seed.wrapping_add(0xC0),
    )?;
    let ensemble = generate_path_ensemble(&nominal, &spec.path_variation(), spec.n_path_variants)?;

    let scenario = Scenario {
        signals,
        speech_irs,
        reference_index: spec.reference_index,
        spec: Some(spec.clone()),
    };
    Ok((scenario, ensemble))
}

/// Read a scene description from a TOML file; missing keys take the desk
/// defaults.
pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: cannot read: {e}", path.display())))?;
    let spec: SceneSpec =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

/// On-disk manifest of a scenario directory.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioManifest {
    sample_rate: u32,
    n_outer_mics: usize,
    reference_index: usize,
    signal_file: String,
    /// Role of each channel of the signal file, in order.
    channel_roles: Vec<String>,
    /// Speech-source responses (outer microphones, then the leakage
    /// point), stored inline at full precision.
    speech_irs: Vec<Vec<f64>>,
    /// Measured speech-to-noise ratio of the stored leakage, dB, if the
    /// scene contains noise.
    leakage_snr_db: Option<f64>,
    generation: Option<SceneSpec>,
}

const SCENARIO_MANIFEST: &str = "scenario.json";
const SCENARIO_SIGNALS: &str = "signals.wav";

fn channel_roles(k: usize) -> Vec<String> {
    let mut roles = Vec::with_capacity(2 * k + 2);
    for m in 1..=k {
        roles.push(format!("outer_mic_{m}"));
    }
    for m in 1..=k {
        roles.push(format!("outer_speech_{m}"));
    }
    roles.push("leakage_speech".into());
    roles.push("leakage_noise".into());
    roles
}

/// Write a scenario as one multichannel WAV plus a JSON manifest mapping
/// channels to roles.
pub fn save_scenario(dir: &Path, scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("{}: cannot create directory: {e}", dir.display())))?;
    let s = &scenario.signals;
    let k = s.n_outer();
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(2 * k + 2);
    channels.extend(s.outer_mics().channels().iter().cloned());
    channels.extend(s.outer_speech().channels().iter().cloned());
    channels.push(s.leakage_speech().to_vec());
    channels.push(s.leakage_noise().to_vec());
    let bundle = MultichannelSignal::new(channels, s.sample_rate())?;
    write_multichannel_wav(&dir.join(SCENARIO_SIGNALS), &bundle, WavFormat::Float32)?;

    let leakage_snr_db = snr_db(s.leakage_speech(), s.leakage_noise()).ok();
    let manifest = ScenarioManifest {
        sample_rate: s.sample_rate(),
        n_outer_mics: k,
        reference_index: scenario.reference_index,
        signal_file: SCENARIO_SIGNALS.into(),
        channel_roles: channel_roles(k),
        speech_irs: scenario
            .speech_irs
            .iter()
            .map(|ir| ir.taps().to_vec())
            .collect(),
        leakage_snr_db,
        generation: scenario.spec.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(format!("cannot encode scenario manifest: {e}")))?;
    fs::write(dir.join(SCENARIO_MANIFEST), json)
        .map_err(|e| Error::Io(format!("{}: cannot write manifest: {e}", dir.display())))?;
    Ok(())
}

/// Load a scenario directory written by [`save_scenario`].
pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let manifest_path = dir.join(SCENARIO_MANIFEST);
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Io(format!("{}: cannot read: {e}", manifest_path.display())))?;
    let manifest: ScenarioManifest = serde_json::from_str(&json).map_err(|e| {
        Error::Io(format!(
            "{}: malformed manifest: {e}",
            manifest_path.display()
        ))
    })?;

    let bundle = read_multichannel_wav(&dir.join(&manifest.signal_file))?;
    let k = manifest.n_outer_mics;
    if bundle.n_channels() != 2 * k + 2 {
        return Err(Error::Io(format!(
            "signal file has {} channels but the manifest expects {}",
            bundle.n_channels(),
            2 * k + 2
        )));
    }
    if bundle.sample_rate() != manifest.sample_rate {
        return Err(Error::Io(
            "signal file and manifest disagree on the sample rate".into(),
        ));
    }
    if manifest.speech_irs.len() != k + 1 {
        return Err(Error::Io(format!(
            "manifest stores {} speech responses but {} are needed",
            manifest.speech_irs.len(),
            k + 1
        )));
    }
    if manifest.reference_index >= k {
        return Err(Error::Io(
            "manifest reference microphone is out of range".into(),
        ));
    }

    let mut channels = bundle.into_channels();
    let leakage_noise = channels.pop().expect("validated channel count");
    let leakage_speech = channels.pop().expect("validated channel count");
    let outer_speech = channels.split_off(k);
    let outer_mics = channels;
    let signals = ScenarioSignals::new(
        MultichannelSignal::new(outer_mics, manifest.sample_rate)?,
        leakage_speech,
        leakage_noise,
        MultichannelSignal::new(outer_speech, manifest.sample_rate)?,
    )?;
    let speech_irs = manifest
        .speech_irs
        .into_iter()
        .map(|taps| ImpulseResponse::new(taps, manifest.sample_rate))
        .collect::<Result<_>>()?;
    Ok(Scenario {
        signals,
        speech_irs,
        reference_index: manifest.reference_index,
        spec: manifest.generation,
    })
}
