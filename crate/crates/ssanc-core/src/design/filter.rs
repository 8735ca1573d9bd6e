//! The stacked control filter and its on-disk form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{read_multichannel_wav, write_multichannel_wav, MultichannelSignal, WavFormat};
use crate::error::{Error, Result};

/// Per-channel FIR control filters: one filter per feedforward input plus a
/// final filter driven by the leakage estimate (the feedback channel).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedControlFilter {
    per_channel: Vec<Vec<f64>>,
}

impl StackedControlFilter {
    pub fn new(per_channel: Vec<Vec<f64>>) -> Result<Self> {
        if per_channel.is_empty() {
            return Err(Error::InvalidArgument(
                "control filter needs at least one channel".into(),
            ));
        }
        let len = per_channel[0].len();
        if len == 0 {
            return Err(Error::InvalidArgument(
                "control filter taps must be non-empty".into(),
            ));
        }
        if per_channel.iter().any(|w| w.len() != len) {
            return Err(Error::InvalidArgument(
                "all control filter channels must share one length".into(),
            ));
        }
        if per_channel.iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "control filter contains a non-finite tap".into(),
            ));
        }
        Ok(Self { per_channel })
    }

    /// Split a stacked coefficient vector into `n_channels` equal blocks.
    pub fn from_stacked(stacked: &[f64], n_channels: usize) -> Result<Self> {
        if n_channels == 0 || !stacked.len().is_multiple_of(n_channels) {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} coefficients into {n_channels} equal channels",
                stacked.len()
            )));
        }
        let len = stacked.len() / n_channels;
        Self::new(stacked.chunks_exact(len).map(|c| c.to_vec()).collect())
    }

    pub fn n_channels(&self) -> usize {
        self.per_channel.len()
    }

    /// Taps per channel.
    pub fn filter_len(&self) -> usize {
        self.per_channel[0].len()
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.per_channel[k]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.per_channel
    }

    /// Feedforward filters (all channels but the last).
    pub fn feedforward_channels(&self) -> &[Vec<f64>] {
        &self.per_channel[..self.per_channel.len() - 1]
    }

    /// The filter applied to the leakage estimate.
    pub fn feedback_channel(&self) -> &[f64] {
        self.per_channel.last().expect("non-empty by construction")
    }

    /// Concatenated coefficient vector, feedforward blocks first.
    pub fn stacked(&self) -> Vec<f64> {
        self.per_channel.iter().flatten().copied().collect()
    }

    pub fn energy(&self) -> f64 {
        self.per_channel.iter().flatten().map(|t| t * t).sum()
    }
}

/// Parameters recorded next to a saved filter so a simulator or a real-time
/// platform can reproduce the design context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMetadata {
    pub n_channels: usize,
    pub filter_len: usize,
    pub sample_rate: u32,
    pub mu: f64,
    pub alpha: f64,
    pub delay: usize,
    /// Feedforward processing latency the design assumed, samples.
    pub ff_latency: usize,
    /// Feedback processing latency the design assumed, samples.
    pub fb_latency: usize,
    pub beta_ff: f64,
    pub beta_fb: f64,
    /// Label(s) of the secondary path(s) the filter was designed on.
    pub design_labels: Vec<String>,
    channel_files: Vec<String>,
}

const FILTER_MANIFEST: &str = "filter.json";

fn channel_file_name(k: usize) -> String {
    format!("channel_{:02}.wav", k + 1)
}

/// Write a filter as a manifest plus one single-channel float32 WAV per
/// filter channel (coefficients stored as samples).
pub fn save_filter(dir: &Path, filter: &StackedControlFilter, meta: &FilterMetadata) -> Result<()> {
    if meta.n_channels != filter.n_channels() || meta.filter_len != filter.filter_len() {
        return Err(Error::InvalidArgument(format!(
            "metadata says {}x{len} but filter is {}x{}",
            meta.n_channels,
            filter.n_channels(),
            filter.filter_len(),
            len = meta.filter_len
        )));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("{}: cannot create directory: {e}", dir.display())))?;
    let mut meta = meta.clone();
    meta.channel_files = (0..filter.n_channels()).map(channel_file_name).collect();
    for (k, name) in meta.channel_files.iter().enumerate() {
        let sig = MultichannelSignal::new(vec![filter.channel(k).to_vec()], meta.sample_rate)?;
        write_multichannel_wav(&dir.join(name), &sig, WavFormat::Float32)?;
    }
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Io(format!("cannot encode filter manifest: {e}")))?;
    std::fs::write(dir.join(FILTER_MANIFEST), json)
        .map_err(|e| Error::Io(format!("{}: cannot write manifest: {e}", dir.display())))?;
    Ok(())
}

/// Load a filter saved by [`save_filter`], checking the manifest against the
/// coefficient data.
pub fn load_filter(dir: &Path) -> Result<(StackedControlFilter, FilterMetadata)> {
    let manifest_path = dir.join(FILTER_MANIFEST);
    let json = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Io(format!(
            "{}: cannot read manifest: {e}",
            manifest_path.display()
        ))
    })?;
    let meta: FilterMetadata = serde_json::from_str(&json).map_err(|e| {
        Error::Io(format!(
            "{}: malformed filter manifest: {e}",
            manifest_path.display()
        ))
    })?;
    if meta.channel_files.len() != meta.n_channels {
        return Err(Error::Io(format!(
            "{}: manifest lists {} channel files for {} channels",
            manifest_path.display(),
            meta.channel_files.len(),
            meta.n_channels
        )));
    }
    let mut per_channel = Vec::with_capacity(meta.n_channels);
    for name in &meta.channel_files {
        let sig = read_multichannel_wav(&dir.join(name))?;
        if sig.n_channels() != 1 || sig.len() != meta.filter_len {
            return Err(Error::Io(format!(
                "{}: coefficient file {name} is {}x{} but manifest declares 1x{}",
                dir.display(),
                sig.n_channels(),
                sig.len(),
                meta.filter_len
            )));
        }
        per_channel.push(sig.into_channels().pop().expect("one channel"));
    }
    let filter = StackedControlFilter::new(per_channel)?;
    Ok((filter, meta))
}

impl FilterMetadata {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        filter: &StackedControlFilter,
        sample_rate: u32,
        mu: f64,
        alpha: f64,
        delay: usize,
        ff_latency: usize,
        fb_latency: usize,
        beta_ff: f64,
        beta_fb: f64,
        design_labels: Vec<String>,
    ) -> Self {
        Self {
            n_channels: filter.n_channels(),
            filter_len: filter.filter_len(),
            sample_rate,
            mu,
            alpha,
            delay,
            ff_latency,
            fb_latency,
            beta_ff,
            beta_fb,
            design_labels,
            channel_files: Vec::new(),
        }
    }
}
