//! Multichannel WAV read/write.
//!
//! Two encodings are supported: 16-bit PCM (for audition) and 32-bit IEEE
//! float (for lossless filter/response storage). Samples are interleaved
//! frame by frame as usual.

use std::path::Path;

use crate::dsp::MultichannelSignal;
use crate::error::{Error, Result};

/// Sample encoding for [`write_multichannel_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    /// 16-bit PCM: scaled by 32768, rounded, clamped to the i16 range.
    /// Round-trip error is at most 2^-15 per sample on inputs in [-1, 1].
    Pcm16,
    /// 32-bit IEEE float; f32-representable values round-trip exactly.
    Float32,
}

pub fn write_multichannel_wav(
    path: &Path,
    signal: &MultichannelSignal,
    format: WavFormat,
) -> Result<()> {
    if signal.n_channels() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "cannot write {} channels to a WAV file (max {})",
            signal.n_channels(),
            u16::MAX
        )));
    }
    let spec = hound::WavSpec {
        channels: signal.n_channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Io(format!("{}: cannot create WAV file: {e}", path.display())))?;
    let write_err =
        |e: hound::Error| Error::Io(format!("{}: WAV write failed: {e}", path.display()));
    for n in 0..signal.len() {
        for channel in signal.channels() {
            match format {
                WavFormat::Pcm16 => {
                    let scaled = (channel[n] * 32768.0).round();
                    let clamped = scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                    writer.write_sample(clamped).map_err(write_err)?;
                }
                WavFormat::Float32 => {
                    writer.write_sample(channel[n] as f32).map_err(write_err)?;
                }
            }
        }
    }
    writer
        .finalize()
        .map_err(|e| Error::Io(format!("{}: WAV finalize failed: {e}", path.display())))
}

pub fn read_multichannel_wav(path: &Path) -> Result<MultichannelSignal> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Io(format!("{}: cannot read WAV file: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(Error::Io(format!(
            "{}: invalid channel count 0",
            path.display()
        )));
    }
    let declared = reader.len() as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(Error::Io(format!(
                "{}: unsupported sample format {bits}-bit {format:?} \
                 (expected 16-bit Int or 32-bit Float)",
                path.display()
            )));
        }
    }
    .map_err(|e| Error::Io(format!("{}: corrupt WAV data: {e}", path.display())))?;
    if samples.len() != declared {
        return Err(Error::Io(format!(
            "{}: truncated WAV data: header declares {declared} samples, found {}",
            path.display(),
            samples.len()
        )));
    }
    let n_channels = spec.channels as usize;
    if samples.is_empty() || !samples.len().is_multiple_of(n_channels) {
        return Err(Error::Io(format!(
            "{}: WAV data length {} is not a positive multiple of {n_channels} channels",
            path.display(),
            samples.len()
        )));
    }
    let frames = samples.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for frame in samples.chunks_exact(n_channels) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    MultichannelSignal::new(channels, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn ramp_signal() -> MultichannelSignal {
        let a: Vec<f64> = (0..64).map(|i| (i as f64 - 32.0) / 40.0).collect();
        let b: Vec<f64> = (0..64)
            .map(|i| ((i * 7) % 13) as f64 / 13.0 - 0.5)
            .collect();
        MultichannelSignal::new(vec![a, b], 8000).unwrap()
    }

    #[test]
    fn float32_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f32.wav");
        // f32-representable values survive the f64 -> f32 -> f64 trip.
        let sig = MultichannelSignal::new(
            vec![
                vec![0.5, -0.25, 1.0, -1.0, 0.0],
                vec![2.0, -3.5, 0.125, 0.75, -0.0625],
            ],
            16000,
        )
        .unwrap();
        write_multichannel_wav(&path, &sig, WavFormat::Float32).unwrap();
        let back = read_multichannel_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        assert_eq!(back.channels(), sig.channels());
    }

    #[test]
    fn pcm16_round_trip_error_is_below_one_lsb() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pcm.wav");
        let sig = ramp_signal();
        write_multichannel_wav(&path, &sig, WavFormat::Pcm16).unwrap();
        let back = read_multichannel_wav(&path).unwrap();
        let bound = (2.0f64).powi(-15);
        for (orig, got) in sig.channels().iter().zip(back.channels()) {
            for (o, g) in orig.iter().zip(got) {
                assert!((o - g).abs() <= bound, "{o} -> {g}");
            }
        }
    }

    #[test]
    fn pcm16_full_scale_edges_stay_within_bound() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("edge.wav");
        let sig = MultichannelSignal::new(vec![vec![1.0, -1.0, 0.99997, -0.99997]], 8000).unwrap();
        write_multichannel_wav(&path, &sig, WavFormat::Pcm16).unwrap();
        let back = read_multichannel_wav(&path).unwrap();
        let bound = (2.0f64).powi(-15);
        for (o, g) in sig.channel(0).iter().zip(back.channel(0)) {
            assert!((o - g).abs() <= bound, "{o} -> {g}");
        }
    }

    #[test]
    fn truncated_file_is_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        write_multichannel_wav(&path, &ramp_signal(), WavFormat::Pcm16).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 40]).unwrap();
        let err = read_multichannel_wav(&path).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("truncated") || msg.contains("corrupt"),
            "unexpected message: {msg}"
        );
    }

    #[test]
    fn non_wav_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("not.wav");
        std::fs::write(&path, b"definitely not a RIFF file").unwrap();
        assert!(read_multichannel_wav(&path).is_err());
    }

    #[test]
    fn unsupported_bit_depth_names_the_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [1i32 << 10, -(1i32 << 12), 0] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let err = read_multichannel_wav(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported sample format"));
        assert!(err.to_string().contains("24"));
    }
}
