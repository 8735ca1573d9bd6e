//! FIR/convolution primitives, Toeplitz and block-diagonal operators, and
//! multichannel WAV I/O.
//!
//! Everything here is pure and operates on `f64` buffers; operators are
//! stored as kernels and applied matrix-free.

mod conv;
mod operators;
mod wav;

pub(crate) use conv::sliding_dot;
pub use conv::{convolve, convolve_full, fft_convolve_full};
pub use operators::{
    AcausalToeplitzOperator, BlockSecondaryOperator, ReirFilter, ReirStack, ToeplitzConvOperator,
};
pub use wav::{read_multichannel_wav, write_multichannel_wav, WavFormat};

use crate::error::{Error, Result};

/// A finite FIR response with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    coefficients: Vec<f64>,
    sample_rate: u32,
}

impl ImpulseResponse {
    /// Build an impulse response, checking that it is non-empty and finite.
    pub fn new(coefficients: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidArgument(
                "impulse response must have at least one tap".into(),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "impulse response contains a non-finite tap".into(),
            ));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        Ok(Self {
            coefficients,
            sample_rate,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    /// Zero-pad or truncate to `len` taps.
    pub fn resized(&self, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("cannot resize to zero taps".into()));
        }
        let mut taps = self.coefficients.clone();
        taps.resize(len, 0.0);
        Self::new(taps, self.sample_rate)
    }
}

/// A set of equal-length channels sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultichannelSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "signal must have at least one channel".into(),
            ));
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::InvalidArgument("channels must be non-empty".into()));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument(
                "all channels must have the same length".into(),
            ));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.channels[k]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Common channel length.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}
