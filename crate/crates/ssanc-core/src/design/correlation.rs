//! Sample input-correlation estimation and its operator forms.
//!
//! The design equations need the correlation matrix of the stacked,
//! delay-lined input vector. Below a size threshold it is held densely;
//! above it, the raw channel signals are kept and the matrix action is
//! evaluated by FFT correlation, so the quadratic growth never
//! materializes.

use nalgebra::DMatrix;

use crate::dsp::{convolve, sliding_dot};
use crate::error::{Error, Result};

/// Default dimension up to which correlation matrices are stored densely.
pub const DENSE_CORRELATION_THRESHOLD: usize = 4096;

/// Symmetric positive-semidefinite correlation operator
/// `R = (1/F) Σ_n x(n) x(n)ᵀ` over stacked delay-line frames.
#[derive(Debug, Clone)]
pub enum CorrelationOperator {
    /// Explicit matrix, used below the size threshold and in oracles.
    Dense { matrix: DMatrix<f64> },
    /// Implicit frame product over per-channel signals: frame `n`
    /// (for `n` in `start..N`) holds `x_k(n - r)` for each channel `k`
    /// and delay `r` in `0..block_len`.
    Frames {
        channels: Vec<Vec<f64>>,
        block_len: usize,
        start: usize,
    },
}

impl CorrelationOperator {
    /// Average outer product of explicitly supplied frames.
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument(
                "correlation estimate needs at least one frame".into(),
            ));
        }
        let dim = frames[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("frames must be non-empty".into()));
        }
        if frames.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidArgument(
                "all frames must share one dimension".into(),
            ));
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        for frame in frames {
            for i in 0..dim {
                let fi = frame[i];
                if fi == 0.0 {
                    continue;
                }
                for j in i..dim {
                    matrix[(i, j)] += fi * frame[j];
                }
            }
        }
        let scale = 1.0 / frames.len() as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = matrix[(i, j)] * scale;
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(Self::Dense { matrix })
    }

    /// Hop-1 sliding-frame estimate over per-channel signals, starting at
    /// the first sample whose delay line is completely filled.
    ///
    /// Produces the same values as building every frame explicitly and
    /// calling [`CorrelationOperator::from_frames`]; the dense variant is
    /// chosen while `n_channels·block_len` stays within `dense_threshold`.
    pub fn from_signals(
        channels: &[Vec<f64>],
        block_len: usize,
        dense_threshold: usize,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument(
                "correlation estimate needs at least one channel".into(),
            ));
        }
        if block_len == 0 {
            return Err(Error::InvalidArgument(
                "block length must be positive".into(),
            ));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument(
                "all channels must share one length".into(),
            ));
        }
        if n < block_len {
            return Err(Error::InvalidArgument(format!(
                "signals of length {n} cannot fill a delay line of {block_len}"
            )));
        }
        let start = block_len - 1;
        if channels.len() * block_len <= dense_threshold {
            Ok(Self::Dense {
                matrix: dense_from_signals(channels, block_len, start),
            })
        } else {
            Ok(Self::Frames {
                channels: channels.to_vec(),
                block_len,
                start,
            })
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense { matrix } => matrix.nrows(),
            Self::Frames {
                channels,
                block_len,
                ..
            } => channels.len() * block_len,
        }
    }

    /// Number of frames averaged into the estimate.
    pub fn n_frames(&self) -> Option<usize> {
        match self {
            Self::Dense { .. } => None,
            Self::Frames {
                channels, start, ..
            } => Some(channels[0].len() - start),
        }
    }

    pub fn as_dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Dense { matrix } => Some(matrix),
            Self::Frames { .. } => None,
        }
    }

    /// Matrix-vector product `R v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "dimension mismatch");
        match self {
            Self::Dense { matrix } => {
                let mut out = vec![0.0; v.len()];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &vj) in v.iter().enumerate() {
                        acc += matrix[(i, j)] * vj;
                    }
                    *o = acc;
                }
                out
            }
            Self::Frames {
                channels,
                block_len,
                start,
            } => frames_apply(channels, *block_len, *start, v),
        }
    }

    /// Quadratic form `vᵀ R v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Exact dense `(1/F) Σ_n x(n)x(n)ᵀ` via per-lag running sums: for channels
/// `k, k'` and lag `τ = r' - r`, consecutive entries along a diagonal are
/// window sums of the one product sequence `x_k(m)·x_k'(m-τ)`, so each
/// diagonal costs O(N) instead of O(N·dim).
fn dense_from_signals(channels: &[Vec<f64>], block_len: usize, start: usize) -> DMatrix<f64> {
    let n = channels[0].len();
    let n_ch = channels.len();
    let dim = n_ch * block_len;
    let n_frames = (n - start) as f64;
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n_ch {
        for kp in k..n_ch {
            let lag_lo = if k == kp {
                0
            } else {
                -(block_len as isize - 1)
            };
            for lag in lag_lo..block_len as isize {
                // prefix[m+1] = Σ_{i<=m} x_k(i)·x_kp(i-lag), zero out of range.
                for m in 0..n {
                    let other = m as isize - lag;
                    let p = if other >= 0 && (other as usize) < n {
                        channels[k][m] * channels[kp][other as usize]
                    } else {
                        0.0
                    };
                    prefix[m + 1] = prefix[m] + p;
                }
                // Entry (k, r), (kp, r + lag): sum over m = n - r in
                // [start - r, N - 1 - r].
                for r in 0..block_len {
                    let rp = r as isize + lag;
                    if rp < 0 || rp >= block_len as isize {
                        continue;
                    }
                    let lo = start - r;
                    let hi = n - 1 - r;
                    let s = (prefix[hi + 1] - prefix[lo]) / n_frames;
                    let row = k * block_len + r;
                    let col = kp * block_len + rp as usize;
                    matrix[(row, col)] = s;
                    matrix[(col, row)] = s;
                }
            }
        }
    }
    matrix
}

/// Frame-product matvec without materializing anything quadratic:
/// `s(n) = x(n)ᵀ v` falls out of per-channel causal filtering, and the
/// result `(1/F) Σ_n s(n) x(n)` out of sliding dot products.
fn frames_apply(channels: &[Vec<f64>], block_len: usize, start: usize, v: &[f64]) -> Vec<f64> {
    let n = channels[0].len();
    let n_frames = (n - start) as f64;
    let mut s = vec![0.0; n];
    for (k, ch) in channels.iter().enumerate() {
        let seg = &v[k * block_len..(k + 1) * block_len];
        let filtered = convolve(seg, ch).expect("non-empty by construction");
        for (dst, src) in s.iter_mut().zip(filtered) {
            *dst += src;
        }
    }
    for slot in s.iter_mut().take(start) {
        *slot = 0.0;
    }
    let mut out = vec![0.0; v.len()];
    for (k, ch) in channels.iter().enumerate() {
        let dots = sliding_dot(ch, &s, block_len);
        for (dst, src) in out[k * block_len..(k + 1) * block_len].iter_mut().zip(dots) {
            *dst = src / n_frames;
        }
    }
    out
}

/// Largest eigenvalue of a symmetric positive-semidefinite operator by
/// power iteration, to relative accuracy 1e-6.
pub fn largest_eigenvalue(op: &CorrelationOperator) -> Result<f64> {
    power_iteration(|v| op.apply(v), op.dim())
}

/// Power iteration with a deterministic start vector and a Rayleigh-quotient
/// residual convergence test.
pub(crate) fn power_iteration<F>(apply: F, dim: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "eigenvalue of a zero-dimensional operator is undefined".into(),
        ));
    }
    const MAX_ITERS: usize = 50_000;
    const RESIDUAL_TOL: f64 = 5e-7;

    // Deterministic pseudo-random start so results are reproducible and the
    // start is not orthogonal to the leading eigenvector.
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 + 0.5
        })
        .collect();
    normalize(&mut v);

    let mut lambda = 0.0;
    for _ in 0..MAX_ITERS {
        let av = apply(&v);
        lambda = dot(&v, &av);
        if lambda <= 0.0 {
            // PSD operator acting as zero on the current iterate: the whole
            // spectrum below is zero too.
            return Ok(0.0);
        }
        let residual: f64 = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
            .sum::<f64>()
            .sqrt();
        if residual <= RESIDUAL_TOL * lambda {
            return Ok(lambda);
        }
        v = av;
        normalize(&mut v);
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge within {MAX_ITERS} iterations; \
         last Rayleigh quotient {lambda:.6e}"
    )))
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
