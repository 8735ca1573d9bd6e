//! Naive dense constructions used by the acceptance suite: explicit
//! matrices, explicit frame loops, and an LU-based design solver, all
//! written straight from the definitions so the production operator and
//! solver paths are checked against an independent formulation.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Relative L2 error of `a` against the reference `b`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Causal convolution matrix: column `c` holds the kernel starting at
/// row `c`, giving `kernel.len() + n_cols - 1` rows.
pub fn conv_matrix(kernel: &[f64], n_cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(kernel.len() + n_cols - 1, n_cols);
    for c in 0..n_cols {
        for (i, &g) in kernel.iter().enumerate() {
            m[(c + i, c)] = g;
        }
    }
    m
}

/// Block-diagonal matrix of per-channel convolution blocks sharing one
/// column count (kernels must share one length).
pub fn block_diag_matrix(kernels: &[Vec<f64>], block_cols: usize) -> DMatrix<f64> {
    let rows = kernels[0].len() + block_cols - 1;
    let mut m = DMatrix::zeros(kernels.len() * rows, kernels.len() * block_cols);
    for (k, kernel) in kernels.iter().enumerate() {
        let block = conv_matrix(kernel, block_cols);
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                m[(k * rows + r, k * block_cols + c)] = block[(r, c)];
            }
        }
    }
    m
}

/// Horizontal concatenation of per-channel convolution matrices (taps
/// must share one length).
pub fn hstack_conv_matrix(taps: &[Vec<f64>], block_cols: usize) -> DMatrix<f64> {
    let rows = taps[0].len() + block_cols - 1;
    let mut m = DMatrix::zeros(rows, taps.len() * block_cols);
    for (k, t) in taps.iter().enumerate() {
        let block = conv_matrix(t, block_cols);
        for r in 0..rows {
            for c in 0..block_cols {
                m[(r, k * block_cols + c)] = block[(r, c)];
            }
        }
    }
    m
}

/// Latency-folded per-channel kernels: the feedforward channels get the
/// path delayed by `ff` samples, the last (feedback) channel by `fb`,
/// with trailing zeros evening the lengths out.
pub fn folded_kernels(path: &[f64], n_channels: usize, ff: usize, fb: usize) -> Vec<Vec<f64>> {
    let max_latency = ff.max(fb);
    let fold = |latency: usize| {
        let mut kernel = vec![0.0; latency];
        kernel.extend_from_slice(path);
        kernel.resize(path.len() + max_latency, 0.0);
        kernel
    };
    let mut kernels = vec![fold(ff); n_channels - 1];
    kernels.push(fold(fb));
    kernels
}

/// Mean outer product of hop-1 delay-line frames: frame `t` (for `t`
/// from `block_len - 1` to the end) holds `x_k(t - r)` for channel `k`
/// and delay `r`, channel-major.
pub fn correlation_matrix(channels: &[Vec<f64>], block_len: usize) -> DMatrix<f64> {
    let n = channels[0].len();
    let dim = channels.len() * block_len;
    let start = block_len - 1;
    let mut m = DMatrix::zeros(dim, dim);
    let mut frame = DVector::zeros(dim);
    for t in start..n {
        for (k, ch) in channels.iter().enumerate() {
            for r in 0..block_len {
                frame[k * block_len + r] = ch[t - r];
            }
        }
        m += &frame * frame.transpose();
    }
    m / (n - start) as f64
}

/// One small random design instance, stated densely.
pub struct DenseDesign {
    /// Input correlation over the stacked frame.
    pub r: DMatrix<f64>,
    /// Horizontal stack of the relative-response convolution matrices.
    pub h: DMatrix<f64>,
    /// Latency-folded secondary-path matrices, one per candidate path.
    pub paths: Vec<DMatrix<f64>>,
    /// Unit vector selecting the current reference sample in the frame.
    pub q: DVector<f64>,
    /// Delayed, scaled passthrough target in response space.
    pub target: DVector<f64>,
    pub beta_ff: f64,
    pub beta_fb: f64,
    pub mu: f64,
    pub n_blocks: usize,
}

impl DenseDesign {
    /// Minimizer of the path-averaged design cost, solved by LU — a
    /// different factorization than the production solver uses.
    pub fn solve(&self) -> Vec<f64> {
        let d_w = self.paths[0].ncols();
        let mut lhs = DMatrix::zeros(d_w, d_w);
        let mut rhs = DVector::zeros(d_w);
        for g in &self.paths {
            let hg = &self.h * g;
            lhs += g.transpose() * &self.r * g + hg.transpose() * &hg * self.mu;
            let residual = &self.target - &self.h * &self.q;
            rhs += -(g.transpose() * &self.r * &self.q) + hg.transpose() * residual * self.mu;
        }
        lhs /= self.paths.len() as f64;
        rhs /= self.paths.len() as f64;
        let block = d_w / self.n_blocks;
        for i in 0..d_w {
            let beta = if i / block + 1 == self.n_blocks {
                self.beta_fb
            } else {
                self.beta_ff
            };
            lhs[(i, i)] += beta;
        }
        let solution = lhs.lu().solve(&rhs).expect("dense system is invertible");
        solution.as_slice().to_vec()
    }
}
