//! Matrix-free convolution operators.
//!
//! Filter-design assembles its normal equations from structured matrices
//! whose columns are shifted copies of FIR kernels. These types keep only
//! the kernels and apply matvec / transposed-matvec by convolution and
//! correlation, so nothing quadratic in the dimensions is ever stored.

use crate::dsp::conv::convolve_full;
use crate::error::{Error, Result};

/// Causal convolution matrix with `n_cols` input taps.
///
/// Column `c` is the kernel shifted down by `c` rows; the row count is
/// `kernel.len() + n_cols - 1`, covering the full transient.
#[derive(Debug, Clone)]
pub struct ToeplitzConvOperator {
    kernel: Vec<f64>,
    n_cols: usize,
}

impl ToeplitzConvOperator {
    pub fn new(kernel: Vec<f64>, n_cols: usize) -> Result<Self> {
        if kernel.is_empty() {
            return Err(Error::InvalidArgument(
                "convolution operator kernel must be non-empty".into(),
            ));
        }
        if n_cols == 0 {
            return Err(Error::InvalidArgument(
                "convolution operator must have at least one column".into(),
            ));
        }
        Ok(Self { kernel, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.kernel.len() + self.n_cols - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Matvec: full convolution of the kernel with `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_cols, "input length must match column count");
        convolve_full(&self.kernel, v)
    }

    /// Transposed matvec: the valid-range correlation
    /// `w[c] = sum_m kernel[m] u[m + c]`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_rows(), "input length must match row count");
        valid_correlation(&self.kernel, u, self.n_cols)
    }
}

/// `out[c] = sum_m kernel[m] u[m + c]` for `c` in `0..n_out`.
fn valid_correlation(kernel: &[f64], u: &[f64], n_out: usize) -> Vec<f64> {
    crate::dsp::conv::sliding_dot(kernel, u, n_out)
}

/// An FIR response with leading taps ahead of time zero.
///
/// `taps[i]` is the coefficient at lag `i - acausal_len`, so the first
/// `acausal_len` taps act on future input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReirFilter {
    taps: Vec<f64>,
    acausal_len: usize,
}

impl ReirFilter {
    pub fn new(taps: Vec<f64>, acausal_len: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument(
                "relative response must have at least one tap".into(),
            ));
        }
        if acausal_len >= taps.len() {
            return Err(Error::InvalidArgument(
                "relative response needs at least one causal tap".into(),
            ));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "relative response contains a non-finite tap".into(),
            ));
        }
        Ok(Self { taps, acausal_len })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Number of taps ahead of time zero.
    pub fn acausal_len(&self) -> usize {
        self.acausal_len
    }

    /// Number of taps at and after time zero.
    pub fn causal_len(&self) -> usize {
        self.taps.len() - self.acausal_len
    }

    pub fn to_operator(&self, n_cols: usize) -> Result<AcausalToeplitzOperator> {
        AcausalToeplitzOperator::new(self.clone(), n_cols)
    }
}

/// Convolution matrix for a [`ReirFilter`].
///
/// Same shifted-column structure as [`ToeplitzConvOperator`], but row `r`
/// corresponds to time `r - acausal_len` relative to the first input
/// sample, which is how the leading taps land ahead of the input.
#[derive(Debug, Clone)]
pub struct AcausalToeplitzOperator {
    filter: ReirFilter,
    n_cols: usize,
}

impl AcausalToeplitzOperator {
    pub fn new(filter: ReirFilter, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::InvalidArgument(
                "convolution operator must have at least one column".into(),
            ));
        }
        Ok(Self { filter, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.filter.taps().len() + self.n_cols - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn filter(&self) -> &ReirFilter {
        &self.filter
    }

    /// Row index that carries lag `lag` of the response to input sample 0.
    pub fn row_for_lag(&self, lag: usize) -> usize {
        self.filter.acausal_len() + lag
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_cols, "input length must match column count");
        convolve_full(self.filter.taps(), v)
    }

    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_rows(), "input length must match row count");
        valid_correlation(self.filter.taps(), u, self.n_cols)
    }
}

/// Block-diagonal stack of per-channel convolution operators sharing one
/// column count and one (zero-padded) kernel length.
///
/// Models simultaneous FIR filtering of several loudspeaker/driver feeds:
/// block `k` convolves input taps `k*block_cols..` with kernel `k`.
#[derive(Debug, Clone)]
pub struct BlockSecondaryOperator {
    kernels: Vec<Vec<f64>>,
    block_cols: usize,
}

impl BlockSecondaryOperator {
    /// All blocks share one kernel.
    pub fn uniform(kernel: &[f64], n_blocks: usize, block_cols: usize) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::InvalidArgument(
                "block operator must have at least one block".into(),
            ));
        }
        Self::per_channel(vec![kernel.to_vec(); n_blocks], block_cols)
    }

    /// One kernel per block; all kernels must already share a length
    /// (zero-pad shorter ones before calling).
    pub fn per_channel(kernels: Vec<Vec<f64>>, block_cols: usize) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidArgument(
                "block operator must have at least one block".into(),
            ));
        }
        let len = kernels[0].len();
        if len == 0 {
            return Err(Error::InvalidArgument(
                "block operator kernels must be non-empty".into(),
            ));
        }
        if kernels.iter().any(|k| k.len() != len) {
            return Err(Error::InvalidArgument(
                "block operator kernels must share one length".into(),
            ));
        }
        if block_cols == 0 {
            return Err(Error::InvalidArgument(
                "block operator must have at least one column per block".into(),
            ));
        }
        Ok(Self {
            kernels,
            block_cols,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.kernels.len()
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn block_rows(&self) -> usize {
        self.kernels[0].len() + self.block_cols - 1
    }

    pub fn in_dim(&self) -> usize {
        self.n_blocks() * self.block_cols
    }

    pub fn out_dim(&self) -> usize {
        self.n_blocks() * self.block_rows()
    }

    pub fn kernel(&self, k: usize) -> &[f64] {
        &self.kernels[k]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            v.len(),
            self.in_dim(),
            "input length must match column count"
        );
        let rows = self.block_rows();
        let mut out = vec![0.0; self.out_dim()];
        for (k, kernel) in self.kernels.iter().enumerate() {
            let seg = &v[k * self.block_cols..(k + 1) * self.block_cols];
            let block = convolve_full(kernel, seg);
            out[k * rows..(k + 1) * rows].copy_from_slice(&block);
        }
        out
    }

    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.out_dim(), "input length must match row count");
        let rows = self.block_rows();
        let mut out = vec![0.0; self.in_dim()];
        for (k, kernel) in self.kernels.iter().enumerate() {
            let seg = &u[k * rows..(k + 1) * rows];
            let block = valid_correlation(kernel, seg, self.block_cols);
            out[k * self.block_cols..(k + 1) * self.block_cols].copy_from_slice(&block);
        }
        out
    }

    /// Dense column `j`: kernel `j / block_cols` placed at row offset
    /// `j % block_cols` inside its block.
    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.in_dim());
        let k = j / self.block_cols;
        let c = j % self.block_cols;
        let rows = self.block_rows();
        let mut out = vec![0.0; self.out_dim()];
        let base = k * rows + c;
        out[base..base + self.kernels[k].len()].copy_from_slice(&self.kernels[k]);
        out
    }
}

/// Horizontal stack of per-channel [`AcausalToeplitzOperator`]s sharing a
/// column count and tap geometry: `apply` sums the per-block convolutions
/// into one output vector.
#[derive(Debug, Clone)]
pub struct ReirStack {
    blocks: Vec<AcausalToeplitzOperator>,
}

impl ReirStack {
    pub fn new(filters: Vec<ReirFilter>, block_cols: usize) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidArgument(
                "relative-response stack must have at least one block".into(),
            ));
        }
        let taps_len = filters[0].taps().len();
        let acausal = filters[0].acausal_len();
        if filters
            .iter()
            .any(|f| f.taps().len() != taps_len || f.acausal_len() != acausal)
        {
            return Err(Error::InvalidArgument(
                "relative responses in a stack must share tap geometry".into(),
            ));
        }
        let blocks = filters
            .into_iter()
            .map(|f| AcausalToeplitzOperator::new(f, block_cols))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_cols(&self) -> usize {
        self.blocks[0].n_cols()
    }

    pub fn in_dim(&self) -> usize {
        self.n_blocks() * self.block_cols()
    }

    pub fn out_dim(&self) -> usize {
        self.blocks[0].n_rows()
    }

    pub fn acausal_len(&self) -> usize {
        self.blocks[0].filter().acausal_len()
    }

    /// Output row carrying lag `lag` relative to input sample 0.
    pub fn row_for_lag(&self, lag: usize) -> usize {
        self.blocks[0].row_for_lag(lag)
    }

    pub fn block(&self, k: usize) -> &AcausalToeplitzOperator {
        &self.blocks[k]
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(
            u.len(),
            self.in_dim(),
            "input length must match column count"
        );
        let cols = self.block_cols();
        let mut out = vec![0.0; self.out_dim()];
        for (k, block) in self.blocks.iter().enumerate() {
            let seg = &u[k * cols..(k + 1) * cols];
            for (dst, src) in out.iter_mut().zip(block.apply(seg)) {
                *dst += src;
            }
        }
        out
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.out_dim(), "input length must match row count");
        let cols = self.block_cols();
        let mut out = vec![0.0; self.in_dim()];
        for (k, block) in self.blocks.iter().enumerate() {
            let seg = block.apply_transpose(v);
            out[k * cols..(k + 1) * cols].copy_from_slice(&seg);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Dense causal convolution matrix built straight from the definition:
    /// column c holds the kernel starting at row c.
    fn dense_conv_matrix(kernel: &[f64], n_cols: usize) -> DMatrix<f64> {
        let n_rows = kernel.len() + n_cols - 1;
        let mut m = DMatrix::zeros(n_rows, n_cols);
        for c in 0..n_cols {
            for (i, &g) in kernel.iter().enumerate() {
                m[(c + i, c)] = g;
            }
        }
        m
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(2685821657736338717).max(1);
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn toeplitz_apply_matches_dense_matrix() {
        let kernel = pseudo_random(7, 3);
        let op = ToeplitzConvOperator::new(kernel.clone(), 5).unwrap();
        let dense = dense_conv_matrix(&kernel, 5);
        let v = pseudo_random(5, 4);
        let got = op.apply(&v);
        let want = &dense * DVector::from_vec(v.clone());
        assert_eq!(got.len(), op.n_rows());
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn toeplitz_transpose_matches_dense_matrix() {
        let kernel = pseudo_random(6, 9);
        let op = ToeplitzConvOperator::new(kernel.clone(), 4).unwrap();
        let dense = dense_conv_matrix(&kernel, 4);
        let u = pseudo_random(op.n_rows(), 10);
        let got = op.apply_transpose(&u);
        let want = dense.transpose() * DVector::from_vec(u.clone());
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn acausal_operator_places_leading_taps_above_time_zero() {
        // Three acausal taps: the response to an impulse at input sample 0
        // starts at output row 0, which row_for_lag maps back to lag -3.
        let filter = ReirFilter::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        let op = filter.to_operator(4).unwrap();
        assert_eq!(op.row_for_lag(0), 3);
        let mut impulse = vec![0.0; 4];
        impulse[0] = 1.0;
        let out = op.apply(&impulse);
        assert_eq!(out.len(), 5 + 4 - 1);
        assert_eq!(&out[..5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        // Lag 0 of the response is tap index acausal_len.
        assert_eq!(out[op.row_for_lag(0)], 4.0);
    }

    #[test]
    fn block_operator_matches_blockwise_dense() {
        let k0 = pseudo_random(5, 21);
        let k1 = pseudo_random(5, 22);
        let op = BlockSecondaryOperator::per_channel(vec![k0.clone(), k1.clone()], 3).unwrap();
        assert_eq!(op.in_dim(), 6);
        assert_eq!(op.out_dim(), 2 * 7);

        let mut dense = DMatrix::zeros(op.out_dim(), op.in_dim());
        dense
            .view_mut((0, 0), (7, 3))
            .copy_from(&dense_conv_matrix(&k0, 3));
        dense
            .view_mut((7, 3), (7, 3))
            .copy_from(&dense_conv_matrix(&k1, 3));

        let v = pseudo_random(6, 23);
        let got = op.apply(&v);
        let want = &dense * DVector::from_vec(v.clone());
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }

        let u = pseudo_random(op.out_dim(), 24);
        let got_t = op.apply_transpose(&u);
        let want_t = dense.transpose() * DVector::from_vec(u.clone());
        for i in 0..got_t.len() {
            assert!((got_t[i] - want_t[i]).abs() < 1e-12);
        }

        for j in 0..op.in_dim() {
            let col = op.column(j);
            for i in 0..op.out_dim() {
                assert_eq!(col[i], dense[(i, j)], "column {j} row {i}");
            }
        }
    }

    #[test]
    fn reir_stack_matches_horizontal_dense_stack() {
        let acausal = 2;
        let f0 = ReirFilter::new(pseudo_random(6, 31), acausal).unwrap();
        let f1 = ReirFilter::new(pseudo_random(6, 32), acausal).unwrap();
        let f2 = ReirFilter::new(pseudo_random(6, 33), acausal).unwrap();
        let stack = ReirStack::new(vec![f0.clone(), f1.clone(), f2.clone()], 4).unwrap();
        assert_eq!(stack.in_dim(), 12);
        assert_eq!(stack.out_dim(), 6 + 4 - 1);

        let mut dense = DMatrix::zeros(stack.out_dim(), stack.in_dim());
        for (k, f) in [f0, f1, f2].iter().enumerate() {
            dense
                .view_mut((0, 4 * k), (stack.out_dim(), 4))
                .copy_from(&dense_conv_matrix(f.taps(), 4));
        }

        let u = pseudo_random(12, 34);
        let got = stack.apply(&u);
        let want = &dense * DVector::from_vec(u.clone());
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }

        let v = pseudo_random(stack.out_dim(), 35);
        let got_t = stack.apply_transpose(&v);
        let want_t = dense.transpose() * DVector::from_vec(v.clone());
        for i in 0..got_t.len() {
            assert!((got_t[i] - want_t[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stack_rejects_mismatched_geometry() {
        let f0 = ReirFilter::new(vec![1.0, 2.0, 3.0], 1).unwrap();
        let f1 = ReirFilter::new(vec![1.0, 2.0, 3.0], 2).unwrap();
        assert!(ReirStack::new(vec![f0.clone(), f1], 4).is_err());
        let f2 = ReirFilter::new(vec![1.0, 2.0], 1).unwrap();
        assert!(ReirStack::new(vec![f0, f2], 4).is_err());
    }

    #[test]
    fn reir_filter_validates() {
        assert!(ReirFilter::new(vec![], 0).is_err());
        assert!(ReirFilter::new(vec![1.0, 2.0], 2).is_err());
        assert!(ReirFilter::new(vec![1.0, f64::INFINITY], 1).is_err());
    }

    proptest! {
        /// <G v, u> == <v, G^T u> for the causal operator.
        #[test]
        fn toeplitz_adjoint_identity(
            kernel in proptest::collection::vec(-2.0f64..2.0, 1..10),
            n_cols in 1usize..10,
            seed in 0u64..1000,
        ) {
            let op = ToeplitzConvOperator::new(kernel, n_cols).unwrap();
            let v = pseudo_random(op.n_cols(), seed.wrapping_add(1));
            let u = pseudo_random(op.n_rows(), seed.wrapping_add(2));
            let lhs: f64 = op.apply(&v).iter().zip(&u).map(|(a, b)| a * b).sum();
            let rhs: f64 = op.apply_transpose(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        /// Same identity for the block-diagonal stack.
        #[test]
        fn block_adjoint_identity(
            klen in 1usize..8,
            n_blocks in 1usize..4,
            block_cols in 1usize..8,
            seed in 0u64..1000,
        ) {
            let kernels: Vec<Vec<f64>> = (0..n_blocks)
                .map(|k| pseudo_random(klen, seed.wrapping_add(k as u64)))
                .collect();
            let op = BlockSecondaryOperator::per_channel(kernels, block_cols).unwrap();
            let v = pseudo_random(op.in_dim(), seed.wrapping_add(100));
            let u = pseudo_random(op.out_dim(), seed.wrapping_add(200));
            let lhs: f64 = op.apply(&v).iter().zip(&u).map(|(a, b)| a * b).sum();
            let rhs: f64 = op.apply_transpose(&u).iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
