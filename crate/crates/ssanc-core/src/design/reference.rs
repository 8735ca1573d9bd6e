//! Dense, straight-from-the-definition constructions used only by tests.
//!
//! Everything here is deliberately naive — explicit matrices, explicit
//! frame loops — so the fast operator paths can be checked against an
//! independent formulation rather than against themselves.

use nalgebra::{DMatrix, DVector};

use crate::dsp::{BlockSecondaryOperator, ReirStack};

use super::correlation::CorrelationOperator;
use super::DesignProblem;

/// Causal convolution matrix: column `c` holds the kernel starting at row `c`.
pub(crate) fn conv_matrix(kernel: &[f64], n_cols: usize) -> DMatrix<f64> {
    let n_rows = kernel.len() + n_cols - 1;
    let mut m = DMatrix::zeros(n_rows, n_cols);
    for c in 0..n_cols {
        for (i, &g) in kernel.iter().enumerate() {
            m[(c + i, c)] = g;
        }
    }
    m
}

/// Block-diagonal dense form of a secondary-path operator.
pub(crate) fn secondary_matrix(g: &BlockSecondaryOperator) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(g.out_dim(), g.in_dim());
    for k in 0..g.n_blocks() {
        let block = conv_matrix(g.kernel(k), g.block_cols());
        let r0 = k * g.block_rows();
        let c0 = k * g.block_cols();
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                m[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }
    m
}

/// Horizontal concatenation of the per-channel reir convolution matrices.
pub(crate) fn stack_matrix(stack: &ReirStack) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(stack.out_dim(), stack.in_dim());
    for k in 0..stack.n_blocks() {
        let block = conv_matrix(stack.block(k).filter().taps(), stack.block_cols());
        let c0 = k * stack.block_cols();
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                m[(r, c0 + c)] = block[(r, c)];
            }
        }
    }
    m
}

/// Dense correlation matrix; the frame variant loops over every frame and
/// accumulates outer products directly.
pub(crate) fn correlation_matrix(corr: &CorrelationOperator) -> DMatrix<f64> {
    match corr {
        CorrelationOperator::Dense { matrix } => matrix.clone(),
        CorrelationOperator::Frames {
            channels,
            block_len,
            start,
        } => {
            let n = channels[0].len();
            let dim = channels.len() * block_len;
            let mut m = DMatrix::zeros(dim, dim);
            let mut frame = DVector::zeros(dim);
            for t in *start..n {
                for (k, ch) in channels.iter().enumerate() {
                    for r in 0..*block_len {
                        frame[k * block_len + r] = ch[t - r];
                    }
                }
                m += &frame * frame.transpose();
            }
            m / (n - start) as f64
        }
    }
}

/// Normal equations assembled densely from the definition, averaging the
/// path-dependent terms over `paths` and adding the regularizer once.
pub(crate) fn normal_equations(
    problem: &DesignProblem,
    paths: &[BlockSecondaryOperator],
) -> (DMatrix<f64>, DVector<f64>) {
    let r = correlation_matrix(problem.input_correlation());
    let h = stack_matrix(problem.reir_stack());
    let d_w = paths[0].in_dim();
    let mu = problem.mu();

    let mut q = DVector::zeros(r.nrows());
    q[problem.q_index()] = 1.0;
    let mut target = DVector::zeros(h.nrows());
    target[problem.reir_stack().row_for_lag(problem.delay())] = problem.alpha();

    let mut lhs = DMatrix::zeros(d_w, d_w);
    let mut rhs = DVector::zeros(d_w);
    for g in paths {
        let gm = secondary_matrix(g);
        let hg = &h * &gm;
        lhs += gm.transpose() * &r * &gm + hg.transpose() * &hg * mu;
        let residual_target = &target - &h * &q;
        rhs += -(gm.transpose() * &r * &q) + hg.transpose() * residual_target * mu;
    }
    lhs /= paths.len() as f64;
    rhs /= paths.len() as f64;

    let block = d_w / paths[0].n_blocks();
    for i in 0..d_w {
        let beta = if i / block + 1 == paths[0].n_blocks() {
            problem.beta_fb()
        } else {
            problem.beta_ff()
        };
        lhs[(i, i)] += beta;
    }
    (lhs, rhs)
}

/// Reference solution of the dense normal equations by LU decomposition —
/// a different factorization than the production solver uses.
pub(crate) fn solve_reference(
    problem: &DesignProblem,
    paths: &[BlockSecondaryOperator],
) -> Vec<f64> {
    let (lhs, rhs) = normal_equations(problem, paths);
    let solution = lhs
        .lu()
        .solve(&rhs)
        .expect("reference system is invertible");
    solution.as_slice().to_vec()
}
