//! Assembly of the quadratic system behind the filter designs.
//!
//! The optimal stacked filter solves a symmetric positive-definite linear
//! system. Below a size threshold the system matrix is formed explicitly;
//! above it, only its action on a vector is kept, built from the
//! correlation, secondary-path, and relative-impulse-response operators,
//! and conjugate gradients does the solve. Both representations produce
//! the same equations, and everything except the regularizer is averaged
//! when several secondary-path candidates are supplied.

use nalgebra::DMatrix;

use crate::dsp::{convolve, convolve_full, BlockSecondaryOperator, ReirStack};
use crate::error::{Error, Result};

use super::correlation::CorrelationOperator;
use super::solve::{solve_spd_cg, solve_spd_dense};
use super::{DesignProblem, SolverOptions};

/// The four path-dependent pieces of the normal equations, before the
/// regularizer and the constraint weight enter.
pub(crate) struct QuadraticComponents {
    /// `Gᵀ R G`
    pub gram_r: DMatrix<f64>,
    /// `Gᵀ Hᵀ H G`
    pub gram_h: DMatrix<f64>,
    /// `Gᵀ R q`
    pub cross_r: Vec<f64>,
    /// `Gᵀ Hᵀ (α δ − H q)`
    pub cross_h: Vec<f64>,
}

/// Normal equations `lhs · w = rhs` for one design, either as an explicit
/// matrix or as a matrix-free operator with a conjugate-gradient solver.
#[derive(Debug)]
pub struct NormalEquations {
    lhs: LhsRepr,
    rhs: Vec<f64>,
    options: SolverOptions,
}

#[derive(Debug)]
enum LhsRepr {
    Dense(DMatrix<f64>),
    Free(FreeSystem),
}

/// Matrix-free left-hand side: applies the averaged
/// `Gᵀ(R + μHᵀH)G + B` without forming anything quadratic in the
/// unknown count.
#[derive(Debug)]
struct FreeSystem {
    correlation: CorrelationOperator,
    stack: ReirStack,
    paths: Vec<BlockSecondaryOperator>,
    beta_ff: f64,
    beta_fb: f64,
    mu: f64,
}

impl FreeSystem {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n_blocks = self.paths[0].n_blocks();
        let mut out = regularizer_apply(v, n_blocks, self.beta_ff, self.beta_fb);
        let scale = 1.0 / self.paths.len() as f64;
        for g in &self.paths {
            let gv = g.apply(v);
            let mut combined = self.correlation.apply(&gv);
            if self.mu > 0.0 {
                let hgv = self.stack.apply(&gv);
                let ht = self.stack.apply_transpose(&hgv);
                for (c, h) in combined.iter_mut().zip(ht) {
                    *c += self.mu * h;
                }
            }
            let back = g.apply_transpose(&combined);
            for (o, b) in out.iter_mut().zip(back) {
                *o += scale * b;
            }
        }
        out
    }
}

impl NormalEquations {
    /// Unknown count of the stacked filter.
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Action of the system matrix on a vector.
    pub fn apply_lhs(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "dimension mismatch");
        match &self.lhs {
            LhsRepr::Dense(m) => {
                let mut out = vec![0.0; v.len()];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &vj) in v.iter().enumerate() {
                        acc += m[(i, j)] * vj;
                    }
                    *o = acc;
                }
                out
            }
            LhsRepr::Free(sys) => sys.apply(v),
        }
    }

    /// The explicit system matrix, when one was formed.
    pub fn lhs_dense(&self) -> Option<&DMatrix<f64>> {
        match &self.lhs {
            LhsRepr::Dense(m) => Some(m),
            LhsRepr::Free(_) => None,
        }
    }

    /// Solve for the stacked filter coefficients and verify the residual.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let rhs_norm = self.rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            return Ok(vec![0.0; self.dim()]);
        }
        let x = match &self.lhs {
            LhsRepr::Dense(m) => solve_spd_dense(m, &self.rhs)?,
            LhsRepr::Free(sys) => solve_spd_cg(
                |v| sys.apply(v),
                &self.rhs,
                self.options.cg_rel_tolerance,
                self.options.cg_max_iters,
            )?,
        };
        let applied = self.apply_lhs(&x);
        let residual = applied
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual > 1e-8 * rhs_norm {
            return Err(Error::Numeric(format!(
                "solver residual {residual:.3e} exceeds 1e-8 of the right-hand \
                 side norm {rhs_norm:.3e}; increase the regularization strengths"
            )));
        }
        Ok(x)
    }
}

/// Build the normal equations for `problem`, averaging the quadratic and
/// linear pieces over the supplied secondary-path candidates (the
/// regularizer sits outside the average).
pub(crate) fn assemble(
    problem: &DesignProblem,
    paths: &[BlockSecondaryOperator],
    options: &SolverOptions,
) -> Result<NormalEquations> {
    validate_paths(problem, paths)?;
    let d_w = paths[0].in_dim();
    let n_blocks = paths[0].n_blocks();
    let scale = 1.0 / paths.len() as f64;
    let mu = problem.mu();

    let mut rhs = vec![0.0; d_w];
    for g in paths {
        let cross_r = cross_correlation(problem.input_correlation(), g, problem.q_index());
        let cross_h = cross_constraint(problem.reir_stack(), g, problem.alpha(), problem.delay());
        for i in 0..d_w {
            rhs[i] += scale * (-cross_r[i] + mu * cross_h[i]);
        }
    }

    let lhs = if d_w <= options.dense_threshold {
        let mut acc = DMatrix::zeros(d_w, d_w);
        for g in paths {
            let gram_r = gram_correlation(problem.input_correlation(), g);
            acc += gram_r * scale;
            if mu > 0.0 {
                let gram_h = gram_constraint(problem.reir_stack(), g);
                acc += gram_h * (scale * mu);
            }
        }
        let block_cols = paths[0].block_cols();
        for b in 0..n_blocks {
            let beta = if b + 1 == n_blocks {
                problem.beta_fb()
            } else {
                problem.beta_ff()
            };
            for i in 0..block_cols {
                acc[(b * block_cols + i, b * block_cols + i)] += beta;
            }
        }
        // Round-off from the two gram constructions can leave the matrix
        // asymmetric at machine precision; Cholesky needs exact symmetry.
        let sym = (&acc + acc.transpose()) * 0.5;
        LhsRepr::Dense(sym)
    } else {
        LhsRepr::Free(FreeSystem {
            correlation: problem.input_correlation().clone(),
            stack: problem.reir_stack().clone(),
            paths: paths.to_vec(),
            beta_ff: problem.beta_ff(),
            beta_fb: problem.beta_fb(),
            mu,
        })
    };

    Ok(NormalEquations {
        lhs,
        rhs,
        options: options.clone(),
    })
}

/// All four components for one secondary-path candidate, used to sweep the
/// constraint weight without re-deriving anything path-dependent.
pub(crate) fn quadratic_components(
    problem: &DesignProblem,
    g: &BlockSecondaryOperator,
) -> Result<QuadraticComponents> {
    validate_paths(problem, std::slice::from_ref(g))?;
    Ok(QuadraticComponents {
        gram_r: gram_correlation(problem.input_correlation(), g),
        gram_h: gram_constraint(problem.reir_stack(), g),
        cross_r: cross_correlation(problem.input_correlation(), g, problem.q_index()),
        cross_h: cross_constraint(problem.reir_stack(), g, problem.alpha(), problem.delay()),
    })
}

/// Reassemble dense normal equations from cached components under a new
/// constraint weight. Components must share one unknown count.
pub(crate) fn equations_from_components(
    components: &[&QuadraticComponents],
    beta_ff: f64,
    beta_fb: f64,
    mu: f64,
    n_blocks: usize,
    options: &SolverOptions,
) -> NormalEquations {
    let d_w = components[0].cross_r.len();
    let block_cols = d_w / n_blocks;
    let scale = 1.0 / components.len() as f64;
    let mut acc = DMatrix::zeros(d_w, d_w);
    let mut rhs = vec![0.0; d_w];
    for c in components {
        acc += &c.gram_r * scale;
        if mu > 0.0 {
            acc += &c.gram_h * (scale * mu);
        }
        for (i, r) in rhs.iter_mut().enumerate() {
            *r += scale * (-c.cross_r[i] + mu * c.cross_h[i]);
        }
    }
    for b in 0..n_blocks {
        let beta = if b + 1 == n_blocks { beta_fb } else { beta_ff };
        for i in 0..block_cols {
            acc[(b * block_cols + i, b * block_cols + i)] += beta;
        }
    }
    let sym = (&acc + acc.transpose()) * 0.5;
    NormalEquations {
        lhs: LhsRepr::Dense(sym),
        rhs,
        options: options.clone(),
    }
}

fn validate_paths(problem: &DesignProblem, paths: &[BlockSecondaryOperator]) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one secondary-path candidate is required".into(),
        ));
    }
    let first = &paths[0];
    for g in paths {
        if g.n_blocks() != first.n_blocks() || g.in_dim() != first.in_dim() {
            return Err(Error::InvalidArgument(
                "secondary-path candidates must share one shape".into(),
            ));
        }
        if g.out_dim() != problem.input_correlation().dim() {
            return Err(Error::InvalidArgument(format!(
                "secondary-path output dimension {} does not match the \
                 correlation dimension {}",
                g.out_dim(),
                problem.input_correlation().dim()
            )));
        }
        if g.n_blocks() != problem.reir_stack().n_blocks() {
            return Err(Error::InvalidArgument(format!(
                "secondary path has {} channel blocks but the relative \
                 impulse responses have {}",
                g.n_blocks(),
                problem.reir_stack().n_blocks()
            )));
        }
    }
    Ok(())
}

/// `β`-weighted identity blocks applied to a stacked filter vector:
/// feedforward blocks share one weight, the last (feedback) block its own.
pub(crate) fn regularizer_apply(
    v: &[f64],
    n_blocks: usize,
    beta_ff: f64,
    beta_fb: f64,
) -> Vec<f64> {
    let block = v.len() / n_blocks;
    let mut out = Vec::with_capacity(v.len());
    for (i, &x) in v.iter().enumerate() {
        let beta = if i / block + 1 == n_blocks {
            beta_fb
        } else {
            beta_ff
        };
        out.push(beta * x);
    }
    out
}

/// `Gᵀ R G`, exactly as the frame average defines it.
fn gram_correlation(correlation: &CorrelationOperator, g: &BlockSecondaryOperator) -> DMatrix<f64> {
    match correlation {
        CorrelationOperator::Dense { .. } => {
            let d_w = g.in_dim();
            let mut gram = DMatrix::zeros(d_w, d_w);
            for j in 0..d_w {
                let col = g.column(j);
                let rg = correlation.apply(&col);
                let back = g.apply_transpose(&rg);
                for i in 0..d_w {
                    gram[(i, j)] = back[i];
                }
            }
            symmetrized(gram)
        }
        CorrelationOperator::Frames {
            channels,
            block_len,
            start,
        } => gram_correlation_frames(channels, *block_len, *start, g),
    }
}

/// Frame form of `Gᵀ R G` via filtered references: entry
/// `((k,c),(k',c'))` is the frame average of `u_k(n−c)·u_k'(n−c')` with
/// `u_k` the input filtered by channel `k`'s composite kernel, so each
/// diagonal of each channel-pair block is one running-sum pass.
fn gram_correlation_frames(
    channels: &[Vec<f64>],
    block_len: usize,
    start: usize,
    g: &BlockSecondaryOperator,
) -> DMatrix<f64> {
    debug_assert_eq!(g.block_rows(), block_len);
    let n = channels[0].len();
    let n_blocks = g.n_blocks();
    let l_w = g.block_cols();
    let d_w = n_blocks * l_w;
    let n_frames = (n - start) as f64;
    let filtered: Vec<Vec<f64>> = (0..n_blocks)
        .map(|k| convolve(g.kernel(k), &channels[k]).expect("non-empty by construction"))
        .collect();
    let mut gram = DMatrix::zeros(d_w, d_w);
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n_blocks {
        for kp in k..n_blocks {
            let lag_lo = if k == kp { 0 } else { -(l_w as isize - 1) };
            for lag in lag_lo..l_w as isize {
                for m in 0..n {
                    let other = m as isize - lag;
                    let p = if other >= 0 && (other as usize) < n {
                        filtered[k][m] * filtered[kp][other as usize]
                    } else {
                        0.0
                    };
                    prefix[m + 1] = prefix[m] + p;
                }
                for c in 0..l_w {
                    let cp = c as isize + lag;
                    if cp < 0 || cp >= l_w as isize {
                        continue;
                    }
                    let lo = start - c;
                    let hi = n - 1 - c;
                    let s = (prefix[hi + 1] - prefix[lo]) / n_frames;
                    let row = k * l_w + c;
                    let col = kp * l_w + cp as usize;
                    gram[(row, col)] = s;
                    gram[(col, row)] = s;
                }
            }
        }
    }
    gram
}

/// `Gᵀ Hᵀ H G`. Each channel-pair block is Toeplitz in the column shifts,
/// with values given by the cross-correlation of the two composite
/// response-through-reir convolutions.
fn gram_constraint(stack: &ReirStack, g: &BlockSecondaryOperator) -> DMatrix<f64> {
    let n_blocks = g.n_blocks();
    let l_w = g.block_cols();
    let d_w = n_blocks * l_w;
    let convs: Vec<Vec<f64>> = (0..n_blocks)
        .map(|k| convolve_full(stack.block(k).filter().taps(), g.kernel(k)))
        .collect();
    let conv_len = convs[0].len();
    let mut gram = DMatrix::zeros(d_w, d_w);
    for k in 0..n_blocks {
        for kp in k..n_blocks {
            let mut reversed = convs[k].clone();
            reversed.reverse();
            let xcorr = convolve_full(&reversed, &convs[kp]);
            let lag_lo = if k == kp { 0 } else { -(l_w as isize - 1) };
            for lag in lag_lo..l_w as isize {
                // Entry ((k,c),(k',c+lag)) is Σ_u conv_k(u)·conv_k'(u−lag),
                // the cross-correlation evaluated at −lag.
                let idx = conv_len as isize - 1 - lag;
                let value = if idx >= 0 && (idx as usize) < xcorr.len() {
                    xcorr[idx as usize]
                } else {
                    0.0
                };
                for c in 0..l_w {
                    let cp = c as isize + lag;
                    if cp < 0 || cp >= l_w as isize {
                        continue;
                    }
                    let row = k * l_w + c;
                    let col = kp * l_w + cp as usize;
                    gram[(row, col)] = value;
                    gram[(col, row)] = value;
                }
            }
        }
    }
    gram
}

/// `Gᵀ R q` with `q` the unit vector selecting the current reference
/// sample inside the stacked frame.
fn cross_correlation(
    correlation: &CorrelationOperator,
    g: &BlockSecondaryOperator,
    q_index: usize,
) -> Vec<f64> {
    let mut q = vec![0.0; correlation.dim()];
    q[q_index] = 1.0;
    let rq = correlation.apply(&q);
    g.apply_transpose(&rq)
}

/// `Gᵀ Hᵀ (α δ − H q)`: the reir image of `q` is the feedback-channel tap
/// sequence itself, subtracted from the delayed, scaled unit target.
fn cross_constraint(
    stack: &ReirStack,
    g: &BlockSecondaryOperator,
    alpha: f64,
    delay: usize,
) -> Vec<f64> {
    let mut t = vec![0.0; stack.out_dim()];
    let taps = stack.block(stack.n_blocks() - 1).filter().taps();
    for (slot, &tap) in t.iter_mut().zip(taps) {
        *slot = -tap;
    }
    t[stack.row_for_lag(delay)] += alpha;
    g.apply_transpose(&stack.apply_transpose(&t))
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
