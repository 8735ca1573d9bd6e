//! Control-filter design for spatially selective active noise control.
//!
//! A hearable's stacked multichannel FIR filter is chosen to cancel
//! ambient noise at the ear drum while reproducing a delayed, scaled copy
//! of the sound arriving from one chosen direction. The direction enters
//! through relative impulse responses; robustness to secondary-path
//! uncertainty enters by averaging the design over a set of plausible
//! paths. Both reduce to one symmetric positive-definite linear solve.

mod assemble;
pub mod correlation;
pub mod filter;
#[cfg(test)]
pub(crate) mod reference;
mod solve;

pub use assemble::NormalEquations;
pub use correlation::{largest_eigenvalue, CorrelationOperator, DENSE_CORRELATION_THRESHOLD};
pub use filter::{load_filter, save_filter, FilterMetadata, StackedControlFilter};

pub(crate) use assemble::{equations_from_components, quadratic_components, QuadraticComponents};
pub(crate) use solve::{solve_spd_cg, solve_spd_dense};

use serde::{Deserialize, Serialize};

use crate::dsp::{BlockSecondaryOperator, ImpulseResponse, ReirStack};
use crate::error::{Error, Result};

/// Everything a single filter design needs besides the secondary path:
/// the input statistics, the spatial target, its regularization, and the
/// weight of the target-matching constraint.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    input_correlation: CorrelationOperator,
    reir_stack: ReirStack,
    beta_ff: f64,
    beta_fb: f64,
    mu: f64,
    alpha: f64,
    delay: usize,
}

impl DesignProblem {
    /// Validated construction.
    ///
    /// The correlation dimension must equal the reir stack's input
    /// dimension (both live on the stacked delay-line frame), the
    /// regularization weights must be strictly positive, the constraint
    /// weight and passthrough gain non-negative, and the passthrough
    /// delay must index a row of the reir output.
    pub fn new(
        input_correlation: CorrelationOperator,
        reir_stack: ReirStack,
        beta_ff: f64,
        beta_fb: f64,
        mu: f64,
        alpha: f64,
        delay: usize,
    ) -> Result<Self> {
        if input_correlation.dim() != reir_stack.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "correlation dimension {} does not match the reir stack \
                 input dimension {}",
                input_correlation.dim(),
                reir_stack.in_dim()
            )));
        }
        for (name, value) in [("feedforward", beta_ff), ("feedback", beta_fb)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} regularization weight must be a positive finite \
                     number, got {value}"
                )));
            }
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constraint weight must be non-negative and finite, got {mu}"
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "passthrough gain must be non-negative and finite, got {alpha}"
            )));
        }
        let max_delay = reir_stack.out_dim() - reir_stack.acausal_len();
        if delay >= max_delay {
            return Err(Error::InvalidArgument(format!(
                "passthrough delay {delay} does not fit the reir output \
                 (must be below {max_delay})"
            )));
        }
        Ok(Self {
            input_correlation,
            reir_stack,
            beta_ff,
            beta_fb,
            mu,
            alpha,
            delay,
        })
    }

    pub fn input_correlation(&self) -> &CorrelationOperator {
        &self.input_correlation
    }

    pub fn reir_stack(&self) -> &ReirStack {
        &self.reir_stack
    }

    pub fn beta_ff(&self) -> f64 {
        self.beta_ff
    }

    pub fn beta_fb(&self) -> f64 {
        self.beta_fb
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Copy of this problem with a different constraint weight.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(
            self.input_correlation.clone(),
            self.reir_stack.clone(),
            self.beta_ff,
            self.beta_fb,
            mu,
            self.alpha,
            self.delay,
        )
    }

    /// Index of the current reference sample inside the stacked frame:
    /// offset zero of the last (feedback) channel block.
    pub fn q_index(&self) -> usize {
        self.reir_stack.in_dim() - self.reir_stack.block_cols()
    }
}

/// Data-driven regularization weights: the feedforward weight is the
/// largest correlation eigenvalue over `beta_ff_divisor`, and the
/// feedback weight is `beta_fb_multiplier` times the feedforward one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizerRule {
    pub beta_ff_divisor: f64,
    pub beta_fb_multiplier: f64,
}

impl Default for RegularizerRule {
    fn default() -> Self {
        Self {
            beta_ff_divisor: 1e4,
            beta_fb_multiplier: 30.0,
        }
    }
}

impl RegularizerRule {
    /// Concrete `(β_ff, β_fb)` for a given largest eigenvalue.
    pub fn betas(&self, lambda_max: f64) -> Result<(f64, f64)> {
        if !(self.beta_ff_divisor.is_finite() && self.beta_ff_divisor > 0.0)
            || !(self.beta_fb_multiplier.is_finite() && self.beta_fb_multiplier > 0.0)
        {
            return Err(Error::InvalidArgument(
                "regularizer divisor and multiplier must be positive finite".into(),
            ));
        }
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cannot derive regularization weights from largest \
                 eigenvalue {lambda_max}; the input signals may be silent"
            )));
        }
        let beta_ff = lambda_max / self.beta_ff_divisor;
        Ok((beta_ff, self.beta_fb_multiplier * beta_ff))
    }
}

/// Knobs of the linear solver behind the designs.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Form the system matrix explicitly at or below this unknown count;
    /// above it, solve matrix-free by conjugate gradients.
    pub dense_threshold: usize,
    /// Relative residual target of the conjugate-gradient solve.
    pub cg_rel_tolerance: f64,
    /// Iteration cap of the conjugate-gradient solve.
    pub cg_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 4096,
            cg_rel_tolerance: 1e-10,
            cg_max_iters: 100_000,
        }
    }
}

/// Cost of a candidate filter, split into its three additive parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// Expected squared error signal at the ear.
    pub residual_power: f64,
    /// `β`-weighted squared filter norms.
    pub regularizer: f64,
    /// Weighted squared distance of the controlled response from the
    /// delayed, scaled passthrough target (already multiplied by the
    /// constraint weight).
    pub constraint: f64,
    pub total: f64,
}

/// Fold a secondary-path response and the two processing latencies into
/// per-channel effective kernels: each feedforward block delays the
/// response by the feedforward latency, the last block by the feedback
/// latency, and trailing zeros even the lengths out.
pub fn secondary_path_operator(
    path: &ImpulseResponse,
    n_channels: usize,
    filter_len: usize,
    ff_latency: usize,
    fb_latency: usize,
) -> Result<BlockSecondaryOperator> {
    if n_channels < 2 {
        return Err(Error::InvalidArgument(
            "need at least one feedforward channel plus the feedback channel".into(),
        ));
    }
    if filter_len == 0 {
        return Err(Error::InvalidArgument(
            "control filters must have at least one tap".into(),
        ));
    }
    if fb_latency == 0 {
        return Err(Error::InvalidArgument(
            "feedback latency must be at least one sample for a causal loop".into(),
        ));
    }
    let max_latency = ff_latency.max(fb_latency);
    let padded = |latency: usize| -> Vec<f64> {
        let mut kernel = vec![0.0; latency];
        kernel.extend_from_slice(path.taps());
        kernel.resize(path.len() + max_latency, 0.0);
        kernel
    };
    let mut kernels = vec![padded(ff_latency); n_channels - 1];
    kernels.push(padded(fb_latency));
    BlockSecondaryOperator::per_channel(kernels, filter_len)
}

/// Normal equations of the single-path design, for inspection or custom
/// solves.
pub fn assemble_normal_equations(
    problem: &DesignProblem,
    secondary: &BlockSecondaryOperator,
) -> Result<NormalEquations> {
    assemble_normal_equations_with(problem, secondary, &SolverOptions::default())
}

pub fn assemble_normal_equations_with(
    problem: &DesignProblem,
    secondary: &BlockSecondaryOperator,
    options: &SolverOptions,
) -> Result<NormalEquations> {
    assemble::assemble(problem, std::slice::from_ref(secondary), options)
}

/// Optimal stacked filter for one assumed secondary path.
pub fn design_soft(
    problem: &DesignProblem,
    secondary: &BlockSecondaryOperator,
) -> Result<StackedControlFilter> {
    design_soft_with(problem, secondary, &SolverOptions::default())
}

pub fn design_soft_with(
    problem: &DesignProblem,
    secondary: &BlockSecondaryOperator,
    options: &SolverOptions,
) -> Result<StackedControlFilter> {
    design_robust_with(problem, std::slice::from_ref(secondary), options)
}

/// Optimal stacked filter under secondary-path uncertainty: minimizes the
/// cost averaged over the supplied path candidates. With a single
/// candidate this is exactly the single-path design.
pub fn design_robust(
    problem: &DesignProblem,
    secondaries: &[BlockSecondaryOperator],
) -> Result<StackedControlFilter> {
    design_robust_with(problem, secondaries, &SolverOptions::default())
}

pub fn design_robust_with(
    problem: &DesignProblem,
    secondaries: &[BlockSecondaryOperator],
    options: &SolverOptions,
) -> Result<StackedControlFilter> {
    let equations = assemble::assemble(problem, secondaries, options)?;
    let stacked = equations.solve()?;
    StackedControlFilter::from_stacked(&stacked, secondaries[0].n_blocks())
}

/// Cost of a candidate filter under one assumed secondary path.
pub fn evaluate_cost(
    problem: &DesignProblem,
    secondary: &BlockSecondaryOperator,
    filter: &StackedControlFilter,
) -> Result<CostBreakdown> {
    if filter.n_channels() != secondary.n_blocks() || filter.filter_len() != secondary.block_cols()
    {
        return Err(Error::InvalidArgument(format!(
            "filter shape {}x{} does not match the secondary path's \
             {}x{}",
            filter.n_channels(),
            filter.filter_len(),
            secondary.n_blocks(),
            secondary.block_cols()
        )));
    }
    if secondary.out_dim() != problem.input_correlation().dim()
        || secondary.n_blocks() != problem.reir_stack().n_blocks()
    {
        return Err(Error::InvalidArgument(
            "secondary path does not match the problem's dimensions".into(),
        ));
    }
    let w = filter.stacked();
    let mut controlled = secondary.apply(&w);
    controlled[problem.q_index()] += 1.0;
    let residual_power = problem.input_correlation().quadratic(&controlled);

    let mut reproduced = problem.reir_stack().apply(&controlled);
    reproduced[problem.reir_stack().row_for_lag(problem.delay())] -= problem.alpha();
    let distance: f64 = reproduced.iter().map(|x| x * x).sum();
    let constraint = problem.mu() * distance;

    let block = w.len() / filter.n_channels();
    let mut regularizer = 0.0;
    for (i, &x) in w.iter().enumerate() {
        let beta = if i / block + 1 == filter.n_channels() {
            problem.beta_fb()
        } else {
            problem.beta_ff()
        };
        regularizer += beta * x * x;
    }

    Ok(CostBreakdown {
        residual_power,
        regularizer,
        constraint,
        total: residual_power + regularizer + constraint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ReirFilter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        problem: DesignProblem,
        paths: Vec<BlockSecondaryOperator>,
    }

    fn fixture(seed: u64, n_paths: usize, mu: f64) -> Fixture {
        fixture_with(seed, n_paths, mu, 1.5)
    }

    fn fixture_with(seed: u64, n_paths: usize, mu: f64, alpha: f64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_blocks = 3;
        let l_w = 4;
        let l_g = 2;
        let block_len = l_g + l_w - 1;
        let n = 80;
        let channels: Vec<Vec<f64>> = (0..n_blocks)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let correlation = CorrelationOperator::from_signals(&channels, block_len, 4096).unwrap();
        let filters: Vec<ReirFilter> = (0..n_blocks)
            .map(|_| {
                let taps: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                ReirFilter::new(taps, 2).unwrap()
            })
            .collect();
        let stack = ReirStack::new(filters, block_len).unwrap();
        let problem = DesignProblem::new(correlation, stack, 0.04, 0.12, mu, alpha, 2).unwrap();
        let paths = (0..n_paths)
            .map(|_| {
                let kernels: Vec<Vec<f64>> = (0..n_blocks)
                    .map(|_| (0..l_g).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                BlockSecondaryOperator::per_channel(kernels, l_w).unwrap()
            })
            .collect();
        Fixture { problem, paths }
    }

    fn rel_err(got: &[f64], want: &[f64]) -> f64 {
        let scale = want.iter().map(|x| x.abs()).fold(1e-300, f64::max);
        got.iter()
            .zip(want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn single_path_design_matches_dense_reference() {
        for seed in 0..6 {
            let fx = fixture(seed, 1, 1.0 + seed as f64);
            let filter = design_soft(&fx.problem, &fx.paths[0]).unwrap();
            let want = reference::solve_reference(&fx.problem, &fx.paths[..1]);
            assert!(
                rel_err(&filter.stacked(), &want) <= 1e-9,
                "seed {seed}: {:.3e}",
                rel_err(&filter.stacked(), &want)
            );
        }
    }

    #[test]
    fn silent_input_with_zero_constraint_weight_gives_zero_filter() {
        let n_blocks = 2;
        let block_len = 5;
        let channels = vec![vec![0.0; 50]; n_blocks];
        let correlation = CorrelationOperator::from_signals(&channels, block_len, 4096).unwrap();
        let filters = vec![
            ReirFilter::new(vec![0.3, 1.0, -0.2], 1).unwrap(),
            ReirFilter::new(vec![0.1, 0.8, 0.4], 1).unwrap(),
        ];
        let stack = ReirStack::new(filters, block_len).unwrap();
        let problem = DesignProblem::new(correlation, stack, 0.1, 0.3, 0.0, 1.0, 2).unwrap();
        let g = BlockSecondaryOperator::uniform(&[1.0, 0.5], n_blocks, 4).unwrap();
        let filter = design_soft(&problem, &g).unwrap();
        assert!(filter.stacked().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn robust_with_one_candidate_is_identical_to_single_path() {
        let fx = fixture(7, 1, 2.0);
        let soft = design_soft(&fx.problem, &fx.paths[0]).unwrap();
        let robust = design_robust(&fx.problem, &fx.paths).unwrap();
        assert_eq!(soft.stacked(), robust.stacked());
    }

    #[test]
    fn robust_over_identical_candidates_matches_single_path() {
        let fx = fixture(8, 1, 2.0);
        let copies = vec![fx.paths[0].clone(); 4];
        let soft = design_soft(&fx.problem, &fx.paths[0]).unwrap();
        let robust = design_robust(&fx.problem, &copies).unwrap();
        assert!(rel_err(&robust.stacked(), &soft.stacked()) <= 1e-12);
    }

    #[test]
    fn robust_design_minimizes_the_averaged_cost() {
        let fx = fixture(9, 3, 1.3);
        let averaged = |f: &StackedControlFilter| -> f64 {
            fx.paths
                .iter()
                .map(|g| evaluate_cost(&fx.problem, g, f).unwrap().total)
                .sum::<f64>()
                / fx.paths.len() as f64
        };
        let robust = design_robust(&fx.problem, &fx.paths).unwrap();
        let at_robust = averaged(&robust);
        for g in &fx.paths {
            let single = design_soft(&fx.problem, g).unwrap();
            assert!(at_robust <= averaged(&single) + 1e-12 * at_robust.abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let base = robust.stacked();
        for _ in 0..20 {
            let perturbed: Vec<f64> = base.iter().map(|x| x + rng.gen_range(-0.1..0.1)).collect();
            let other = StackedControlFilter::from_stacked(&perturbed, 3).unwrap();
            assert!(at_robust < averaged(&other));
        }
    }

    #[test]
    fn cost_gradient_vanishes_at_the_solution() {
        let fx = fixture(10, 1, 3.0);
        let g = &fx.paths[0];
        let filter = design_soft(&fx.problem, g).unwrap();
        let w = filter.stacked();
        let cost = evaluate_cost(&fx.problem, g, &filter).unwrap().total;
        for i in 0..w.len() {
            let h = 1e-6 * (1.0 + w[i].abs());
            let mut up = w.clone();
            up[i] += h;
            let mut down = w.clone();
            down[i] -= h;
            let f_up = evaluate_cost(
                &fx.problem,
                g,
                &StackedControlFilter::from_stacked(&up, 3).unwrap(),
            )
            .unwrap()
            .total;
            let f_down = evaluate_cost(
                &fx.problem,
                g,
                &StackedControlFilter::from_stacked(&down, 3).unwrap(),
            )
            .unwrap()
            .total;
            let grad = (f_up - f_down) / (2.0 * h);
            assert!(
                grad.abs() <= 1e-5 * (1.0 + cost.abs()),
                "coefficient {i}: finite-difference gradient {grad:.3e}"
            );
        }
    }

    #[test]
    fn target_distance_is_non_increasing_in_the_constraint_weight() {
        let fx = fixture(12, 1, 1.0);
        let g = &fx.paths[0];
        let mut previous = f64::INFINITY;
        for mu in [0.5, 2.0, 10.0, 100.0, 1000.0] {
            let problem = fx.problem.with_mu(mu).unwrap();
            let filter = design_soft(&problem, g).unwrap();
            let breakdown = evaluate_cost(&problem, g, &filter).unwrap();
            let distance = breakdown.constraint / mu;
            assert!(
                distance <= previous * (1.0 + 1e-12) + 1e-15,
                "distance grew from {previous:.6e} to {distance:.6e} at weight {mu}"
            );
            previous = distance;
        }
    }

    #[test]
    fn huge_constraint_weight_pushes_the_response_to_the_target() {
        let fx = fixture(13, 1, 1.0);
        let g = &fx.paths[0];
        let lax = design_soft(&fx.problem.with_mu(0.0).unwrap(), g).unwrap();
        let strict = design_soft(&fx.problem.with_mu(1e6).unwrap(), g).unwrap();
        let distance = |f: &StackedControlFilter| {
            let problem = fx.problem.with_mu(1.0).unwrap();
            evaluate_cost(&problem, g, f).unwrap().constraint
        };
        assert!(distance(&strict) < 1e-3 * distance(&lax));
    }

    #[test]
    fn zero_filter_cost_matches_the_closed_form() {
        let fx = fixture(14, 1, 2.5);
        let g = &fx.paths[0];
        let zero =
            StackedControlFilter::from_stacked(&vec![0.0; g.in_dim()], g.n_blocks()).unwrap();
        let breakdown = evaluate_cost(&fx.problem, g, &zero).unwrap();
        assert_eq!(breakdown.regularizer, 0.0);

        let r = reference::correlation_matrix(fx.problem.input_correlation());
        let q = fx.problem.q_index();
        let want_residual = r[(q, q)];
        assert!((breakdown.residual_power - want_residual).abs() <= 1e-12 * want_residual.abs());

        let stack = fx.problem.reir_stack();
        let taps = stack.block(stack.n_blocks() - 1).filter().taps();
        let mut t: Vec<f64> = taps.to_vec();
        t.resize(stack.out_dim(), 0.0);
        t[stack.row_for_lag(fx.problem.delay())] -= fx.problem.alpha();
        let want_constraint = fx.problem.mu() * t.iter().map(|x| x * x).sum::<f64>();
        assert!((breakdown.constraint - want_constraint).abs() <= 1e-12 * want_constraint.abs());
        assert_eq!(
            breakdown.total,
            breakdown.residual_power + breakdown.regularizer + breakdown.constraint
        );
    }

    #[test]
    fn dense_and_matrix_free_solves_agree() {
        let fx = fixture(15, 2, 4.0);
        let dense = design_robust(&fx.problem, &fx.paths).unwrap();
        let free_opts = SolverOptions {
            dense_threshold: 0,
            ..SolverOptions::default()
        };
        let free = design_robust_with(&fx.problem, &fx.paths, &free_opts).unwrap();
        assert!(rel_err(&free.stacked(), &dense.stacked()) <= 1e-6);
    }

    #[test]
    fn latencies_fold_into_padded_kernels() {
        let path = ImpulseResponse::new(vec![1.0, 2.0], 8000).unwrap();
        let g = secondary_path_operator(&path, 3, 4, 2, 3).unwrap();
        assert_eq!(g.n_blocks(), 3);
        assert_eq!(g.kernel(0), &[0.0, 0.0, 1.0, 2.0, 0.0]);
        assert_eq!(g.kernel(1), &[0.0, 0.0, 1.0, 2.0, 0.0]);
        assert_eq!(g.kernel(2), &[0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(g.block_rows(), 8);
    }

    #[test]
    fn latency_folding_rejects_degenerate_setups() {
        let path = ImpulseResponse::new(vec![1.0], 8000).unwrap();
        assert_eq!(
            secondary_path_operator(&path, 1, 4, 0, 1)
                .unwrap_err()
                .exit_code(),
            2
        );
        assert_eq!(
            secondary_path_operator(&path, 3, 0, 0, 1)
                .unwrap_err()
                .exit_code(),
            2
        );
        assert_eq!(
            secondary_path_operator(&path, 3, 4, 0, 0)
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn regularizer_rule_defaults_scale_from_the_eigenvalue() {
        let rule = RegularizerRule::default();
        let (bff, bfb) = rule.betas(5.0).unwrap();
        assert_eq!(bff, 5.0 / 1e4);
        assert_eq!(bfb, 30.0 * bff);
        assert_eq!(rule.betas(0.0).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn problem_construction_rejects_bad_parameters() {
        let fx = fixture(16, 1, 1.0);
        let corr = fx.problem.input_correlation().clone();
        let stack = fx.problem.reir_stack().clone();
        let build = |bff: f64, bfb: f64, mu: f64, alpha: f64, delay: usize| {
            DesignProblem::new(corr.clone(), stack.clone(), bff, bfb, mu, alpha, delay)
        };
        assert_eq!(build(0.0, 0.1, 1.0, 1.0, 2).unwrap_err().exit_code(), 2);
        assert_eq!(build(0.1, -1.0, 1.0, 1.0, 2).unwrap_err().exit_code(), 2);
        assert_eq!(build(0.1, 0.1, -0.5, 1.0, 2).unwrap_err().exit_code(), 2);
        assert_eq!(build(0.1, 0.1, 1.0, -1.0, 2).unwrap_err().exit_code(), 2);
        let too_far = stack.out_dim() - stack.acausal_len();
        assert_eq!(
            build(0.1, 0.1, 1.0, 1.0, too_far).unwrap_err().exit_code(),
            2
        );
        assert!(build(0.1, 0.1, 0.0, 0.0, too_far - 1).is_ok());
    }
}
