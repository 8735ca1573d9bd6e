//! The three-case evaluation protocol: matched designs, cross-path
//! mismatched evaluation, and the robust filter, each swept over a grid
//! of constraint weights and aggregated into percentile statistics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    design_robust_with, design_soft_with, equations_from_components, largest_eigenvalue,
    quadratic_components, secondary_path_operator, CorrelationOperator, DesignProblem,
    QuadraticComponents, RegularizerRule, SolverOptions, StackedControlFilter,
};
use crate::dsp::{BlockSecondaryOperator, ImpulseResponse, ReirStack};
use crate::error::{Error, Result};
use crate::metrics::{noise_reduction_db, sd_intellig_db, snr_db, BandAnalysis};
use crate::path_model::{identify_reir_set, load_ensemble, PathEnsemble};
use crate::scenario::report::{percentile, AggregateRow, CaseReport, CaseRow, METRIC_COLUMNS};
use crate::scenario::scene::{load_scenario, Scenario};
use crate::sim::{simulate_components, LoopConfig};

/// The three evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    /// Designed and evaluated on the same path (oracle bound).
    Matched,
    /// Designed on one path, evaluated on every other path.
    Mismatched,
    /// One filter designed on the whole ensemble, evaluated on each path.
    Robust,
}

impl CaseKind {
    pub const ALL: [CaseKind; 3] = [CaseKind::Matched, CaseKind::Mismatched, CaseKind::Robust];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Matched => "matched",
            CaseKind::Mismatched => "mismatched",
            CaseKind::Robust => "robust",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(CaseKind::Matched),
            "mismatched" => Ok(CaseKind::Mismatched),
            "robust" => Ok(CaseKind::Robust),
            other => Err(Error::InvalidArgument(format!(
                "unknown case {other:?}; expected matched, mismatched, or robust"
            ))),
        }
    }
}

/// Full configuration of one study run, loadable from a TOML file with
/// every field optional (missing keys take the full-scale defaults).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    /// Directory holding the scene (see the scenario persistence format).
    pub scenario_ref: PathBuf,
    /// Directory holding the secondary-path ensemble.
    pub ensemble_ref: PathBuf,
    /// Constraint-weight grid; strictly positive.
    pub mu_grid: Vec<f64>,
    /// Which of the three protocols to run.
    pub cases: Vec<CaseKind>,
    /// Control filter taps per channel.
    pub filter_len: usize,
    /// Acausal taps of the identified relative impulse responses.
    pub reir_acausal_len: usize,
    /// Causal taps of the identified relative impulse responses.
    pub reir_causal_len: usize,
    /// Passthrough delay of the speech target, samples.
    pub passthrough_delay: usize,
    /// Passthrough gain of the speech target.
    pub target_gain: f64,
    pub regularizer: RegularizerRule,
    pub ff_latency: usize,
    pub fb_latency: usize,
    pub percentile_low: f64,
    pub percentile_high: f64,
    /// Worker threads; zero picks the machine default.
    pub workers: usize,
    pub seed: u64,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        Self::full_scale_defaults()
    }
}

/// Logarithmically spaced grid from `lo` to `hi` inclusive.
fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l0, l1) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1) as f64))
        .collect()
}

impl CaseStudyConfig {
    /// Defaults at the published experiment's scale: 1800-tap filters,
    /// 4500+4500-tap relative responses, a 240-sample passthrough delay
    /// at gain 2, and a constraint grid from 1 to 3000.
    pub fn full_scale_defaults() -> Self {
        Self {
            scenario_ref: PathBuf::from("scenario"),
            ensemble_ref: PathBuf::from("ensemble"),
            mu_grid: log_spaced(1.0, 3000.0, 13),
            cases: CaseKind::ALL.to_vec(),
            filter_len: 1800,
            reir_acausal_len: 4500,
            reir_causal_len: 4500,
            passthrough_delay: 240,
            target_gain: 2.0,
            regularizer: RegularizerRule::default(),
            ff_latency: 2,
            fb_latency: 3,
            percentile_low: 5.0,
            percentile_high: 95.0,
            workers: 0,
            seed: 1,
        }
    }

    /// Small dimensions that finish in seconds; pairs with
    /// [`SceneSpec::desk_preset`](crate::scenario::SceneSpec::desk_preset).
    pub fn desk_preset() -> Self {
        Self {
            mu_grid: log_spaced(1.0, 3000.0, 6),
            filter_len: 64,
            reir_acausal_len: 96,
            reir_causal_len: 96,
            passthrough_delay: 8,
            ..Self::full_scale_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(Error::Config("the constraint-weight grid is empty".into()));
        }
        if self.mu_grid.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config(
                "constraint weights must be strictly positive and finite".into(),
            ));
        }
        if self.cases.is_empty() {
            return Err(Error::InvalidArgument(
                "no cases selected; pick from matched, mismatched, robust".into(),
            ));
        }
        if self.filter_len == 0 {
            return Err(Error::Config(
                "control filters need at least one tap".into(),
            ));
        }
        if self.reir_causal_len == 0 {
            return Err(Error::Config(
                "relative responses need at least one causal tap".into(),
            ));
        }
        if !(self.target_gain > 0.0 && self.target_gain.is_finite()) {
            return Err(Error::Config(
                "the passthrough gain must be positive and finite".into(),
            ));
        }
        if self.fb_latency == 0 {
            return Err(Error::Config(
                "the feedback latency must be at least one sample".into(),
            ));
        }
        let (lo, hi) = (self.percentile_low, self.percentile_high);
        if !(lo > 0.0 && hi < 100.0 && lo < hi) {
            return Err(Error::Config(format!(
                "percentile levels must satisfy 0 < low < high < 100, got \
                 ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// Selected cases in canonical order, deduplicated.
    fn canonical_cases(&self) -> Vec<CaseKind> {
        CaseKind::ALL
            .iter()
            .copied()
            .filter(|c| self.cases.contains(c))
            .collect()
    }
}

/// Read a TOML study configuration; missing keys take the defaults.
pub fn load_config(path: &Path) -> Result<CaseStudyConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: cannot read: {e}", path.display())))?;
    let cfg: CaseStudyConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Which filter a run uses.
#[derive(Clone, Copy)]
enum DesignRef {
    Path(usize),
    Robust,
}

/// Everything the filter design needs, derived from a scene, an ensemble,
/// and the study configuration: the design problem (input statistics,
/// speech-target model, weights) plus the per-variant secondary-path
/// operators.
pub struct DesignSetup {
    pub problem: DesignProblem,
    pub operators: Vec<BlockSecondaryOperator>,
    pub beta_ff: f64,
    pub beta_fb: f64,
}

/// Build the design problem for a scene/ensemble pair: fold the latencies
/// into per-variant secondary-path operators, estimate the input
/// statistics over the outer microphones plus the leakage (the leakage
/// estimate equals the leakage under a perfect internal model, the
/// design-time assumption), derive the regularization weights from the
/// largest input eigenvalue, and identify the relative-impulse-response
/// stack of the speech target.
pub fn prepare_design(
    cfg: &CaseStudyConfig,
    scenario: &Scenario,
    ensemble: &PathEnsemble,
) -> Result<DesignSetup> {
    let signals = &scenario.signals;
    let k = signals.n_outer();
    let n_channels = k + 1;
    if ensemble.nominal().sample_rate() != signals.sample_rate() {
        return Err(Error::InvalidArgument(
            "ensemble and scenario sample rates differ".into(),
        ));
    }
    if scenario.speech_irs.len() != n_channels {
        return Err(Error::InvalidArgument(format!(
            "the scenario stores {} speech responses but {} microphones \
             plus the leakage point need {}",
            scenario.speech_irs.len(),
            k,
            n_channels
        )));
    }

    let options = SolverOptions::default();
    let operators: Vec<BlockSecondaryOperator> = ensemble
        .variants()
        .iter()
        .map(|v| {
            secondary_path_operator(
                v,
                n_channels,
                cfg.filter_len,
                cfg.ff_latency,
                cfg.fb_latency,
            )
        })
        .collect::<Result<_>>()?;
    let block_len = operators[0].block_rows();

    let mut design_channels: Vec<Vec<f64>> = signals.outer_mics().channels().to_vec();
    design_channels.push(signals.leakage_total());
    let correlation =
        CorrelationOperator::from_signals(&design_channels, block_len, options.dense_threshold)?;
    let lambda = largest_eigenvalue(&correlation)?;
    let (beta_ff, beta_fb) = cfg.regularizer.betas(lambda)?;

    let reirs = identify_reir_set(
        &scenario.speech_irs,
        scenario.reference_index,
        cfg.reir_acausal_len,
        cfg.reir_causal_len,
    )?;
    let stack = ReirStack::new(reirs, block_len)?;
    let problem = DesignProblem::new(
        correlation,
        stack,
        beta_ff,
        beta_fb,
        cfg.mu_grid[0],
        cfg.target_gain,
        cfg.passthrough_delay,
    )?;
    Ok(DesignSetup {
        problem,
        operators,
        beta_ff,
        beta_fb,
    })
}

/// Load the referenced scenario and ensemble, then run the study.
pub fn run_cases(cfg: &CaseStudyConfig) -> Result<CaseReport> {
    cfg.validate()?;
    let scenario = load_scenario(&cfg.scenario_ref)?;
    let (ensemble, _) = load_ensemble(&cfg.ensemble_ref)?;
    run_cases_with(cfg, &scenario, &ensemble)
}

/// Run the study on in-memory inputs.
///
/// Per constraint weight: the matched case designs on path `j` and
/// evaluates on path `j`; the mismatched case evaluates each design on
/// every other path; the robust case designs one filter on the whole
/// ensemble (simulated with the ensemble-mean path as its internal model)
/// and evaluates it on each path. Unstable runs are excluded from the
/// aggregates and counted; a cell with more than half its runs unstable
/// marks the report degenerate.
pub fn run_cases_with(
    cfg: &CaseStudyConfig,
    scenario: &Scenario,
    ensemble: &PathEnsemble,
) -> Result<CaseReport> {
    cfg.validate()?;
    let signals = &scenario.signals;
    let n_channels = signals.n_outer() + 1;
    let j_total = ensemble.len();

    let scenario_snr = snr_db(signals.leakage_speech(), signals.leakage_noise())?;
    let bands = BandAnalysis::speech_intelligibility_default(signals.sample_rate())?;
    let options = SolverOptions::default();

    let DesignSetup {
        problem,
        operators: ops,
        beta_ff,
        beta_fb,
    } = prepare_design(cfg, scenario, ensemble)?;
    let mean_path: ImpulseResponse = ensemble.mean_variant();

    let cases = cfg.canonical_cases();
    let need_per_path = cases.contains(&CaseKind::Matched) || cases.contains(&CaseKind::Mismatched);
    let need_robust = cases.contains(&CaseKind::Robust);

    let loop_cfg = LoopConfig {
        ff_latency: cfg.ff_latency,
        fb_latency: cfg.fb_latency,
        instability_threshold: LoopConfig::default_threshold(signals.peak_amplitude()),
        max_samples: signals.len(),
    };

    let mut pool_builder = rayon::ThreadPoolBuilder::new();
    if cfg.workers > 0 {
        pool_builder = pool_builder.num_threads(cfg.workers);
    }
    let pool = pool_builder
        .build()
        .map_err(|e| Error::Io(format!("cannot build the worker pool: {e}")))?;

    pool.install(|| -> Result<CaseReport> {
        // The quadratic pieces of the design equations depend on the path
        // but not on the constraint weight; cache them per path and
        // reassemble per weight. Above the dense cutoff fall back to the
        // matrix-free design per (weight, path).
        let unknowns = ops[0].in_dim();
        let cached: Option<Vec<QuadraticComponents>> = if unknowns <= options.dense_threshold {
            Some(
                ops.par_iter()
                    .map(|g| quadratic_components(&problem, g))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        let design_one = |mu: f64, j: usize| -> Result<StackedControlFilter> {
            match &cached {
                Some(comps) => {
                    let eq = equations_from_components(
                        &[&comps[j]],
                        beta_ff,
                        beta_fb,
                        mu,
                        n_channels,
                        &options,
                    );
                    StackedControlFilter::from_stacked(&eq.solve()?, n_channels)
                }
                None => design_soft_with(&problem.with_mu(mu)?, &ops[j], &options),
            }
        };
        let design_all_paths = |mu: f64| -> Result<StackedControlFilter> {
            match &cached {
                Some(comps) => {
                    let refs: Vec<&QuadraticComponents> = comps.iter().collect();
                    let eq = equations_from_components(
                        &refs, beta_ff, beta_fb, mu, n_channels, &options,
                    );
                    StackedControlFilter::from_stacked(&eq.solve()?, n_channels)
                }
                None => design_robust_with(&problem.with_mu(mu)?, &ops, &options),
            }
        };

        let per_path_filters: Vec<Vec<StackedControlFilter>> = if need_per_path {
            cfg.mu_grid
                .par_iter()
                .map(|&mu| (0..j_total).map(|j| design_one(mu, j)).collect())
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let robust_filters: Vec<StackedControlFilter> = if need_robust {
            cfg.mu_grid
                .par_iter()
                .map(|&mu| design_all_paths(mu))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        // Row plan in canonical order; evaluation runs in parallel but
        // collects in plan order, so results are scheduling-independent.
        let mut plan: Vec<(CaseKind, usize, DesignRef, usize)> = Vec::new();
        for &case in &cases {
            for mu_idx in 0..cfg.mu_grid.len() {
                match case {
                    CaseKind::Matched => {
                        for j in 0..j_total {
                            plan.push((case, mu_idx, DesignRef::Path(j), j));
                        }
                    }
                    CaseKind::Mismatched => {
                        for j in 0..j_total {
                            for i in (0..j_total).filter(|&i| i != j) {
                                plan.push((case, mu_idx, DesignRef::Path(j), i));
                            }
                        }
                    }
                    CaseKind::Robust => {
                        for i in 0..j_total {
                            plan.push((case, mu_idx, DesignRef::Robust, i));
                        }
                    }
                }
            }
        }

        let reference_speech = scenario.reference_speech();
        let rows: Vec<CaseRow> = plan
            .par_iter()
            .map(|&(case, mu_idx, design, eval)| -> Result<CaseRow> {
                let (filter, g_hat, design_label) = match design {
                    DesignRef::Path(j) => (
                        &per_path_filters[mu_idx][j],
                        ensemble.variant(j),
                        ensemble.labels()[j].clone(),
                    ),
                    DesignRef::Robust => {
                        (&robust_filters[mu_idx], &mean_path, "robust".to_string())
                    }
                };
                let g_true = ensemble.variant(eval);
                let sim = simulate_components(filter, g_true, g_hat, signals, &loop_cfg)?;
                let (nr, sd) = if sim.stable() {
                    (
                        noise_reduction_db(signals.leakage_noise(), sim.error_noise())?,
                        sd_intellig_db(
                            sim.error_speech(),
                            reference_speech,
                            cfg.target_gain,
                            cfg.passthrough_delay,
                            &bands,
                        )?,
                    )
                } else {
                    (f64::NAN, f64::NAN)
                };
                Ok(CaseRow {
                    case,
                    mu: cfg.mu_grid[mu_idx],
                    design_path: design_label,
                    eval_path: ensemble.labels()[eval].clone(),
                    nr_db: nr,
                    sd_db: sd,
                    stable: sim.stable(),
                })
            })
            .collect::<Result<_>>()?;

        // Aggregate per (case, weight) over the stable rows.
        let mut aggregates = Vec::new();
        let mut degenerate = false;
        for &case in &cases {
            for &mu in &cfg.mu_grid {
                let cell: Vec<&CaseRow> = rows
                    .iter()
                    .filter(|r| r.case == case && r.mu == mu)
                    .collect();
                if cell.is_empty() {
                    continue; // mismatched case with a single path
                }
                let n_unstable = cell.iter().filter(|r| !r.stable).count();
                if 2 * n_unstable > cell.len() {
                    degenerate = true;
                }
                for metric in METRIC_COLUMNS {
                    let values: Vec<f64> = cell
                        .iter()
                        .filter(|r| r.stable)
                        .map(|r| if metric == "nr_db" { r.nr_db } else { r.sd_db })
                        .collect();
                    let (mean, p_low, p_high) = if values.is_empty() {
                        (f64::NAN, f64::NAN, f64::NAN)
                    } else {
                        (
                            values.iter().sum::<f64>() / values.len() as f64,
                            percentile(&values, cfg.percentile_low),
                            percentile(&values, cfg.percentile_high),
                        )
                    };
                    aggregates.push(AggregateRow {
                        case,
                        mu,
                        metric: metric.into(),
                        mean,
                        p_low,
                        p_high,
                        n_unstable,
                        n_used: values.len(),
                    });
                }
            }
        }

        Ok(CaseReport {
            rows,
            aggregates,
            degenerate,
            percentile_low: cfg.percentile_low,
            percentile_high: cfg.percentile_high,
            band_table_version: bands.table_version().to_string(),
            scenario_snr_db: scenario_snr,
        })
    })
}
