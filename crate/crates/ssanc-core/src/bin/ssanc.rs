//! Command-line front end: synthetic scene and secondary-path-ensemble
//! generation, control-filter design, closed-loop simulation, the
//! matched/mismatched/robust case study, and plot-data export.
//!
//! Every subcommand starts from built-in defaults (full scale, or small
//! desk scale via `--desk-scale` / `--preset desk`), optionally replaced
//! by a TOML config file, with individual flags overriding single keys.
//! Exit codes: 0 success, 2 configuration or argument error, 3 numeric
//! failure, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ssanc_core::design::{
    design_robust_with, design_soft_with, load_filter, save_filter, FilterMetadata, SolverOptions,
};
use ssanc_core::dsp::{
    read_multichannel_wav, write_multichannel_wav, ImpulseResponse, MultichannelSignal, WavFormat,
};
use ssanc_core::metrics::{
    noise_reduction_db, sd_intellig_db, snr_db, welch_power_spectrum, BandAnalysis, WelchSpec,
};
use ssanc_core::path_model::{
    generate_path_ensemble, load_ensemble, save_ensemble, PathEnsemble, VariationSpec,
};
use ssanc_core::scenario::{
    emit_report, generate_synthetic_scenario, load_config, load_scenario, load_scene_spec,
    parse_aggregates_csv, prepare_design, run_cases, save_scenario, synthetic_secondary_path,
    write_plot_data, CaseKind, CaseStudyConfig, SceneSpec,
};
use ssanc_core::sim::{simulate_components, simulate_loop, LoopConfig};
use ssanc_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ssanc",
    version,
    about = "Design and evaluate spatially selective active noise control filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene (microphone signals, leakage, speech
    /// responses) in a directory.
    GenScenario(GenScenarioArgs),
    /// Generate a secondary-path ensemble around a nominal response.
    GenEnsemble(GenEnsembleArgs),
    /// Design one control filter and save its coefficients and manifest.
    Design(DesignArgs),
    /// Run the closed loop with a saved filter on a scene; write signals
    /// and metrics.
    Simulate(SimulateArgs),
    /// Run the matched/mismatched/robust study over the weight grid and
    /// write the report CSVs.
    RunCases(RunCasesArgs),
    /// Regenerate plot-data series from a saved aggregates file, or
    /// compute a Welch power spectrum from a WAV file.
    PlotData(PlotDataArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenScenario(args) => gen_scenario(args),
        Command::GenEnsemble(args) => gen_ensemble(args),
        Command::Design(args) => design(args),
        Command::Simulate(args) => simulate(args),
        Command::RunCases(args) => run_cases_cmd(args),
        Command::PlotData(args) => plot_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Built-in scene parameter sets.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// Small dimensions that run the full pipeline in seconds.
    Desk,
    /// Full experimental scale: four microphones at 40 kHz, ten seconds,
    /// 44 path variants.
    FullScale,
}

// ---------------------------------------------------------------------
// gen-scenario

#[derive(Args)]
struct GenScenarioArgs {
    /// Output directory for the scene.
    #[arg(long)]
    out: PathBuf,
    /// Also write the scene's secondary-path ensemble to this directory.
    #[arg(long)]
    ensemble_out: Option<PathBuf>,
    /// Scene parameter file (TOML); missing keys take the desk defaults.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set to start from.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[command(flatten)]
    overrides: SceneOverrides,
}

/// Per-key overrides of the scene parameters; each flag mirrors a config
/// key and replaces the preset/config value.
#[derive(Args)]
struct SceneOverrides {
    /// Outer microphones per ear.
    #[arg(long)]
    n_outer_mics: Option<usize>,
    /// Sample rate, Hz.
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Scene length, samples.
    #[arg(long)]
    duration_samples: Option<usize>,
    /// Outer microphone used as the passthrough reference.
    #[arg(long)]
    reference_index: Option<usize>,
    /// Number of interfering noise sources.
    #[arg(long)]
    n_interferers: Option<usize>,
    /// Master gain of the noise sources; zero silences them.
    #[arg(long)]
    noise_gain: Option<f64>,
    /// Target leakage speech-to-noise ratio, dB.
    #[arg(long)]
    target_snr_db: Option<f64>,
    /// Length of the sparse propagation responses, samples.
    #[arg(long)]
    propagation_taps: Option<usize>,
    /// Length of the loudspeaker-to-ear response, samples.
    #[arg(long)]
    secondary_path_taps: Option<usize>,
    /// Number of secondary-path variants in the ensemble.
    #[arg(long)]
    n_path_variants: Option<usize>,
    /// Per-band magnitude deviation of the path variants, dB.
    #[arg(long)]
    path_sigma_db: Option<f64>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl SceneOverrides {
    fn apply(&self, spec: &mut SceneSpec) {
        if let Some(v) = self.n_outer_mics {
            spec.n_outer_mics = v;
        }
        if let Some(v) = self.sample_rate {
            spec.sample_rate = v;
        }
        if let Some(v) = self.duration_samples {
            spec.duration_samples = v;
        }
        if let Some(v) = self.reference_index {
            spec.reference_index = v;
        }
        if let Some(v) = self.n_interferers {
            spec.n_interferers = v;
        }
        if let Some(v) = self.noise_gain {
            spec.noise_gain = v;
        }
        if let Some(v) = self.target_snr_db {
            spec.target_snr_db = v;
        }
        if let Some(v) = self.propagation_taps {
            spec.propagation_taps = v;
        }
        if let Some(v) = self.secondary_path_taps {
            spec.secondary_path_taps = v;
        }
        if let Some(v) = self.n_path_variants {
            spec.n_path_variants = v;
        }
        if let Some(v) = self.path_sigma_db {
            spec.path_sigma_db = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
    }
}

fn gen_scenario(args: GenScenarioArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => load_scene_spec(path)?,
        None => match args.preset {
            Preset::Desk => SceneSpec::desk_preset(),
            Preset::FullScale => SceneSpec::full_scale_preset(),
        },
    };
    args.overrides.apply(&mut spec);
    let (scenario, ensemble) = generate_synthetic_scenario(&spec)?;
    save_scenario(&args.out, &scenario)?;
    println!(
        "wrote scene: {} outer mics, {} samples at {} Hz -> {}",
        spec.n_outer_mics,
        spec.duration_samples,
        spec.sample_rate,
        args.out.display()
    );
    if let Some(dir) = &args.ensemble_out {
        save_ensemble(dir, &ensemble, Some(&spec.path_variation()))?;
        println!(
            "wrote ensemble: {} variants of a {}-tap path -> {}",
            ensemble.len(),
            spec.secondary_path_taps,
            dir.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------
// gen-ensemble

#[derive(Args)]
struct GenEnsembleArgs {
    /// Output directory for the ensemble.
    #[arg(long)]
    out: PathBuf,
    /// Nominal loudspeaker-to-ear response as a single-channel WAV file;
    /// when omitted a synthetic response is generated.
    #[arg(long)]
    nominal: Option<PathBuf>,
    /// Length of the synthetic nominal response, samples.
    #[arg(long, default_value_t = 32, conflicts_with = "nominal")]
    taps: usize,
    /// Sample rate of the synthetic nominal response, Hz.
    #[arg(long, default_value_t = 8000, conflicts_with = "nominal")]
    sample_rate: u32,
    /// Number of path variants.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Per-band log-magnitude deviation of the variants, dB.
    #[arg(long, default_value_t = 3.0)]
    sigma_db: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn gen_ensemble(args: GenEnsembleArgs) -> Result<()> {
    let nominal = match &args.nominal {
        Some(path) => {
            let sig = read_multichannel_wav(path)?;
            if sig.n_channels() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{}: the nominal response must be single-channel, got {} channels",
                    path.display(),
                    sig.n_channels()
                )));
            }
            let rate = sig.sample_rate();
            let taps = sig.into_channels().pop().expect("one channel");
            ImpulseResponse::new(taps, rate)?
        }
        None => synthetic_secondary_path(args.taps, args.sample_rate, args.seed)?,
    };
    let mut variation = VariationSpec::for_path_len(nominal.len(), args.seed);
    variation.magnitude_db_std = args.sigma_db;
    let ensemble = generate_path_ensemble(&nominal, &variation, args.count)?;
    save_ensemble(&args.out, &ensemble, Some(&variation))?;
    println!(
        "wrote ensemble: {} variants of a {}-tap path at {} Hz -> {}",
        ensemble.len(),
        nominal.len(),
        nominal.sample_rate(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// shared study configuration

/// Study configuration shared by `design`, `simulate`, and `run-cases`:
/// built-in defaults (or `--desk-scale`), an optional TOML file, then
/// per-key flags, each mirroring a config key.
#[derive(Args)]
struct StudyConfigArgs {
    /// Study configuration file (TOML); missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk-scale defaults instead of full scale.
    #[arg(long, conflicts_with = "config")]
    desk_scale: bool,
    /// Scene directory.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Secondary-path ensemble directory.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Control-filter taps per channel.
    #[arg(long)]
    filter_len: Option<usize>,
    /// Acausal taps of the identified relative impulse responses.
    #[arg(long)]
    reir_acausal_len: Option<usize>,
    /// Causal taps of the identified relative impulse responses.
    #[arg(long)]
    reir_causal_len: Option<usize>,
    /// Passthrough delay of the speech target, samples.
    #[arg(long)]
    passthrough_delay: Option<usize>,
    /// Passthrough gain of the speech target.
    #[arg(long)]
    target_gain: Option<f64>,
    /// Feedforward processing latency, samples.
    #[arg(long)]
    ff_latency: Option<usize>,
    /// Feedback processing latency, samples (at least 1).
    #[arg(long)]
    fb_latency: Option<usize>,
    /// Seed recorded in the study configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl StudyConfigArgs {
    fn resolve(&self) -> Result<CaseStudyConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None if self.desk_scale => CaseStudyConfig::desk_preset(),
            None => CaseStudyConfig::full_scale_defaults(),
        };
        if let Some(v) = &self.scenario {
            cfg.scenario_ref = v.clone();
        }
        if let Some(v) = &self.ensemble {
            cfg.ensemble_ref = v.clone();
        }
        if let Some(v) = self.filter_len {
            cfg.filter_len = v;
        }
        if let Some(v) = self.reir_acausal_len {
            cfg.reir_acausal_len = v;
        }
        if let Some(v) = self.reir_causal_len {
            cfg.reir_causal_len = v;
        }
        if let Some(v) = self.passthrough_delay {
            cfg.passthrough_delay = v;
        }
        if let Some(v) = self.target_gain {
            cfg.target_gain = v;
        }
        if let Some(v) = self.ff_latency {
            cfg.ff_latency = v;
        }
        if let Some(v) = self.fb_latency {
            cfg.fb_latency = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

/// Index of the variant with the given label.
fn find_variant(ensemble: &PathEnsemble, label: &str) -> Result<usize> {
    ensemble
        .labels()
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no path variant labeled {label:?}; available: {}",
                ensemble.labels().join(", ")
            ))
        })
}

// ---------------------------------------------------------------------
// design

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    study: StudyConfigArgs,
    /// Constraint weight (default: the first grid point of the config).
    #[arg(long)]
    mu: Option<f64>,
    /// Average the design over the whole ensemble instead of assuming a
    /// single path.
    #[arg(long, conflicts_with = "path")]
    robust: bool,
    /// Label of the assumed path variant (default: the first).
    #[arg(long)]
    path: Option<String>,
    /// Output directory for the filter coefficients and manifest.
    #[arg(long)]
    out: PathBuf,
}

fn design(args: DesignArgs) -> Result<()> {
    let mut cfg = args.study.resolve()?;
    if let Some(mu) = args.mu {
        cfg.mu_grid = vec![mu];
    }
    cfg.validate()?;
    let scenario = load_scenario(&cfg.scenario_ref)?;
    let (ensemble, _) = load_ensemble(&cfg.ensemble_ref)?;
    let setup = prepare_design(&cfg, &scenario, &ensemble)?;
    let options = SolverOptions::default();

    let (filter, labels) = if args.robust {
        let filter = design_robust_with(&setup.problem, &setup.operators, &options)?;
        (filter, ensemble.labels().to_vec())
    } else {
        let index = match &args.path {
            Some(label) => find_variant(&ensemble, label)?,
            None => 0,
        };
        let filter = design_soft_with(&setup.problem, &setup.operators[index], &options)?;
        (filter, vec![ensemble.labels()[index].clone()])
    };

    let meta = FilterMetadata::new(
        &filter,
        scenario.signals.sample_rate(),
        cfg.mu_grid[0],
        cfg.target_gain,
        cfg.passthrough_delay,
        cfg.ff_latency,
        cfg.fb_latency,
        setup.beta_ff,
        setup.beta_fb,
        labels,
    );
    save_filter(&args.out, &filter, &meta)?;
    println!(
        "wrote filter: {} channels x {} taps, constraint weight {} -> {}",
        filter.n_channels(),
        filter.filter_len(),
        cfg.mu_grid[0],
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// simulate

#[derive(Args)]
struct SimulateArgs {
    /// Directory holding a saved filter (the output of `design`).
    #[arg(long)]
    filter: PathBuf,
    /// Scene directory.
    #[arg(long)]
    scenario: PathBuf,
    /// Secondary-path ensemble directory.
    #[arg(long)]
    ensemble: PathBuf,
    /// Label of the variant acting as the true loudspeaker-to-ear path
    /// (default: the first variant).
    #[arg(long)]
    true_path: Option<String>,
    /// Internal path model: a variant label, or "mean" for the ensemble
    /// mean.
    #[arg(long, default_value = "mean")]
    model_path: String,
    /// Feedforward latency override, samples (default: the filter
    /// manifest's value).
    #[arg(long)]
    ff_latency: Option<usize>,
    /// Feedback latency override, samples (default: the filter
    /// manifest's value).
    #[arg(long)]
    fb_latency: Option<usize>,
    /// Output directory for the signals and metrics.
    #[arg(long)]
    out: PathBuf,
}

/// Format an optional metric for the console.
fn show_db(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2} dB"),
        None => "undefined".into(),
    }
}

/// Run a metric, mapping "metric undefined on this scene" to None.
fn metric_or_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (filter, meta) = load_filter(&args.filter)?;
    let scenario = load_scenario(&args.scenario)?;
    let (ensemble, _) = load_ensemble(&args.ensemble)?;
    let signals = &scenario.signals;
    if meta.sample_rate != signals.sample_rate() {
        return Err(Error::InvalidArgument(format!(
            "the filter was designed at {} Hz but the scene runs at {} Hz",
            meta.sample_rate,
            signals.sample_rate()
        )));
    }

    let true_index = match &args.true_path {
        Some(label) => find_variant(&ensemble, label)?,
        None => 0,
    };
    let g_true = ensemble.variant(true_index).clone();
    let (g_hat, model_label) = if args.model_path == "mean" {
        (ensemble.mean_variant(), "mean".to_string())
    } else {
        let index = find_variant(&ensemble, &args.model_path)?;
        (ensemble.variant(index).clone(), args.model_path.clone())
    };

    let cfg = LoopConfig {
        ff_latency: args.ff_latency.unwrap_or(meta.ff_latency),
        fb_latency: args.fb_latency.unwrap_or(meta.fb_latency),
        instability_threshold: LoopConfig::default_threshold(signals.peak_amplitude()),
        max_samples: signals.len(),
    };
    let full = simulate_loop(&filter, &g_true, &g_hat, signals, &cfg)?;
    let components = simulate_components(&filter, &g_true, &g_hat, signals, &cfg)?;
    let stable = full.stable && components.stable();

    let (nr, sd) = if stable {
        let bands = BandAnalysis::speech_intelligibility_default(signals.sample_rate())?;
        let nr = metric_or_none(noise_reduction_db(
            signals.leakage_noise(),
            components.error_noise(),
        ))?;
        let sd = metric_or_none(sd_intellig_db(
            components.error_speech(),
            scenario.reference_speech(),
            meta.alpha,
            meta.delay,
            &bands,
        ))?;
        (nr, sd)
    } else {
        (None, None)
    };
    let scene_snr = metric_or_none(snr_db(signals.leakage_speech(), signals.leakage_noise()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| {
        Error::Io(format!(
            "{}: cannot create directory: {e}",
            args.out.display()
        ))
    })?;
    let rate = signals.sample_rate();
    let write_signal = |name: &str, data: &[f64]| -> Result<()> {
        let sig = MultichannelSignal::new(vec![data.to_vec()], rate)?;
        write_multichannel_wav(&args.out.join(name), &sig, WavFormat::Float32)
    };
    write_signal("e.wav", &full.error)?;
    write_signal("y.wav", &full.loudspeaker)?;
    write_signal("p_hat.wav", &full.leakage_estimate)?;
    write_signal("e_speech.wav", components.error_speech())?;
    write_signal("e_noise.wav", components.error_noise())?;

    let metrics = serde_json::json!({
        "nr_db": nr,
        "sd_db": sd,
        "scenario_snr_db": scene_snr,
        "stable": stable,
        "divergence_sample": full.divergence_sample,
        "true_path": ensemble.labels()[true_index],
        "model_path": model_label,
        "ff_latency": cfg.ff_latency,
        "fb_latency": cfg.fb_latency,
        "mu": meta.mu,
        "alpha": meta.alpha,
        "delay": meta.delay,
    });
    let json = serde_json::to_string_pretty(&metrics)
        .map_err(|e| Error::Io(format!("cannot encode metrics: {e}")))?;
    std::fs::write(args.out.join("metrics.json"), json)
        .map_err(|e| Error::Io(format!("{}: cannot write metrics: {e}", args.out.display())))?;

    println!(
        "simulated {} samples on true path {} (model: {})",
        full.error.len(),
        ensemble.labels()[true_index],
        model_label
    );
    if !stable {
        println!(
            "loop diverged at sample {}; metrics withheld",
            full.divergence_sample
                .or(components.speech.divergence_sample)
                .or(components.noise.divergence_sample)
                .unwrap_or(0)
        );
    }
    println!(
        "noise reduction {}, speech distortion {} -> {}",
        show_db(nr),
        show_db(sd),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// run-cases

#[derive(Args)]
struct RunCasesArgs {
    #[command(flatten)]
    study: StudyConfigArgs,
    /// Subset of cases to run, comma separated: matched, mismatched,
    /// robust.
    #[arg(long, value_delimiter = ',')]
    cases: Option<Vec<CaseKind>>,
    /// Constraint-weight grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Worker threads (0 = machine default).
    #[arg(long)]
    workers: Option<usize>,
    /// Percentile band as two values: low,high.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    percentiles: Option<Vec<f64>>,
    /// Output directory for the report CSVs.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn run_cases_cmd(args: RunCasesArgs) -> Result<()> {
    let mut cfg = args.study.resolve()?;
    if let Some(cases) = args.cases {
        cfg.cases = cases;
    }
    if let Some(mu) = args.mu {
        cfg.mu_grid = mu;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(p) = args.percentiles {
        cfg.percentile_low = p[0];
        cfg.percentile_high = p[1];
    }
    cfg.validate()?;

    let report = run_cases(&cfg)?;
    let written = emit_report(&report, &args.out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!(
        "{} runs over {} weights; scene leakage speech-to-noise ratio {:.2} dB",
        report.rows.len(),
        cfg.mu_grid.len(),
        report.scenario_snr_db
    );
    let unstable = report.rows.iter().filter(|r| !r.stable).count();
    if unstable > 0 {
        println!("{unstable} run(s) diverged and were excluded from the aggregates");
    }
    if report.degenerate {
        println!("warning: a majority of runs diverged in at least one (case, weight) cell");
    }
    Ok(())
}

// ---------------------------------------------------------------------
// plot-data

#[derive(Args)]
struct PlotDataArgs {
    /// aggregates.csv written by run-cases; regenerates the per-metric
    /// series files.
    #[arg(long, required_unless_present = "psd")]
    aggregates: Option<PathBuf>,
    /// WAV file to analyze into a Welch power-spectrum CSV (one column
    /// per channel).
    #[arg(long)]
    psd: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Welch power spectrum of every channel of a WAV file, as one CSV named
/// after the input file.
fn write_psd_csv(input: &Path, out_dir: &Path) -> Result<PathBuf> {
    let sig = read_multichannel_wav(input)?;
    let spec = WelchSpec::for_sample_rate(sig.sample_rate())?;
    let mut columns = Vec::with_capacity(sig.n_channels());
    let mut frequencies = Vec::new();
    for k in 0..sig.n_channels() {
        let (freqs, power) = welch_power_spectrum(sig.channel(k), &spec)?;
        frequencies = freqs;
        columns.push(power);
    }
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("signal");
    let mut text = String::from("frequency_hz");
    for k in 0..columns.len() {
        text.push_str(&format!(",channel_{:02}", k + 1));
    }
    text.push('\n');
    for (i, f) in frequencies.iter().enumerate() {
        text.push_str(&format!("{f}"));
        for column in &columns {
            text.push_str(&format!(",{}", column[i]));
        }
        text.push('\n');
    }
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(format!(
            "{}: cannot create directory: {e}",
            out_dir.display()
        ))
    })?;
    let path = out_dir.join(format!("{stem}_psd.csv"));
    std::fs::write(&path, text)
        .map_err(|e| Error::Io(format!("{}: cannot write: {e}", path.display())))?;
    Ok(path)
}

fn plot_data(args: PlotDataArgs) -> Result<()> {
    if let Some(aggregates) = &args.aggregates {
        let rows = parse_aggregates_csv(aggregates)?;
        let written = write_plot_data(&rows, &args.out)?;
        for path in &written {
            println!("wrote {}", path.display());
        }
    }
    if let Some(input) = &args.psd {
        let path = write_psd_csv(input, &args.out)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
