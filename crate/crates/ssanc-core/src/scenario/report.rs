//! Study results: per-run rows, per-(case, weight) aggregates, and their
//! CSV serialization, including per-metric plot-data files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scenario::study::CaseKind;

/// One simulated evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub case: CaseKind,
    pub mu: f64,
    pub design_path: String,
    pub eval_path: String,
    /// NaN when the run diverged.
    pub nr_db: f64,
    /// NaN when the run diverged.
    pub sd_db: f64,
    pub stable: bool,
}

/// Statistics of one metric at one (case, constraint weight) cell,
/// computed over the stable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub case: CaseKind,
    pub mu: f64,
    pub metric: String,
    pub mean: f64,
    pub p_low: f64,
    pub p_high: f64,
    pub n_unstable: usize,
    pub n_used: usize,
}

/// Full result of a case study.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub rows: Vec<CaseRow>,
    pub aggregates: Vec<AggregateRow>,
    /// True when more than half the runs of some (case, weight) cell
    /// diverged; aggregates there describe a minority of runs.
    pub degenerate: bool,
    pub percentile_low: f64,
    pub percentile_high: f64,
    /// Identifier of the band-importance table behind the distortion
    /// metric.
    pub band_table_version: String,
    /// Leakage speech-to-noise ratio of the evaluated scene, dB.
    pub scenario_snr_db: f64,
}

/// Percentile by linear interpolation between order statistics: rank
/// `p/100·(m−1)` into the sorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Shortest round-trippable decimal form; empty for NaN (unknown value).
fn field(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

const ROWS_FILE: &str = "rows.csv";
const AGGREGATES_FILE: &str = "aggregates.csv";
pub(crate) const METRIC_COLUMNS: [&str; 2] = ["nr_db", "sd_db"];

/// Write `rows.csv`, `aggregates.csv`, and the per-metric plot-data files
/// into `out_dir`; returns the written paths. The row schema reserves
/// empty `pesq` and `estoi` columns for externally computed scores.
pub fn emit_report(report: &CaseReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::InvalidArgument(
            "refusing to write an empty report; no cases were selected".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(format!(
            "{}: cannot create directory: {e}",
            out_dir.display()
        ))
    })?;
    let mut written = Vec::new();

    let mut rows = String::from("case,mu,design_path,eval_path,nr_db,sd_db,stable,pesq,estoi\n");
    for r in &report.rows {
        writeln!(
            rows,
            "{},{},{},{},{},{},{},,",
            r.case,
            field(r.mu),
            r.design_path,
            r.eval_path,
            field(r.nr_db),
            field(r.sd_db),
            r.stable
        )
        .expect("string write");
    }
    written.push(write_text(out_dir, ROWS_FILE, &rows)?);

    let mut aggregates = String::from("case,mu,metric,mean,p_low,p_high,n_unstable,n_used\n");
    for a in &report.aggregates {
        writeln!(
            aggregates,
            "{},{},{},{},{},{},{},{}",
            a.case,
            field(a.mu),
            a.metric,
            field(a.mean),
            field(a.p_low),
            field(a.p_high),
            a.n_unstable,
            a.n_used
        )
        .expect("string write");
    }
    written.push(write_text(out_dir, AGGREGATES_FILE, &aggregates)?);

    written.extend(write_plot_data(&report.aggregates, out_dir)?);
    Ok(written)
}

/// Write the per-metric plot-data files from aggregate rows: one file per
/// metric, the weight axis in both raw and log10 form, and mean plus
/// percentile-band columns per case.
pub fn write_plot_data(aggregates: &[AggregateRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if aggregates.is_empty() {
        return Err(Error::InvalidArgument(
            "no aggregate rows to derive plot data from".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(format!(
            "{}: cannot create directory: {e}",
            out_dir.display()
        ))
    })?;
    let cases: Vec<CaseKind> = CaseKind::ALL
        .iter()
        .copied()
        .filter(|c| aggregates.iter().any(|a| a.case == *c))
        .collect();
    let mut mu_grid: Vec<f64> = Vec::new();
    for a in aggregates {
        if !mu_grid.contains(&a.mu) {
            mu_grid.push(a.mu);
        }
    }

    let lookup = |case: CaseKind, mu: f64, metric: &str| -> Option<&AggregateRow> {
        aggregates
            .iter()
            .find(|a| a.case == case && a.mu == mu && a.metric == metric)
    };

    let mut written = Vec::new();
    for metric in METRIC_COLUMNS {
        let mut text = String::from("mu,log10_mu");
        for case in &cases {
            write!(text, ",{case}_mean,{case}_p_low,{case}_p_high").expect("string write");
        }
        text.push('\n');
        for &mu in &mu_grid {
            write!(text, "{},{}", field(mu), field(mu.log10())).expect("string write");
            for case in &cases {
                match lookup(*case, mu, metric) {
                    Some(a) => write!(
                        text,
                        ",{},{},{}",
                        field(a.mean),
                        field(a.p_low),
                        field(a.p_high)
                    ),
                    None => write!(text, ",,,"),
                }
                .expect("string write");
            }
            text.push('\n');
        }
        written.push(write_text(out_dir, &format!("{metric}_vs_mu.csv"), &text)?);
    }

    // Trade-off series: mean distortion against mean noise reduction,
    // one row per (case, weight).
    let mut text = String::from("case,mu,mean_nr_db,mean_sd_db\n");
    for case in &cases {
        for &mu in &mu_grid {
            let nr = lookup(*case, mu, "nr_db");
            let sd = lookup(*case, mu, "sd_db");
            if let (Some(nr), Some(sd)) = (nr, sd) {
                writeln!(
                    text,
                    "{case},{},{},{}",
                    field(mu),
                    field(nr.mean),
                    field(sd.mean)
                )
                .expect("string write");
            }
        }
    }
    written.push(write_text(out_dir, "nr_vs_sd.csv", &text)?);
    Ok(written)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| Error::Io(format!("{}: cannot write: {e}", path.display())))?;
    Ok(path)
}

/// Parse an `aggregates.csv` written by [`emit_report`].
pub fn parse_aggregates_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: cannot read: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "case,mu,metric,mean,p_low,p_high,n_unstable,n_used" {
        return Err(Error::Io(format!(
            "{}: unrecognized aggregate schema",
            path.display()
        )));
    }
    let parse_f = |s: &str| -> Result<f64> {
        if s.is_empty() {
            return Ok(f64::NAN);
        }
        s.parse()
            .map_err(|_| Error::Io(format!("{}: malformed number {s:?}", path.display())))
    };
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Io(format!(
                "{}: malformed aggregate row {line:?}",
                path.display()
            )));
        }
        out.push(AggregateRow {
            case: parts[0].parse()?,
            mu: parse_f(parts[1])?,
            metric: parts[2].to_string(),
            mean: parse_f(parts[3])?,
            p_low: parse_f(parts[4])?,
            p_high: parse_f(parts[5])?,
            n_unstable: parts[6]
                .parse()
                .map_err(|_| Error::Io(format!("{}: malformed count", path.display())))?,
            n_used: parts[7]
                .parse()
                .map_err(|_| Error::Io(format!("{}: malformed count", path.display())))?,
        });
    }
    Ok(out)
}
