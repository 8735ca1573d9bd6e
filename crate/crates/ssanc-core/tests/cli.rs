//! End-to-end tests of the command-line interface: every subcommand is
//! driven as a subprocess against tiny synthetic inputs, and the outputs
//! are re-read through the library to check they parse.

use std::path::Path;
use std::process::{Command, Output};

use ssanc_core::design::load_filter;
use ssanc_core::path_model::load_ensemble;
use ssanc_core::scenario::{load_scenario, parse_aggregates_csv};
use tempfile::tempdir;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssanc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch the ssanc binary")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Generate a tiny scene plus its path ensemble in `dir`.
fn gen_tiny_scene(dir: &Path) {
    let out = run_in(
        dir,
        &[
            "gen-scenario",
            "--out",
            "scene",
            "--ensemble-out",
            "paths",
            "--duration-samples",
            "4096",
            "--n-path-variants",
            "3",
            "--propagation-taps",
            "12",
            "--secondary-path-taps",
            "16",
            "--seed",
            "7",
        ],
    );
    assert_success(&out);
}

#[test]
fn generate_design_simulate_pipeline() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    gen_tiny_scene(dir);

    // The generated artifacts parse through the library loaders.
    let scenario = load_scenario(&dir.join("scene")).unwrap();
    assert_eq!(scenario.signals.n_outer(), 2);
    assert_eq!(scenario.signals.len(), 4096);
    let (ensemble, variation) = load_ensemble(&dir.join("paths")).unwrap();
    assert_eq!(ensemble.len(), 3);
    assert!(variation.is_some(), "generation parameters are recorded");

    // Design a filter at one constraint weight against the tiny scene.
    let out = run_in(
        dir,
        &[
            "design",
            "--desk-scale",
            "--scenario",
            "scene",
            "--ensemble",
            "paths",
            "--filter-len",
            "32",
            "--reir-acausal-len",
            "48",
            "--reir-causal-len",
            "48",
            "--mu",
            "50",
            "--path",
            "variant_02",
            "--out",
            "filt",
        ],
    );
    assert_success(&out);
    let (filter, meta) = load_filter(&dir.join("filt")).unwrap();
    assert_eq!(filter.n_channels(), 3);
    assert_eq!(filter.filter_len(), 32);
    assert_eq!(meta.mu, 50.0);
    assert_eq!(meta.design_labels, vec!["variant_02".to_string()]);

    // Simulate it on the path it was designed for.
    let out = run_in(
        dir,
        &[
            "simulate",
            "--filter",
            "filt",
            "--scenario",
            "scene",
            "--ensemble",
            "paths",
            "--true-path",
            "variant_02",
            "--model-path",
            "variant_02",
            "--out",
            "sim",
        ],
    );
    assert_success(&out);
    for name in ["e.wav", "y.wav", "p_hat.wav", "e_speech.wav", "e_noise.wav"] {
        assert!(dir.join("sim").join(name).is_file(), "missing {name}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("sim/metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["stable"], serde_json::Value::Bool(true));
    assert!(metrics["nr_db"].as_f64().unwrap().is_finite());
    assert!(metrics["sd_db"].as_f64().unwrap().is_finite());
    assert_eq!(metrics["true_path"], "variant_02");
}

#[test]
fn robust_design_records_every_label() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    gen_tiny_scene(dir);
    let out = run_in(
        dir,
        &[
            "design",
            "--desk-scale",
            "--scenario",
            "scene",
            "--ensemble",
            "paths",
            "--filter-len",
            "32",
            "--reir-acausal-len",
            "48",
            "--reir-causal-len",
            "48",
            "--robust",
            "--out",
            "filt",
        ],
    );
    assert_success(&out);
    let (_, meta) = load_filter(&dir.join("filt")).unwrap();
    assert_eq!(meta.design_labels.len(), 3);
}

#[test]
fn run_cases_is_byte_identical_across_runs_and_worker_counts() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    gen_tiny_scene(dir);

    let study = |out_dir: &str, workers: &str| {
        let out = run_in(
            dir,
            &[
                "run-cases",
                "--desk-scale",
                "--scenario",
                "scene",
                "--ensemble",
                "paths",
                "--filter-len",
                "32",
                "--reir-acausal-len",
                "48",
                "--reir-causal-len",
                "48",
                "--mu",
                "1,100",
                "--workers",
                workers,
                "--out",
                out_dir,
            ],
        );
        assert_success(&out);
    };
    study("r1", "1");
    study("r2", "8");
    study("r3", "1");

    for name in ["rows.csv", "aggregates.csv", "nr_db_vs_mu.csv"] {
        let a = std::fs::read(dir.join("r1").join(name)).unwrap();
        let b = std::fs::read(dir.join("r2").join(name)).unwrap();
        let c = std::fs::read(dir.join("r3").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between worker counts 1 and 8");
        assert_eq!(a, c, "{name} differs between repeated runs");
    }

    // Row counts follow the protocol: J + J(J-1) + J rows per weight.
    let rows = std::fs::read_to_string(dir.join("r1/rows.csv")).unwrap();
    assert_eq!(rows.lines().count() - 1, 2 * (3 + 6 + 3));
}

#[test]
fn plot_data_reproduces_series_and_emits_spectra() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    gen_tiny_scene(dir);
    let out = run_in(
        dir,
        &[
            "run-cases",
            "--desk-scale",
            "--scenario",
            "scene",
            "--ensemble",
            "paths",
            "--filter-len",
            "32",
            "--reir-acausal-len",
            "48",
            "--reir-causal-len",
            "48",
            "--mu",
            "1,100",
            "--cases",
            "matched,robust",
            "--out",
            "report",
        ],
    );
    assert_success(&out);
    assert!(!parse_aggregates_csv(&dir.join("report/aggregates.csv"))
        .unwrap()
        .is_empty());

    // Regenerating the series from aggregates.csv reproduces the files
    // run-cases wrote, byte for byte.
    let out = run_in(
        dir,
        &[
            "plot-data",
            "--aggregates",
            "report/aggregates.csv",
            "--out",
            "plots",
        ],
    );
    assert_success(&out);
    for name in ["nr_db_vs_mu.csv", "sd_db_vs_mu.csv", "nr_vs_sd.csv"] {
        let a = std::fs::read(dir.join("report").join(name)).unwrap();
        let b = std::fs::read(dir.join("plots").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs from the run-cases output");
    }

    // The spectrum mode produces one frequency column plus one column
    // per channel, seg/2 + 1 bins (seg = 1024 at 8 kHz).
    let out = run_in(
        dir,
        &["plot-data", "--psd", "scene/signals.wav", "--out", "plots"],
    );
    assert_success(&out);
    let psd = std::fs::read_to_string(dir.join("plots/signals_psd.csv")).unwrap();
    let mut lines = psd.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("frequency_hz,channel_01,"));
    assert_eq!(lines.count(), 513);
}

#[test]
fn failures_use_the_documented_exit_codes() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();

    // Missing input directory: I/O failure.
    let out = run_in(
        dir,
        &[
            "run-cases",
            "--desk-scale",
            "--scenario",
            "missing",
            "--ensemble",
            "missing",
            "--out",
            "r",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.join("r").exists(), "no output on failure");

    // Invalid configuration value: config error.
    std::fs::write(dir.join("bad.toml"), "filter_len = 0\n").unwrap();
    let out = run_in(dir, &["run-cases", "--config", "bad.toml", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown key in the config file: config error.
    std::fs::write(dir.join("unknown.toml"), "no_such_key = 1\n").unwrap();
    let out = run_in(
        dir,
        &["run-cases", "--config", "unknown.toml", "--out", "r"],
    );
    assert_eq!(out.status.code(), Some(2));

    // Unknown case label: usage error from the argument parser.
    let out = run_in(
        dir,
        &[
            "run-cases",
            "--desk-scale",
            "--cases",
            "bogus",
            "--out",
            "r",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    // Unknown path label: argument error after loading succeeds.
    gen_tiny_scene(dir);
    let out = run_in(
        dir,
        &[
            "design",
            "--desk-scale",
            "--scenario",
            "scene",
            "--ensemble",
            "paths",
            "--filter-len",
            "32",
            "--reir-acausal-len",
            "48",
            "--reir-causal-len",
            "48",
            "--path",
            "bogus",
            "--out",
            "filt",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("variant_01"),
        "error lists the labels: {stderr}"
    );
}
