//! Study orchestration: synthetic scene generation, the three-case
//! evaluation protocol over a grid of constraint weights, aggregation,
//! and report serialization.

mod report;
mod scene;
mod study;

pub use report::{
    emit_report, parse_aggregates_csv, percentile, write_plot_data, AggregateRow, CaseReport,
    CaseRow,
};
pub use scene::{
    generate_synthetic_scenario, load_scenario, load_scene_spec, save_scenario,
    synthetic_secondary_path, Scenario, SceneSpec,
};
pub use study::{
    load_config, prepare_design, run_cases, run_cases_with, CaseKind, CaseStudyConfig, DesignSetup,
};
