//! Scenario harness: trajectories, synthetic maps, end-to-end runs, metrics,
//! reports and a preset library of representative trial analogs.

mod metrics;
mod report;
mod run;
mod scenario;
mod synth;
mod trajectory;

pub use metrics::{
    advantage_factor, bounded_statistic, compute_metrics, final_quarter_median,
    percent_of_distance, round_half_up, round_significant, Advantage, Metrics,
};
pub use report::{
    emit_report, render_svg, write_epoch_csv, ReportFormats, DETAILS_JSON, EPOCH_CSV,
    INNOVATIONS_CSV, PLOT_SVG, SNAPSHOT_JSON, SUMMARY_JSON,
};
pub use run::{
    build_maps, parse_sweep_param, run_scenario, run_scenario_with, sweep, with_param, Divergence,
    EpochRecord, InnovationStats, PlatformSample, RunOptions, RunReport, ScenarioMaps, Summary,
};
pub use scenario::{
    preset, presets, MapSource, ScenarioConfig, SensorRole, SpikeConfig, StartConfig,
};
pub use synth::synth_map;
pub use trajectory::{generate_trajectory, Pattern, TrajectorySpec, TruthPose, MAX_BANK_DEG};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid trajectory: {0}")]
    Spec(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] crate::maps::MapError),
    #[error(transparent)]
    Platform(#[from] crate::platform::PlatformError),
    #[error(transparent)]
    Filter(#[from] crate::filter::FilterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Whether the error stems from the user's configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Spec(_) | HarnessError::Config(_) | HarnessError::Map(_)
        )
    }
}
