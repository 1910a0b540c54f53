//! Experiment orchestration: configuration, meta-train/meta-test pipeline,
//! baselines, sweeps and CSV persistence.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{Coords, ExperimentConfig, SweepAxis};
pub use experiment::{
    calibrate, execute, run_experiment, sweep, sweep_point, Arm, ArmSummary, CalibrationRecord,
    MetricsReport, TrainRow,
};
pub use output::{parse_csv, to_csv, CsvRun, CSV_COLUMNS};
