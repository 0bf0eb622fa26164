//! Synthetic worlds, device models, experiment sweeps and load analysis.

pub mod devices;
pub mod experiment;
pub mod export;
pub mod load;
pub mod report;
pub mod trends;
pub mod world;

pub use devices::{build_fleet, populate_devices, sample_scan, DeviceProfile, FleetConfig};
pub use experiment::{
    run_cell, run_experiment, run_experiment_on, score, Cell, CellParams, ExperimentOutput, ExperimentSpec, Outcome,
    Testbed, WeightingMode, SEED_ENV,
};
pub use load::{simulate_weekly_load, theoretical_request_load, LoadReport};
pub use report::{AccuracyReport, CellSummary, Estimate, RunResult};
pub use world::{generate_world, World, WorldConfig};
