//! Experiment orchestration for the wsp workbench: config, corpus bundles,
//! training regimes, sweeps, and reports.

pub mod config;
pub mod corpora;
pub mod experiment;
pub mod report;
pub mod results;
pub mod sweep;

pub use config::{Config, DecodeKind, Regime};
pub use experiment::{CellSpec, Workbench};
pub use sweep::{run_sweep, SweepOutcome};
