//! Experiment orchestration behind the command-line tool.

pub mod config;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use config::{RsiSweep, SimConfig};
pub use experiments::{crossover_db, rsi_crossover, run_experiment, EXPERIMENTS};
pub use output::{emit_results, read_csv, ExperimentResult, Format, Row};
pub use scenario::{snr_to_transmit_power, Impairments, RfDesign, Scenario, TrialSe};
