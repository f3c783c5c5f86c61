//! Discrete-time simulation of an islanded three-phase microgrid formed by a
//! Y-source inverter under virtual synchronous generator control.
//!
//! Modules, bottom up: [`transforms`] (three-phase types and Park
//! transforms), [`ynetwork`] (impedance network gain and DC link),
//! [`analysis`] (power, RMS, THD), [`control`] (droop, swing equation,
//! cascaded dq loops), [`plant`] (filter and loads, RK4), [`config`]
//! (parameters and validation), and [`runner`] (scenario execution and
//! output files).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod control;
pub mod plant;
pub mod runner;
pub mod transforms;
pub mod ynetwork;

pub use config::{load_config, validate, Config, ValidatedConfig};
pub use runner::{run_scenario, SimError, SimOutput};
