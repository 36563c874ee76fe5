//! File formats, configuration, run manifests and a parallel experiment
//! runner around `vlearn-core`, plus the `vlearn` command-line tool.
//!
//! Dataset CSV layout: one row per `(patient_id, t)` with state columns
//! `s_1..s_p`, `action` and `utility`; the final row of each patient
//! leaves `action` and `utility` empty. Optional `followup` (0/1) and
//! `propensity` (probability of the logged action) columns are read when
//! present.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;

pub use error::CliError;
