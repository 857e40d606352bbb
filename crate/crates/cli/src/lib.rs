//! Command-line front end for historical control limits: data ingestion,
//! limit and calibration reports, data simulation, coverage grids and
//! control charts.

pub mod chart;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod grid;
pub mod ingest;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
pub use format::expected_exceedance;
