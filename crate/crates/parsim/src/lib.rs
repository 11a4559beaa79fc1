//! Command-line harness and std services for `parsim-core`: scenario
//! files, in-process and TCP transports, trace files and their comparison,
//! run reports.

pub mod config;
pub mod inproc;
pub mod report;
pub mod run;
pub mod tcp;
pub mod trace;

pub use config::{load_config, parse_config};
pub use run::{run, Mode, RunConfig};
