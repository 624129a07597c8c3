//! Job runner for the `monodromy` command: reads a JSON job config, runs
//! the requested pipeline and produces a JSON report plus optional CSV
//! plot data.

pub mod config;
pub mod jobs;
pub mod plot;
pub mod report;
pub mod schema;

pub use config::{JobConfig, JobKind, LoopSpec, SystemSpec, ToleranceSpec};
pub use jobs::run_job;
pub use report::{Report, Verdict};

/// Exit status for a report whose verdicts all pass or are skipped.
pub const EXIT_PASS: u8 = 0;
/// Exit status when some verdict fails.
pub const EXIT_FAIL: u8 = 1;
/// Exit status for invalid configs and runtime errors.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: monodromy::Error,
    },
    #[error("i/o: {0}")]
    Io(String),
}

/// Exit status for a finished report.
pub fn exit_status(report: &Report) -> u8 {
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
