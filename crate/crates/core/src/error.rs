use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown policy `{0}` (valid: baseline, pr2, ar2, pnar2, norr, pso, pso-pnar2, all)")]
    UnknownPolicy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

#[derive(Debug, Error)]
pub enum ReliabilityError {
    #[error("{what} = {value} outside calibrated range [{lo}, {hi}]")]
    OutOfGrid { what: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("temperature {0} degC is below absolute zero")]
    InvalidTemperature(f64),
    #[error("malformed calibration: {0}")]
    Calibration(String),
    #[error("malformed RPT: {0}")]
    Rpt(String),
    #[error("no safe tPRE reduction at pec {pec}, retention {retention_months} months")]
    Infeasible { pec: u32, retention_months: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("lba {lba} outside device range of {pages} pages")]
    LbaOutOfRange { lba: u64, pages: u64 },
    #[error("read of unprogrammed page (channel {channel}, die {die}, plane {plane}, block {block}, page {page})")]
    ReadBeforeProgram { channel: u32, die: u32, plane: u32, block: u32, page: u32 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace contains no records")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid workload: {0}")]
    Spec(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("deadlock at t={time_ns} ns: {pending} requests pending with no runnable event")]
    Deadlock { time_ns: u64, pending: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("reports do not share a run key: {0}")]
    Mismatch(String),
}

/// Any failure of a command-line run, mapped to its process exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Check(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Sim(SimError::Config(_)) => 2,
            RunError::Trace(_) => 3,
            RunError::Sim(_) | RunError::Reliability(_) | RunError::Check(_) => 4,
            RunError::Report(_) => 1,
        }
    }
}
