//! Block-I/O workloads: MSRC trace ingestion, the normalized trace format,
//! and synthetic read/cold-ratio generators.

mod msrc;
mod normalized;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use msrc::{parse_msrc, parse_msrc_str};
pub use normalized::{read_normalized, read_normalized_str, to_normalized_string, write_normalized};
pub use synth::{preset, synthesize, WorkloadSpec, PRESETS};

use crate::error::TraceError;
use crate::timing::Nanos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IoOp {
    Read,
    Write,
    /// Erases the block holding `lba`.
    Erase,
}

impl IoOp {
    pub fn code(self) -> char {
        match self {
            IoOp::Read => 'R',
            IoOp::Write => 'W',
            IoOp::Erase => 'E',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoRequest {
    pub arrival: Nanos,
    pub op: IoOp,
    /// First logical page of the extent.
    pub lba: u64,
    pub size_bytes: u64,
    /// Reads only: no page of the extent is written anywhere in the workload.
    pub cold: bool,
}

impl IoRequest {
    /// Logical pages covered, at least one.
    pub fn page_count(&self, page_bytes: u64) -> u64 {
        self.size_bytes.div_ceil(page_bytes).max(1)
    }
}

/// Read ratio over all requests and cold ratio over reads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub requests: usize,
    pub reads: usize,
    pub cold_reads: usize,
    pub read_ratio: f64,
    pub cold_ratio: f64,
}

pub fn trace_stats(reqs: &[IoRequest]) -> TraceStats {
    let reads = reqs.iter().filter(|r| r.op == IoOp::Read).count();
    let cold_reads = reqs.iter().filter(|r| r.op == IoOp::Read && r.cold).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    TraceStats {
        requests: reqs.len(),
        reads,
        cold_reads,
        read_ratio: ratio(reads, reqs.len()),
        cold_ratio: ratio(cold_reads, reads),
    }
}

/// Marks each read cold iff none of its pages is written by any request.
pub fn tag_cold(reqs: &mut [IoRequest], page_bytes: u64) {
    let written: HashSet<u64> =
        reqs.iter().filter(|r| r.op == IoOp::Write).flat_map(|r| r.lba..r.lba + r.page_count(page_bytes)).collect();
    for r in reqs.iter_mut() {
        r.cold = r.op == IoOp::Read && (r.lba..r.lba + r.page_count(page_bytes)).all(|p| !written.contains(&p));
    }
}

/// Trace file format, detected from the first record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Msrc,
    Normalized,
}

pub fn detect_format(text: &str) -> Result<TraceFormat, TraceError> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).ok_or(TraceError::Empty)?;
    match line.split(',').count() {
        5 => Ok(TraceFormat::Normalized),
        7 => Ok(TraceFormat::Msrc),
        n => Err(TraceError::Parse { line: 1, msg: format!("expected 5 or 7 fields, found {n}") }),
    }
}

/// Loads a trace in either format.
pub fn load_trace(path: &Path, page_bytes: u64) -> Result<Vec<IoRequest>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    match detect_format(&text)? {
        TraceFormat::Msrc => parse_msrc_str(&text, page_bytes),
        TraceFormat::Normalized => read_normalized_str(&text),
    }
}
