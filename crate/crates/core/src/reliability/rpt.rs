//! Read-timing parameter table: per-(PEC, retention) safe tPRE reduction.
//!
//! Binary layout, row-major over (pec, retention), 4 bytes per entry:
//! `pec: u16 LE | retention_months: u8 | reduction_pct: u8`.
//! Text layout: one `pec,retention_months,reduction_pct` line per entry.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{OperatingCondition, RetryCalibration};
use crate::error::ReliabilityError;
use crate::timing::TpreReduction;

pub const DEFAULT_PEC_BUCKETS: [u32; 6] = [0, 250, 500, 750, 1000, 2000];
pub const DEFAULT_RETENTION_BUCKETS: [u32; 6] = [0, 1, 2, 3, 6, 12];

pub const ENTRY_BYTES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RptTable {
    pec_buckets: Vec<u32>,
    retention_buckets: Vec<u32>,
    reduction_pct: Vec<u8>,
}

fn check_buckets(name: &str, buckets: &[u32], max: u32) -> Result<(), ReliabilityError> {
    if buckets.is_empty() {
        return Err(ReliabilityError::Rpt(format!("{name} buckets are empty")));
    }
    if buckets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ReliabilityError::Rpt(format!("{name} buckets must be strictly increasing")));
    }
    if buckets[buckets.len() - 1] > max {
        return Err(ReliabilityError::Rpt(format!("{name} bucket exceeds {max}")));
    }
    Ok(())
}

impl RptTable {
    pub fn new(
        pec_buckets: Vec<u32>,
        retention_buckets: Vec<u32>,
        reduction_pct: Vec<u8>,
    ) -> Result<Self, ReliabilityError> {
        check_buckets("pec", &pec_buckets, u32::from(u16::MAX))?;
        check_buckets("retention", &retention_buckets, u32::from(u8::MAX))?;
        if reduction_pct.len() != pec_buckets.len() * retention_buckets.len() {
            return Err(ReliabilityError::Rpt("entry count does not match bucket grid".into()));
        }
        if reduction_pct.iter().any(|&p| p >= 100) {
            return Err(ReliabilityError::Rpt("reduction must be below 100%".into()));
        }
        Ok(RptTable { pec_buckets, retention_buckets, reduction_pct })
    }

    /// A single-bucket table applying `pct` everywhere.
    pub fn uniform(pct: u8) -> Result<Self, ReliabilityError> {
        RptTable::new(vec![0], vec![0], vec![pct])
    }

    /// Profiles the safe reduction of every bucket corner.
    pub fn build(
        cal: &RetryCalibration,
        pec_buckets: &[u32],
        retention_buckets: &[u32],
    ) -> Result<Self, ReliabilityError> {
        check_buckets("pec", pec_buckets, u32::from(u16::MAX))?;
        check_buckets("retention", retention_buckets, u32::from(u8::MAX))?;
        let pec_axis = cal.mean_nrr.axis(super::PEC_AXIS).expect("validated");
        let ret_axis = cal.mean_nrr.axis(super::RETENTION_AXIS).expect("validated");
        let mut pct = Vec::with_capacity(pec_buckets.len() * retention_buckets.len());
        for &pec in pec_buckets {
            if f64::from(pec) > pec_axis.max() {
                return Err(ReliabilityError::OutOfGrid {
                    what: "pec bucket",
                    value: f64::from(pec),
                    lo: pec_axis.min(),
                    hi: pec_axis.max(),
                });
            }
            for &ret in retention_buckets {
                if f64::from(ret) > ret_axis.max() {
                    return Err(ReliabilityError::OutOfGrid {
                        what: "retention bucket",
                        value: f64::from(ret),
                        lo: ret_axis.min(),
                        hi: ret_axis.max(),
                    });
                }
                let cond = OperatingCondition::new(pec, f64::from(ret), cal.worst_temperature());
                pct.push(cal.min_safe_tpre(&cond).percent());
            }
        }
        RptTable::new(pec_buckets.to_vec(), retention_buckets.to_vec(), pct)
    }

    pub fn build_default(cal: &RetryCalibration) -> Result<Self, ReliabilityError> {
        RptTable::build(cal, &DEFAULT_PEC_BUCKETS, &DEFAULT_RETENTION_BUCKETS)
    }

    pub fn len(&self) -> usize {
        self.reduction_pct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reduction_pct.is_empty()
    }

    pub fn pec_buckets(&self) -> &[u32] {
        &self.pec_buckets
    }

    pub fn retention_buckets(&self) -> &[u32] {
        &self.retention_buckets
    }

    /// `(pec, retention_months, reduction_pct)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, u8)> + '_ {
        let cols = self.retention_buckets.len();
        self.reduction_pct
            .iter()
            .enumerate()
            .map(move |(i, &pct)| (self.pec_buckets[i / cols], self.retention_buckets[i % cols], pct))
    }

    fn floor_index(buckets: &[u32], x: f64) -> usize {
        buckets.iter().rposition(|&b| f64::from(b) <= x).unwrap_or(0)
    }

    /// Floor bucketing on both axes; conditions below the first bucket use it.
    pub fn lookup(&self, cond: &OperatingCondition) -> TpreReduction {
        let i = Self::floor_index(&self.pec_buckets, f64::from(cond.pec));
        let j = Self::floor_index(&self.retention_buckets, cond.retention_months);
        let pct = self.reduction_pct[i * self.retention_buckets.len() + j];
        TpreReduction::from_percent(pct).expect("validated below 100%")
    }

    /// Reductions never grow with PEC or retention.
    pub fn is_monotone(&self) -> bool {
        let cols = self.retention_buckets.len();
        let at = |i: usize, j: usize| self.reduction_pct[i * cols + j];
        (0..self.pec_buckets.len()).all(|i| {
            (0..cols).all(|j| {
                (j + 1 >= cols || at(i, j + 1) <= at(i, j))
                    && (i + 1 >= self.pec_buckets.len() || at(i + 1, j) <= at(i, j))
            })
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * ENTRY_BYTES);
        for (pec, ret, pct) in self.entries() {
            out.extend_from_slice(&(pec as u16).to_le_bytes());
            out.push(ret as u8);
            out.push(pct);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ReliabilityError> {
        if bytes.is_empty() || !bytes.len().is_multiple_of(ENTRY_BYTES) {
            return Err(ReliabilityError::Rpt(format!("length {} is not a multiple of {ENTRY_BYTES}", bytes.len())));
        }
        let entries = bytes
            .chunks_exact(ENTRY_BYTES)
            .map(|c| (u32::from(u16::from_le_bytes([c[0], c[1]])), u32::from(c[2]), c[3]));
        Self::from_entries(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("pec,retention_months,reduction_pct\n");
        for (pec, ret, pct) in self.entries() {
            let _ = writeln!(s, "{pec},{ret},{pct}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ReliabilityError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("pec")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || ReliabilityError::Rpt(format!("line {}: expected pec,retention_months,reduction_pct", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            entries.push((
                fields[0].parse().map_err(|_| bad())?,
                fields[1].parse().map_err(|_| bad())?,
                fields[2].parse().map_err(|_| bad())?,
            ));
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: impl IntoIterator<Item = (u32, u32, u8)>) -> Result<Self, ReliabilityError> {
        let entries: Vec<_> = entries.into_iter().collect();
        let mut pecs: Vec<u32> = entries.iter().map(|e| e.0).collect();
        pecs.dedup();
        let rets: Vec<u32> = entries.iter().take_while(|e| e.0 == entries[0].0).map(|e| e.1).collect();
        let table = RptTable::new(pecs, rets, entries.iter().map(|e| e.2).collect())?;
        if table.entries().ne(entries.iter().copied()) {
            return Err(ReliabilityError::Rpt("entries are not a row-major bucket grid".into()));
        }
        Ok(table)
    }
}
