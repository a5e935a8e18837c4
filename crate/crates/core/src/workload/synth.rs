//! Synthetic workloads with a controlled read ratio and cold ratio.
//!
//! The address span is split into a cold region that is never written and a
//! hot region that writes keep updating. A cold read picks any cold extent;
//! a hot read picks an extent that has already been written in the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{IoOp, IoRequest};
use crate::error::TraceError;
use crate::timing::Nanos;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub read_ratio: f64,
    /// Fraction of reads that target the cold region.
    pub cold_ratio: f64,
    pub request_count: usize,
    /// Logical pages addressed by the workload.
    pub address_span: u64,
    /// Leading pages of the span that are never written.
    pub cold_region_pages: u64,
    /// Mean of the exponential inter-arrival gap.
    pub mean_interarrival: Nanos,
    pub size_bytes: u64,
    pub page_bytes: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            read_ratio: 0.98,
            cold_ratio: 0.72,
            request_count: 10_000,
            address_span: 1 << 20,
            cold_region_pages: 1 << 19,
            mean_interarrival: Nanos::from_us(200),
            size_bytes: 16 * 1024,
            page_bytes: 16 * 1024,
        }
    }
}

/// `(name, read_ratio, cold_ratio)` of the evaluated workloads.
pub const PRESETS: [(&str, f64, f64); 12] = [
    ("stg_0", 0.15, 0.38),
    ("hm_0", 0.36, 0.22),
    ("prn_0", 0.75, 0.72),
    ("proj", 0.89, 0.96),
    ("mds", 0.92, 0.98),
    ("usr", 0.96, 0.73),
    ("ycsb-a", 0.98, 0.72),
    ("ycsb-b", 0.99, 0.59),
    ("ycsb-c", 0.99, 0.60),
    ("ycsb-d", 0.98, 0.58),
    ("ycsb-e", 0.99, 0.98),
    ("ycsb-f", 0.98, 0.87),
];

/// Default spec with the named workload's ratios.
pub fn preset(name: &str) -> Option<WorkloadSpec> {
    PRESETS.iter().find(|(n, ..)| n.eq_ignore_ascii_case(name)).map(|&(_, read_ratio, cold_ratio)| WorkloadSpec {
        read_ratio,
        cold_ratio,
        ..WorkloadSpec::default()
    })
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Spec(m.to_string()));
        if !(0.0..=1.0).contains(&self.read_ratio) || !(0.0..=1.0).contains(&self.cold_ratio) {
            return bad("read_ratio and cold_ratio must lie in [0, 1]");
        }
        if self.size_bytes == 0 || self.page_bytes == 0 {
            return bad("size_bytes and page_bytes must be positive");
        }
        if self.mean_interarrival == Nanos::ZERO {
            return bad("mean inter-arrival must be positive");
        }
        if self.cold_region_pages > self.address_span {
            return bad("cold region larger than address span");
        }
        let extent = self.extent_pages();
        let (cold, hot) = self.slots();
        if self.cold_ratio > 0.0 && self.read_ratio > 0.0 && cold == 0 {
            return bad("cold region holds no whole extent");
        }
        let needs_hot = self.read_ratio < 1.0 || self.cold_ratio < 1.0;
        if needs_hot && hot == 0 {
            return bad("hot region holds no whole extent");
        }
        if extent > self.address_span {
            return bad("request size exceeds address span");
        }
        Ok(())
    }

    fn extent_pages(&self) -> u64 {
        self.size_bytes.div_ceil(self.page_bytes)
    }

    /// Extent-aligned slots in the cold and hot regions.
    fn slots(&self) -> (u64, u64) {
        let k = self.extent_pages();
        let cold = self.cold_region_pages / k;
        let hot_start = cold * k;
        (cold, (self.address_span - hot_start) / k)
    }
}

/// Generates `spec.request_count` requests; a pure function of `(spec, seed)`.
///
/// Until the first write lands, a hot read has nothing to target and is
/// emitted as a write instead.
pub fn synthesize(spec: &WorkloadSpec, seed: u64) -> Result<Vec<IoRequest>, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(1.0 / spec.mean_interarrival.0 as f64).expect("positive rate");
    let k = spec.extent_pages();
    let (cold_slots, hot_slots) = spec.slots();
    let hot_lba = |slot: u64| (cold_slots + slot) * k;

    let mut written_flag = vec![false; hot_slots as usize];
    let mut written: Vec<u64> = Vec::new();
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(spec.request_count);
    for i in 0..spec.request_count {
        if i > 0 {
            t += gaps.sample(&mut rng);
        }
        let arrival = Nanos(t.round() as u64);
        let is_read = rng.random_bool(spec.read_ratio);
        let cold = is_read && rng.random_bool(spec.cold_ratio);
        let req = if cold {
            IoRequest {
                arrival,
                op: IoOp::Read,
                lba: rng.random_range(0..cold_slots) * k,
                size_bytes: spec.size_bytes,
                cold: true,
            }
        } else if is_read && !written.is_empty() {
            let slot = written[rng.random_range(0..written.len())];
            IoRequest { arrival, op: IoOp::Read, lba: hot_lba(slot), size_bytes: spec.size_bytes, cold: false }
        } else {
            let slot = rng.random_range(0..hot_slots);
            if !written_flag[slot as usize] {
                written_flag[slot as usize] = true;
                written.push(slot);
            }
            IoRequest { arrival, op: IoOp::Write, lba: hot_lba(slot), size_bytes: spec.size_bytes, cold: false }
        };
        out.push(req);
    }
    Ok(out)
}
