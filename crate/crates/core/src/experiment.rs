//! Sweeps of policies over operating conditions on one workload.

use rayon::prelude::*;

use crate::analytics::{RunKey, RunReport};
use crate::config::RunConfig;
use crate::error::{RunError, SimError};
use crate::kernel::{self, CalibratedRetries, SimConfig};
use crate::policy::PolicyKind;
use crate::reliability::{OperatingCondition, RetryCalibration, RptTable};
use crate::timing::Nanos;
use crate::workload::{load_trace, synthesize, IoRequest};

/// Everything a sweep cell needs; cells share it read-only.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// Device and timing; the condition's PEC and retention are set per cell.
    pub sim: SimConfig,
    pub calibration: RetryCalibration,
    pub rpt: RptTable,
    pub workload: Vec<IoRequest>,
    pub workload_label: String,
    pub seed: u64,
}

impl Experiment {
    pub fn new(
        mut sim: SimConfig,
        calibration: RetryCalibration,
        workload: Vec<IoRequest>,
        workload_label: impl Into<String>,
        seed: u64,
    ) -> Result<Self, RunError> {
        calibration.validate()?;
        let rpt = RptTable::build_default(&calibration)?;
        sim.activation_energy_ev = calibration.activation_energy_ev;
        sim.max_retry_steps = calibration.max_retry_steps;
        Ok(Experiment { sim, calibration, rpt, workload, workload_label: workload_label.into(), seed })
    }

    /// Loads calibration and workload named by a validated config.
    pub fn from_config(cfg: &RunConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        let calibration = match &cfg.reliability.calibration {
            Some(path) => RetryCalibration::load(path)?,
            None => RetryCalibration::default(),
        };
        let page_bytes = cfg.geometry.page_bytes;
        let workload = match &cfg.workload.trace {
            Some(path) => load_trace(path, page_bytes)?,
            None => synthesize(&cfg.workload.spec(page_bytes)?, cfg.seed)?,
        };
        let sim = SimConfig {
            geometry: cfg.geometry.clone(),
            timing: cfg.timing.to_params()?,
            condition: OperatingCondition::new(0, 0.0, cfg.reliability.temp_c),
            cache_read: cfg.kernel.cache_read,
            suspend_overhead: Nanos::from_us_f64(cfg.kernel.suspend_overhead_us)?,
            ..SimConfig::default()
        };
        Experiment::new(sim, calibration, workload, cfg.workload.label(), cfg.seed)
    }

    pub fn key(&self, pec: u32, retention_months: f64) -> RunKey {
        RunKey {
            workload: self.workload_label.clone(),
            seed: self.seed,
            pec,
            retention_months,
            temp_c: self.sim.condition.temp_c,
        }
    }

    pub fn run_cell(&self, policy: PolicyKind, pec: u32, retention_months: f64) -> Result<RunReport, SimError> {
        let sim = SimConfig {
            condition: OperatingCondition::new(pec, retention_months, self.sim.condition.temp_c),
            ..self.sim.clone()
        };
        let retries = CalibratedRetries { calibration: &self.calibration, seed: self.seed };
        let outcome = kernel::run(&sim, policy, &self.workload, &retries, &self.rpt)?;
        Ok(RunReport::from_outcome(self.key(pec, retention_months), policy, &outcome))
    }

    /// Runs every `(cell, policy)` pair in parallel. Reports come back
    /// cell-major in input order regardless of scheduling.
    pub fn run_sweep(&self, policies: &[PolicyKind], cells: &[(u32, f64)]) -> Result<Vec<RunReport>, SimError> {
        let jobs: Vec<(u32, f64, PolicyKind)> =
            cells.iter().flat_map(|&(p, r)| policies.iter().map(move |&k| (p, r, k))).collect();
        jobs.par_iter().map(|&(pec, ret, policy)| self.run_cell(policy, pec, ret)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadSpec;

    #[test]
    fn sweep_order_and_determinism() {
        let spec = WorkloadSpec { request_count: 300, ..WorkloadSpec::default() };
        let workload = synthesize(&spec, 5).unwrap();
        let exp = Experiment::new(SimConfig::default(), RetryCalibration::default(), workload, "t", 5).unwrap();
        let policies = [PolicyKind::Baseline, PolicyKind::PnAr2];
        let cells = [(0, 0.0), (2000, 12.0)];
        let a = exp.run_sweep(&policies, &cells).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!((a[1].policy, a[1].key.pec), (PolicyKind::PnAr2, 0));
        assert_eq!((a[2].policy, a[2].key.pec), (PolicyKind::Baseline, 2000));
        assert_eq!(a, exp.run_sweep(&policies, &cells).unwrap());
        assert!(a[3].stats.mean_us < a[2].stats.mean_us);
    }
}
