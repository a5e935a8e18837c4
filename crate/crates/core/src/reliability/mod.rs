//! NAND reliability model: retry-step counts, final-step error margins,
//! precharge-reduction penalties and retention aging.

mod calibration;
mod grid;
mod rpt;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use calibration::{
    MarginAudit, PageDraw, RetryCalibration, RetrySample, TimingKnob, PEC_AXIS, REDUCTION_AXIS, RETENTION_AXIS,
    TEMP_AXIS,
};
pub use grid::{Axis, Grid, Lookup};
pub use rpt::{RptTable, DEFAULT_PEC_BUCKETS, DEFAULT_RETENTION_BUCKETS};

use crate::error::ReliabilityError;

pub const BOLTZMANN_EV_PER_K: f64 = 8.617_333_262e-5;
pub const KELVIN_OFFSET: f64 = 273.15;
/// Retention ages are expressed at this temperature.
pub const REFERENCE_TEMP_C: f64 = 30.0;
pub const HOURS_PER_MONTH: f64 = 8760.0 / 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingCondition {
    pub pec: u32,
    /// Effective retention age at 30 degC.
    pub retention_months: f64,
    pub temp_c: f64,
}

impl OperatingCondition {
    pub fn new(pec: u32, retention_months: f64, temp_c: f64) -> Self {
        OperatingCondition { pec, retention_months, temp_c }
    }
}

/// Activation energy implied by "`stress_hours` at `stress_c` ages data like
/// `use_hours` at `use_c`".
pub fn activation_energy_from_anchor(stress_hours: f64, stress_c: f64, use_hours: f64, use_c: f64) -> f64 {
    let t_use = use_c + KELVIN_OFFSET;
    let t_stress = stress_c + KELVIN_OFFSET;
    (use_hours / stress_hours).ln() * BOLTZMANN_EV_PER_K / (1.0 / t_use - 1.0 / t_stress)
}

/// Arrhenius acceleration of `temp_c` relative to the 30 degC reference.
pub fn acceleration_factor(temp_c: f64, activation_energy_ev: f64) -> Result<f64, ReliabilityError> {
    if !temp_c.is_finite() || temp_c <= -KELVIN_OFFSET {
        return Err(ReliabilityError::InvalidTemperature(temp_c));
    }
    let t_use = REFERENCE_TEMP_C + KELVIN_OFFSET;
    let t_stress = temp_c + KELVIN_OFFSET;
    Ok((activation_energy_ev / BOLTZMANN_EV_PER_K * (1.0 / t_use - 1.0 / t_stress)).exp())
}

/// Retention age at 30 degC equivalent to `elapsed` spent at `temp_c`.
pub fn effective_retention_months(
    elapsed: Duration,
    temp_c: f64,
    activation_energy_ev: f64,
) -> Result<f64, ReliabilityError> {
    let af = acceleration_factor(temp_c, activation_energy_ev)?;
    Ok(elapsed.as_secs_f64() / 3600.0 * af / HOURS_PER_MONTH)
}

/// Retry steps left after Vref reuse from recently retried similar pages:
/// roughly a 70% cut, but never below three steps once a retry is needed.
pub fn pso_retry_steps(n_rr: u32) -> u32 {
    if n_rr <= 3 {
        n_rr
    } else {
        (n_rr * 3).div_ceil(10).max(3)
    }
}
