//! Calibration tables for retry-step counts and final-step error counts.
//!
//! The default tables are piecewise-linear surfaces whose grid points sit on
//! the characterization anchors of a 3D TLC part:
//!
//! * retry steps: none on fresh pages, more than three on every read after
//!   3 months at 0 P/E cycles, 54.4% of reads at seven or more steps after
//!   6 months, at least eight steps at 1K cycles and 3 months, and a mean of
//!   19.9 steps at 2K cycles and 12 months;
//! * final-step errors at 85 degC: 15 at (0, 3 mo), 30 at (1K, 12 mo) and 35
//!   at (2K, 12 mo); 30 and 55 degC add 5 and 3 errors respectively;
//! * extra errors from a shorter precharge: 35 at (1K, 0 mo) for a 54% cut,
//!   a 47% cut costs 60% more at (2K, 12 mo) than at (2K, 0 mo), and the
//!   temperature penalty grows to 7 errors at (2K, 12 mo).
//!
//! Grid values between anchors are modelling choices and can be replaced
//! through a calibration file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{Axis, Grid};
use super::{effective_retention_months, OperatingCondition};
use crate::error::{ConfigError, ReliabilityError};
use crate::timing::TpreReduction;

pub const PEC_AXIS: &str = "pec";
pub const RETENTION_AXIS: &str = "retention_months";
pub const TEMP_AXIS: &str = "temp_c";
pub const REDUCTION_AXIS: &str = "reduction";

const NODE_EPS: f64 = 1e-9;

/// Retry-step count drawn for one page read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetrySample {
    pub steps: u32,
    /// The page needed more steps than the vendor Vref set provides.
    pub exhausted: bool,
    /// The condition fell outside the calibrated grid and was clamped.
    pub clamped: bool,
}

/// Which read-timing phase is shortened in a what-if query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingKnob {
    Tpre,
    Teval,
    Tdisch,
}

/// Per-page random draws, fixed by `(page_id, seed)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageDraw {
    pub jitter_u: f64,
    pub outlier_u: f64,
}

impl PageDraw {
    pub fn new(page_id: u64, seed: u64) -> Self {
        let a = splitmix64(seed ^ splitmix64(page_id));
        let b = splitmix64(a);
        PageDraw { jitter_u: unit_interval(a), outlier_u: unit_interval(b) }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Maps to the open interval (0, 1).
fn unit_interval(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryCalibration {
    /// Correctable bits per 1 KiB codeword.
    pub ecc_capability: u32,
    /// Bits reserved for temperature drift and outlier pages.
    pub safety_margin_bits: u32,
    /// Standard deviation of the per-page retry-step jitter.
    pub jitter_sigma: f64,
    /// Jitter is truncated symmetrically at this many sigmas.
    pub jitter_truncation: f64,
    pub max_retry_steps: u32,
    /// Probability that a reduced-tPRE retry chain fails and must be re-run.
    pub outlier_probability: f64,
    pub activation_energy_ev: f64,
    pub mean_nrr: Grid,
    pub nrr_floor: Grid,
    pub merr: Grid,
    pub delta_tpre: Grid,
    pub delta_teval: Grid,
    pub delta_tdisch: Grid,
}

impl Default for RetryCalibration {
    fn default() -> Self {
        default_calibration().expect("built-in calibration is well formed")
    }
}

const PEC_POINTS: [f64; 3] = [0.0, 1000.0, 2000.0];
const RET_POINTS: [f64; 5] = [0.0, 1.0, 3.0, 6.0, 12.0];
const TEMP_POINTS: [f64; 3] = [30.0, 55.0, 85.0];

#[rustfmt::skip]
const MEAN_NRR: [f64; 15] = [
    0.0, 2.0,  5.0,  6.72, 10.0,
    2.0, 6.0, 11.0, 13.0,  16.0,
    4.0, 9.0, 14.0, 16.5,  19.9,
];

#[rustfmt::skip]
const NRR_FLOOR: [f64; 15] = [
    0.0, 1.0, 4.0, 4.0,  5.0,
    0.0, 3.0, 8.0, 8.0,  9.0,
    1.0, 5.0, 8.0, 9.0, 12.0,
];

/// Final-step errors per 1 KiB at 85 degC.
#[rustfmt::skip]
const MERR_85C: [f64; 15] = [
    12.0, 13.0, 15.0, 17.0, 20.0,
    18.0, 20.0, 23.0, 26.0, 30.0,
    24.0, 26.0, 29.0, 32.0, 35.0,
];

/// Shape of the tPRE penalty curve at the mildest condition, 85 degC.
const TPRE_POINTS: [f64; 8] = [0.0, 0.10, 0.20, 0.30, 0.40, 0.47, 0.54, 0.60];
const TPRE_BASE: [f64; 8] = [0.0, 0.4, 1.0, 2.0, 5.0, 10.0, 28.0, 110.0];

/// Condition scaling of every reduction penalty curve.
#[rustfmt::skip]
const CONDITION_SCALE: [f64; 15] = [
    1.00, 1.05, 1.10, 1.20, 1.35,
    1.25, 1.30, 1.40, 1.55, 1.75,
    1.50, 1.60, 1.80, 2.05, 2.40,
];

/// Extra tPRE-reduction errors at 30 degC relative to 85 degC, reached at the
/// top of the reduction axis.
#[rustfmt::skip]
const TEMP_PENALTY_30C: [f64; 15] = [
    2.0, 2.2, 2.5, 3.0, 3.5,
    3.5, 3.8, 4.2, 4.8, 5.5,
    4.5, 5.0, 5.5, 6.2, 7.0,
];

const TEVAL_POINTS: [f64; 5] = [0.0, 0.10, 0.20, 0.30, 0.40];
const TEVAL_BASE: [f64; 5] = [0.0, 15.0, 30.0, 60.0, 100.0];
const TDISCH_POINTS: [f64; 6] = [0.0, 0.07, 0.20, 0.27, 0.30, 0.40];
const TDISCH_BASE: [f64; 6] = [0.0, 1.6, 6.4, 15.4, 20.0, 40.0];

fn node_index(points: &[f64], x: f64) -> usize {
    points.iter().position(|&p| p == x).expect("tabulated at grid node")
}

fn cond_table(table: &[f64; 15], pec: f64, ret: f64) -> f64 {
    table[node_index(&PEC_POINTS, pec) * RET_POINTS.len() + node_index(&RET_POINTS, ret)]
}

fn temp_offset(temp: f64) -> f64 {
    match temp as i64 {
        30 => 5.0,
        55 => 3.0,
        _ => 0.0,
    }
}

fn temp_penalty_share(temp: f64) -> f64 {
    match temp as i64 {
        30 => 1.0,
        55 => 0.6,
        _ => 0.0,
    }
}

fn default_calibration() -> Result<RetryCalibration, ReliabilityError> {
    let pec = || Axis::new(PEC_AXIS, &PEC_POINTS);
    let ret = || Axis::new(RETENTION_AXIS, &RET_POINTS);
    let temp = || Axis::new(TEMP_AXIS, &TEMP_POINTS);
    let top = TPRE_POINTS[TPRE_POINTS.len() - 1];

    let mean_nrr = Grid::new(vec![pec(), ret()], MEAN_NRR.to_vec())?;
    let nrr_floor = Grid::new(vec![pec(), ret()], NRR_FLOOR.to_vec())?;
    let merr = Grid::tabulate(vec![pec(), ret(), temp()], |c| cond_table(&MERR_85C, c[0], c[1]) + temp_offset(c[2]))?;
    let delta_tpre = Grid::tabulate(vec![Axis::new(REDUCTION_AXIS, &TPRE_POINTS), pec(), ret(), temp()], |c| {
        let base = TPRE_BASE[node_index(&TPRE_POINTS, c[0])];
        base * cond_table(&CONDITION_SCALE, c[1], c[2])
            + c[0] / top * temp_penalty_share(c[3]) * cond_table(&TEMP_PENALTY_30C, c[1], c[2])
    })?;
    let delta_teval = Grid::tabulate(vec![Axis::new(REDUCTION_AXIS, &TEVAL_POINTS), pec(), ret()], |c| {
        TEVAL_BASE[node_index(&TEVAL_POINTS, c[0])] * cond_table(&CONDITION_SCALE, c[1], c[2])
    })?;
    let delta_tdisch = Grid::tabulate(vec![Axis::new(REDUCTION_AXIS, &TDISCH_POINTS), pec(), ret()], |c| {
        TDISCH_BASE[node_index(&TDISCH_POINTS, c[0])] * cond_table(&CONDITION_SCALE, c[1], c[2])
    })?;

    let cal = RetryCalibration {
        ecc_capability: 72,
        safety_margin_bits: 14,
        jitter_sigma: 2.0,
        jitter_truncation: 3.0,
        max_retry_steps: 50,
        outlier_probability: 0.0,
        activation_energy_ev: super::activation_energy_from_anchor(13.0, 85.0, 8760.0, 30.0),
        mean_nrr,
        nrr_floor,
        merr,
        delta_tpre,
        delta_teval,
        delta_tdisch,
    };
    cal.validate()?;
    Ok(cal)
}

/// Rounds up, ignoring floating-point noise just above an integer.
fn ceil_bits(x: f64) -> u32 {
    (x - NODE_EPS).ceil().max(0.0) as u32
}

fn expect_axes(grid: &Grid, name: &str, axes: &[&str]) -> Result<(), ReliabilityError> {
    if grid.axis_names() != axes {
        return Err(ReliabilityError::Calibration(format!(
            "grid `{name}` must have axes {axes:?}, found {:?}",
            grid.axis_names()
        )));
    }
    Ok(())
}

impl RetryCalibration {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let cal: RetryCalibration =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), msg: e.to_string() })?;
        cal.validate().map_err(|e| ConfigError::Parse { path: path.into(), msg: e.to_string() })?;
        Ok(cal)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn validate(&self) -> Result<(), ReliabilityError> {
        let bad = |m: &str| Err(ReliabilityError::Calibration(m.to_string()));
        if self.ecc_capability == 0 || self.safety_margin_bits >= self.ecc_capability {
            return bad("safety margin must be below a positive ECC capability");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter_sigma must be finite and non-negative");
        }
        if !(self.jitter_truncation > 0.0 && self.jitter_truncation.is_finite()) {
            return bad("jitter_truncation must be positive");
        }
        if self.max_retry_steps == 0 {
            return bad("max_retry_steps must be positive");
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return bad("outlier_probability must lie in [0, 1]");
        }
        if !(self.activation_energy_ev > 0.0 && self.activation_energy_ev.is_finite()) {
            return bad("activation_energy_ev must be positive");
        }
        let cond_axes = [PEC_AXIS, RETENTION_AXIS];
        let temp_axes = [PEC_AXIS, RETENTION_AXIS, TEMP_AXIS];
        for (name, grid, axes) in [
            ("mean_nrr", &self.mean_nrr, &cond_axes[..]),
            ("nrr_floor", &self.nrr_floor, &cond_axes[..]),
            ("merr", &self.merr, &temp_axes[..]),
            ("delta_tpre", &self.delta_tpre, &[REDUCTION_AXIS, PEC_AXIS, RETENTION_AXIS, TEMP_AXIS][..]),
            ("delta_teval", &self.delta_teval, &[REDUCTION_AXIS, PEC_AXIS, RETENTION_AXIS][..]),
            ("delta_tdisch", &self.delta_tdisch, &[REDUCTION_AXIS, PEC_AXIS, RETENTION_AXIS][..]),
        ] {
            grid.validate()?;
            expect_axes(grid, name, axes)?;
            if grid.values.iter().any(|&v| v < 0.0) {
                return bad(&format!("grid `{name}` has negative values"));
            }
        }
        for grid in [&self.mean_nrr, &self.nrr_floor] {
            grid.check_monotone(PEC_AXIS, true)?;
            grid.check_monotone(RETENTION_AXIS, true)?;
        }
        for grid in [&self.merr, &self.delta_tpre] {
            grid.check_monotone(PEC_AXIS, true)?;
            grid.check_monotone(RETENTION_AXIS, true)?;
            grid.check_monotone(TEMP_AXIS, false)?;
        }
        for grid in [&self.delta_tpre, &self.delta_teval, &self.delta_tdisch] {
            grid.check_monotone(REDUCTION_AXIS, true)?;
            let r = grid.axis(REDUCTION_AXIS).expect("checked axes");
            if r.min() != 0.0 || r.max() >= 1.0 {
                return bad("reduction axes must start at 0 and stay below 1");
            }
            let per_row = grid.values.len() / r.points.len();
            if grid.values[..per_row].iter().any(|&v| v != 0.0) {
                return bad("extra errors must be zero at zero reduction");
            }
        }
        Ok(())
    }

    fn cond_coords(cond: &OperatingCondition) -> [f64; 2] {
        [f64::from(cond.pec), cond.retention_months]
    }

    /// Worst (coldest) calibrated temperature.
    pub fn worst_temperature(&self) -> f64 {
        self.merr.axis(TEMP_AXIS).expect("validated").min()
    }

    /// Largest tPRE reduction the penalty grid covers.
    pub fn max_tpre_reduction(&self) -> f64 {
        self.delta_tpre.axis(REDUCTION_AXIS).expect("validated").max()
    }

    pub fn mean_retry_steps(&self, cond: &OperatingCondition) -> f64 {
        self.mean_nrr.interpolate(&Self::cond_coords(cond)).value
    }

    /// Minimum retry steps every read needs under `cond`.
    pub fn retry_floor(&self, cond: &OperatingCondition) -> u32 {
        (self.nrr_floor.interpolate(&Self::cond_coords(cond)).value + NODE_EPS).floor() as u32
    }

    /// Deterministic retry-step count for one page.
    ///
    /// The per-page jitter is a normal deviate truncated symmetrically at
    /// `min(jitter_truncation * sigma, mean)`, so the continuous draw never
    /// goes negative and keeps the surface mean. It is rounded to a step count
    /// and clamped to `[floor(cond), max_retry_steps]`.
    pub fn sample_retry_steps(&self, cond: &OperatingCondition, page_id: u64, seed: u64) -> RetrySample {
        self.sample_with_draw(cond, PageDraw::new(page_id, seed))
    }

    pub fn sample_with_draw(&self, cond: &OperatingCondition, draw: PageDraw) -> RetrySample {
        let lookup = self.mean_nrr.interpolate(&Self::cond_coords(cond));
        let floor_lookup = self.nrr_floor.interpolate(&Self::cond_coords(cond));
        let mean = lookup.value;
        let floor = (floor_lookup.value + NODE_EPS).floor() as u32;
        let jitter = if self.jitter_sigma > 0.0 && mean > 0.0 {
            let bound = (mean / self.jitter_sigma).min(self.jitter_truncation);
            self.jitter_sigma * truncated_standard_normal(draw.jitter_u, bound)
        } else {
            0.0
        };
        let raw = (mean + jitter).round().max(0.0) as u32;
        let steps = raw.max(floor);
        RetrySample {
            steps: steps.min(self.max_retry_steps),
            exhausted: steps > self.max_retry_steps,
            clamped: lookup.clamped || floor_lookup.clamped,
        }
    }

    /// Maximum raw bit errors per 1 KiB in the final, successful retry step.
    pub fn max_errors_final_step(&self, cond: &OperatingCondition) -> u32 {
        let [p, r] = Self::cond_coords(cond);
        ceil_bits(self.merr.interpolate(&[p, r, cond.temp_c]).value)
    }

    /// Additional final-step errors caused by cutting tPRE by `reduction`.
    pub fn delta_errors(&self, reduction: f64, cond: &OperatingCondition) -> Result<u32, ReliabilityError> {
        self.what_if_delta(TimingKnob::Tpre, reduction, cond)
    }

    /// Additional errors for shortening one timing phase.
    ///
    /// The tEVAL and tDISCH tables were characterized at 85 degC only, so
    /// `cond.temp_c` is ignored for those knobs.
    pub fn what_if_delta(
        &self,
        knob: TimingKnob,
        reduction: f64,
        cond: &OperatingCondition,
    ) -> Result<u32, ReliabilityError> {
        let grid = match knob {
            TimingKnob::Tpre => &self.delta_tpre,
            TimingKnob::Teval => &self.delta_teval,
            TimingKnob::Tdisch => &self.delta_tdisch,
        };
        let axis = grid.axis(REDUCTION_AXIS).expect("validated");
        if !(reduction >= axis.min() && reduction <= axis.max() + NODE_EPS) {
            return Err(ReliabilityError::OutOfGrid {
                what: "reduction",
                value: reduction,
                lo: axis.min(),
                hi: axis.max(),
            });
        }
        let [p, r] = Self::cond_coords(cond);
        let value = match knob {
            TimingKnob::Tpre => grid.interpolate(&[reduction, p, r, cond.temp_c]).value,
            _ => grid.interpolate(&[reduction, p, r]).value,
        };
        Ok(ceil_bits(value))
    }

    /// Final-step error budget for a candidate reduction, evaluated at the
    /// coldest calibrated temperature.
    pub fn margin_audit(
        &self,
        reduction: TpreReduction,
        cond: &OperatingCondition,
    ) -> Result<MarginAudit, ReliabilityError> {
        let worst = OperatingCondition { temp_c: self.worst_temperature(), ..*cond };
        let merr = self.max_errors_final_step(&worst);
        let delta = self.delta_errors(reduction.fraction(), &worst)?;
        Ok(MarginAudit { merr, delta, safety_margin: self.safety_margin_bits, ecc_capability: self.ecc_capability })
    }

    /// Largest whole-percent tPRE reduction that keeps the safety margin at
    /// the coldest temperature. Zero if nothing positive is safe.
    pub fn min_safe_tpre(&self, cond: &OperatingCondition) -> TpreReduction {
        let top = (self.max_tpre_reduction() * 100.0 + NODE_EPS).floor() as u8;
        for pct in (1..=top).rev() {
            let r = TpreReduction::from_percent(pct).expect("below 100%");
            if self.margin_audit(r, cond).map(|a| a.is_safe()).unwrap_or(false) {
                return r;
            }
        }
        TpreReduction::NONE
    }

    pub fn effective_retention(&self, elapsed: std::time::Duration, temp_c: f64) -> Result<f64, ReliabilityError> {
        effective_retention_months(elapsed, temp_c, self.activation_energy_ev)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarginAudit {
    pub merr: u32,
    pub delta: u32,
    pub safety_margin: u32,
    pub ecc_capability: u32,
}

impl MarginAudit {
    pub fn is_safe(&self) -> bool {
        self.merr + self.delta + self.safety_margin <= self.ecc_capability
    }

    /// Bits left after errors and the reserved margin; negative when unsafe.
    pub fn slack(&self) -> i64 {
        i64::from(self.ecc_capability) - i64::from(self.merr + self.delta + self.safety_margin)
    }
}

/// Inverse-CDF draw from a standard normal truncated to `[-bound, bound]`.
fn truncated_standard_normal(u: f64, bound: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if bound <= 0.0 {
        return 0.0;
    }
    let n = Normal::standard();
    let lo = n.cdf(-bound);
    let hi = n.cdf(bound);
    n.inverse_cdf(lo + u * (hi - lo)).clamp(-bound, bound)
}
