//! NAND timing parameters and the page-sensing latency decomposition.
//!
//! All durations are integer nanoseconds. A page read senses the cell array
//! `n_sense` times, and every sensing round runs a precharge, an evaluation
//! and a discharge phase back to back.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// A duration or timestamp in nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_us(us: u64) -> Self {
        Nanos(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        Nanos(ms * 1_000_000)
    }

    /// Converts a microsecond value with at most 0.1 us resolution.
    pub fn from_us_f64(us: f64) -> Result<Self, ConfigError> {
        if !us.is_finite() || us < 0.0 {
            return Err(ConfigError::Invalid(format!("duration {us} us must be finite and non-negative")));
        }
        let tenths = (us * 10.0).round();
        if (us * 10.0 - tenths).abs() > 1e-6 {
            return Err(ConfigError::Invalid(format!("duration {us} us is finer than 0.1 us")));
        }
        Ok(Nanos(tenths as u64 * 100))
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn saturating_sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl Mul<u64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: u64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl Sum for Nanos {
    fn sum<I: Iterator<Item = Nanos>>(iter: I) -> Nanos {
        Nanos(iter.map(|n| n.0).sum())
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03} us", self.0 / 1_000, self.0 % 1_000)
    }
}

/// Which bit of a TLC cell a page stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageType {
    Lsb,
    Csb,
    Msb,
}

impl PageType {
    pub const ALL: [PageType; 3] = [PageType::Lsb, PageType::Csb, PageType::Msb];

    /// Number of sensing rounds needed to resolve this page's bit.
    pub fn n_sense(self) -> u64 {
        match self {
            PageType::Lsb | PageType::Msb => 2,
            PageType::Csb => 3,
        }
    }

    /// Cyclic assignment of page types to page indices within a block.
    pub fn of_page_index(page: u32) -> Self {
        PageType::ALL[(page % 3) as usize]
    }
}

impl fmt::Display for PageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PageType::Lsb => "LSB",
            PageType::Csb => "CSB",
            PageType::Msb => "MSB",
        })
    }
}

/// A fraction of the default precharge time that is cut, in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TpreReduction(f64);

impl TpreReduction {
    pub const NONE: TpreReduction = TpreReduction(0.0);

    pub fn new(fraction: f64) -> Result<Self, ConfigError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(ConfigError::Invalid(format!("tPRE reduction {fraction} outside [0, 1)")));
        }
        Ok(TpreReduction(fraction))
    }

    pub fn from_percent(pct: u8) -> Result<Self, ConfigError> {
        Self::new(f64::from(pct) / 100.0)
    }

    pub fn fraction(self) -> f64 {
        self.0
    }

    /// Rounded to the nearest whole percent.
    pub fn percent(self) -> u8 {
        (self.0 * 100.0).round() as u8
    }
}

impl TryFrom<f64> for TpreReduction {
    type Error = ConfigError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        TpreReduction::new(v)
    }
}

impl From<TpreReduction> for f64 {
    fn from(r: TpreReduction) -> f64 {
        r.0
    }
}

/// Chip and controller timing parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingParams {
    pub tpre: Nanos,
    pub teval: Nanos,
    pub tdisch: Nanos,
    /// Chip-to-controller transfer of one 16 KiB page.
    pub tdma: Nanos,
    /// ECC decode of one page.
    pub tecc: Nanos,
    /// SET FEATURE command.
    pub tset: Nanos,
    /// RESET of an in-flight read.
    pub trst: Nanos,
    pub tprog: Nanos,
    pub tbers: Nanos,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            tpre: Nanos::from_us(24),
            teval: Nanos::from_us(5),
            tdisch: Nanos::from_us(10),
            tdma: Nanos::from_us(16),
            tecc: Nanos::from_us(20),
            tset: Nanos::from_us(1),
            trst: Nanos::from_us(5),
            tprog: Nanos::from_us(700),
            tbers: Nanos::from_ms(5),
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("tpre", self.tpre),
            ("teval", self.teval),
            ("tdisch", self.tdisch),
            ("tdma", self.tdma),
            ("tecc", self.tecc),
            ("tset", self.tset),
            ("trst", self.trst),
            ("tprog", self.tprog),
            ("tbers", self.tbers),
        ];
        for (name, value) in fields {
            if value == Nanos::ZERO {
                return Err(ConfigError::Invalid(format!("timing parameter {name} must be positive")));
            }
        }
        Ok(())
    }

    /// One sensing round: tPRE + tEVAL + tDISCH.
    pub fn sense_round(&self) -> Nanos {
        self.tpre + self.teval + self.tdisch
    }

    /// Chip-level page sensing latency tR.
    pub fn sense_latency(&self, page: PageType) -> Nanos {
        self.sense_round() * page.n_sense()
    }

    /// Precharge time after cutting `reduction` of it, rounded to the nearest ns.
    pub fn reduced_tpre(&self, reduction: TpreReduction) -> Nanos {
        Nanos((self.tpre.0 as f64 * (1.0 - reduction.fraction())).round() as u64)
    }

    /// tR with only the precharge phase shortened.
    pub fn reduced_sense_latency(&self, page: PageType, reduction: TpreReduction) -> Nanos {
        (self.reduced_tpre(reduction) + self.teval + self.tdisch) * page.n_sense()
    }

    /// One regular read step: sense, transfer and decode.
    pub fn step_latency(&self, page: PageType) -> Nanos {
        self.sense_latency(page) + self.tdma + self.tecc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_sense() -> TimingParams {
        TimingParams { tpre: Nanos::ZERO, teval: Nanos::ZERO, tdisch: Nanos::ZERO, ..TimingParams::default() }
    }

    #[test]
    fn defaults_match_chip_table() {
        let t = TimingParams::default();
        assert_eq!(t.tpre, Nanos(24_000));
        assert_eq!(t.teval, Nanos(5_000));
        assert_eq!(t.tdisch, Nanos(10_000));
        assert_eq!(t.tdma, Nanos(16_000));
        assert_eq!(t.tecc, Nanos(20_000));
        assert_eq!(t.tset, Nanos(1_000));
        assert_eq!(t.trst, Nanos(5_000));
        assert_eq!(t.tprog, Nanos(700_000));
        assert_eq!(t.tbers, Nanos(5_000_000));
        t.validate().unwrap();
        // 24:5:10 is roughly 5:1:2
        assert!((t.tpre.0 as f64 / t.teval.0 as f64 - 5.0).abs() < 0.3);
        assert!((t.tdisch.0 as f64 / t.teval.0 as f64 - 2.0).abs() < 0.3);
    }

    #[test]
    fn sense_latency_examples() {
        let t = TimingParams::default();
        assert_eq!(t.sense_latency(PageType::Lsb), Nanos::from_us(78));
        assert_eq!(t.sense_latency(PageType::Csb), Nanos::from_us(117));
        assert_eq!(t.sense_latency(PageType::Msb), Nanos::from_us(78));
        for p in PageType::ALL {
            assert_eq!(zero_sense().sense_latency(p), Nanos::ZERO);
        }
        let mean: f64 = PageType::ALL.iter().map(|&p| t.sense_latency(p).as_us_f64()).sum::<f64>() / 3.0;
        assert_eq!(mean, 91.0);
        assert!((mean - 90.0).abs() <= 2.0);
    }

    #[test]
    fn reduced_sense_latency_examples() {
        let t = TimingParams::default();
        let r40 = TpreReduction::new(0.40).unwrap();
        assert_eq!(t.reduced_sense_latency(PageType::Lsb, r40), Nanos(58_800));
        for p in PageType::ALL {
            assert_eq!(t.reduced_sense_latency(p, TpreReduction::NONE), t.sense_latency(p));
        }
        let cut: f64 = 1.0 - 58_800.0 / 78_000.0;
        assert!((cut - 0.246).abs() < 0.001);
    }

    #[test]
    fn reduction_bounds() {
        assert!(TpreReduction::new(1.0).is_err());
        assert!(TpreReduction::new(-0.01).is_err());
        assert!(TpreReduction::new(0.999).is_ok());
        assert_eq!(TpreReduction::from_percent(54).unwrap().percent(), 54);
    }

    #[test]
    fn microsecond_conversion_is_exact() {
        assert_eq!(Nanos::from_us_f64(58.8).unwrap(), Nanos(58_800));
        assert_eq!(Nanos::from_us_f64(0.1).unwrap(), Nanos(100));
        assert!(Nanos::from_us_f64(0.05).is_err());
        assert!(Nanos::from_us_f64(-1.0).is_err());
    }

    #[test]
    fn zero_duration_rejected() {
        let t = TimingParams { tset: Nanos::ZERO, ..TimingParams::default() };
        assert!(t.validate().is_err());
    }

    fn positive_timing() -> impl Strategy<Value = TimingParams> {
        (1u64..100_000, 1u64..100_000, 1u64..100_000).prop_map(|(a, b, c)| TimingParams {
            tpre: Nanos(a),
            teval: Nanos(b),
            tdisch: Nanos(c),
            ..TimingParams::default()
        })
    }

    proptest! {
        #[test]
        fn page_type_ordering(t in positive_timing()) {
            prop_assert_eq!(t.sense_latency(PageType::Lsb), t.sense_latency(PageType::Msb));
            prop_assert!(t.sense_latency(PageType::Csb) > t.sense_latency(PageType::Lsb));
        }

        #[test]
        fn reduction_strictly_decreasing(a in 0u32..990, b in 0u32..990) {
            prop_assume!(a < b);
            let t = TimingParams::default();
            let ra = TpreReduction::new(f64::from(a) / 1000.0).unwrap();
            let rb = TpreReduction::new(f64::from(b) / 1000.0).unwrap();
            for p in PageType::ALL {
                prop_assert!(t.reduced_sense_latency(p, rb) < t.reduced_sense_latency(p, ra));
            }
        }
    }
}
