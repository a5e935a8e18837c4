//! Read-path policies and their per-read latency composition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::reliability::{pso_retry_steps, OperatingCondition, RptTable};
use crate::timing::{Nanos, PageType, TimingParams, TpreReduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    Baseline,
    Pr2,
    Ar2,
    PnAr2,
    NoRr,
    Pso,
    PsoPnAr2,
}

/// How a policy changes the number of retry steps a page needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepTransform {
    Identity,
    /// Every read succeeds without retry.
    Zero,
    /// Vref reuse from recently retried pages.
    Pso,
}

/// Scheduling recipe the kernel follows for one policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recipe {
    /// Retry step `i + 1` senses while step `i` transfers and decodes.
    pub pipelined: bool,
    /// Retry steps run with the RPT's reduced tPRE after one SET FEATURE.
    pub adaptive: bool,
    pub steps: StepTransform,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Baseline,
        PolicyKind::Pr2,
        PolicyKind::Ar2,
        PolicyKind::PnAr2,
        PolicyKind::NoRr,
        PolicyKind::Pso,
        PolicyKind::PsoPnAr2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Pr2 => "pr2",
            PolicyKind::Ar2 => "ar2",
            PolicyKind::PnAr2 => "pnar2",
            PolicyKind::NoRr => "norr",
            PolicyKind::Pso => "pso",
            PolicyKind::PsoPnAr2 => "pso-pnar2",
        }
    }

    pub fn recipe(self) -> Recipe {
        let (pipelined, adaptive, steps) = match self {
            PolicyKind::Baseline => (false, false, StepTransform::Identity),
            PolicyKind::Pr2 => (true, false, StepTransform::Identity),
            PolicyKind::Ar2 => (false, true, StepTransform::Identity),
            PolicyKind::PnAr2 => (true, true, StepTransform::Identity),
            PolicyKind::NoRr => (false, false, StepTransform::Zero),
            PolicyKind::Pso => (false, false, StepTransform::Pso),
            PolicyKind::PsoPnAr2 => (true, true, StepTransform::Pso),
        };
        Recipe { pipelined, adaptive, steps }
    }

    /// Retry steps actually executed for a page that needs `n_rr`.
    pub fn effective_steps(self, n_rr: u32) -> u32 {
        match self.recipe().steps {
            StepTransform::Identity => n_rr,
            StepTransform::Zero => 0,
            StepTransform::Pso => pso_retry_steps(n_rr),
        }
    }

    /// Parses a comma-separated list; `all` expands to every policy.
    pub fn parse_list(s: &str) -> Result<Vec<PolicyKind>, ConfigError> {
        let mut out = Vec::new();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            if name.eq_ignore_ascii_case("all") {
                out.extend(PolicyKind::ALL);
            } else {
                out.push(name.parse()?);
            }
        }
        if out.is_empty() {
            return Err(ConfigError::UnknownPolicy(s.to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|p| seen.insert(*p));
        Ok(out)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| *c != '_' && *c != '-').collect();
        let kind = match key.as_str() {
            "baseline" => PolicyKind::Baseline,
            "pr2" => PolicyKind::Pr2,
            "ar2" => PolicyKind::Ar2,
            "pnar2" => PolicyKind::PnAr2,
            "norr" => PolicyKind::NoRr,
            "pso" => PolicyKind::Pso,
            "psopnar2" => PolicyKind::PsoPnAr2,
            _ => return Err(ConfigError::UnknownPolicy(s.to_string())),
        };
        Ok(kind)
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyKind> for String {
    fn from(p: PolicyKind) -> Self {
        p.name().to_string()
    }
}

/// Contention-free latency of one page read, split by phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadLatency {
    /// Retry steps executed after the policy's step transform.
    pub steps: u32,
    /// Initial read at default timing: tR + tDMA + tECC.
    pub initial: Nanos,
    /// SET FEATURE before the first reduced retry step.
    pub set_feature: Nanos,
    /// Retry chain after the initial ECC failure, excluding SET FEATURE.
    pub retry: Nanos,
}

impl ReadLatency {
    pub fn total(&self) -> Nanos {
        self.initial + self.set_feature + self.retry
    }
}

/// Latency components of an isolated read under `policy`.
///
/// `reduction` is only consulted by adaptive policies, and only for retry
/// steps: the initial read always senses at default timing.
pub fn execute_read(
    policy: PolicyKind,
    n_rr: u32,
    page: PageType,
    timing: &TimingParams,
    reduction: TpreReduction,
) -> ReadLatency {
    let recipe = policy.recipe();
    let steps = policy.effective_steps(n_rr);
    let tail = timing.tdma + timing.tecc;
    let initial = timing.sense_latency(page) + tail;
    if steps == 0 {
        return ReadLatency { steps, initial, set_feature: Nanos::ZERO, retry: Nanos::ZERO };
    }
    let (set_feature, retry_sense) = if recipe.adaptive {
        (timing.tset, timing.reduced_sense_latency(page, reduction))
    } else {
        (Nanos::ZERO, timing.sense_latency(page))
    };
    let n = u64::from(steps);
    let retry = if recipe.pipelined { retry_sense * n + tail } else { (retry_sense + tail) * n };
    ReadLatency { steps, initial, set_feature, retry }
}

/// Reduction the RPT allows for a block in `cond`.
pub fn rpt_lookup(rpt: &RptTable, cond: &OperatingCondition) -> TpreReduction {
    rpt.lookup(cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(x: f64) -> Nanos {
        Nanos::from_us_f64(x).unwrap()
    }

    #[test]
    fn names_roundtrip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert_eq!("PnAR2".parse::<PolicyKind>().unwrap(), PolicyKind::PnAr2);
        assert_eq!("PSO_PnAR2".parse::<PolicyKind>().unwrap(), PolicyKind::PsoPnAr2);
        let err = "fast".parse::<PolicyKind>().unwrap_err().to_string();
        assert!(err.contains("baseline") && err.contains("pso-pnar2"));
    }

    #[test]
    fn list_parsing() {
        assert_eq!(PolicyKind::parse_list("all").unwrap().len(), 7);
        assert_eq!(PolicyKind::parse_list("pr2, baseline,pr2").unwrap(), vec![PolicyKind::Pr2, PolicyKind::Baseline]);
        assert!(PolicyKind::parse_list("").is_err());
    }

    #[test]
    fn recipes_are_unique() {
        let recipes: Vec<Recipe> = PolicyKind::ALL.iter().map(|p| p.recipe()).collect();
        for (i, a) in recipes.iter().enumerate() {
            for b in &recipes[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn spot_latencies() {
        let t = TimingParams::default();
        let r40 = TpreReduction::new(0.40).unwrap();
        let lat = |p, n| execute_read(p, n, PageType::Lsb, &t, r40).total();
        assert_eq!(lat(PolicyKind::Baseline, 8), us(1026.0));
        assert_eq!(lat(PolicyKind::Pr2, 8), us(774.0));
        assert_eq!(lat(PolicyKind::PnAr2, 8), us(621.4));
        assert_eq!(lat(PolicyKind::NoRr, 8), us(114.0));
        assert_eq!(execute_read(PolicyKind::Pso, 20, PageType::Lsb, &t, r40).steps, 6);
        for p in PolicyKind::ALL {
            assert_eq!(lat(p, 0), us(114.0));
        }
    }

    #[test]
    fn pr2_matches_baseline_for_one_step() {
        let t = TimingParams::default();
        let b = execute_read(PolicyKind::Baseline, 1, PageType::Csb, &t, TpreReduction::NONE);
        let p = execute_read(PolicyKind::Pr2, 1, PageType::Csb, &t, TpreReduction::NONE);
        assert_eq!(b, p);
    }
}
