//! Run configuration file.
//!
//! TOML with one table per subsystem. Every key is optional and unknown keys
//! are rejected. Durations are microseconds with at most 0.1 us resolution.
//!
//! ```toml
//! seed = 42
//! policies = ["baseline", "pnar2"]
//!
//! [geometry]
//! channels = 4
//!
//! [timing]
//! tpre_us = 24.0
//!
//! [reliability]
//! calibration = "cal.toml"
//! temp_c = 30.0
//!
//! [kernel]
//! cache_read = true
//! suspend_overhead_us = 0.0
//!
//! [sweep]
//! pec = [0, 1000, 2000]
//! retention_months = [0.0, 3.0, 6.0, 12.0]
//!
//! [workload]
//! preset = "ycsb-a"
//! request_count = 10000
//!
//! [output]
//! path = "report.csv"
//! format = "csv"
//! ```

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::policy::PolicyKind;
use crate::timing::{Nanos, TimingParams};
use crate::topology::SsdConfig;
use crate::workload::{preset, WorkloadSpec};

pub const SEED_ENV: &str = "RETRYSIM_SEED";

pub const DEFAULT_SWEEP_PEC: [u32; 3] = [0, 1000, 2000];
pub const DEFAULT_SWEEP_RETENTION: [f64; 4] = [0.0, 3.0, 6.0, 12.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub tpre_us: f64,
    pub teval_us: f64,
    pub tdisch_us: f64,
    pub tdma_us: f64,
    pub tecc_us: f64,
    pub tset_us: f64,
    pub trst_us: f64,
    pub tprog_us: f64,
    pub tbers_us: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        let t = TimingParams::default();
        TimingSection {
            tpre_us: t.tpre.as_us_f64(),
            teval_us: t.teval.as_us_f64(),
            tdisch_us: t.tdisch.as_us_f64(),
            tdma_us: t.tdma.as_us_f64(),
            tecc_us: t.tecc.as_us_f64(),
            tset_us: t.tset.as_us_f64(),
            trst_us: t.trst.as_us_f64(),
            tprog_us: t.tprog.as_us_f64(),
            tbers_us: t.tbers.as_us_f64(),
        }
    }
}

impl TimingSection {
    pub fn to_params(&self) -> Result<TimingParams, ConfigError> {
        let p = TimingParams {
            tpre: Nanos::from_us_f64(self.tpre_us)?,
            teval: Nanos::from_us_f64(self.teval_us)?,
            tdisch: Nanos::from_us_f64(self.tdisch_us)?,
            tdma: Nanos::from_us_f64(self.tdma_us)?,
            tecc: Nanos::from_us_f64(self.tecc_us)?,
            tset: Nanos::from_us_f64(self.tset_us)?,
            trst: Nanos::from_us_f64(self.trst_us)?,
            tprog: Nanos::from_us_f64(self.tprog_us)?,
            tbers: Nanos::from_us_f64(self.tbers_us)?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReliabilitySection {
    /// Calibration file; the built-in tables when absent.
    pub calibration: Option<PathBuf>,
    pub temp_c: f64,
}

impl Default for ReliabilitySection {
    fn default() -> Self {
        ReliabilitySection { calibration: None, temp_c: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub cache_read: bool,
    pub suspend_overhead_us: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { cache_read: true, suspend_overhead_us: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub pec: Vec<u32>,
    pub retention_months: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { pec: vec![0], retention_months: vec![0.0] }
    }
}

impl SweepSection {
    pub fn default_grid() -> Self {
        SweepSection { pec: DEFAULT_SWEEP_PEC.to_vec(), retention_months: DEFAULT_SWEEP_RETENTION.to_vec() }
    }

    /// `(pec, retention_months)` cells, PEC-major.
    pub fn cells(&self) -> Vec<(u32, f64)> {
        self.pec.iter().flat_map(|&p| self.retention_months.iter().map(move |&r| (p, r))).collect()
    }
}

/// Synthetic workload parameters, or a trace file. Explicit keys override
/// the preset's values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub trace: Option<PathBuf>,
    pub preset: Option<String>,
    pub read_ratio: Option<f64>,
    pub cold_ratio: Option<f64>,
    pub request_count: Option<usize>,
    pub address_span: Option<u64>,
    pub cold_region_pages: Option<u64>,
    pub mean_interarrival_us: Option<f64>,
    pub size_bytes: Option<u64>,
}

impl WorkloadSection {
    pub fn spec(&self, page_bytes: u64) -> Result<WorkloadSpec, ConfigError> {
        let mut spec = match &self.preset {
            Some(name) => preset(name).ok_or_else(|| {
                let names: Vec<&str> = crate::workload::PRESETS.iter().map(|p| p.0).collect();
                ConfigError::Invalid(format!("unknown workload preset `{name}` (valid: {})", names.join(", ")))
            })?,
            None => WorkloadSpec::default(),
        };
        spec.page_bytes = page_bytes;
        spec.size_bytes = page_bytes;
        if let Some(v) = self.read_ratio {
            spec.read_ratio = v;
        }
        if let Some(v) = self.cold_ratio {
            spec.cold_ratio = v;
        }
        if let Some(v) = self.request_count {
            spec.request_count = v;
        }
        if let Some(v) = self.address_span {
            spec.address_span = v;
        }
        if let Some(v) = self.cold_region_pages {
            spec.cold_region_pages = v;
        }
        if let Some(v) = self.mean_interarrival_us {
            spec.mean_interarrival = Nanos::from_us_f64(v)?;
        }
        if let Some(v) = self.size_bytes {
            spec.size_bytes = v;
        }
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    /// Short label identifying the workload in reports.
    pub fn label(&self) -> String {
        match (&self.trace, &self.preset) {
            (Some(p), _) => p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()),
            (None, Some(name)) => name.clone(),
            (None, None) => "synthetic".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub policies: Vec<String>,
    pub geometry: SsdConfig,
    pub timing: TimingSection,
    pub reliability: ReliabilitySection,
    pub kernel: KernelSection,
    pub sweep: SweepSection,
    pub workload: WorkloadSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            policies: vec!["all".into()],
            geometry: SsdConfig::default(),
            timing: TimingSection::default(),
            reliability: ReliabilitySection::default(),
            kernel: KernelSection::default(),
            sweep: SweepSection::default(),
            workload: WorkloadSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// Replaces the seed with `RETRYSIM_SEED` when set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, ConfigError> {
        PolicyKind::parse_list(&self.policies.join(","))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.timing.to_params()?;
        self.policy_kinds()?;
        Nanos::from_us_f64(self.kernel.suspend_overhead_us)?;
        if self.sweep.pec.is_empty() || self.sweep.retention_months.is_empty() {
            return Err(ConfigError::Invalid("sweep needs at least one PEC and one retention value".into()));
        }
        if self.sweep.retention_months.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(ConfigError::Invalid("retention_months must be finite and non-negative".into()));
        }
        let t = self.reliability.temp_c;
        if !t.is_finite() || t <= -crate::reliability::KELVIN_OFFSET {
            return Err(ConfigError::Invalid(format!("temperature {t} degC is not physical")));
        }
        if self.workload.trace.is_none() {
            self.workload.spec(self.geometry.page_bytes)?;
        }
        if let Some(f) = &self.output.format {
            f.parse::<crate::analytics::ReportFormat>().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_toml_str(s, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.timing.to_params().unwrap(), TimingParams::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = parse(
            "seed = 9\npolicies = [\"pr2\"]\n[timing]\ntecc_us = 12.5\n[sweep]\npec = [0, 2000]\n[workload]\npreset = \"hm_0\"\nrequest_count = 5\n",
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.timing.to_params().unwrap().tecc, Nanos(12_500));
        assert_eq!(c.sweep.cells().len(), 2);
        let spec = c.workload.spec(16384).unwrap();
        assert_eq!((spec.read_ratio, spec.request_count), (0.36, 5));
        assert_eq!(c.policy_kinds().unwrap(), vec![PolicyKind::Pr2]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse("sed = 1"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse("[timing]\ntpree_us = 1.0"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse("[timing]\ntpre_us = 24.05").unwrap().validate().is_err());
        assert!(parse("policies = [\"turbo\"]").unwrap().validate().is_err());
        assert!(parse("[workload]\npreset = \"nope\"").unwrap().validate().is_err());
        assert!(parse("[workload]\ncold_region_pages = 10\naddress_span = 5").unwrap().validate().is_err());
        assert!(parse("[sweep]\npec = []").unwrap().validate().is_err());
    }

    #[test]
    fn default_sweep_grid() {
        let cells = SweepSection::default_grid().cells();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0], (0, 0.0));
        assert_eq!(cells[11], (2000, 12.0));
    }
}
