//! Closed-form read latency, response-time statistics, policy comparison and
//! report files.
//!
//! Report columns, in order:
//! `policy,pec,retention_months,mean_us,p50_us,p95_us,p99_us,reduction_vs_baseline_pct`.
//! The reduction column is empty when the sweep cell has no baseline run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::kernel::SimOutcome;
use crate::policy::PolicyKind;
use crate::reliability::pso_retry_steps;
use crate::timing::{Nanos, PageType, TimingParams, TpreReduction};

pub const COLUMNS: [&str; 8] =
    ["policy", "pec", "retention_months", "mean_us", "p50_us", "p95_us", "p99_us", "reduction_vs_baseline_pct"];

/// Contention-free latency of one page read, written out per policy.
pub fn oracle_latency(
    policy: PolicyKind,
    n_rr: u32,
    page: PageType,
    timing: &TimingParams,
    reduction: TpreReduction,
) -> Nanos {
    let sensings = match page {
        PageType::Lsb | PageType::Msb => 2,
        PageType::Csb => 3,
    };
    let t_r = sensings * (timing.tpre.0 + timing.teval.0 + timing.tdisch.0);
    let reduced_tpre = (timing.tpre.0 as f64 * (1.0 - reduction.fraction())).round() as u64;
    let rho_t_r = sensings * (reduced_tpre + timing.teval.0 + timing.tdisch.0);
    let (dma, ecc, set) = (timing.tdma.0, timing.tecc.0, timing.tset.0);
    let n = u64::from(match policy {
        PolicyKind::NoRr => 0,
        PolicyKind::Pso | PolicyKind::PsoPnAr2 => pso_retry_steps(n_rr),
        _ => n_rr,
    });
    let read = t_r + dma + ecc;
    let retry = if n == 0 {
        0
    } else {
        match policy {
            PolicyKind::Baseline | PolicyKind::Pso | PolicyKind::NoRr => n * (t_r + dma + ecc),
            PolicyKind::Pr2 => n * t_r + dma + ecc,
            PolicyKind::Ar2 => set + n * (rho_t_r + dma + ecc),
            PolicyKind::PnAr2 | PolicyKind::PsoPnAr2 => set + n * rho_t_r + dma + ecc,
        }
    };
    Nanos(read + retry)
}

/// Response-time reduction of `mean` relative to `reference_mean`, in percent.
pub fn reduction_pct(mean: f64, reference_mean: f64) -> f64 {
    (1.0 - mean / reference_mean) * 100.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub count: usize,
    pub mean_us: f64,
    pub min_us: f64,
    pub max_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl ResponseStats {
    pub fn from_responses(responses_ns: &[u64]) -> Self {
        if responses_ns.is_empty() {
            return ResponseStats::default();
        }
        let mut sorted = responses_ns.to_vec();
        sorted.sort_unstable();
        let us = |ns: u64| ns as f64 / 1_000.0;
        let total: u128 = sorted.iter().map(|&x| u128::from(x)).sum();
        ResponseStats {
            count: sorted.len(),
            mean_us: total as f64 / sorted.len() as f64 / 1_000.0,
            min_us: us(sorted[0]),
            max_us: us(sorted[sorted.len() - 1]),
            p50_us: us(percentile(&sorted, 50.0)),
            p95_us: us(percentile(&sorted, 95.0)),
            p99_us: us(percentile(&sorted, 99.0)),
        }
    }
}

/// What two runs must share to be comparable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub workload: String,
    pub seed: u64,
    pub pec: u32,
    pub retention_months: f64,
    pub temp_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub key: RunKey,
    pub policy: PolicyKind,
    pub stats: ResponseStats,
    /// Mean retry steps the read pages needed, before any policy transform.
    pub mean_retry_steps: f64,
    /// Executed retry steps per page read.
    pub retry_histogram: BTreeMap<u32, u64>,
    pub responses_ns: Vec<u64>,
}

impl RunReport {
    pub fn from_outcome(key: RunKey, policy: PolicyKind, outcome: &SimOutcome) -> Self {
        let responses_ns: Vec<u64> = outcome.requests.iter().map(|r| r.response().0).collect();
        let mut retry_histogram = BTreeMap::new();
        for p in &outcome.page_reads {
            *retry_histogram.entry(p.executed_steps).or_insert(0) += 1;
        }
        let raw: u64 = outcome.page_reads.iter().map(|p| u64::from(p.raw_steps)).sum();
        let mean_retry_steps =
            if outcome.page_reads.is_empty() { 0.0 } else { raw as f64 / outcome.page_reads.len() as f64 };
        RunReport {
            key,
            policy,
            stats: ResponseStats::from_responses(&responses_ns),
            mean_retry_steps,
            retry_histogram,
            responses_ns,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub policy: PolicyKind,
    pub mean_us: f64,
    /// Mean response relative to Baseline.
    pub ratio: f64,
    pub reduction_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub key: RunKey,
    pub mean_retry_steps: f64,
    pub rows: Vec<ComparisonRow>,
    /// Ordering expectations that the runs break.
    pub violations: Vec<String>,
}

/// `(lower, upper)`: `lower`'s mean response must not exceed `upper`'s.
const EXPECTED_ORDER: [(PolicyKind, PolicyKind); 5] = [
    (PolicyKind::NoRr, PolicyKind::PnAr2),
    (PolicyKind::PnAr2, PolicyKind::Pr2),
    (PolicyKind::Pr2, PolicyKind::Baseline),
    (PolicyKind::Ar2, PolicyKind::Baseline),
    (PolicyKind::PsoPnAr2, PolicyKind::Pso),
];

/// Normalizes every run of one sweep cell against its Baseline run.
///
/// Orderings are required strictly once the pages need at least one retry
/// step on average.
pub fn compare(reports: &[RunReport]) -> Result<Comparison, ReportError> {
    let first = reports.first().ok_or_else(|| ReportError::Mismatch("no reports to compare".into()))?;
    if let Some(r) = reports.iter().find(|r| r.key != first.key) {
        return Err(ReportError::Mismatch(format!("{:?} vs {:?}", first.key, r.key)));
    }
    let mean_of = |p: PolicyKind| reports.iter().find(|r| r.policy == p).map(|r| r.stats.mean_us);
    let baseline =
        mean_of(PolicyKind::Baseline).ok_or_else(|| ReportError::Mismatch("comparison needs a baseline run".into()))?;
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            policy: r.policy,
            mean_us: r.stats.mean_us,
            ratio: r.stats.mean_us / baseline,
            reduction_pct: reduction_pct(r.stats.mean_us, baseline),
        })
        .collect();
    let mean_retry_steps = first.mean_retry_steps;
    let strict = mean_retry_steps >= 1.0;
    let mut violations = Vec::new();
    for (lo, hi) in EXPECTED_ORDER {
        if let (Some(a), Some(b)) = (mean_of(lo), mean_of(hi)) {
            let ok = if strict { a < b } else { a <= b };
            if !ok {
                let op = if strict { "<" } else { "<=" };
                violations.push(format!("{lo} ({a} us) {op} {hi} ({b} us) does not hold"));
            }
        }
    }
    Ok(Comparison { key: first.key.clone(), mean_retry_steps, rows, violations })
}

/// One line of a report file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub policy: PolicyKind,
    pub pec: u32,
    pub retention_months: f64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub reduction_vs_baseline_pct: Option<f64>,
}

/// Rows in input order; each row's reduction is taken against the Baseline
/// run of the same key, when present.
pub fn report_rows(reports: &[RunReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .map(|r| {
            let baseline = reports.iter().find(|b| b.policy == PolicyKind::Baseline && b.key == r.key);
            ReportRow {
                policy: r.policy,
                pec: r.key.pec,
                retention_months: r.key.retention_months,
                mean_us: r.stats.mean_us,
                p50_us: r.stats.p50_us,
                p95_us: r.stats.p95_us,
                p99_us: r.stats.p99_us,
                reduction_vs_baseline_pct: baseline.map(|b| reduction_pct(r.stats.mean_us, b.stats.mean_us)),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (valid: csv, json)")),
        }
    }
}

impl ReportFormat {
    /// Guesses from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

pub fn render_rows(rows: &[ReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(COLUMNS).expect("in-memory write");
            for row in rows {
                w.serialize(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
        }
    }
}

pub fn parse_rows(text: &str, format: ReportFormat) -> Result<Vec<ReportRow>, String> {
    match format {
        ReportFormat::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header = r.headers().map_err(|e| e.to_string())?;
            if header.iter().ne(COLUMNS) {
                return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
            }
            r.deserialize().collect::<Result<_, _>>().map_err(|e| e.to_string())
        }
    }
}

pub fn emit_report(rows: &[ReportRow], path: &Path, format: ReportFormat) -> Result<(), ReportError> {
    fs::write(path, render_rows(rows, format)).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<ReportRow>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    parse_rows(&text, format).map_err(|msg| ReportError::Format { path: path.to_path_buf(), msg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key() -> RunKey {
        RunKey { workload: "w".into(), seed: 1, pec: 0, retention_months: 0.0, temp_c: 30.0 }
    }

    fn report(policy: PolicyKind, responses: &[u64], steps: f64) -> RunReport {
        RunReport {
            key: key(),
            policy,
            stats: ResponseStats::from_responses(responses),
            mean_retry_steps: steps,
            retry_histogram: BTreeMap::new(),
            responses_ns: responses.to_vec(),
        }
    }

    #[test]
    fn oracle_spot_values() {
        let t = TimingParams::default();
        let r40 = TpreReduction::new(0.40).unwrap();
        let none = TpreReduction::NONE;
        assert_eq!(oracle_latency(PolicyKind::Baseline, 8, PageType::Lsb, &t, none), Nanos::from_us(1026));
        assert_eq!(oracle_latency(PolicyKind::Pr2, 8, PageType::Lsb, &t, none), Nanos::from_us(774));
        assert_eq!(oracle_latency(PolicyKind::PnAr2, 8, PageType::Lsb, &t, r40), Nanos(621_400));
        for p in PolicyKind::ALL {
            for page in PageType::ALL {
                let expected = t.sense_latency(page) + t.tdma + t.tecc;
                assert_eq!(oracle_latency(p, 0, page, &t, r40), expected);
            }
        }
    }

    #[test]
    fn nearest_rank() {
        let data: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&data, 50.0), 50);
        assert_eq!(percentile(&data, 95.0), 95);
        assert_eq!(percentile(&data, 99.0), 99);
        assert_eq!(percentile(&[7], 99.0), 7);
        assert_eq!(percentile(&[1, 2, 3], 50.0), 2);
    }

    #[test]
    fn compare_against_self_and_flags_order() {
        let b = report(PolicyKind::Baseline, &[100_000, 300_000], 2.0);
        let c = compare(std::slice::from_ref(&b)).unwrap();
        assert_eq!(c.rows[0].reduction_pct, 0.0);
        assert_eq!(c.rows[0].ratio, 1.0);

        let p = report(PolicyKind::Pr2, &[400_000], 2.0);
        let c = compare(&[b.clone(), p]).unwrap();
        assert_eq!(c.violations.len(), 1);

        let mut other = report(PolicyKind::Pr2, &[1], 2.0);
        other.key.seed = 2;
        assert!(matches!(compare(&[b, other]), Err(ReportError::Mismatch(_))));
    }

    #[test]
    fn equal_means_pass_without_retries() {
        let b = report(PolicyKind::Baseline, &[114_000], 0.0);
        let n = report(PolicyKind::NoRr, &[114_000], 0.0);
        let p = report(PolicyKind::Pr2, &[114_000], 0.0);
        assert!(compare(&[b.clone(), n.clone(), p.clone()]).unwrap().violations.is_empty());
        let (b, n, p) = (
            RunReport { mean_retry_steps: 1.0, ..b },
            RunReport { mean_retry_steps: 1.0, ..n },
            RunReport { mean_retry_steps: 1.0, ..p },
        );
        assert_eq!(compare(&[b, n, p]).unwrap().violations.len(), 1);
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(render_rows(&[], ReportFormat::Csv), COLUMNS.join(",") + "\n");
        assert!(parse_rows(&render_rows(&[], ReportFormat::Csv), ReportFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip_exactly() {
        let reports = vec![
            report(PolicyKind::Baseline, &[114_000, 1_026_000, 333_333], 3.0),
            report(PolicyKind::PnAr2, &[114_000, 621_400, 100_001], 3.0),
        ];
        let rows = report_rows(&reports);
        assert_eq!(rows[0].reduction_vs_baseline_pct, Some(0.0));
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            assert_eq!(parse_rows(&render_rows(&rows, fmt), fmt).unwrap(), rows);
        }
        let lone = report_rows(&reports[1..]);
        assert_eq!(lone[0].reduction_vs_baseline_pct, None);
        assert_eq!(parse_rows(&render_rows(&lone, ReportFormat::Csv), ReportFormat::Csv).unwrap(), lone);
    }

    proptest! {
        #[test]
        fn stats_are_bounded(data in proptest::collection::vec(1u64..10_000_000, 1..300)) {
            let s = ResponseStats::from_responses(&data);
            prop_assert!(s.min_us <= s.mean_us && s.mean_us <= s.max_us);
            prop_assert!(s.p50_us <= s.p95_us && s.p95_us <= s.p99_us && s.p99_us <= s.max_us);
        }

        #[test]
        fn reductions_are_ratio_consistent(a in 1.0f64..1e6, b in 1.0f64..1e6) {
            let ab = 1.0 - reduction_pct(a, b) / 100.0;
            let ba = 1.0 - reduction_pct(b, a) / 100.0;
            prop_assert!((ab * ba - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pipelining_gap(n in 1u32..60, page_idx in 0u32..3) {
            let t = TimingParams::default();
            let page = PageType::of_page_index(page_idx);
            let b = oracle_latency(PolicyKind::Baseline, n, page, &t, TpreReduction::NONE);
            let p = oracle_latency(PolicyKind::Pr2, n, page, &t, TpreReduction::NONE);
            prop_assert_eq!(b - p, (t.tdma + t.tecc) * u64::from(n - 1));
        }
    }
}
