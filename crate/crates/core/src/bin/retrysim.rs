use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use retrysim::analytics::{compare, emit_report, oracle_latency, render_rows, report_rows, ReportFormat};
use retrysim::config::{RunConfig, SweepSection, SEED_ENV};
use retrysim::error::{ConfigError, ReliabilityError, RunError, TraceError};
use retrysim::experiment::Experiment;
use retrysim::kernel::{self, FixedRetries, SimConfig};
use retrysim::policy::PolicyKind;
use retrysim::reliability::{OperatingCondition, RetryCalibration, RptTable};
use retrysim::timing::{Nanos, PageType, TpreReduction};
use retrysim::topology::{PhysAddr, SsdConfig};
use retrysim::workload::{
    detect_format, parse_msrc_str, read_normalized_str, to_normalized_string, trace_stats, IoOp, IoRequest, TraceFormat,
};

#[derive(Parser)]
#[command(name = "retrysim", version, about = "NAND flash read-retry simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more policies over operating conditions.
    Simulate(SimulateArgs),
    /// Build the read-timing parameter table and audit its margins.
    Rpt(RptArgs),
    /// Check simulated isolated reads against the closed-form latencies.
    OracleCheck(OracleArgs),
    /// Convert an MSRC trace to the normalized format and print its ratios.
    Trace(TraceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated policies, or `all`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    pec: Option<u32>,
    #[arg(long = "retention-months")]
    retention_months: Option<f64>,
    /// `default` runs {0, 1K, 2K} P/E cycles x {0, 3, 6, 12} months.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Workload preset name.
    #[arg(long)]
    workload: Option<String>,
    /// MSRC or normalized trace file.
    #[arg(long, conflicts_with = "workload")]
    trace: Option<PathBuf>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or json; guessed from the output extension by default.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct RptArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Comma-separated PEC buckets.
    #[arg(long)]
    pec: Option<String>,
    /// Comma-separated retention buckets in months.
    #[arg(long = "retention-months")]
    retention_months: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the 4-byte-per-entry binary layout instead of text.
    #[arg(long)]
    binary: bool,
    /// Print the built-in calibration as TOML and exit.
    #[arg(long)]
    dump_calibration: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test hook: corrupt one policy's closed form to exercise the failure path.
    #[arg(long, hide = true)]
    break_policy: Option<String>,
}

#[derive(Args)]
struct TraceArgs {
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 16384)]
    page_bytes: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Rpt(a) => rpt(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, RunError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| ConfigError::Invalid(format!("bad {what} value `{x}`"))))
        .collect()
}

fn simulate(a: SimulateArgs) -> Result<(), RunError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = a.policy {
        cfg.policies = vec![p];
    }
    match a.sweep.as_deref() {
        Some("default") => cfg.sweep = SweepSection::default_grid(),
        Some(other) => return Err(ConfigError::Invalid(format!("unknown sweep `{other}` (valid: default)")).into()),
        None => {}
    }
    if let Some(p) = a.pec {
        cfg.sweep.pec = vec![p];
    }
    if let Some(r) = a.retention_months {
        cfg.sweep.retention_months = vec![r];
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workload {
        cfg.workload.preset = Some(w);
        cfg.workload.trace = None;
    }
    if let Some(t) = a.trace {
        cfg.workload.trace = Some(t);
    }
    if let Some(n) = a.requests {
        cfg.workload.request_count = Some(n);
    }
    if let Some(o) = a.output {
        cfg.output.path = Some(o);
    }
    if let Some(f) = a.format {
        cfg.output.format = Some(f);
    }
    cfg.validate()?;
    let policies = cfg.policy_kinds()?;
    let exp = Experiment::from_config(&cfg)?;
    let cells = cfg.sweep.cells();
    let reports = exp.run_sweep(&policies, &cells)?;

    for chunk in reports.chunks(policies.len()) {
        if chunk.iter().any(|r| r.policy == PolicyKind::Baseline) {
            let cmp = compare(chunk)?;
            for v in &cmp.violations {
                log::warn!("pec {} retention {}: {v}", cmp.key.pec, cmp.key.retention_months);
            }
        }
    }
    let rows = report_rows(&reports);
    let format = match (&cfg.output.format, &cfg.output.path) {
        (Some(f), _) => f.parse().map_err(ConfigError::Invalid)?,
        (None, Some(p)) => ReportFormat::from_path(p),
        (None, None) => ReportFormat::Csv,
    };
    match &cfg.output.path {
        Some(path) => emit_report(&rows, path, format)?,
        None => print!("{}", render_rows(&rows, format)),
    }
    Ok(())
}

fn rpt(a: RptArgs) -> Result<(), RunError> {
    if a.dump_calibration {
        print!("{}", RetryCalibration::default().to_toml());
        return Ok(());
    }
    let cal = match &a.calibration {
        Some(p) => RetryCalibration::load(p)?,
        None => RetryCalibration::default(),
    };
    let pecs = match &a.pec {
        Some(s) => parse_list(s, "pec")?,
        None => retrysim::reliability::DEFAULT_PEC_BUCKETS.to_vec(),
    };
    let rets = match &a.retention_months {
        Some(s) => parse_list(s, "retention")?,
        None => retrysim::reliability::DEFAULT_RETENTION_BUCKETS.to_vec(),
    };
    let table = RptTable::build(&cal, &pecs, &rets)?;

    let mut audit = String::from("pec,retention_months,reduction_pct,merr,delta,safety_margin,ecc_capability,slack\n");
    let mut infeasible = None;
    for (pec, ret, pct) in table.entries() {
        let cond = OperatingCondition::new(pec, f64::from(ret), cal.worst_temperature());
        let r = TpreReduction::from_percent(pct)?;
        let m = cal.margin_audit(r, &cond)?;
        let _ = writeln!(
            audit,
            "{pec},{ret},{pct},{},{},{},{},{}",
            m.merr,
            m.delta,
            m.safety_margin,
            m.ecc_capability,
            m.slack()
        );
        if (pct == 0 || !m.is_safe()) && infeasible.is_none() {
            infeasible = Some((pec, ret));
        }
    }
    if a.output.is_some() {
        print!("{audit}");
    } else {
        eprint!("{audit}");
    }
    if let Some((pec, ret)) = infeasible {
        return Err(ReliabilityError::Infeasible { pec, retention_months: f64::from(ret) }.into());
    }
    match &a.output {
        Some(path) => {
            let bytes = if a.binary { table.to_bytes() } else { table.to_text().into_bytes() };
            fs::write(path, bytes).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        }
        None if a.binary => return Err(ConfigError::Invalid("--binary needs --output".into()).into()),
        None => print!("{}", table.to_text()),
    }
    Ok(())
}

const ORACLE_STEPS: [u32; 5] = [0, 1, 2, 8, 20];
const ORACLE_REDUCTIONS: [u8; 2] = [40, 54];

fn oracle_check(a: OracleArgs) -> Result<(), RunError> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    let broken = a.break_policy.as_deref().map(str::parse::<PolicyKind>).transpose()?;
    let sim = SimConfig {
        geometry: cfg.geometry.clone(),
        timing: cfg.timing.to_params()?,
        cache_read: cfg.kernel.cache_read,
        ..SimConfig::default()
    };
    let policies = [PolicyKind::Baseline, PolicyKind::Pr2, PolicyKind::Ar2, PolicyKind::PnAr2, PolicyKind::NoRr];
    println!("policy,n_rr,page,reduction_pct,simulated_ns,oracle_ns,delta_ns");
    let mut failures = 0;
    for policy in policies {
        let reductions: &[u8] = if policy.recipe().adaptive { &ORACLE_REDUCTIONS } else { &[0] };
        for &n in &ORACLE_STEPS {
            for page in PageType::ALL {
                for &pct in reductions {
                    let rpt = RptTable::uniform(pct)?;
                    let reduction = TpreReduction::from_percent(pct)?;
                    let req = isolated_read(&sim.geometry, page)?;
                    let out = kernel::run(&sim, policy, &[req], &FixedRetries(n), &rpt)?;
                    let simulated = out.requests[0].response();
                    let mut oracle = oracle_latency(policy, n, page, &sim.timing, reduction);
                    if broken == Some(policy) {
                        oracle.0 += 1;
                    }
                    let delta = simulated.0 as i128 - oracle.0 as i128;
                    failures += usize::from(delta != 0);
                    println!("{policy},{n},{page},{pct},{},{},{delta}", simulated.0, oracle.0);
                }
            }
        }
    }
    if failures > 0 {
        return Err(RunError::Check(format!("{failures} oracle cells differ")));
    }
    Ok(())
}

/// A single read of the first die's page of type `page` in block 0.
fn isolated_read(geo: &SsdConfig, page: PageType) -> Result<IoRequest, RunError> {
    let index = (0..geo.pages_per_block).find(|&p| PageType::of_page_index(p) == page).expect("three page types");
    let addr = PhysAddr { channel: 0, die: 0, plane: 0, block: 0, page: index };
    Ok(IoRequest {
        arrival: Nanos::ZERO,
        op: IoOp::Read,
        lba: geo.to_logical(&addr),
        size_bytes: geo.page_bytes,
        cold: true,
    })
}

fn trace(a: TraceArgs) -> Result<(), RunError> {
    let text = fs::read_to_string(&a.input).map_err(|source| TraceError::Io { path: a.input.clone(), source })?;
    let reqs = match detect_format(&text)? {
        TraceFormat::Msrc => parse_msrc_str(&text, a.page_bytes)?,
        TraceFormat::Normalized => {
            log::info!("{} is already normalized", a.input.display());
            read_normalized_str(&text)?
        }
    };
    let stats = trace_stats(&reqs);
    let normalized = to_normalized_string(&reqs);
    match &a.output {
        Some(path) => fs::write(path, normalized).map_err(|source| TraceError::Io { path: path.clone(), source })?,
        None => print!("{normalized}"),
    }
    let summary = format!(
        "requests {} reads {} read_ratio {} cold_ratio {}",
        stats.requests, stats.reads, stats.read_ratio, stats.cold_ratio
    );
    if a.output.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}
