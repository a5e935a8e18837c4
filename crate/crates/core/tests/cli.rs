use std::path::Path;
use std::process::{Command, Output};

use retrysim::analytics::{read_report, ReportFormat};
use retrysim::policy::PolicyKind;

fn retrysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retrysim")).args(args).env_remove("RETRYSIM_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_single_cell_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.csv");
    let out = retrysim(&[
        "simulate",
        "--policy",
        "baseline,pnar2",
        "--pec",
        "2000",
        "--retention-months",
        "6",
        "--seed",
        "42",
        "--requests",
        "1000",
        "--output",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_report(&report, ReportFormat::Csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].policy, PolicyKind::Baseline);
    assert_eq!(rows[0].reduction_vs_baseline_pct, Some(0.0));
    assert!(rows[1].reduction_vs_baseline_pct.unwrap() > 0.0);
    assert!(rows.iter().all(|r| r.pec == 2000 && r.retention_months == 6.0));
}

#[test]
fn simulate_json_to_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("r.json");
    let args = ["simulate", "--policy", "pr2", "--pec", "0", "--retention-months", "3", "--requests", "500"];
    let stdout = retrysim(&[&args[..], &["--format", "json"]].concat());
    assert_eq!(code(&stdout), 0);
    let to_file = retrysim(&[&args[..], &["--output", path_str(&file)]].concat());
    assert_eq!(code(&to_file), 0);
    assert_eq!(std::fs::read(&file).unwrap(), stdout.stdout);
    let rows = read_report(&file, ReportFormat::Json).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].reduction_vs_baseline_pct, None);
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\npolicies = [\"baseline\"]\n[workload]\nrequest_count = 400\n").unwrap();
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_retrysim"));
        cmd.args(["simulate", "--config", path_str(&cfg), "--pec", "1000", "--retention-months", "3"]);
        match seed {
            Some(s) => cmd.env("RETRYSIM_SEED", s),
            None => cmd.env_remove("RETRYSIM_SEED"),
        };
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let base = run(None);
    assert_eq!(run(Some("1")), base);
    assert_ne!(run(Some("2")), base);
}

#[test]
fn config_errors_exit_2() {
    let out = retrysim(&["simulate", "--policy", "turbo"]);
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("pnar2") && msg.contains("pso-pnar2"), "{msg}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[kernel]\ncache_reads = true\n").unwrap();
    assert_eq!(code(&retrysim(&["simulate", "--config", path_str(&cfg)])), 2);

    assert_eq!(code(&retrysim(&["simulate", "--sweep", "huge"])), 2);
    assert_eq!(code(&retrysim(&["simulate", "--workload", "nonexistent"])), 2);
}

#[test]
fn trace_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&retrysim(&["trace", path_str(&empty)])), 3);
    assert_eq!(code(&retrysim(&["simulate", "--policy", "baseline", "--trace", path_str(&empty)])), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,hm,1,Read,0,16384,1\nnot,a,record\n").unwrap();
    let out = retrysim(&["trace", path_str(&bad)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn trace_converts_and_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let msrc = dir.path().join("t.csv");
    std::fs::write(
        &msrc,
        "100,hm,1,Read,0,16384,1\n200,hm,1,Write,16384,16384,1\n300,hm,1,Read,16384,16384,1\n400,hm,1,Read,65536,16384,1\n",
    )
    .unwrap();
    let normalized = dir.path().join("t.txt");
    let out = retrysim(&["trace", path_str(&msrc), "--output", path_str(&normalized)]);
    assert_eq!(code(&out), 0);
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("read_ratio 0.75"), "{summary}");
    assert!(summary.contains("cold_ratio 0.6666666666666666"), "{summary}");

    let again = dir.path().join("t2.txt");
    assert_eq!(code(&retrysim(&["trace", path_str(&normalized), "--output", path_str(&again)])), 0);
    assert_eq!(std::fs::read(&normalized).unwrap(), std::fs::read(&again).unwrap());

    let sim = retrysim(&["simulate", "--policy", "baseline", "--trace", path_str(&normalized)]);
    assert_eq!(code(&sim), 0, "{}", String::from_utf8_lossy(&sim.stderr));
}

#[test]
fn rpt_default_grid_and_single_bucket() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("rpt.txt");
    let out = retrysim(&["rpt", "--output", path_str(&table)]);
    assert_eq!(code(&out), 0);
    let audit = String::from_utf8_lossy(&out.stdout);
    let entries: Vec<&str> = audit.lines().skip(1).collect();
    assert_eq!(entries.len(), 36);
    for line in entries {
        let pct: u8 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((40..=54).contains(&pct), "{line}");
    }
    let out = retrysim(&["rpt", "--pec", "500", "--retention-months", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn rpt_calibration_failures() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("corrupt.toml");
    std::fs::write(&corrupt, "ecc_capability = \"many\"\n").unwrap();
    assert_eq!(code(&retrysim(&["rpt", "--calibration", path_str(&corrupt)])), 2);

    let dump = retrysim(&["rpt", "--dump-calibration"]);
    assert_eq!(code(&dump), 0);
    let text = String::from_utf8(dump.stdout).unwrap();
    let tight = dir.path().join("tight.toml");
    std::fs::write(&tight, text.replace("safety_margin_bits = 14", "safety_margin_bits = 60")).unwrap();
    let out = retrysim(&["rpt", "--calibration", path_str(&tight)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no safe tPRE reduction at pec 0"));
}

#[test]
fn oracle_check_passes_and_catches_broken_policy() {
    let out = retrysim(&["oracle-check"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(code(&retrysim(&["oracle-check", "--break-policy", "pr2"])), 4);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slow_ecc.toml");
    std::fs::write(&cfg, "[timing]\ntecc_us = 30.0\n").unwrap();
    assert_eq!(code(&retrysim(&["oracle-check", "--config", path_str(&cfg)])), 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.json"), dir.path().join("b.json")];
    for p in &paths {
        let out = retrysim(&[
            "simulate",
            "--policy",
            "all",
            "--sweep",
            "default",
            "--seed",
            "3",
            "--requests",
            "300",
            "--output",
            path_str(p),
        ]);
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_eq!(read_report(&paths[0], ReportFormat::Json).unwrap().len(), 12 * PolicyKind::ALL.len());
}
