use std::io::Write;

use retrysim::error::TraceError;
use retrysim::kernel::{run, FixedRetries, SimConfig};
use retrysim::policy::PolicyKind;
use retrysim::reliability::RptTable;
use retrysim::timing::Nanos;
use retrysim::workload::{
    detect_format, load_trace, parse_msrc, read_normalized, synthesize, trace_stats, write_normalized, IoOp,
    TraceFormat, WorkloadSpec,
};

const PAGE: u64 = 16384;

/// Eight reads and two writes; the writes cover the pages of two reads.
const FIXTURE: &str = "\
128166372003061629,hm,1,Read,0,16384,100
128166372003062629,hm,1,Write,32768,16384,100
128166372003063629,hm,1,read,32768,16384,100
128166372003064629,hm,1,Read,65536,16384,100
128166372003065629,hm,1,Read,98304,32768,100
128166372003066629,hm,1,Write,163840,16384,100
128166372003067629,hm,1,READ,163840,16384,100
128166372003068629,hm,1,Read,229376,16384,100
128166372003069629,hm,1,Read,262144,16384,100
128166372003070629,hm,1,Read,294912,16384,100
";

fn fixture_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn msrc_fixture_ratios() {
    let f = fixture_file(FIXTURE);
    let reqs = parse_msrc(f.path(), PAGE).unwrap();
    let stats = trace_stats(&reqs);
    assert_eq!((stats.requests, stats.reads, stats.cold_reads), (10, 8, 6));
    assert!((stats.read_ratio - 0.8).abs() < 1e-12);
    assert!((stats.cold_ratio - 0.75).abs() < 1e-12);
    // 1000 ticks of 100 ns between records
    assert_eq!(reqs[0].arrival, Nanos::ZERO);
    assert_eq!(reqs[1].arrival, Nanos::from_us(100));
    assert_eq!(reqs[4].lba, 6);
    assert_eq!(reqs[4].page_count(PAGE), 2);
}

#[test]
fn normalized_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = synthesize(&WorkloadSpec { request_count: 500, ..WorkloadSpec::default() }, 9).unwrap();
    let path = dir.path().join("trace.txt");
    write_normalized(&path, &reqs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(detect_format(&text).unwrap(), TraceFormat::Normalized);
    assert_eq!(read_normalized(&path).unwrap(), reqs);
    assert_eq!(load_trace(&path, PAGE).unwrap(), reqs);
}

#[test]
fn load_trace_detects_msrc() {
    let f = fixture_file(FIXTURE);
    assert_eq!(detect_format(FIXTURE).unwrap(), TraceFormat::Msrc);
    assert_eq!(load_trace(f.path(), PAGE).unwrap(), parse_msrc(f.path(), PAGE).unwrap());
}

#[test]
fn empty_and_malformed_traces_rejected() {
    let empty = fixture_file("");
    assert!(matches!(parse_msrc(empty.path(), PAGE), Err(TraceError::Empty)));
    let bad = fixture_file("128166372003061629,hm,1,Read,0,16384,100\n128166372003061629,hm,1,Trim,0,16384,100\n");
    match parse_msrc(bad.path(), PAGE) {
        Err(TraceError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let missing = std::path::Path::new("/nonexistent/trace.csv");
    assert!(matches!(load_trace(missing, PAGE), Err(TraceError::Io { .. })));
}

#[test]
fn replayed_trace_splits_multi_page_requests() {
    let f = fixture_file(FIXTURE);
    let reqs = parse_msrc(f.path(), PAGE).unwrap();
    let rpt = RptTable::uniform(40).unwrap();
    let out = run(&SimConfig::default(), PolicyKind::Baseline, &reqs, &FixedRetries(0), &rpt).unwrap();
    assert_eq!(out.requests.len(), reqs.len());
    assert_eq!(out.page_reads.len(), 9);
    assert_eq!(out.requests[4].pages, 2);
    for r in out.requests.iter().filter(|r| r.op == IoOp::Read) {
        assert!(r.response() >= Nanos::from_us(114));
    }
}
