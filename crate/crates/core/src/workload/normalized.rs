//! Internal trace format: one `arrival_ns,op,lba,size_bytes,cold` record per
//! line, `op` in `R`/`W`/`E` and `cold` in `0`/`1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{IoOp, IoRequest};
use crate::error::TraceError;
use crate::timing::Nanos;

pub fn to_normalized_string(reqs: &[IoRequest]) -> String {
    let mut s = String::with_capacity(reqs.len() * 32);
    for r in reqs {
        let _ = writeln!(s, "{},{},{},{},{}", r.arrival.0, r.op.code(), r.lba, r.size_bytes, u8::from(r.cold));
    }
    s
}

pub fn write_normalized(path: &Path, reqs: &[IoRequest]) -> Result<(), TraceError> {
    fs::write(path, to_normalized_string(reqs)).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })
}

pub fn read_normalized(path: &Path) -> Result<Vec<IoRequest>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    read_normalized_str(&text)
}

/// Arrivals must already be non-decreasing.
pub fn read_normalized_str(text: &str) -> Result<Vec<IoRequest>, TraceError> {
    let mut out: Vec<IoRequest> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let num =
            |idx: usize| f[idx].parse::<u64>().map_err(|_| err(format!("`{}` is not an unsigned integer", f[idx])));
        let op = match f[1] {
            "R" | "r" => IoOp::Read,
            "W" | "w" => IoOp::Write,
            "E" | "e" => IoOp::Erase,
            other => return Err(err(format!("unknown op `{other}`"))),
        };
        let cold = match f[4] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("cold flag `{other}` must be 0 or 1"))),
        };
        let req = IoRequest { arrival: Nanos(num(0)?), op, lba: num(2)?, size_bytes: num(3)?, cold };
        if req.size_bytes == 0 {
            return Err(err("size must be positive".into()));
        }
        if out.last().is_some_and(|prev| prev.arrival > req.arrival) {
            return Err(err("arrivals must be non-decreasing".into()));
        }
        out.push(req);
    }
    if out.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn op_strategy() -> impl Strategy<Value = IoOp> {
        prop_oneof![Just(IoOp::Read), Just(IoOp::Write), Just(IoOp::Erase)]
    }

    proptest! {
        #[test]
        fn parse_of_serialize_is_identity(
            gaps in proptest::collection::vec(0u64..1_000_000, 1..50),
            ops in proptest::collection::vec((op_strategy(), 0u64..1 << 40, 1u64..1 << 20, any::<bool>()), 50),
        ) {
            let mut t = 0;
            let reqs: Vec<IoRequest> = gaps.iter().zip(&ops).map(|(g, &(op, lba, size, cold))| {
                t += g;
                IoRequest { arrival: Nanos(t), op, lba, size_bytes: size, cold }
            }).collect();
            let text = to_normalized_string(&reqs);
            prop_assert_eq!(read_normalized_str(&text).unwrap(), reqs);
        }
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(read_normalized_str("0,X,1,1,0"), Err(TraceError::Parse { line: 1, .. })));
        assert!(matches!(read_normalized_str("5,R,1,1,0\n4,R,1,1,0"), Err(TraceError::Parse { line: 2, .. })));
        assert!(matches!(read_normalized_str("0,R,1,1,2"), Err(TraceError::Parse { .. })));
        assert!(matches!(read_normalized_str("# nothing\n"), Err(TraceError::Empty)));
    }
}
