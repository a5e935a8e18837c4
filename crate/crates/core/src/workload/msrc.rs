//! MSR Cambridge block traces.
//!
//! Each record is `Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime`
//! where the timestamp counts 100 ns Windows filetime ticks and offset/size
//! are in bytes.

use std::fs;
use std::path::Path;

use super::{tag_cold, IoOp, IoRequest};
use crate::error::TraceError;
use crate::timing::Nanos;

const NS_PER_TICK: u64 = 100;

pub fn parse_msrc(path: &Path, page_bytes: u64) -> Result<Vec<IoRequest>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    parse_msrc_str(&text, page_bytes)
}

/// Parses, rebases timestamps to zero, sorts stably by arrival, aligns each
/// extent to whole pages and tags cold reads.
pub fn parse_msrc_str(text: &str, page_bytes: u64) -> Result<Vec<IoRequest>, TraceError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |idx: usize, name: &str| {
            fields[idx].parse::<u64>().map_err(|_| err(format!("{name} `{}` is not an unsigned integer", fields[idx])))
        };
        let ticks = num(0, "timestamp")?;
        let op = if fields[3].eq_ignore_ascii_case("read") {
            IoOp::Read
        } else if fields[3].eq_ignore_ascii_case("write") {
            IoOp::Write
        } else {
            return Err(err(format!("unknown request type `{}`", fields[3])));
        };
        let offset = num(4, "offset")?;
        let size = num(5, "size")?;
        if size == 0 {
            return Err(err("size must be positive".into()));
        }
        let first = offset / page_bytes;
        let last = (offset + size - 1) / page_bytes;
        records.push((
            ticks,
            IoRequest {
                arrival: Nanos::ZERO,
                op,
                lba: first,
                size_bytes: (last - first + 1) * page_bytes,
                cold: false,
            },
        ));
    }
    let origin = records.iter().map(|r| r.0).min().ok_or(TraceError::Empty)?;
    records.sort_by_key(|r| r.0);
    let mut reqs: Vec<IoRequest> = records
        .into_iter()
        .map(|(ticks, r)| IoRequest { arrival: Nanos((ticks - origin) * NS_PER_TICK), ..r })
        .collect();
    tag_cold(&mut reqs, page_bytes);
    Ok(reqs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAGE: u64 = 16384;

    #[test]
    fn two_records_keep_spacing() {
        let t = "128166372003061629,hm,0,Write,8192,4096,1331\n128166372003161629,hm,0,Read,40960,16384,20\n";
        let r = parse_msrc_str(t, PAGE).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].arrival, Nanos::ZERO);
        assert_eq!(r[1].arrival, Nanos(100_000 * 100));
        assert_eq!((r[0].op, r[0].lba, r[0].size_bytes), (IoOp::Write, 0, PAGE));
        // 40960..57344 straddles pages 2 and 3
        assert_eq!((r[1].lba, r[1].size_bytes), (2, 2 * PAGE));
        assert!(r[1].cold);
    }

    #[test]
    fn lowercase_type_and_sorting() {
        let t = "200,h,0,read,0,32768,0\n100,h,0,WRITE,0,16384,0\n";
        let r = parse_msrc_str(t, PAGE).unwrap();
        assert_eq!(r[0].op, IoOp::Write);
        assert_eq!(r[1].op, IoOp::Read);
        assert_eq!(r[1].page_count(PAGE), 2);
        assert!(!r[1].cold);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let t = "100,h,0,Read,0,4096,0\n\n100,h,0,Trim,0,4096,0\n";
        match parse_msrc_str(t, PAGE) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_msrc_str("100,h,0,Read,x,4096,0", PAGE), Err(TraceError::Parse { line: 1, .. })));
        assert!(matches!(parse_msrc_str("100,h,0,Read,0,0,0", PAGE), Err(TraceError::Parse { .. })));
        assert!(matches!(parse_msrc_str("", PAGE), Err(TraceError::Empty)));
    }
}
