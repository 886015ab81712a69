//! Test-case and canonical-chain CSV parsing, batch grouping, and the
//! matrix CSV format shared by the pipeline stages.
//!
//! Test-case files carry the header
//! `RequesterIP,BatchTime,PeerIP,StartTime,EndTime,Height,BlockHash`;
//! a null response writes the literal `null` in both of the last two columns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CanonicalChain, ObservationMatrix, TestCase};

pub const TEST_CASE_HEADER: &str = "RequesterIP,BatchTime,PeerIP,StartTime,EndTime,Height,BlockHash";
pub const CHAIN_HEADER: &str = "Height,BlockHash";
pub const NULL_TOKEN: &str = "null";

/// Resolution of timestamps in a test-case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Seconds,
    Milliseconds,
}

impl TimeUnit {
    fn factor(self) -> u64 {
        match self {
            TimeUnit::Seconds => 1000,
            TimeUnit::Milliseconds => 1,
        }
    }
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" | "seconds" => Ok(TimeUnit::Seconds),
            "ms" | "milliseconds" => Ok(TimeUnit::Milliseconds),
            other => Err(Error::InvalidConfig(format!("unknown time unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub time_unit: TimeUnit,
    /// Skip invalid rows instead of failing on the first one.
    pub lenient: bool,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub cases: Vec<TestCase>,
    /// Rows skipped in lenient mode, with their diagnostics.
    pub rejected: Vec<Error>,
}

/// Strict parse: the first invalid row aborts with its line number.
pub fn parse_test_cases<R: BufRead>(reader: R, time_unit: TimeUnit) -> Result<Vec<TestCase>> {
    let opts = ParseOptions {
        time_unit,
        lenient: false,
    };
    parse_test_cases_with(reader, opts).map(|o| o.cases)
}

pub fn parse_test_cases_with<R: BufRead>(reader: R, opts: ParseOptions) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, header)) => {
            let header = header?;
            if header.trim_end_matches('\r') != TEST_CASE_HEADER {
                return Err(Error::MalformedRow {
                    line: 1,
                    reason: format!("expected header {TEST_CASE_HEADER:?}"),
                });
            }
        }
        None => return Ok(out),
    }
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_case_row(line, idx + 1, opts.time_unit) {
            Ok(case) => out.cases.push(case),
            Err(e) if opts.lenient => out.rejected.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn parse_u64(field: &str, what: &str, line: usize) -> Result<u64> {
    field.parse::<u64>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("{what} {field:?} is not a non-negative integer"),
    })
}

/// Timestamps in seconds may carry up to three decimals; milliseconds are integral.
fn parse_time(field: &str, what: &str, line: usize, unit: TimeUnit) -> Result<u64> {
    let bad = |reason: String| Error::MalformedRow { line, reason };
    let (whole, frac) = match (unit, field.split_once('.')) {
        (TimeUnit::Seconds, Some((w, f))) => {
            if f.is_empty() || f.len() > 3 || !f.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad(format!("{what} {field:?} is not a time with at most millisecond precision")));
            }
            let digits: u64 = f.parse().expect("checked digits");
            (w, digits * 10u64.pow(3 - f.len() as u32))
        }
        _ => (field, 0),
    };
    parse_u64(whole, what, line)?
        .checked_mul(unit.factor())
        .and_then(|ms| ms.checked_add(frac))
        .ok_or_else(|| bad(format!("{what} overflows")))
}

fn parse_case_row(line: &str, line_no: usize, unit: TimeUnit) -> Result<TestCase> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(Error::MalformedRow {
            line: line_no,
            reason: format!("expected 7 columns, found {}", fields.len()),
        });
    }
    if fields[0].is_empty() || fields[2].is_empty() {
        return Err(Error::MalformedRow {
            line: line_no,
            reason: "empty requester or peer id".into(),
        });
    }
    let scale = |f: &str, what: &str| parse_time(f, what, line_no, unit);
    let batch_time = scale(fields[1], "BatchTime")?;
    let start_time = scale(fields[3], "StartTime")?;
    let end_time = scale(fields[4], "EndTime")?;

    let height = match fields[5] {
        NULL_TOKEN => None,
        h if h.starts_with('-') => {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("negative height {h}"),
            })
        }
        h => Some(parse_u64(h, "Height", line_no)?),
    };
    let block_hash = match fields[6] {
        NULL_TOKEN => None,
        "" => {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: "empty block hash".into(),
            })
        }
        h => Some(h.to_string()),
    };
    if height.is_some() != block_hash.is_some() {
        return Err(Error::InconsistentNull { line: line_no });
    }
    if end_time < start_time {
        return Err(Error::TimeOrderViolation {
            line: line_no,
            reason: "EndTime precedes StartTime".into(),
        });
    }
    if start_time < batch_time {
        return Err(Error::TimeOrderViolation {
            line: line_no,
            reason: "StartTime precedes BatchTime".into(),
        });
    }
    Ok(TestCase {
        requester_id: fields[0].to_string(),
        batch_time,
        peer_id: fields[2].to_string(),
        start_time,
        end_time,
        height,
        block_hash,
    })
}

fn format_time(ms: u64, unit: TimeUnit) -> String {
    match unit {
        TimeUnit::Milliseconds => ms.to_string(),
        TimeUnit::Seconds if ms.is_multiple_of(1000) => (ms / 1000).to_string(),
        TimeUnit::Seconds => format!("{}.{:03}", ms / 1000, ms % 1000),
    }
}

/// Inverse of [`parse_test_cases`]. In seconds, whole seconds are written
/// bare and anything finer gets exactly three decimals.
pub fn write_test_cases<W: Write>(mut w: W, cases: &[TestCase], unit: TimeUnit) -> Result<()> {
    let t = |ms: u64| format_time(ms, unit);
    let mut buf = String::with_capacity(64 * (cases.len() + 1));
    buf.push_str(TEST_CASE_HEADER);
    buf.push('\n');
    for c in cases {
        write!(
            buf,
            "{},{},{},{},{},",
            c.requester_id,
            t(c.batch_time),
            c.peer_id,
            t(c.start_time),
            t(c.end_time)
        )
        .unwrap();
        match (&c.height, &c.block_hash) {
            (Some(h), Some(hash)) => writeln!(buf, "{h},{hash}").unwrap(),
            _ => writeln!(buf, "{NULL_TOKEN},{NULL_TOKEN}").unwrap(),
        }
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn parse_canonical_chain<R: BufRead>(reader: R) -> Result<CanonicalChain> {
    let mut lines = reader.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).transpose()?;
    match header {
        Some(h) if h.trim_end_matches('\r') == CHAIN_HEADER => {}
        _ => {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!("expected header {CHAIN_HEADER:?}"),
            })
        }
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (h, hash) = line.split_once(',').ok_or_else(|| Error::MalformedRow {
            line: line_no,
            reason: "expected 2 columns".into(),
        })?;
        if hash.is_empty() || hash.contains(',') {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: "expected a single non-empty hash column".into(),
            });
        }
        entries.push((parse_u64(h, "Height", line_no)?, hash.to_string()));
    }
    CanonicalChain::from_entries(entries)
}

pub fn write_canonical_chain<W: Write>(mut w: W, chain: &CanonicalChain) -> Result<()> {
    let mut buf = String::with_capacity(80 * (chain.len() + 1));
    buf.push_str(CHAIN_HEADER);
    buf.push('\n');
    for (h, hash) in chain.iter() {
        writeln!(buf, "{h},{hash}").unwrap();
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

/// One requester's probes for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub requester_id: String,
    pub batch_time: u64,
    pub cases: Vec<TestCase>,
    /// Highest height returned in the batch; `None` when every response was null.
    pub max_height: Option<u64>,
}

/// Partitions cases by `(requester_id, batch_time)`, ordered by that key.
/// Within a batch, cases keep their input order.
pub fn group_batches(cases: &[TestCase]) -> Vec<Batch> {
    let mut groups: BTreeMap<(&str, u64), Vec<&TestCase>> = BTreeMap::new();
    for c in cases {
        groups
            .entry((c.requester_id.as_str(), c.batch_time))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((r, t), members)| Batch {
            requester_id: r.to_string(),
            batch_time: t,
            max_height: members.iter().filter_map(|c| c.height).max(),
            cases: members.into_iter().cloned().collect(),
        })
        .collect()
}

/// Matrix CSV: the first row lists peer ids after an empty corner cell, each
/// following row starts with its requester id, and an empty cell is missing.
pub fn write_matrix<W: Write>(mut w: W, m: &ObservationMatrix) -> Result<()> {
    let mut buf = String::new();
    for c in m.cols() {
        buf.push(',');
        buf.push_str(c);
    }
    buf.push('\n');
    for (r, id) in m.rows().iter().enumerate() {
        buf.push_str(id);
        for v in m.row(r) {
            buf.push(',');
            if let Some(v) = v {
                write!(buf, "{v}").unwrap();
            }
        }
        buf.push('\n');
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_matrix<R: BufRead>(reader: R) -> Result<ObservationMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h?,
        None => return Err(Error::EmptyInput),
    };
    let header = header.trim_end_matches('\r');
    let mut head = header.split(',');
    head.next();
    let cols: Vec<String> = head.map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut fields = line.split(',');
        rows.push(fields.next().unwrap_or_default().to_string());
        let before = cells.len();
        for f in fields {
            if f.is_empty() {
                cells.push(None);
            } else {
                let v: f64 = f.parse().map_err(|_| Error::MalformedRow {
                    line: line_no,
                    reason: format!("cell {f:?} is not a number"),
                })?;
                cells.push(Some(v));
            }
        }
        if cells.len() - before != cols.len() {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("expected {} cells, found {}", cols.len(), cells.len() - before),
            });
        }
    }
    ObservationMatrix::from_cells(rows, cols, cells)
}
