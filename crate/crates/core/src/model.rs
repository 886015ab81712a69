//! Shared domain types: probe records, the canonical chain, and the
//! requester × peer matrix container every other module works on.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One probe: a requester asked a peer for its latest block.
///
/// All times are epoch milliseconds. `height` and `block_hash` are both
/// present or both absent (a null response).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TestCase {
    pub requester_id: String,
    pub batch_time: u64,
    pub peer_id: String,
    pub start_time: u64,
    pub end_time: u64,
    pub height: Option<u64>,
    pub block_hash: Option<String>,
}

impl TestCase {
    pub fn rtt_ms(&self) -> u64 {
        self.end_time.saturating_sub(self.start_time)
    }

    pub fn is_null(&self) -> bool {
        self.height.is_none()
    }
}

/// Trusted height → hash association over a contiguous height range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalChain {
    min_height: u64,
    hashes: Vec<String>,
}

impl CanonicalChain {
    /// Builds a chain from `(height, hash)` pairs in any order.
    pub fn from_entries(mut entries: Vec<(u64, String)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyChain);
        }
        entries.sort_by_key(|(h, _)| *h);
        for pair in entries.windows(2) {
            let (a, b) = (pair[0].0, pair[1].0);
            if a == b {
                return Err(Error::DuplicateHeight { height: a });
            }
            if b != a + 1 {
                return Err(Error::GapInChain { missing: a + 1 });
            }
        }
        let min_height = entries[0].0;
        let hashes = entries.into_iter().map(|(_, h)| h).collect();
        Ok(Self { min_height, hashes })
    }

    pub fn min_height(&self) -> u64 {
        self.min_height
    }

    pub fn max_height(&self) -> u64 {
        self.min_height + self.hashes.len() as u64 - 1
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    pub fn hash_at(&self, height: u64) -> Option<&str> {
        let offset = height.checked_sub(self.min_height)?;
        self.hashes.get(offset as usize).map(String::as_str)
    }

    /// Case-insensitive hash check at `height`; heights outside the chain never match.
    pub fn matches(&self, height: u64, hash: &str) -> bool {
        self.hash_at(height)
            .is_some_and(|h| h.eq_ignore_ascii_case(hash))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &str)> {
        self.hashes
            .iter()
            .enumerate()
            .map(move |(i, h)| (self.min_height + i as u64, h.as_str()))
    }
}

/// Tolerances applied when judging a probe. `u64::MAX` disables a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Criteria {
    pub max_block_back: u64,
    pub max_rtt_ms: u64,
}

impl Criteria {
    pub fn new(max_block_back: u64, max_rtt_ms: u64) -> Result<Self> {
        let c = Self {
            max_block_back,
            max_rtt_ms,
        };
        c.validate()?;
        Ok(c)
    }

    /// No backwardness or latency limit.
    pub fn unbounded() -> Self {
        Self {
            max_block_back: u64::MAX,
            max_rtt_ms: u64::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rtt_ms == 0 {
            return Err(Error::InvalidConfig("max_rtt_ms must be positive".into()));
        }
        Ok(())
    }
}

/// Exponential reliability parameters: failure rate and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityParams {
    pub t: f64,
    pub gamma: f64,
}

impl ReliabilityParams {
    pub fn from_success_rate(success_rate: f64, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::DomainError(format!("horizon t must be positive, got {t}")));
        }
        if !(0.0..=1.0).contains(&success_rate) {
            return Err(Error::DomainError(format!(
                "success rate must lie in [0,1], got {success_rate}"
            )));
        }
        Ok(Self {
            t,
            gamma: 1.0 - success_rate,
        })
    }

    pub fn reliability(&self) -> f64 {
        (-self.gamma * self.t).exp()
    }
}

/// Distinct requester and peer ids in first-appearance order.
pub fn intern_ids(cases: &[TestCase]) -> (Vec<String>, Vec<String>) {
    let mut seen_r = HashSet::new();
    let mut seen_p = HashSet::new();
    let mut requesters = Vec::new();
    let mut peers = Vec::new();
    for c in cases {
        if seen_r.insert(c.requester_id.as_str()) {
            requesters.push(c.requester_id.clone());
        }
        if seen_p.insert(c.peer_id.as_str()) {
            peers.push(c.peer_id.clone());
        }
    }
    (requesters, peers)
}

/// Dense requester × peer grid of optional finite values, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Option<f64>>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::ShapeMismatch(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

impl ObservationMatrix {
    /// All-missing matrix.
    pub fn empty(rows: Vec<String>, cols: Vec<String>) -> Result<Self> {
        let n = rows.len() * cols.len();
        Self::from_cells(rows, cols, vec![None; n])
    }

    pub fn from_cells(rows: Vec<String>, cols: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        check_unique(&rows, "row")?;
        check_unique(&cols, "column")?;
        if cells.len() != rows.len() * cols.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for a {}x{} matrix",
                cells.len(),
                rows.len(),
                cols.len()
            )));
        }
        if let Some(v) = cells.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::DomainError(format!("non-finite cell value {v}")));
        }
        Ok(Self { rows, cols, cells })
    }

    /// Matrix with generated ids `r0..`, `c0..`; handy for tests and synthetic data.
    pub fn from_grid(grid: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_rows = grid.len();
        let n_cols = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|row| row.len() != n_cols) {
            return Err(Error::ShapeMismatch("ragged grid".into()));
        }
        let rows = (0..n_rows).map(|i| format!("r{i}")).collect();
        let cols = (0..n_cols).map(|j| format!("c{j}")).collect();
        Self::from_cells(rows, cols, grid.iter().flatten().copied().collect())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.cells[r * self.cols.len() + c]
    }

    #[inline]
    pub fn is_known(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_some()
    }

    /// Panics on a non-finite value.
    pub fn set(&mut self, r: usize, c: usize, value: Option<f64>) {
        assert!(value.is_none_or(f64::is_finite), "non-finite cell value");
        let n = self.cols.len();
        self.cells[r * n + c] = value;
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == id)
    }

    pub fn col_index(&self, id: &str) -> Option<usize> {
        self.cols.iter().position(|c| c == id)
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// `(row, col, value)` for every known cell, row-major.
    pub fn known_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.cols.len();
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, v)| v.map(|v| (idx / n, idx % n, v)))
    }

    pub fn row(&self, r: usize) -> &[Option<f64>] {
        let n = self.cols.len();
        &self.cells[r * n..(r + 1) * n]
    }

    pub fn row_mean(&self, r: usize) -> Option<f64> {
        mean(self.row(r).iter().flatten().copied())
    }

    pub fn col_mean(&self, c: usize) -> Option<f64> {
        mean((0..self.rows.len()).filter_map(|r| self.get(r, c)))
    }

    pub fn global_mean(&self) -> Option<f64> {
        mean(self.cells.iter().flatten().copied())
    }

    pub fn mask(&self) -> Vec<bool> {
        self.cells.iter().map(Option::is_some).collect()
    }

    pub fn same_ids(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn transpose(&self) -> Self {
        let (nr, nc) = (self.rows.len(), self.cols.len());
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in 0..nc {
            for r in 0..nr {
                cells.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            cells,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// The success-rate matrix and its three factor matrices, aligned on ids and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    pub success_rate: ObservationMatrix,
    pub right_block: ObservationMatrix,
    pub recent_height: ObservationMatrix,
    pub round_trip_time: ObservationMatrix,
    pub criteria: Criteria,
}

impl FactorSet {
    pub fn new(
        success_rate: ObservationMatrix,
        right_block: ObservationMatrix,
        recent_height: ObservationMatrix,
        round_trip_time: ObservationMatrix,
        criteria: Criteria,
    ) -> Result<Self> {
        let set = Self {
            success_rate,
            right_block,
            recent_height,
            round_trip_time,
            criteria,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.criteria.validate()?;
        let sr = &self.success_rate;
        for (name, m) in [
            ("right_block", &self.right_block),
            ("recent_height", &self.recent_height),
            ("round_trip_time", &self.round_trip_time),
        ] {
            if !sr.same_ids(m) {
                return Err(Error::ShapeMismatch(format!("{name} ids differ from success_rate")));
            }
            if sr.cells.iter().zip(&m.cells).any(|(a, b)| a.is_some() != b.is_some()) {
                return Err(Error::ShapeMismatch(format!("{name} mask differs from success_rate")));
            }
        }
        for (name, m) in [
            ("success_rate", sr),
            ("right_block", &self.right_block),
            ("recent_height", &self.recent_height),
        ] {
            if let Some(v) = m.cells.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::DomainError(format!("{name} cell {v} outside [0,1]")));
            }
        }
        if let Some(v) = self.round_trip_time.cells.iter().flatten().find(|v| **v < 0.0) {
            return Err(Error::DomainError(format!("negative round-trip time {v}")));
        }
        Ok(())
    }

    /// Copy with the given `(row, col)` cells removed from all four matrices.
    pub fn without_cells(&self, cells: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(r, c) in cells {
            out.success_rate.set(r, c, None);
            out.right_block.set(r, c, None);
            out.recent_height.set(r, c, None);
            out.round_trip_time.set(r, c, None);
        }
        out
    }
}
