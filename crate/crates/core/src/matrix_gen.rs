//! Probe classification and construction of the success-rate, right-block,
//! recent-height and round-trip-time matrices.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::ingestion::group_batches;
use crate::model::{intern_ids, CanonicalChain, Criteria, FactorSet, ObservationMatrix, TestCase};

/// Verdict on one probe. `success` is the conjunction of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseOutcome {
    pub right_block: bool,
    pub recent_height: bool,
    pub in_time: bool,
    pub success: bool,
}

/// Judges one probe against the chain and the batch's highest height.
///
/// A null response is never right nor recent. Heights outside the chain are
/// unverifiable and count as wrong. With no height in the batch there is no
/// reference, so nothing in it is recent.
pub fn classify_case(
    case: &TestCase,
    batch_max_height: Option<u64>,
    chain: &CanonicalChain,
    criteria: &Criteria,
) -> CaseOutcome {
    let right_block = match (case.height, case.block_hash.as_deref()) {
        (Some(h), Some(hash)) => chain.matches(h, hash),
        _ => false,
    };
    let recent_height = match (case.height, batch_max_height) {
        (Some(h), Some(max)) => max.saturating_sub(h) <= criteria.max_block_back,
        _ => false,
    };
    let in_time = case.rtt_ms() <= criteria.max_rtt_ms;
    CaseOutcome {
        right_block,
        recent_height,
        in_time,
        success: right_block && recent_height && in_time,
    }
}

/// Whether a probe's round-trip time enters the RTT average. Null responses
/// are included: the average divides by the total request count.
#[inline]
fn counts_toward_rtt(_case: &TestCase) -> bool {
    true
}

/// Raw counters for one requester/peer pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub total: u64,
    pub success: u64,
    pub right_block: u64,
    pub recent_height: u64,
    pub rtt_cases: u64,
    pub rtt_sum_ms: u128,
}

impl CellCounts {
    pub fn record(&mut self, case: &TestCase, outcome: CaseOutcome) {
        self.total += 1;
        self.success += outcome.success as u64;
        self.right_block += outcome.right_block as u64;
        self.recent_height += outcome.recent_height as u64;
        if counts_toward_rtt(case) {
            self.rtt_cases += 1;
            self.rtt_sum_ms += case.rtt_ms() as u128;
        }
    }

    fn merge(&mut self, other: &CellCounts) {
        self.total += other.total;
        self.success += other.success;
        self.right_block += other.right_block;
        self.recent_height += other.recent_height;
        self.rtt_cases += other.rtt_cases;
        self.rtt_sum_ms += other.rtt_sum_ms;
    }
}

/// Counters for every pair, laid out row-major over `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCounts {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<CellCounts>,
}

impl FactorCounts {
    pub fn get(&self, r: usize, c: usize) -> &CellCounts {
        &self.counts[r * self.cols.len() + c]
    }
}

pub fn count_cells(cases: &[TestCase], chain: &CanonicalChain, criteria: &Criteria) -> FactorCounts {
    let (rows, cols) = intern_ids(cases);
    let row_of: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let col_of: HashMap<&str, usize> = cols.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let n_cols = cols.len();

    let batches = group_batches(cases);
    let partials: Vec<Vec<(usize, CellCounts)>> = batches
        .par_iter()
        .map(|batch| {
            let r = row_of[batch.requester_id.as_str()];
            batch
                .cases
                .iter()
                .map(|case| {
                    let mut cell = CellCounts::default();
                    cell.record(case, classify_case(case, batch.max_height, chain, criteria));
                    (r * n_cols + col_of[case.peer_id.as_str()], cell)
                })
                .collect()
        })
        .collect();

    // Integer counters merge exactly, so the result is independent of order.
    let mut counts = vec![CellCounts::default(); rows.len() * n_cols];
    for (idx, cell) in partials.iter().flatten() {
        counts[*idx].merge(cell);
    }
    FactorCounts { rows, cols, counts }
}

pub fn build_matrices(cases: &[TestCase], chain: &CanonicalChain, criteria: &Criteria) -> FactorSet {
    factor_set_from_counts(&count_cells(cases, chain, criteria), *criteria)
}

pub fn factor_set_from_counts(fc: &FactorCounts, criteria: Criteria) -> FactorSet {
    let rate = |f: fn(&CellCounts) -> u64| -> Vec<Option<f64>> {
        fc.counts
            .iter()
            .map(|c| (c.total > 0).then(|| f(c) as f64 / c.total as f64))
            .collect()
    };
    let rtt = fc
        .counts
        .iter()
        .map(|c| (c.total > 0).then(|| if c.rtt_cases == 0 { 0.0 } else { c.rtt_sum_ms as f64 / c.rtt_cases as f64 }))
        .collect();
    let make = |cells| {
        ObservationMatrix::from_cells(fc.rows.clone(), fc.cols.clone(), cells)
            .expect("ids are interned and counter ratios are finite")
    };
    FactorSet {
        success_rate: make(rate(|c| c.success)),
        right_block: make(rate(|c| c.right_block)),
        recent_height: make(rate(|c| c.recent_height)),
        round_trip_time: make(rtt),
        criteria,
    }
}
