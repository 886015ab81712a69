//! The hybrid predictor: complete the three factor matrices with item-based
//! CF, map factors to success rate with a least-squares linear model, convert
//! success rate to exponential reliability, and rank peers.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collab_filter::{complete_matrix, CompletionParams, Method};
use crate::error::{Error, Result};
use crate::model::{FactorSet, ObservationMatrix, ReliabilityParams};

/// Fewer known cells than coefficients leaves the fit underdetermined.
pub const MIN_TRAINING_CELLS: usize = 4;

/// Diagonal stabilizer added to the normal matrix.
pub const RIDGE: f64 = 1e-8;

/// `sr ≈ intercept + w_rb·rb + w_rh·rh + w_rtt·min(rtt, rtt_scale)/rtt_scale`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub intercept: f64,
    pub w_right_block: f64,
    pub w_recent_height: f64,
    pub w_rtt: f64,
    pub rtt_scale: f64,
}

impl RegressionModel {
    pub fn features(&self, rb: f64, rh: f64, rtt: f64) -> [f64; 4] {
        [1.0, rb, rh, rtt.min(self.rtt_scale) / self.rtt_scale]
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.intercept, self.w_right_block, self.w_recent_height, self.w_rtt]
    }

    /// Unclamped linear response.
    pub fn raw(&self, rb: f64, rh: f64, rtt: f64) -> f64 {
        let x = self.features(rb, rh, rtt);
        self.coefficients().iter().zip(x).map(|(w, x)| w * x).sum()
    }
}

/// Solves `a·x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. Returns `None` on a numerically singular matrix.
fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(Ordering::Equal))?;
        if a[pivot][col].abs() < f64::MIN_POSITIVE {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let pivot_row = a[col];
            let f = a[row][col] / pivot_row[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least-squares fit over `(rb, rh, rtt, sr)` samples.
pub fn fit_samples(samples: &[[f64; 4]], rtt_scale: f64) -> Result<RegressionModel> {
    if samples.len() < MIN_TRAINING_CELLS {
        return Err(Error::InsufficientData {
            needed: MIN_TRAINING_CELLS,
            found: samples.len(),
        });
    }
    if !(rtt_scale.is_finite() && rtt_scale > 0.0) {
        return Err(Error::DomainError(format!("rtt scale must be positive, got {rtt_scale}")));
    }
    let shell = RegressionModel {
        intercept: 0.0,
        w_right_block: 0.0,
        w_recent_height: 0.0,
        w_rtt: 0.0,
        rtt_scale,
    };
    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    for &[rb, rh, rtt, sr] in samples {
        let x = shell.features(rb, rh, rtt);
        for i in 0..4 {
            xty[i] += x[i] * sr;
            for j in 0..4 {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += RIDGE;
    }
    let w = solve(xtx, xty).ok_or_else(|| Error::DomainError("normal equations are singular".into()))?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("regression produced non-finite coefficients".into()));
    }
    Ok(RegressionModel {
        intercept: w[0],
        w_right_block: w[1],
        w_recent_height: w[2],
        w_rtt: w[3],
        rtt_scale,
    })
}

/// Fits the factor → success-rate mapping on every known cell, normalizing
/// RTT by the criteria's `max_rtt_ms`.
pub fn fit_linear(factors: &FactorSet) -> Result<RegressionModel> {
    let samples: Vec<[f64; 4]> = factors
        .success_rate
        .known_cells()
        .filter_map(|(r, c, sr)| {
            Some([
                factors.right_block.get(r, c)?,
                factors.recent_height.get(r, c)?,
                factors.round_trip_time.get(r, c)?,
                sr,
            ])
        })
        .collect();
    fit_samples(&samples, factors.criteria.max_rtt_ms as f64)
}

pub fn predict_success(model: &RegressionModel, rb: f64, rh: f64, rtt: f64) -> f64 {
    model.raw(rb, rh, rtt).clamp(0.0, 1.0)
}

/// Completes the success-rate matrix: each factor matrix is completed on its
/// own by item-based CF, the regression is trained on raw known cells, and
/// every missing success rate is predicted from the completed factors.
pub fn hbrp_complete(factors: &FactorSet, k: usize) -> Result<ObservationMatrix> {
    hbrp_complete_with_model(factors, k).map(|(m, _)| m)
}

pub fn hbrp_complete_with_model(factors: &FactorSet, k: usize) -> Result<(ObservationMatrix, RegressionModel)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let sr = &factors.success_rate;
    let model = fit_linear(factors)?;
    if sr.known_count() == sr.n_rows() * sr.n_cols() {
        return Ok((sr.clone(), model));
    }
    let rb = complete_matrix(&factors.right_block, Method::Ipcc, CompletionParams::rate(k))?;
    let rh = complete_matrix(&factors.recent_height, Method::Ipcc, CompletionParams::rate(k))?;
    let rtt = complete_matrix(&factors.round_trip_time, Method::Ipcc, CompletionParams::unbounded(k))?;
    let n_cols = sr.n_cols();
    let cells: Vec<Option<f64>> = (0..sr.n_rows() * n_cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / n_cols, idx % n_cols);
            sr.get(r, c).or_else(|| {
                let f = |m: &ObservationMatrix| m.get(r, c).expect("completed matrix is dense");
                Some(predict_success(&model, f(&rb), f(&rh), f(&rtt).max(0.0)))
            })
        })
        .collect();
    let out = ObservationMatrix::from_cells(sr.rows().to_vec(), sr.cols().to_vec(), cells)?;
    Ok((out, model))
}

/// `e^{−(1 − success_rate)·t}`.
pub fn reliability(success_rate: f64, t: f64) -> Result<f64> {
    ReliabilityParams::from_success_rate(success_rate, t).map(|p| p.reliability())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPeer {
    pub peer_id: String,
    pub success_rate: f64,
    pub reliability: f64,
}

/// Peers by reliability descending, ties by peer id ascending, truncated to
/// `top_k`. Reliability is strictly increasing in success rate, so the order
/// is taken from success rate and does not depend on `t`.
pub fn rank_peers(peer_ids: &[String], success_rates: &[f64], t: f64, top_k: usize) -> Result<Vec<RankedPeer>> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    if peer_ids.len() != success_rates.len() {
        return Err(Error::LengthMismatch {
            left: peer_ids.len(),
            right: success_rates.len(),
        });
    }
    let mut order: Vec<usize> = (0..peer_ids.len()).collect();
    order.sort_by(|&a, &b| {
        success_rates[b]
            .partial_cmp(&success_rates[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| peer_ids[a].cmp(&peer_ids[b]))
    });
    order
        .into_iter()
        .take(top_k)
        .map(|i| {
            Ok(RankedPeer {
                peer_id: peer_ids[i].clone(),
                success_rate: success_rates[i],
                reliability: reliability(success_rates[i], t)?,
            })
        })
        .collect()
}

/// Ranking for requester row `r` of a completed success-rate matrix.
pub fn rank_row(completed: &ObservationMatrix, r: usize, t: f64, top_k: usize) -> Result<Vec<RankedPeer>> {
    let rates: Vec<f64> = completed
        .row(r)
        .iter()
        .map(|v| v.ok_or_else(|| Error::ShapeMismatch("ranking needs a completed matrix".into())))
        .collect::<Result<_>>()?;
    rank_peers(completed.cols(), &rates, t, top_k)
}
