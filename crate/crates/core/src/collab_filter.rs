//! Neighborhood collaborative filtering over an [`ObservationMatrix`]:
//! Pearson similarity, Top-K neighbor selection, and the UMEAN, IMEAN, UPCC,
//! IPCC and UIPCC predictors used as matrix-completion methods.
//!
//! Item-based means peer-based here: columns are peers, rows are requesters.
//! User-based prediction is item-based prediction on the transposed matrix.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationMatrix;

/// Fewer co-rated rows than this leaves the similarity undefined.
pub const MIN_CO_RATED: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Umean,
    Imean,
    Upcc,
    Ipcc,
    Uipcc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Umean, Method::Imean, Method::Upcc, Method::Ipcc, Method::Uipcc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Umean => "UMEAN",
            Method::Imean => "IMEAN",
            Method::Upcc => "UPCC",
            Method::Ipcc => "IPCC",
            Method::Uipcc => "UIPCC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Whether completed values are probabilities (clamped to `[0,1]`) or free
/// quantities such as milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueScale {
    Rate,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionParams {
    pub k: usize,
    /// UIPCC weight on the user-based prediction.
    pub lambda: f64,
    pub scale: ValueScale,
}

impl CompletionParams {
    pub fn rate(k: usize) -> Self {
        Self {
            k,
            lambda: 0.5,
            scale: ValueScale::Rate,
        }
    }

    pub fn unbounded(k: usize) -> Self {
        Self {
            scale: ValueScale::Unbounded,
            ..Self::rate(k)
        }
    }
}

/// Column-major copy of a matrix; keeps the PCC inner loop on contiguous memory.
struct Columns {
    n_rows: usize,
    values: Vec<f64>,
    known: Vec<bool>,
}

impl Columns {
    fn new(m: &ObservationMatrix) -> Self {
        let (nr, nc) = (m.n_rows(), m.n_cols());
        let mut values = vec![0.0; nr * nc];
        let mut known = vec![false; nr * nc];
        for (r, c, v) in m.known_cells() {
            values[c * nr + r] = v;
            known[c * nr + r] = true;
        }
        Self {
            n_rows: nr,
            values,
            known,
        }
    }

    fn col(&self, c: usize) -> (&[f64], &[bool]) {
        let s = c * self.n_rows..(c + 1) * self.n_rows;
        (&self.values[s.clone()], &self.known[s])
    }

    fn pcc(&self, i: usize, j: usize) -> Option<f64> {
        let (xi, ki) = self.col(i);
        let (xj, kj) = self.col(j);
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..self.n_rows {
            if ki[r] && kj[r] {
                n += 1;
                sx += xi[r];
                sy += xj[r];
                xmin = xmin.min(xi[r]);
                xmax = xmax.max(xi[r]);
                ymin = ymin.min(xj[r]);
                ymax = ymax.max(xj[r]);
            }
        }
        if n < MIN_CO_RATED || xmin == xmax || ymin == ymax {
            return None;
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for r in 0..self.n_rows {
            if ki[r] && kj[r] {
                let (dx, dy) = (xi[r] - mx, xj[r] - my);
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
        }
        if sxx <= 0.0 || syy <= 0.0 {
            return None;
        }
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation of columns `i` and `j` over the rows where both are
/// known, centred on the co-rated means. Undefined below two co-rated rows or
/// when either side is constant on them.
pub fn pcc_columns(m: &ObservationMatrix, i: usize, j: usize) -> Option<f64> {
    Columns::new(m).pcc(i, j)
}

/// Up to `k` most similar columns to `target`, positive similarity only.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub target: usize,
    /// `(column, similarity)`, descending by similarity, ties by lower index.
    pub neighbors: Vec<(usize, f64)>,
}

impl NeighborSet {
    fn select(target: usize, candidates: impl Iterator<Item = (usize, Option<f64>)>, k: usize) -> Self {
        let mut neighbors: Vec<(usize, f64)> = candidates
            .filter(|&(j, _)| j != target)
            .filter_map(|(j, s)| s.filter(|s| *s > 0.0).map(|s| (j, s)))
            .collect();
        neighbors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        neighbors.truncate(k);
        Self { target, neighbors }
    }
}

pub fn top_k_similar(m: &ObservationMatrix, i: usize, k: usize) -> NeighborSet {
    let cols = Columns::new(m);
    NeighborSet::select(i, (0..m.n_cols()).map(|j| (j, if j == i { None } else { cols.pcc(i, j) })), k)
}

/// Column means and Top-K neighbor sets of one matrix, computed once and
/// shared read-only by every prediction on it.
pub struct ItemNeighborhood {
    means: Vec<Option<f64>>,
    neighbors: Vec<NeighborSet>,
}

impl ItemNeighborhood {
    pub fn fit(m: &ObservationMatrix, k: usize) -> Self {
        let n = m.n_cols();
        let cols = Columns::new(m);
        // Upper triangle only; PCC is symmetric.
        let upper: Vec<Vec<Option<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| cols.pcc(i, j)).collect())
            .collect();
        let sim = |i: usize, j: usize| -> Option<f64> {
            match i.cmp(&j) {
                Ordering::Less => upper[i][j - i - 1],
                Ordering::Greater => upper[j][i - j - 1],
                Ordering::Equal => None,
            }
        };
        let neighbors = (0..n)
            .map(|i| NeighborSet::select(i, (0..n).map(|j| (j, sim(i, j))), k))
            .collect();
        let means = (0..n).map(|c| m.col_mean(c)).collect();
        Self { means, neighbors }
    }

    pub fn neighbors(&self, i: usize) -> &NeighborSet {
        &self.neighbors[i]
    }

    pub fn mean(&self, i: usize) -> Option<f64> {
        self.means[i]
    }

    /// Target mean plus the similarity-weighted deviations of the neighbors
    /// that have row `r` known; weights renormalized over those neighbors.
    pub fn predict(&self, m: &ObservationMatrix, r: usize, i: usize) -> Option<f64> {
        let base = self.means[i]?;
        let (mut acc, mut wsum) = (0.0, 0.0);
        for &(j, s) in &self.neighbors[i].neighbors {
            if let (Some(v), Some(mean_j)) = (m.get(r, j), self.means[j]) {
                acc += s * (v - mean_j);
                wsum += s;
            }
        }
        (wsum > 0.0).then(|| base + acc / wsum)
    }
}

/// One-shot item-based (IPCC) prediction of cell `(r, i)`.
pub fn predict_item_based(m: &ObservationMatrix, r: usize, i: usize, k: usize) -> Option<f64> {
    let cols = Columns::new(m);
    let set = NeighborSet::select(i, (0..m.n_cols()).map(|j| (j, if j == i { None } else { cols.pcc(i, j) })), k);
    let base = m.col_mean(i)?;
    let (mut acc, mut wsum) = (0.0, 0.0);
    for (j, s) in set.neighbors {
        if let (Some(v), Some(mean_j)) = (m.get(r, j), m.col_mean(j)) {
            acc += s * (v - mean_j);
            wsum += s;
        }
    }
    (wsum > 0.0).then(|| base + acc / wsum)
}

/// One-shot user-based (UPCC) prediction of cell `(r, i)`.
pub fn predict_user_based(m: &ObservationMatrix, r: usize, i: usize, k: usize) -> Option<f64> {
    predict_item_based(&m.transpose(), i, r, k)
}

pub fn predict_umean(m: &ObservationMatrix, r: usize) -> Option<f64> {
    m.row_mean(r)
}

pub fn predict_imean(m: &ObservationMatrix, i: usize) -> Option<f64> {
    m.col_mean(i)
}

/// `lambda·upcc + (1−lambda)·ipcc`, or whichever side is defined.
pub fn blend(upcc: Option<f64>, ipcc: Option<f64>, lambda: f64) -> Option<f64> {
    match (upcc, ipcc) {
        (Some(u), Some(i)) => Some(lambda * u + (1.0 - lambda) * i),
        (u, i) => u.or(i),
    }
}

pub fn predict_uipcc(m: &ObservationMatrix, r: usize, i: usize, k: usize, lambda: f64) -> Option<f64> {
    blend(predict_user_based(m, r, i, k), predict_item_based(m, r, i, k), lambda)
}

/// A method bound to one matrix, with its similarity tables precomputed.
pub struct Predictor<'a> {
    m: &'a ObservationMatrix,
    transposed: Option<ObservationMatrix>,
    method: Method,
    lambda: f64,
    items: Option<ItemNeighborhood>,
    users: Option<ItemNeighborhood>,
}

impl<'a> Predictor<'a> {
    pub fn new(m: &'a ObservationMatrix, method: Method, k: usize, lambda: f64) -> Self {
        let needs_items = matches!(method, Method::Ipcc | Method::Uipcc);
        let needs_users = matches!(method, Method::Upcc | Method::Uipcc);
        let transposed = needs_users.then(|| m.transpose());
        let users = transposed.as_ref().map(|t| ItemNeighborhood::fit(t, k));
        Self {
            m,
            method,
            lambda,
            items: needs_items.then(|| ItemNeighborhood::fit(m, k)),
            users,
            transposed,
        }
    }

    fn user_based(&self, r: usize, i: usize) -> Option<f64> {
        let t = self.transposed.as_ref()?;
        self.users.as_ref()?.predict(t, i, r)
    }

    fn item_based(&self, r: usize, i: usize) -> Option<f64> {
        self.items.as_ref()?.predict(self.m, r, i)
    }

    /// The method's own prediction, without any fallback.
    pub fn predict(&self, r: usize, i: usize) -> Option<f64> {
        self.predict_as(self.method, r, i)
    }

    /// Prediction by another method that the fitted tables also support; a
    /// UIPCC predictor can answer for UPCC and IPCC too.
    pub fn predict_as(&self, method: Method, r: usize, i: usize) -> Option<f64> {
        match method {
            Method::Umean => predict_umean(self.m, r),
            Method::Imean => predict_imean(self.m, i),
            Method::Upcc => self.user_based(r, i),
            Method::Ipcc => self.item_based(r, i),
            Method::Uipcc => blend(self.user_based(r, i), self.item_based(r, i), self.lambda),
        }
    }
}

/// Fills every missing cell with `method`, falling back to the column mean,
/// then the global mean. Known cells are copied unchanged. Rate predictions
/// are clamped to `[0,1]`.
pub fn complete_matrix(m: &ObservationMatrix, method: Method, params: CompletionParams) -> Result<ObservationMatrix> {
    let global = m.global_mean().ok_or(Error::EmptyMatrix)?;
    let predictor = Predictor::new(m, method, params.k, params.lambda);
    let col_means: Vec<Option<f64>> = (0..m.n_cols()).map(|c| m.col_mean(c)).collect();
    let n_cols = m.n_cols();
    let cells: Vec<Option<f64>> = (0..m.n_rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let predictor = &predictor;
            let col_means = &col_means;
            (0..n_cols).map(move |c| {
                if let Some(v) = m.get(r, c) {
                    return Some(v);
                }
                let v = predictor.predict(r, c).or(col_means[c]).unwrap_or(global);
                Some(match params.scale {
                    ValueScale::Rate => v.clamp(0.0, 1.0),
                    ValueScale::Unbounded => v,
                })
            })
        })
        .collect();
    ObservationMatrix::from_cells(m.rows().to_vec(), m.cols().to_vec(), cells)
}
