//! Brute-force neighbourhood CF written directly from the formulas over
//! nested vectors. Shares no code with the library.

#![allow(dead_code)]

use rand::Rng;

pub type Grid = Vec<Vec<Option<f64>>>;

pub fn transpose(g: &Grid) -> Grid {
    if g.is_empty() {
        return Vec::new();
    }
    (0..g[0].len()).map(|c| g.iter().map(|row| row[c]).collect()).collect()
}

pub fn column(g: &Grid, c: usize) -> Vec<Option<f64>> {
    g.iter().map(|row| row[c]).collect()
}

pub fn mean_of(xs: &[Option<f64>]) -> Option<f64> {
    let known: Vec<f64> = xs.iter().flatten().copied().collect();
    if known.is_empty() {
        None
    } else {
        Some(known.iter().sum::<f64>() / known.len() as f64)
    }
}

pub fn pcc(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let constant = |f: fn(&(f64, f64)) -> f64| pairs.iter().all(|p| f(p) == f(&pairs[0]));
    if constant(|p| p.0) || constant(|p| p.1) {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Positive-similarity neighbours of column `i`, best first, ties to the lower index.
pub fn neighbours(g: &Grid, i: usize, k: usize) -> Vec<(usize, f64)> {
    let ci = column(g, i);
    let n_cols = g.first().map_or(0, Vec::len);
    let mut all: Vec<(usize, f64)> = (0..n_cols)
        .filter(|&j| j != i)
        .filter_map(|j| pcc(&ci, &column(g, j)).map(|s| (j, s)))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    // Insertion sort keeps this obviously correct rather than fast.
    for a in 1..all.len() {
        let mut b = a;
        while b > 0 && (all[b].1 > all[b - 1].1 || (all[b].1 == all[b - 1].1 && all[b].0 < all[b - 1].0)) {
            all.swap(b, b - 1);
            b -= 1;
        }
    }
    all.truncate(k);
    all
}

pub fn item_based(g: &Grid, r: usize, i: usize, k: usize) -> Option<f64> {
    let base = mean_of(&column(g, i))?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, s) in neighbours(g, i, k) {
        if let (Some(v), Some(mj)) = (g[r][j], mean_of(&column(g, j))) {
            num += s * (v - mj);
            den += s;
        }
    }
    if den > 0.0 {
        Some(base + num / den)
    } else {
        None
    }
}

pub fn user_based(g: &Grid, r: usize, i: usize, k: usize) -> Option<f64> {
    item_based(&transpose(g), i, r, k)
}

pub fn umean(g: &Grid, r: usize) -> Option<f64> {
    mean_of(&g[r])
}

pub fn imean(g: &Grid, i: usize) -> Option<f64> {
    mean_of(&column(g, i))
}

pub fn random_grid<R: Rng>(rng: &mut R, rows: usize, cols: usize, missing: f64) -> Grid {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| (rng.random::<f64>() >= missing).then(|| rng.random::<f64>()))
                .collect()
        })
        .collect()
}

pub fn rmse(pairs: &[(f64, f64)]) -> f64 {
    (pairs.iter().map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pairs.len() as f64).sqrt()
}
