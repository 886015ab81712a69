//! Density-masked comparison of the hybrid predictor against the
//! neighborhood baselines, scored by RMSE, MAE and NMAE on held-out cells.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collab_filter::{complete_matrix, CompletionParams, Method, Predictor};
use crate::error::{Error, Result};
use crate::hybrid::hbrp_complete;
use crate::matrix_gen::{count_cells, factor_set_from_counts};
use crate::model::{CanonicalChain, Criteria, FactorSet, ObservationMatrix, TestCase};
use crate::seed::{derive_seed, stream};

/// A predictor under evaluation: one of the baselines or the hybrid model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalMethod {
    #[serde(rename = "UMEAN")]
    Umean,
    #[serde(rename = "IMEAN")]
    Imean,
    #[serde(rename = "UPCC")]
    Upcc,
    #[serde(rename = "IPCC")]
    Ipcc,
    #[serde(rename = "UIPCC")]
    Uipcc,
    #[serde(rename = "HBRP")]
    #[serde(alias = "H-BRP")]
    Hbrp,
}

impl EvalMethod {
    pub const ALL: [EvalMethod; 6] = [
        EvalMethod::Umean,
        EvalMethod::Imean,
        EvalMethod::Upcc,
        EvalMethod::Ipcc,
        EvalMethod::Uipcc,
        EvalMethod::Hbrp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMethod::Hbrp => "HBRP",
            m => m.baseline().expect("baseline").name(),
        }
    }

    fn baseline(self) -> Option<Method> {
        Some(match self {
            EvalMethod::Umean => Method::Umean,
            EvalMethod::Imean => Method::Imean,
            EvalMethod::Upcc => Method::Upcc,
            EvalMethod::Ipcc => Method::Ipcc,
            EvalMethod::Uipcc => Method::Uipcc,
            EvalMethod::Hbrp => return None,
        })
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("H-BRP") && *m == EvalMethod::Hbrp))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalPlan {
    pub densities: Vec<f64>,
    pub rounds: usize,
    pub k: usize,
    pub criteria_grid: Vec<Criteria>,
    pub methods: Vec<EvalMethod>,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            densities: vec![0.30, 0.50, 0.65, 0.80, 0.95],
            rounds: 20,
            k: 3,
            criteria_grid: vec![
                Criteria { max_block_back: 0, max_rtt_ms: 1000 },
                Criteria { max_block_back: 12, max_rtt_ms: 1000 },
                Criteria { max_block_back: 12, max_rtt_ms: 2000 },
                Criteria { max_block_back: 100, max_rtt_ms: 5000 },
            ],
            methods: EvalMethod::ALL.to_vec(),
            seed: 1,
            lambda: 0.5,
        }
    }
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() || self.densities.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::InvalidConfig("densities must be non-empty and lie in (0,1]".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.criteria_grid.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("criteria_grid and methods must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig("lambda must lie in [0,1]".into()));
        }
        for c in &self.criteria_grid {
            c.validate()?;
        }
        Ok(())
    }
}

/// A known cell removed from the training matrix, with its true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Keeps `round(density × known)` known cells chosen uniformly at random and
/// returns the rest as held-out test cells, in row-major order.
pub fn mask_to_density(m: &ObservationMatrix, density: f64, seed: u64) -> Result<(ObservationMatrix, Vec<HeldOut>)> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::DomainError(format!("density must lie in (0,1], got {density}")));
    }
    let mut known: Vec<(usize, usize, f64)> = m.known_cells().collect();
    if known.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let retain = ((density * known.len() as f64).round() as usize).min(known.len());
    known.shuffle(&mut stream(seed, &[]));
    let mut held: Vec<HeldOut> = known[retain..]
        .iter()
        .map(|&(row, col, value)| HeldOut { row, col, value })
        .collect();
    held.sort_by_key(|h| (h.row, h.col));
    let mut train = m.clone();
    for h in &held {
        train.set(h.row, h.col, None);
    }
    Ok((train, held))
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// MAE divided by the mean truth; `None` when the truths average to zero.
pub fn nmae(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    let e = mae(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    Ok((mean != 0.0).then(|| e / mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundScore {
    pub rmse: f64,
    pub mae: f64,
    pub nmae: Option<f64>,
}

/// Scores of one method at one (criteria, density) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub criteria: Criteria,
    pub density: f64,
    pub method: EvalMethod,
    pub rounds: usize,
    /// Set when masking left no held-out cells; the score fields are then empty.
    pub vacuous: bool,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub mae_mean: Option<f64>,
    pub nmae_mean: Option<f64>,
    pub per_round: Vec<RoundScore>,
    /// Summed wall time of this method's rounds; recorded only on request.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plan: EvalPlan,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn find(&self, criteria: Criteria, density: f64, method: EvalMethod) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.criteria == criteria && r.density == density && r.method == method)
    }

    pub fn rmse_mean(&self, criteria: Criteria, density: f64, method: EvalMethod) -> Option<f64> {
        self.find(criteria, density, method)?.rmse_mean
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf =
            String::from("max_block_back,max_rtt_ms,density,method,rounds,rmse_mean,rmse_std,mae_mean,nmae_mean,wall_ms\n");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                buf,
                "{},{},{},{},{},{},{},{},{},{}",
                r.criteria.max_block_back,
                r.criteria.max_rtt_ms,
                r.density,
                r.method,
                r.rounds,
                opt(r.rmse_mean),
                opt(r.rmse_std),
                opt(r.mae_mean),
                opt(r.nmae_mean),
                r.wall_ms.map(|v| format!("{v:.1}")).unwrap_or_default(),
            )
            .unwrap();
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_wall_time: bool,
}

/// Stable per-round seed: independent of which other grid points exist.
pub fn round_seed(plan_seed: u64, criteria_index: usize, density: f64, round: usize) -> u64 {
    derive_seed(plan_seed, &[criteria_index as u64, density.to_bits(), round as u64])
}

/// Builds one factor set per criteria entry of the plan from a probe log.
pub fn factor_sets_for_plan(cases: &[TestCase], chain: &CanonicalChain, plan: &EvalPlan) -> Vec<FactorSet> {
    plan.criteria_grid
        .iter()
        .map(|c| factor_set_from_counts(&count_cells(cases, chain, c), *c))
        .collect()
}

/// Removes the same cells from every matrix of the set, so the hybrid model
/// trains on exactly the cells the baselines see.
fn mask_factor_set(factors: &FactorSet, held: &[HeldOut]) -> FactorSet {
    let cells: Vec<(usize, usize)> = held.iter().map(|h| (h.row, h.col)).collect();
    factors.without_cells(&cells)
}

struct RoundResult {
    criteria_index: usize,
    density_index: usize,
    scores: Vec<(EvalMethod, Option<RoundScore>, f64)>,
}

fn score(completed: &ObservationMatrix, held: &[HeldOut]) -> Result<Option<RoundScore>> {
    if held.is_empty() {
        return Ok(None);
    }
    let pred: Vec<f64> = held
        .iter()
        .map(|h| completed.get(h.row, h.col).expect("completed matrix is dense"))
        .collect();
    let truth: Vec<f64> = held.iter().map(|h| h.value).collect();
    Ok(Some(RoundScore {
        rmse: rmse(&pred, &truth)?,
        mae: mae(&pred, &truth)?,
        nmae: nmae(&pred, &truth)?,
    }))
}

fn run_round(
    factors: &FactorSet,
    plan: &EvalPlan,
    criteria_index: usize,
    density_index: usize,
    round: usize,
) -> Result<RoundResult> {
    let density = plan.densities[density_index];
    let seed = round_seed(plan.seed, criteria_index, density, round);
    let (train, held) = mask_to_density(&factors.success_rate, density, seed)?;
    debug_assert!(held.iter().all(|h| !train.is_known(h.row, h.col)));

    let params = CompletionParams {
        k: plan.k,
        lambda: plan.lambda,
        scale: crate::collab_filter::ValueScale::Rate,
    };
    // One set of similarity tables serves UPCC, IPCC and UIPCC.
    let wants_pcc = plan
        .methods
        .iter()
        .any(|m| matches!(m, EvalMethod::Upcc | EvalMethod::Ipcc | EvalMethod::Uipcc));
    let shared = wants_pcc.then(|| Predictor::new(&train, Method::Uipcc, plan.k, plan.lambda));

    let mut scores = Vec::with_capacity(plan.methods.len());
    for &method in &plan.methods {
        let started = Instant::now();
        let completed = match (method, method.baseline()) {
            (_, Some(base @ (Method::Upcc | Method::Ipcc | Method::Uipcc))) => {
                let p = shared.as_ref().expect("built when a PCC method is requested");
                complete_with(&train, |r, c| p.predict_as(base, r, c))?
            }
            (_, Some(base)) => complete_matrix(&train, base, params)?,
            (EvalMethod::Hbrp, None) => {
                let masked = mask_factor_set(factors, &held);
                debug_assert_eq!(masked.success_rate, train);
                hbrp_complete(&masked, plan.k)?
            }
            _ => unreachable!(),
        };
        let wall = started.elapsed().as_secs_f64() * 1e3;
        scores.push((method, score(&completed, &held)?, wall));
    }
    Ok(RoundResult {
        criteria_index,
        density_index,
        scores,
    })
}

/// Rate-matrix completion using an already-fitted predictor, with the same
/// fallback chain as [`complete_matrix`].
fn complete_with(m: &ObservationMatrix, predict: impl Fn(usize, usize) -> Option<f64> + Sync) -> Result<ObservationMatrix> {
    let global = m.global_mean().ok_or(Error::EmptyMatrix)?;
    let col_means: Vec<Option<f64>> = (0..m.n_cols()).map(|c| m.col_mean(c)).collect();
    let n_cols = m.n_cols();
    let cells: Vec<Option<f64>> = (0..m.n_rows() * n_cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / n_cols, idx % n_cols);
            m.get(r, c).or_else(|| {
                let v = predict(r, c).or(col_means[c]).unwrap_or(global);
                Some(v.clamp(0.0, 1.0))
            })
        })
        .collect();
    ObservationMatrix::from_cells(m.rows().to_vec(), m.cols().to_vec(), cells)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (criteria, density, round) job and aggregates per method.
/// `factor_sets[i]` must have been built with `plan.criteria_grid[i]`.
pub fn run_comparison(factor_sets: &[FactorSet], plan: &EvalPlan, opts: RunOptions) -> Result<EvalReport> {
    plan.validate()?;
    if factor_sets.len() != plan.criteria_grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} factor sets for {} criteria",
            factor_sets.len(),
            plan.criteria_grid.len()
        )));
    }
    for (fs, c) in factor_sets.iter().zip(&plan.criteria_grid) {
        if fs.criteria != *c {
            return Err(Error::ShapeMismatch("factor set criteria do not follow the plan order".into()));
        }
        fs.validate()?;
    }
    let unique: BTreeSet<EvalMethod> = plan.methods.iter().copied().collect();
    if unique.len() != plan.methods.len() {
        return Err(Error::InvalidConfig("methods must not repeat".into()));
    }

    let jobs: Vec<(usize, usize, usize)> = (0..plan.criteria_grid.len())
        .flat_map(|ci| (0..plan.densities.len()).flat_map(move |di| (0..plan.rounds).map(move |r| (ci, di, r))))
        .collect();
    let results: Vec<RoundResult> = jobs
        .par_iter()
        .map(|&(ci, di, r)| run_round(&factor_sets[ci], plan, ci, di, r))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (ci, criteria) in plan.criteria_grid.iter().enumerate() {
        for (di, &density) in plan.densities.iter().enumerate() {
            for &method in &plan.methods {
                let mut per_round = Vec::new();
                let mut wall = 0.0;
                for res in results.iter().filter(|r| r.criteria_index == ci && r.density_index == di) {
                    let (_, s, w) = res.scores.iter().find(|s| s.0 == method).expect("every round scores every method");
                    wall += w;
                    per_round.extend(s.iter().copied());
                }
                let vacuous = per_round.is_empty();
                let (rmse_mean, rmse_std, mae_mean, nmae_mean) = if vacuous {
                    (None, None, None, None)
                } else {
                    let (m, s) = mean_std(&per_round.iter().map(|s| s.rmse).collect::<Vec<_>>());
                    let mae_m = mean_std(&per_round.iter().map(|s| s.mae).collect::<Vec<_>>()).0;
                    let nmaes: Option<Vec<f64>> = per_round.iter().map(|s| s.nmae).collect();
                    (Some(m), Some(s), Some(mae_m), nmaes.map(|v| mean_std(&v).0))
                };
                rows.push(ReportRow {
                    criteria: *criteria,
                    density,
                    method,
                    rounds: plan.rounds,
                    vacuous,
                    rmse_mean,
                    rmse_std,
                    mae_mean,
                    nmae_mean,
                    per_round,
                    wall_ms: opts.record_wall_time.then_some(wall),
                });
            }
        }
    }
    Ok(EvalReport { plan: plan.clone(), rows })
}
