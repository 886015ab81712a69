mod common;

use std::sync::OnceLock;

use peerlens::collab_filter::{pcc_columns, predict_item_based, top_k_similar, Predictor, Method};
use peerlens::eval::{factor_sets_for_plan, mae, mask_to_density, nmae, rmse, run_comparison, EvalMethod, EvalPlan, RunOptions};
use peerlens::hybrid::{fit_linear, hbrp_complete, predict_success};
use peerlens::matrix_gen::build_matrices;
use peerlens::model::{Criteria, FactorSet, ObservationMatrix};
use peerlens::simulator::{generate_network, generate_network_with, run_campaign, Campaign, CampaignSpec, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full(grid: &[Vec<f64>]) -> common::Grid {
    grid.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect()
}

/// Columns built as `a·x + b·z` with `x ⟂ z` of equal norm correlate with
/// `x` at exactly `a / √(a² + b²)`.
fn correlated_columns(sims: &[f64]) -> common::Grid {
    let x = [1.0, -1.0, 1.0, -1.0];
    let z = [1.0, 1.0, -1.0, -1.0];
    (0..4)
        .map(|r| {
            let mut row = vec![Some(0.5 + 0.1 * x[r])];
            for &s in sims {
                let b = (1.0 - s * s).sqrt();
                row.push(Some(0.5 + 0.1 * (s * x[r] + b * z[r])));
            }
            row
        })
        .collect()
}

#[test]
fn constructed_similarities_are_exact() {
    let g = correlated_columns(&[0.6, 0.2, 0.9]);
    let m = ObservationMatrix::from_grid(&g).unwrap();
    for (j, want) in [(1, 0.6), (2, 0.2), (3, 0.9)] {
        assert!((pcc_columns(&m, 0, j).unwrap() - want).abs() < 1e-12);
        assert!((common::pcc(&common::column(&g, 0), &common::column(&g, j)).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn top_three_of_four_by_similarity() {
    // Candidates deliberately out of order.
    let m = ObservationMatrix::from_grid(&correlated_columns(&[0.7, 0.9, 0.6, 0.8])).unwrap();
    let picked: Vec<usize> = top_k_similar(&m, 0, 3).neighbors.iter().map(|n| n.0).collect();
    assert_eq!(picked, vec![2, 4, 1]);
}

#[test]
fn weighted_deviation_by_hand() {
    // Row 4 is the one to predict: neighbour deviations +0.2 (sim 0.6) and
    // −0.2 (sim 0.2) around a target mean of 0.5.
    let mut g = correlated_columns(&[0.6, 0.2]);
    g.push(vec![None, Some(0.75), Some(0.25)]);
    let m = ObservationMatrix::from_grid(&g).unwrap();
    let expected = 0.5 + 0.75 * 0.2 + 0.25 * -0.2;
    assert!((expected - 0.6f64).abs() < 1e-15);
    assert!((predict_item_based(&m, 4, 0, 3).unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn three_by_three_against_reference() {
    let g: common::Grid = vec![
        vec![Some(0.9), Some(0.8), None],
        vec![Some(0.4), Some(0.5), Some(0.3)],
        vec![Some(0.1), None, Some(0.7)],
    ];
    let m = ObservationMatrix::from_grid(&g).unwrap();
    let p = Predictor::new(&m, Method::Ipcc, 2, 0.5);
    for (r, c) in [(0, 2), (2, 1)] {
        assert_eq!(p.predict(r, c), common::item_based(&g, r, c, 2));
        assert_eq!(
            Predictor::new(&m, Method::Upcc, 2, 0.5).predict(r, c),
            common::user_based(&g, r, c, 2)
        );
    }
}

#[test]
fn five_by_five_means_against_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let g = common::random_grid(&mut rng, 5, 5, 0.4);
    let m = ObservationMatrix::from_grid(&g).unwrap();
    let p = |method| Predictor::new(&m, method, 3, 0.5);
    for r in 0..5 {
        for c in 0..5 {
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                (a, b) => a == b,
            };
            assert!(close(p(Method::Umean).predict(r, c), common::umean(&g, r)));
            assert!(close(p(Method::Imean).predict(r, c), common::imean(&g, c)));
        }
    }
}

#[test]
fn low_rank_ipcc_against_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let u: Vec<[f64; 2]> = (0..6).map(|_| [rng.random(), rng.random()]).collect();
    let v: Vec<[f64; 2]> = (0..6).map(|_| [rng.random(), rng.random()]).collect();
    let dense: Vec<Vec<f64>> = u
        .iter()
        .map(|a| v.iter().map(|b| 0.5 * (a[0] * b[0] + a[1] * b[1])).collect())
        .collect();
    let mut g = full(&dense);
    let mut cells: Vec<(usize, usize)> = (0..36).map(|i| (i / 6, i % 6)).collect();
    rand::seq::SliceRandom::shuffle(cells.as_mut_slice(), &mut rng);
    for &(r, c) in cells.iter().take(11) {
        g[r][c] = None;
    }
    let m = ObservationMatrix::from_grid(&g).unwrap();
    let p = Predictor::new(&m, Method::Ipcc, 3, 0.5);
    let mut checked = 0;
    for &(r, c) in cells.iter().take(11) {
        let (got, want) = (p.predict(r, c), common::item_based(&g, r, c, 3));
        match (got, want) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "({r},{c}) {a} vs {b}"),
            (a, b) => assert_eq!(a, b),
        }
        checked += usize::from(want.is_some());
    }
    assert!(checked > 0);
}

fn factor(rows: &[f64], cols: &[f64], offset: f64, skip: (usize, usize)) -> ObservationMatrix {
    let grid: common::Grid = rows
        .iter()
        .enumerate()
        .map(|(r, a)| {
            cols.iter()
                .enumerate()
                .map(|(c, b)| ((r, c) != skip).then_some(offset + a + b))
                .collect()
        })
        .collect();
    ObservationMatrix::from_grid(&grid).unwrap()
}

#[test]
fn hand_built_hybrid_case() {
    // Additive factors whose missing row sits at the mean of the row effects,
    // so every neighbour deviation is zero and CF recovers the cell exactly.
    let hole = (4, 2);
    let criteria = Criteria::new(12, 2000).unwrap();
    let rb_rows = [0.0, 0.1, 0.2, 0.3, 0.15];
    let rh_rows = [0.2, 0.0, 0.1, 0.1, 0.1];
    let rtt_rows = [0.0, 300.0, 100.0, 200.0, 150.0];
    let rb = factor(&rb_rows, &[0.1, 0.3, 0.0, 0.2, 0.25], 0.4, hole);
    let rh = factor(&rh_rows, &[0.3, 0.0, 0.2, 0.1, 0.35], 0.2, hole);
    let rtt = factor(&rtt_rows, &[100.0, 400.0, 0.0, 250.0, 700.0], 200.0, hole);
    let w = [0.05, 0.4, 0.5, -0.15];
    let sr_of = |rb: f64, rh: f64, rtt: f64| w[0] + w[1] * rb + w[2] * rh + w[3] * rtt / 2000.0;
    let cells: Vec<Option<f64>> = (0..25)
        .map(|i| {
            let (r, c) = (i / 5, i % 5);
            Some(sr_of(rb.get(r, c)?, rh.get(r, c)?, rtt.get(r, c)?))
        })
        .collect();
    let sr = ObservationMatrix::from_cells(rb.rows().to_vec(), rb.cols().to_vec(), cells).unwrap();
    let f = FactorSet::new(sr, rb, rh, rtt, criteria).unwrap();
    let done = hbrp_complete(&f, 3).unwrap();
    let truth = sr_of(0.4 + 0.15 + 0.0, 0.2 + 0.1 + 0.2, 200.0 + 150.0 + 0.0);
    let got = done.get(hole.0, hole.1).unwrap();
    assert!((got - truth).abs() < 1e-6, "{got} vs {truth}");
}

#[test]
fn planted_model_predicts_held_out_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = [0.1, 0.5, 0.3, -0.2];
    let scale = 2000.0;
    let sample = |rng: &mut ChaCha8Rng| {
        let (rb, rh, rtt): (f64, f64, f64) = (rng.random_range(0.4..1.0), rng.random(), rng.random_range(0.0..scale));
        [rb, rh, rtt, w[0] + w[1] * rb + w[2] * rh + w[3] * rtt / scale]
    };
    let train: Vec<[f64; 4]> = (0..400).map(|_| sample(&mut rng)).collect();
    let held: Vec<[f64; 4]> = (0..100).map(|_| sample(&mut rng)).collect();
    let model = peerlens::hybrid::fit_samples(&train, scale).unwrap();
    for h in &held {
        assert!((predict_success(&model, h[0], h[1], h[2]) - h[3]).abs() < 1e-6);
    }
}

#[test]
fn metrics_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let truth: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let pred: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let pairs: Vec<(f64, f64)> = pred.iter().copied().zip(truth.iter().copied()).collect();
        let abs: f64 = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / 100.0;
        let mean_truth = truth.iter().sum::<f64>() / 100.0;
        assert!((rmse(&pred, &truth).unwrap() - common::rmse(&pairs)).abs() < 1e-12);
        assert!((mae(&pred, &truth).unwrap() - abs).abs() < 1e-12);
        assert!((nmae(&pred, &truth).unwrap().unwrap() - abs / mean_truth).abs() < 1e-12);
    }
}

#[test]
fn network_regions_balanced() {
    let (_, peers) = generate_network(4, 10, 2, 7).unwrap();
    let in_zero = peers.iter().filter(|p| p.region == 0).count();
    assert_eq!((in_zero, peers.len() - in_zero), (5, 5));
}

/// Right-block rates and mean RTTs of a long campaign sit inside three
/// binomial (resp. sample-mean) standard errors of the planted expectations.
#[test]
fn campaign_matches_planted_truth() {
    let net = NetworkParams {
        num_requesters: 8,
        num_peers: 16,
        num_regions: 4,
        ..NetworkParams::default()
    };
    let spec = CampaignSpec {
        n: 8,
        duration_periods: 1500,
        seed: 3,
        ..CampaignSpec::default()
    };
    let (requesters, peers) = generate_network_with(&net, 3).unwrap();
    let c = run_campaign(&requesters, &peers, &spec).unwrap();
    let f = build_matrices(&c.cases, &c.chain, &Criteria::new(12, 2000).unwrap());
    let mut outside = Vec::new();
    for (r, p, observed) in f.right_block.known_cells() {
        let cell = c.truth.get(&f.right_block.rows()[r], &f.right_block.cols()[p]).unwrap();
        let n = c.cases.iter().filter(|t| t.requester_id == f.right_block.rows()[r] && t.peer_id == f.right_block.cols()[p]).count() as f64;
        let q = cell.expected_right_block();
        let sd = (q * (1.0 - q) / n).sqrt();
        if (observed - q).abs() > 3.0 * sd + 1.0 / n {
            outside.push(format!("rb ({r},{p}) {observed:.4} vs {q:.4} ± {sd:.4}"));
        }
        let rtt = f.round_trip_time.get(r, p).unwrap();
        let spread = cell.rtt_spread_ms.max(1.0);
        // Uniform on the spread, truncated at the timeout: variance ≤ spread²/12.
        let sd = (spread * spread / 12.0 / n).sqrt();
        if (rtt - cell.expected_rtt_ms()).abs() > 3.0 * sd + 1.0 {
            outside.push(format!("rtt ({r},{p}) {rtt:.1} vs {:.1}", cell.expected_rtt_ms()));
        }
    }
    assert!(outside.is_empty(), "{outside:?}");
}

fn default_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| {
        let (requesters, peers) = generate_network(100, 200, NetworkParams::default().num_regions, 1).unwrap();
        run_campaign(&requesters, &peers, &CampaignSpec::default()).unwrap()
    })
}

#[test]
fn default_campaign_size() {
    assert_eq!(default_campaign().cases.len(), 100 * 2000 * 5);
}

#[test]
fn hbrp_beats_imean_at_half_density() {
    let c = default_campaign();
    let f = build_matrices(&c.cases, &c.chain, &Criteria::new(12, 2000).unwrap());
    let (_, held) = mask_to_density(&f.success_rate, 0.5, 42).unwrap();
    let masked = f.without_cells(&held.iter().map(|h| (h.row, h.col)).collect::<Vec<_>>());
    let hbrp = hbrp_complete(&masked, 3).unwrap();
    let truth: Vec<f64> = held.iter().map(|h| h.value).collect();
    let h: Vec<f64> = held.iter().map(|x| hbrp.get(x.row, x.col).unwrap()).collect();
    let i: Vec<f64> = held
        .iter()
        .map(|x| masked.success_rate.col_mean(x.col).unwrap_or(0.0))
        .collect();
    let (h, i) = (rmse(&h, &truth).unwrap(), rmse(&i, &truth).unwrap());
    assert!(h < i, "H-BRP {h} vs IMEAN {i}");
}

/// Where the success criterion is a threshold the responses mostly clear
/// (MaxRTT at or above the request timeout), H-BRP stays below the user-side
/// baselines at every density.
#[test]
fn hbrp_below_user_side_baselines() {
    let c = default_campaign();
    let plan = EvalPlan {
        rounds: 3,
        criteria_grid: vec![Criteria::new(12, 2000).unwrap(), Criteria::new(100, 5000).unwrap()],
        methods: vec![EvalMethod::Umean, EvalMethod::Upcc, EvalMethod::Hbrp],
        ..EvalPlan::default()
    };
    let report = run_comparison(&factor_sets_for_plan(&c.cases, &c.chain, &plan), &plan, RunOptions::default()).unwrap();
    for criteria in &plan.criteria_grid {
        for &d in &plan.densities {
            let v = |m| report.rmse_mean(*criteria, d, m).unwrap();
            assert!(v(EvalMethod::Hbrp) < v(EvalMethod::Umean), "{criteria:?} {d}");
            assert!(v(EvalMethod::Hbrp) < v(EvalMethod::Upcc), "{criteria:?} {d}");
        }
    }
}

#[test]
fn fit_on_simulated_factors_is_tight() {
    // With MaxRTT equal to the timeout nearly every answered fresh block
    // succeeds, so the linear map explains the known cells almost exactly.
    let c = default_campaign();
    let f = build_matrices(&c.cases, &c.chain, &Criteria::new(12, 2000).unwrap());
    let model = fit_linear(&f).unwrap();
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (r, p, sr) in f.success_rate.known_cells() {
        let g = |m: &ObservationMatrix| m.get(r, p).unwrap();
        pred.push(predict_success(&model, g(&f.right_block), g(&f.recent_height), g(&f.round_trip_time)));
        truth.push(sr);
    }
    let e = rmse(&pred, &truth).unwrap();
    assert!(e < 0.01, "{e} {model:?}");
}
