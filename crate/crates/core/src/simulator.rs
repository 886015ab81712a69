//! Seeded probe-campaign generator.
//!
//! A synthetic network of requesters and peers spread over regions runs the
//! random batch block-request procedure: every period each requester probes
//! `n` distinct peers chosen uniformly at random and records what came back.
//! Peers differ in how far behind the chain tip they run, how often they drop
//! requests, and how slowly they serve. RTT depends on the requester/peer
//! region pair plus a path delay each requester has towards every region, and
//! probes slower than the request timeout come back empty. Alongside the probe
//! log the campaign returns the canonical chain and, for every pair, the
//! distributions that generated its probes.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CanonicalChain, Criteria, TestCase};
use crate::seed::stream;

const TAG_NETWORK: u64 = 0x6e65_7477;
const TAG_PROBE: u64 = 0x7072_6f62;
const TAG_HASH: u64 = 0x6861_7368;

/// Categorical distribution over block lags, stored sparsely in ascending lag order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LagDistribution {
    pmf: Vec<(u64, f64)>,
}

impl LagDistribution {
    pub fn new(mut pmf: Vec<(u64, f64)>) -> Result<Self> {
        pmf.retain(|&(_, p)| p > 0.0);
        pmf.sort_by_key(|&(lag, _)| lag);
        if pmf.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig("lag distribution repeats a lag".into()));
        }
        if pmf.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidConfig("lag probability outside [0,1]".into()));
        }
        let total: f64 = pmf.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("lag distribution sums to {total}")));
        }
        Ok(Self { pmf })
    }

    pub fn point(lag: u64) -> Self {
        Self { pmf: vec![(lag, 1.0)] }
    }

    /// Lag 0 with probability `fresh`; otherwise `1 + Geometric` with the given
    /// mean excess, truncated at `max_lag` (the tail is folded into `max_lag`).
    pub fn fresh_or_geometric(fresh: f64, mean_excess: f64, max_lag: u64) -> Self {
        let mut pmf = vec![(0, fresh)];
        if max_lag == 0 {
            pmf[0].1 = 1.0;
            return Self { pmf };
        }
        let q = 1.0 / (1.0 + mean_excess.max(0.0));
        let mut remaining = 1.0 - fresh;
        let mut mass = (1.0 - fresh) * q;
        for lag in 1..max_lag {
            pmf.push((lag, mass));
            remaining -= mass;
            mass *= 1.0 - q;
            if mass < 1e-12 {
                break;
            }
        }
        let last = pmf.last().map_or(0, |e| e.0) + 1;
        pmf.push((last.min(max_lag), remaining.max(0.0)));
        pmf.retain(|&(_, p)| p > 0.0);
        Self { pmf }
    }

    pub fn pmf(&self) -> &[(u64, f64)] {
        &self.pmf
    }

    pub fn max_lag(&self) -> u64 {
        self.pmf.last().map_or(0, |e| e.0)
    }

    /// `P(lag ≤ x)`.
    pub fn cdf(&self, x: u64) -> f64 {
        self.pmf.iter().take_while(|e| e.0 <= x).map(|e| e.1).sum::<f64>().min(1.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|&(l, p)| l as f64 * p).sum()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(lag, p) in &self.pmf {
            acc += p;
            if u < acc {
                return lag;
            }
        }
        self.max_lag()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerProfile {
    pub peer_id: String,
    pub region: usize,
    pub lag_distribution: LagDistribution,
    /// Chance that a probe gets no block back.
    pub loss_probability: f64,
    pub service_delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequesterProfile {
    pub requester_id: String,
    pub region: usize,
    /// Extra one-way path latency from this requester to each peer region,
    /// indexed by region; missing entries count as zero.
    #[serde(default)]
    pub path_delay_ms: Vec<f64>,
}

impl RequesterProfile {
    pub fn path_delay_to(&self, region: usize) -> f64 {
        self.path_delay_ms.get(region).copied().unwrap_or(0.0)
    }
}

/// Parameter family the network generator draws peers from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    pub num_requesters: usize,
    pub num_peers: usize,
    pub num_regions: usize,
    /// Per-peer chance of serving the tip, drawn uniformly from this range.
    pub fresh_probability: (f64, f64),
    /// Mean extra lag of a stale response, drawn log-uniformly from this range.
    pub mean_stale_lag: (f64, f64),
    pub max_lag: u64,
    pub loss_probability: (f64, f64),
    pub service_delay_ms: (f64, f64),
    /// Per-requester, per-region path latency, drawn uniformly from this range.
    pub path_delay_ms: (f64, f64),
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            num_requesters: 100,
            num_peers: 200,
            num_regions: 20,
            fresh_probability: (0.2, 0.95),
            mean_stale_lag: (1.0, 60.0),
            max_lag: 200,
            loss_probability: (0.0, 0.3),
            service_delay_ms: (0.0, 300.0),
            path_delay_ms: (0.0, 2000.0),
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_requesters == 0 || self.num_peers == 0 || self.num_regions == 0 {
            return Err(Error::InvalidConfig("network counts must be at least 1".into()));
        }
        let unit = |(a, b): (f64, f64), what: &str| -> Result<()> {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                return Err(Error::InvalidConfig(format!("{what} range must lie in [0,1] and be ordered")));
            }
            Ok(())
        };
        unit(self.fresh_probability, "fresh_probability")?;
        unit(self.loss_probability, "loss_probability")?;
        let (lo, hi) = self.mean_stale_lag;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig("mean_stale_lag range must be positive and ordered".into()));
        }
        for (name, (lo, hi)) in [("service_delay_ms", self.service_delay_ms), ("path_delay_ms", self.path_delay_ms)] {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range must be non-negative and ordered")));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn requester_id(i: usize) -> String {
    format!("10.{}.{}.{}", i / 65536 % 256, i / 256 % 256, i % 256)
}

pub fn peer_id(i: usize) -> String {
    format!("172.{}.{}.{}", 16 + i / 65536 % 16, i / 256 % 256, i % 256)
}

/// Regions `0..k` assigned round-robin over `n` slots, then shuffled.
fn regions(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|i| i % k).collect();
    v.shuffle(rng);
    v
}

pub fn generate_network(
    num_requesters: usize,
    num_peers: usize,
    num_regions: usize,
    seed: u64,
) -> Result<(Vec<RequesterProfile>, Vec<PeerProfile>)> {
    generate_network_with(
        &NetworkParams {
            num_requesters,
            num_peers,
            num_regions,
            ..NetworkParams::default()
        },
        seed,
    )
}

pub fn generate_network_with(params: &NetworkParams, seed: u64) -> Result<(Vec<RequesterProfile>, Vec<PeerProfile>)> {
    params.validate()?;
    let mut rng = stream(seed, &[TAG_NETWORK]);
    let req_regions = regions(params.num_requesters, params.num_regions, &mut rng);
    let peer_regions = regions(params.num_peers, params.num_regions, &mut rng);
    let requesters = req_regions
        .into_iter()
        .enumerate()
        .map(|(i, region)| RequesterProfile {
            requester_id: requester_id(i),
            region,
            path_delay_ms: (0..params.num_regions).map(|_| uniform(&mut rng, params.path_delay_ms)).collect(),
        })
        .collect();
    let (lag_lo, lag_hi) = params.mean_stale_lag;
    let peers = peer_regions
        .into_iter()
        .enumerate()
        .map(|(i, region)| {
            let fresh = uniform(&mut rng, params.fresh_probability);
            let mean_lag = (uniform(&mut rng, (lag_lo.ln(), lag_hi.ln()))).exp();
            PeerProfile {
                peer_id: peer_id(i),
                region,
                lag_distribution: LagDistribution::fresh_or_geometric(fresh, mean_lag - 1.0, params.max_lag),
                loss_probability: uniform(&mut rng, params.loss_probability),
                service_delay_ms: uniform(&mut rng, params.service_delay_ms),
            }
        })
        .collect();
    Ok((requesters, peers))
}

/// Mean RTT between regions placed evenly on a ring: `intra` within a region,
/// rising linearly to `intra + spread` for antipodal regions.
pub fn ring_rtt_table(num_regions: usize, intra_ms: f64, spread_ms: f64) -> Vec<Vec<f64>> {
    let half = (num_regions / 2).max(1) as f64;
    (0..num_regions)
        .map(|a| {
            (0..num_regions)
                .map(|b| {
                    let d = a.abs_diff(b);
                    let d = d.min(num_regions - d) as f64;
                    intra_ms + spread_ms * d / half
                })
                .collect()
        })
        .collect()
}

pub const DEFAULT_INTRA_RTT_MS: f64 = 80.0;
pub const DEFAULT_RTT_SPREAD_MS: f64 = 1700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSpec {
    /// Peers probed per batch.
    pub n: usize,
    pub t_period_ms: u64,
    pub duration_periods: u64,
    /// Region × region mean RTT; defaults to [`ring_rtt_table`] over the
    /// regions present in the profiles.
    pub base_rtt_ms: Option<Vec<Vec<f64>>>,
    /// Width of the uniform jitter added to every RTT.
    pub rtt_jitter_ms: f64,
    /// Requester gives up after this long and records a null response.
    pub request_timeout_ms: Option<u64>,
    pub corruption_probability: f64,
    pub blocks_per_period: u64,
    pub genesis_height: u64,
    pub start_time_ms: u64,
    pub seed: u64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            n: 5,
            t_period_ms: 5000,
            duration_periods: 2000,
            base_rtt_ms: None,
            rtt_jitter_ms: 1000.0,
            request_timeout_ms: Some(2000),
            corruption_probability: 0.001,
            blocks_per_period: 1,
            genesis_height: 6_000_000,
            start_time_ms: 1_532_328_744_000,
            seed: 1,
        }
    }
}

/// What generated the probes of one requester/peer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub loss_probability: f64,
    pub corruption_probability: f64,
    pub lag_distribution: LagDistribution,
    /// RTT is uniform on `[rtt_min_ms, rtt_min_ms + rtt_spread_ms)`, floored to whole ms.
    pub rtt_min_ms: f64,
    pub rtt_spread_ms: f64,
    pub request_timeout_ms: Option<u64>,
}

impl CellTruth {
    /// `P(recorded RTT ≤ limit_ms)` for a response that was not cut off.
    pub fn rtt_cdf(&self, limit_ms: u64) -> f64 {
        // floor(x) ≤ L  ⇔  x < L + 1
        let x = limit_ms as f64 + 1.0;
        if self.rtt_spread_ms <= 0.0 {
            return if self.rtt_min_ms < x { 1.0 } else { 0.0 };
        }
        ((x - self.rtt_min_ms) / self.rtt_spread_ms).clamp(0.0, 1.0)
    }

    /// Probability the requester receives a block before timing out.
    pub fn answered_probability(&self) -> f64 {
        let in_time = self.request_timeout_ms.map_or(1.0, |t| self.rtt_cdf(t));
        (1.0 - self.loss_probability) * in_time
    }

    pub fn expected_right_block(&self) -> f64 {
        self.answered_probability() * (1.0 - self.corruption_probability)
    }

    /// Expected recent-height rate assuming the batch maximum is the chain tip.
    pub fn expected_recent_height(&self, criteria: &Criteria) -> f64 {
        self.answered_probability() * self.lag_distribution.cdf(criteria.max_block_back)
    }

    /// Expected recorded RTT, counting cut-off requests at the timeout.
    pub fn expected_rtt_ms(&self) -> f64 {
        let (a, w) = (self.rtt_min_ms, self.rtt_spread_ms);
        let timeout = self.request_timeout_ms.map_or(f64::INFINITY, |t| t as f64);
        // E[min(floor(U), T)] with U ~ Uniform[a, a + w); integrate piecewise.
        if w <= 0.0 {
            return a.floor().min(timeout);
        }
        let lo = a.floor() as u64;
        let hi = (a + w).ceil() as u64;
        let mut e = 0.0;
        for v in lo..hi {
            let (l, r) = ((v as f64).max(a), ((v + 1) as f64).min(a + w));
            if r > l {
                e += (r - l) / w * (v as f64).min(timeout);
            }
        }
        e
    }
}

/// Per-pair generating distributions, keyed `"requester|peer"`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlantedTruth {
    pub cells: BTreeMap<String, CellTruth>,
}

impl PlantedTruth {
    pub fn key(requester: &str, peer: &str) -> String {
        format!("{requester}|{peer}")
    }

    pub fn get(&self, requester: &str, peer: &str) -> Option<&CellTruth> {
        self.cells.get(&Self::key(requester, peer))
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub cases: Vec<TestCase>,
    pub chain: CanonicalChain,
    pub truth: PlantedTruth,
}

fn block_hash(seed: u64, height: u64) -> String {
    let mut rng = stream(seed, &[TAG_HASH, height]);
    let words: [u64; 4] = rng.random();
    format!("0x{:016x}{:016x}{:016x}{:016x}", words[0], words[1], words[2], words[3])
}

fn corrupt(hash: &str, rng: &mut ChaCha8Rng) -> String {
    let mut bytes = hash.as_bytes().to_vec();
    let pos = rng.random_range(2..bytes.len());
    let digits = b"0123456789abcdef";
    let old = bytes[pos];
    let mut new = digits[rng.random_range(0..16)];
    if new == old {
        new = digits[(digits.iter().position(|&d| d == old).unwrap_or(0) + 1) % 16];
    }
    bytes[pos] = new;
    String::from_utf8(bytes).expect("hex digits are ascii")
}

impl CampaignSpec {
    pub fn validate(&self, num_peers: usize) -> Result<()> {
        if self.n == 0 {
            return Err(Error::SpecMismatch("batch size n must be at least 1".into()));
        }
        if self.n > num_peers {
            return Err(Error::SpecMismatch(format!(
                "batch size {} exceeds the {num_peers} available peers",
                self.n
            )));
        }
        if self.t_period_ms == 0 {
            return Err(Error::SpecMismatch("t_period_ms must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.corruption_probability) {
            return Err(Error::SpecMismatch("corruption_probability must lie in [0,1]".into()));
        }
        if !(self.rtt_jitter_ms >= 0.0 && self.rtt_jitter_ms.is_finite()) {
            return Err(Error::SpecMismatch("rtt_jitter_ms must be non-negative".into()));
        }
        Ok(())
    }

    fn rtt_table(&self, num_regions: usize) -> Result<Vec<Vec<f64>>> {
        let table = match &self.base_rtt_ms {
            Some(t) => t.clone(),
            None => ring_rtt_table(num_regions, DEFAULT_INTRA_RTT_MS, DEFAULT_RTT_SPREAD_MS),
        };
        if table.len() < num_regions || table.iter().any(|row| row.len() < num_regions) {
            return Err(Error::SpecMismatch(format!("base_rtt_ms must cover {num_regions} regions")));
        }
        if table.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::SpecMismatch("base_rtt_ms entries must be non-negative".into()));
        }
        Ok(table)
    }
}

pub fn run_campaign(requesters: &[RequesterProfile], peers: &[PeerProfile], spec: &CampaignSpec) -> Result<Campaign> {
    if requesters.is_empty() || peers.is_empty() {
        return Err(Error::SpecMismatch("profiles must be non-empty".into()));
    }
    spec.validate(peers.len())?;
    let num_regions = requesters.iter().map(|r| r.region).chain(peers.iter().map(|p| p.region)).max().unwrap_or(0) + 1;
    let table = spec.rtt_table(num_regions)?;

    let max_lag = peers.iter().map(|p| p.lag_distribution.max_lag()).max().unwrap_or(0);
    let first_tip = spec.genesis_height + max_lag;
    let last_tip = first_tip + spec.duration_periods.saturating_sub(1) * spec.blocks_per_period;
    let chain = CanonicalChain::from_entries(
        (spec.genesis_height..=last_tip)
            .map(|h| (h, block_hash(spec.seed, h)))
            .collect(),
    )?;

    let cell = |r: &RequesterProfile, p: &PeerProfile| CellTruth {
        loss_probability: p.loss_probability,
        corruption_probability: spec.corruption_probability,
        lag_distribution: p.lag_distribution.clone(),
        rtt_min_ms: table[r.region][p.region] + r.path_delay_to(p.region) + p.service_delay_ms,
        rtt_spread_ms: spec.rtt_jitter_ms,
        request_timeout_ms: spec.request_timeout_ms,
    };

    let per_requester: Vec<Vec<TestCase>> = requesters
        .par_iter()
        .enumerate()
        .map(|(ri, req)| {
            let cells: Vec<CellTruth> = peers.iter().map(|p| cell(req, p)).collect();
            let mut out = Vec::with_capacity(spec.duration_periods as usize * spec.n);
            for period in 0..spec.duration_periods {
                let mut rng = stream(spec.seed, &[TAG_PROBE, ri as u64, period]);
                let tip = first_tip + period * spec.blocks_per_period;
                let batch_time = spec.start_time_ms + period * spec.t_period_ms;
                for pi in index::sample(&mut rng, peers.len(), spec.n) {
                    out.push(probe(&mut rng, req, &peers[pi], &cells[pi], tip, batch_time, &chain));
                }
            }
            out
        })
        .collect();

    let mut truth = PlantedTruth::default();
    for r in requesters {
        for p in peers {
            truth.cells.insert(PlantedTruth::key(&r.requester_id, &p.peer_id), cell(r, p));
        }
    }
    Ok(Campaign {
        cases: per_requester.into_iter().flatten().collect(),
        chain,
        truth,
    })
}

fn probe(
    rng: &mut ChaCha8Rng,
    req: &RequesterProfile,
    peer: &PeerProfile,
    cell: &CellTruth,
    tip: u64,
    batch_time: u64,
    chain: &CanonicalChain,
) -> TestCase {
    // Draw every variate unconditionally so the stream layout is fixed.
    let lost = rng.random::<f64>() < cell.loss_probability;
    let lag = peer.lag_distribution.sample(rng);
    let jitter = rng.random::<f64>() * cell.rtt_spread_ms;
    let corrupted = rng.random::<f64>() < cell.corruption_probability;

    let rtt = (cell.rtt_min_ms + jitter).floor() as u64;
    let timed_out = cell.request_timeout_ms.is_some_and(|t| rtt > t);
    let recorded = match cell.request_timeout_ms {
        Some(t) if timed_out => t,
        _ => rtt,
    };
    let (height, block_hash) = if lost || timed_out {
        (None, None)
    } else {
        let h = tip.saturating_sub(lag).max(chain.min_height());
        let canonical = chain.hash_at(h).expect("height within chain");
        let hash = if corrupted { corrupt(canonical, rng) } else { canonical.to_string() };
        (Some(h), Some(hash))
    };
    TestCase {
        requester_id: req.requester_id.clone(),
        batch_time,
        peer_id: peer.peer_id.clone(),
        start_time: batch_time,
        end_time: batch_time + recorded,
        height,
        block_hash,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(periods: u64) -> CampaignSpec {
        CampaignSpec {
            duration_periods: periods,
            ..CampaignSpec::default()
        }
    }

    #[test]
    fn network_is_deterministic() {
        assert_eq!(generate_network(100, 200, 5, 42).unwrap(), generate_network(100, 200, 5, 42).unwrap());
        assert_ne!(generate_network(10, 20, 5, 42).unwrap().1, generate_network(10, 20, 5, 43).unwrap().1);
    }

    #[test]
    fn minimal_network() {
        let (r, p) = generate_network(1, 1, 1, 9).unwrap();
        assert_eq!((r.len(), p.len()), (1, 1));
        assert!(generate_network(0, 1, 1, 9).is_err());
    }

    #[test]
    fn peer_regions_are_balanced() {
        let (_, peers) = generate_network(4, 10, 2, 7).unwrap();
        let zeros = peers.iter().filter(|p| p.region == 0).count();
        assert_eq!((zeros, peers.len() - zeros), (5, 5));
    }

    #[test]
    fn lag_distributions_are_normalized() {
        let (_, peers) = generate_network(1, 50, 3, 3).unwrap();
        for p in &peers {
            let total: f64 = p.lag_distribution.pmf().iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-9, "{total}");
            LagDistribution::new(p.lag_distribution.pmf().to_vec()).unwrap();
        }
        assert!(LagDistribution::new(vec![(0, 0.5), (1, 0.4)]).is_err());
    }

    #[test]
    fn batch_size_must_fit() {
        let (r, p) = generate_network(2, 3, 1, 1).unwrap();
        let spec = CampaignSpec { n: 4, ..small_spec(2) };
        assert!(matches!(run_campaign(&r, &p, &spec), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn total_loss_yields_only_nulls() {
        let (r, mut p) = generate_network(3, 8, 2, 1).unwrap();
        for peer in &mut p {
            peer.loss_probability = 1.0;
        }
        let c = run_campaign(&r, &p, &small_spec(20)).unwrap();
        assert_eq!(c.cases.len(), 3 * 20 * 5);
        assert!(c.cases.iter().all(|t| t.height.is_none() && t.block_hash.is_none()));
    }

    #[test]
    fn noise_free_campaign_returns_the_tip() {
        let (mut r, mut p) = generate_network(3, 8, 2, 1).unwrap();
        for req in &mut r {
            req.path_delay_ms.clear();
        }
        for peer in &mut p {
            peer.loss_probability = 0.0;
            peer.lag_distribution = LagDistribution::point(0);
            peer.service_delay_ms = 0.0;
        }
        let spec = CampaignSpec {
            corruption_probability: 0.0,
            base_rtt_ms: Some(vec![vec![5.0; 2]; 2]),
            rtt_jitter_ms: 1.0,
            ..small_spec(10)
        };
        let c = run_campaign(&r, &p, &spec).unwrap();
        for case in &c.cases {
            let period = (case.batch_time - spec.start_time_ms) / spec.t_period_ms;
            let h = case.height.unwrap();
            assert_eq!(h, c.chain.max_height() - (spec.duration_periods - 1 - period));
            assert!(c.chain.matches(h, case.block_hash.as_deref().unwrap()));
            assert!(case.rtt_ms() <= 6);
        }
    }

    #[test]
    fn batches_pick_distinct_peers() {
        let (r, p) = generate_network(2, 6, 2, 5).unwrap();
        let c = run_campaign(&r, &p, &small_spec(30)).unwrap();
        for chunk in c.cases.chunks(5) {
            let mut ids: Vec<_> = chunk.iter().map(|t| t.peer_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
            assert!(chunk.iter().all(|t| t.batch_time == chunk[0].batch_time));
        }
    }

    #[test]
    fn corruption_changes_the_hash() {
        let mut rng = stream(1, &[]);
        let h = block_hash(1, 10);
        for _ in 0..100 {
            let c = corrupt(&h, &mut rng);
            assert_ne!(c, h);
            assert_eq!(c.len(), h.len());
        }
    }

    #[test]
    fn expected_rtt_matches_numeric_integration() {
        let cell = CellTruth {
            loss_probability: 0.0,
            corruption_probability: 0.0,
            lag_distribution: LagDistribution::point(0),
            rtt_min_ms: 100.3,
            rtt_spread_ms: 50.0,
            request_timeout_ms: Some(130),
        };
        let steps = 200_000;
        let mean: f64 = (0..steps)
            .map(|i| {
                let x = 100.3 + 50.0 * (i as f64 + 0.5) / steps as f64;
                x.floor().min(130.0)
            })
            .sum::<f64>()
            / steps as f64;
        assert!((cell.expected_rtt_ms() - mean).abs() < 1e-3, "{} vs {mean}", cell.expected_rtt_ms());
    }

    #[test]
    fn ring_table_is_symmetric() {
        let t = ring_rtt_table(5, 80.0, 1700.0);
        for (a, row) in t.iter().enumerate() {
            assert_eq!(row[a], 80.0);
            for (b, v) in row.iter().enumerate() {
                assert_eq!(*v, t[b][a]);
            }
        }
    }
}
