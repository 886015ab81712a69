//! Command-line front end. Every subcommand reads files, validates and
//! computes everything in memory, and only then writes its outputs, so a
//! validation failure leaves no partial artifacts behind.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{factor_sets_for_plan, run_comparison, EvalPlan, RunOptions};
use crate::hybrid::{hbrp_complete_with_model, rank_row, RankedPeer};
use crate::ingestion::{
    parse_canonical_chain, parse_test_cases_with, read_matrix, write_canonical_chain, write_matrix, write_test_cases,
    ParseOptions, TimeUnit,
};
use crate::matrix_gen::build_matrices;
use crate::model::{CanonicalChain, Criteria, FactorSet, ObservationMatrix, TestCase};
use crate::simulator::{generate_network_with, run_campaign, CampaignSpec, NetworkParams};

pub const SUCCESS_RATE_CSV: &str = "success_rate.csv";
pub const RIGHT_BLOCK_CSV: &str = "right_block.csv";
pub const RECENT_HEIGHT_CSV: &str = "recent_height.csv";
pub const ROUND_TRIP_TIME_CSV: &str = "round_trip_time.csv";
pub const PREDICTED_CSV: &str = "predicted_success_rate.csv";
pub const RANKINGS_CSV: &str = "rankings.csv";
pub const RANKINGS_HEADER: &str = "requester_id,rank,peer_id,predicted_success_rate,reliability";

#[derive(Debug, Parser)]
#[command(name = "peerlens", version, about = "Personalized reliability prediction for blockchain peers")]
struct Cli {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true, env = "PEERLENS_THREADS")]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic probe campaign: cases.csv, chain.csv, truth.json.
    Simulate(SimulateArgs),
    /// Turn a probe log into the four factor matrices for one criteria.
    BuildMatrices(BuildArgs),
    /// Complete the success-rate matrix with H-BRP and rank peers.
    Predict(PredictArgs),
    /// Rank peers from an already completed success-rate matrix.
    Rank(RankArgs),
    /// Compare all predictors over a density grid.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct CaseInput {
    /// Probe log CSV.
    #[arg(long)]
    cases: PathBuf,
    /// Canonical chain CSV (Height,BlockHash).
    #[arg(long)]
    chain: PathBuf,
    /// Timestamp unit of the cases file.
    #[arg(long, default_value = "s", value_parser = parse_time_unit)]
    time_unit: TimeUnit,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON file with optional `network` and `campaign` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of requesters.
    #[arg(long)]
    requesters: Option<usize>,
    /// Number of peers.
    #[arg(long)]
    peers: Option<usize>,
    /// Number of network regions.
    #[arg(long)]
    regions: Option<usize>,
    /// Peers probed per batch.
    #[arg(long)]
    n: Option<usize>,
    /// Probe periods per requester.
    #[arg(long)]
    periods: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Timestamp unit of the written cases file.
    #[arg(long, default_value = "s", value_parser = parse_time_unit)]
    time_unit: TimeUnit,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CriteriaArgs {
    /// Blocks a reply may lag the tip and still count as recent.
    #[arg(long)]
    max_block_back: u64,
    /// Round-trip budget in milliseconds.
    #[arg(long)]
    max_rtt_ms: u64,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[command(flatten)]
    input: CaseInput,
    #[command(flatten)]
    criteria: CriteriaArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory holding the four matrix CSVs written by build-matrices.
    #[arg(long)]
    matrices: PathBuf,
    #[command(flatten)]
    criteria: CriteriaArgs,
    /// Neighbours per peer.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[command(flatten)]
    ranking: RankingArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RankingArgs {
    /// Reliability horizon (dimensionless).
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Keep only the best peers per requester.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Completed success-rate matrix CSV.
    #[arg(long)]
    predicted: PathBuf,
    #[command(flatten)]
    ranking: RankingArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: CaseInput,
    /// JSON evaluation plan; fields left out keep their defaults.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Overrides the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Record wall-clock time per grid point (makes the report non-reproducible).
    #[arg(long)]
    timing: bool,
}

/// Contents of `simulate --config`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub network: NetworkParams,
    pub campaign: CampaignSpec,
}

fn parse_time_unit(s: &str) -> std::result::Result<TimeUnit, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 for
/// invalid input, 2 for I/O failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::BuildMatrices(a) => build(a),
        Command::Predict(a) => predict(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate(a),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Writes a file in one go after the caller has finished all validation.
fn write_file(path: &Path, contents: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut w = BufWriter::new(file);
    contents(&mut w)?;
    w.flush()?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_cases(input: &CaseInput) -> Result<(Vec<TestCase>, CanonicalChain)> {
    let opts = ParseOptions {
        time_unit: input.time_unit,
        lenient: input.lenient,
    };
    let outcome = parse_test_cases_with(open(&input.cases)?, opts)?;
    if !outcome.rejected.is_empty() {
        warn!("skipped {} malformed rows", outcome.rejected.len());
        for e in outcome.rejected.iter().take(10) {
            warn!("  {e}");
        }
    }
    let chain = parse_canonical_chain(open(&input.chain)?)?;
    info!("read {} cases, chain {}..={}", outcome.cases.len(), chain.min_height(), chain.max_height());
    Ok((outcome.cases, chain))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: SimulationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimulationConfig::default(),
    };
    let net = &mut cfg.network;
    net.num_requesters = a.requesters.unwrap_or(net.num_requesters);
    net.num_peers = a.peers.unwrap_or(net.num_peers);
    net.num_regions = a.regions.unwrap_or(net.num_regions);
    let spec = &mut cfg.campaign;
    spec.n = a.n.unwrap_or(spec.n);
    spec.duration_periods = a.periods.unwrap_or(spec.duration_periods);
    spec.seed = a.seed.unwrap_or(spec.seed);

    let t0 = Instant::now();
    let (requesters, peers) = generate_network_with(&cfg.network, cfg.campaign.seed)?;
    let campaign = run_campaign(&requesters, &peers, &cfg.campaign)?;
    info!("simulated {} cases in {:?}", campaign.cases.len(), t0.elapsed());

    let dir = &a.out_dir;
    write_file(&dir.join("cases.csv"), |w| write_test_cases(w, &campaign.cases, a.time_unit))?;
    write_file(&dir.join("chain.csv"), |w| write_canonical_chain(w, &campaign.chain))?;
    write_file(&dir.join("truth.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &campaign.truth)?;
        Ok(w.write_all(b"\n")?)
    })
}

fn build(a: BuildArgs) -> Result<()> {
    let criteria = Criteria::new(a.criteria.max_block_back, a.criteria.max_rtt_ms)?;
    let (cases, chain) = load_cases(&a.input)?;
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let t0 = Instant::now();
    let f = build_matrices(&cases, &chain, &criteria);
    info!(
        "built {}x{} matrices ({} known cells) in {:?}",
        f.success_rate.n_rows(),
        f.success_rate.n_cols(),
        f.success_rate.known_count(),
        t0.elapsed()
    );
    write_factor_set(&a.out_dir, &f)
}

fn write_factor_set(dir: &Path, f: &FactorSet) -> Result<()> {
    for (name, m) in [
        (SUCCESS_RATE_CSV, &f.success_rate),
        (RIGHT_BLOCK_CSV, &f.right_block),
        (RECENT_HEIGHT_CSV, &f.recent_height),
        (ROUND_TRIP_TIME_CSV, &f.round_trip_time),
    ] {
        write_file(&dir.join(name), |w| write_matrix(w, m))?;
    }
    Ok(())
}

fn load_matrix(path: &Path) -> Result<ObservationMatrix> {
    read_matrix(open(path)?).map_err(|e| match e {
        Error::Io(_) => e,
        other => Error::ShapeMismatch(format!("{}: {other}", path.display())),
    })
}

fn rankings_csv(m: &ObservationMatrix, args: &RankingArgs) -> Result<String> {
    if !(args.t >= 0.0 && args.t.is_finite()) {
        return Err(Error::DomainError(format!("t must be finite and non-negative, got {}", args.t)));
    }
    let top_k = args.top_k.unwrap_or(m.n_cols());
    let mut out = String::from(RANKINGS_HEADER);
    out.push('\n');
    for (r, requester) in m.rows().iter().enumerate() {
        let ranked: Vec<RankedPeer> = rank_row(m, r, args.t, top_k)?;
        for (i, p) in ranked.iter().enumerate() {
            writeln!(out, "{requester},{},{},{},{}", i + 1, p.peer_id, p.success_rate, p.reliability).unwrap();
        }
    }
    Ok(out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let criteria = Criteria::new(a.criteria.max_block_back, a.criteria.max_rtt_ms)?;
    let dir = &a.matrices;
    let factors = FactorSet::new(
        load_matrix(&dir.join(SUCCESS_RATE_CSV))?,
        load_matrix(&dir.join(RIGHT_BLOCK_CSV))?,
        load_matrix(&dir.join(RECENT_HEIGHT_CSV))?,
        load_matrix(&dir.join(ROUND_TRIP_TIME_CSV))?,
        criteria,
    )?;
    let (completed, model) = hbrp_complete_with_model(&factors, a.k)?;
    info!(
        "fitted sr = {:.4} + {:.4}·rb + {:.4}·rh + {:.4}·rtt",
        model.intercept, model.w_right_block, model.w_recent_height, model.w_rtt
    );
    let rankings = rankings_csv(&completed, &a.ranking)?;
    write_file(&a.out_dir.join(PREDICTED_CSV), |w| write_matrix(w, &completed))?;
    write_file(&a.out_dir.join(RANKINGS_CSV), |w| Ok(w.write_all(rankings.as_bytes())?))
}

fn rank(a: RankArgs) -> Result<()> {
    let m = load_matrix(&a.predicted)?;
    let rankings = rankings_csv(&m, &a.ranking)?;
    write_file(&a.out, |w| Ok(w.write_all(rankings.as_bytes())?))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut plan: EvalPlan = match &a.plan {
        Some(p) => read_json(p)?,
        None => EvalPlan::default(),
    };
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    plan.validate()?;
    let (cases, chain) = load_cases(&a.input)?;
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let t0 = Instant::now();
    let factor_sets = factor_sets_for_plan(&cases, &chain, &plan);
    let report = run_comparison(
        &factor_sets,
        &plan,
        RunOptions {
            record_wall_time: a.timing,
        },
    )?;
    info!("evaluated {} grid points in {:?}", report.rows.len(), t0.elapsed());
    let json = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    write_file(&a.out, |w| {
        if json {
            report.write_json(&mut *w)?;
            Ok(w.write_all(b"\n")?)
        } else {
            report.write_csv(w)
        }
    })
}
