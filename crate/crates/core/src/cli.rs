//! Command-line entry point. Every experiment writes its artifacts, the
//! resolved configuration and a `meta.json` into the output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bt::{self, ComparisonTally, FitConfig};
use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::mesh::{self, PartitionTree, SemanticPoint};
use crate::reputation::{write_trajectory_csv, TrajectoryRow};
use crate::scheduler::hex;
use crate::sim::{RoundReport, RoundTrace, Swarm};
use crate::sweep::{self, SweepOptions};
use crate::sybil::write_sybil_csv;
use crate::SimError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "swarmlab", version, about = "Deterministic experiments for pairwise-ranking swarm consensus")]
pub struct Cli {
    /// JSON experiment configuration; omitted means all defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration's `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Write per-round traces as JSON lines (`trace.jsonl`).
    #[arg(long, global = true)]
    pub trace: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit Bradley-Terry scores to a comparison file (`winner,loser,judge,weight`).
    Fit {
        input: PathBuf,
        /// Use the weight column instead of raw counts.
        #[arg(long)]
        weights: bool,
    },
    /// Run consecutive consensus rounds of one swarm.
    Round,
    /// Accuracy against swarm size, consensus vs majority voting.
    SweepSize,
    /// Accuracy against Byzantine fraction: weighted, unweighted, majority.
    SweepByzantine,
    /// Attacker economics over identity counts and penalty strengths.
    SweepSybil,
    /// Build the semantic partition tree and dump its leaves.
    MeshBuild {
        /// CSV of `owner,x0,x1,...` rows; random points when omitted.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Route query vectors to leaf sub-meshes.
    Route {
        #[arg(long)]
        points: Option<PathBuf>,
        /// One comma-separated query vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        query: Option<Vec<f64>>,
        /// CSV with one query vector per line.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::Fit { .. } => Experiment::Fit,
            Command::Round => Experiment::Round,
            Command::SweepSize => Experiment::SweepSize,
            Command::SweepByzantine => Experiment::SweepByzantine,
            Command::SweepSybil => Experiment::SweepSybil,
            Command::MeshBuild { .. } => Experiment::MeshBuild,
            Command::Route { .. } => Experiment::Route,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn command_with_defaults() -> clap::Command {
    let defaults = ExperimentConfig {
        fit: Some(FitConfig::default()),
        ..ExperimentConfig::default()
    }
    .to_pretty_json();
    Cli::command().after_long_help(format!(
        "Exit codes: 0 success, 2 configuration error, 3 runtime error.\n\
         Environment: SWARMLAB_THREADS caps the worker threads of sweeps.\n\n\
         Default configuration (every field optional; when `fit` is absent the\n\
         solver is gradient for `fit` and newton for simulations):\n{defaults}"
    ))
}

/// Parses arguments and runs. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command_with_defaults().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Collects artifact bytes and writes them with their checksums.
struct Artifacts {
    dir: PathBuf,
    sums: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            sums: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.sums.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    fn finish(mut self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        self.write("config.resolved.json", cfg.to_pretty_json().as_bytes())?;
        #[derive(Serialize)]
        struct Meta<'a> {
            experiment: String,
            seed: u64,
            config_hash: String,
            version: &'a str,
            artifacts: &'a BTreeMap<String, String>,
        }
        let meta = Meta {
            experiment: cfg.experiment.map(|e| e.to_string()).unwrap_or_default(),
            seed: cfg.master_seed,
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION"),
            artifacts: &self.sums,
        };
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
        let path = self.dir.join("meta.json");
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

// A closed stdout (e.g. piped into `head`) must not abort the run.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let kind = cli.command.experiment();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let cfg = cfg.resolve(kind)?;
    let mut art = Artifacts::new(&cli.out)?;
    let opts = SweepOptions {
        threads: None,
        trace: cli.trace,
    };
    match &cli.command {
        Command::Fit { input, weights } => run_fit(&cfg, input, *weights, &mut art)?,
        Command::Round => run_rounds(&cfg, cli.trace, &mut art)?,
        Command::SweepSize => {
            let res = sweep::sweep_swarm_size(
                &cfg.sim_params(),
                &cfg.sweep.sizes,
                cfg.sweep.rounds,
                cfg.sweep.replicates,
                &opts,
            )?;
            art.write("curve.csv", &csv_bytes(|b| sweep::write_curve_csv(b, &res.points))?)?;
            if cli.trace {
                art.write("trace.jsonl", &csv_bytes(|b| sweep::write_jsonl(b, &res.traces))?)?;
            }
        }
        Command::SweepByzantine => {
            let res = sweep::sweep_byzantine(
                &cfg.sim_params(),
                &cfg.sweep.fractions,
                cfg.sweep.rounds,
                cfg.sweep.replicates,
                &opts,
            )?;
            art.write("curve.csv", &csv_bytes(|b| sweep::write_curve_csv(b, &res.points))?)?;
            if cli.trace {
                art.write("trace.jsonl", &csv_bytes(|b| sweep::write_jsonl(b, &res.traces))?)?;
            }
        }
        Command::SweepSybil => {
            let s = &cfg.sybil_sweep;
            let mut template = cfg.sim_params();
            template.swarm.n_nodes = s.honest_nodes;
            let rows = sweep::sweep_sybil(&template, &s.ks, &s.lambdas, s.horizon, &s.economics, &opts)?;
            art.write("sybil.csv", &csv_bytes(|b| write_sybil_csv(b, &rows))?)?;
        }
        Command::MeshBuild { points } => {
            let tree = build_mesh(&cfg, points.as_deref())?;
            art.write("leaves.txt", tree.dump().as_bytes())?;
            let summary = mesh_summary(&cfg, &tree);
            art.write("mesh.json", (serde_json::to_string_pretty(&summary).unwrap() + "\n").as_bytes())?;
            emit(&format!(
                "{} points, {} leaves, depth {} (bound {})\n",
                summary.n_points, summary.leaves, summary.depth, summary.depth_bound
            ));
        }
        Command::Route { points, query, queries } => {
            let tree = build_mesh(&cfg, points.as_deref())?;
            let mut qs: Vec<Vec<f64>> = Vec::new();
            if let Some(q) = query {
                qs.push(q.clone());
            }
            if let Some(path) = queries {
                qs.extend(read_vectors(path)?);
            }
            if qs.is_empty() {
                return Err(CliError::Config("route needs --query or --queries".into()));
            }
            let mut out = String::from("query,submesh_id,steps,members\n");
            for (i, q) in qs.iter().enumerate() {
                let r = tree
                    .route_query(q)
                    .map_err(|e| CliError::Config(format!("query {i}: {e}")))?;
                let members: Vec<String> = r.members.iter().map(|m| m.to_string()).collect();
                let line = format!("{i},{},{},{}\n", r.id, r.steps, members.join(" "));
                emit(&line);
                out.push_str(&line);
            }
            art.write("routes.csv", out.as_bytes())?;
        }
    }
    art.finish(&cfg)
}

/// Reads a comparison file. Errors carry 1-based line numbers.
pub fn read_comparisons(path: &Path) -> Result<ComparisonTally, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_comparisons(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_comparisons(text: &str) -> Result<ComparisonTally, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(wc), Some(lc)) = (col("winner"), col("loser")) else {
        return Err("line 1: header must name 'winner' and 'loser' columns".into());
    };
    let weight_col = col("weight");
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format!("{e}"))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize, name: &str| {
            rec.get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("line {line}: missing {name}"))
        };
        let index = |c: usize, name: &str| -> Result<usize, String> {
            let s = field(c, name)?;
            s.parse().map_err(|_| format!("line {line}: {name} '{s}' is not an item index"))
        };
        let w = index(wc, "winner")?;
        let l = index(lc, "loser")?;
        if w == l {
            return Err(format!("line {line}: self-comparison of item {w}"));
        }
        let weight = match weight_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            None => 1.0,
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| format!("line {line}: weight '{s}' is not a number"))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format!("line {line}: weight must be non-negative (got {s})"));
                }
                v
            }
        };
        rows.push((line, w, l, weight));
    }
    if rows.is_empty() {
        return Err("no comparisons".into());
    }
    let n = rows.iter().map(|&(_, w, l, _)| w.max(l)).max().unwrap() + 1;
    let mut tally = ComparisonTally::new(n);
    for (line, w, l, weight) in rows {
        tally.record(w, l, weight).map_err(|e| format!("line {line}: {e}"))?;
    }
    Ok(tally)
}

#[derive(Serialize)]
struct FitReport {
    theta: Vec<f64>,
    pi: Vec<f64>,
    ranking: Vec<usize>,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
    objective: f64,
    weighted: bool,
}

fn run_fit(cfg: &ExperimentConfig, input: &Path, weights: bool, art: &mut Artifacts) -> Result<(), CliError> {
    let tally = read_comparisons(input)?;
    let fit_cfg = cfg.fit.unwrap_or_default();
    let (scores, diag) = bt::fit(&tally, &fit_cfg, weights).map_err(|e| match e {
        bt::BtError::NoComparisons | bt::BtError::NonIdentifiable { .. } => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    let ranking = bt::rank_from_scores(&scores);
    let report = FitReport {
        theta: scores.log_scores().to_vec(),
        pi: scores.scores(),
        ranking: ranking.clone(),
        iterations: diag.iterations,
        gradient_norm: diag.gradient_norm,
        converged: diag.converged,
        objective: diag.objective,
        weighted: weights,
    };
    let mut table = String::from("item,theta,pi,rank\n");
    let mut rank_of = vec![0; scores.len()];
    for (r, &i) in ranking.iter().enumerate() {
        rank_of[i] = r + 1;
    }
    for (i, rank) in rank_of.iter().enumerate() {
        table.push_str(&format!("{i},{:.9},{:.9},{rank}\n", report.theta[i], report.pi[i]));
    }
    emit(&table);
    emit(&format!(
        "# iterations {} gradient_norm {:.3e} converged {}\n",
        diag.iterations, diag.gradient_norm, diag.converged
    ));
    art.write("scores.csv", table.as_bytes())?;
    art.write("fit.json", (serde_json::to_string_pretty(&report).unwrap() + "\n").as_bytes())?;
    Ok(())
}

fn run_rounds(cfg: &ExperimentConfig, trace: bool, art: &mut Artifacts) -> Result<(), CliError> {
    let mut swarm = Swarm::new(cfg.sim_params())?;
    let mut rounds = String::from("round,n_responses,winner_author,correct,majority_correct,round_weight,fit_iterations,slashed\n");
    let mut trajectory: Vec<TrajectoryRow> = Vec::new();
    let mut traces: Vec<RoundTrace> = Vec::new();
    let mut played = 0u64;
    let mut correct = 0u64;
    swarm.run(|s, report| {
        let t = RoundTrace::from(&report);
        if let RoundReport::Played(o) = &report {
            played += 1;
            correct += o.correct as u64;
            let slashed: Vec<String> = o.slashed.iter().map(|x| x.to_string()).collect();
            rounds.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{}\n",
                o.round,
                o.authors.len(),
                o.winner_author(),
                o.correct,
                o.majority_correct,
                o.round_weight,
                o.fit.iterations,
                slashed.join(" ")
            ));
        } else {
            rounds.push_str(&format!("{},{},,,,,,\n", t.round, t.n_responses));
        }
        trajectory.extend(s.trajectory_rows(t.round));
        if trace {
            traces.push(t);
        }
        Ok(())
    })?;
    art.write("rounds.csv", rounds.as_bytes())?;
    art.write("reputation.csv", &csv_bytes(|b| write_trajectory_csv(b, &trajectory))?)?;
    if trace {
        art.write("trace.jsonl", &csv_bytes(|b| sweep::write_jsonl(b, &traces))?)?;
    }
    emit(&format!("{played} rounds played, {correct} selected the best response\n"));
    Ok(())
}

fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        out.push(v.map_err(|_| CliError::Config(format!("{}: line {}: expected numbers", path.display(), i + 1)))?);
    }
    Ok(out)
}

/// Points file rows are `owner,x0,x1,...`; a first line starting with
/// `owner` is treated as a header.
fn read_points(path: &Path) -> Result<Vec<SemanticPoint>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("owner")) {
            continue;
        }
        let bad = |m: String| CliError::Config(format!("{}: line {}: {m}", path.display(), i + 1));
        let mut fields = line.split(',').map(str::trim);
        let owner: usize = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("owner must be a node id".into()))?;
        let v: Vec<f64> = fields
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("expected numbers".into()))?;
        out.push(SemanticPoint::new(owner, v).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

fn build_mesh(cfg: &ExperimentConfig, points: Option<&Path>) -> Result<PartitionTree, CliError> {
    let pts = match points {
        Some(p) => read_points(p)?,
        None => mesh::random_points(cfg.mesh.n_points, cfg.mesh.dim, cfg.master_seed),
    };
    let tree = mesh::build_partition(pts, &cfg.mesh.params, &cfg.mesh.loads)
        .map_err(|e| CliError::Config(format!("mesh: {e}")))?;
    for w in &tree.warnings {
        log::warn!("{w}");
    }
    Ok(tree)
}

#[derive(Serialize)]
struct MeshSummary {
    n_points: usize,
    dim: usize,
    leaves: usize,
    depth: usize,
    depth_bound: usize,
    warnings: Vec<String>,
}

fn mesh_summary(cfg: &ExperimentConfig, tree: &PartitionTree) -> MeshSummary {
    let n = tree.points.len();
    MeshSummary {
        n_points: n,
        dim: tree.dim(),
        leaves: tree.leaves().count(),
        depth: tree.depth(),
        depth_bound: mesh::depth_bound(n, cfg.mesh.params.beta_cap),
        warnings: tree.warnings.clone(),
    }
}
