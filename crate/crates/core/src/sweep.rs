//! Parameter sweeps over independent simulation runs.
//!
//! Runs execute on a rayon pool and are merged in declared parameter order,
//! so output bytes do not depend on the number of worker threads.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{stream_seed, RoundReport, RoundTrace, SimParams, Swarm};
use crate::sybil::{self, EconomicParams, SybilLedger};
use crate::SimError;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SWARMLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Consensus,
    Majority,
    Weighted,
    Unweighted,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Consensus => "consensus",
            Selector::Majority => "majority",
            Selector::Weighted => "weighted",
            Selector::Unweighted => "unweighted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub param_value: f64,
    pub selector: Selector,
    /// Measured rounds pooled over replicates.
    pub rounds: u64,
    pub accuracy: f64,
    pub stderr: f64,
}

pub const CURVE_HEADER: &str = "param_value,selector,rounds,accuracy,stderr";

pub fn write_curve_csv<W: Write>(mut w: W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6}",
            p.param_value, p.selector, p.rounds, p.accuracy, p.stderr
        )?;
    }
    Ok(())
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` inside a pool of `threads` workers, or the environment default.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.or_else(threads_from_env) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Master seed of replicate `rep` at parameter position `index`.
pub fn run_seed(master: u64, index: usize, rep: usize) -> u64 {
    let s = stream_seed(master, "run", index as u64, rep as u64);
    u64::from_le_bytes(s[..8].try_into().unwrap())
}

/// Correct-selection counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTally {
    pub measured: u64,
    pub consensus: u64,
    pub majority: u64,
}

impl RunTally {
    fn add(&mut self, other: &RunTally) {
        self.measured += other.measured;
        self.consensus += other.consensus;
        self.majority += other.majority;
    }
}

/// Execution knobs shared by all sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Worker threads; `None` defers to [`THREADS_ENV`] and then rayon.
    pub threads: Option<usize>,
    /// Keep a per-round trace of every run.
    pub trace: bool,
}

/// One trace line: a round of one run within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub param_value: f64,
    pub replicate: usize,
    /// `true` for runs with reputation weighting.
    pub weighted: bool,
    #[serde(flatten)]
    pub round: RoundTrace,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub points: Vec<CurvePoint>,
    pub traces: Vec<TraceLine>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs `params.swarm.burn_in + rounds` rounds and scores the last `rounds`.
/// A round with a single response counts as correct for both selectors.
pub fn measure_run(params: SimParams, rounds: u64) -> Result<RunTally, SimError> {
    measure_run_traced(params, rounds, false).map(|(t, _)| t)
}

/// As [`measure_run`], also returning every round's trace when asked.
pub fn measure_run_traced(
    params: SimParams,
    rounds: u64,
    trace: bool,
) -> Result<(RunTally, Vec<RoundTrace>), SimError> {
    let burn_in = params.swarm.burn_in;
    let mut swarm = Swarm::new(params)?;
    let mut t = RunTally::default();
    let mut traces = Vec::new();
    for round in 0..burn_in + rounds {
        let report = swarm.run_round(round)?;
        if trace {
            traces.push(RoundTrace::from(&report));
        }
        if round < burn_in {
            continue;
        }
        t.measured += 1;
        match report {
            RoundReport::Played(o) => {
                t.consensus += o.correct as u64;
                t.majority += o.majority_correct as u64;
            }
            RoundReport::Skipped { n_responses, .. } => {
                if n_responses == 1 {
                    t.consensus += 1;
                    t.majority += 1;
                }
            }
        }
    }
    Ok((t, traces))
}

struct Job {
    index: usize,
    replicate: usize,
    weighted: bool,
    params: SimParams,
}

/// Runs every job in parallel; results come back in job order.
fn run_jobs(
    jobs: Vec<Job>,
    rounds: u64,
    param_values: &[f64],
    opts: &SweepOptions,
) -> Result<(Vec<RunTally>, Vec<TraceLine>), SimError> {
    let results: Vec<Result<(RunTally, Vec<RoundTrace>), SimError>> = with_pool(opts.threads, || {
        jobs.par_iter()
            .map(|j| measure_run_traced(j.params.clone(), rounds, opts.trace))
            .collect()
    })?;
    let mut tallies = Vec::with_capacity(jobs.len());
    let mut lines = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        let (tally, traces) = r?;
        tallies.push(tally);
        lines.extend(traces.into_iter().map(|round| TraceLine {
            param_value: param_values[job.index],
            replicate: job.replicate,
            weighted: job.weighted,
            round,
        }));
    }
    Ok((tallies, lines))
}

fn point(param_value: f64, selector: Selector, correct: u64, rounds: u64) -> CurvePoint {
    let p = if rounds == 0 { 0.0 } else { correct as f64 / rounds as f64 };
    let stderr = if rounds == 0 {
        0.0
    } else {
        (p * (1.0 - p) / rounds as f64).sqrt()
    };
    CurvePoint {
        param_value,
        selector,
        rounds,
        accuracy: p,
        stderr,
    }
}

/// Accuracy against swarm size for the consensus and majority selectors.
/// Both selectors read the same rounds.
pub fn sweep_swarm_size(
    template: &SimParams,
    sizes: &[usize],
    rounds: u64,
    replicates: usize,
    opts: &SweepOptions,
) -> Result<SweepResult, SimError> {
    let replicates = replicates.max(1);
    let mut jobs = Vec::with_capacity(sizes.len() * replicates);
    for (index, &size) in sizes.iter().enumerate() {
        for replicate in 0..replicates {
            let mut p = template.clone();
            p.swarm.n_nodes = size;
            p.swarm.master_seed = run_seed(template.swarm.master_seed, index, replicate);
            jobs.push(Job {
                index,
                replicate,
                weighted: p.swarm.reputation_weighting,
                params: p,
            });
        }
    }
    let values: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (tallies, traces) = run_jobs(jobs, rounds, &values, opts)?;
    let mut points = Vec::with_capacity(sizes.len() * 2);
    for (i, chunk) in tallies.chunks(replicates).enumerate() {
        let mut total = RunTally::default();
        chunk.iter().for_each(|t| total.add(t));
        points.push(point(values[i], Selector::Consensus, total.consensus, total.measured));
        points.push(point(values[i], Selector::Majority, total.majority, total.measured));
    }
    Ok(SweepResult { points, traces })
}

/// Accuracy against Byzantine fraction for reputation-weighted consensus,
/// unweighted consensus and majority voting. The unweighted and majority
/// selectors share a run with reputation weighting switched off; both runs of
/// a replicate share every random draw.
pub fn sweep_byzantine(
    template: &SimParams,
    fractions: &[f64],
    rounds: u64,
    replicates: usize,
    opts: &SweepOptions,
) -> Result<SweepResult, SimError> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
        return Err(SimError::Config(format!(
            "byzantine fractions must lie in [0, 0.5] (got {f})"
        )));
    }
    let replicates = replicates.max(1);
    let mut jobs = Vec::with_capacity(fractions.len() * replicates * 2);
    for (index, &fraction) in fractions.iter().enumerate() {
        for replicate in 0..replicates {
            for weighted in [true, false] {
                let mut p = template.clone();
                p.swarm.byzantine_fraction = fraction;
                p.swarm.reputation_weighting = weighted;
                p.swarm.master_seed = run_seed(template.swarm.master_seed, index, replicate);
                jobs.push(Job {
                    index,
                    replicate,
                    weighted,
                    params: p,
                });
            }
        }
    }
    let (tallies, traces) = run_jobs(jobs, rounds, fractions, opts)?;
    let mut points = Vec::with_capacity(fractions.len() * 3);
    for (i, chunk) in tallies.chunks(2 * replicates).enumerate() {
        let (mut w, mut u) = (RunTally::default(), RunTally::default());
        for pair in chunk.chunks(2) {
            w.add(&pair[0]);
            u.add(&pair[1]);
        }
        points.push(point(fractions[i], Selector::Weighted, w.consensus, w.measured));
        points.push(point(fractions[i], Selector::Unweighted, u.consensus, u.measured));
        points.push(point(fractions[i], Selector::Majority, u.majority, u.measured));
    }
    Ok(SweepResult { points, traces })
}

/// Attacker economics over every `(lambda, k)` cell, lambda-major.
pub fn sweep_sybil(
    template: &SimParams,
    ks: &[usize],
    lambdas: &[f64],
    horizon: u64,
    econ: &EconomicParams,
    opts: &SweepOptions,
) -> Result<Vec<SybilLedger>, SimError> {
    if ks.contains(&0) {
        return Err(SimError::Config("sybil identity counts must be at least 1".into()));
    }
    let jobs: Vec<(f64, usize)> = lambdas
        .iter()
        .flat_map(|&l| ks.iter().map(move |&k| (l, k)))
        .collect();
    let results: Vec<Result<SybilLedger, SimError>> = with_pool(opts.threads, || {
        jobs.par_iter()
            .map(|&(lambda, k)| {
                let mut p = template.clone();
                p.sybil.lambda = lambda;
                sybil::simulate_sybil_economics(k, horizon, econ, &p, true)
            })
            .collect()
    })?;
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SwarmConfig;

    fn small(rounds: u64) -> SimParams {
        SimParams {
            swarm: SwarmConfig {
                n_nodes: 6,
                rounds,
                burn_in: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn size_one_is_identical_for_both_selectors() {
        let opts = SweepOptions { threads: Some(1), trace: true };
        let res = sweep_swarm_size(&small(5), &[1], 5, 2, &opts).unwrap();
        assert_eq!(res.traces.len(), 2 * 7);
        let pts = res.points;
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].accuracy, 1.0);
        assert_eq!(pts[0].accuracy, pts[1].accuracy);
    }

    #[test]
    fn curve_csv_layout() {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[point(3.0, Selector::Majority, 1, 4)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "param_value,selector,rounds,accuracy,stderr\n3,majority,4,0.250000,0.216506\n"
        );
    }

    #[test]
    fn byzantine_fraction_range_is_enforced() {
        assert!(matches!(
            sweep_byzantine(&small(1), &[0.6], 1, 1, &SweepOptions::default()),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn run_seeds_differ() {
        assert_ne!(run_seed(1, 0, 0), run_seed(1, 0, 1));
        assert_ne!(run_seed(1, 0, 0), run_seed(1, 1, 0));
        assert_eq!(run_seed(1, 2, 3), run_seed(1, 2, 3));
    }
}
