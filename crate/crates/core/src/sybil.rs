//! Collusion detection, participation filtering, capability qualification,
//! and the economics of a Sybil clique.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sim::{RoundReport, SimParams, Strategy, Swarm};
use crate::SimError;

/// Mutual-support statistics: how often judge `i` placed node `j`'s response
/// in the top half of its own implied ranking, per round both took part in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollusionTracker {
    n: usize,
    support_counts: Vec<u32>,
    co_rounds: Vec<u32>,
}

impl CollusionTracker {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n: n_nodes,
            support_counts: vec![0; n_nodes * n_nodes],
            co_rounds: vec![0; n_nodes * n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    /// Records one round. `participants` are the node ids that took part;
    /// `top_half` holds, per judge, the authors it placed in its top half.
    pub fn update_support(&mut self, participants: &[usize], top_half: &[(usize, BTreeSet<usize>)]) {
        for &i in participants {
            for &j in participants {
                if i != j {
                    self.co_rounds[i * self.n + j] += 1;
                }
            }
        }
        for (judge, supported) in top_half {
            for &j in supported {
                if j != *judge {
                    self.support_counts[judge * self.n + j] += 1;
                }
            }
        }
    }

    pub fn support_count(&self, i: usize, j: usize) -> u32 {
        self.support_counts[i * self.n + j]
    }

    pub fn co_rounds(&self, i: usize, j: usize) -> u32 {
        self.co_rounds[i * self.n + j]
    }

    /// `c_ij`, or `None` when `i` and `j` never took part together.
    pub fn c(&self, i: usize, j: usize) -> Option<f64> {
        let co = self.co_rounds(i, j);
        if co == 0 {
            None
        } else {
            Some(self.support_count(i, j) as f64 / co as f64)
        }
    }

    /// `c_ij` once the pair shares at least `min_co_rounds` rounds.
    pub fn established_c(&self, i: usize, j: usize, min_co_rounds: u32) -> Option<f64> {
        if self.co_rounds(i, j) < min_co_rounds.max(1) {
            None
        } else {
            self.c(i, j)
        }
    }
}

/// `c_ij` expected when rankings are uniformly random over `n` participants.
pub fn expected_support(n_participants: usize) -> f64 {
    let n = n_participants as f64;
    n / (2.0 * (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SybilParams {
    /// Collusion penalty coefficient.
    pub lambda: f64,
    /// Support level above which weights are penalized. `None` means
    /// `tau_factor * expected_c` for the swarm at hand.
    pub tau_collusion: Option<f64>,
    pub tau_factor: f64,
    /// Participation-filter sensitivity.
    pub gamma: f64,
    /// Co-participated rounds a pair needs before its support rate counts.
    pub min_co_rounds: u32,
}

impl Default for SybilParams {
    fn default() -> Self {
        Self {
            lambda: 15.0,
            tau_collusion: None,
            tau_factor: 1.2,
            gamma: 1.5,
            min_co_rounds: 20,
        }
    }
}

impl SybilParams {
    pub fn tau_for(&self, n_participants: usize) -> f64 {
        self.tau_collusion
            .unwrap_or_else(|| self.tau_factor * expected_support(n_participants))
    }

    pub fn validate(&self, n_participants: usize) -> Result<(), String> {
        if !(self.lambda > 0.0) {
            return Err(format!("lambda must be positive (got {})", self.lambda));
        }
        if !(self.gamma > 0.0) {
            return Err(format!("gamma must be positive (got {})", self.gamma));
        }
        if n_participants >= 2 {
            let tau = self.tau_for(n_participants);
            let e = expected_support(n_participants);
            if !(tau > e) {
                return Err(format!("tau_collusion {tau} must exceed expected support {e}"));
            }
        }
        Ok(())
    }
}

/// `base * exp(-lambda * max(0, c - tau))`.
pub fn collusion_adjusted_weight(base_weight: f64, c_ij: f64, lambda: f64, tau: f64) -> f64 {
    base_weight * (-lambda * (c_ij - tau).max(0.0)).exp()
}

/// `exp(-gamma * |ln(n_actual / n_bar)|)`.
pub fn round_weight(n_actual: usize, n_bar: f64, gamma: f64) -> f64 {
    (-gamma * (n_actual as f64 / n_bar).ln().abs()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub correct: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityOutcome {
    pub passed: bool,
    pub score: f64,
}

/// Passes when the cost-weighted count of correct answers reaches `tau`.
pub fn capability_check(results: &[TestResult], tau: f64) -> CapabilityOutcome {
    let score: f64 = results.iter().filter(|r| r.correct).map(|r| r.cost).sum();
    CapabilityOutcome {
        passed: score >= tau,
        score,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomicParams {
    pub c_test: f64,
    pub n_tests: usize,
    pub c_inference: f64,
    pub r_initial: f64,
    pub alpha_slash: f64,
    pub reward_per_round: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            c_test: 1.0,
            n_tests: 50,
            c_inference: 0.01,
            r_initial: 0.5,
            alpha_slash: 1.0,
            reward_per_round: 1.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("c_test", self.c_test),
            ("c_inference", self.c_inference),
            ("r_initial", self.r_initial),
            ("alpha_slash", self.alpha_slash),
            ("reward_per_round", self.reward_per_round),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative (got {v})"));
            }
        }
        Ok(())
    }

    pub fn cost_entry(&self, k: usize) -> f64 {
        k as f64 * self.c_test * self.n_tests as f64
    }

    pub fn cost_operation(&self, k: usize, rounds: u64) -> f64 {
        k as f64 * self.c_inference * rounds as f64
    }

    /// Slashing exposure summed over rounds: per round the clique forfeits
    /// `k * r_initial * alpha_slash` when collusion was detected.
    pub fn cost_slashing(&self, k: usize, detected_rounds: u64) -> f64 {
        k as f64 * self.r_initial * self.alpha_slash * detected_rounds as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SybilLedger {
    pub k: usize,
    pub lambda: f64,
    pub rounds: u64,
    pub revenue: f64,
    /// Revenue of the same run with every penalty factor set to one.
    pub unpenalized_revenue: f64,
    pub cost_entry: f64,
    pub cost_operation: f64,
    pub cost_slashing: f64,
    /// Fraction of rounds in which some intra-clique `c_ij` exceeded tau.
    pub f_detected: f64,
    pub net: f64,
    pub profitable: bool,
}

pub const SYBIL_HEADER: &str =
    "k,lambda,rounds,revenue,cost_entry,cost_operation,cost_slashing,net,profitable";

pub fn write_sybil_csv<W: Write>(mut w: W, rows: &[SybilLedger]) -> std::io::Result<()> {
    writeln!(w, "{SYBIL_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.k,
            r.lambda,
            r.rounds,
            r.revenue,
            r.cost_entry,
            r.cost_operation,
            r.cost_slashing,
            r.net,
            r.profitable
        )?;
    }
    Ok(())
}

/// Runs the swarm with `k` colluding identities added as one clique and
/// accumulates their reward share against entry, operation and slashing
/// costs. `penalize = false` disables the collusion penalty everywhere (the
/// counterfactual run).
pub fn simulate_sybil_economics(
    k: usize,
    horizon: u64,
    econ: &EconomicParams,
    base: &SimParams,
    penalize: bool,
) -> Result<SybilLedger, SimError> {
    let mut params = base.clone();
    params.swarm.n_nodes = base.swarm.n_nodes + k;
    params.swarm.colluder_clique_sizes = if k > 0 { vec![k] } else { vec![] };
    params.swarm.rounds = horizon;
    params.swarm.collusion_defense = penalize;
    let sybil = params.sybil;
    let mut sim = Swarm::new(params)?;
    let clique: Vec<usize> = sim
        .profiles()
        .iter()
        .filter(|p| matches!(p.strategy, Strategy::Colluder { .. }))
        .map(|p| p.id)
        .collect();

    let mut revenue = 0.0;
    let mut unpenalized = 0.0;
    let mut detected_rounds = 0u64;
    for round in 0..horizon {
        let outcome = match sim.run_round(round)? {
            RoundReport::Played(o) => o,
            RoundReport::Skipped { .. } => continue,
        };
        let tau = outcome.tau_collusion;
        let tracker = sim.tracker();
        let total_rep: f64 = outcome.reputation_before.iter().map(|(_, r)| r).sum();
        if total_rep <= 0.0 {
            continue;
        }
        let rep_of = |id: usize| {
            outcome
                .reputation_before
                .iter()
                .find(|(n, _)| *n == id)
                .map(|(_, r)| *r)
                .unwrap_or(0.0)
        };
        let mut detected = false;
        let mut share = 0.0;
        let mut raw_share = 0.0;
        for &i in &clique {
            let r = rep_of(i);
            let mut factor = 1.0;
            for &j in &clique {
                if i == j {
                    continue;
                }
                let c = tracker.established_c(i, j, sybil.min_co_rounds).unwrap_or(0.0);
                if c > tau {
                    detected = true;
                }
                factor *= collusion_adjusted_weight(1.0, c, sybil.lambda, tau);
            }
            share += r * factor;
            raw_share += r;
        }
        let scale = outcome.round_weight * econ.reward_per_round / total_rep;
        if penalize {
            revenue += share * scale;
        } else {
            revenue += raw_share * scale;
        }
        unpenalized += raw_share * scale;
        if detected && penalize {
            detected_rounds += 1;
        }
    }

    let cost_entry = econ.cost_entry(k);
    let cost_operation = econ.cost_operation(k, horizon);
    let cost_slashing = econ.cost_slashing(k, detected_rounds);
    let net = revenue - cost_entry - cost_operation - cost_slashing;
    Ok(SybilLedger {
        k,
        lambda: sybil.lambda,
        rounds: horizon,
        revenue,
        unpenalized_revenue: unpenalized,
        cost_entry,
        cost_operation,
        cost_slashing,
        f_detected: if horizon == 0 { 0.0 } else { detected_rounds as f64 / horizon as f64 },
        net,
        profitable: net > 0.0,
    })
}
