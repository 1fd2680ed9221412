//! Dual-channel node reputation.
//!
//! Each node carries a ranking-accuracy channel and a generation-win channel,
//! both exponential moving averages, and a combined score
//! `alpha * ranking + (1 - alpha) * generation`. After the EMAs run, a round
//! transition nudges both channels by a fixed step (up for good rounds, down
//! for bad ones, multiplicative decay for inactive ones), so the combined
//! score moves by that step unless a channel saturates at a bound.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta_up: f64,
    pub delta_down: f64,
    pub decay_delta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub slash_threshold: f64,
    pub r_initial: f64,
    pub perf_threshold: f64,
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.9,
            delta_up: 0.02,
            delta_down: 0.03,
            decay_delta: 0.005,
            r_min: 0.0,
            r_max: 1.0,
            slash_threshold: 0.1,
            r_initial: 0.5,
            perf_threshold: 0.5,
        }
    }
}

impl ReputationParams {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1] (got {v})"))
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if !(0.0..1.0).contains(&self.decay_delta) {
            return Err(format!("decay_delta must lie in [0, 1) (got {})", self.decay_delta));
        }
        if !(self.delta_up > 0.0 && self.delta_down > 0.0) {
            return Err("delta_up and delta_down must be positive".into());
        }
        if !(self.r_min < self.slash_threshold && self.slash_threshold < self.r_max) {
            return Err(format!(
                "need r_min < slash_threshold < r_max (got {} / {} / {})",
                self.r_min, self.slash_threshold, self.r_max
            ));
        }
        if !(self.r_min..=self.r_max).contains(&self.r_initial) {
            return Err(format!("r_initial must lie in [r_min, r_max] (got {})", self.r_initial));
        }
        Ok(())
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.r_min, self.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationState {
    pub ranking: f64,
    pub generation: f64,
    pub combined: f64,
    pub last_active_round: Option<u64>,
}

impl ReputationState {
    pub fn new(ranking: f64, generation: f64, params: &ReputationParams) -> Self {
        let mut s = Self {
            ranking,
            generation,
            combined: 0.0,
            last_active_round: None,
        };
        s.recombine(params);
        s
    }

    pub fn initial(params: &ReputationParams) -> Self {
        Self::new(params.r_initial, params.r_initial, params)
    }

    fn recombine(&mut self, params: &ReputationParams) {
        self.combined = params.alpha * self.ranking + (1.0 - params.alpha) * self.generation;
    }
}

fn ema(prev: f64, target: f64, retention: f64) -> f64 {
    retention * prev + (1.0 - retention) * target
}

/// Retention after discounting a round by `round_weight` in `[0, 1]`:
/// a zero-weight round leaves the EMA untouched.
pub fn weighted_retention(beta: f64, round_weight: f64) -> f64 {
    1.0 - (1.0 - beta) * round_weight.clamp(0.0, 1.0)
}

/// Fraction of `agreements` that are true, or `None` for an empty set.
pub fn agreement_fraction(agreements: &[bool]) -> Option<f64> {
    if agreements.is_empty() {
        None
    } else {
        Some(agreements.iter().filter(|a| **a).count() as f64 / agreements.len() as f64)
    }
}

/// Ranking EMA towards the fraction of the node's comparisons that agree with
/// the consensus order. An empty comparison set leaves the state unchanged.
pub fn update_ranking_ema(
    state: &ReputationState,
    agreements: &[bool],
    params: &ReputationParams,
) -> ReputationState {
    update_ranking_ema_weighted(state, agreements, 1.0, params)
}

pub fn update_ranking_ema_weighted(
    state: &ReputationState,
    agreements: &[bool],
    round_weight: f64,
    params: &ReputationParams,
) -> ReputationState {
    let Some(frac) = agreement_fraction(agreements) else {
        return *state;
    };
    let mut next = *state;
    next.ranking = params.clamp(ema(
        state.ranking,
        frac,
        weighted_retention(params.beta, round_weight),
    ));
    next.recombine(params);
    next
}

pub fn update_generation_ema(
    state: &ReputationState,
    won_round: bool,
    params: &ReputationParams,
) -> ReputationState {
    update_generation_ema_weighted(state, won_round, 1.0, params)
}

pub fn update_generation_ema_weighted(
    state: &ReputationState,
    won_round: bool,
    round_weight: f64,
    params: &ReputationParams,
) -> ReputationState {
    let mut next = *state;
    let target = if won_round { 1.0 } else { 0.0 };
    next.generation = params.clamp(ema(
        state.generation,
        target,
        weighted_retention(params.beta, round_weight),
    ));
    next.recombine(params);
    next
}

/// The round's performance signal fed to [`apply_round_transition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Performance {
    Active(f64),
    Inactive,
}

/// Agreement fraction plus one for a round win. A judge without comparisons
/// that did not win sits exactly at the threshold and is left alone.
pub fn performance_signal(agreement: Option<f64>, won: bool, params: &ReputationParams) -> f64 {
    let base = agreement.unwrap_or(params.perf_threshold);
    if won {
        base + 1.0
    } else {
        base
    }
}

pub fn apply_round_transition(
    state: &ReputationState,
    performance: Performance,
    params: &ReputationParams,
) -> ReputationState {
    let mut next = *state;
    match performance {
        Performance::Inactive => {
            next.ranking *= 1.0 - params.decay_delta;
            next.generation *= 1.0 - params.decay_delta;
        }
        Performance::Active(p) if p > params.perf_threshold => {
            next.ranking = (next.ranking + params.delta_up).min(params.r_max);
            next.generation = (next.generation + params.delta_up).min(params.r_max);
        }
        Performance::Active(p) if p < params.perf_threshold => {
            next.ranking = (next.ranking - params.delta_down).max(params.r_min);
            next.generation = (next.generation - params.delta_down).max(params.r_min);
        }
        Performance::Active(_) => {}
    }
    next.ranking = params.clamp(next.ranking);
    next.generation = params.clamp(next.generation);
    next.recombine(params);
    next
}

/// Zeroes every channel when the combined score is strictly below the slash
/// threshold. Returns the new state and whether it was slashed.
pub fn check_slash(state: &ReputationState, params: &ReputationParams) -> (ReputationState, bool) {
    if state.combined < params.slash_threshold {
        let next = ReputationState {
            ranking: 0.0,
            generation: 0.0,
            combined: 0.0,
            last_active_round: state.last_active_round,
        };
        (next, true)
    } else {
        (*state, false)
    }
}

/// One round as recorded in a node's reputation history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u64,
    pub won: bool,
    pub agreement: Option<f64>,
    pub combined: f64,
}

/// Canonical, self-delimiting byte encoding of a history:
/// `count:u64le` then per entry `round:u64le won:u8 has_agreement:u8
/// agreement:f64le combined:f64le`.
pub fn encode_history(history: &[HistoryEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + history.len() * 26);
    out.extend_from_slice(&(history.len() as u64).to_le_bytes());
    for e in history {
        out.extend_from_slice(&e.round.to_le_bytes());
        out.push(e.won as u8);
        out.push(e.agreement.is_some() as u8);
        out.extend_from_slice(&e.agreement.unwrap_or(0.0).to_bits().to_le_bytes());
        out.extend_from_slice(&e.combined.to_bits().to_le_bytes());
    }
    out
}

/// `SHA-256(encode_history(history) || pubkey)`.
pub fn reputation_commitment(history: &[HistoryEntry], pubkey: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(encode_history(history));
    h.update(pubkey);
    h.finalize().into()
}

/// One row of the reputation trajectory export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: u64,
    pub node_id: usize,
    pub ranking: f64,
    pub generation: f64,
    pub combined: f64,
    pub slashed: bool,
}

pub const TRAJECTORY_HEADER: &str = "round,node_id,ranking,generation,combined,slashed";

pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.round, r.node_id, r.ranking, r.generation, r.combined, r.slashed
        )?;
    }
    Ok(())
}

/// Scripted single-node schedule used to trace reputation shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformerScript {
    pub win_rate: f64,
    pub agreement: f64,
    /// Rounds at the start during which the node is inactive.
    pub inactive_rounds: u64,
    pub rounds: u64,
}

impl PerformerScript {
    pub fn high() -> Self {
        Self { win_rate: 0.8, agreement: 0.9, inactive_rounds: 0, rounds: 100 }
    }

    pub fn poor() -> Self {
        Self { win_rate: 0.1, agreement: 0.3, inactive_rounds: 0, rounds: 100 }
    }

    pub fn recovery() -> Self {
        Self { win_rate: 0.8, agreement: 0.9, inactive_rounds: 30, rounds: 100 }
    }

    /// Wins are spread evenly: round `t` (counted from the first active
    /// round) is a win when `floor((t+1) * rate)` steps past `floor(t * rate)`.
    fn wins_at(&self, active_round: u64) -> bool {
        let t = active_round as f64;
        ((t + 1.0) * self.win_rate).floor() > (t * self.win_rate).floor()
    }

    /// Combined-score trajectory starting at `r_initial`; element `t` is the
    /// score after `t` rounds. Slashing is not applied.
    pub fn trajectory(&self, params: &ReputationParams) -> Vec<ReputationState> {
        let mut state = ReputationState::initial(params);
        let mut out = vec![state];
        for round in 0..self.rounds {
            if round < self.inactive_rounds {
                state = apply_round_transition(&state, Performance::Inactive, params);
            } else {
                let t = round - self.inactive_rounds;
                let won = self.wins_at(t);
                // Agreement is a deterministic fraction over 100 comparisons.
                let agree_n = (self.agreement * 100.0).round() as usize;
                let agreements: Vec<bool> = (0..100).map(|k| k < agree_n).collect();
                state = update_ranking_ema(&state, &agreements, params);
                state = update_generation_ema(&state, won, params);
                let perf = performance_signal(agreement_fraction(&agreements), won, params);
                state = apply_round_transition(&state, Performance::Active(perf), params);
                state.last_active_round = Some(round);
            }
            out.push(state);
        }
        out
    }
}
