//! Consensus rounds over synthetic nodes.
//!
//! Each node emits one response per round with a scalar latent quality and
//! judges pairs of other nodes' responses as a noisy comparator. A round runs
//! seed derivation, assignment, judging, weighted Bradley–Terry fitting,
//! winner selection, reputation updates and collusion tracking, and is a pure
//! function of the configuration, the master seed and the round index.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bt::{self, ComparisonTally, FitConfig, FitDiagnostics, QualityScores, Solver};
use crate::reputation::{
    self, HistoryEntry, Performance, ReputationParams, ReputationState, TrajectoryRow,
};
use crate::scheduler::{self, Pair};
use crate::sybil::{self, CollusionTracker, SybilParams, TestResult};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Honest,
    ByzantineRandom,
    ByzantineAdversarial,
    Colluder { clique: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Logistic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Active,
    Slashed { since: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub id: usize,
    pub gen_quality: f64,
    pub judge_noise: f64,
    pub strategy: Strategy,
    pub embeddings: Vec<Vec<f64>>,
    pub reputation: ReputationState,
    pub status: NodeStatus,
    pub history: Vec<HistoryEntry>,
}

impl NodeProfile {
    pub fn node_id(&self) -> String {
        format!("node-{}", self.id)
    }

    pub fn clique(&self) -> Option<usize> {
        match self.strategy {
            Strategy::Colluder { clique } => Some(clique),
            _ => None,
        }
    }
}

/// Shape of the round-to-round quality noise. Both have mean zero and
/// standard deviation `response_sd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseDist {
    Normal,
    /// Centred unit exponential: the gap between the best and second-best
    /// response does not shrink as the swarm grows.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityModel {
    /// Mean of the per-node latent quality.
    pub node_mean: f64,
    /// Spread of the per-node latent quality across nodes.
    pub node_sd: f64,
    /// Round-to-round spread of a node's response quality.
    pub response_sd: f64,
    pub response_dist: ResponseDist,
}

impl Default for QualityModel {
    fn default() -> Self {
        Self {
            node_mean: 0.0,
            node_sd: 0.1,
            response_sd: 1.0,
            response_dist: ResponseDist::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Qualification {
    pub n_tests: usize,
    /// Probability that a node answers a test question correctly.
    pub test_accuracy: f64,
    /// Cost-weighted score required to pass; question costs are 1, 2 or 3.
    pub tau: f64,
}

impl Default for Qualification {
    fn default() -> Self {
        Self {
            n_tests: 20,
            test_accuracy: 0.8,
            tau: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub n_nodes: usize,
    pub byzantine_fraction: f64,
    /// Share of Byzantine nodes that invert preferences; the rest vote randomly.
    pub adversarial_share: f64,
    pub colluder_clique_sizes: Vec<usize>,
    /// `None` means three comparisons per response.
    pub comparisons_per_judge: Option<usize>,
    pub quality: QualityModel,
    pub judge_noise: f64,
    /// Spread of a judge's private error in perceiving each response's
    /// quality; fixed for all of that judge's comparisons in a round.
    pub perception_sd: f64,
    /// Log-normal spread of judge noise across nodes.
    pub judge_noise_spread: f64,
    pub noise_model: NoiseModel,
    pub rounds: u64,
    pub burn_in: u64,
    /// Set from the experiment's top-level seed.
    #[serde(skip)]
    pub master_seed: u64,
    /// Weight comparisons by judge reputation and exclude slashed nodes.
    pub reputation_weighting: bool,
    /// Penalize weights of judges with suspicious mutual support.
    pub collusion_defense: bool,
    /// Only the first participant judges.
    pub single_judge: bool,
    /// Rounds a slashed node waits before retaking qualification.
    pub requalify_after: u64,
    pub qualification: Qualification,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            n_nodes: 35,
            byzantine_fraction: 0.0,
            adversarial_share: 0.5,
            colluder_clique_sizes: Vec::new(),
            comparisons_per_judge: None,
            quality: QualityModel::default(),
            judge_noise: 1.0,
            perception_sd: 1.0,
            judge_noise_spread: 0.0,
            noise_model: NoiseModel::Logistic,
            rounds: 100,
            burn_in: 0,
            master_seed: 42,
            reputation_weighting: true,
            collusion_defense: true,
            single_judge: false,
            requalify_after: 20,
            qualification: Qualification::default(),
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_nodes == 0 {
            return Err("n_nodes must be at least 1".into());
        }
        for (name, v) in [
            ("byzantine_fraction", self.byzantine_fraction),
            ("adversarial_share", self.adversarial_share),
            ("qualification.test_accuracy", self.qualification.test_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1] (got {v})"));
            }
        }
        let colluders: usize = self.colluder_clique_sizes.iter().sum();
        if colluders > self.n_nodes {
            return Err(format!(
                "colluder_clique_sizes sum to {colluders}, more than n_nodes {}",
                self.n_nodes
            ));
        }
        if self.colluder_clique_sizes.contains(&0) {
            return Err("colluder_clique_sizes entries must be positive".into());
        }
        if !(self.judge_noise >= 0.0 && self.judge_noise.is_finite()) {
            return Err(format!("judge_noise must be non-negative (got {})", self.judge_noise));
        }
        if !(self.perception_sd >= 0.0 && self.perception_sd.is_finite()) {
            return Err(format!("perception_sd must be non-negative (got {})", self.perception_sd));
        }
        if !(self.judge_noise_spread >= 0.0) {
            return Err("judge_noise_spread must be non-negative".into());
        }
        if !(self.quality.node_sd >= 0.0 && self.quality.response_sd >= 0.0) {
            return Err("quality spreads must be non-negative".into());
        }
        if self.comparisons_per_judge == Some(0) {
            return Err("comparisons_per_judge must be positive".into());
        }
        Ok(())
    }

    fn byzantine_count(&self) -> usize {
        let honest_pool = self.n_nodes - self.colluder_clique_sizes.iter().sum::<usize>();
        ((self.byzantine_fraction * self.n_nodes as f64).round() as usize).min(honest_pool)
    }
}

/// Everything a simulation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub swarm: SwarmConfig,
    pub fit: FitConfig,
    pub reputation: ReputationParams,
    pub sybil: SybilParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            swarm: SwarmConfig::default(),
            fit: FitConfig {
                solver: Solver::Newton,
                ..FitConfig::default()
            },
            reputation: ReputationParams::default(),
            sybil: SybilParams::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), String> {
        self.swarm.validate().map_err(|e| format!("swarm: {e}"))?;
        self.fit.validate().map_err(|e| format!("fit: {e}"))?;
        self.reputation.validate().map_err(|e| format!("reputation: {e}"))?;
        self.sybil
            .validate(self.swarm.n_nodes)
            .map_err(|e| format!("sybil: {e}"))?;
        Ok(())
    }
}

/// Key for an independent ChaCha stream: `SHA-256(tag || master || a || b)`.
pub fn stream_seed(master: u64, tag: &str, a: u64, b: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(master.to_le_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    h.finalize().into()
}

fn rng_for(master: u64, tag: &str, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_seed(master, tag, a, b))
}

/// Builds the node population for a configuration.
pub fn build_profiles(config: &SwarmConfig, reputation: &ReputationParams) -> Vec<NodeProfile> {
    let n = config.n_nodes;
    let mut rng = rng_for(config.master_seed, "profiles", 0, 0);
    let colluders: usize = config.colluder_clique_sizes.iter().sum();
    let pool = n - colluders;
    let mut order: Vec<usize> = (0..pool).collect();
    order.shuffle(&mut rng);
    let n_byz = config.byzantine_count();
    let n_adv = (config.adversarial_share * n_byz as f64).round() as usize;
    let mut strategies = vec![Strategy::Honest; n];
    for (rank, &id) in order.iter().take(n_byz).enumerate() {
        strategies[id] = if rank < n_adv {
            Strategy::ByzantineAdversarial
        } else {
            Strategy::ByzantineRandom
        };
    }
    let mut next = pool;
    for (clique, &size) in config.colluder_clique_sizes.iter().enumerate() {
        for _ in 0..size {
            strategies[next] = Strategy::Colluder { clique };
            next += 1;
        }
    }
    (0..n)
        .map(|id| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let zn: f64 = StandardNormal.sample(&mut rng);
            NodeProfile {
                id,
                gen_quality: config.quality.node_mean + config.quality.node_sd * z,
                judge_noise: config.judge_noise * (config.judge_noise_spread * zn).exp(),
                strategy: strategies[id],
                embeddings: Vec::new(),
                reputation: ReputationState::initial(reputation),
                status: NodeStatus::Active,
                history: Vec::new(),
            }
        })
        .collect()
}

/// One response quality per profile: `gen_quality + response_sd * z`.
pub fn generate_responses(
    profiles: &[&NodeProfile],
    quality: &QualityModel,
    round_seed: [u8; 32],
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::from_seed(round_seed);
    profiles
        .iter()
        .map(|p| {
            let z: f64 = match quality.response_dist {
                ResponseDist::Normal => StandardNormal.sample(&mut rng),
                ResponseDist::Exponential => Distribution::<f64>::sample(&Exp1, &mut rng) - 1.0,
            };
            p.gen_quality + quality.response_sd * z
        })
        .collect()
}

/// What a judge sees of one response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseView {
    pub quality: f64,
    pub clique: Option<usize>,
}

fn preference_probability(diff: f64, noise: f64, model: NoiseModel) -> f64 {
    if noise == 0.0 {
        return if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    match model {
        NoiseModel::Logistic => bt::logistic(diff / noise),
        NoiseModel::Gaussian => 0.5 * libm::erfc(-diff / (noise * std::f64::consts::SQRT_2)),
    }
}

/// Returns `true` when the judge prefers `a`. `coin` is uniform in `[0, 1)`.
pub fn judge_pair(
    judge: &NodeProfile,
    a: ResponseView,
    b: ResponseView,
    coin: f64,
    model: NoiseModel,
) -> bool {
    let honest = |coin: f64| coin < preference_probability(a.quality - b.quality, judge.judge_noise, model);
    match judge.strategy {
        Strategy::Honest => honest(coin),
        Strategy::ByzantineRandom => coin < 0.5,
        Strategy::ByzantineAdversarial => {
            coin < preference_probability(b.quality - a.quality, judge.judge_noise, model)
        }
        Strategy::Colluder { clique } => {
            match (a.clique == Some(clique), b.clique == Some(clique)) {
                (true, false) => true,
                (false, true) => false,
                _ => honest(coin),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    /// Node id of the judge.
    pub judge: usize,
    /// Response indices within the round.
    pub winner: usize,
    pub loser: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u64,
    /// Author node id of each response.
    pub authors: Vec<usize>,
    pub response_qualities: Vec<f64>,
    pub fitted_scores: QualityScores,
    pub fit: FitDiagnostics,
    pub winner: usize,
    pub correct: bool,
    pub majority_winner: usize,
    pub majority_correct: bool,
    pub round_weight: f64,
    pub tau_collusion: f64,
    pub per_judge_agreement: Vec<(usize, Option<f64>)>,
    /// Combined reputation of each participant when the round started.
    pub reputation_before: Vec<(usize, f64)>,
    pub slashed: Vec<usize>,
    pub requalified: Vec<usize>,
    pub comparisons: Vec<ComparisonRecord>,
}

impl RoundOutcome {
    pub fn winner_author(&self) -> usize {
        self.authors[self.winner]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RoundReport {
    Played(Box<RoundOutcome>),
    Skipped {
        round: u64,
        n_responses: usize,
        reason: String,
    },
}

/// Compact per-round record for JSON-lines traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u64,
    pub skipped: bool,
    pub n_responses: usize,
    pub winner_author: Option<usize>,
    pub correct: Option<bool>,
    pub majority_correct: Option<bool>,
    pub round_weight: Option<f64>,
    pub fit_iterations: Option<usize>,
    pub slashed: Vec<usize>,
    pub requalified: Vec<usize>,
}

impl From<&RoundReport> for RoundTrace {
    fn from(r: &RoundReport) -> Self {
        match r {
            RoundReport::Played(o) => Self {
                round: o.round,
                skipped: false,
                n_responses: o.authors.len(),
                winner_author: Some(o.winner_author()),
                correct: Some(o.correct),
                majority_correct: Some(o.majority_correct),
                round_weight: Some(o.round_weight),
                fit_iterations: Some(o.fit.iterations),
                slashed: o.slashed.clone(),
                requalified: o.requalified.clone(),
            },
            RoundReport::Skipped { round, n_responses, .. } => Self {
                round: *round,
                skipped: true,
                n_responses: *n_responses,
                winner_author: None,
                correct: None,
                majority_correct: None,
                round_weight: None,
                fit_iterations: None,
                slashed: Vec::new(),
                requalified: Vec::new(),
            },
        }
    }
}

/// Settings for the per-judge fits behind the collusion statistic; only the
/// order of the result matters.
fn implied_fit_config(base: &FitConfig) -> FitConfig {
    FitConfig {
        tol: base.tol.max(1e-6),
        max_iters: 100,
        ..*base
    }
}

/// A stateful simulation. Rounds must be run in increasing order.
#[derive(Debug, Clone)]
pub struct Swarm {
    params: SimParams,
    profiles: Vec<NodeProfile>,
    tracker: CollusionTracker,
    participation: Vec<usize>,
}

impl Swarm {
    pub fn new(params: SimParams) -> Result<Self, SimError> {
        params.validate().map_err(SimError::Config)?;
        let profiles = build_profiles(&params.swarm, &params.reputation);
        let tracker = CollusionTracker::new(params.swarm.n_nodes);
        Ok(Self {
            params,
            profiles,
            tracker,
            participation: Vec::new(),
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn profiles(&self) -> &[NodeProfile] {
        &self.profiles
    }

    pub fn profiles_mut(&mut self) -> &mut [NodeProfile] {
        &mut self.profiles
    }

    pub fn tracker(&self) -> &CollusionTracker {
        &self.tracker
    }

    /// Reputation snapshot for every node, tagged with the given round.
    pub fn trajectory_rows(&self, round: u64) -> Vec<TrajectoryRow> {
        self.profiles
            .iter()
            .map(|p| TrajectoryRow {
                round,
                node_id: p.id,
                ranking: p.reputation.ranking,
                generation: p.reputation.generation,
                combined: p.reputation.combined,
                slashed: matches!(p.status, NodeStatus::Slashed { .. }),
            })
            .collect()
    }

    fn requalify(&mut self, round: u64) -> Vec<usize> {
        let q = self.params.swarm.qualification;
        let wait = self.params.swarm.requalify_after;
        let master = self.params.swarm.master_seed;
        let mut back = Vec::new();
        for p in &mut self.profiles {
            let NodeStatus::Slashed { since } = p.status else { continue };
            if round < since + wait {
                continue;
            }
            let mut rng = rng_for(master, "qualify", round, p.id as u64);
            let results: Vec<TestResult> = (0..q.n_tests)
                .map(|_| TestResult {
                    correct: rng.random::<f64>() < q.test_accuracy,
                    cost: rng.random_range(1..=3) as f64,
                })
                .collect();
            if sybil::capability_check(&results, q.tau).passed {
                p.status = NodeStatus::Active;
                p.reputation = ReputationState::initial(&self.params.reputation);
                back.push(p.id);
            } else {
                p.status = NodeStatus::Slashed { since: round };
            }
        }
        back
    }

    pub fn run_round(&mut self, round: u64) -> Result<RoundReport, SimError> {
        let cfg = self.params.swarm.clone();
        let rep_params = self.params.reputation;
        let master = cfg.master_seed;
        let weighting = cfg.reputation_weighting;

        let requalified = if weighting { self.requalify(round) } else { Vec::new() };

        let authors: Vec<usize> = self
            .profiles
            .iter()
            .filter(|p| !weighting || p.status == NodeStatus::Active)
            .map(|p| p.id)
            .collect();
        let n = authors.len();
        if n < 2 {
            self.decay_inactive(&authors);
            return Ok(RoundReport::Skipped {
                round,
                n_responses: n,
                reason: format!("{n} response(s); at least two are needed"),
            });
        }

        let qualities = {
            let views: Vec<&NodeProfile> = authors.iter().map(|&id| &self.profiles[id]).collect();
            generate_responses(&views, &cfg.quality, stream_seed(master, "responses", round, 0))
        };
        let views: Vec<ResponseView> = authors
            .iter()
            .zip(&qualities)
            .map(|(&id, &quality)| ResponseView {
                quality,
                clique: self.profiles[id].clique(),
            })
            .collect();

        let n_bar = if self.participation.is_empty() {
            n as f64
        } else {
            self.participation.iter().sum::<usize>() as f64 / self.participation.len() as f64
        };
        let round_weight = sybil::round_weight(n, n_bar, self.params.sybil.gamma);
        let tau = self.params.sybil.tau_for(n);

        let reputation_before: Vec<(usize, f64)> = authors
            .iter()
            .map(|&id| (id, self.profiles[id].reputation.combined))
            .collect();

        // Assignments and judging.
        let mut state_hash = [0u8; 32];
        state_hash.copy_from_slice(&stream_seed(master, "state", round, 0));
        let cpj = cfg
            .comparisons_per_judge
            .unwrap_or_else(|| scheduler::default_comparisons_per_judge(n));
        let judges: Vec<usize> = if cfg.single_judge {
            (0..1).collect()
        } else {
            (0..n).collect()
        };
        let mut comparisons = Vec::with_capacity(judges.len() * cpj);
        let mut per_judge: Vec<(usize, Vec<(usize, usize)>)> = Vec::with_capacity(judges.len());
        for &slot in &judges {
            let judge_id = authors[slot];
            let judge = &self.profiles[judge_id];
            let seed = scheduler::derive_seed(&state_hash, judge.node_id().as_bytes())
                .map_err(|e| SimError::Internal(e.to_string()))?;
            let own: BTreeSet<usize> = [slot].into();
            let assignment = match scheduler::sample_assignment(&seed, n, &own, cpj) {
                Ok(a) => a,
                // Two responses leave a judge nothing but its own.
                Err(scheduler::ScheduleError::EmptyAssignment) => {
                    per_judge.push((judge_id, Vec::new()));
                    continue;
                }
                Err(e) => return Err(SimError::Internal(e.to_string())),
            };
            let mut coins = rng_for(master, "judge", round, judge_id as u64);
            let perceived: Vec<ResponseView> = if cfg.perception_sd > 0.0 {
                let mut eye = rng_for(master, "perceive", round, judge_id as u64);
                views
                    .iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut eye);
                        ResponseView {
                            quality: v.quality + cfg.perception_sd * z,
                            ..*v
                        }
                    })
                    .collect()
            } else {
                views.clone()
            };
            let mut votes = Vec::with_capacity(assignment.count());
            for Pair { first, second } in assignment.pairs {
                let coin: f64 = coins.random();
                let (w, l) = if judge_pair(judge, perceived[first], perceived[second], coin, cfg.noise_model) {
                    (first, second)
                } else {
                    (second, first)
                };
                votes.push((w, l));
            }
            per_judge.push((judge_id, votes));
        }

        // Weighted tally.
        let mut tally = ComparisonTally::new(n);
        let mut total_weight = 0.0;
        for (judge_id, votes) in &per_judge {
            let base = if weighting {
                self.profiles[*judge_id].reputation.combined
            } else {
                1.0
            };
            for &(w, l) in votes {
                let mut weight = base;
                if cfg.collusion_defense {
                    if let Some(c) = self.tracker.established_c(*judge_id, authors[w], self.params.sybil.min_co_rounds) {
                        weight = sybil::collusion_adjusted_weight(weight, c, self.params.sybil.lambda, tau);
                    }
                }
                tally
                    .record(w, l, weight)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
                total_weight += weight;
                comparisons.push(ComparisonRecord {
                    judge: *judge_id,
                    winner: w,
                    loser: l,
                    weight,
                });
            }
        }
        let use_weights = weighting && total_weight > 0.0;
        let (scores, fit_diag) = match bt::fit(&tally, &self.params.fit, use_weights) {
            Ok(r) => r,
            Err(bt::BtError::NoComparisons) => (
                QualityScores::uniform(n),
                FitDiagnostics {
                    iterations: 0,
                    gradient_norm: 0.0,
                    converged: true,
                    objective: 0.0,
                },
            ),
            Err(e) => return Err(SimError::Internal(e.to_string())),
        };
        let ranking = bt::rank_from_scores(&scores);
        let winner = ranking[0];
        let best = bt::rank_by(&qualities)[0];

        // Plurality over each judge's own top pick.
        let mut votes_for = vec![0usize; n];
        for (_, votes) in per_judge.iter().filter(|(_, v)| !v.is_empty()) {
            let mut wins = vec![0usize; n];
            for &(w, _) in votes {
                wins[w] += 1;
            }
            let top = (0..n).max_by(|&a, &b| wins[a].cmp(&wins[b]).then(b.cmp(&a))).unwrap();
            votes_for[top] += 1;
        }
        let majority_winner = (0..n)
            .max_by(|&a, &b| votes_for[a].cmp(&votes_for[b]).then(b.cmp(&a)))
            .unwrap();

        // Reputation.
        let theta = scores.log_scores();
        let mut per_judge_agreement = Vec::with_capacity(per_judge.len());
        let mut agreement_of = vec![None; self.params.swarm.n_nodes];
        for (judge_id, votes) in &per_judge {
            let agreements: Vec<bool> = votes.iter().map(|&(w, l)| theta[w] > theta[l]).collect();
            let frac = reputation::agreement_fraction(&agreements);
            agreement_of[*judge_id] = Some(agreements);
            per_judge_agreement.push((*judge_id, frac));
        }
        let mut slashed = Vec::new();
        for (slot, &id) in authors.iter().enumerate() {
            let p = &mut self.profiles[id];
            let won = slot == winner;
            let agreements = agreement_of[id].take().unwrap_or_default();
            let frac = reputation::agreement_fraction(&agreements);
            let mut s = reputation::update_ranking_ema_weighted(&p.reputation, &agreements, round_weight, &rep_params);
            s = reputation::update_generation_ema_weighted(&s, won, round_weight, &rep_params);
            let perf = reputation::performance_signal(frac, won, &rep_params);
            s = reputation::apply_round_transition(&s, Performance::Active(perf), &rep_params);
            s.last_active_round = Some(round);
            if weighting {
                let (after, hit) = reputation::check_slash(&s, &rep_params);
                s = after;
                if hit {
                    p.status = NodeStatus::Slashed { since: round };
                    slashed.push(id);
                }
            }
            p.reputation = s;
            p.history.push(HistoryEntry {
                round,
                won,
                agreement: frac,
                combined: s.combined,
            });
        }
        self.decay_inactive(&authors);

        // Mutual support from each judge's own implied ranking.
        if cfg.collusion_defense || !cfg.colluder_clique_sizes.is_empty() {
            let implied_cfg = implied_fit_config(&self.params.fit);
            let half = n.div_ceil(2).min(n - 1);
            let mut top_half = Vec::with_capacity(per_judge.len());
            for (slot, (judge_id, votes)) in per_judge.iter().enumerate() {
                if votes.is_empty() {
                    continue;
                }
                let own_slot = judges[slot];
                let mut t = ComparisonTally::new(n);
                for &(w, l) in votes {
                    t.record(w, l, 1.0).map_err(|e| SimError::Internal(e.to_string()))?;
                }
                let order = match bt::fit_newton(&t, &implied_cfg, false) {
                    Ok((s, _)) => bt::rank_from_scores(&s),
                    Err(_) => (0..n).collect(),
                };
                let set: BTreeSet<usize> = order
                    .into_iter()
                    .filter(|&r| r != own_slot)
                    .take(half)
                    .map(|r| authors[r])
                    .collect();
                top_half.push((*judge_id, set));
            }
            self.tracker.update_support(&authors, &top_half);
        }
        self.participation.push(n);

        Ok(RoundReport::Played(Box::new(RoundOutcome {
            round,
            authors,
            correct: winner == best,
            majority_correct: majority_winner == best,
            response_qualities: qualities,
            fitted_scores: scores,
            fit: fit_diag,
            winner,
            majority_winner,
            round_weight,
            tau_collusion: tau,
            per_judge_agreement,
            reputation_before,
            slashed,
            requalified,
            comparisons,
        })))
    }

    fn decay_inactive(&mut self, active: &[usize]) {
        let rep_params = self.params.reputation;
        for p in &mut self.profiles {
            if !active.contains(&p.id) {
                p.reputation =
                    reputation::apply_round_transition(&p.reputation, Performance::Inactive, &rep_params);
            }
        }
    }

    /// Runs rounds `0..rounds` and hands every report to `sink`.
    pub fn run<F>(&mut self, mut sink: F) -> Result<(), SimError>
    where
        F: FnMut(&Self, RoundReport) -> Result<(), SimError>,
    {
        for round in 0..self.params.swarm.rounds {
            let report = self.run_round(round)?;
            sink(self, report)?;
        }
        Ok(())
    }
}
