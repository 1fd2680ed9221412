//! Deterministic comparison assignments.
//!
//! Every judge derives its own seed as `SHA-256(state_hash || node_id)` and
//! expands it into a counter-mode stream (`block_k = SHA-256(seed || k)`),
//! from which it draws unordered response pairs uniformly with replacement.
//! Pairs that touch one of the judge's own responses are redrawn.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("node id must not be empty")]
    EmptyNodeId,
    #[error("need at least two responses (got {0})")]
    TooFewResponses(usize),
    #[error("own response index {index} out of range for {n_responses} responses")]
    OwnIndexOutOfRange { index: usize, n_responses: usize },
    #[error("every pair touches one of the judge's own responses")]
    EmptyAssignment,
    #[error("seed collision between node ids {0:?} and {1:?}")]
    SeedCollision(String, String),
    #[error("malformed assignment record: {0}")]
    Parse(String),
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComparisonSeed {
    pub state_hash: [u8; 32],
    pub node_id: Vec<u8>,
    pub derived_seed: [u8; 32],
}

impl fmt::Debug for ComparisonSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonSeed")
            .field("node_id", &String::from_utf8_lossy(&self.node_id))
            .field("derived_seed", &hex(&self.derived_seed))
            .finish()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn derive_seed(state_hash: &[u8; 32], node_id: &[u8]) -> Result<ComparisonSeed, ScheduleError> {
    if node_id.is_empty() {
        return Err(ScheduleError::EmptyNodeId);
    }
    let mut h = Sha256::new();
    h.update(state_hash);
    h.update(node_id);
    Ok(ComparisonSeed {
        state_hash: *state_hash,
        node_id: node_id.to_vec(),
        derived_seed: h.finalize().into(),
    })
}

/// Derives seeds for a whole committee, rejecting duplicate derived seeds.
pub fn derive_seeds<'a, I>(state_hash: &[u8; 32], node_ids: I) -> Result<Vec<ComparisonSeed>, ScheduleError>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut seen: std::collections::HashMap<[u8; 32], Vec<u8>> = Default::default();
    let mut out = Vec::new();
    for id in node_ids {
        let seed = derive_seed(state_hash, id)?;
        if let Some(prev) = seen.insert(seed.derived_seed, id.to_vec()) {
            return Err(ScheduleError::SeedCollision(
                String::from_utf8_lossy(&prev).into_owned(),
                String::from_utf8_lossy(id).into_owned(),
            ));
        }
        out.push(seed);
    }
    Ok(out)
}

/// Counter-mode SHA-256 byte stream.
pub struct HashStream {
    key: [u8; 32],
    counter: u64,
    block: [u8; 32],
    offset: usize,
}

impl HashStream {
    pub fn new(key: [u8; 32]) -> Self {
        Self {
            key,
            counter: 0,
            block: [0; 32],
            offset: 32,
        }
    }

    fn refill(&mut self) {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update(self.counter.to_be_bytes());
        self.block = h.finalize().into();
        self.counter += 1;
        self.offset = 0;
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.offset + 8 > 32 {
            self.refill();
        }
        let mut b = [0u8; 8];
        b.copy_from_slice(&self.block[self.offset..self.offset + 8]);
        self.offset += 8;
        u64::from_le_bytes(b)
    }

    /// Uniform integer in `[0, bound)` by rejection of the biased tail.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// One judged pair in presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub first: usize,
    pub second: usize,
}

impl Pair {
    pub fn canonical(&self) -> (usize, usize) {
        (self.first.min(self.second), self.first.max(self.second))
    }

    pub fn touches(&self, index: usize) -> bool {
        self.first == index || self.second == index
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub judge: String,
    pub pairs: Vec<Pair>,
}

impl Assignment {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    /// `judge_id<TAB>i,j<TAB>i,j...`
    pub fn to_record(&self) -> String {
        let mut s = self.judge.clone();
        for p in &self.pairs {
            s.push('\t');
            s.push_str(&format!("{},{}", p.first, p.second));
        }
        s
    }

    pub fn parse_record(line: &str) -> Result<Self, ScheduleError> {
        let mut fields = line.split('\t');
        let judge = fields.next().filter(|j| !j.is_empty()).ok_or_else(|| {
            ScheduleError::Parse("missing judge id".into())
        })?;
        let mut pairs = Vec::new();
        for (k, field) in fields.enumerate() {
            let (a, b) = field
                .split_once(',')
                .ok_or_else(|| ScheduleError::Parse(format!("pair {k}: expected i,j")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| ScheduleError::Parse(format!("pair {k}: {e}")))
            };
            pairs.push(Pair {
                first: parse(a)?,
                second: parse(b)?,
            });
        }
        Ok(Self {
            judge: judge.to_string(),
            pairs,
        })
    }
}

/// Default number of comparisons a judge makes over `n_responses` responses.
pub fn default_comparisons_per_judge(n_responses: usize) -> usize {
    3 * n_responses
}

fn unrank_pair(n: usize, mut k: u64) -> (usize, usize) {
    // Row i holds the pairs (i, i+1..n).
    let mut i = 0usize;
    loop {
        let row = (n - 1 - i) as u64;
        if k < row {
            return (i, i + 1 + k as usize);
        }
        k -= row;
        i += 1;
    }
}

pub fn sample_assignment(
    seed: &ComparisonSeed,
    n_responses: usize,
    own_indices: &BTreeSet<usize>,
    comparisons_per_judge: usize,
) -> Result<Assignment, ScheduleError> {
    if n_responses < 2 {
        return Err(ScheduleError::TooFewResponses(n_responses));
    }
    if let Some(&index) = own_indices.iter().find(|&&i| i >= n_responses) {
        return Err(ScheduleError::OwnIndexOutOfRange { index, n_responses });
    }
    if n_responses - own_indices.len() < 2 {
        return Err(ScheduleError::EmptyAssignment);
    }
    let total_pairs = (n_responses * (n_responses - 1) / 2) as u64;
    let mut stream = HashStream::new(seed.derived_seed);
    let mut pairs = Vec::with_capacity(comparisons_per_judge);
    while pairs.len() < comparisons_per_judge {
        let (i, j) = unrank_pair(n_responses, stream.below(total_pairs));
        if own_indices.contains(&i) || own_indices.contains(&j) {
            continue;
        }
        let pair = if stream.next_u64() & 1 == 0 {
            Pair { first: i, second: j }
        } else {
            Pair { first: j, second: i }
        };
        pairs.push(pair);
    }
    Ok(Assignment {
        judge: String::from_utf8_lossy(&seed.node_id).into_owned(),
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    /// A submitted pair includes one of the judge's own responses.
    SelfComparison { position: usize },
    /// The pair list differs from the one the seed dictates.
    Mismatch,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

/// Re-derives the assignment from `seed` and compares it with `assignment`.
pub fn verify_assignment(
    assignment: &Assignment,
    seed: &ComparisonSeed,
    n_responses: usize,
    own_indices: &BTreeSet<usize>,
) -> Verdict {
    if let Some(position) = assignment
        .pairs
        .iter()
        .position(|p| own_indices.iter().any(|&o| p.touches(o)))
    {
        return Verdict::SelfComparison { position };
    }
    match sample_assignment(seed, n_responses, own_indices, assignment.count()) {
        Ok(expected) if expected.pairs == assignment.pairs => Verdict::Valid,
        _ => Verdict::Mismatch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMissProbability {
    pub exact: f64,
    /// `exp(-6M/(N-1))`, which assumes `3N` draws per judge.
    pub approximation: f64,
    pub total_draws: u64,
}

pub fn pair_miss_probability(
    n_responses: usize,
    n_judges: usize,
    comparisons_per_judge: usize,
) -> PairMissProbability {
    let n = n_responses as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let total_draws = (n_judges * comparisons_per_judge) as u64;
    let exact = if total_draws == 0 {
        1.0
    } else {
        (total_draws as f64 * (-1.0 / pairs).ln_1p()).exp()
    };
    let approximation = (-6.0 * n_judges as f64 / (n - 1.0)).exp();
    PairMissProbability {
        exact,
        approximation,
        total_draws,
    }
}
