//! Semantic partition tree over node capability embeddings.
//!
//! Regions split at the median of their maximum-variance dimension until
//! every leaf satisfies the member and load caps. Queries descend the tree
//! (left when strictly below the split value) to a leaf sub-mesh.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("zero or non-finite vector for node {owner}")]
    ZeroVector { owner: usize },
    #[error("empty point set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid mesh parameter: {0}")]
    InvalidParams(String),
    #[error("malformed sub-mesh id at byte {position}: {message}")]
    Parse { position: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticPoint {
    pub owner: usize,
    pub vector: Vec<f64>,
    pub norm: f64,
}

impl SemanticPoint {
    pub fn new(owner: usize, vector: Vec<f64>) -> Result<Self, MeshError> {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(MeshError::ZeroVector { owner });
        }
        Ok(Self { owner, vector, norm })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn cosine(&self, other: &SemanticPoint) -> f64 {
        let dot: f64 = self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

/// One minus the largest cosine similarity between any point of `a` and any
/// point of `b`. Ranges over `[0, 2]`.
pub fn semantic_distance(a: &[SemanticPoint], b: &[SemanticPoint]) -> Result<f64, MeshError> {
    if a.is_empty() || b.is_empty() {
        return Err(MeshError::EmptySet);
    }
    let mut best = f64::NEG_INFINITY;
    for x in a {
        for y in b {
            if x.dim() != y.dim() {
                return Err(MeshError::DimensionMismatch {
                    expected: x.dim(),
                    got: y.dim(),
                });
            }
            best = best.max(x.cosine(y));
        }
    }
    Ok(1.0 - best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

/// Path from the root to a leaf: `(side, split dimension)` per step.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubMeshId {
    pub path: Vec<(Side, usize)>,
}

impl SubMeshId {
    pub fn depth(&self) -> usize {
        self.path.len()
    }

    fn child(&self, side: Side, dim: usize) -> Self {
        let mut path = self.path.clone();
        path.push((side, dim));
        Self { path }
    }
}

impl fmt::Display for SubMeshId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (side, dim)) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{side:?}-{dim}")?;
        }
        Ok(())
    }
}

impl FromStr for SubMeshId {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut path = Vec::new();
        if s.is_empty() {
            return Ok(Self { path });
        }
        let mut offset = 0;
        for step in s.split('|') {
            let err = |at: usize, message: &str| MeshError::Parse {
                position: offset + at,
                message: message.to_string(),
            };
            let side = match step.as_bytes().first() {
                Some(b'L') => Side::L,
                Some(b'R') => Side::R,
                _ => return Err(err(0, "expected 'L' or 'R'")),
            };
            if step.as_bytes().get(1) != Some(&b'-') {
                return Err(err(1, "expected '-'"));
            }
            let digits = &step[2..];
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err(2, "expected a dimension index"));
            }
            if digits.len() > 1 && digits.starts_with('0') {
                return Err(err(2, "leading zero in dimension index"));
            }
            let dim = digits
                .parse()
                .map_err(|_| err(2, "dimension index out of range"))?;
            path.push((side, dim));
            offset += step.len() + 1;
        }
        Ok(Self { path })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshParams {
    /// Maximum number of nodes per leaf.
    pub beta_cap: usize,
    /// Maximum summed request rate per leaf; `None` disables the load cap.
    pub lambda_split: Option<f64>,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self {
            beta_cap: 8,
            lambda_split: None,
        }
    }
}

impl MeshParams {
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.beta_cap == 0 {
            return Err(MeshError::InvalidParams("beta_cap must be at least 1".into()));
        }
        if let Some(l) = self.lambda_split {
            if !(l >= 0.0) {
                return Err(MeshError::InvalidParams("lambda_split must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegionKind {
    Internal {
        dim: usize,
        /// Points strictly below go left.
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        id: SubMeshId,
        /// Indices into the tree's point list.
        points: Vec<usize>,
        members: BTreeSet<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Closed interval per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub depth: usize,
    pub kind: RegionKind,
}

impl Region {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, RegionKind::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub points: Vec<SemanticPoint>,
    /// Arena of regions; index 0 is the root.
    pub regions: Vec<Region>,
    pub warnings: Vec<String>,
}

fn tie_goes_left(owner: usize, id: &SubMeshId) -> bool {
    let mut h = Sha256::new();
    h.update(b"mesh-tie");
    h.update((owner as u64).to_le_bytes());
    h.update(id.to_string().as_bytes());
    h.finalize()[0] & 1 == 0
}

fn members_of(points: &[SemanticPoint], idx: &[usize]) -> BTreeSet<usize> {
    idx.iter().map(|&i| points[i].owner).collect()
}

fn load_of(members: &BTreeSet<usize>, loads: &BTreeMap<usize, f64>) -> f64 {
    members.iter().map(|m| loads.get(m).copied().unwrap_or(0.0)).sum()
}

/// Builds the partition over `points`. `loads` maps node ids to request
/// rates; missing nodes carry no load.
pub fn build_partition(
    points: Vec<SemanticPoint>,
    params: &MeshParams,
    loads: &BTreeMap<usize, f64>,
) -> Result<PartitionTree, MeshError> {
    params.validate()?;
    let Some(first) = points.first() else {
        return Err(MeshError::EmptySet);
    };
    let d = first.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != d) {
        return Err(MeshError::DimensionMismatch { expected: d, got: p.dim() });
    }
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for p in &points {
        for (b, &x) in bounds.iter_mut().zip(&p.vector) {
            b.0 = b.0.min(x);
            b.1 = b.1.max(x);
        }
    }
    let mut tree = PartitionTree {
        points,
        regions: Vec::new(),
        warnings: Vec::new(),
    };
    let all: Vec<usize> = (0..tree.points.len()).collect();
    let mut stack = vec![(0usize, all, bounds, SubMeshId::default())];
    tree.regions.push(Region {
        bounds: Vec::new(),
        depth: 0,
        kind: RegionKind::Leaf {
            id: SubMeshId::default(),
            points: Vec::new(),
            members: BTreeSet::new(),
        },
    });
    while let Some((slot, idx, bounds, id)) = stack.pop() {
        let members = members_of(&tree.points, &idx);
        let over_members = members.len() > params.beta_cap;
        let over_load = params
            .lambda_split
            .is_some_and(|cap| load_of(&members, loads) > cap);
        let split = if over_members || over_load {
            choose_split(&tree.points, &idx, &id)
        } else {
            None
        };
        let depth = id.depth();
        let Some((dim, value, left_idx, right_idx)) = split else {
            if over_members || over_load {
                tree.warnings.push(format!(
                    "leaf '{id}' holds {} nodes but its points cannot be separated",
                    members.len()
                ));
            }
            tree.regions[slot] = Region {
                bounds,
                depth,
                kind: RegionKind::Leaf { id, points: idx, members },
            };
            continue;
        };
        let left = tree.regions.len();
        let right = left + 1;
        for _ in 0..2 {
            tree.regions.push(tree.regions[0].clone());
        }
        let mut lb = bounds.clone();
        lb[dim].1 = value;
        let mut rb = bounds.clone();
        rb[dim].0 = value;
        tree.regions[slot] = Region {
            bounds,
            depth,
            kind: RegionKind::Internal { dim, split: value, left, right },
        };
        stack.push((right, right_idx, rb, id.child(Side::R, dim)));
        stack.push((left, left_idx, lb, id.child(Side::L, dim)));
    }
    Ok(tree)
}

/// Median split on the maximum-variance dimension, or `None` when all points
/// coincide. Points on the median all go to one side, picked by a coin that
/// depends on the lowest tied owner id and the region path; a left choice
/// moves the split value just above the median so that routing stays
/// "left iff strictly below".
fn choose_split(
    points: &[SemanticPoint],
    idx: &[usize],
    id: &SubMeshId,
) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
    let d = points[idx[0]].dim();
    let n = idx.len() as f64;
    let mut best = (0usize, 0.0f64);
    for k in 0..d {
        let mean = idx.iter().map(|&i| points[i].vector[k]).sum::<f64>() / n;
        let var = idx
            .iter()
            .map(|&i| (points[i].vector[k] - mean).powi(2))
            .sum::<f64>()
            / n;
        if var > best.1 {
            best = (k, var);
        }
    }
    if best.1 <= 0.0 {
        return None;
    }
    let dim = best.0;
    let mut values: Vec<f64> = idx.iter().map(|&i| points[i].vector[dim]).collect();
    values.sort_by(f64::total_cmp);
    let m = values.len();
    let median = if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    };
    let (lo, hi) = (values[0], values[m - 1]);
    let tied: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| points[i].vector[dim] == median)
        .collect();
    let split = if tied.is_empty() {
        median
    } else {
        let owner = tied.iter().map(|&i| points[i].owner).min().unwrap();
        let mut left = tie_goes_left(owner, id);
        if median == lo {
            left = true;
        } else if median == hi {
            left = false;
        }
        if left {
            median.next_up()
        } else {
            median
        }
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| points[i].vector[dim] < split);
    Some((dim, split, l, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub id: SubMeshId,
    pub members: Vec<usize>,
    /// Internal regions visited on the way down.
    pub steps: usize,
    pub region: usize,
}

impl PartitionTree {
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Region)> {
        self.regions.iter().enumerate().filter(|(_, r)| r.is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.regions.iter().map(|r| r.depth).max().unwrap_or(0)
    }

    pub fn route_query(&self, query: &[f64]) -> Result<RouteResult, MeshError> {
        if query.len() != self.dim() {
            return Err(MeshError::DimensionMismatch {
                expected: self.dim(),
                got: query.len(),
            });
        }
        let mut at = 0;
        let mut steps = 0;
        loop {
            match &self.regions[at].kind {
                RegionKind::Internal { dim, split, left, right } => {
                    at = if query[*dim] < *split { *left } else { *right };
                    steps += 1;
                }
                RegionKind::Leaf { id, members, .. } => {
                    debug_assert_eq!(steps, id.depth());
                    return Ok(RouteResult {
                        id: id.clone(),
                        members: members.iter().copied().collect(),
                        steps,
                        region: at,
                    });
                }
            }
        }
    }

    /// One line per leaf: `id<TAB>members<TAB>bounds`, members comma-separated
    /// and bounds as `lo:hi` per dimension separated by spaces. The root leaf
    /// is written as `-`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (_, r) in self.leaves() {
            let RegionKind::Leaf { id, members, .. } = &r.kind else { unreachable!() };
            let id = id.to_string();
            let members: Vec<String> = members.iter().map(|m| m.to_string()).collect();
            let bounds: Vec<String> = r.bounds.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                if id.is_empty() { "-" } else { &id },
                members.join(","),
                bounds.join(" ")
            ));
        }
        out
    }
}

/// True iff the summed request rate of the leaf's members exceeds the cap.
pub fn check_split_trigger(region: &Region, rates: &BTreeMap<usize, f64>, lambda_split: f64) -> bool {
    match &region.kind {
        RegionKind::Leaf { members, .. } => load_of(members, rates) > lambda_split,
        RegionKind::Internal { .. } => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageState {
    pub radius: f64,
    pub bandwidth_limit: f64,
    /// Fraction of the bandwidth limit below which the radius grows.
    pub safety_margin: f64,
    /// Multiplicative adjustment per update.
    pub step: f64,
}

impl CoverageState {
    pub fn new(radius: f64, bandwidth_limit: f64, safety_margin: f64, step: f64) -> Result<Self, MeshError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MeshError::InvalidParams("radius must be positive".into()));
        }
        if !(bandwidth_limit >= 0.0) {
            return Err(MeshError::InvalidParams("bandwidth_limit must be non-negative".into()));
        }
        if !(safety_margin > 0.0 && safety_margin < 1.0) {
            return Err(MeshError::InvalidParams("safety_margin must lie in (0, 1)".into()));
        }
        if !(step > 0.0 && step < 1.0) {
            return Err(MeshError::InvalidParams("step must lie in (0, 1)".into()));
        }
        Ok(Self { radius, bandwidth_limit, safety_margin, step })
    }
}

pub fn update_coverage_radius(state: &CoverageState, observed_load_in_ball: f64) -> CoverageState {
    let factor = if observed_load_in_ball < state.safety_margin * state.bandwidth_limit {
        1.0 + state.step
    } else {
        1.0 - state.step
    };
    CoverageState {
        radius: state.radius * factor,
        ..*state
    }
}

/// Summed rate of the query points within Euclidean distance `radius` of
/// `center`.
pub fn ball_load(center: &[f64], radius: f64, queries: &[(Vec<f64>, f64)]) -> f64 {
    queries
        .iter()
        .filter(|(q, _)| {
            q.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= radius * radius
        })
        .map(|(_, rate)| rate)
        .sum()
}

/// `ceil(log2(n / beta_cap)) + 1`: the depth allowed for `n` points with
/// distinct coordinates and no load cap.
pub fn depth_bound(n: usize, beta_cap: usize) -> usize {
    let mut d = 0;
    while beta_cap.checked_shl(d as u32).is_some_and(|c| c < n) {
        d += 1;
    }
    d + 1
}

/// `n` standard-normal points in `dim` dimensions, one per owner id.
pub fn random_points(n: usize, dim: usize, seed: u64) -> Vec<SemanticPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|owner| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(p) = SemanticPoint::new(owner, v) {
                break p;
            }
        })
        .collect()
}
