//! C interface to the swarmlab library.
//!
//! Every fallible call returns a [`SwarmlabStatus`]; on failure a message is
//! kept per thread and read with [`swarmlab_last_error_message`]. Objects are
//! opaque handles created by a `*_new`/`*_build` call and released with the
//! matching `*_free`. Output arrays are caller-owned: functions that fill a
//! buffer take its capacity and return `SWARMLAB_BUFFER_TOO_SMALL` without
//! writing when it does not fit.
//!
//! Pointer arguments must be null or valid for the documented number of
//! elements; null is reported as `SWARMLAB_NULL_POINTER` rather than
//! dereferenced.

#![allow(non_camel_case_types, clippy::not_unsafe_ptr_arg_deref, clippy::too_many_arguments)]

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use swarmlab::bt::{self, BtError, ComparisonTally, FitConfig, Solver};
use swarmlab::config::{Experiment, ExperimentConfig};
use swarmlab::mesh::{self, MeshError, MeshParams, PartitionTree, SemanticPoint};
use swarmlab::scheduler::{self, ScheduleError};
use swarmlab::sim::{RoundReport, Swarm};
use swarmlab::sybil;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmlabStatus {
    SWARMLAB_OK = 0,
    SWARMLAB_NULL_POINTER = 1,
    SWARMLAB_INVALID_ARGUMENT = 2,
    SWARMLAB_NO_COMPARISONS = 3,
    SWARMLAB_NON_IDENTIFIABLE = 4,
    SWARMLAB_DIMENSION_MISMATCH = 5,
    SWARMLAB_BUFFER_TOO_SMALL = 6,
    SWARMLAB_EMPTY_ASSIGNMENT = 7,
    SWARMLAB_CONFIG = 8,
    SWARMLAB_INTERNAL = 9,
}

use SwarmlabStatus::*;

/// Bradley-Terry solver selector for [`swarmlab_tally_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmlabSolver {
    SWARMLAB_SOLVER_GRADIENT = 0,
    SWARMLAB_SOLVER_NEWTON = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmlabFitOptions {
    pub solver: SwarmlabSolver,
    pub l2_lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Non-zero fits the weighted tally instead of raw counts.
    pub use_weights: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmlabFitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
    pub converged: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmlabPairMiss {
    pub exact: f64,
    pub approximation: f64,
    pub total_draws: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmlabRoute {
    /// Internal regions visited, equal to the leaf depth.
    pub steps: usize,
    /// Arena index of the leaf region.
    pub region: usize,
    pub n_members: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmlabRound {
    /// Zero when the round had too few responses to judge.
    pub played: i32,
    pub n_responses: usize,
    pub winner_author: usize,
    pub correct: i32,
    pub majority_correct: i32,
    pub round_weight: f64,
    pub n_slashed: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmlabReputation {
    pub ranking: f64,
    pub generation: f64,
    pub combined: f64,
    /// Non-zero while the node is slashed and waiting to requalify.
    pub excluded: i32,
}

/// Pairwise comparison counts over a fixed item set.
pub struct SwarmlabTally(ComparisonTally);

/// Semantic partition tree.
pub struct SwarmlabMesh(PartitionTree);

/// A simulated swarm advancing one round per call.
pub struct SwarmlabSwarm {
    swarm: Swarm,
    next_round: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SwarmlabStatus, String);

impl Failure {
    fn new(status: SwarmlabStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<BtError> for Failure {
    fn from(e: BtError) -> Self {
        let status = match e {
            BtError::NoComparisons => SWARMLAB_NO_COMPARISONS,
            BtError::NonIdentifiable { .. } => SWARMLAB_NON_IDENTIFIABLE,
            BtError::DimensionMismatch { .. } => SWARMLAB_DIMENSION_MISMATCH,
            _ => SWARMLAB_INVALID_ARGUMENT,
        };
        Failure(status, e.to_string())
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        let status = match e {
            MeshError::DimensionMismatch { .. } => SWARMLAB_DIMENSION_MISMATCH,
            _ => SWARMLAB_INVALID_ARGUMENT,
        };
        Failure(status, e.to_string())
    }
}

impl From<ScheduleError> for Failure {
    fn from(e: ScheduleError) -> Self {
        let status = match e {
            ScheduleError::EmptyAssignment => SWARMLAB_EMPTY_ASSIGNMENT,
            _ => SWARMLAB_INVALID_ARGUMENT,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwarmlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SWARMLAB_OK
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SWARMLAB_INTERNAL
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees non-null pointers reference live objects.
    unsafe { p.as_ref() }.ok_or_else(|| Failure::new(SWARMLAB_NULL_POINTER, format!("{name} is null")))
}

fn non_null_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: as in `non_null`, plus exclusive access for the call.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(SWARMLAB_NULL_POINTER, format!("{name} is null")))
}

fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(SWARMLAB_NULL_POINTER, format!("{name} is null")));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn fill<T: Copy>(src: &[T], out: *mut T, cap: usize, name: &str) -> Result<(), Failure> {
    if src.len() > cap {
        return Err(Failure::new(
            SWARMLAB_BUFFER_TOO_SMALL,
            format!("{name} needs {} elements, capacity {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(Failure::new(SWARMLAB_NULL_POINTER, format!("{name} is null")));
        }
        // SAFETY: the caller guarantees `cap >= src.len()` writable elements.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    }
    Ok(())
}

fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    *non_null_mut(out, name)? = value;
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next swarmlab call on the same thread.
#[no_mangle]
pub extern "C" fn swarmlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn swarmlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn swarmlab_tally_new(n_items: usize, out: *mut *mut SwarmlabTally) -> SwarmlabStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = ptr::null_mut();
        if n_items < 2 {
            return Err(Failure::new(SWARMLAB_INVALID_ARGUMENT, "a tally needs at least two items"));
        }
        *out = Box::into_raw(Box::new(SwarmlabTally(ComparisonTally::new(n_items))));
        Ok(())
    })
}

/// # Safety
/// `tally` must come from [`swarmlab_tally_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn swarmlab_tally_free(tally: *mut SwarmlabTally) {
    if !tally.is_null() {
        drop(Box::from_raw(tally));
    }
}

#[no_mangle]
pub extern "C" fn swarmlab_tally_record(
    tally: *mut SwarmlabTally,
    winner: usize,
    loser: usize,
    weight: f64,
) -> SwarmlabStatus {
    guard(|| Ok(non_null_mut(tally, "tally")?.0.record(winner, loser, weight)?))
}

#[no_mangle]
pub extern "C" fn swarmlab_tally_n_items(tally: *const SwarmlabTally, out: *mut usize) -> SwarmlabStatus {
    guard(|| write(out, non_null(tally, "tally")?.0.n_items(), "out"))
}

/// Default options: gradient solver, `l2_lambda` 0.01, `tol` 1e-8,
/// 10000 iterations, raw counts.
#[no_mangle]
pub extern "C" fn swarmlab_fit_options_default() -> SwarmlabFitOptions {
    let d = FitConfig::default();
    SwarmlabFitOptions {
        solver: SwarmlabSolver::SWARMLAB_SOLVER_GRADIENT,
        l2_lambda: d.l2_lambda,
        tol: d.tol,
        max_iters: d.max_iters,
        use_weights: 0,
    }
}

/// Fits log-scores (gauge: they sum to zero) into `theta`, which must hold
/// `n_items` values. `options` may be null for the defaults; `diagnostics`
/// may be null.
#[no_mangle]
pub extern "C" fn swarmlab_tally_fit(
    tally: *const SwarmlabTally,
    options: *const SwarmlabFitOptions,
    theta: *mut f64,
    capacity: usize,
    diagnostics: *mut SwarmlabFitDiagnostics,
) -> SwarmlabStatus {
    guard(|| {
        let tally = &non_null(tally, "tally")?.0;
        // SAFETY: null selects the defaults; otherwise the caller passes a live struct.
        let opts = unsafe { options.as_ref() }.copied().unwrap_or_else(|| swarmlab_fit_options_default());
        let cfg = FitConfig {
            solver: match opts.solver {
                SwarmlabSolver::SWARMLAB_SOLVER_GRADIENT => Solver::Gradient,
                SwarmlabSolver::SWARMLAB_SOLVER_NEWTON => Solver::Newton,
            },
            l2_lambda: opts.l2_lambda,
            tol: opts.tol,
            max_iters: opts.max_iters,
            ..FitConfig::default()
        };
        let (scores, diag) = bt::fit(tally, &cfg, opts.use_weights != 0)?;
        fill(scores.log_scores(), theta, capacity, "theta")?;
        // SAFETY: optional output.
        if let Some(d) = unsafe { diagnostics.as_mut() } {
            *d = SwarmlabFitDiagnostics {
                iterations: diag.iterations,
                gradient_norm: diag.gradient_norm,
                objective: diag.objective,
                converged: diag.converged as i32,
            };
        }
        Ok(())
    })
}

/// `P(i beats j) = pi_i / (pi_i + pi_j)`.
#[no_mangle]
pub extern "C" fn swarmlab_bt_probability(pi_i: f64, pi_j: f64, out: *mut f64) -> SwarmlabStatus {
    guard(|| write(out, bt::bt_probability(pi_i, pi_j)?, "out"))
}

/// `SHA-256(state_hash || node_id)` into the 32 bytes at `out`.
#[no_mangle]
pub extern "C" fn swarmlab_derive_seed(
    state_hash: *const u8,
    node_id: *const u8,
    node_id_len: usize,
    out: *mut u8,
) -> SwarmlabStatus {
    guard(|| {
        let state: &[u8; 32] = slice(state_hash, 32, "state_hash")?.try_into().unwrap();
        let seed = scheduler::derive_seed(state, slice(node_id, node_id_len, "node_id")?)?;
        fill(&seed.derived_seed, out, 32, "out")
    })
}

/// Draws the judge's `count` ordered pairs, written as `first, second`
/// alternately: `pairs` needs room for `2 * count` values.
#[no_mangle]
pub extern "C" fn swarmlab_sample_assignment(
    state_hash: *const u8,
    node_id: *const u8,
    node_id_len: usize,
    n_responses: usize,
    own: *const usize,
    n_own: usize,
    count: usize,
    pairs: *mut usize,
    capacity: usize,
) -> SwarmlabStatus {
    guard(|| {
        let state: &[u8; 32] = slice(state_hash, 32, "state_hash")?.try_into().unwrap();
        let seed = scheduler::derive_seed(state, slice(node_id, node_id_len, "node_id")?)?;
        let own: BTreeSet<usize> = slice(own, n_own, "own")?.iter().copied().collect();
        let a = scheduler::sample_assignment(&seed, n_responses, &own, count)?;
        let flat: Vec<usize> = a.pairs.iter().flat_map(|p| [p.first, p.second]).collect();
        fill(&flat, pairs, capacity, "pairs")
    })
}

#[no_mangle]
pub extern "C" fn swarmlab_pair_miss_probability(
    n_responses: usize,
    n_judges: usize,
    comparisons_per_judge: usize,
    out: *mut SwarmlabPairMiss,
) -> SwarmlabStatus {
    guard(|| {
        if n_responses < 2 {
            return Err(Failure::new(SWARMLAB_INVALID_ARGUMENT, "need at least two responses"));
        }
        let p = scheduler::pair_miss_probability(n_responses, n_judges, comparisons_per_judge);
        write(
            out,
            SwarmlabPairMiss {
                exact: p.exact,
                approximation: p.approximation,
                total_draws: p.total_draws,
            },
            "out",
        )
    })
}

/// `base * exp(-lambda * max(0, c - tau))`.
#[no_mangle]
pub extern "C" fn swarmlab_collusion_adjusted_weight(base_weight: f64, c: f64, lambda: f64, tau: f64) -> f64 {
    sybil::collusion_adjusted_weight(base_weight, c, lambda, tau)
}

/// `exp(-gamma * |ln(n_actual / n_bar)|)`.
#[no_mangle]
pub extern "C" fn swarmlab_round_weight(n_actual: usize, n_bar: f64, gamma: f64) -> f64 {
    sybil::round_weight(n_actual, n_bar, gamma)
}

/// Builds a partition over `n_points` vectors of length `dim` stored row
/// after row in `coords`; `owners[i]` is the node behind row `i`.
/// `lambda_split` below zero disables the load cap; `loads` (one rate per
/// point owner, indexed like `owners`) may be null.
#[no_mangle]
pub extern "C" fn swarmlab_mesh_build(
    owners: *const usize,
    coords: *const f64,
    n_points: usize,
    dim: usize,
    beta_cap: usize,
    lambda_split: f64,
    loads: *const f64,
    out: *mut *mut SwarmlabMesh,
) -> SwarmlabStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(Failure::new(SWARMLAB_INVALID_ARGUMENT, "dim must be at least 1"));
        }
        let owners = slice(owners, n_points, "owners")?;
        let coords = slice(coords, n_points * dim, "coords")?;
        let points = owners
            .iter()
            .zip(coords.chunks_exact(dim))
            .map(|(&o, v)| SemanticPoint::new(o, v.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rates = BTreeMap::new();
        if !loads.is_null() {
            for (&o, &r) in owners.iter().zip(slice(loads, n_points, "loads")?) {
                rates.insert(o, r);
            }
        }
        let params = MeshParams {
            beta_cap,
            lambda_split: (lambda_split >= 0.0).then_some(lambda_split),
        };
        let tree = mesh::build_partition(points, &params, &rates)?;
        *out = Box::into_raw(Box::new(SwarmlabMesh(tree)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from [`swarmlab_mesh_build`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn swarmlab_mesh_free(mesh: *mut SwarmlabMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[no_mangle]
pub extern "C" fn swarmlab_mesh_leaf_count(mesh: *const SwarmlabMesh, out: *mut usize) -> SwarmlabStatus {
    guard(|| write(out, non_null(mesh, "mesh")?.0.leaves().count(), "out"))
}

#[no_mangle]
pub extern "C" fn swarmlab_mesh_depth(mesh: *const SwarmlabMesh, out: *mut usize) -> SwarmlabStatus {
    guard(|| write(out, non_null(mesh, "mesh")?.0.depth(), "out"))
}

/// Routes `query` (length `dim`) to its leaf. Member node ids go to
/// `members` (may be null with zero capacity when only `route` is wanted);
/// `id` receives the NUL-terminated sub-mesh id, empty for the root.
#[no_mangle]
pub extern "C" fn swarmlab_mesh_route(
    mesh: *const SwarmlabMesh,
    query: *const f64,
    dim: usize,
    route: *mut SwarmlabRoute,
    members: *mut usize,
    members_capacity: usize,
    id: *mut c_char,
    id_capacity: usize,
) -> SwarmlabStatus {
    guard(|| {
        let tree = &non_null(mesh, "mesh")?.0;
        let r = tree.route_query(slice(query, dim, "query")?)?;
        write(
            route,
            SwarmlabRoute {
                steps: r.steps,
                region: r.region,
                n_members: r.members.len(),
            },
            "route",
        )?;
        if !members.is_null() || members_capacity > 0 {
            fill(&r.members, members, members_capacity, "members")?;
        }
        if !id.is_null() {
            let mut bytes = r.id.to_string().into_bytes();
            bytes.push(0);
            fill(&bytes, id.cast::<u8>(), id_capacity, "id")?;
        }
        Ok(())
    })
}

/// Creates a swarm from a NUL-terminated JSON experiment config (the same
/// format the CLI reads; the declared experiment is ignored).
#[no_mangle]
pub extern "C" fn swarmlab_swarm_new(config_json: *const c_char, out: *mut *mut SwarmlabSwarm) -> SwarmlabStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        *out = ptr::null_mut();
        if config_json.is_null() {
            return Err(Failure::new(SWARMLAB_NULL_POINTER, "config_json is null"));
        }
        // SAFETY: non-null and NUL-terminated by contract.
        let text = unsafe { CStr::from_ptr(config_json) }
            .to_str()
            .map_err(|e| Failure::new(SWARMLAB_CONFIG, format!("config is not UTF-8: {e}")))?;
        let mut cfg = ExperimentConfig::from_json(text).map_err(|e| Failure::new(SWARMLAB_CONFIG, e.to_string()))?;
        cfg.experiment = None;
        let cfg = cfg
            .resolve(Experiment::Round)
            .map_err(|e| Failure::new(SWARMLAB_CONFIG, e.to_string()))?;
        let swarm = Swarm::new(cfg.sim_params()).map_err(|e| Failure::new(SWARMLAB_CONFIG, e.to_string()))?;
        *out = Box::into_raw(Box::new(SwarmlabSwarm { swarm, next_round: 0 }));
        Ok(())
    })
}

/// # Safety
/// `swarm` must come from [`swarmlab_swarm_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn swarmlab_swarm_free(swarm: *mut SwarmlabSwarm) {
    if !swarm.is_null() {
        drop(Box::from_raw(swarm));
    }
}

#[no_mangle]
pub extern "C" fn swarmlab_swarm_n_nodes(swarm: *const SwarmlabSwarm, out: *mut usize) -> SwarmlabStatus {
    guard(|| write(out, non_null(swarm, "swarm")?.swarm.profiles().len(), "out"))
}

/// Plays the next round.
#[no_mangle]
pub extern "C" fn swarmlab_swarm_step(swarm: *mut SwarmlabSwarm, out: *mut SwarmlabRound) -> SwarmlabStatus {
    guard(|| {
        let s = non_null_mut(swarm, "swarm")?;
        let report = s
            .swarm
            .run_round(s.next_round)
            .map_err(|e| Failure::new(SWARMLAB_INTERNAL, e.to_string()))?;
        s.next_round += 1;
        let round = match report {
            RoundReport::Played(o) => SwarmlabRound {
                played: 1,
                n_responses: o.authors.len(),
                winner_author: o.winner_author(),
                correct: o.correct as i32,
                majority_correct: o.majority_correct as i32,
                round_weight: o.round_weight,
                n_slashed: o.slashed.len(),
            },
            RoundReport::Skipped { n_responses, .. } => SwarmlabRound {
                n_responses,
                ..SwarmlabRound::default()
            },
        };
        // SAFETY: optional output.
        if let Some(o) = unsafe { out.as_mut() } {
            *o = round;
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn swarmlab_swarm_reputation(
    swarm: *const SwarmlabSwarm,
    node: usize,
    out: *mut SwarmlabReputation,
) -> SwarmlabStatus {
    guard(|| {
        let profiles = non_null(swarm, "swarm")?.swarm.profiles();
        let p = profiles.get(node).ok_or_else(|| {
            Failure::new(
                SWARMLAB_INVALID_ARGUMENT,
                format!("node {node} out of range for {} nodes", profiles.len()),
            )
        })?;
        write(
            out,
            SwarmlabReputation {
                ranking: p.reputation.ranking,
                generation: p.reputation.generation,
                combined: p.reputation.combined,
                excluded: (p.status != swarmlab::sim::NodeStatus::Active) as i32,
            },
            "out",
        )
    })
}
