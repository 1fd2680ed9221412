//! Bradley–Terry scoring from pairwise comparisons.
//!
//! Strengths are fitted in the log domain (`theta = ln pi`) by gradient ascent
//! on the (optionally reputation-weighted) log-likelihood with an L2 penalty
//! on `theta`. The step size adapts: it grows after every accepted step and
//! is halved whenever the objective would decrease.
//!
//! ```text
//! P(i beats j) = pi_i / (pi_i + pi_j) = logistic(theta_i - theta_j)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BtError {
    #[error("strengths must be positive and finite (got {0})")]
    NonPositiveStrength(f64),
    #[error("dimension mismatch: tally has {tally} items, scores have {scores}")]
    DimensionMismatch { tally: usize, scores: usize },
    #[error("item index {index} out of range for {n_items} items")]
    IndexOutOfRange { index: usize, n_items: usize },
    #[error("self-comparison of item {0}")]
    SelfComparison(usize),
    #[error("comparison weight must be finite and non-negative (got {0})")]
    InvalidWeight(f64),
    #[error("no comparisons")]
    NoComparisons,
    #[error("comparison graph is disconnected and unregularized; components: {components:?}")]
    NonIdentifiable { components: Vec<Vec<usize>> },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `P(i beats j)` under the Bradley–Terry model.
pub fn bt_probability(pi_i: f64, pi_j: f64) -> Result<f64, BtError> {
    for p in [pi_i, pi_j] {
        if !(p > 0.0 && p.is_finite()) {
            return Err(BtError::NonPositiveStrength(p));
        }
    }
    Ok(pi_i / (pi_i + pi_j))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(x))` without overflow for large `|x|`.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Fitted strengths, gauge-fixed so that the log-scores sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    log_scores: Vec<f64>,
}

impl QualityScores {
    /// Builds scores from log-strengths, re-centring them to mean zero.
    pub fn from_log_scores(mut theta: Vec<f64>) -> Self {
        if !theta.is_empty() {
            let mean = theta.iter().sum::<f64>() / theta.len() as f64;
            theta.iter_mut().for_each(|t| *t -= mean);
        }
        Self { log_scores: theta }
    }

    pub fn uniform(n: usize) -> Self {
        Self { log_scores: vec![0.0; n] }
    }

    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    pub fn scores(&self) -> Vec<f64> {
        self.log_scores.iter().map(|t| t.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_scores.is_empty()
    }
}

/// Win counts between every ordered pair of items, plus the same counts with
/// each comparison scaled by its judge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTally {
    n_items: usize,
    wins: Vec<f64>,
    weighted_wins: Vec<f64>,
    total: usize,
}

impl ComparisonTally {
    pub fn new(n_items: usize) -> Self {
        Self {
            n_items,
            wins: vec![0.0; n_items * n_items],
            weighted_wins: vec![0.0; n_items * n_items],
            total: 0,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of comparisons recorded.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Records one comparison in which `winner` was preferred over `loser`.
    pub fn record(&mut self, winner: usize, loser: usize, weight: f64) -> Result<(), BtError> {
        let n = self.n_items;
        for index in [winner, loser] {
            if index >= n {
                return Err(BtError::IndexOutOfRange { index, n_items: n });
            }
        }
        if winner == loser {
            return Err(BtError::SelfComparison(winner));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(BtError::InvalidWeight(weight));
        }
        self.wins[winner * n + loser] += 1.0;
        self.weighted_wins[winner * n + loser] += weight;
        self.total += 1;
        Ok(())
    }

    /// `w_ij`: times `i` was preferred over `j`.
    pub fn wins(&self, i: usize, j: usize) -> f64 {
        self.wins[i * self.n_items + j]
    }

    /// `n_ij`: comparisons of the pair in either direction.
    pub fn comparisons(&self, i: usize, j: usize) -> f64 {
        self.wins(i, j) + self.wins(j, i)
    }

    pub fn weighted_wins(&self, i: usize, j: usize) -> f64 {
        self.weighted_wins[i * self.n_items + j]
    }

    pub fn weighted_comparisons(&self, i: usize, j: usize) -> f64 {
        self.weighted_wins(i, j) + self.weighted_wins(j, i)
    }

    fn win_matrix(&self, use_weights: bool) -> &[f64] {
        if use_weights {
            &self.weighted_wins
        } else {
            &self.wins
        }
    }

    /// Connected components of the graph whose edges are pairs with a
    /// positive (weighted, if requested) comparison count.
    pub fn components(&self, use_weights: bool) -> Vec<Vec<usize>> {
        let n = self.n_items;
        let w = self.win_matrix(use_weights);
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if w[i * n + j] + w[j * n + i] > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if root_slot[r] == usize::MAX {
                root_slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_slot[r]].push(i);
        }
        groups
    }

    /// Sparse view over the pairs that carry any comparison mass.
    fn edges(&self, use_weights: bool) -> Vec<Edge> {
        let n = self.n_items;
        let w = self.win_matrix(use_weights);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (wij, wji) = (w[i * n + j], w[j * n + i]);
                if wij + wji > 0.0 {
                    edges.push(Edge { i, j, wij, wji });
                }
            }
        }
        edges
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    i: usize,
    j: usize,
    wij: f64,
    wji: f64,
}

fn edges_log_likelihood(edges: &[Edge], theta: &[f64]) -> f64 {
    edges
        .iter()
        .map(|e| {
            let d = theta[e.i] - theta[e.j];
            let mut acc = 0.0;
            if e.wij > 0.0 {
                acc += e.wij * log_logistic(d);
            }
            if e.wji > 0.0 {
                acc += e.wji * log_logistic(-d);
            }
            acc
        })
        .sum()
}

fn edges_gradient(edges: &[Edge], theta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|g| *g = 0.0);
    for e in edges {
        let p = logistic(theta[e.i] - theta[e.j]);
        // d/d theta_i of [wij ln p + wji ln(1-p)] = wij - (wij + wji) p
        let g = e.wij - (e.wij + e.wji) * p;
        out[e.i] += g;
        out[e.j] -= g;
    }
}

/// Unregularized log-likelihood of `scores` given the tally.
pub fn log_likelihood(
    tally: &ComparisonTally,
    scores: &QualityScores,
    use_weights: bool,
) -> Result<f64, BtError> {
    check_dims(tally, scores.len())?;
    Ok(edges_log_likelihood(&tally.edges(use_weights), scores.log_scores()))
}

/// Gradient of the unregularized log-likelihood with respect to `theta`.
pub fn log_likelihood_gradient(
    tally: &ComparisonTally,
    theta: &[f64],
    use_weights: bool,
) -> Result<Vec<f64>, BtError> {
    check_dims(tally, theta.len())?;
    let mut g = vec![0.0; theta.len()];
    edges_gradient(&tally.edges(use_weights), theta, &mut g);
    Ok(g)
}

/// Log-likelihood evaluated directly at raw log-strengths (no gauge fix).
pub fn log_likelihood_at(
    tally: &ComparisonTally,
    theta: &[f64],
    use_weights: bool,
) -> Result<f64, BtError> {
    check_dims(tally, theta.len())?;
    Ok(edges_log_likelihood(&tally.edges(use_weights), theta))
}

fn check_dims(tally: &ComparisonTally, n: usize) -> Result<(), BtError> {
    if tally.n_items() != n {
        return Err(BtError::DimensionMismatch {
            tally: tally.n_items(),
            scores: n,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Adaptive-step gradient ascent.
    Gradient,
    /// Damped Newton on a dense Hessian; needs `l2_lambda > 0`.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub solver: Solver,
    /// Initial step, as a multiple of the inverse curvature bound.
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient infinity-norm.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            solver: Solver::Gradient,
            learning_rate: 1.0,
            l2_lambda: 0.01,
            max_iters: 10_000,
            tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), BtError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(BtError::InvalidConfig("learning_rate must be positive"));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(BtError::InvalidConfig("l2_lambda must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(BtError::InvalidConfig("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(BtError::InvalidConfig("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Regularized objective at the returned scores.
    pub objective: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes the L2-regularized log-likelihood with the configured solver.
pub fn fit(
    tally: &ComparisonTally,
    config: &FitConfig,
    use_weights: bool,
) -> Result<(QualityScores, FitDiagnostics), BtError> {
    match config.solver {
        Solver::Gradient => fit_gradient(tally, config, use_weights),
        Solver::Newton => fit_newton(tally, config, use_weights),
    }
}

/// Adaptive gradient ascent: the step doubles after every accepted move and
/// halves on a decrease.
pub fn fit_gradient(
    tally: &ComparisonTally,
    config: &FitConfig,
    use_weights: bool,
) -> Result<(QualityScores, FitDiagnostics), BtError> {
    config.validate()?;
    if tally.is_empty() {
        return Err(BtError::NoComparisons);
    }
    let n = tally.n_items();
    let edges = tally.edges(use_weights);
    if edges.is_empty() {
        return Err(BtError::NoComparisons);
    }
    if config.l2_lambda == 0.0 {
        let components = tally.components(use_weights);
        if components.len() > 1 {
            return Err(BtError::NonIdentifiable { components });
        }
    }

    let lambda = config.l2_lambda;
    let objective = |theta: &[f64]| {
        edges_log_likelihood(&edges, theta) - lambda * theta.iter().map(|t| t * t).sum::<f64>()
    };
    let gradient = |theta: &[f64], out: &mut [f64]| {
        edges_gradient(&edges, theta, out);
        for (g, t) in out.iter_mut().zip(theta) {
            *g -= 2.0 * lambda * t;
        }
    };

    // Hessian of the negated objective is a weighted graph Laplacian with edge
    // weights at most n_ij / 4, plus 2*lambda*I.
    let mut degree = vec![0.0; n];
    for e in &edges {
        let m = e.wij + e.wji;
        degree[e.i] += m;
        degree[e.j] += m;
    }
    let curvature = 0.5 * degree.iter().cloned().fold(0.0, f64::max) + 2.0 * lambda;
    let safe_step = 1.0 / curvature;

    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut cand_grad = vec![0.0; n];
    let mut f = objective(&theta);
    gradient(&theta, &mut grad);
    let mut step = config.learning_rate * safe_step;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        if inf_norm(&grad) < config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            for k in 0..n {
                cand[k] = theta[k] + step * grad[k];
            }
            let fc = objective(&cand);
            let noise = 64.0 * f64::EPSILON * f.abs().max(1.0);
            // Steps at or below the curvature bound ascend in exact
            // arithmetic; accept them even when rounding hides the gain.
            // Otherwise a change lost in rounding is judged by the slope at
            // the candidate: it must not have passed the line maximum.
            let accept = fc.is_finite()
                && (step <= safe_step
                    || fc > f + noise
                    || (fc >= f - noise && {
                        gradient(&cand, &mut cand_grad);
                        grad.iter().zip(&cand_grad).map(|(a, b)| a * b).sum::<f64>() >= 0.0
                    }));
            if accept {
                std::mem::swap(&mut theta, &mut cand);
                f = fc;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        gradient(&theta, &mut grad);
    }
    if !converged && inf_norm(&grad) < config.tol {
        converged = true;
    }

    let scores = QualityScores::from_log_scores(theta);
    Ok((
        scores,
        FitDiagnostics {
            iterations,
            gradient_norm: inf_norm(&grad),
            converged,
            objective: f,
        },
    ))
}

/// Same estimator as [`fit_gradient`], solved by damped Newton steps on a
/// dense Hessian. Suited to small item counts; falls back to gradient ascent
/// when `l2_lambda` is zero.
pub fn fit_newton(
    tally: &ComparisonTally,
    config: &FitConfig,
    use_weights: bool,
) -> Result<(QualityScores, FitDiagnostics), BtError> {
    config.validate()?;
    if config.l2_lambda == 0.0 {
        return fit_gradient(tally, config, use_weights);
    }
    if tally.is_empty() {
        return Err(BtError::NoComparisons);
    }
    let n = tally.n_items();
    let edges = tally.edges(use_weights);
    if edges.is_empty() {
        return Err(BtError::NoComparisons);
    }
    let lambda = config.l2_lambda;
    let objective = |theta: &[f64]| {
        edges_log_likelihood(&edges, theta) - lambda * theta.iter().map(|t| t * t).sum::<f64>()
    };
    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut dir = vec![0.0; n];
    let mut f = objective(&theta);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        edges_gradient(&edges, &theta, &mut grad);
        for (g, t) in grad.iter_mut().zip(&theta) {
            *g -= 2.0 * lambda * t;
        }
        if inf_norm(&grad) < config.tol {
            converged = true;
            break;
        }
        if iterations == config.max_iters {
            break;
        }
        iterations += 1;
        // Negated Hessian: weighted Laplacian plus 2*lambda*I.
        hess.iter_mut().for_each(|h| *h = 0.0);
        for k in 0..n {
            hess[k * n + k] = 2.0 * lambda;
        }
        for e in &edges {
            let p = logistic(theta[e.i] - theta[e.j]);
            let c = (e.wij + e.wji) * p * (1.0 - p);
            hess[e.i * n + e.i] += c;
            hess[e.j * n + e.j] += c;
            hess[e.i * n + e.j] -= c;
            hess[e.j * n + e.i] -= c;
        }
        cholesky_solve(&mut hess, &grad, &mut dir, n);
        let scale = 1.0 + inf_norm(&theta);
        let mut t = 1.0;
        let mut accepted = false;
        while t * inf_norm(&dir) > 1e-15 * scale {
            for k in 0..n {
                cand[k] = theta[k] + t * dir[k];
            }
            let fc = objective(&cand);
            let gain = fc - f;
            let better = gain > 0.0
                || (t == 1.0 && gain.is_finite() && gain >= -1e-12 * f.abs().max(1.0) && {
                    // Rounding hides the gain near the optimum; judge by the
                    // gradient instead.
                    let mut g = vec![0.0; n];
                    edges_gradient(&edges, &cand, &mut g);
                    for (gk, ck) in g.iter_mut().zip(&cand) {
                        *gk -= 2.0 * lambda * ck;
                    }
                    inf_norm(&g) < inf_norm(&grad)
                });
            if better {
                std::mem::swap(&mut theta, &mut cand);
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gradient_norm = inf_norm(&grad);
    Ok((
        QualityScores::from_log_scores(theta),
        FitDiagnostics {
            iterations,
            gradient_norm,
            converged,
            objective: f,
        },
    ))
}

/// Solves `a x = b` in place for symmetric positive definite `a`.
fn cholesky_solve(a: &mut [f64], b: &[f64], x: &mut [f64], n: usize) {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        let d = d.max(f64::MIN_POSITIVE).sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
}

/// Indices sorted by descending strength; ties go to the lower index.
pub fn rank_from_scores(scores: &QualityScores) -> Vec<usize> {
    rank_by(scores.log_scores())
}

pub(crate) fn rank_by(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally_from(n: usize, pairs: &[(usize, usize, usize)]) -> ComparisonTally {
        let mut t = ComparisonTally::new(n);
        for &(w, l, count) in pairs {
            for _ in 0..count {
                t.record(w, l, 1.0).unwrap();
            }
        }
        t
    }

    #[test]
    fn probability_examples() {
        assert_eq!(bt_probability(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(bt_probability(3.0, 1.0).unwrap(), 0.75);
        let (a, b) = (0.37, 12.5);
        let s = bt_probability(a, b).unwrap() + bt_probability(b, a).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(bt_probability(0.0, 1.0).is_err());
        assert!(bt_probability(1.0, -2.0).is_err());
    }

    #[test]
    fn probability_matches_logistic_of_log_difference() {
        let (a, b) = (2.5f64, 0.4f64);
        let lhs = bt_probability(a, b).unwrap();
        assert!((lhs - logistic(a.ln() - b.ln())).abs() < 1e-14);
    }

    #[test]
    fn log_logistic_is_stable() {
        assert!((log_logistic(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_logistic(-800.0).is_finite());
        assert!((log_logistic(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_logistic(800.0).abs() < 1e-300);
    }

    #[test]
    fn likelihood_examples() {
        let t = tally_from(2, &[(0, 1, 1)]);
        let ll = log_likelihood(&t, &QualityScores::uniform(2), false).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);

        let empty = ComparisonTally::new(4);
        assert_eq!(log_likelihood(&empty, &QualityScores::uniform(4), false).unwrap(), 0.0);

        let t = tally_from(2, &[(0, 1, 3), (1, 0, 1)]);
        let at_three = QualityScores::from_log_scores(vec![3f64.ln(), 0.0]);
        let at_one = QualityScores::uniform(2);
        let l3 = log_likelihood(&t, &at_three, false).unwrap();
        let l1 = log_likelihood(&t, &at_one, false).unwrap();
        // 3 ln(3/4) + ln(1/4) versus 4 ln(1/2)
        assert!((l3 - (3.0 * 0.75f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        assert!((l1 - 4.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!(l3 > l1);
    }

    #[test]
    fn likelihood_dimension_mismatch() {
        let t = ComparisonTally::new(3);
        assert!(matches!(
            log_likelihood(&t, &QualityScores::uniform(2), false),
            Err(BtError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tally_rejects_bad_records() {
        let mut t = ComparisonTally::new(3);
        assert_eq!(t.record(1, 1, 1.0), Err(BtError::SelfComparison(1)));
        assert!(matches!(t.record(0, 3, 1.0), Err(BtError::IndexOutOfRange { .. })));
        assert!(matches!(t.record(0, 1, -1.0), Err(BtError::InvalidWeight(_))));
        assert!(matches!(t.record(0, 1, f64::NAN), Err(BtError::InvalidWeight(_))));
    }

    #[test]
    fn tally_invariants() {
        let mut t = ComparisonTally::new(3);
        t.record(0, 1, 0.5).unwrap();
        t.record(1, 0, 2.0).unwrap();
        t.record(2, 0, 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(t.comparisons(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(t.wins(i, j) + t.wins(j, i), t.comparisons(i, j));
                assert_eq!(t.comparisons(i, j), t.comparisons(j, i));
            }
        }
        assert_eq!(t.weighted_comparisons(0, 1), 2.5);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn two_item_closed_form() {
        let t = tally_from(2, &[(0, 1, 3), (1, 0, 1)]);
        let cfg = FitConfig {
            l2_lambda: 0.0,
            ..FitConfig::default()
        };
        let (scores, diag) = fit(&t, &cfg, false).unwrap();
        let pi = scores.scores();
        assert!(diag.converged);
        assert!((pi[0] / pi[1] - 3.0).abs() < 1e-6, "ratio {}", pi[0] / pi[1]);
    }

    #[test]
    fn balanced_tally_gives_equal_scores() {
        let t = tally_from(3, &[(0, 1, 2), (1, 0, 2), (1, 2, 3), (2, 1, 3), (0, 2, 1), (2, 0, 1)]);
        let cfg = FitConfig::default();
        let (scores, _) = fit(&t, &cfg, false).unwrap();
        for th in scores.log_scores() {
            assert!(th.abs() <= cfg.tol);
        }
    }

    #[test]
    fn disconnected_unregularized_is_rejected() {
        let t = tally_from(4, &[(0, 1, 2), (2, 3, 1)]);
        let cfg = FitConfig {
            l2_lambda: 0.0,
            ..FitConfig::default()
        };
        match fit(&t, &cfg, false) {
            Err(BtError::NonIdentifiable { components }) => {
                assert_eq!(components, vec![vec![0, 1], vec![2, 3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
        // Regularization makes the same tally identifiable.
        let (scores, _) = fit(&t, &FitConfig::default(), false).unwrap();
        assert!(scores.log_scores().iter().all(|t| t.is_finite()));
    }

    #[test]
    fn empty_tally_is_an_error() {
        let t = ComparisonTally::new(3);
        assert_eq!(fit(&t, &FitConfig::default(), false).unwrap_err(), BtError::NoComparisons);
    }

    #[test]
    fn clean_sweep_stays_finite() {
        let t = tally_from(3, &[(0, 1, 500), (0, 2, 500), (1, 2, 500)]);
        let cfg = FitConfig {
            l2_lambda: 0.0,
            max_iters: 2000,
            ..FitConfig::default()
        };
        let (scores, _) = fit(&t, &cfg, false).unwrap();
        let theta = scores.log_scores();
        assert!(theta[0] - theta[2] > 10.0);
        assert!(scores.scores().iter().all(|p| p.is_finite() && *p > 0.0));
        assert_eq!(rank_from_scores(&scores), vec![0, 1, 2]);
    }

    #[test]
    fn newton_matches_gradient_ascent() {
        let t = tally_from(5, &[(0, 1, 5), (1, 2, 4), (2, 3, 3), (3, 0, 1), (0, 2, 2), (4, 0, 1), (1, 4, 3)]);
        let cfg = FitConfig::default();
        let (a, da) = fit_gradient(&t, &cfg, false).unwrap();
        let (b, db) = fit_newton(&t, &cfg, false).unwrap();
        assert!(da.converged && db.converged);
        assert!(db.iterations < da.iterations);
        for (x, y) in a.log_scores().iter().zip(b.log_scores()) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn gauge_is_zero_sum() {
        let t = tally_from(4, &[(0, 1, 5), (1, 2, 4), (2, 3, 3), (3, 0, 1), (0, 2, 2)]);
        let (scores, _) = fit(&t, &FitConfig::default(), false).unwrap();
        assert!(scores.log_scores().iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn unit_weights_match_unweighted_bit_for_bit() {
        let t = tally_from(4, &[(0, 1, 5), (1, 2, 4), (2, 3, 3), (3, 0, 1), (0, 2, 2)]);
        let cfg = FitConfig::default();
        let a = fit(&t, &cfg, false).unwrap();
        let b = fit(&t, &cfg, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_examples() {
        let s = QualityScores::from_log_scores(vec![1f64.ln(), 3f64.ln(), 2f64.ln()]);
        assert_eq!(rank_from_scores(&s), vec![1, 2, 0]);
        assert_eq!(rank_from_scores(&QualityScores::uniform(2)), vec![0, 1]);
        let scaled = QualityScores::from_log_scores(
            s.log_scores().iter().map(|t| t + 7.5f64.ln()).collect(),
        );
        assert_eq!(rank_from_scores(&scaled), rank_from_scores(&s));
    }

    #[test]
    fn gradient_reaches_tolerances_below_rounding_of_the_objective() {
        let t = tally_from(5, &[(0, 1, 7), (1, 0, 2), (1, 2, 5), (2, 3, 4), (3, 2, 1), (3, 4, 6), (4, 0, 3), (2, 0, 1)]);
        for lambda in [0.0, 0.01] {
            let cfg = FitConfig { l2_lambda: lambda, tol: 1e-13, ..FitConfig::default() };
            let (_, d) = fit_gradient(&t, &cfg, false).unwrap();
            assert!(d.converged && d.iterations < 1000, "lambda {lambda}: {d:?}");
        }
    }
}
