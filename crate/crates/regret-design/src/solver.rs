//! Regret-optimal design search.
//!
//! The outer problem is mixed-integer: pick a feasible arm set `x`, then
//! shrinkage weights, to minimize `t = max(alpha/alpha_star,
//! beta/beta_star)`. Arm sets are enumerated exactly at desk scale (the
//! feasible menu is finite); above [`BNB_THRESHOLD`] feasible designs a
//! best-first branch-and-bound on a shrinkage-relaxed bound takes over.
//! For each arm set the inner problem is solved by bisection on `t`: a
//! candidate `t` is feasible when the smallest variance index subject to
//! `beta(s) <= t * beta_star` stays below `t * alpha_star`, a
//! box-constrained convex quadratic program with one convex cap.

use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::{arm_count, design_bits, design_order, DesignProblem, FeasibilitySet, GammaPolicy};
use crate::qp::minimize_box_capped;
use crate::regret::{
    alpha_quadratic, argmin_design, beta_quadratic, bias_weights, compute_alpha, compute_beta,
    gamma_from_shrinkage, golden_min, min_alpha_for_design, min_alpha_with_bias_cap,
    min_weighted_index, neyman_allocation, oracle_alpha_star, oracle_beta_star, regret,
    safe_ratio, Binding, EffectiveShrinkage, RegretBreakdown,
};

/// Absolute tolerance certifying the bisected regret factor.
pub const BISECTION_TOL: f64 = 1e-8;

/// Absolute tie window on `t` before the fewer-arms / design-order rules.
pub const TIE_TOL: f64 = 1e-9;

/// Feasible-design count above which branch-and-bound replaces exact
/// enumeration.
pub const BNB_THRESHOLD: u64 = 1 << 14;

const MAX_BISECTION_STEPS: usize = 200;

/// A solved design: selected arms, shrinkage weights (1 by convention on
/// unselected arms), Neyman sample sizes, and the regret factor with its
/// breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub x_star: Vec<bool>,
    pub gamma_star: Vec<f64>,
    pub n_star: Vec<f64>,
    pub t_star: f64,
    pub breakdown: RegretBreakdown,
}

impl DesignSolution {
    pub fn selected_names(&self, problem: &DesignProblem) -> Vec<String> {
        self.x_star
            .iter()
            .zip(problem.arms())
            .filter(|(&sel, _)| sel)
            .map(|(_, arm)| arm.name.clone())
            .collect()
    }
}

/// Inner minimax solution for one arm set.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub gamma: Vec<f64>,
    pub s: EffectiveShrinkage,
    pub t: f64,
}

fn allocation_or_zero(problem: &DesignProblem, s: &EffectiveShrinkage) -> Vec<f64> {
    if s.as_slice().iter().all(|&v| v == 0.0) {
        vec![0.0; problem.dim()]
    } else {
        neyman_allocation(problem, s).expect("active arm present")
    }
}

/// Minimizes `t` over shrinkage weights for a fixed arm set, subject to
/// `alpha(s) <= t alpha_star` and `beta(s) <= t beta_star`.
///
/// Returns [`Error::Infeasible`] when the oracle bias is zero but this arm
/// set cannot drive its own bias to zero (its regret is infinite), and
/// [`Error::NonConvergence`] if no finite bracket is found.
pub fn inner_solve(
    problem: &DesignProblem,
    x: &[bool],
    alpha_star: f64,
    beta_star: f64,
) -> Result<InnerSolution> {
    let p = problem.dim();
    debug_assert_eq!(x.len(), p);
    let finish = |s: EffectiveShrinkage| -> Result<InnerSolution> {
        let alpha = compute_alpha(problem, &s);
        let beta = compute_beta(problem, &s);
        let t = safe_ratio(alpha, alpha_star).max(safe_ratio(beta, beta_star));
        if !t.is_finite() {
            return Err(Error::Infeasible {
                design: design_bits(x),
            });
        }
        Ok(InnerSolution {
            gamma: gamma_from_shrinkage(x, &s),
            s,
            t,
        })
    };

    if problem.gamma_policy() == GammaPolicy::ExperimentOnly {
        let s = EffectiveShrinkage::from_design(x, &vec![1.0; p])?;
        return finish(s);
    }

    if beta_star == 0.0 {
        // The bias constraint pins full shrinkage on every coordinate.
        if x.iter().all(|&b| b) {
            let s = EffectiveShrinkage::from_design(x, &vec![1.0; p])?;
            return finish(s);
        }
        return Err(Error::Infeasible {
            design: design_bits(x),
        });
    }

    let feasible = |t: f64| -> Option<(EffectiveShrinkage, f64)> {
        let (s, alpha) = min_alpha_with_bias_cap(problem, x, t * beta_star)?;
        let slack = 1e-12 * alpha_star.max(alpha).max(1e-300);
        (alpha <= t * alpha_star + slack).then_some((s, alpha))
    };

    if let Some((s, _)) = feasible(1.0) {
        return finish(s);
    }
    let mut t_lo = 1.0;
    let mut t_hi = 2.0;
    let mut incumbent = None;
    for _ in 0..MAX_BISECTION_STEPS {
        if let Some(hit) = feasible(t_hi) {
            incumbent = Some(hit);
            break;
        }
        t_lo = t_hi;
        t_hi *= 2.0;
    }
    let Some(mut incumbent) = incumbent else {
        return Err(Error::NonConvergence(MAX_BISECTION_STEPS));
    };
    for _ in 0..MAX_BISECTION_STEPS {
        if t_hi - t_lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (t_lo + t_hi);
        match feasible(mid) {
            Some(hit) => {
                incumbent = hit;
                t_hi = mid;
            }
            None => t_lo = mid,
        }
    }
    finish(incumbent.0)
}

struct Oracles {
    alpha_star: f64,
    alpha_argmin: (Vec<bool>, Vec<f64>),
    beta_star: f64,
}

fn compute_oracles(problem: &DesignProblem) -> Result<Oracles> {
    if use_branch_and_bound(problem) {
        let (alpha_star, alpha_argmin) = bnb_alpha_star(problem)?;
        let beta_star = at_most_k_beta_star(problem);
        Ok(Oracles {
            alpha_star,
            alpha_argmin,
            beta_star,
        })
    } else {
        let (alpha_star, alpha_argmin) = oracle_alpha_star(problem)?;
        let (beta_star, _) = oracle_beta_star(problem)?;
        Ok(Oracles {
            alpha_star,
            alpha_argmin,
            beta_star,
        })
    }
}

fn use_branch_and_bound(problem: &DesignProblem) -> bool {
    !matches!(problem.feasibility(), FeasibilitySet::ExplicitList(_))
        && problem.feasible_design_count() > BNB_THRESHOLD
}

/// Solves the minimax design problem: enumerate (or branch-and-bound)
/// over feasible arm sets, bisect the inner problem for each, and return
/// the global minimizer. Ties within [`TIE_TOL`] go to fewer arms, then
/// the canonical design order.
pub fn solve(problem: &DesignProblem) -> Result<DesignSolution> {
    let oracles = compute_oracles(problem)?;
    if use_branch_and_bound(problem) {
        return bnb_solve(problem, &oracles);
    }
    let designs = problem.feasible_designs()?;
    let results: Vec<(Vec<bool>, Option<InnerSolution>, f64)> = designs
        .into_par_iter()
        .map(
            |x| match inner_solve(problem, &x, oracles.alpha_star, oracles.beta_star) {
                Ok(inner) => {
                    let t = inner.t;
                    (x, Some(inner), t)
                }
                Err(_) => (x, None, f64::INFINITY),
            },
        )
        .collect();
    let finite: Vec<_> = results.into_iter().filter(|(_, r, _)| r.is_some()).collect();
    if finite.is_empty() {
        return Err(Error::AllInfeasible);
    }
    let (x, inner, _) = argmin_design_abs(finite, TIE_TOL).expect("nonempty");
    let inner = inner.expect("finite result");
    assemble(problem, x, inner, oracles.alpha_star, oracles.beta_star)
}

/// Deterministic argmin with an absolute tie window (see
/// [`argmin_design`] for the relative variant).
fn argmin_design_abs<T>(
    results: Vec<(Vec<bool>, T, f64)>,
    tie_abs: f64,
) -> Option<(Vec<bool>, T, f64)> {
    let mut best: Option<(Vec<bool>, T, f64)> = None;
    for (x, payload, value) in results {
        match &best {
            None => best = Some((x, payload, value)),
            Some((bx, _, bv)) => {
                let tied = (value - bv).abs() <= tie_abs;
                let better = if tied {
                    match arm_count(&x).cmp(&arm_count(bx)) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => design_order(&x, bx) == Ordering::Less,
                    }
                } else {
                    value < *bv
                };
                if better {
                    best = Some((x, payload, value));
                }
            }
        }
    }
    best
}

fn assemble(
    problem: &DesignProblem,
    x: Vec<bool>,
    inner: InnerSolution,
    alpha_star: f64,
    beta_star: f64,
) -> Result<DesignSolution> {
    let n_star = allocation_or_zero(problem, &inner.s);
    let breakdown = regret(problem, &x, &inner.gamma, alpha_star, beta_star)?;
    Ok(DesignSolution {
        t_star: breakdown.regret,
        x_star: x,
        gamma_star: inner.gamma,
        n_star,
        breakdown,
    })
}

/// The variance-optimal (Neyman) baseline: the design and shrinkage
/// minimizing the variance index outright, reported with its full regret
/// breakdown for head-to-head comparisons.
pub fn neyman_design(problem: &DesignProblem) -> Result<DesignSolution> {
    let oracles = compute_oracles(problem)?;
    let (x, gamma) = oracles.alpha_argmin.clone();
    let s = EffectiveShrinkage::from_design(&x, &gamma)?;
    let n_star = allocation_or_zero(problem, &s);
    let breakdown = regret(problem, &x, &gamma, oracles.alpha_star, oracles.beta_star)?;
    Ok(DesignSolution {
        t_star: breakdown.regret,
        x_star: x,
        gamma_star: gamma,
        n_star,
        breakdown,
    })
}

/// Bounded-bias variant: minimizes
/// `max(alpha/alpha_star, (alpha + B^2 beta) / min_(x',g') (alpha' + B^2 beta'))`
/// for a known bias bound `b_bar`. At `b_bar = 0` both ratios collapse to
/// the variance ratio; as `b_bar` grows the solution approaches the
/// unbounded minimax design.
///
/// The arm-set search enumerates the feasible menu outright (no
/// branch-and-bound path here), so it is subject to the enumeration cap.
pub fn solve_bounded(problem: &DesignProblem, b_bar: f64) -> Result<DesignSolution> {
    if !b_bar.is_finite() || b_bar < 0.0 {
        return Err(Error::InvalidInput(format!(
            "bias bound must be finite and nonnegative, got {b_bar}"
        )));
    }
    let b2 = b_bar * b_bar;
    let oracles = compute_oracles(problem)?;
    let designs = problem.feasible_designs()?;
    let delta = designs
        .par_iter()
        .map(|x| min_weighted_index(problem, x, b2))
        .reduce(|| f64::INFINITY, f64::min);

    let results: Vec<(Vec<bool>, Option<InnerSolution>, f64)> = designs
        .into_par_iter()
        .map(|x| {
            match inner_solve_bounded(problem, &x, oracles.alpha_star, b2, delta) {
                Ok(inner) => {
                    let t = inner.t;
                    (x, Some(inner), t)
                }
                Err(_) => (x, None, f64::INFINITY),
            }
        })
        .collect();
    let finite: Vec<_> = results.into_iter().filter(|(_, r, _)| r.is_some()).collect();
    if finite.is_empty() {
        return Err(Error::AllInfeasible);
    }
    let (x, inner, _) = argmin_design_abs(finite, TIE_TOL).expect("nonempty");
    let inner = inner.expect("finite result");

    let s = inner.s.clone();
    let alpha = compute_alpha(problem, &s);
    let beta = compute_beta(problem, &s);
    let var_ratio = safe_ratio(alpha, oracles.alpha_star);
    let bound_ratio = safe_ratio(alpha + b2 * beta, delta);
    let t = var_ratio.max(bound_ratio);
    let binding = if (var_ratio - bound_ratio).abs() <= 1e-9 * var_ratio.max(bound_ratio).max(1.0)
    {
        Binding::Both
    } else if var_ratio > bound_ratio {
        Binding::Variance
    } else {
        Binding::Bias
    };
    let n_star = allocation_or_zero(problem, &s);
    Ok(DesignSolution {
        x_star: x,
        gamma_star: inner.gamma,
        n_star,
        t_star: t,
        breakdown: RegretBreakdown {
            alpha,
            alpha_star: oracles.alpha_star,
            beta,
            beta_star: oracles.beta_star,
            regret: t,
            binding,
        },
    })
}

fn inner_solve_bounded(
    problem: &DesignProblem,
    x: &[bool],
    alpha_star: f64,
    b2: f64,
    delta: f64,
) -> Result<InnerSolution> {
    let p = problem.dim();
    let finish = |s: EffectiveShrinkage| -> Result<InnerSolution> {
        let alpha = compute_alpha(problem, &s);
        let beta = compute_beta(problem, &s);
        let t = safe_ratio(alpha, alpha_star).max(safe_ratio(alpha + b2 * beta, delta));
        if !t.is_finite() {
            return Err(Error::Infeasible {
                design: design_bits(x),
            });
        }
        Ok(InnerSolution {
            gamma: gamma_from_shrinkage(x, &s),
            s,
            t,
        })
    };
    if problem.gamma_policy() == GammaPolicy::ExperimentOnly {
        return finish(EffectiveShrinkage::from_design(x, &vec![1.0; p])?);
    }
    let keep: Vec<usize> = x
        .iter()
        .enumerate()
        .filter_map(|(j, &b)| b.then_some(j))
        .collect();
    if keep.is_empty() {
        return finish(EffectiveShrinkage::zeros(p));
    }

    let quadratic_cap = beta_quadratic(problem).map(|bq| {
        alpha_quadratic(problem)
            .add_scaled(&bq, b2)
            .restrict(&keep)
    });
    let obj = alpha_quadratic(problem).restrict(&keep);
    let lo = vec![0.0; keep.len()];
    let hi = vec![1.0; keep.len()];

    let feasible = |t: f64| -> Option<EffectiveShrinkage> {
        match &quadratic_cap {
            Some(cap) => {
                let m = minimize_box_capped(&obj, cap, t * delta, &lo, &hi)?;
                let slack = 1e-12 * alpha_star.max(m.value).max(1e-300);
                if m.value <= t * alpha_star + slack {
                    let mut s = vec![0.0; p];
                    for (a, &j) in keep.iter().enumerate() {
                        s[j] = m.s[a].clamp(0.0, 1.0);
                    }
                    Some(EffectiveShrinkage::from_values(s).ok()?)
                } else {
                    None
                }
            }
            None => {
                // Total-magnitude norm: scan the bias budget; the map
                // y -> max(g(y) - t a*, g(y) + b2 y - t delta) is convex.
                let s_full: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let y_min =
                    compute_beta(problem, &EffectiveShrinkage::from_values(s_full).unwrap());
                let y_max = compute_beta(problem, &EffectiveShrinkage::zeros(p));
                let h = |y: f64| -> f64 {
                    match min_alpha_with_bias_cap(problem, x, y) {
                        Some((_, a)) => (a - t * alpha_star).max(a + b2 * y - t * delta),
                        None => f64::INFINITY,
                    }
                };
                let best = golden_min(y_min, y_max, h);
                if best <= 1e-12 * alpha_star.max(delta).max(1.0) {
                    // Re-derive the achieving point by a fine rescan.
                    let mut best_y = y_min;
                    let mut best_v = h(y_min);
                    let grid = 512;
                    for i in 0..=grid {
                        let y = y_min + (y_max - y_min) * i as f64 / grid as f64;
                        let v = h(y);
                        if v < best_v {
                            best_v = v;
                            best_y = y;
                        }
                    }
                    min_alpha_with_bias_cap(problem, x, best_y).map(|(s, _)| s)
                } else {
                    None
                }
            }
        }
    };

    if let Some(s) = feasible(1.0) {
        return finish(s);
    }
    let mut t_lo = 1.0;
    let mut t_hi = 2.0;
    let mut incumbent = None;
    for _ in 0..MAX_BISECTION_STEPS {
        if let Some(hit) = feasible(t_hi) {
            incumbent = Some(hit);
            break;
        }
        t_lo = t_hi;
        t_hi *= 2.0;
    }
    let Some(mut incumbent) = incumbent else {
        return Err(Error::NonConvergence(MAX_BISECTION_STEPS));
    };
    for _ in 0..MAX_BISECTION_STEPS {
        if t_hi - t_lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (t_lo + t_hi);
        match feasible(mid) {
            Some(hit) => {
                incumbent = hit;
                t_hi = mid;
            }
            None => t_lo = mid,
        }
    }
    finish(incumbent)
}

// ---------------------------------------------------------------------
// Branch and bound (large AtMostK / All menus)
// ---------------------------------------------------------------------

/// Closed-form bias oracle for AtMostK/All menus: cover the k largest
/// bias weights.
fn at_most_k_beta_star(problem: &DesignProblem) -> f64 {
    let p = problem.dim();
    let k = match problem.feasibility() {
        FeasibilitySet::AtMostK(k) => *k,
        FeasibilitySet::All => p,
        FeasibilitySet::ExplicitList(_) => unreachable!("bnb is never used for explicit lists"),
    };
    let weights = bias_weights(problem);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut x = vec![false; p];
    for &j in order.iter().take(k) {
        x[j] = true;
    }
    let s: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    compute_beta(problem, &EffectiveShrinkage::from_values(s).unwrap())
}

#[derive(Debug)]
struct Node {
    bound: f64,
    decided: usize,
    mask: Vec<bool>,
    used: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on the lower bound.
        other.bound.total_cmp(&self.bound)
    }
}

fn k_limit(problem: &DesignProblem) -> usize {
    match problem.feasibility() {
        FeasibilitySet::AtMostK(k) => *k,
        _ => problem.dim(),
    }
}

/// Relaxed variance bound for a partial assignment: rejected coordinates
/// pinned to zero shrinkage, everything else free in [0,1].
fn alpha_lower_bound(problem: &DesignProblem, mask: &[bool], decided: usize) -> f64 {
    let relaxed: Vec<bool> = (0..problem.dim())
        .map(|j| if j < decided { mask[j] } else { true })
        .collect();
    // Box minimization over the relaxed selection is a valid lower bound
    // regardless of the gamma policy (it only enlarges the feasible set).
    let p = problem.dim();
    let keep: Vec<usize> = relaxed
        .iter()
        .enumerate()
        .filter_map(|(j, &b)| b.then_some(j))
        .collect();
    if keep.is_empty() {
        return compute_alpha(problem, &EffectiveShrinkage::zeros(p));
    }
    let q = alpha_quadratic(problem).restrict(&keep);
    let lo = vec![0.0; keep.len()];
    let hi = vec![1.0; keep.len()];
    crate::qp::minimize_box(&q, &lo, &hi, None).value
}

/// Relaxed bias bound: undecided coordinates may be covered, best-case,
/// up to the remaining arm budget, taking the largest bias weights first.
fn beta_lower_bound(problem: &DesignProblem, mask: &[bool], decided: usize, used: usize) -> f64 {
    let p = problem.dim();
    let k = k_limit(problem);
    let weights = bias_weights(problem);
    let mut undecided: Vec<usize> = (decided..p).collect();
    undecided.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut covered = vec![false; p];
    for (j, &m) in mask.iter().enumerate().take(decided) {
        covered[j] = m;
    }
    for &j in undecided.iter().take(k.saturating_sub(used)) {
        covered[j] = true;
    }
    let s: Vec<f64> = covered.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    compute_beta(problem, &EffectiveShrinkage::from_values(s).unwrap())
}

fn node_bound(problem: &DesignProblem, o: &Oracles, mask: &[bool], decided: usize, used: usize) -> f64 {
    let a = alpha_lower_bound(problem, mask, decided);
    let b = beta_lower_bound(problem, mask, decided, used);
    safe_ratio(a, o.alpha_star).max(safe_ratio(b, o.beta_star))
}

fn bnb_solve(problem: &DesignProblem, oracles: &Oracles) -> Result<DesignSolution> {
    let p = problem.dim();
    let k = k_limit(problem);
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: 1.0,
        decided: 0,
        mask: vec![false; p],
        used: 0,
    });
    let mut incumbent: Option<(Vec<bool>, InnerSolution, f64)> = None;
    while let Some(node) = heap.pop() {
        if let Some((_, _, best_t)) = &incumbent {
            if node.bound > best_t + TIE_TOL {
                continue;
            }
        }
        if node.decided == p {
            if let Ok(inner) =
                inner_solve(problem, &node.mask, oracles.alpha_star, oracles.beta_star)
            {
                let t = inner.t;
                let candidate = (node.mask, inner, t);
                incumbent = match incumbent.take() {
                    None => Some(candidate),
                    Some(best) => argmin_design_abs(vec![best, candidate], TIE_TOL),
                };
            }
            continue;
        }
        let j = node.decided;
        // Reject arm j.
        let reject = node.mask.clone();
        let bound = node_bound(problem, oracles, &reject, j + 1, node.used);
        heap.push(Node {
            bound,
            decided: j + 1,
            mask: reject,
            used: node.used,
        });
        // Select arm j if budget allows.
        if node.used < k {
            let mut select = node.mask.clone();
            select[j] = true;
            let bound = node_bound(problem, oracles, &select, j + 1, node.used + 1);
            heap.push(Node {
                bound,
                decided: j + 1,
                mask: select,
                used: node.used + 1,
            });
        }
    }
    let (x, inner, _) = incumbent.ok_or(Error::AllInfeasible)?;
    assemble(problem, x, inner, oracles.alpha_star, oracles.beta_star)
}

/// Branch-and-bound variance oracle for large AtMostK menus.
fn bnb_alpha_star(problem: &DesignProblem) -> Result<(f64, crate::regret::DesignWeights)> {
    let p = problem.dim();
    let k = k_limit(problem);
    if k == p {
        // The full selection dominates: its box contains every other.
        let x = vec![true; p];
        let (s, val) = min_alpha_for_design(problem, &x);
        let gamma = gamma_from_shrinkage(&x, &s);
        return Ok((val, (x, gamma)));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: 0.0,
        decided: 0,
        mask: vec![false; p],
        used: 0,
    });
    let mut best: Option<(Vec<bool>, (EffectiveShrinkage, f64), f64)> = None;
    while let Some(node) = heap.pop() {
        if let Some((_, _, best_v)) = &best {
            let scale = best_v.abs().max(1.0);
            if node.bound > best_v + 1e-12 * scale {
                continue;
            }
        }
        if node.decided == p {
            let (s, val) = min_alpha_for_design(problem, &node.mask);
            let candidate = (node.mask, (s, val), val);
            best = match best.take() {
                None => Some(candidate),
                Some(prev) => {
                    let pair = vec![prev, candidate];
                    argmin_design(pair, 1e-12)
                }
            };
            continue;
        }
        let j = node.decided;
        let reject = node.mask.clone();
        heap.push(Node {
            bound: alpha_lower_bound(problem, &reject, j + 1),
            decided: j + 1,
            mask: reject,
            used: node.used,
        });
        if node.used < k {
            let mut select = node.mask.clone();
            select[j] = true;
            heap.push(Node {
                bound: alpha_lower_bound(problem, &select, j + 1),
                decided: j + 1,
                mask: select,
                used: node.used + 1,
            });
        }
    }
    let (x, (s, val), _) = best.ok_or(Error::AllInfeasible)?;
    let gamma = gamma_from_shrinkage(&x, &s);
    Ok((val, (x, gamma)))
}
