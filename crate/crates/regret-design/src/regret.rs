//! Variance and bias indices, oracle values, and regret evaluation.
//!
//! With the cost-weighted Neyman allocation profiled out, a design is
//! summarized by its effective shrinkage `s_j = x_j * gamma_j`:
//!
//! * variance index `alpha(s) = (1/n) (sum_j s_j |w_j| v_j sqrt(c_j))^2
//!   + (w . (1-s))' Sigma_obs (w . (1-s))`
//! * bias index `beta(s)`: squared dual norm of the loading row
//!   `w . (1-s)` under the ambiguity norm (l1 of the row for the
//!   coordinate-wise ball, max for the total-magnitude ball, Euclidean
//!   for the Euclidean ball, weighted l1 for rescaled coordinate bounds).
//!
//! The oracle values `alpha_star` / `beta_star` minimize each index
//! separately over every feasible design and shrinkage; the adaptation
//! regret of a concrete `(x, gamma)` is
//! `max(alpha/alpha_star, beta/beta_star)` with the convention 0/0 = 1.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{arm_count, design_order, DesignProblem, GammaPolicy, NormSpec};
use crate::qp::{minimize_box, minimize_box_capped, Quadratic};

/// Relative tolerance deciding that the two regret components are tied.
pub const BINDING_TOL: f64 = 1e-9;

/// Effective shrinkage `s_j = x_j * gamma_j`, each entry in `[0,1]` and zero
/// on unselected arms.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveShrinkage(Vec<f64>);

impl EffectiveShrinkage {
    /// Combines an arm-selection mask and shrinkage weights.
    pub fn from_design(x: &[bool], gamma: &[f64]) -> Result<Self> {
        if x.len() != gamma.len() {
            return Err(Error::DimensionMismatch {
                context: "selection mask vs shrinkage weights",
                expected: x.len(),
                got: gamma.len(),
            });
        }
        let mut s = Vec::with_capacity(x.len());
        for (j, (&xj, &gj)) in x.iter().zip(gamma).enumerate() {
            if !(0.0..=1.0).contains(&gj) {
                return Err(Error::InvalidInput(format!(
                    "gamma[{j}] = {gj} outside [0,1]"
                )));
            }
            s.push(if xj { gj } else { 0.0 });
        }
        Ok(Self(s))
    }

    /// Wraps raw values already satisfying the invariants.
    pub fn from_values(s: Vec<f64>) -> Result<Self> {
        for (j, &sj) in s.iter().enumerate() {
            if !(0.0..=1.0).contains(&sj) {
                return Err(Error::InvalidInput(format!("s[{j}] = {sj} outside [0,1]")));
            }
        }
        Ok(Self(s))
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which side of the max binds at a given design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Variance,
    Bias,
    Both,
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Binding::Variance => write!(f, "variance"),
            Binding::Bias => write!(f, "bias"),
            Binding::Both => write!(f, "both"),
        }
    }
}

/// Diagnostic record for one evaluated design.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretBreakdown {
    pub alpha: f64,
    pub alpha_star: f64,
    pub beta: f64,
    pub beta_star: f64,
    /// `max(alpha/alpha_star, beta/beta_star)`; may be +infinity.
    pub regret: f64,
    pub binding: Binding,
}

/// `q/d` with the conventions 0/0 = 1 and q/0 = +infinity for q > 0.
pub fn safe_ratio(q: f64, d: f64) -> f64 {
    if d > 0.0 {
        q / d
    } else if q == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn binding_of(var_ratio: f64, bias_ratio: f64) -> Binding {
    if var_ratio.is_infinite() && bias_ratio.is_infinite() {
        return Binding::Both;
    }
    let hi = var_ratio.max(bias_ratio);
    if (var_ratio - bias_ratio).abs() <= BINDING_TOL * hi.abs().max(1.0) {
        Binding::Both
    } else if var_ratio > bias_ratio {
        Binding::Variance
    } else {
        Binding::Bias
    }
}

impl RegretBreakdown {
    /// Builds the record from the two index pairs.
    pub fn from_indices(alpha: f64, alpha_star: f64, beta: f64, beta_star: f64) -> Self {
        let var_ratio = safe_ratio(alpha, alpha_star);
        let bias_ratio = safe_ratio(beta, beta_star);
        RegretBreakdown {
            alpha,
            alpha_star,
            beta,
            beta_star,
            regret: var_ratio.max(bias_ratio),
            binding: binding_of(var_ratio, bias_ratio),
        }
    }

    pub fn variance_ratio(&self) -> f64 {
        safe_ratio(self.alpha, self.alpha_star)
    }

    pub fn bias_ratio(&self) -> f64 {
        safe_ratio(self.beta, self.beta_star)
    }
}

/// Nonnegative per-arm weights entering the bias sum: `k_j |w_j|` where
/// `k` is 1 except under a weighted norm.
pub(crate) fn bias_weights(problem: &DesignProblem) -> Vec<f64> {
    let omega = problem.omega();
    match problem.norm() {
        NormSpec::Weighted(k) => omega
            .iter()
            .zip(k)
            .map(|(&w, &kj)| kj * w.abs())
            .collect(),
        _ => omega.iter().map(|&w| w.abs()).collect(),
    }
}

/// Variance index after plugging in the cost-weighted Neyman allocation.
pub fn compute_alpha(problem: &DesignProblem, s: &EffectiveShrinkage) -> f64 {
    let p = problem.dim();
    debug_assert_eq!(s.len(), p);
    let omega = problem.omega();
    let sv = s.as_slice();
    let mut exp_term = 0.0;
    for (j, arm) in problem.arms().iter().enumerate() {
        exp_term += sv[j] * omega[j].abs() * arm.v2.sqrt() * arm.cost.sqrt();
    }
    let sigma = problem.sigma_obs();
    let m: Vec<f64> = (0..p).map(|j| omega[j] * (1.0 - sv[j])).collect();
    let mut quad = 0.0;
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            row += sigma[(i, j)] * m[j];
        }
        quad += m[i] * row;
    }
    exp_term * exp_term / problem.budget() + quad
}

/// Bias index: squared dual norm of the loading row `w . (1-s)`.
pub fn compute_beta(problem: &DesignProblem, s: &EffectiveShrinkage) -> f64 {
    let omega = problem.omega();
    let sv = s.as_slice();
    match problem.norm() {
        NormSpec::Linf => {
            let sum: f64 = omega
                .iter()
                .zip(sv)
                .map(|(&w, &sj)| (1.0 - sj) * w.abs())
                .sum();
            sum * sum
        }
        NormSpec::Weighted(k) => {
            let sum: f64 = omega
                .iter()
                .zip(k)
                .zip(sv)
                .map(|((&w, &kj), &sj)| kj * (1.0 - sj) * w.abs())
                .sum();
            sum * sum
        }
        NormSpec::L1 => omega
            .iter()
            .zip(sv)
            .map(|(&w, &sj)| {
                let t = (1.0 - sj) * w.abs();
                t * t
            })
            .fold(0.0, f64::max),
        NormSpec::L2 => omega
            .iter()
            .zip(sv)
            .map(|(&w, &sj)| {
                let t = (1.0 - sj) * w;
                t * t
            })
            .sum(),
    }
}

/// Cost-weighted Neyman allocation for a given effective shrinkage:
/// `n_j = n (|w_j| v_j s_j / sqrt(c_j)) / sum_k |w_k| v_k s_k sqrt(c_k)`.
/// Exhausts the budget exactly; zero on arms with `s_j = 0`.
pub fn neyman_allocation(problem: &DesignProblem, s: &EffectiveShrinkage) -> Result<Vec<f64>> {
    let omega = problem.omega();
    let sv = s.as_slice();
    let mut denom = 0.0;
    for (j, arm) in problem.arms().iter().enumerate() {
        denom += omega[j].abs() * arm.v2.sqrt() * sv[j] * arm.cost.sqrt();
    }
    if denom <= 0.0 {
        return Err(Error::NoActiveArm);
    }
    let n = problem.budget();
    Ok(problem
        .arms()
        .iter()
        .enumerate()
        .map(|(j, arm)| n * omega[j].abs() * arm.v2.sqrt() * sv[j] / arm.cost.sqrt() / denom)
        .collect())
}

/// The variance index as a quadratic in `s` (for the inner solvers).
pub(crate) fn alpha_quadratic(problem: &DesignProblem) -> Quadratic {
    let p = problem.dim();
    let omega = problem.omega();
    let a = DVector::from_iterator(
        p,
        problem
            .arms()
            .iter()
            .enumerate()
            .map(|(j, arm)| omega[j].abs() * arm.v2.sqrt() * arm.cost.sqrt()),
    );
    let sigma = problem.sigma_obs();
    let d_omega = DMatrix::from_diagonal(&DVector::from_column_slice(omega));
    let m = &d_omega * sigma * &d_omega;
    let ones = DVector::from_element(p, 1.0);
    let m_ones = &m * &ones;
    Quadratic {
        h: &a * a.transpose() * (2.0 / problem.budget()) + &m * 2.0,
        g: &m_ones * -2.0,
        c: ones.dot(&m_ones),
    }
}

/// The bias index as a quadratic in `s`, when the norm admits one (all
/// but the total-magnitude ball, whose index is a max of quadratics).
pub(crate) fn beta_quadratic(problem: &DesignProblem) -> Option<Quadratic> {
    let p = problem.dim();
    match problem.norm() {
        NormSpec::Linf | NormSpec::Weighted(_) => {
            let w = DVector::from_vec(bias_weights(problem));
            let total: f64 = w.iter().sum();
            Some(Quadratic {
                h: &w * w.transpose() * 2.0,
                g: &w * (-2.0 * total),
                c: total * total,
            })
        }
        NormSpec::L2 => {
            let omega = problem.omega();
            let w2 = DVector::from_iterator(p, omega.iter().map(|&w| w * w));
            Some(Quadratic {
                h: DMatrix::from_diagonal(&(&w2 * 2.0)),
                g: &w2 * -2.0,
                c: w2.iter().sum(),
            })
        }
        NormSpec::L1 => None,
    }
}

pub(crate) fn active_indices(x: &[bool]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter_map(|(j, &b)| b.then_some(j))
        .collect()
}

fn expand_restricted(p: usize, keep: &[usize], restricted: &DVector<f64>) -> EffectiveShrinkage {
    let mut s = vec![0.0; p];
    for (a, &j) in keep.iter().enumerate() {
        s[j] = restricted[a].clamp(0.0, 1.0);
    }
    EffectiveShrinkage(s)
}

/// Minimum of the variance index over shrinkage for a fixed design.
pub(crate) fn min_alpha_for_design(
    problem: &DesignProblem,
    x: &[bool],
) -> (EffectiveShrinkage, f64) {
    let p = problem.dim();
    if problem.gamma_policy() == GammaPolicy::ExperimentOnly {
        let s = EffectiveShrinkage(x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let val = compute_alpha(problem, &s);
        return (s, val);
    }
    let keep = active_indices(x);
    if keep.is_empty() {
        let s = EffectiveShrinkage::zeros(p);
        let val = compute_alpha(problem, &s);
        return (s, val);
    }
    let q = alpha_quadratic(problem).restrict(&keep);
    let lo = vec![0.0; keep.len()];
    let hi = vec![1.0; keep.len()];
    let m = minimize_box(&q, &lo, &hi, None);
    let s = expand_restricted(p, &keep, &m.s);
    let val = compute_alpha(problem, &s);
    (s, val)
}

/// `min alpha(s) subject to beta(s) <= bias_cap` over the shrinkage box of
/// design `x`. `None` when even full shrinkage on the selected arms leaves
/// more bias than the cap allows.
pub(crate) fn min_alpha_with_bias_cap(
    problem: &DesignProblem,
    x: &[bool],
    bias_cap: f64,
) -> Option<(EffectiveShrinkage, f64)> {
    let p = problem.dim();
    let keep = active_indices(x);
    let feas_tol = 1e-12 * bias_cap.abs().max(1.0);
    if keep.is_empty() {
        let s = EffectiveShrinkage::zeros(p);
        let beta0 = compute_beta(problem, &s);
        if beta0 <= bias_cap + feas_tol {
            let val = compute_alpha(problem, &s);
            return Some((s, val));
        }
        return None;
    }
    match problem.norm() {
        NormSpec::L1 => {
            // The cap is coordinate-separable: (1-s_j)|w_j| <= sqrt(cap).
            let r = bias_cap.max(0.0).sqrt();
            let omega = problem.omega();
            let mut lo = vec![0.0; keep.len()];
            let hi = vec![1.0; keep.len()];
            for (j, &w) in omega.iter().enumerate() {
                if !x[j] && w.abs() * w.abs() > bias_cap + feas_tol {
                    return None;
                }
            }
            for (a, &j) in keep.iter().enumerate() {
                let need = 1.0 - r / omega[j].abs();
                lo[a] = need.clamp(0.0, 1.0);
            }
            let q = alpha_quadratic(problem).restrict(&keep);
            let m = minimize_box(&q, &lo, &hi, None);
            let s = expand_restricted(p, &keep, &m.s);
            let val = compute_alpha(problem, &s);
            Some((s, val))
        }
        _ => {
            let obj = alpha_quadratic(problem).restrict(&keep);
            let cap = beta_quadratic(problem)
                .expect("quadratic bias index")
                .restrict(&keep);
            let lo = vec![0.0; keep.len()];
            let hi = vec![1.0; keep.len()];
            let m = minimize_box_capped(&obj, &cap, bias_cap, &lo, &hi)?;
            let s = expand_restricted(p, &keep, &m.s);
            let val = compute_alpha(problem, &s);
            Some((s, val))
        }
    }
}

/// `min_s alpha(s) + weight * beta(s)` for a fixed design (the envelope
/// integrand of the oracle at a known squared bias radius).
pub(crate) fn min_weighted_index(problem: &DesignProblem, x: &[bool], weight: f64) -> f64 {
    let p = problem.dim();
    let keep = active_indices(x);
    if keep.is_empty() {
        let s = EffectiveShrinkage::zeros(p);
        return compute_alpha(problem, &s) + weight * compute_beta(problem, &s);
    }
    if problem.gamma_policy() == GammaPolicy::ExperimentOnly {
        let s = EffectiveShrinkage(x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        return compute_alpha(problem, &s) + weight * compute_beta(problem, &s);
    }
    match beta_quadratic(problem) {
        Some(bq) => {
            let q = alpha_quadratic(problem)
                .add_scaled(&bq, weight)
                .restrict(&keep);
            let lo = vec![0.0; keep.len()];
            let hi = vec![1.0; keep.len()];
            let m = minimize_box(&q, &lo, &hi, None);
            let s = expand_restricted(p, &keep, &m.s);
            compute_alpha(problem, &s) + weight * compute_beta(problem, &s)
        }
        None => {
            // Total-magnitude ball: parameterize by the bias budget y and
            // minimize the convex scalar map y -> weight*y + g_x(y).
            let s_full = EffectiveShrinkage(
                x.iter()
                    .map(|&b| if b { 1.0 } else { 0.0 })
                    .collect::<Vec<_>>(),
            );
            let y_min = compute_beta(problem, &s_full);
            let y_max = compute_beta(problem, &EffectiveShrinkage::zeros(p));
            let eval = |y: f64| -> f64 {
                match min_alpha_with_bias_cap(problem, x, y) {
                    Some((_, a)) => a + weight * y,
                    None => f64::INFINITY,
                }
            };
            golden_min(y_min, y_max, eval)
        }
    }
}

/// Golden-section minimization of a convex scalar function.
pub(crate) fn golden_min(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return f(lo);
    }
    const PHI: f64 = 0.618_033_988_749_894_8;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - PHI * (b - a);
    let mut x2 = a + PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs() + 1.0) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + PHI * (b - a);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(a)).min(f(b))
}

/// Deterministic argmin over per-design results: value, then fewer arms,
/// then the canonical design order. `tie_tol` is relative.
pub(crate) fn argmin_design<T>(
    results: Vec<(Vec<bool>, T, f64)>,
    tie_tol: f64,
) -> Option<(Vec<bool>, T, f64)> {
    let mut best: Option<(Vec<bool>, T, f64)> = None;
    for (x, payload, value) in results {
        match &best {
            None => best = Some((x, payload, value)),
            Some((bx, _, bv)) => {
                let scale = bv.abs().max(value.abs()).max(1e-300);
                let tied = (value - bv).abs() <= tie_tol * scale;
                let better = if tied {
                    match arm_count(&x).cmp(&arm_count(bx)) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => {
                            design_order(&x, bx) == std::cmp::Ordering::Less
                        }
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

/// An arm-selection mask together with its shrinkage weights.
pub type DesignWeights = (Vec<bool>, Vec<f64>);

/// Smallest feasible variance index and its achieving design/shrinkage.
pub fn oracle_alpha_star(problem: &DesignProblem) -> Result<(f64, DesignWeights)> {
    let designs = problem.feasible_designs()?;
    let results: Vec<(Vec<bool>, EffectiveShrinkage, f64)> = designs
        .into_par_iter()
        .map(|x| {
            let (s, val) = min_alpha_for_design(problem, &x);
            (x, s, val)
        })
        .collect();
    let (x, s, val) = argmin_design(results, 1e-12).expect("nonempty feasible set");
    let gamma = gamma_from_shrinkage(&x, &s);
    Ok((val, (x, gamma)))
}

/// Smallest feasible bias index (shrinkage pinned to 1 on selected arms)
/// and its achieving design. Ties go to the canonical-order smallest x.
pub fn oracle_beta_star(problem: &DesignProblem) -> Result<(f64, Vec<bool>)> {
    let designs = problem.feasible_designs()?;
    let mut best: Option<(f64, Vec<bool>)> = None;
    for x in designs {
        let s = EffectiveShrinkage(
            x.iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        let val = compute_beta(problem, &s);
        let better = match &best {
            None => true,
            Some((bv, bx)) => {
                val < *bv
                    || (val == *bv && design_order(&x, bx) == std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((val, x));
        }
    }
    best.ok_or(Error::EmptyFeasibilitySet)
}

/// Reported shrinkage weights: `s_j` on selected arms, 1 by convention on
/// unselected ones.
pub fn gamma_from_shrinkage(x: &[bool], s: &EffectiveShrinkage) -> Vec<f64> {
    x.iter()
        .zip(s.as_slice())
        .map(|(&xj, &sj)| if xj { sj } else { 1.0 })
        .collect()
}

/// Evaluates the adaptation regret of `(x, gamma)` against precomputed
/// oracle values.
pub fn regret(
    problem: &DesignProblem,
    x: &[bool],
    gamma: &[f64],
    alpha_star: f64,
    beta_star: f64,
) -> Result<RegretBreakdown> {
    let s = EffectiveShrinkage::from_design(x, gamma)?;
    let alpha = compute_alpha(problem, &s);
    let beta = compute_beta(problem, &s);
    Ok(RegretBreakdown::from_indices(
        alpha, alpha_star, beta, beta_star,
    ))
}
