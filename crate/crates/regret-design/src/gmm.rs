//! Moment-selection generalization.
//!
//! Estimators are linear in a stacked moment vector: `theta_hat - theta =
//! Gamma(W) g_bar` with `Gamma(W) = -(L'WL)^{-1} L'W` for a known moment
//! Jacobian `L` and a chosen weighting matrix `W`. Experimental moments
//! (indices in `experimental_idx`) are unbiased by design; the rest may
//! carry bias bounded in an arbitrary norm. The variance index is the
//! trace of the target map's sandwich variance, and the bias index is the
//! squared dual norm of the target loadings on the biased columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{DesignProblem, NormSpec};
use crate::regret::{
    compute_alpha, compute_beta, neyman_allocation, safe_ratio, EffectiveShrinkage,
    RegretBreakdown,
};

/// Condition-number ceiling for inverting the normal matrix `L'WL`.
const MAX_CONDITION: f64 = 1e12;

/// Sign-vertex enumeration cap for the coordinate-wise dual norm.
const VERTEX_CAP: usize = 24;

/// Experimental-moment variance profile: either a fixed covariance or a
/// base plus per-moment variances shrinking with an allocated sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    Fixed(DMatrix<f64>),
    /// `base + sum_j (v2_j / n_j) e_j e_j'` with the allocation `n`
    /// minimizing the variance index under `sum_j cost_j n_j = budget`.
    Profiled {
        base: DMatrix<f64>,
        arms: Vec<AllocatedMoment>,
        budget: f64,
    },
}

/// One sample-allocation arm of a profiled covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatedMoment {
    pub moment: usize,
    pub v2: f64,
    pub cost: f64,
}

/// One candidate design: a weighting matrix and its covariance profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub w: DMatrix<f64>,
    pub sigma: SigmaSpec,
}

/// A validated moment-selection model.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentModel {
    lambda: DMatrix<f64>,
    omega_mat: DMatrix<f64>,
    experimental_idx: Vec<usize>,
    candidates: Vec<Candidate>,
    norm: NormSpec,
}

impl MomentModel {
    pub fn new(
        lambda: DMatrix<f64>,
        omega_mat: DMatrix<f64>,
        experimental_idx: Vec<usize>,
        candidates: Vec<Candidate>,
        norm: NormSpec,
    ) -> Result<Self> {
        let (p_g, d) = (lambda.nrows(), lambda.ncols());
        if d > p_g {
            return Err(Error::DimensionMismatch {
                context: "moment Jacobian must have at least as many rows as columns",
                expected: d,
                got: p_g,
            });
        }
        let svd = lambda.clone().svd(false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        if smin <= 0.0 || smax / smin > MAX_CONDITION {
            return Err(Error::InvalidInput(
                "moment Jacobian is column-rank deficient".to_string(),
            ));
        }
        if omega_mat.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "target map columns",
                expected: d,
                got: omega_mat.ncols(),
            });
        }
        if omega_mat.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("target map is the zero matrix".into()));
        }
        let mut experimental_idx = experimental_idx;
        experimental_idx.sort_unstable();
        experimental_idx.dedup();
        if experimental_idx.iter().any(|&i| i >= p_g) {
            return Err(Error::InvalidInput(
                "experimental moment index out of range".into(),
            ));
        }
        if candidates.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        for cand in &candidates {
            if cand.w.nrows() != p_g || cand.w.ncols() != p_g {
                return Err(Error::DimensionMismatch {
                    context: "weighting matrix must be p_g x p_g",
                    expected: p_g,
                    got: cand.w.nrows().max(cand.w.ncols()),
                });
            }
            gamma_matrix(&lambda, &cand.w)?;
            match &cand.sigma {
                SigmaSpec::Fixed(sig) => {
                    validate_sigma(sig, p_g, &cand.w)?;
                }
                SigmaSpec::Profiled { base, arms, budget } => {
                    if base.nrows() != p_g || base.ncols() != p_g {
                        return Err(Error::DimensionMismatch {
                            context: "profiled covariance base",
                            expected: p_g,
                            got: base.nrows().max(base.ncols()),
                        });
                    }
                    if !(budget.is_finite() && *budget > 0.0) {
                        return Err(Error::NonpositiveBudget(*budget));
                    }
                    for arm in arms {
                        if arm.moment >= p_g || !(arm.v2 > 0.0 && arm.cost > 0.0) {
                            return Err(Error::InvalidInput(
                                "profiled arm needs a valid moment index and positive v2/cost"
                                    .into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(Self {
            lambda,
            omega_mat,
            experimental_idx,
            candidates,
            norm,
        })
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn omega_mat(&self) -> &DMatrix<f64> {
        &self.omega_mat
    }

    pub fn experimental_idx(&self) -> &[usize] {
        &self.experimental_idx
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn moment_count(&self) -> usize {
        self.lambda.nrows()
    }

    /// Complement of the experimental index set (the biased columns).
    pub fn observational_idx(&self) -> Vec<usize> {
        (0..self.moment_count())
            .filter(|i| !self.experimental_idx.contains(i))
            .collect()
    }
}

fn validate_sigma(sigma: &DMatrix<f64>, p_g: usize, w: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != p_g || sigma.ncols() != p_g {
        return Err(Error::DimensionMismatch {
            context: "candidate covariance must be p_g x p_g",
            expected: p_g,
            got: sigma.nrows().max(sigma.ncols()),
        });
    }
    let max_abs = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..p_g {
        for j in (i + 1)..p_g {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * max_abs.max(1.0) {
                return Err(Error::InvalidInput("candidate covariance asymmetric".into()));
            }
        }
    }
    let eig = sigma.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min_eig < -1e-10 * max_eig.abs() {
        return Err(Error::NonPsdCovariance { min_eig });
    }
    // Selected moments (nonzero weighting column) need nondegenerate
    // variance.
    for j in 0..p_g {
        let col_used = (0..p_g).any(|i| w[(i, j)] != 0.0);
        if col_used && sigma[(j, j)].partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidInput(format!(
                "selected moment {j} has nonpositive variance"
            )));
        }
    }
    Ok(())
}

/// `Gamma(W) = -(L'WL)^{-1} L'W`, the moment-to-parameter loading matrix.
pub fn gamma_matrix(lambda: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lt_w = lambda.transpose() * w;
    let normal = &lt_w * lambda;
    let svd = normal.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    if smin <= 0.0 || smax / smin > MAX_CONDITION {
        return Err(Error::SingularNormalMatrix {
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let solved = svd
        .solve(&lt_w, 0.0)
        .map_err(|_| Error::SingularNormalMatrix { cond: smax / smin })?;
    Ok(-solved)
}

/// Dual operator norm `sup { ||Mu||_2 : ||u|| <= 1 }` for the ambiguity
/// norm. Euclidean gives the largest singular value; total-magnitude the
/// largest column norm; coordinate-wise an exact maximum over sign
/// vertices (capped at 2^24); weighted rescales columns first.
pub fn dual_norm(m: &DMatrix<f64>, norm: &NormSpec) -> Result<f64> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok(0.0);
    }
    match norm {
        NormSpec::L2 => {
            let svd = m.clone().svd(false, false);
            Ok(svd.singular_values.iter().cloned().fold(0.0f64, f64::max))
        }
        NormSpec::L1 => Ok((0..cols)
            .map(|j| m.column(j).norm())
            .fold(0.0f64, f64::max)),
        NormSpec::Linf => vertex_max(m),
        NormSpec::Weighted(k) => {
            if k.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "weighted-norm factors vs matrix columns",
                    expected: cols,
                    got: k.len(),
                });
            }
            let scaled = m * DMatrix::from_diagonal(&DVector::from_column_slice(k));
            vertex_max(&scaled)
        }
    }
}

/// Exact maximum of `||Mu||_2` over sign vectors `u` (vertices of the
/// coordinate-wise unit ball). `u` and `-u` coincide, so only half the
/// vertices are scanned.
fn vertex_max(m: &DMatrix<f64>) -> Result<f64> {
    let cols = m.ncols();
    if cols > VERTEX_CAP {
        return Err(Error::VertexEnumerationTooLarge {
            m: cols,
            cap: VERTEX_CAP,
        });
    }
    let rows = m.nrows();
    let mut best = 0.0f64;
    let half: u64 = 1 << (cols - 1);
    let mut mu = vec![0.0f64; rows];
    for mask in 0..half {
        for (i, v) in mu.iter_mut().enumerate() {
            let mut acc = m[(i, 0)];
            for j in 1..cols {
                let sign = if mask >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 };
                acc += sign * m[(i, j)];
            }
            *v = acc;
        }
        let norm_sq: f64 = mu.iter().map(|v| v * v).sum();
        best = best.max(norm_sq);
    }
    Ok(best.sqrt())
}

/// Variance index `trace(Omega Gamma Sigma Gamma' Omega')`.
pub fn alpha_gmm(omega_mat: &DMatrix<f64>, gamma: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let og = omega_mat * gamma;
    (&og * sigma * og.transpose()).trace()
}

/// Bias index: squared dual norm of the target loadings on the
/// observational (potentially biased) columns.
pub fn beta_gmm(
    omega_mat: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    experimental_idx: &[usize],
    norm: &NormSpec,
) -> Result<f64> {
    let og = omega_mat * gamma;
    let keep: Vec<usize> = (0..gamma.ncols())
        .filter(|i| !experimental_idx.contains(i))
        .collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    let restricted = og.select_columns(keep.iter());
    let dn = dual_norm(&restricted, norm)?;
    Ok(dn * dn)
}

/// Materializes a candidate's covariance: fixed ones pass through, and
/// profiled ones are realized at the allocation minimizing the model's
/// variance index under the budget.
pub fn candidate_sigma(model: &MomentModel, index: usize) -> Result<DMatrix<f64>> {
    let cand = &model.candidates[index];
    match &cand.sigma {
        SigmaSpec::Fixed(sig) => Ok(sig.clone()),
        SigmaSpec::Profiled { base, arms, budget } => {
            let gamma = gamma_matrix(&model.lambda, &cand.w)?;
            let og = model.omega_mat() * &gamma;
            // Per-arm variance load a_j = v2_j * ||column_j(Omega Gamma)||^2.
            let loads: Vec<f64> = arms
                .iter()
                .map(|arm| arm.v2 * og.column(arm.moment).norm_squared())
                .collect();
            let denom: f64 = loads
                .iter()
                .zip(arms)
                .map(|(a, arm)| (a * arm.cost).sqrt())
                .sum();
            let mut sigma = base.clone();
            for (a, arm) in loads.iter().zip(arms) {
                let n_j = if denom > 0.0 && *a > 0.0 {
                    budget * (a / arm.cost).sqrt() / denom
                } else {
                    0.0
                };
                // Unallocated moments keep a unit-sample variance; their
                // loading is zero whenever the allocation is zero.
                sigma[(arm.moment, arm.moment)] +=
                    if n_j > 0.0 { arm.v2 / n_j } else { arm.v2 };
            }
            Ok(sigma)
        }
    }
}

/// Variance index of one candidate (profiled covariances use the
/// closed-form allocation optimum).
pub fn candidate_alpha(model: &MomentModel, index: usize) -> Result<f64> {
    let cand = &model.candidates[index];
    let gamma = gamma_matrix(&model.lambda, &cand.w)?;
    match &cand.sigma {
        SigmaSpec::Fixed(sig) => Ok(alpha_gmm(model.omega_mat(), &gamma, sig)),
        SigmaSpec::Profiled { base, arms, budget } => {
            let og = model.omega_mat() * &gamma;
            let base_term = (&og * base * og.transpose()).trace();
            let root_sum: f64 = arms
                .iter()
                .map(|arm| {
                    let load = arm.v2 * og.column(arm.moment).norm_squared();
                    (load * arm.cost).sqrt()
                })
                .sum();
            Ok(base_term + root_sum * root_sum / budget)
        }
    }
}

/// Bias index of one candidate.
pub fn candidate_beta(model: &MomentModel, index: usize) -> Result<f64> {
    let cand = &model.candidates[index];
    let gamma = gamma_matrix(&model.lambda, &cand.w)?;
    beta_gmm(
        model.omega_mat(),
        &gamma,
        &model.experimental_idx,
        &model.norm,
    )
}

/// Regret of one candidate against exhaustive minimization over the menu.
pub fn regret_gmm(model: &MomentModel, candidate_index: usize) -> Result<RegretBreakdown> {
    if candidate_index >= model.candidates.len() {
        return Err(Error::InvalidInput(format!(
            "candidate index {candidate_index} out of range"
        )));
    }
    let alphas: Vec<f64> = (0..model.candidates.len())
        .map(|i| candidate_alpha(model, i))
        .collect::<Result<_>>()?;
    let betas: Vec<f64> = (0..model.candidates.len())
        .map(|i| candidate_beta(model, i))
        .collect::<Result<_>>()?;
    let alpha_star = alphas.iter().cloned().fold(f64::MAX, f64::min);
    let beta_star = betas.iter().cloned().fold(f64::MAX, f64::min);
    Ok(RegretBreakdown::from_indices(
        alphas[candidate_index],
        alpha_star,
        betas[candidate_index],
        beta_star,
    ))
}

/// Embeds a shrinkage design as a moment model: observational moments for
/// every coordinate plus one experimental moment per selected arm, a
/// diagonal weighting encoding the shrinkage split, and the block
/// covariance at the design's Neyman allocation.
pub fn embed_shrinkage(
    problem: &DesignProblem,
    x: &[bool],
    gamma: &[f64],
) -> Result<(MomentModel, usize)> {
    let p = problem.dim();
    let s = EffectiveShrinkage::from_design(x, gamma)?;
    let selected: Vec<usize> = (0..p).filter(|&j| x[j]).collect();
    let e = selected.len();
    let p_g = p + e;

    let mut lambda = DMatrix::zeros(p_g, p);
    for j in 0..p {
        lambda[(j, j)] = -1.0;
    }
    for (row, &j) in selected.iter().enumerate() {
        lambda[(p + row, j)] = -1.0;
    }

    let mut w = DMatrix::zeros(p_g, p_g);
    for j in 0..p {
        w[(j, j)] = if x[j] { 1.0 - gamma[j] } else { 1.0 };
    }
    for (row, &j) in selected.iter().enumerate() {
        w[(p + row, p + row)] = gamma[j];
    }

    let any_active = s.as_slice().iter().any(|&v| v > 0.0);
    let alloc = if any_active {
        neyman_allocation(problem, &s)?
    } else {
        vec![0.0; p]
    };
    let mut sigma = DMatrix::zeros(p_g, p_g);
    let sigma_obs = problem.sigma_obs();
    for i in 0..p {
        for j in 0..p {
            sigma[(i, j)] = sigma_obs[(i, j)];
        }
    }
    for (row, &j) in selected.iter().enumerate() {
        let arm = &problem.arms()[j];
        // Zero-weight experimental moments keep a unit-sample variance;
        // their loading in the estimator is exactly zero.
        sigma[(p + row, p + row)] = if alloc[j] > 0.0 {
            arm.v2 / alloc[j]
        } else {
            arm.v2
        };
    }

    let omega_mat = DMatrix::from_row_slice(1, p, problem.omega());
    let experimental_idx: Vec<usize> = (p..p_g).collect();
    let model = MomentModel::new(
        lambda,
        omega_mat,
        experimental_idx,
        vec![Candidate {
            w,
            sigma: SigmaSpec::Fixed(sigma),
        }],
        problem.norm().clone(),
    )?;
    Ok((model, 0))
}

/// Embeds several shrinkage designs of one problem as a candidate menu
/// over a shared moment space: observational plus experimental moments
/// for every arm, with unselected arms' experimental moments dropped by
/// zero weighting columns. Menu oracles then coincide with the shrinkage
/// oracles whenever the menu contains the oracle-attaining designs.
pub fn embed_shrinkage_menu(
    problem: &DesignProblem,
    designs: &[(Vec<bool>, Vec<f64>)],
) -> Result<MomentModel> {
    let p = problem.dim();
    let p_g = 2 * p;
    let mut lambda = DMatrix::zeros(p_g, p);
    for j in 0..p {
        lambda[(j, j)] = -1.0;
        lambda[(p + j, j)] = -1.0;
    }
    let mut candidates = Vec::with_capacity(designs.len());
    for (x, gamma) in designs {
        let s = EffectiveShrinkage::from_design(x, gamma)?;
        let mut w = DMatrix::zeros(p_g, p_g);
        for j in 0..p {
            w[(j, j)] = 1.0 - s.as_slice()[j];
            w[(p + j, p + j)] = s.as_slice()[j];
        }
        let any_active = s.as_slice().iter().any(|&v| v > 0.0);
        let alloc = if any_active {
            neyman_allocation(problem, &s)?
        } else {
            vec![0.0; p]
        };
        let mut sigma = DMatrix::zeros(p_g, p_g);
        let sigma_obs = problem.sigma_obs();
        for i in 0..p {
            for j in 0..p {
                sigma[(i, j)] = sigma_obs[(i, j)];
            }
        }
        for (j, arm) in problem.arms().iter().enumerate() {
            sigma[(p + j, p + j)] = if alloc[j] > 0.0 {
                arm.v2 / alloc[j]
            } else {
                arm.v2
            };
        }
        candidates.push(Candidate {
            w,
            sigma: SigmaSpec::Fixed(sigma),
        });
    }
    MomentModel::new(
        lambda,
        DMatrix::from_row_slice(1, p, problem.omega()),
        (p..p_g).collect(),
        candidates,
        problem.norm().clone(),
    )
}

/// Largest relative gap between the embedded moment-model indices and the
/// shrinkage-form ones for a given design. Test hook.
pub fn embedding_gap(problem: &DesignProblem, x: &[bool], gamma: &[f64]) -> Option<f64> {
    let (model, idx) = embed_shrinkage(problem, x, gamma).ok()?;
    let alpha_m = candidate_alpha(&model, idx).ok()?;
    let beta_m = candidate_beta(&model, idx).ok()?;
    let s = EffectiveShrinkage::from_design(x, gamma).ok()?;
    let alpha_s = compute_alpha(problem, &s);
    let beta_s = compute_beta(problem, &s);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    Some(rel(alpha_m, alpha_s).max(rel(beta_m, beta_s)))
}

/// Sup of the worst-case-MSE ratio of one candidate over a radius grid,
/// with the oracle denominator minimized over the menu pointwise. Used
/// to verify the max-formula characterization on fixed menus.
pub fn gmm_radius_scan(model: &MomentModel, candidate_index: usize, b_grid: &[f64]) -> Result<f64> {
    let alphas: Vec<f64> = (0..model.candidates.len())
        .map(|i| candidate_alpha(model, i))
        .collect::<Result<_>>()?;
    let betas: Vec<f64> = (0..model.candidates.len())
        .map(|i| candidate_beta(model, i))
        .collect::<Result<_>>()?;
    let mut sup = f64::NEG_INFINITY;
    for &radius in b_grid {
        let b2 = radius * radius;
        let num = alphas[candidate_index] + b2 * betas[candidate_index];
        let den = alphas
            .iter()
            .zip(&betas)
            .map(|(a, b)| a + b2 * b)
            .fold(f64::MAX, f64::min);
        sup = sup.max(safe_ratio(num, den));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ExperimentArm, FeasibilitySet, GammaPolicy, ObservationalEvidence, SensitivityVector,
    };
    use crate::rng::CounterRng;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_identity_jacobian() {
        let lambda = DMatrix::<f64>::identity(3, 3);
        let w = DMatrix::<f64>::identity(3, 3);
        let g = gamma_matrix(&lambda, &w).unwrap();
        assert_relative_eq!(g, -DMatrix::<f64>::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn gamma_residual_identity() {
        let mut rng = CounterRng::new(3);
        for _ in 0..20 {
            let p_g = 4;
            let d = 2;
            let lambda = DMatrix::from_fn(p_g, d, |_, _| rng.next_normal());
            let half = DMatrix::from_fn(p_g, p_g, |_, _| rng.next_normal());
            let w = &half * half.transpose() + DMatrix::identity(p_g, p_g) * 0.1;
            let g = gamma_matrix(&lambda, &w).unwrap();
            let residual = (&g * &lambda + DMatrix::identity(d, d)).norm();
            assert!(residual <= 1e-8, "residual {residual}");
        }
    }

    #[test]
    fn zero_weight_column_zeroes_gamma_column() {
        // Two observational + two experimental moments; the second
        // experimental moment is dropped by the weighting.
        let lambda = DMatrix::from_row_slice(
            4,
            2,
            &[-1.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0, -1.0],
        );
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 0)] = 0.7;
        w[(1, 1)] = 1.3;
        w[(2, 2)] = 0.9;
        // Column/row 3 all zero.
        let g = gamma_matrix(&lambda, &w).unwrap();
        for i in 0..2 {
            assert_eq!(g[(i, 3)], 0.0);
        }
    }

    #[test]
    fn block_weighting_pair_selects_one_experimental_moment() {
        // Two observational and two experimental moments for two
        // parameters; each block weighting keeps the observational block
        // and zeroes one experimental moment. The bias index differs only
        // through the induced loadings.
        let lambda = DMatrix::from_row_slice(
            4,
            2,
            &[-1.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0, -1.0],
        );
        let (w_obs1, w_obs2, rho, w_exp) = (0.8, 1.1, 0.2, 0.9);
        let mut w1 = DMatrix::zeros(4, 4);
        w1[(0, 0)] = w_obs1;
        w1[(1, 1)] = w_obs2;
        w1[(0, 1)] = rho;
        w1[(1, 0)] = rho;
        w1[(2, 2)] = w_exp;
        let mut w2 = w1.clone();
        w2[(2, 2)] = 0.0;
        w2[(3, 3)] = w_exp;
        let omega = DMatrix::from_row_slice(1, 2, &[1.0, -0.5]);
        let g1 = gamma_matrix(&lambda, &w1).unwrap();
        let g2 = gamma_matrix(&lambda, &w2).unwrap();
        // The dropped experimental moment has an exactly-zero loading.
        assert_eq!(g1.column(3).iter().filter(|v| **v != 0.0).count(), 0);
        assert_eq!(g2.column(2).iter().filter(|v| **v != 0.0).count(), 0);
        // Both keep the observational columns; the bias index moves only
        // through the loadings.
        let b1 = beta_gmm(&omega, &g1, &[2, 3], &NormSpec::Linf).unwrap();
        let b2 = beta_gmm(&omega, &g2, &[2, 3], &NormSpec::Linf).unwrap();
        let manual = |g: &DMatrix<f64>| {
            let og = &omega * g;
            (og[(0, 0)].abs() + og[(0, 1)].abs()).powi(2)
        };
        assert_relative_eq!(b1, manual(&g1), max_relative = 1e-12);
        assert_relative_eq!(b2, manual(&g2), max_relative = 1e-12);
        assert!(b1 != b2);
    }

    #[test]
    fn linf_vertex_attains_worst_case_bias() {
        // Scalar target: the sign vertex of radius B reaches B^2 times
        // the bias index.
        let mut rng = CounterRng::new(29);
        let lambda = DMatrix::from_fn(4, 2, |_, _| rng.next_normal());
        let half = DMatrix::from_fn(4, 4, |_, _| rng.next_normal() * 0.5);
        let w = &half * half.transpose() + DMatrix::identity(4, 4) * 0.2;
        let omega = DMatrix::from_row_slice(1, 2, &[1.2, -0.6]);
        let g = gamma_matrix(&lambda, &w).unwrap();
        let biased = [0usize, 1];
        let beta = beta_gmm(&omega, &g, &[2, 3], &NormSpec::Linf).unwrap();
        let og = &omega * &g;
        let radius = 1.7;
        let mut best = 0.0f64;
        for mask in 0..4u32 {
            let mut load = 0.0;
            for (bit, &j) in biased.iter().enumerate() {
                let sign = if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
                load += og[(0, j)] * sign * radius;
            }
            best = best.max(load * load);
        }
        assert_relative_eq!(best, radius * radius * beta, max_relative = 1e-12);
    }

    #[test]
    fn dual_norm_row_vector_cases() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 3.0]);
        assert_relative_eq!(dual_norm(&m, &NormSpec::Linf).unwrap(), 6.0);
        assert_relative_eq!(
            dual_norm(&m, &NormSpec::Weighted(vec![1.0, 2.0, 1.0])).unwrap(),
            8.0
        );
        assert_relative_eq!(dual_norm(&m, &NormSpec::L1).unwrap(), 3.0);
        assert_relative_eq!(dual_norm(&m, &NormSpec::L2).unwrap(), 14.0f64.sqrt());
    }

    #[test]
    fn dual_norm_identity_spectral() {
        let m = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(dual_norm(&m, &NormSpec::L2).unwrap(), 1.0);
    }

    #[test]
    fn dual_norm_nesting() {
        let mut rng = CounterRng::new(17);
        for _ in 0..30 {
            let m = DMatrix::from_fn(2, 4, |_, _| rng.next_normal());
            let l1 = dual_norm(&m, &NormSpec::L1).unwrap();
            let l2 = dual_norm(&m, &NormSpec::L2).unwrap();
            let linf = dual_norm(&m, &NormSpec::Linf).unwrap();
            assert!(linf >= l2 - 1e-12);
            assert!(l2 >= l1 - 1e-12);
        }
    }

    #[test]
    fn vertex_cap_enforced() {
        let m = DMatrix::zeros(1, 25);
        assert!(matches!(
            dual_norm(&m, &NormSpec::Linf),
            Err(Error::VertexEnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn alpha_gmm_trace_identity() {
        let d = 3;
        let omega = DMatrix::<f64>::identity(d, d);
        let gamma = -DMatrix::<f64>::identity(d, d);
        let sigma = DMatrix::<f64>::identity(d, d);
        assert_relative_eq!(alpha_gmm(&omega, &gamma, &sigma), d as f64);
        assert_relative_eq!(alpha_gmm(&omega, &gamma, &(sigma * 2.0)), 2.0 * d as f64);
    }

    #[test]
    fn beta_gmm_no_biased_columns() {
        let omega = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let gamma = -DMatrix::<f64>::identity(2, 2);
        let beta = beta_gmm(&omega, &gamma, &[0, 1], &NormSpec::Linf).unwrap();
        assert_eq!(beta, 0.0);
    }

    #[test]
    fn beta_gmm_scale_invariant_in_w() {
        let mut rng = CounterRng::new(23);
        let lambda = DMatrix::from_fn(4, 2, |_, _| rng.next_normal());
        let half = DMatrix::from_fn(4, 4, |_, _| rng.next_normal());
        let w = &half * half.transpose() + DMatrix::identity(4, 4) * 0.2;
        let omega = DMatrix::from_row_slice(1, 2, &[0.5, -1.5]);
        let g1 = gamma_matrix(&lambda, &w).unwrap();
        let g2 = gamma_matrix(&lambda, &(&w * 7.5)).unwrap();
        let b1 = beta_gmm(&omega, &g1, &[3], &NormSpec::Linf).unwrap();
        let b2 = beta_gmm(&omega, &g2, &[3], &NormSpec::Linf).unwrap();
        assert_relative_eq!(b1, b2, max_relative = 1e-10);
    }

    fn shrinkage_problem(p: usize, seed: u64) -> DesignProblem {
        let mut rng = CounterRng::new(seed);
        let omega: Vec<f64> = (0..p).map(|_| rng.next_normal() + 2.0).collect();
        let mut sigma = DMatrix::zeros(p, p);
        for j in 0..p {
            sigma[(j, j)] = rng.next_uniform() + 0.5;
        }
        DesignProblem::new(
            SensitivityVector::new(omega).unwrap(),
            ObservationalEvidence::new(vec![0.0; p], sigma).unwrap(),
            (0..p)
                .map(|j| {
                    ExperimentArm::new(format!("arm{j}"), rng.next_uniform() + 0.5, 1.0).unwrap()
                })
                .collect(),
            2.0,
            FeasibilitySet::AtMostK(p),
            NormSpec::Linf,
            GammaPolicy::Free,
        )
        .unwrap()
    }

    #[test]
    fn scalar_embedding_is_convex_combination() {
        let problem = shrinkage_problem(1, 61);
        let (model, _) = embed_shrinkage(&problem, &[true], &[0.5]).unwrap();
        let g = gamma_matrix(model.lambda(), &model.candidates()[0].w).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[(0, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unselected_arm_loads_only_observational() {
        let problem = shrinkage_problem(2, 67);
        let (model, _) = embed_shrinkage(&problem, &[true, false], &[0.7, 1.0]).unwrap();
        let g = gamma_matrix(model.lambda(), &model.candidates()[0].w).unwrap();
        // Row 1 (second parameter) loads 1.0 on its observational moment
        // and nothing on the experimental one.
        assert_relative_eq!(g[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g[(1, 2)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn embedding_reproduces_shrinkage_indices() {
        for seed in 0..20u64 {
            let p = 2 + (seed % 3) as usize;
            let problem = shrinkage_problem(p, 100 + seed);
            let mut rng = CounterRng::new(seed);
            let x: Vec<bool> = (0..p).map(|_| rng.next_uniform() < 0.7).collect();
            let gamma: Vec<f64> = (0..p).map(|_| rng.next_uniform()).collect();
            let gap = embedding_gap(&problem, &x, &gamma).unwrap();
            assert!(gap <= 1e-10, "gap {gap} at seed {seed}");
        }
    }

    #[test]
    fn menu_embedding_reproduces_regret() {
        use crate::regret::{oracle_alpha_star, oracle_beta_star, regret};
        for seed in 0..10u64 {
            let p = 2 + (seed % 2) as usize;
            let problem = shrinkage_problem(p, 300 + seed);
            let mut rng = CounterRng::new(seed);
            let x: Vec<bool> = (0..p).map(|_| rng.next_uniform() < 0.6).collect();
            let gamma: Vec<f64> = (0..p).map(|_| rng.next_uniform()).collect();
            let (alpha_star, var_argmin) = oracle_alpha_star(&problem).unwrap();
            let (beta_star, bias_x) = oracle_beta_star(&problem).unwrap();
            let breakdown = regret(&problem, &x, &gamma, alpha_star, beta_star).unwrap();
            // Menu containing the evaluated design plus both
            // oracle-attaining designs.
            let bias_gamma = vec![1.0; p];
            let menu = vec![
                (x.clone(), gamma.clone()),
                var_argmin,
                (bias_x, bias_gamma),
            ];
            let model = embed_shrinkage_menu(&problem, &menu).unwrap();
            let b = regret_gmm(&model, 0).unwrap();
            assert_relative_eq!(b.alpha, breakdown.alpha, max_relative = 1e-10);
            assert_relative_eq!(b.beta, breakdown.beta, max_relative = 1e-10);
            if breakdown.regret.is_finite() {
                assert_relative_eq!(b.regret, breakdown.regret, max_relative = 1e-8);
            } else {
                // Full-coverage menus: zero bias oracle on both routes.
                assert!(b.regret.is_infinite());
            }
        }
    }

    #[test]
    fn single_candidate_regret_is_one() {
        let problem = shrinkage_problem(2, 71);
        let (model, idx) = embed_shrinkage(&problem, &[true, true], &[0.4, 0.9]).unwrap();
        let breakdown = regret_gmm(&model, idx).unwrap();
        assert_relative_eq!(breakdown.regret, 1.0);
    }

    #[test]
    fn profiled_candidate_matches_shrinkage_alpha() {
        // Replace the fixed covariance with a profiled family and check
        // the closed-form allocation reproduces the profiled variance
        // index.
        let problem = shrinkage_problem(2, 83);
        let x = [true, true];
        let gamma = [0.6, 0.8];
        let (model, _) = embed_shrinkage(&problem, &x, &gamma).unwrap();
        let p = 2;
        let mut base = DMatrix::zeros(4, 4);
        for i in 0..p {
            for j in 0..p {
                base[(i, j)] = problem.sigma_obs()[(i, j)];
            }
        }
        let arms: Vec<AllocatedMoment> = (0..2)
            .map(|row| AllocatedMoment {
                moment: p + row,
                v2: problem.arms()[row].v2,
                cost: problem.arms()[row].cost,
            })
            .collect();
        let profiled = MomentModel::new(
            model.lambda().clone(),
            model.omega_mat().clone(),
            model.experimental_idx().to_vec(),
            vec![Candidate {
                w: model.candidates()[0].w.clone(),
                sigma: SigmaSpec::Profiled {
                    base,
                    arms,
                    budget: problem.budget(),
                },
            }],
            NormSpec::Linf,
        )
        .unwrap();
        let alpha_prof = candidate_alpha(&profiled, 0).unwrap();
        let s = EffectiveShrinkage::from_design(&x, &gamma).unwrap();
        assert_relative_eq!(
            alpha_prof,
            compute_alpha(&problem, &s),
            max_relative = 1e-10
        );
    }

    #[test]
    fn empty_candidate_set_rejected() {
        let lambda = DMatrix::<f64>::identity(2, 2);
        let omega = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            MomentModel::new(lambda, omega, vec![], vec![], NormSpec::Linf),
            Err(Error::EmptyCandidateSet)
        ));
    }
}
