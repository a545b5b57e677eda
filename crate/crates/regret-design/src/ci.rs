//! Confidence-interval-length regret for (possibly) partially identified
//! targets.
//!
//! The target is bracketed by linear envelopes with gradients
//! `omega_lower` and `omega_upper`. An audience holding a bias radius `B`
//! widens the reported interval by `B` times the dual-norm bias index of
//! each envelope; the design-relevant part of the expected excess length
//! over the identified set is `A + B * C` with
//!
//! * `A = z * (sqrt(alpha_upper) + sqrt(alpha_lower))`
//! * `C = sqrt(beta_upper) + sqrt(beta_lower) + sqrt(beta_diff)`
//!
//! and the worst case over `B` of the length ratio against the menu's
//! best is `max(A/A_star, C/C_star)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gmm::{alpha_gmm, beta_gmm, candidate_sigma, gamma_matrix, MomentModel};
use crate::model::NormSpec;
use crate::regret::{safe_ratio, RegretBreakdown};

/// Linear envelope of a partially identified target, with the coverage
/// level for the audience's two-sided interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    omega_lower: Vec<f64>,
    omega_upper: Vec<f64>,
    eta: f64,
}

impl Envelope {
    pub fn new(omega_lower: Vec<f64>, omega_upper: Vec<f64>, eta: f64) -> Result<Self> {
        if omega_lower.len() != omega_upper.len() {
            return Err(Error::DimensionMismatch {
                context: "envelope gradient lengths",
                expected: omega_lower.len(),
                got: omega_upper.len(),
            });
        }
        if omega_lower.iter().all(|&v| v == 0.0) && omega_upper.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput(
                "both envelope gradients are zero".into(),
            ));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "coverage level must lie in (0,1), got {eta}"
            )));
        }
        Ok(Self {
            omega_lower,
            omega_upper,
            eta,
        })
    }

    /// Point--identified target: both envelopes share one gradient.
    pub fn complete(omega: Vec<f64>, eta: f64) -> Result<Self> {
        Self::new(omega.clone(), omega, eta)
    }

    pub fn omega_lower(&self) -> &[f64] {
        &self.omega_lower
    }

    pub fn omega_upper(&self) -> &[f64] {
        &self.omega_upper
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `z_{1 - eta/2}`.
    pub fn z_value(&self) -> f64 {
        normal_quantile(1.0 - self.eta / 2.0)
    }

    pub fn dim(&self) -> usize {
        self.omega_lower.len()
    }

    fn diff(&self) -> Vec<f64> {
        self.omega_upper
            .iter()
            .zip(&self.omega_lower)
            .map(|(u, l)| u - l)
            .collect()
    }
}

/// Worst-case (bias-aware) interval at a given radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseInterval {
    pub lower: f64,
    pub upper: f64,
    pub radius: f64,
}

/// Inverse standard-normal CDF.
///
/// Acklam's rational approximation (coefficients below), relative error
/// under 1.2e-9 across (0,1); good to the 1e-9 the interval arithmetic
/// needs without a stats dependency.
#[allow(clippy::excessive_precision)] // published constant set, verbatim
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Missing-outcome bounds for a randomized experiment with assignment
/// probability `pi1`: the four-parameter mean/missingness decomposition
/// whose envelope gradients are
/// `lower = (1/pi1, 0, -1/pi0, -1/pi0)`,
/// `upper = (1/pi1, 1/pi1, -1/pi0, 0)`.
/// Coverage defaults to 95%.
pub fn manski_envelope(pi1: f64) -> Result<Envelope> {
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return Err(Error::DegenerateAssignment(pi1));
    }
    let pi0 = 1.0 - pi1;
    Envelope::new(
        vec![1.0 / pi1, 0.0, -1.0 / pi0, -1.0 / pi0],
        vec![1.0 / pi1, 1.0 / pi1, -1.0 / pi0, 0.0],
        0.05,
    )
}

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

/// Envelope variance index `A = z (sqrt(alpha_upper) + sqrt(alpha_lower))`.
pub fn variance_index_a(env: &Envelope, gamma: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let a_up = alpha_gmm(&row(env.omega_upper()), gamma, sigma);
    let a_lo = alpha_gmm(&row(env.omega_lower()), gamma, sigma);
    env.z_value() * (a_up.max(0.0).sqrt() + a_lo.max(0.0).sqrt())
}

/// Envelope bias index
/// `C = sqrt(beta_upper) + sqrt(beta_lower) + sqrt(beta_diff)`.
pub fn bias_index_c(
    env: &Envelope,
    gamma: &DMatrix<f64>,
    experimental_idx: &[usize],
    norm: &NormSpec,
) -> Result<f64> {
    let b_up = beta_gmm(&row(env.omega_upper()), gamma, experimental_idx, norm)?;
    let b_lo = beta_gmm(&row(env.omega_lower()), gamma, experimental_idx, norm)?;
    let b_diff = beta_gmm(&row(&env.diff()), gamma, experimental_idx, norm)?;
    Ok(b_up.sqrt() + b_lo.sqrt() + b_diff.sqrt())
}

/// Bias-aware interval endpoints at radius `b`:
/// `[lower_envelope_estimate - z sqrt(alpha_lower) - B sqrt(beta_lower),
///   upper_envelope_estimate + z sqrt(alpha_upper) + B sqrt(beta_upper)]`.
pub fn worst_case_interval(
    env: &Envelope,
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    experimental_idx: &[usize],
    norm: &NormSpec,
    theta_hat: &[f64],
    radius: f64,
) -> Result<WorstCaseInterval> {
    if radius < 0.0 || !radius.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bias radius must be finite and nonnegative, got {radius}"
        )));
    }
    let z = env.z_value();
    let dot = |w: &[f64]| -> f64 { w.iter().zip(theta_hat).map(|(a, b)| a * b).sum() };
    let a_lo = alpha_gmm(&row(env.omega_lower()), gamma, sigma).max(0.0);
    let a_up = alpha_gmm(&row(env.omega_upper()), gamma, sigma).max(0.0);
    let b_lo = beta_gmm(&row(env.omega_lower()), gamma, experimental_idx, norm)?;
    let b_up = beta_gmm(&row(env.omega_upper()), gamma, experimental_idx, norm)?;
    let lower = dot(env.omega_lower()) - z * a_lo.sqrt() - radius * b_lo.sqrt();
    let upper = dot(env.omega_upper()) + z * a_up.sqrt() + radius * b_up.sqrt();
    Ok(WorstCaseInterval {
        lower,
        upper,
        radius,
    })
}

/// Per-candidate A and C indices over a model's menu.
pub fn candidate_indices(env: &Envelope, model: &MomentModel) -> Result<Vec<(f64, f64)>> {
    if env.dim() != model.lambda().ncols() {
        return Err(Error::DimensionMismatch {
            context: "envelope gradient vs parameter dimension",
            expected: model.lambda().ncols(),
            got: env.dim(),
        });
    }
    let mut out = Vec::with_capacity(model.candidates().len());
    for (i, cand) in model.candidates().iter().enumerate() {
        let gamma = gamma_matrix(model.lambda(), &cand.w)?;
        let sigma = candidate_sigma(model, i)?;
        let a = variance_index_a(env, &gamma, &sigma);
        let c = bias_index_c(env, &gamma, model.experimental_idx(), model.norm())?;
        out.push((a, c));
    }
    Ok(out)
}

/// Length regret of one candidate: `max(A/A_star, C/C_star)` with the
/// oracles minimized exhaustively over the menu. The breakdown carries
/// (A, A_star) in the variance slots and (C, C_star) in the bias slots.
pub fn ci_regret(
    env: &Envelope,
    model: &MomentModel,
    candidate_index: usize,
) -> Result<RegretBreakdown> {
    if candidate_index >= model.candidates().len() {
        return Err(Error::InvalidInput(format!(
            "candidate index {candidate_index} out of range"
        )));
    }
    let indices = candidate_indices(env, model)?;
    let a_star = indices.iter().map(|(a, _)| *a).fold(f64::MAX, f64::min);
    let c_star = indices.iter().map(|(_, c)| *c).fold(f64::MAX, f64::min);
    let (a, c) = indices[candidate_index];
    Ok(RegretBreakdown::from_indices(a, a_star, c, c_star))
}

/// Index of every menu candidate minimizing the length regret (ties kept,
/// within a relative tolerance).
pub fn ci_argmin(env: &Envelope, model: &MomentModel, tie_tol: f64) -> Result<Vec<usize>> {
    let indices = candidate_indices(env, model)?;
    let a_star = indices.iter().map(|(a, _)| *a).fold(f64::MAX, f64::min);
    let c_star = indices.iter().map(|(_, c)| *c).fold(f64::MAX, f64::min);
    let regrets: Vec<f64> = indices
        .iter()
        .map(|(a, c)| safe_ratio(*a, a_star).max(safe_ratio(*c, c_star)))
        .collect();
    Ok(argmin_set(&regrets, tie_tol))
}

/// Index of every menu candidate minimizing the MSE regret.
pub fn mse_argmin(model: &MomentModel, tie_tol: f64) -> Result<Vec<usize>> {
    let n = model.candidates().len();
    let regrets: Vec<f64> = (0..n)
        .map(|i| crate::gmm::regret_gmm(model, i).map(|b| b.regret))
        .collect::<Result<_>>()?;
    Ok(argmin_set(&regrets, tie_tol))
}

fn argmin_set(values: &[f64], tie_tol: f64) -> Vec<usize> {
    let best = values.iter().cloned().fold(f64::MAX, f64::min);
    values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v <= best + tie_tol * best.abs().max(1.0)).then_some(i))
        .collect()
}
