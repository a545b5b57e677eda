//! Independent verification machinery.
//!
//! Everything here deliberately avoids the production solver path:
//! brute-force grids with derivative-free refinement, closed-form
//! two-parameter solutions, worst-case scans over the bias radius, and a
//! seeded Monte-Carlo harness. The test suites (and the CLI `validate`
//! command) cross-check the solver against these.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    DesignProblem, ExperimentArm, FeasibilitySet, GammaPolicy, NormSpec, ObservationalEvidence,
    SensitivityVector,
};
use crate::regret::{
    compute_alpha, compute_beta, min_weighted_index, neyman_allocation, safe_ratio,
    EffectiveShrinkage,
};
use crate::rng::CounterRng;

/// Cap on total grid evaluations in [`grid_oracle`].
const GRID_EVAL_CAP: f64 = 2.5e8;

/// Number of deterministic simulation streams; fixed so results do not
/// depend on the machine's thread count.
const MC_WORKERS: u64 = 64;

// ---------------------------------------------------------------------
// Brute-force design oracle
// ---------------------------------------------------------------------

/// Exhaustive scan over feasible designs and a uniform shrinkage grid.
/// Returns the best regret factor found and the achieving design; an
/// upper bound on the true minimax value that tightens with `resolution`.
pub fn grid_oracle(
    problem: &DesignProblem,
    resolution: usize,
) -> Result<(f64, crate::regret::DesignWeights)> {
    if problem.dim() > 4 {
        return Err(Error::InvalidInput(format!(
            "grid oracle supports up to 4 parameters, got {}",
            problem.dim()
        )));
    }
    if resolution < 50 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be at least 50, got {resolution}"
        )));
    }
    let designs = problem.feasible_designs()?;
    let total: f64 = designs
        .iter()
        .map(|x| (resolution as f64).powi(x.iter().filter(|&&b| b).count() as i32))
        .sum();
    if total > GRID_EVAL_CAP {
        return Err(Error::GridTooLarge {
            points: total,
            cap: GRID_EVAL_CAP,
        });
    }
    let (alpha_star, _) = crate::regret::oracle_alpha_star(problem)?;
    let (beta_star, _) = crate::regret::oracle_beta_star(problem)?;

    let per_design: Vec<(Vec<bool>, Vec<f64>, f64)> = designs
        .into_par_iter()
        .map(|x| {
            let (gamma, t) = grid_scan_design(problem, &x, resolution, alpha_star, beta_star);
            (x, gamma, t)
        })
        .collect();
    let best = crate::regret::argmin_design(per_design, 0.0).ok_or(Error::EmptyFeasibilitySet)?;
    Ok((best.2, (best.0, best.1)))
}

fn grid_scan_design(
    problem: &DesignProblem,
    x: &[bool],
    resolution: usize,
    alpha_star: f64,
    beta_star: f64,
) -> (Vec<f64>, f64) {
    let p = problem.dim();
    let active: Vec<usize> = (0..p).filter(|&j| x[j]).collect();
    let mut best_t = f64::INFINITY;
    let mut best_gamma = vec![1.0; p];
    if problem.gamma_policy() == GammaPolicy::ExperimentOnly || active.is_empty() {
        let gamma = vec![1.0; p];
        let s = EffectiveShrinkage::from_design(x, &gamma).unwrap();
        let t = safe_ratio(compute_alpha(problem, &s), alpha_star)
            .max(safe_ratio(compute_beta(problem, &s), beta_star));
        return (gamma, t);
    }
    let steps = resolution;
    let mut idx = vec![0usize; active.len()];
    loop {
        let mut gamma = vec![1.0; p];
        for (a, &j) in active.iter().enumerate() {
            gamma[j] = idx[a] as f64 / (steps - 1) as f64;
        }
        let s = EffectiveShrinkage::from_design(x, &gamma).unwrap();
        let t = safe_ratio(compute_alpha(problem, &s), alpha_star)
            .max(safe_ratio(compute_beta(problem, &s), beta_star));
        if t < best_t {
            best_t = t;
            best_gamma = gamma;
        }
        // Odometer increment.
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < steps {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == idx.len() {
                return (best_gamma, best_t);
            }
        }
    }
}

/// Derivative-free polish: cyclic golden-section over each active
/// coordinate of a scalar function of gamma. Independent of the
/// production quadratic solver.
pub fn refine_coordinatewise(
    mut gamma: Vec<f64>,
    active: &[usize],
    f: impl Fn(&[f64]) -> f64,
    sweeps: usize,
) -> (Vec<f64>, f64) {
    const PHI: f64 = 0.618_033_988_749_894_8;
    let mut value = f(&gamma);
    for _ in 0..sweeps {
        let mut improved = false;
        for &j in active {
            let mut a: f64 = 0.0;
            let mut b: f64 = 1.0;
            let mut x1 = b - PHI * (b - a);
            let mut x2 = a + PHI * (b - a);
            let eval = |g: &mut Vec<f64>, v: f64| {
                g[j] = v;
                f(g)
            };
            let mut f1 = eval(&mut gamma, x1);
            let mut f2 = eval(&mut gamma, x2);
            for _ in 0..90 {
                if f1 <= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - PHI * (b - a);
                    f1 = eval(&mut gamma, x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + PHI * (b - a);
                    f2 = eval(&mut gamma, x2);
                }
            }
            let (gj, fj) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            gamma[j] = gj;
            if fj < value - 1e-16 * value.abs().max(1.0) {
                value = fj;
                improved = true;
            } else {
                value = value.min(fj);
            }
        }
        if !improved {
            break;
        }
    }
    (gamma, value)
}

// ---------------------------------------------------------------------
// Worst-case scan over the bias radius
// ---------------------------------------------------------------------

/// One scanned point: bias radius, and the ratio of the design's
/// worst-case MSE to the oracle minimum at that radius.
#[derive(Debug, Clone)]
pub struct BScanPoint {
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BScan {
    pub curve: Vec<BScanPoint>,
    pub sup: f64,
    pub argmax_radius: f64,
}

/// Default radius grid: zero plus 200 log-spaced points.
///
/// The span brackets every radius where a ratio curve can still move:
/// below `1e-3 sqrt(alpha_star / beta(0))` all curves sit at their
/// variance limit, and above `1e3 sqrt(alpha_max / beta_star)` (with
/// `alpha_max` the larger of the pure-observational and full-shrinkage
/// variance indices) both numerator and denominator are bias-dominated,
/// so the truncated sup matches the true worst case to well under the
/// one-percent verification tolerance.
pub fn default_b_grid(problem: &DesignProblem) -> Vec<f64> {
    let p = problem.dim();
    let s0 = EffectiveShrinkage::zeros(p);
    let alpha0 = compute_alpha(problem, &s0);
    let beta0 = compute_beta(problem, &s0);
    let s1 = EffectiveShrinkage::from_values(vec![1.0; p]).unwrap();
    let alpha_max = alpha0.max(compute_alpha(problem, &s1));
    let (alpha_star, beta_star) = match (
        crate::regret::oracle_alpha_star(problem),
        crate::regret::oracle_beta_star(problem),
    ) {
        (Ok((a, _)), Ok((b, _))) => (a, b),
        _ => (alpha0, beta0),
    };
    let sanitize = |v: f64, fallback: f64| {
        if v.is_finite() && v > 0.0 {
            v
        } else {
            fallback
        }
    };
    let scale_lo = sanitize((alpha_star / beta0).sqrt(), 1.0);
    let denom = if beta_star > 0.0 { beta_star } else { beta0 };
    let scale_hi = sanitize((alpha_max / denom).sqrt(), 1.0).max(scale_lo);
    let mut grid = vec![0.0];
    let lo = (1e-3 * scale_lo).ln();
    let hi = (1e3 * scale_hi).ln();
    let n = 200;
    for i in 0..n {
        grid.push((lo + (hi - lo) * i as f64 / (n - 1) as f64).exp());
    }
    grid
}

/// Scans the worst-case-MSE ratio of a fixed `(x, gamma)` over a radius
/// grid. The denominator minimizes `alpha' + B^2 beta'` over every
/// feasible design (convex in the shrinkage for each arm set).
pub fn sup_b_scan(
    problem: &DesignProblem,
    x: &[bool],
    gamma: &[f64],
    b_grid: &[f64],
) -> Result<BScan> {
    if b_grid.is_empty() || b_grid[0] != 0.0 {
        return Err(Error::InvalidInput(
            "radius grid must start at zero".to_string(),
        ));
    }
    if b_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "radius grid must be sorted ascending".to_string(),
        ));
    }
    let s = EffectiveShrinkage::from_design(x, gamma)?;
    let alpha = compute_alpha(problem, &s);
    let beta = compute_beta(problem, &s);
    let designs = problem.feasible_designs()?;
    let curve: Vec<BScanPoint> = b_grid
        .par_iter()
        .map(|&radius| {
            let b2 = radius * radius;
            let denom = designs
                .iter()
                .map(|xd| min_weighted_index(problem, xd, b2))
                .fold(f64::INFINITY, f64::min);
            BScanPoint {
                radius,
                ratio: safe_ratio(alpha + b2 * beta, denom),
            }
        })
        .collect();
    let (mut sup, mut argmax) = (f64::NEG_INFINITY, 0.0);
    for pt in &curve {
        if pt.ratio > sup {
            sup = pt.ratio;
            argmax = pt.radius;
        }
    }
    Ok(BScan {
        curve,
        sup,
        argmax_radius: argmax,
    })
}

/// Largest amount by which an interior point of the scanned curve exceeds
/// its boundary values (nonpositive for a quasi-convex curve).
pub fn quasiconvexity_violation(scan: &BScan) -> f64 {
    let n = scan.curve.len();
    if n < 3 {
        return 0.0;
    }
    let cap = scan.curve[0].ratio.max(scan.curve[n - 1].ratio);
    scan.curve[1..n - 1]
        .iter()
        .map(|p| p.ratio - cap)
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------
// Two-parameter closed form
// ---------------------------------------------------------------------

/// The fixed-variance two-parameter model: one experiment may be run,
/// combining it with an observational estimate for the other coordinate.
#[derive(Debug, Clone, Copy)]
pub struct TwoParamInstance {
    pub omega: [f64; 2],
    pub sigma2: [f64; 2],
    pub v2: [f64; 2],
    /// Selected arm, zero-based.
    pub arm: usize,
}

/// Which branch of the closed form applies on `[gamma_var, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// The two normalized indices cross in the interior.
    Interior,
    /// The variance ratio dominates throughout; the variance-optimal
    /// weight is regret-optimal.
    VarianceBoundary,
    /// The bias ratio dominates throughout; full shrinkage is optimal.
    BiasBoundary,
}

impl TwoParamInstance {
    pub fn new(omega: [f64; 2], sigma2: [f64; 2], v2: [f64; 2], arm: usize) -> Result<Self> {
        if arm > 1 {
            return Err(Error::InvalidInput(format!("arm must be 0 or 1, got {arm}")));
        }
        for &w in &omega {
            if w == 0.0 || !w.is_finite() {
                return Err(Error::ZeroSensitivity {
                    index: 0,
                    value: w,
                });
            }
        }
        for &v in sigma2.iter().chain(&v2) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "variances must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            omega,
            sigma2,
            v2,
            arm,
        })
    }

    /// Variance of the combined estimator with weight `gamma` on the
    /// experimental estimate of the selected arm.
    pub fn alpha(&self, gamma: f64) -> f64 {
        let j = self.arm;
        let o = 1 - j;
        self.omega[o] * self.omega[o] * self.sigma2[o]
            + self.omega[j]
                * self.omega[j]
                * ((1.0 - gamma) * (1.0 - gamma) * self.sigma2[j] + gamma * gamma * self.v2[j])
    }

    /// Worst-case squared-bias coefficient at weight `gamma`.
    pub fn beta(&self, gamma: f64) -> f64 {
        let j = self.arm;
        let o = 1 - j;
        let sum = self.omega[o].abs() + (1.0 - gamma) * self.omega[j].abs();
        sum * sum
    }

    /// Variance-optimal weight `sigma^2 / (sigma^2 + v^2)` for the
    /// selected arm.
    pub fn gamma_var(&self) -> f64 {
        let j = self.arm;
        self.sigma2[j] / (self.sigma2[j] + self.v2[j])
    }

    /// Closed-form oracle variance: best arm with its variance-optimal
    /// shrinkage.
    pub fn oracle_alpha_star(&self) -> f64 {
        let value = |k: usize| {
            let o = 1 - k;
            self.omega[o] * self.omega[o] * self.sigma2[o]
                + self.omega[k] * self.omega[k] * self.sigma2[k] * self.v2[k]
                    / (self.sigma2[k] + self.v2[k])
        };
        value(0).min(value(1))
    }

    /// Closed-form oracle bias: the smaller squared sensitivity.
    pub fn oracle_beta_star(&self) -> f64 {
        (self.omega[0] * self.omega[0]).min(self.omega[1] * self.omega[1])
    }

    /// Embeds the instance as a design problem with unit budget and costs
    /// (both single-arm designs feasible).
    pub fn to_problem(&self) -> DesignProblem {
        let sigma = DMatrix::from_row_slice(
            2,
            2,
            &[self.sigma2[0], 0.0, 0.0, self.sigma2[1]],
        );
        DesignProblem::new(
            SensitivityVector::new(self.omega.to_vec()).unwrap(),
            ObservationalEvidence::new(vec![0.0, 0.0], sigma).unwrap(),
            vec![
                ExperimentArm::new("arm0", self.v2[0], 1.0).unwrap(),
                ExperimentArm::new("arm1", self.v2[1], 1.0).unwrap(),
            ],
            1.0,
            FeasibilitySet::ExplicitList(vec![vec![true, false], vec![false, true]]),
            NormSpec::Linf,
            GammaPolicy::Free,
        )
        .unwrap()
    }

    pub fn selected_design(&self) -> Vec<bool> {
        vec![self.arm == 0, self.arm == 1]
    }
}

fn ratio_gap(inst: &TwoParamInstance, gamma: f64, alpha_star: f64, beta_star: f64) -> f64 {
    safe_ratio(inst.alpha(gamma), alpha_star) - safe_ratio(inst.beta(gamma), beta_star)
}

/// The regret-optimal shrinkage weight for the selected arm: the
/// variance-optimal weight when the variance ratio dominates on
/// `(gamma_var, 1)`, full shrinkage when the bias ratio dominates, and
/// otherwise the unique equalizer found by bisection.
pub fn gamma_star_2param(inst: &TwoParamInstance, alpha_star: f64, beta_star: f64) -> f64 {
    let lo = inst.gamma_var();
    match classify_regime(inst, alpha_star, beta_star) {
        Regime::VarianceBoundary => lo,
        Regime::BiasBoundary => 1.0,
        Regime::Interior => {
            let mut a = lo;
            let mut b = 1.0;
            for _ in 0..200 {
                if b - a <= 1e-10 {
                    break;
                }
                let mid = 0.5 * (a + b);
                if ratio_gap(inst, mid, alpha_star, beta_star) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        }
    }
}

/// Classifies the binding branch by the sign of the normalized-index gap
/// at both interval endpoints; sufficient because the variance ratio
/// increases and the bias ratio decreases on `(gamma_var, 1)`.
pub fn classify_regime(inst: &TwoParamInstance, alpha_star: f64, beta_star: f64) -> Regime {
    let lo = inst.gamma_var();
    if ratio_gap(inst, lo, alpha_star, beta_star) >= 0.0 {
        Regime::VarianceBoundary
    } else if ratio_gap(inst, 1.0, alpha_star, beta_star) <= 0.0 {
        Regime::BiasBoundary
    } else {
        Regime::Interior
    }
}

// ---------------------------------------------------------------------
// Monte-Carlo verification
// ---------------------------------------------------------------------

/// Simulation summary for one design and bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub empirical_mse: f64,
    pub std_error: f64,
    pub theoretical_mse: f64,
    pub reps: u64,
    pub seed: u64,
}

/// PSD square root via the spectral decomposition (handles the clipped
/// singular case the Cholesky would reject).
fn psd_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let roots = DVector::from_iterator(
        sigma.nrows(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Simulates the shrinkage estimator under a fixed bias vector and
/// reports empirical against closed-form mean squared error.
///
/// Observational draws are `theta + b` plus correlated noise; selected
/// arms draw unbiased experimental estimates at their Neyman allocation.
/// Replications are partitioned over 64 derived streams and reduced in
/// stream order, so results depend only on `(seed, reps)`.
pub fn monte_carlo_mse(
    problem: &DesignProblem,
    x: &[bool],
    gamma: &[f64],
    bias: &[f64],
    reps: u64,
    seed: u64,
) -> Result<McReport> {
    let p = problem.dim();
    if bias.len() != p {
        return Err(Error::DimensionMismatch {
            context: "bias vector length",
            expected: p,
            got: bias.len(),
        });
    }
    if reps < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 replications for a usable standard error, got {reps}"
        )));
    }
    let s = EffectiveShrinkage::from_design(x, gamma)?;
    let sv = s.as_slice().to_vec();
    let any_active = sv.iter().any(|&v| v > 0.0);
    let alloc = if any_active {
        neyman_allocation(problem, &s)?
    } else {
        vec![0.0; p]
    };
    let exp_sd: Vec<f64> = problem
        .arms()
        .iter()
        .zip(&alloc)
        .map(|(arm, &nj)| if nj > 0.0 { (arm.v2 / nj).sqrt() } else { 0.0 })
        .collect();
    let draw_exp: Vec<bool> = sv.iter().map(|&v| v > 0.0).collect();
    let omega = problem.omega().to_vec();
    let theta = problem.obs().theta().clone();
    let chol = psd_sqrt(problem.sigma_obs());
    let tau: f64 = omega.iter().zip(theta.iter()).map(|(w, t)| w * t).sum();

    let worker_sums: Vec<(f64, f64)> = (0..MC_WORKERS)
        .into_par_iter()
        .map(|w| {
            let mut rng = CounterRng::for_worker(seed, w);
            let n_here = reps / MC_WORKERS + u64::from(w < reps % MC_WORKERS);
            let mut z = DVector::zeros(p);
            let mut sum_q = 0.0;
            let mut sum_q2 = 0.0;
            for _ in 0..n_here {
                for zi in z.iter_mut() {
                    *zi = rng.next_normal();
                }
                let noise = &chol * &z;
                let mut tau_hat = 0.0;
                for j in 0..p {
                    let obs_j = theta[j] + bias[j] + noise[j];
                    let est = if draw_exp[j] {
                        let exp_j = theta[j] + exp_sd[j] * rng.next_normal();
                        sv[j] * exp_j + (1.0 - sv[j]) * obs_j
                    } else {
                        obs_j
                    };
                    tau_hat += omega[j] * est;
                }
                let q = (tau_hat - tau) * (tau_hat - tau);
                sum_q += q;
                sum_q2 += q * q;
            }
            (sum_q, sum_q2)
        })
        .collect();
    let mut sum_q = 0.0;
    let mut sum_q2 = 0.0;
    for (a, b) in worker_sums {
        sum_q += a;
        sum_q2 += b;
    }
    let n = reps as f64;
    let empirical_mse = sum_q / n;
    let var_q = (sum_q2 / n - empirical_mse * empirical_mse).max(0.0);
    let std_error = (var_q / n).sqrt();
    let mean_bias: f64 = omega
        .iter()
        .zip(&sv)
        .zip(bias)
        .map(|((w, sj), b)| w * (1.0 - sj) * b)
        .sum();
    let theoretical_mse = compute_alpha(problem, &s) + mean_bias * mean_bias;
    Ok(McReport {
        empirical_mse,
        std_error,
        theoretical_mse,
        reps,
        seed,
    })
}

/// The bias vector of radius `radius` maximizing the squared mean error
/// of the design's loading row under the problem's ambiguity norm.
pub fn worst_bias_vertex(problem: &DesignProblem, s: &EffectiveShrinkage, radius: f64) -> Vec<f64> {
    let omega = problem.omega();
    let m: Vec<f64> = omega
        .iter()
        .zip(s.as_slice())
        .map(|(&w, &sj)| w * (1.0 - sj))
        .collect();
    let sgn = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    match problem.norm() {
        NormSpec::Linf => m.iter().map(|&mj| radius * sgn(mj)).collect(),
        NormSpec::Weighted(k) => m
            .iter()
            .zip(k)
            .map(|(&mj, &kj)| radius * kj * sgn(mj))
            .collect(),
        NormSpec::L1 => {
            let mut best = 0usize;
            for (j, &mj) in m.iter().enumerate() {
                if mj.abs() > m[best].abs() {
                    best = j;
                }
            }
            let mut b = vec![0.0; m.len()];
            b[best] = radius * sgn(m[best]);
            b
        }
        NormSpec::L2 => {
            let norm: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                vec![0.0; m.len()]
            } else {
                m.iter().map(|&mj| radius * mj / norm).collect()
            }
        }
    }
}

// ---------------------------------------------------------------------
// Random instances and packaged suites
// ---------------------------------------------------------------------

/// Log-uniform draw over `[0.1, 10]`.
fn log_uniform(rng: &mut CounterRng) -> f64 {
    (rng.next_uniform() * (10.0f64.ln() - 0.1f64.ln()) + 0.1f64.ln()).exp()
}

/// Random design problem: log-uniform sensitivities (random signs),
/// observational variances, per-unit experimental variances and costs,
/// and an AtMostK(1..p) menu.
pub fn random_problem(rng: &mut CounterRng, p: usize) -> DesignProblem {
    let omega: Vec<f64> = (0..p)
        .map(|_| {
            let sign = if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 };
            sign * log_uniform(rng)
        })
        .collect();
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        sigma[(j, j)] = log_uniform(rng);
    }
    let arms = (0..p)
        .map(|j| ExperimentArm::new(format!("arm{j}"), log_uniform(rng), 1.0).unwrap())
        .collect();
    let k = 1 + (rng.next_u64() % p as u64) as usize;
    DesignProblem::new(
        SensitivityVector::new(omega).unwrap(),
        ObservationalEvidence::new(vec![0.0; p], sigma).unwrap(),
        arms,
        log_uniform(rng) * 2.0,
        FeasibilitySet::AtMostK(k),
        NormSpec::Linf,
        GammaPolicy::Free,
    )
    .unwrap()
}

/// Random design problem with a correlated observational covariance:
/// log-uniform variances composed with a random correlation matrix.
pub fn random_correlated_problem(rng: &mut CounterRng, p: usize) -> DesignProblem {
    let omega: Vec<f64> = (0..p)
        .map(|_| {
            let sign = if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 };
            sign * log_uniform(rng)
        })
        .collect();
    let sigma = {
        let a = DMatrix::from_fn(p, p, |_, _| rng.next_normal());
        let gram = &a * a.transpose() + DMatrix::identity(p, p) * 0.05;
        let mut corr = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                corr[(i, j)] = gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt();
            }
        }
        let scales = DVector::from_fn(p, |_, _| log_uniform(rng).sqrt());
        let d = DMatrix::from_diagonal(&scales);
        &d * corr * &d
    };
    let arms = (0..p)
        .map(|j| ExperimentArm::new(format!("arm{j}"), log_uniform(rng), 1.0).unwrap())
        .collect();
    let k = 1 + (rng.next_u64() % p as u64) as usize;
    DesignProblem::new(
        SensitivityVector::new(omega).unwrap(),
        ObservationalEvidence::new(vec![0.0; p], sigma).unwrap(),
        arms,
        log_uniform(rng) * 2.0,
        FeasibilitySet::AtMostK(k),
        NormSpec::Linf,
        GammaPolicy::Free,
    )
    .unwrap()
}

/// Random feasible design and shrinkage for a problem.
pub fn random_design(rng: &mut CounterRng, problem: &DesignProblem) -> (Vec<bool>, Vec<f64>) {
    let designs = problem.feasible_designs().expect("enumerable");
    let x = designs[(rng.next_u64() % designs.len() as u64) as usize].clone();
    let gamma: Vec<f64> = (0..problem.dim())
        .map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    (x, gamma)
}

/// Outcome of one named validation suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the numerical identity and equivalence suites at a reduced instance
/// count (the CLI `validate` command). Each suite reports its worst
/// observed discrepancy.
pub fn validation_report(seed: u64) -> Vec<SuiteOutcome> {
    let mut outcomes = Vec::new();

    // Worst-case-over-radius equality and quasi-convexity.
    let mut rng = CounterRng::for_worker(seed, 1);
    let mut worst_gap = 0.0f64;
    let mut worst_qc = f64::NEG_INFINITY;
    for _ in 0..20 {
        let p = 2 + (rng.next_u64() % 3) as usize;
        let problem = random_problem(&mut rng, p);
        let (x, gamma) = random_design(&mut rng, &problem);
        let (alpha_star, _) = crate::regret::oracle_alpha_star(&problem).unwrap();
        let (beta_star, _) = crate::regret::oracle_beta_star(&problem).unwrap();
        let breakdown = crate::regret::regret(&problem, &x, &gamma, alpha_star, beta_star).unwrap();
        let scan = sup_b_scan(&problem, &x, &gamma, &default_b_grid(&problem)).unwrap();
        let gap = (scan.sup - breakdown.regret).abs() / breakdown.regret.max(1e-300);
        worst_gap = worst_gap.max(gap);
        worst_qc = worst_qc.max(quasiconvexity_violation(&scan));
    }
    outcomes.push(SuiteOutcome {
        name: "worst-case-radius-equality",
        passed: worst_gap <= 0.01,
        detail: format!("max relative gap {worst_gap:.3e} (tolerance 1e-2)"),
    });
    outcomes.push(SuiteOutcome {
        name: "radius-curve-quasiconvexity",
        passed: worst_qc <= 1e-9,
        detail: format!("max interior excess {worst_qc:.3e} (tolerance 1e-9)"),
    });

    // Neyman budget and plug-in identities.
    let mut rng = CounterRng::for_worker(seed, 2);
    let mut worst_budget = 0.0f64;
    let mut worst_plugin = 0.0f64;
    for _ in 0..200 {
        let p = 2 + (rng.next_u64() % 3) as usize;
        let problem = random_problem(&mut rng, p);
        let s_vals: Vec<f64> = (0..p).map(|_| rng.next_uniform()).collect();
        let s = EffectiveShrinkage::from_values(s_vals).unwrap();
        if s.as_slice().iter().all(|&v| v == 0.0) {
            continue;
        }
        let alloc = neyman_allocation(&problem, &s).unwrap();
        let spent: f64 = alloc
            .iter()
            .zip(problem.arms())
            .map(|(n, arm)| n * arm.cost)
            .sum();
        worst_budget = worst_budget.max((spent - problem.budget()).abs() / problem.budget());
        let raw: f64 = problem
            .arms()
            .iter()
            .enumerate()
            .filter(|(j, _)| alloc[*j] > 0.0)
            .map(|(j, arm)| {
                let w = problem.omega()[j];
                w * w * s.as_slice()[j] * s.as_slice()[j] * arm.v2 / alloc[j]
            })
            .sum();
        let profiled: f64 = {
            let term: f64 = problem
                .arms()
                .iter()
                .enumerate()
                .map(|(j, arm)| {
                    problem.omega()[j].abs() * s.as_slice()[j] * arm.v2.sqrt() * arm.cost.sqrt()
                })
                .sum();
            term * term / problem.budget()
        };
        if profiled > 0.0 {
            worst_plugin = worst_plugin.max((raw - profiled).abs() / profiled);
        }
    }
    outcomes.push(SuiteOutcome {
        name: "neyman-identities",
        passed: worst_budget <= 1e-12 && worst_plugin <= 1e-12,
        detail: format!(
            "budget gap {worst_budget:.3e}, plug-in gap {worst_plugin:.3e} (tolerance 1e-12)"
        ),
    });

    // Two-parameter closed form against the full solver.
    let mut rng = CounterRng::for_worker(seed, 3);
    let mut worst_gamma = 0.0f64;
    for _ in 0..60 {
        let inst = TwoParamInstance::new(
            [
                1.0,
                0.1 + 1.9 * rng.next_uniform(),
            ],
            [1.0, 0.5 + 1.5 * rng.next_uniform()],
            [1.0, 0.5 + 1.5 * rng.next_uniform()],
            1,
        )
        .unwrap();
        let problem = inst.to_problem();
        let (alpha_star, _) = crate::regret::oracle_alpha_star(&problem).unwrap();
        let (beta_star, _) = crate::regret::oracle_beta_star(&problem).unwrap();
        let closed = gamma_star_2param(&inst, alpha_star, beta_star);
        let inner =
            crate::solver::inner_solve(&problem, &inst.selected_design(), alpha_star, beta_star)
                .unwrap();
        worst_gamma = worst_gamma.max((closed - inner.gamma[1]).abs());
    }
    outcomes.push(SuiteOutcome {
        name: "two-parameter-closed-form",
        passed: worst_gamma <= 1e-4,
        detail: format!("max |gamma gap| {worst_gamma:.3e} (tolerance 1e-4)"),
    });

    // Moment-model embedding equivalence.
    let mut rng = CounterRng::for_worker(seed, 4);
    let mut worst_embed = 0.0f64;
    for _ in 0..20 {
        let p = 2 + (rng.next_u64() % 3) as usize;
        let problem = random_problem(&mut rng, p);
        let (x, gamma) = random_design(&mut rng, &problem);
        if let Some(gap) = crate::gmm::embedding_gap(&problem, &x, &gamma) {
            worst_embed = worst_embed.max(gap);
        }
    }
    outcomes.push(SuiteOutcome {
        name: "moment-embedding-equivalence",
        passed: worst_embed <= 1e-8,
        detail: format!("max relative gap {worst_embed:.3e} (tolerance 1e-8)"),
    });

    // Monte-Carlo closed-form agreement.
    let mut rng = CounterRng::for_worker(seed, 5);
    let mut worst_sigmas = 0.0f64;
    for i in 0..4 {
        let p = 2 + (rng.next_u64() % 2) as usize;
        let problem = random_problem(&mut rng, p);
        let (x, gamma) = random_design(&mut rng, &problem);
        let s = EffectiveShrinkage::from_design(&x, &gamma).unwrap();
        let radius = 0.5 * (compute_alpha(&problem, &s) / compute_beta(&problem, &s).max(1e-12))
            .sqrt();
        let bias = worst_bias_vertex(&problem, &s, radius);
        let report =
            monte_carlo_mse(&problem, &x, &gamma, &bias, 30_000, seed ^ (i as u64)).unwrap();
        let sigmas = (report.empirical_mse - report.theoretical_mse).abs()
            / report.std_error.max(1e-300);
        worst_sigmas = worst_sigmas.max(sigmas);
    }
    outcomes.push(SuiteOutcome {
        name: "monte-carlo-mse",
        passed: worst_sigmas <= 3.0,
        detail: format!("max |z| {worst_sigmas:.2} (tolerance 3 standard errors)"),
    });

    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_param_gamma_var_limit() {
        // Worthless observational estimate: full shrinkage.
        let inst = TwoParamInstance::new([1.0, 1.0], [1.0, 1e6], [1.0, 1.0], 1).unwrap();
        let g = gamma_star_2param(&inst, inst.oracle_alpha_star(), inst.oracle_beta_star());
        assert!(g > 0.999, "gamma {g}");
    }

    #[test]
    fn two_param_interior_equalizes() {
        let inst = TwoParamInstance::new([0.9, 1.0], [1.0, 1.0], [1.0, 1.0], 1).unwrap();
        let a = inst.oracle_alpha_star();
        let b = inst.oracle_beta_star();
        if classify_regime(&inst, a, b) == Regime::Interior {
            let g = gamma_star_2param(&inst, a, b);
            let gap = ratio_gap(&inst, g, a, b);
            assert!(gap.abs() <= 1e-8, "residual {gap}");
        }
    }

    #[test]
    fn two_param_small_omega_is_bias_dominant() {
        let inst = TwoParamInstance::new([1.0, 0.05], [1.0, 1.0], [1.0, 0.25], 1).unwrap();
        let a = inst.oracle_alpha_star();
        let b = inst.oracle_beta_star();
        assert_eq!(classify_regime(&inst, a, b), Regime::BiasBoundary);
        assert_eq!(gamma_star_2param(&inst, a, b), 1.0);
    }

    #[test]
    fn regime_labels_couple_to_gamma() {
        let mut rng = CounterRng::new(5);
        for _ in 0..50 {
            let inst = TwoParamInstance::new(
                [1.0, 0.1 + 1.9 * rng.next_uniform()],
                [1.0, 0.5 + 1.5 * rng.next_uniform()],
                [0.25, 0.5 + 1.5 * rng.next_uniform()],
                1,
            )
            .unwrap();
            let a = inst.oracle_alpha_star();
            let b = inst.oracle_beta_star();
            let g = gamma_star_2param(&inst, a, b);
            match classify_regime(&inst, a, b) {
                Regime::BiasBoundary => assert_eq!(g, 1.0),
                Regime::VarianceBoundary => assert_relative_eq!(g, inst.gamma_var()),
                Regime::Interior => {
                    assert!(g > inst.gamma_var() && g < 1.0);
                }
            }
        }
    }

    #[test]
    fn regime_sweep_matches_qualitative_pattern() {
        // Small omega_2: bias dominant; middle range: interior.
        let mut saw_bias = false;
        let mut saw_interior = false;
        for i in 0..40 {
            let w2 = 0.1 + 1.9 * i as f64 / 39.0;
            let inst = TwoParamInstance::new([1.0, w2], [1.0, 1.0], [1.0, 0.25], 1).unwrap();
            let regime = classify_regime(&inst, inst.oracle_alpha_star(), inst.oracle_beta_star());
            if w2 < 0.3 {
                if regime == Regime::BiasBoundary {
                    saw_bias = true;
                }
            } else if regime == Regime::Interior {
                saw_interior = true;
            }
        }
        assert!(saw_bias, "no bias-dominant regime at small omega_2");
        assert!(saw_interior, "no interior regime at moderate omega_2");
    }

    #[test]
    fn b_grid_starts_at_zero_and_sorted() {
        let mut rng = CounterRng::new(11);
        let problem = random_problem(&mut rng, 3);
        let grid = default_b_grid(&problem);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid.len(), 201);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scan_endpoints_match_component_ratios() {
        let mut rng = CounterRng::new(21);
        let problem = {
            // Force an incomplete menu so the oracle bias is positive and
            // the far-tail ratio has a finite limit.
            let base = random_problem(&mut rng, 3);
            DesignProblem::new(
                SensitivityVector::new(base.omega().to_vec()).unwrap(),
                base.obs().clone(),
                base.arms().to_vec(),
                base.budget(),
                FeasibilitySet::AtMostK(1),
                NormSpec::Linf,
                GammaPolicy::Free,
            )
            .unwrap()
        };
        let (x, gamma) = random_design(&mut rng, &problem);
        let (alpha_star, _) = crate::regret::oracle_alpha_star(&problem).unwrap();
        let (beta_star, _) = crate::regret::oracle_beta_star(&problem).unwrap();
        let s = EffectiveShrinkage::from_design(&x, &gamma).unwrap();
        let alpha = compute_alpha(&problem, &s);
        let beta = compute_beta(&problem, &s);
        // Radius 0: pure variance ratio.
        let scan = sup_b_scan(&problem, &x, &gamma, &[0.0]).unwrap();
        assert_relative_eq!(
            scan.curve[0].ratio,
            alpha / alpha_star,
            max_relative = 1e-9
        );
        // Far tail: approaches the bias ratio.
        let s0 = EffectiveShrinkage::zeros(problem.dim());
        let scale = (compute_alpha(&problem, &s0) / compute_beta(&problem, &s0)).sqrt();
        let tail = sup_b_scan(&problem, &x, &gamma, &[0.0, 1e6 * scale]).unwrap();
        let expect = beta / beta_star;
        assert_relative_eq!(tail.curve[1].ratio, expect, max_relative = 1e-4);
    }

    #[test]
    fn mc_matches_closed_form_at_zero_bias() {
        let mut rng = CounterRng::new(31);
        let problem = random_problem(&mut rng, 2);
        let (x, gamma) = random_design(&mut rng, &problem);
        let report = monte_carlo_mse(&problem, &x, &gamma, &[0.0, 0.0], 40_000, 777).unwrap();
        let z = (report.empirical_mse - report.theoretical_mse).abs() / report.std_error;
        assert!(z <= 3.0, "z = {z}");
    }

    #[test]
    fn mc_location_invariance() {
        let problem = {
            let mut rng = CounterRng::new(41);
            random_problem(&mut rng, 2)
        };
        let x = vec![true, false];
        let gamma = vec![0.5, 1.0];
        let a = monte_carlo_mse(&problem, &x, &gamma, &[0.1, -0.2], 5_000, 9).unwrap();
        // Shift every location input by a constant.
        let shifted = DesignProblem::new(
            SensitivityVector::new(problem.omega().to_vec()).unwrap(),
            ObservationalEvidence::new(
                problem.obs().theta().iter().map(|t| t + 7.0).collect(),
                problem.sigma_obs().clone(),
            )
            .unwrap(),
            problem.arms().to_vec(),
            problem.budget(),
            problem.feasibility().clone(),
            problem.norm().clone(),
            problem.gamma_policy(),
        )
        .unwrap();
        let b = monte_carlo_mse(&shifted, &x, &gamma, &[0.1, -0.2], 5_000, 9).unwrap();
        assert_relative_eq!(a.empirical_mse, b.empirical_mse, max_relative = 1e-9);
    }

    #[test]
    fn sample_mean_error_matches_closed_form_bias() {
        // Direct simulation of the estimator error's mean against
        // sum_j w_j (1 - s_j) b_j.
        let mut rng_inst = CounterRng::new(61);
        let problem = random_problem(&mut rng_inst, 3);
        let x = vec![true, false, true];
        let gamma = vec![0.6, 1.0, 0.3];
        let bias = [0.4, -0.7, 0.2];
        let s = EffectiveShrinkage::from_design(&x, &gamma).unwrap();
        let sv = s.as_slice();
        let alloc = neyman_allocation(&problem, &s).unwrap();
        let omega = problem.omega();
        let theta = problem.obs().theta().clone();
        let chol = psd_sqrt(problem.sigma_obs());
        let tau: f64 = omega.iter().zip(theta.iter()).map(|(w, t)| w * t).sum();
        let mut rng = CounterRng::for_worker(99, 0);
        let reps = 60_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let z = DVector::from_fn(3, |_, _| rng.next_normal());
            let noise = &chol * z;
            let mut tau_hat = 0.0;
            for j in 0..3 {
                let obs = theta[j] + bias[j] + noise[j];
                let est = if sv[j] > 0.0 {
                    let exp = theta[j] + (problem.arms()[j].v2 / alloc[j]).sqrt() * rng.next_normal();
                    sv[j] * exp + (1.0 - sv[j]) * obs
                } else {
                    obs
                };
                tau_hat += omega[j] * est;
            }
            let err = tau_hat - tau;
            sum += err;
            sum_sq += err * err;
        }
        let n = reps as f64;
        let mean = sum / n;
        let sd = ((sum_sq / n - mean * mean).max(0.0) / n).sqrt();
        let expect: f64 = omega
            .iter()
            .zip(sv)
            .zip(&bias)
            .map(|((w, sj), b)| w * (1.0 - sj) * b)
            .sum();
        let z = (mean - expect).abs() / sd;
        assert!(z <= 3.0, "mean error {mean} vs {expect} (z = {z})");
    }

    #[test]
    fn full_coverage_unbiased() {
        let mut rng = CounterRng::new(51);
        let problem = {
            // Force a full-coverage menu.
            let base = random_problem(&mut rng, 2);
            DesignProblem::new(
                SensitivityVector::new(base.omega().to_vec()).unwrap(),
                base.obs().clone(),
                base.arms().to_vec(),
                base.budget(),
                FeasibilitySet::AtMostK(2),
                NormSpec::Linf,
                GammaPolicy::Free,
            )
            .unwrap()
        };
        let report = monte_carlo_mse(
            &problem,
            &[true, true],
            &[1.0, 1.0],
            &[5.0, -3.0],
            40_000,
            13,
        )
        .unwrap();
        let z = (report.empirical_mse - report.theoretical_mse).abs() / report.std_error;
        assert!(z <= 3.0, "bias leaked into full-coverage design, z = {z}");
    }
}
