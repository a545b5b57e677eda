//! Domain types, problem ingestion, and validation.
//!
//! A [`DesignProblem`] bundles everything the solver needs: the sensitivity
//! vector of the target to each parameter, the observational evidence
//! (point estimates and covariance), per-arm experimental variance and
//! cost, a budget, the feasible-design set, the bias norm, and the
//! shrinkage policy. Construction validates; once built, a problem is
//! immutable and safe to share across threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for accepting an asymmetric covariance (relative to the
/// largest entry, floored at 1 for tiny-scale matrices).
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalue floor for the PSD check, relative to the largest eigenvalue.
const PSD_FLOOR: f64 = -1e-10;

/// Default cap on design enumeration: 2^20 feasible vectors.
pub const DEFAULT_ENUMERATION_CAP_LOG2: u32 = 20;

/// Sensitivity of the target estimand to each parameter: the gradient of
/// the target map evaluated at the observational estimates. Every entry
/// must be finite and nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityVector(Vec<f64>);

impl SensitivityVector {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "sensitivity vector length",
                expected: 1,
                got: 0,
            });
        }
        for (index, &value) in omega.iter().enumerate() {
            if !value.is_finite() || value == 0.0 {
                return Err(Error::ZeroSensitivity { index, value });
            }
        }
        Ok(Self(omega))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for SensitivityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Observational point estimates and their sampling covariance.
///
/// The covariance is symmetrized on ingest and checked positive
/// semi-definite up to an eigenvalue floor; tiny negative eigenvalues
/// (rounded published tables) are clipped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalEvidence {
    theta: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl ObservationalEvidence {
    pub fn new(theta_obs: Vec<f64>, sigma_obs: DMatrix<f64>) -> Result<Self> {
        let p = theta_obs.len();
        if sigma_obs.nrows() != p || sigma_obs.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "sigma_obs must be p x p",
                expected: p,
                got: sigma_obs.nrows().max(sigma_obs.ncols()),
            });
        }
        let max_abs = sigma_obs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_asym = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                max_asym = max_asym.max((sigma_obs[(i, j)] - sigma_obs[(j, i)]).abs());
            }
        }
        if max_asym > SYMMETRY_TOL * max_abs.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_obs asymmetry {max_asym:.3e} exceeds tolerance"
            )));
        }
        let mut sigma = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                sigma[(i, j)] = 0.5 * (sigma_obs[(i, j)] + sigma_obs[(j, i)]);
            }
        }
        for i in 0..p {
            if sigma[(i, i)].partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::NonPsdCovariance {
                    min_eig: sigma[(i, i)],
                });
            }
        }
        let eig = sigma.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min_eig < PSD_FLOOR * max_eig.abs() {
            return Err(Error::NonPsdCovariance { min_eig });
        }
        if min_eig < 0.0 {
            // Clip rounding-level negatives and rebuild.
            let clipped = DVector::from_iterator(p, eig.eigenvalues.iter().map(|&l| l.max(0.0)));
            let v = &eig.eigenvectors;
            sigma = v * DMatrix::from_diagonal(&clipped) * v.transpose();
            // Rebuilding can leave asymmetry at machine precision.
            for i in 0..p {
                for j in (i + 1)..p {
                    let avg = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                    sigma[(i, j)] = avg;
                    sigma[(j, i)] = avg;
                }
            }
        }
        Ok(Self {
            theta: DVector::from_vec(theta_obs),
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// One candidate experimental arm: per-unit variance (variance times
/// sample-size units) and a per-unit cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentArm {
    pub name: String,
    pub v2: f64,
    pub cost: f64,
}

impl ExperimentArm {
    pub fn new(name: impl Into<String>, v2: f64, cost: f64) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(',') || name.contains('\n') {
            return Err(Error::InvalidInput(format!(
                "arm name {name:?} must be nonempty without ',' or newlines (it is emitted in CSV)"
            )));
        }
        if !(v2.is_finite() && v2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "arm {name}: per-unit variance must be positive and finite, got {v2}"
            )));
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "arm {name}: per-unit cost must be positive and finite, got {cost}"
            )));
        }
        Ok(Self { name, v2, cost })
    }
}

/// Which subsets of arms may be run.
///
/// The all-zero design ("run no experiment") is feasible under `AtMostK`
/// and `All`; exclude it with an explicit list if a design must run
/// something.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilitySet {
    /// Any design selecting at most `k` arms.
    AtMostK(usize),
    /// Exactly the listed designs (deduplicated, sorted on ingest).
    ExplicitList(Vec<Vec<bool>>),
    /// All 2^p designs.
    All,
}

/// Ambiguity norm on the observational bias vector.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    /// Coordinate-wise bound |b_j| <= B; the worst-case bias index is the
    /// squared l1 norm of the loading row.
    Linf,
    /// Total-magnitude bound; dual is the max coordinate.
    L1,
    /// Euclidean ball; dual is the Euclidean norm.
    L2,
    /// Coordinate-wise bound with known rescaling factors |b_j| <= k_j B.
    Weighted(Vec<f64>),
}

impl NormSpec {
    fn validate(&self, p: usize) -> Result<()> {
        if let NormSpec::Weighted(k) = self {
            if k.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "weighted-norm factors length",
                    expected: p,
                    got: k.len(),
                });
            }
            for &kj in k {
                if !(kj.is_finite() && kj > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "weighted-norm factor must be positive and finite, got {kj}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shrinkage policy: optimize the combination weights freely in `[0,1]`, or
/// commit to using experimental evidence alone on selected arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaPolicy {
    Free,
    ExperimentOnly,
}

/// A validated design problem. See the module docs for the pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    omega: SensitivityVector,
    obs: ObservationalEvidence,
    arms: Vec<ExperimentArm>,
    budget: f64,
    feasibility: FeasibilitySet,
    norm: NormSpec,
    gamma_policy: GammaPolicy,
    enumeration_cap_log2: u32,
}

impl DesignProblem {
    /// Validates and normalizes the pieces into a problem. Explicit
    /// feasibility lists are deduplicated and sorted into the canonical
    /// design order (ascending by the integer whose bit j is arm j).
    pub fn new(
        omega: SensitivityVector,
        obs: ObservationalEvidence,
        arms: Vec<ExperimentArm>,
        budget: f64,
        feasibility: FeasibilitySet,
        norm: NormSpec,
        gamma_policy: GammaPolicy,
    ) -> Result<Self> {
        let p = omega.len();
        if obs.dim() != p {
            return Err(Error::DimensionMismatch {
                context: "observational evidence dimension",
                expected: p,
                got: obs.dim(),
            });
        }
        if arms.len() != p {
            return Err(Error::DimensionMismatch {
                context: "one arm per parameter",
                expected: p,
                got: arms.len(),
            });
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::NonpositiveBudget(budget));
        }
        norm.validate(p)?;
        let feasibility = match feasibility {
            FeasibilitySet::AtMostK(k) => {
                if k < 1 || k > p {
                    return Err(Error::InvalidInput(format!(
                        "AtMostK requires 1 <= k <= p, got k = {k} with p = {p}"
                    )));
                }
                FeasibilitySet::AtMostK(k)
            }
            FeasibilitySet::ExplicitList(list) => {
                let mut designs = Vec::with_capacity(list.len());
                for x in list {
                    if x.len() != p {
                        return Err(Error::DimensionMismatch {
                            context: "explicit design length",
                            expected: p,
                            got: x.len(),
                        });
                    }
                    designs.push(x);
                }
                designs.sort_by(|a, b| design_order(a, b));
                designs.dedup();
                if designs.is_empty() {
                    return Err(Error::EmptyFeasibilitySet);
                }
                FeasibilitySet::ExplicitList(designs)
            }
            FeasibilitySet::All => FeasibilitySet::All,
        };
        Ok(Self {
            omega,
            obs,
            arms,
            budget,
            feasibility,
            norm,
            gamma_policy,
            enumeration_cap_log2: DEFAULT_ENUMERATION_CAP_LOG2,
        })
    }

    /// Re-runs validation on the problem's own parts. Idempotent:
    /// `p.validate()` returns a problem equal to `p`.
    pub fn validate(self) -> Result<Self> {
        let cap = self.enumeration_cap_log2;
        let mut revalidated = Self::new(
            self.omega,
            self.obs,
            self.arms,
            self.budget,
            self.feasibility,
            self.norm,
            self.gamma_policy,
        )?;
        revalidated.enumeration_cap_log2 = cap;
        Ok(revalidated)
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        self.omega.as_slice()
    }

    pub fn obs(&self) -> &ObservationalEvidence {
        &self.obs
    }

    pub fn sigma_obs(&self) -> &DMatrix<f64> {
        self.obs.sigma()
    }

    pub fn arms(&self) -> &[ExperimentArm] {
        &self.arms
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn feasibility(&self) -> &FeasibilitySet {
        &self.feasibility
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn gamma_policy(&self) -> GammaPolicy {
        self.gamma_policy
    }

    /// Overrides the design-enumeration cap (log2 of the largest 2^p that
    /// `feasible_designs` will expand).
    pub fn with_enumeration_cap_log2(mut self, cap: u32) -> Self {
        self.enumeration_cap_log2 = cap;
        self
    }

    /// Replaces the budget, revalidating.
    pub fn with_budget(self, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::NonpositiveBudget(budget));
        }
        Ok(Self { budget, ..self })
    }

    /// Number of feasible designs without materializing them.
    pub fn feasible_design_count(&self) -> u64 {
        match &self.feasibility {
            FeasibilitySet::ExplicitList(list) => list.len() as u64,
            FeasibilitySet::All => 1u64 << self.dim().min(63),
            FeasibilitySet::AtMostK(k) => {
                let p = self.dim() as u64;
                let mut total = 0u64;
                let mut choose = 1u64;
                for i in 0..=(*k as u64) {
                    total = total.saturating_add(choose);
                    choose = choose.saturating_mul(p - i) / (i + 1);
                }
                total
            }
        }
    }

    /// Enumerates every feasible design in canonical order.
    ///
    /// Errors with [`Error::EnumerationTooLarge`] when the scan of 2^p
    /// candidates would exceed the cap (explicit lists are returned
    /// as stored and never capped).
    pub fn feasible_designs(&self) -> Result<Vec<Vec<bool>>> {
        match &self.feasibility {
            FeasibilitySet::ExplicitList(list) => Ok(list.clone()),
            mode => {
                let p = self.dim();
                if p as u32 > self.enumeration_cap_log2 {
                    return Err(Error::EnumerationTooLarge {
                        p,
                        cap_log2: self.enumeration_cap_log2,
                    });
                }
                let k = match mode {
                    FeasibilitySet::AtMostK(k) => *k,
                    _ => p,
                };
                let mut designs = Vec::new();
                for mask in 0u64..(1u64 << p) {
                    if (mask.count_ones() as usize) <= k {
                        designs.push((0..p).map(|j| mask >> j & 1 == 1).collect());
                    }
                }
                Ok(designs)
            }
        }
    }
}

/// Canonical total order on designs: ascending by the integer whose bit j
/// is arm j, i.e. (1,0,0) < (0,1,0) < (1,1,0) < (0,0,1). Used for
/// enumeration order, explicit-list normalization, and tie-breaking.
pub fn design_order(a: &[bool], b: &[bool]) -> std::cmp::Ordering {
    debug_assert_eq!(a.len(), b.len());
    for j in (0..a.len()).rev() {
        match (a[j], b[j]) {
            (false, true) => return std::cmp::Ordering::Less,
            (true, false) => return std::cmp::Ordering::Greater,
            _ => {}
        }
    }
    std::cmp::Ordering::Equal
}

/// Number of selected arms.
pub fn arm_count(x: &[bool]) -> usize {
    x.iter().filter(|&&b| b).count()
}

/// Compact bitstring form, arm 0 first: `[1,0,1]` renders as "101".
pub fn design_bits(x: &[bool]) -> String {
    x.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
