//! Declarative problem documents.
//!
//! One canonical TOML schema (`schema = "regret-design/v1"`) carries
//! every input kind: design problems, moment models, the bundled
//! application calibrations. Matrices are flat row-major arrays with
//! explicit dimensions where they are not square. Unknown keys are
//! rejected, not ignored: a design document doubles as a pre-analysis
//! plan and silent typos must not change its meaning.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::apps::{GeCalibration, SiteArea, SiteTable};
use crate::ci::Envelope;
use crate::error::{Error, Result};
use crate::gmm::{AllocatedMoment, Candidate, MomentModel, SigmaSpec};
use crate::model::{
    DesignProblem, ExperimentArm, FeasibilitySet, GammaPolicy, NormSpec, ObservationalEvidence,
    SensitivityVector,
};

/// The schema tag every document must carry.
pub const SCHEMA: &str = "regret-design/v1";

/// Top-level document: exactly one payload section must match `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub schema: String,
    pub kind: DocumentKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_model: Option<MomentModelDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ge_calibration: Option<GeCalibrationDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site_table: Option<SiteTableDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    DesignProblem,
    MomentModel,
    GeCalibration,
    SiteTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub omega: Vec<f64>,
    pub theta_obs: Vec<f64>,
    /// Row-major p x p.
    pub sigma_obs: Vec<f64>,
    pub arms: Vec<ArmDoc>,
    pub budget: f64,
    pub feasibility: FeasibilityDoc,
    pub norm: NormDoc,
    pub gamma_policy: GammaPolicyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmDoc {
    pub name: String,
    pub v2: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilityDoc {
    pub mode: FeasibilityMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Binary selection vectors, one per design, for `explicit` mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<Vec<u8>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityMode {
    AtMostK,
    Explicit,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormDoc {
    pub kind: NormKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Linf,
    L1,
    L2,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaPolicyDoc {
    Free,
    ExperimentOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentModelDoc {
    pub moments: usize,
    pub params: usize,
    pub targets: usize,
    /// Row-major moments x params.
    pub lambda: Vec<f64>,
    /// Row-major targets x params.
    pub omega_mat: Vec<f64>,
    /// Zero-based indices of the unbiased (experimental) moments.
    pub experimental_idx: Vec<usize>,
    pub candidates: Vec<CandidateDoc>,
    pub norm: NormDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateDoc {
    /// Row-major moments x moments weighting matrix.
    pub w: Vec<f64>,
    /// Row-major fixed covariance; either this or the profiled fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_base: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alloc_arms: Option<Vec<AllocArmDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alloc_budget: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocArmDoc {
    pub moment: usize,
    pub v2: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeDoc {
    pub omega_lower: Vec<f64>,
    pub omega_upper: Vec<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeCalibrationDoc {
    pub theta_obs: Vec<f64>,
    /// Row-major 3 x 3.
    pub sigma_obs: Vec<f64>,
    pub y0: f64,
    pub d: f64,
    pub n_obs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteTableDoc {
    pub areas: Vec<SiteAreaDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteAreaDoc {
    pub name: String,
    pub n1: u32,
    pub n0: u32,
    pub v_pre2: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    pub omega: f64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Parses a document from TOML text, checking the schema tag and that the
/// payload section matches `kind`.
pub fn parse_document(text: &str) -> Result<Document> {
    let doc: Document =
        toml::from_str(text).map_err(|e| invalid(format!("document parse error: {e}")))?;
    if doc.schema != SCHEMA {
        return Err(invalid(format!(
            "unsupported schema {:?}; this build reads {SCHEMA:?}",
            doc.schema
        )));
    }
    let present = |ok: bool, section: &str| {
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "document kind requires a [{section}] section"
            )))
        }
    };
    match doc.kind {
        DocumentKind::DesignProblem => present(doc.problem.is_some(), "problem")?,
        DocumentKind::MomentModel => present(doc.moment_model.is_some(), "moment_model")?,
        DocumentKind::GeCalibration => present(doc.ge_calibration.is_some(), "ge_calibration")?,
        DocumentKind::SiteTable => present(doc.site_table.is_some(), "site_table")?,
    }
    Ok(doc)
}

fn square_matrix(flat: &[f64], p: usize, what: &str) -> Result<DMatrix<f64>> {
    if flat.len() != p * p {
        return Err(Error::DimensionMismatch {
            context: "row-major square matrix length",
            expected: p * p,
            got: flat.len(),
        });
    }
    let _ = what;
    Ok(DMatrix::from_row_slice(p, p, flat))
}

impl ProblemDoc {
    pub fn to_problem(&self) -> Result<DesignProblem> {
        let p = self.omega.len();
        let sigma = square_matrix(&self.sigma_obs, p, "sigma_obs")?;
        let arms = self
            .arms
            .iter()
            .map(|a| ExperimentArm::new(a.name.clone(), a.v2, a.cost))
            .collect::<Result<Vec<_>>>()?;
        let feasibility = match self.feasibility.mode {
            FeasibilityMode::AtMostK => {
                let k = self
                    .feasibility
                    .k
                    .ok_or_else(|| invalid("feasibility mode at-most-k requires `k`"))?;
                FeasibilitySet::AtMostK(k)
            }
            FeasibilityMode::All => FeasibilitySet::All,
            FeasibilityMode::Explicit => {
                let raw = self
                    .feasibility
                    .designs
                    .as_ref()
                    .ok_or_else(|| invalid("feasibility mode explicit requires `designs`"))?;
                let mut designs = Vec::with_capacity(raw.len());
                for d in raw {
                    if d.iter().any(|&b| b > 1) {
                        return Err(invalid("explicit designs must be 0/1 vectors"));
                    }
                    designs.push(d.iter().map(|&b| b == 1).collect());
                }
                FeasibilitySet::ExplicitList(designs)
            }
        };
        let norm = self.norm.to_norm()?;
        let gamma_policy = match self.gamma_policy {
            GammaPolicyDoc::Free => GammaPolicy::Free,
            GammaPolicyDoc::ExperimentOnly => GammaPolicy::ExperimentOnly,
        };
        DesignProblem::new(
            SensitivityVector::new(self.omega.clone())?,
            ObservationalEvidence::new(self.theta_obs.clone(), sigma)?,
            arms,
            self.budget,
            feasibility,
            norm,
            gamma_policy,
        )
    }
}

impl NormDoc {
    pub fn to_norm(&self) -> Result<NormSpec> {
        Ok(match self.kind {
            NormKind::Linf => NormSpec::Linf,
            NormKind::L1 => NormSpec::L1,
            NormKind::L2 => NormSpec::L2,
            NormKind::Weighted => NormSpec::Weighted(
                self.weights
                    .clone()
                    .ok_or_else(|| invalid("weighted norm requires `weights`"))?,
            ),
        })
    }
}

impl MomentModelDoc {
    pub fn to_model(&self) -> Result<MomentModel> {
        let (p_g, d, q) = (self.moments, self.params, self.targets);
        if self.lambda.len() != p_g * d {
            return Err(Error::DimensionMismatch {
                context: "lambda length (moments x params)",
                expected: p_g * d,
                got: self.lambda.len(),
            });
        }
        if self.omega_mat.len() != q * d {
            return Err(Error::DimensionMismatch {
                context: "omega_mat length (targets x params)",
                expected: q * d,
                got: self.omega_mat.len(),
            });
        }
        let lambda = DMatrix::from_row_slice(p_g, d, &self.lambda);
        let omega_mat = DMatrix::from_row_slice(q, d, &self.omega_mat);
        let mut candidates = Vec::with_capacity(self.candidates.len());
        for c in &self.candidates {
            let w = square_matrix(&c.w, p_g, "w")?;
            let sigma = match (&c.sigma, &c.sigma_base) {
                (Some(flat), None) => SigmaSpec::Fixed(square_matrix(flat, p_g, "sigma")?),
                (None, Some(base)) => {
                    let arms = c
                        .alloc_arms
                        .as_ref()
                        .ok_or_else(|| invalid("profiled candidate requires `alloc_arms`"))?
                        .iter()
                        .map(|a| AllocatedMoment {
                            moment: a.moment,
                            v2: a.v2,
                            cost: a.cost,
                        })
                        .collect();
                    SigmaSpec::Profiled {
                        base: square_matrix(base, p_g, "sigma_base")?,
                        arms,
                        budget: c
                            .alloc_budget
                            .ok_or_else(|| invalid("profiled candidate requires `alloc_budget`"))?,
                    }
                }
                _ => {
                    return Err(invalid(
                        "candidate needs exactly one of `sigma` or `sigma_base`",
                    ))
                }
            };
            candidates.push(Candidate { w, sigma });
        }
        MomentModel::new(
            lambda,
            omega_mat,
            self.experimental_idx.clone(),
            candidates,
            self.norm.to_norm()?,
        )
    }
}

impl EnvelopeDoc {
    pub fn to_envelope(&self) -> Result<Envelope> {
        Envelope::new(self.omega_lower.clone(), self.omega_upper.clone(), self.eta)
    }
}

impl GeCalibrationDoc {
    pub fn to_calibration(&self) -> Result<GeCalibration> {
        if self.theta_obs.len() != 3 {
            return Err(Error::DimensionMismatch {
                context: "calibration theta length",
                expected: 3,
                got: self.theta_obs.len(),
            });
        }
        Ok(GeCalibration {
            theta_obs: [self.theta_obs[0], self.theta_obs[1], self.theta_obs[2]],
            sigma_obs: square_matrix(&self.sigma_obs, 3, "sigma_obs")?,
            y0: self.y0,
            d: self.d,
            n_obs: self.n_obs,
        })
    }
}

impl SiteTableDoc {
    pub fn to_table(&self) -> Result<SiteTable> {
        SiteTable::new(
            self.areas
                .iter()
                .map(|a| SiteArea {
                    name: a.name.clone(),
                    n1: a.n1,
                    n0: a.n0,
                    v_pre2: a.v_pre2,
                    mu_hat: a.mu_hat,
                    sigma2_hat: a.sigma2_hat,
                    omega: a.omega,
                })
                .collect(),
        )
    }
}
