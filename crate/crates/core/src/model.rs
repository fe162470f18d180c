//! The reduced model produced by the offline stage.

use serde::{Deserialize, Serialize};

use crate::discretization::MeshSpec;
use crate::error::{DvsError, Result};
use crate::fom::{TimeGrid, Trajectory};
use crate::problem::ParametricProblem;
use crate::record::{ProjectionRecord, TimeDerivative, Zeta0Rep};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Time-dependent parametric coefficients.
    #[default]
    Dvs,
    /// Static parametric coefficients (baseline).
    Vs,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Dvs => "dvs",
            Method::Vs => "vs",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// `Δ_k` is the space-time error against the full-order solution.
    #[default]
    TrueError,
    /// `Δ_k` is the residual-based bound.
    Estimator,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::TrueError => "true-error",
            Strategy::Estimator => "estimator",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = DvsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-error" | "true" => Ok(Strategy::TrueError),
            "estimator" | "residual-bound" => Ok(Strategy::Estimator),
            _ => Err(DvsError::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

/// One enrichment term `ζ_k(t; ξ) g_k(x, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedTerm {
    pub anchor: Vec<f64>,
    pub anchor_index: usize,
    /// Spatial basis at every time node; absent in stripped models.
    pub g: Option<Trajectory>,
    pub record: ProjectionRecord,
    pub zeta0: Zeta0Rep,
    /// Static-coefficient models: the transition whose projected relation
    /// defines `ζ_k(ξ)`.
    pub vs_step: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: usize,
    pub xi: Vec<f64>,
    pub sample_index: usize,
    /// Largest indicator over the remaining training set (absent for k = 1).
    pub delta_max: Option<f64>,
    pub strategy: String,
    pub seconds: f64,
    /// Relative space-time error of `u_k` at `ξ_k`.
    pub anchor_error: f64,
    /// Reduced steps that hit the `l` guard at this anchor.
    pub held_steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub steps: Vec<TraceStep>,
    /// Why the loop ended.
    pub stop: String,
    /// Relative error of the final model at every anchor.
    pub final_anchor_errors: Vec<f64>,
    /// Largest indicator at the stop test, when one was evaluated.
    pub final_delta_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    pub method: Method,
    pub problem: ParametricProblem,
    pub mesh: MeshSpec,
    pub grid: TimeGrid,
    pub form: TimeDerivative,
    pub terms: Vec<SeparatedTerm>,
    pub trace: GreedyTrace,
}

impl ReducedModel {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn has_fields(&self) -> bool {
        self.terms.iter().all(|t| t.g.is_some())
    }

    /// Copy without spatial fields; it still evaluates `ζ`.
    pub fn stripped(&self) -> Self {
        let mut m = self.clone();
        for t in &mut m.terms {
            t.g = None;
        }
        m
    }

    /// First `n` terms.
    pub fn truncated(&self, n: usize) -> Self {
        let mut m = self.clone();
        m.terms.truncate(n);
        m.trace.steps.truncate(n);
        m
    }

    pub fn g(&self, k: usize) -> Result<&Trajectory> {
        self.terms
            .get(k)
            .ok_or(DvsError::OutOfRange {
                index: k,
                limit: self.terms.len(),
            })?
            .g
            .as_ref()
            .ok_or_else(|| DvsError::State("the model was stripped of its spatial fields".into()))
    }

    /// Consistency of the term list with the problem and grid.
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.terms.is_empty() {
            return Err(DvsError::Format("model has no terms".into()));
        }
        let ops: Vec<_> = self.problem.affine.nonlinear.iter().map(|t| t.op).collect();
        let n_init = self.problem.initial.len() + self.problem.lifting.len();
        for (i, t) in self.terms.iter().enumerate() {
            if t.record.k != i + 1 {
                return Err(DvsError::Format(format!("term {} is stored as term {}", i + 1, t.record.k)));
            }
            t.record
                .check(self.problem.n_a(), self.problem.n_c(), &ops, self.grid.steps)?;
            if t.zeta0.p_weights.len() != n_init || t.zeta0.prev_weights.len() != i {
                return Err(DvsError::Format(format!("initial weights of term {} have wrong sizes", i + 1)));
            }
            if let Some(g) = &t.g {
                if g.nodes() != self.grid.nodes() {
                    return Err(DvsError::Format(format!("basis of term {} has the wrong node count", i + 1)));
                }
            }
            if let Some(s) = t.vs_step {
                if s >= self.grid.steps {
                    return Err(DvsError::Format(format!("term {} selects transition {s}", i + 1)));
                }
            }
            if self.method == Method::Vs && t.vs_step.is_none() {
                return Err(DvsError::Format(format!("static-coefficient term {} has no selected transition", i + 1)));
            }
        }
        Ok(())
    }
}
