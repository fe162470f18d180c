//! Parameter-dependent evolution problems in affine form.
//!
//! Every parameter dependence is carried by scalar [`Coefficient`]s that
//! multiply parameter-independent loads, operators and fields. The whole
//! problem is plain data, so a reduced model can store it next to its
//! basis and be reloaded without any code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DvsError, Result};

/// `scale · Π ξ_j^p`, keyed by an id that names it in manifests and logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub id: String,
    pub scale: f64,
    #[serde(default)]
    pub powers: Vec<(usize, u32)>,
}

impl Coefficient {
    pub fn constant(id: &str, value: f64) -> Self {
        Coefficient {
            id: id.to_string(),
            scale: value,
            powers: Vec::new(),
        }
    }

    pub fn monomial(id: &str, scale: f64, powers: &[(usize, u32)]) -> Self {
        Coefficient {
            id: id.to_string(),
            scale,
            powers: powers.to_vec(),
        }
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        let mut v = self.scale;
        for &(j, p) in &self.powers {
            v *= xi[j].powi(p as i32);
        }
        v
    }

    fn max_index(&self) -> Option<usize> {
        self.powers.iter().map(|&(j, _)| j).max()
    }
}

/// Parameter-independent spatial function, sampled at mesh nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialFn {
    Constant { value: f64 },
    /// `offset + Σ_d slope_d x_d`
    Linear { offset: f64, slope: Vec<f64> },
    /// `scale · Π_d (x_d − lo_d)(hi_d − x_d)`
    Bubble { scale: f64, lo: Vec<f64>, hi: Vec<f64> },
    /// `scale · Π_d sin(freq_d x_d)`
    SinProduct { scale: f64, freq: Vec<f64> },
    /// `scale · Σ_d sin(freq x_d)`
    SinAxisSum { scale: f64, freq: f64 },
    /// Values given directly at the nodes of the full mesh.
    Nodal { values: Vec<f64> },
}

impl SpatialFn {
    /// Value at a point. `Nodal` functions have no pointwise form.
    pub fn eval_point(&self, x: &[f64]) -> Option<f64> {
        Some(match self {
            SpatialFn::Constant { value } => *value,
            SpatialFn::Linear { offset, slope } => {
                offset + slope.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            }
            SpatialFn::Bubble { scale, lo, hi } => {
                let mut v = *scale;
                for d in 0..x.len() {
                    v *= (x[d] - lo[d]) * (hi[d] - x[d]);
                }
                v
            }
            SpatialFn::SinProduct { scale, freq } => {
                let mut v = *scale;
                for d in 0..x.len() {
                    v *= (freq[d] * x[d]).sin();
                }
                v
            }
            SpatialFn::SinAxisSum { scale, freq } => {
                scale * x.iter().map(|xi| (freq * xi).sin()).sum::<f64>()
            }
            SpatialFn::Nodal { .. } => return None,
        })
    }

    /// Samples the function at the given node coordinates.
    pub fn sample(&self, coords: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            SpatialFn::Nodal { values } => {
                if values.len() != coords.len() {
                    return Err(DvsError::Config(format!(
                        "nodal field has {} values but the mesh has {} nodes",
                        values.len(),
                        coords.len()
                    )));
                }
                Ok(values.clone())
            }
            f => Ok(coords.iter().map(|x| f.eval_point(x).unwrap()).collect()),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let ok = match self {
            SpatialFn::Linear { slope, .. } => slope.len() == dim,
            SpatialFn::Bubble { lo, hi, .. } => lo.len() == dim && hi.len() == dim,
            SpatialFn::SinProduct { freq, .. } => freq.len() == dim,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(DvsError::Config(format!(
                "spatial function {self:?} does not match domain dimension {dim}"
            )))
        }
    }
}

/// Linear operators `A^i` of the affine expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearOp {
    /// `u ↦ Δu` (weak form `−∫∇u·∇v`)
    Laplacian,
    /// `u ↦ u`
    Mass,
}

/// Nonlinear operators `H^i` of the affine expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearOp {
    /// `u ↦ −u ∂u/∂x` (one space dimension)
    Convection,
    /// `u ↦ −u³`
    Cubic,
}

impl NonlinearOp {
    pub fn degree(self) -> u32 {
        match self {
            NonlinearOp::Convection => 2,
            NonlinearOp::Cubic => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Load {
    /// `⟨f, v⟩`
    Source { field: SpatialFn },
    /// `⟨A f, v⟩`, used for sources produced by lifting boundary data.
    OperatorApplied { op: LinearOp, field: SpatialFn },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantTerm {
    pub coef: Coefficient,
    pub load: Load,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub coef: Coefficient,
    pub op: LinearOp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTerm {
    pub coef: Coefficient,
    pub op: NonlinearOp,
}

/// One `p(ξ) q(x)` product, used for initial data and boundary liftings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    pub coef: Coefficient,
    pub field: SpatialFn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineExpansion {
    #[serde(default)]
    pub constant: Vec<ConstantTerm>,
    #[serde(default)]
    pub linear: Vec<LinearTerm>,
    #[serde(default)]
    pub nonlinear: Vec<NonlinearTerm>,
}

/// Axis-aligned box `Π [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// `du/dt = Σ κ_C C + Σ κ_A A u + Σ κ_H H(u)` on `domain × [0, T]`.
///
/// Dirichlet data is the trace of the time-independent lifting
/// `Σ λ_j(ξ) ℓ_j(x)`; the unknown is the homogeneous remainder, so any
/// source the lifting generates must appear among the constant terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricProblem {
    pub name: String,
    pub domain: Domain,
    pub t_final: f64,
    pub parameter_box: Vec<(f64, f64)>,
    pub affine: AffineExpansion,
    #[serde(default)]
    pub initial: Vec<FieldTerm>,
    #[serde(default)]
    pub lifting: Vec<FieldTerm>,
}

/// Coefficient values of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingLaw {
    #[default]
    Uniform,
    LatinHypercube,
}

impl ParametricProblem {
    pub fn param_dim(&self) -> usize {
        self.parameter_box.len()
    }

    pub fn is_linear(&self) -> bool {
        self.affine.nonlinear.is_empty()
    }

    pub fn n_c(&self) -> usize {
        self.affine.constant.len()
    }

    pub fn n_a(&self) -> usize {
        self.affine.linear.len()
    }

    pub fn n_h(&self) -> usize {
        self.affine.nonlinear.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(DvsError::Config(format!("T must be positive, got {}", self.t_final)));
        }
        let dim = self.domain.dim();
        if !(1..=2).contains(&dim) || self.domain.hi.len() != dim {
            return Err(DvsError::Config(format!("unsupported domain dimension {dim}")));
        }
        if self.domain.lo.iter().zip(&self.domain.hi).any(|(l, h)| !(h > l)) {
            return Err(DvsError::Config("domain bounds must satisfy lo < hi".into()));
        }
        check_box(&self.parameter_box)?;
        if self.initial.is_empty() {
            return Err(DvsError::NotAffine(
                "the initial condition needs at least one term".into(),
            ));
        }
        let d = self.param_dim();
        let coefs = self
            .affine
            .constant
            .iter()
            .map(|t| &t.coef)
            .chain(self.affine.linear.iter().map(|t| &t.coef))
            .chain(self.affine.nonlinear.iter().map(|t| &t.coef))
            .chain(self.initial.iter().map(|t| &t.coef))
            .chain(self.lifting.iter().map(|t| &t.coef));
        for c in coefs {
            if !c.scale.is_finite() {
                return Err(DvsError::Config(format!("coefficient {} has a non-finite scale", c.id)));
            }
            if let Some(j) = c.max_index() {
                if j >= d {
                    return Err(DvsError::Config(format!(
                        "coefficient {} uses ξ_{} but the parameter dimension is {d}",
                        c.id,
                        j + 1
                    )));
                }
            }
        }
        for t in &self.affine.constant {
            match &t.load {
                Load::Source { field } | Load::OperatorApplied { field, .. } => field.check_dim(dim)?,
            }
        }
        for t in self.initial.iter().chain(&self.lifting) {
            t.field.check_dim(dim)?;
        }
        for t in &self.affine.nonlinear {
            if t.op == NonlinearOp::Convection && dim != 1 {
                return Err(DvsError::Config("convection is only available in one dimension".into()));
            }
        }
        if !self.lifting.is_empty() && !self.affine.nonlinear.is_empty() {
            return Err(DvsError::Config(
                "boundary liftings are only supported for linear problems".into(),
            ));
        }
        Ok(())
    }

    pub fn check_parameter(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.param_dim() {
            return Err(DvsError::Domain(format!(
                "expected {} parameters, got {}",
                self.param_dim(),
                xi.len()
            )));
        }
        for (j, (&v, &(lo, hi))) in xi.iter().zip(&self.parameter_box).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(DvsError::Domain(format!(
                    "ξ_{} = {v} outside [{lo}, {hi}]",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate_coefficients(&self, xi: &[f64]) -> Result<Coefficients> {
        self.check_parameter(xi)?;
        Ok(self.coefficients_unchecked(xi))
    }

    pub(crate) fn coefficients_unchecked(&self, xi: &[f64]) -> Coefficients {
        Coefficients {
            c: self.affine.constant.iter().map(|t| t.coef.eval(xi)).collect(),
            a: self.affine.linear.iter().map(|t| t.coef.eval(xi)).collect(),
            h: self.affine.nonlinear.iter().map(|t| t.coef.eval(xi)).collect(),
        }
    }

    /// Coefficients of the homogeneous initial data: the initial terms
    /// followed by the negated lifting terms.
    pub fn homogeneous_initial_coefficients(&self, xi: &[f64]) -> Vec<f64> {
        self.initial
            .iter()
            .map(|t| t.coef.eval(xi))
            .chain(self.lifting.iter().map(|t| -t.coef.eval(xi)))
            .collect()
    }

    pub fn lifting_coefficients(&self, xi: &[f64]) -> Vec<f64> {
        self.lifting.iter().map(|t| t.coef.eval(xi)).collect()
    }

    /// `Σ p^i(ξ) q^i` at the given nodes.
    pub fn evaluate_initial_field(&self, xi: &[f64], coords: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_parameter(xi)?;
        let mut out = vec![0.0; coords.len()];
        for t in &self.initial {
            let p = t.coef.eval(xi);
            let q = t.field.sample(coords)?;
            for (o, v) in out.iter_mut().zip(q) {
                *o += p * v;
            }
        }
        Ok(out)
    }

    pub fn sample_parameters(&self, count: usize, seed: u64, law: SamplingLaw) -> Result<Vec<Vec<f64>>> {
        sample_parameters(&self.parameter_box, count, seed, law)
    }
}

fn check_box(b: &[(f64, f64)]) -> Result<()> {
    if b.is_empty() {
        return Err(DvsError::Domain("the parameter box is empty".into()));
    }
    for (j, &(lo, hi)) in b.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(DvsError::Domain(format!("interval {} is [{lo}, {hi}]", j + 1)));
        }
    }
    Ok(())
}

/// Seeded draws over the box. The stream is ChaCha8, so a seed fixes the
/// sequence on every platform.
pub fn sample_parameters(b: &[(f64, f64)], count: usize, seed: u64, law: SamplingLaw) -> Result<Vec<Vec<f64>>> {
    check_box(b)?;
    if count == 0 {
        return Err(DvsError::Domain("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = b.len();
    match law {
        SamplingLaw::Uniform => Ok((0..count)
            .map(|_| {
                b.iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                    .collect()
            })
            .collect()),
        SamplingLaw::LatinHypercube => {
            let mut out = vec![vec![0.0; d]; count];
            for (j, &(lo, hi)) in b.iter().enumerate() {
                let mut strata: Vec<usize> = (0..count).collect();
                for i in (1..count).rev() {
                    let r = rng.gen_range(0..=i);
                    strata.swap(i, r);
                }
                for (i, s) in strata.into_iter().enumerate() {
                    let u = (s as f64 + rng.gen::<f64>()) / count as f64;
                    out[i][j] = lo + (hi - lo) * u;
                }
            }
            Ok(out)
        }
    }
}
