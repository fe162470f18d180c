//! Projection scalars of a separated term and the scalar recursion that
//! turns them into `ζ_k(t_n; ξ)` without touching the mesh.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{DvsError, Result};
use crate::fom::Trajectory;
use crate::linalg::dot;
use crate::problem::{Coefficients, NonlinearOp};

/// How `d(ζ g)/dt` is discretized in the reduced equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeDerivative {
    /// `(g_{n+1} − g_n)/τ · ζ_{n+1} + g_{n+1} (ζ_{n+1} − ζ_n)/τ`
    ProductRule,
    /// `(ζ_{n+1} g_{n+1} − ζ_n g_n)/τ`; reproduces the snapshot exactly at
    /// the anchor parameter.
    #[default]
    Exact,
}

/// Per-transition tensors of one nonlinear term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearRecord {
    /// `[n][a][b] = ⟨g_{a,n} ∂g_{b,n+1}/∂x, g_{k,n+1}⟩`
    Convection { data: Vec<f64> },
    /// `[n][(a,b), a≤b][c] = ⟨g_{a,n} g_{b,n} g_{c,n+1}, g_{k,n+1}⟩`
    Cubic { data: Vec<f64> },
}

/// Inner products of term `k` against itself, earlier terms and the affine
/// components, for every transition `n → n+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub k: usize,
    pub n_a: usize,
    pub n_c: usize,
    pub steps: usize,
    pub gg_diag: Vec<f64>,
    pub gg_lag: Vec<f64>,
    /// `[n][i]`
    pub a_self: Vec<f64>,
    /// `[n][i][j]`, `j < k`
    pub a_cross: Vec<f64>,
    /// `[n][j]`, `j ≤ k`
    pub g_cross: Vec<f64>,
    /// `[n][j]`, `j ≤ k`
    pub g_cross_lag: Vec<f64>,
    /// `[n][i]`
    pub c_proj: Vec<f64>,
    pub nonlinear: Vec<NonlinearRecord>,
}

fn pair_count(k: usize) -> usize {
    k * (k + 1) / 2
}

impl ProjectionRecord {
    /// Number of scalars per transition in the linear part.
    pub fn linear_len_per_step(&self) -> usize {
        self.n_a * self.k + self.n_c + 2 * self.k + 2
    }

    pub fn scalar_count(&self) -> usize {
        let nl: usize = self
            .nonlinear
            .iter()
            .map(|r| match r {
                NonlinearRecord::Convection { data } | NonlinearRecord::Cubic { data } => data.len(),
            })
            .sum();
        self.steps * self.linear_len_per_step() + nl
    }

    fn validate(&self, ops: &[NonlinearOp]) -> Result<()> {
        let (k, s) = (self.k, self.steps);
        let ok = self.gg_diag.len() == s
            && self.gg_lag.len() == s
            && self.a_self.len() == s * self.n_a
            && self.a_cross.len() == s * self.n_a * (k - 1)
            && self.g_cross.len() == s * k
            && self.g_cross_lag.len() == s * k
            && self.c_proj.len() == s * self.n_c
            && self.nonlinear.len() == ops.len()
            && self.nonlinear.iter().zip(ops).all(|(r, op)| match (r, op) {
                (NonlinearRecord::Convection { data }, NonlinearOp::Convection) => data.len() == s * k * k,
                (NonlinearRecord::Cubic { data }, NonlinearOp::Cubic) => data.len() == s * pair_count(k) * k,
                _ => false,
            });
        if ok {
            Ok(())
        } else {
            Err(DvsError::Format(format!("projection record of term {k} has inconsistent sizes")))
        }
    }

    pub fn check(&self, n_a: usize, n_c: usize, ops: &[NonlinearOp], steps: usize) -> Result<()> {
        if self.n_a != n_a || self.n_c != n_c || self.steps != steps || self.k == 0 {
            return Err(DvsError::Format(format!(
                "projection record of term {} does not match the problem",
                self.k
            )));
        }
        self.validate(ops)
    }
}

/// Scalars of one transition, gathered in parallel then flattened.
struct StepScalars {
    gg_diag: f64,
    gg_lag: f64,
    a_self: Vec<f64>,
    a_cross: Vec<f64>,
    g_cross: Vec<f64>,
    g_cross_lag: Vec<f64>,
    c_proj: Vec<f64>,
    nonlinear: Vec<Vec<f64>>,
}

/// Computes the projection record of `g` (term `k = prev.len() + 1`).
pub fn build_record(disc: &Discretization, g: &Trajectory, prev: &[&Trajectory]) -> ProjectionRecord {
    let k = prev.len() + 1;
    let steps = g.nodes() - 1;
    let n_a = disc.a_mats.len();
    let n_c = disc.c_vecs.len();
    let all: Vec<&Trajectory> = prev.iter().copied().chain(std::iter::once(g)).collect();
    let per_step: Vec<StepScalars> = (0..steps)
        .into_par_iter()
        .map(|n| {
            let gk = g.field(n + 1);
            let mg = disc.m.matvec(gk);
            let mut a_self = Vec::with_capacity(n_a);
            let mut a_cross = Vec::with_capacity(n_a * (k - 1));
            for a in &disc.a_mats {
                let y = a.matvec_transpose(gk);
                a_self.push(dot(&y, gk));
                for p in prev {
                    a_cross.push(dot(&y, p.field(n + 1)));
                }
            }
            let g_cross: Vec<f64> = all.iter().map(|t| dot(&mg, t.field(n + 1))).collect();
            let g_cross_lag: Vec<f64> = all.iter().map(|t| dot(&mg, t.field(n))).collect();
            let c_proj = disc.c_vecs.iter().map(|c| dot(c, gk)).collect();
            let mut nonlinear = Vec::with_capacity(disc.nonlinear_ops.len());
            if !disc.nonlinear_ops.is_empty() {
                let gk_full = disc.extend(gk);
                let lagged: Vec<Vec<f64>> = all.iter().map(|t| disc.extend(t.field(n))).collect();
                for &op in &disc.nonlinear_ops {
                    let mut data = Vec::new();
                    match op {
                        NonlinearOp::Convection => {
                            for la in &lagged {
                                let v = disc.restrict(&disc.convection_test_vector(la, &gk_full));
                                for t in &all {
                                    data.push(dot(&v, t.field(n + 1)));
                                }
                            }
                        }
                        NonlinearOp::Cubic => {
                            for a in 0..k {
                                for b in a..k {
                                    let v = disc
                                        .apply_nonlinear(op, &[&lagged[a], &lagged[b], &gk_full])
                                        .expect("cubic takes three fields");
                                    let v = disc.restrict(&v);
                                    for t in &all {
                                        data.push(dot(&v, t.field(n + 1)));
                                    }
                                }
                            }
                        }
                    }
                    nonlinear.push(data);
                }
            }
            StepScalars {
                gg_diag: g_cross[k - 1],
                gg_lag: g_cross_lag[k - 1],
                a_self,
                a_cross,
                g_cross,
                g_cross_lag,
                c_proj,
                nonlinear,
            }
        })
        .collect();

    let mut rec = ProjectionRecord {
        k,
        n_a,
        n_c,
        steps,
        gg_diag: Vec::with_capacity(steps),
        gg_lag: Vec::with_capacity(steps),
        a_self: Vec::with_capacity(steps * n_a),
        a_cross: Vec::with_capacity(steps * n_a * (k - 1)),
        g_cross: Vec::with_capacity(steps * k),
        g_cross_lag: Vec::with_capacity(steps * k),
        c_proj: Vec::with_capacity(steps * n_c),
        nonlinear: Vec::new(),
    };
    let mut nl: Vec<Vec<f64>> = vec![Vec::new(); disc.nonlinear_ops.len()];
    for s in per_step {
        rec.gg_diag.push(s.gg_diag);
        rec.gg_lag.push(s.gg_lag);
        rec.a_self.extend(s.a_self);
        rec.a_cross.extend(s.a_cross);
        rec.g_cross.extend(s.g_cross);
        rec.g_cross_lag.extend(s.g_cross_lag);
        rec.c_proj.extend(s.c_proj);
        for (acc, d) in nl.iter_mut().zip(s.nonlinear) {
            acc.extend(d);
        }
    }
    rec.nonlinear = disc
        .nonlinear_ops
        .iter()
        .zip(nl)
        .map(|(op, data)| match op {
            NonlinearOp::Convection => NonlinearRecord::Convection { data },
            NonlinearOp::Cubic => NonlinearRecord::Cubic { data },
        })
        .collect();
    rec
}

/// Relative guard on `|l|` against `c = ⟨g_{k,n+1}, g_{k,n+1}⟩/τ`.
pub const L_GUARD: f64 = 1e-12;

/// `ζ_{k,n+1}` from `ζ_{k,n}`, the earlier rows and the record.
///
/// `prev` holds the rows `ζ_j(·; ξ)` for `j < k`.
pub fn zeta_step(
    rec: &ProjectionRecord,
    kappa: &Coefficients,
    prev: &[&[f64]],
    zeta_n: f64,
    n: usize,
    tau: f64,
    form: TimeDerivative,
) -> Result<f64> {
    let k = rec.k;
    let km = k - 1;
    debug_assert_eq!(prev.len(), km);
    let c = rec.gg_diag[n] / tau;
    let mut a_self = 0.0;
    for i in 0..rec.n_a {
        a_self += kappa.a[i] * rec.a_self[n * rec.n_a + i];
    }
    let (mut l, cz) = match form {
        TimeDerivative::ProductRule => (2.0 * c - rec.gg_lag[n] / tau - a_self, c),
        TimeDerivative::Exact => (c - a_self, rec.gg_lag[n] / tau),
    };
    let mut s = 0.0;
    for i in 0..rec.n_a {
        let row = &rec.a_cross[(n * rec.n_a + i) * km..(n * rec.n_a + i + 1) * km];
        let mut acc = 0.0;
        for j in 0..km {
            acc += prev[j][n + 1] * row[j];
        }
        s += kappa.a[i] * acc;
    }
    for i in 0..rec.n_c {
        s += kappa.c[i] * rec.c_proj[n * rec.n_c + i];
    }
    let gc = &rec.g_cross[n * k..(n + 1) * k];
    let gl = &rec.g_cross_lag[n * k..(n + 1) * k];
    let mut deriv = 0.0;
    for j in 0..km {
        let (z1, z0) = (prev[j][n + 1], prev[j][n]);
        deriv += match form {
            TimeDerivative::ProductRule => (z1 - z0) * gc[j] + z1 * (gc[j] - gl[j]),
            TimeDerivative::Exact => z1 * gc[j] - z0 * gl[j],
        };
    }
    s -= deriv / tau;

    if !rec.nonlinear.is_empty() {
        let zn = |a: usize| if a < km { prev[a][n] } else { zeta_n };
        for (r, &kh) in rec.nonlinear.iter().zip(&kappa.h) {
            match r {
                NonlinearRecord::Convection { data } => {
                    let base = n * k * k;
                    let mut diag = 0.0;
                    let mut off = 0.0;
                    for a in 0..k {
                        let za = zn(a);
                        let row = &data[base + a * k..base + (a + 1) * k];
                        diag += za * row[km];
                        let mut acc = 0.0;
                        for b in 0..km {
                            acc += prev[b][n + 1] * row[b];
                        }
                        off += za * acc;
                    }
                    l += kh * diag;
                    s -= kh * off;
                }
                NonlinearRecord::Cubic { data } => {
                    let base = n * pair_count(k) * k;
                    let mut diag = 0.0;
                    let mut off = 0.0;
                    let mut p = 0;
                    for a in 0..k {
                        for b in a..k {
                            let w = if a == b { 1.0 } else { 2.0 } * zn(a) * zn(b);
                            let row = &data[base + p * k..base + (p + 1) * k];
                            diag += w * row[km];
                            let mut acc = 0.0;
                            for cidx in 0..km {
                                acc += prev[cidx][n + 1] * row[cidx];
                            }
                            off += w * acc;
                            p += 1;
                        }
                    }
                    l += kh * diag;
                    s -= kh * off;
                }
            }
        }
    }

    if !(l.abs() > L_GUARD * c.abs()) {
        return Err(DvsError::SingularReducedStep { term: k, step: n, l, c });
    }
    Ok((cz * zeta_n + s) / l)
}

/// Whole row `ζ_k(t_n; ξ)`, `n = 0..=N_t`. Singular steps hold the previous
/// value; the number of such steps is returned alongside.
pub fn zeta_row(
    rec: &ProjectionRecord,
    kappa: &Coefficients,
    prev: &[&[f64]],
    zeta0: f64,
    tau: f64,
    form: TimeDerivative,
) -> (Vec<f64>, usize) {
    if rec.nonlinear.is_empty() {
        return linear_row(rec, kappa, prev, zeta0, tau, form);
    }
    let mut row = Vec::with_capacity(rec.steps + 1);
    row.push(zeta0);
    let mut held = 0;
    for n in 0..rec.steps {
        let z = row[n];
        match zeta_step(rec, kappa, prev, z, n, tau, form) {
            Ok(v) => row.push(v),
            Err(e) => {
                if held == 0 {
                    log::warn!("{e}; holding ζ constant");
                }
                held += 1;
                row.push(z);
            }
        }
    }
    (row, held)
}

/// Linear records: everything but the `ζ_{k,n}` chain is known up front, so
/// the coefficients are formed in independent passes over `n` and only a
/// scalar recursion remains.
fn linear_row(
    rec: &ProjectionRecord,
    kappa: &Coefficients,
    prev: &[&[f64]],
    zeta0: f64,
    tau: f64,
    form: TimeDerivative,
) -> (Vec<f64>, usize) {
    let (k, steps, n_a, n_c) = (rec.k, rec.steps, rec.n_a, rec.n_c);
    let km = k - 1;
    let inv_tau = 1.0 / tau;
    // Earlier rows transposed to `[n][j]` so each step reads one contiguous slice.
    let mut zt = vec![0.0; (steps + 1) * km];
    for (j, zj) in prev.iter().enumerate() {
        for (n, v) in zj.iter().enumerate() {
            zt[n * km + j] = *v;
        }
    }
    let mut row = Vec::with_capacity(steps + 1);
    row.push(zeta0);
    let mut held = 0;
    let mut z = zeta0;
    for n in 0..steps {
        let c = rec.gg_diag[n] * inv_tau;
        let a = &rec.a_self[n * n_a..(n + 1) * n_a];
        let a_self: f64 = a.iter().zip(&kappa.a).map(|(x, y)| x * y).sum();
        let (l, cz) = match form {
            TimeDerivative::ProductRule => (2.0 * c - rec.gg_lag[n] * inv_tau - a_self, c),
            TimeDerivative::Exact => (c - a_self, rec.gg_lag[n] * inv_tau),
        };
        let cp = &rec.c_proj[n * n_c..(n + 1) * n_c];
        let mut s: f64 = cp.iter().zip(&kappa.c).map(|(x, y)| x * y).sum();
        let (z0, z1) = (&zt[n * km..(n + 1) * km], &zt[(n + 1) * km..(n + 2) * km]);
        let ac = &rec.a_cross[n * n_a * km..(n + 1) * n_a * km];
        for i in 0..n_a {
            let r = &ac[i * km..(i + 1) * km];
            s += kappa.a[i] * r.iter().zip(z1).map(|(x, y)| x * y).sum::<f64>();
        }
        let gc = &rec.g_cross[n * k..n * k + km];
        let gl = &rec.g_cross_lag[n * k..n * k + km];
        let mut d = 0.0;
        for j in 0..km {
            d += match form {
                TimeDerivative::ProductRule => (z1[j] - z0[j]) * gc[j] + z1[j] * (gc[j] - gl[j]),
                TimeDerivative::Exact => z1[j] * gc[j] - z0[j] * gl[j],
            };
        }
        s -= d * inv_tau;
        if l.abs() > L_GUARD * c.abs() {
            z = (cz * z + s) / l;
        } else {
            if held == 0 {
                log::warn!("{}; holding ζ constant", DvsError::SingularReducedStep { term: k, step: n, l, c });
            }
            held += 1;
        }
        row.push(z);
    }
    (row, held)
}

/// Affine representation of `ζ_{k,0}(ξ)`: weights against the homogeneous
/// initial coefficients and against the earlier `ζ_{j,0}(ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zeta0Rep {
    pub p_weights: Vec<f64>,
    pub prev_weights: Vec<f64>,
    /// `g_{k,0}` vanished and `ζ_{k,0} ≡ 0`.
    pub degenerate: bool,
}

impl Zeta0Rep {
    pub fn zero(n_init: usize, k: usize) -> Self {
        Zeta0Rep {
            p_weights: vec![0.0; n_init],
            prev_weights: vec![0.0; k - 1],
            degenerate: true,
        }
    }

    /// Projection weights of `g0` (non-degenerate case).
    pub fn project(disc: &Discretization, g0: &[f64], prev_g0: &[&[f64]]) -> Self {
        let mg = disc.m.matvec(g0);
        let gg = dot(&mg, g0);
        Zeta0Rep {
            p_weights: disc.init_vecs.iter().map(|q| dot(&mg, q) / gg).collect(),
            prev_weights: prev_g0.iter().map(|g| -dot(&mg, g) / gg).collect(),
            degenerate: false,
        }
    }

    pub fn eval(&self, init_coefs: &[f64], prev_zeta0: &[f64]) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let mut v = 0.0;
        for (w, p) in self.p_weights.iter().zip(init_coefs) {
            v += w * p;
        }
        for (w, z) in self.prev_weights.iter().zip(prev_zeta0) {
            v += w * z;
        }
        v
    }
}
