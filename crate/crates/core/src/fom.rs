//! Full-order time stepping: backward Euler for linear problems and the
//! semi-implicit variant (lagged first factor in every nonlinear product)
//! otherwise.
//!
//! The same routine advances the error equation of an enrichment step, and
//! the full-order solve is just that routine with no previous terms, so the
//! first spatial basis and the reference solution at the same parameter are
//! bitwise identical.

use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{DvsError, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::problem::{Coefficients, ParametricProblem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > 0.0) {
            return Err(DvsError::Config(format!("invalid time grid T={t_final}, N_t={steps}")));
        }
        Ok(TimeGrid { t_final, steps })
    }

    /// Grid with step size closest to `tau`.
    pub fn with_step(t_final: f64, tau: f64) -> Result<Self> {
        Self::new(t_final, (t_final / tau).round().max(1.0) as usize)
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau()
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Node closest to time `t`.
    pub fn node_at(&self, t: f64) -> usize {
        ((t / self.tau()).round().max(0.0) as usize).min(self.steps)
    }
}

/// Dof-space fields at every time node, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dofs: usize,
    nodes: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(dofs: usize, nodes: usize) -> Self {
        Trajectory {
            dofs,
            nodes,
            data: vec![0.0; dofs * nodes],
        }
    }

    pub fn from_data(dofs: usize, nodes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dofs * nodes {
            return Err(DvsError::Format(format!(
                "trajectory block of {} values, expected {dofs}x{nodes}",
                data.len()
            )));
        }
        Ok(Trajectory { dofs, nodes, data })
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn field(&self, n: usize) -> &[f64] {
        &self.data[n * self.dofs..(n + 1) * self.dofs]
    }

    pub fn field_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.dofs..(n + 1) * self.dofs]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A previous separated term `ζ_j(t; ξ) g_j(x, t)` evaluated at one parameter.
#[derive(Clone, Copy)]
pub struct PrevTerm<'a> {
    pub g: &'a Trajectory,
    pub zeta: &'a [f64],
}

/// `out = Σ_j ζ_{j,n} g_{j,n}`
pub fn combine(prev: &[PrevTerm<'_>], n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for p in prev {
        let z = p.zeta[n];
        if z == 0.0 {
            continue;
        }
        for (o, g) in out.iter_mut().zip(p.g.field(n)) {
            *o += z * g;
        }
    }
}

const DIVERGENCE_FACTOR: f64 = 1e6;

fn factor(s: &CsrMatrix, step: usize) -> Result<BandedLu> {
    BandedLu::factor(s).map_err(|(row, pivot)| DvsError::SingularStep { step, row, pivot })
}

/// Advances `e = u − u_prev` from `e0`, where `u_prev = Σ ζ_j g_j` is the
/// current separated approximation at this parameter. The discrete
/// equation is the scheme of the full-order model applied to
/// `u_prev + e`, so the result equals the full-order solution minus
/// `u_prev` up to round-off.
pub fn solve_error_equation(
    disc: &Discretization,
    coefs: &Coefficients,
    grid: &TimeGrid,
    prev: &[PrevTerm<'_>],
    e0: &[f64],
) -> Result<Trajectory> {
    disc.dims_check(e0)?;
    let nd = disc.n_dofs();
    let tau = grid.tau();
    let a_op = disc.linear_operator(&coefs.a);
    let source = disc.source(&coefs.c);
    let base = CsrMatrix::linear_combination(&[(1.0 / tau, &disc.m), (-1.0, &a_op)]);
    let nonlinear = !disc.nonlinear_ops.is_empty();
    let linear_lu = if nonlinear { None } else { Some(factor(&base, 1)?) };

    let mut traj = Trajectory::zeros(nd, grid.nodes());
    traj.field_mut(0).copy_from_slice(e0);

    let mut u0 = vec![0.0; nd];
    let mut u1 = vec![0.0; nd];
    let mut w = vec![0.0; nd];
    let mut w_full = vec![0.0; disc.n_nodes()];
    let mut tmp = vec![0.0; nd];
    let mut rhs = vec![0.0; nd];
    let has_prev = !prev.is_empty();
    if has_prev {
        combine(prev, 0, &mut u0);
    }
    let limit = if nonlinear {
        for i in 0..nd {
            w[i] = u0[i] + e0[i];
        }
        DIVERGENCE_FACTOR * disc.norm(&w) + 1.0
    } else {
        f64::INFINITY
    };

    for n in 0..grid.steps {
        let (done, rest) = traj.data.split_at_mut((n + 1) * nd);
        let en = &done[n * nd..];
        let next = &mut rest[..nd];
        if has_prev {
            combine(prev, n + 1, &mut u1);
            for i in 0..nd {
                tmp[i] = (en[i] - u1[i] + u0[i]) / tau;
            }
            disc.m.matvec_into(&tmp, &mut rhs);
            a_op.matvec_into(&u1, &mut tmp);
            for i in 0..nd {
                rhs[i] += tmp[i] + source[i];
            }
        } else {
            for i in 0..nd {
                tmp[i] = en[i] / tau;
            }
            disc.m.matvec_into(&tmp, &mut rhs);
            for i in 0..nd {
                rhs[i] += source[i];
            }
        }
        match &linear_lu {
            Some(lu) => {
                next.copy_from_slice(&rhs);
                lu.solve_in_place(next);
            }
            None => {
                for i in 0..nd {
                    w[i] = u0[i] + en[i];
                }
                disc.extend_into(&w, &mut w_full);
                let nmat = disc
                    .nonlinear_matrix(&coefs.h, &w_full)
                    .expect("nonlinear problem has nonlinear terms");
                if has_prev {
                    nmat.matvec_into(&u1, &mut tmp);
                    for i in 0..nd {
                        rhs[i] -= tmp[i];
                    }
                }
                let mut s = base.clone();
                s.add_scaled(1.0, &nmat);
                let lu = factor(&s, n + 1)?;
                next.copy_from_slice(&rhs);
                lu.solve_in_place(next);
            }
        }
        if nonlinear {
            for i in 0..nd {
                w[i] = u1[i] + next[i];
            }
            let norm = disc.norm(&w);
            if !(norm <= limit) {
                return Err(DvsError::Divergence { step: n + 1, norm, limit });
            }
        } else if next.iter().any(|v| !v.is_finite()) {
            return Err(DvsError::Divergence {
                step: n + 1,
                norm: f64::NAN,
                limit,
            });
        }
        if has_prev {
            std::mem::swap(&mut u0, &mut u1);
        }
    }
    Ok(traj)
}

/// Homogeneous initial dofs at `xi`.
pub fn initial_dofs(problem: &ParametricProblem, disc: &Discretization, xi: &[f64]) -> Vec<f64> {
    disc.initial_dofs(&problem.homogeneous_initial_coefficients(xi))
}

/// Backward Euler for a linear problem.
pub fn solve_linear(problem: &ParametricProblem, disc: &Discretization, xi: &[f64], grid: &TimeGrid) -> Result<Trajectory> {
    if !problem.is_linear() {
        return Err(DvsError::Config("solve_linear needs a problem without nonlinear terms".into()));
    }
    solve_fom(problem, disc, xi, grid)
}

/// Semi-implicit backward Euler for a problem with nonlinear terms.
pub fn solve_semi_implicit(problem: &ParametricProblem, disc: &Discretization, xi: &[f64], grid: &TimeGrid) -> Result<Trajectory> {
    if problem.is_linear() {
        return Err(DvsError::Config("solve_semi_implicit needs at least one nonlinear term".into()));
    }
    solve_fom(problem, disc, xi, grid)
}

/// Full-order solve; the trajectory holds the homogeneous part.
pub fn solve_fom(problem: &ParametricProblem, disc: &Discretization, xi: &[f64], grid: &TimeGrid) -> Result<Trajectory> {
    let coefs = problem.evaluate_coefficients(xi)?;
    let e0 = initial_dofs(problem, disc, xi);
    solve_error_equation(disc, &coefs, grid, &[], &e0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.tau(), 0.25);
        assert_eq!(g.nodes(), 5);
        assert_eq!(g.node_at(0.5), 2);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
