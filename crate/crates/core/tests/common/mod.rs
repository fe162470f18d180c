#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use pardyn::discretization::{Discretization, MeshSpec};
use pardyn::linalg::CsrMatrix;
use pardyn::problem::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_problem(dim: usize, nonlinear: Vec<NonlinearOp>) -> ParametricProblem {
    ParametricProblem {
        name: "oracle".into(),
        domain: Domain {
            lo: vec![0.0; dim],
            hi: (0..dim).map(|d| 1.0 + 0.5 * d as f64).collect(),
        },
        t_final: 0.1,
        parameter_box: vec![(1.0, 2.0)],
        affine: AffineExpansion {
            constant: vec![ConstantTerm {
                coef: Coefficient::constant("1", 1.0),
                load: Load::Source { field: SpatialFn::Constant { value: 1.0 } },
            }],
            linear: vec![LinearTerm {
                coef: Coefficient::monomial("xi1", 1.0, &[(0, 1)]),
                op: LinearOp::Laplacian,
            }],
            nonlinear: nonlinear
                .into_iter()
                .map(|op| NonlinearTerm { coef: Coefficient::constant("1", 1.0), op })
                .collect(),
        },
        initial: vec![FieldTerm {
            coef: Coefficient::constant("1", 1.0),
            field: SpatialFn::Constant { value: 0.0 },
        }],
        lifting: vec![],
    }
}

pub fn random_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Piecewise-(bi)linear interpolant of a nodal field and its gradient,
/// evaluated independently of the library's element loops.
pub struct Interp<'a> {
    pub disc: &'a Discretization,
}

impl Interp<'_> {
    fn locate(&self, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let m = &self.disc.mesh;
        let mut idx = Vec::new();
        let mut frac = Vec::new();
        for d in 0..m.dim {
            let s = (x[d] - m.lo[d]) / m.h[d];
            let i = (s.floor() as usize).min(m.cells[d] - 1);
            idx.push(i);
            frac.push(s - i as f64);
        }
        (idx, frac)
    }

    fn node(&self, idx: &[usize]) -> usize {
        let m = &self.disc.mesh;
        if m.dim == 1 {
            idx[0]
        } else {
            idx[0] + (m.cells[0] + 1) * idx[1]
        }
    }

    pub fn value(&self, f: &[f64], x: &[f64]) -> f64 {
        let (i, s) = self.locate(x);
        if i.len() == 1 {
            f[i[0]] * (1.0 - s[0]) + f[i[0] + 1] * s[0]
        } else {
            let v = |a: usize, b: usize| f[self.node(&[i[0] + a, i[1] + b])];
            v(0, 0) * (1.0 - s[0]) * (1.0 - s[1])
                + v(1, 0) * s[0] * (1.0 - s[1])
                + v(0, 1) * (1.0 - s[0]) * s[1]
                + v(1, 1) * s[0] * s[1]
        }
    }

    pub fn grad(&self, f: &[f64], x: &[f64]) -> Vec<f64> {
        let m = &self.disc.mesh;
        let (i, s) = self.locate(x);
        if i.len() == 1 {
            vec![(f[i[0] + 1] - f[i[0]]) / m.h[0]]
        } else {
            let v = |a: usize, b: usize| f[self.node(&[i[0] + a, i[1] + b])];
            vec![
                ((v(1, 0) - v(0, 0)) * (1.0 - s[1]) + (v(1, 1) - v(0, 1)) * s[1]) / m.h[0],
                ((v(0, 1) - v(0, 0)) * (1.0 - s[0]) + (v(1, 1) - v(1, 0)) * s[0]) / m.h[1],
            ]
        }
    }
}

/// Composite Boole rule (exact through degree 5 per axis) with `panels`
/// panels per mesh cell, aligned with the cells so the piecewise
/// polynomial integrands are integrated without kinks inside a panel.
pub fn fine_quadrature(disc: &Discretization, panels: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let m = &disc.mesh;
    let rule = [7.0, 32.0, 12.0, 32.0, 7.0];
    let axis = |d: usize| -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        let width = m.h[d] / panels as f64;
        for c in 0..m.cells[d] {
            for p in 0..panels {
                let a = m.lo[d] + c as f64 * m.h[d] + p as f64 * width;
                for (r, w) in rule.iter().enumerate() {
                    // nudge into the panel so boundary points are located in the right cell
                    let x = a + width * r as f64 / 4.0;
                    let x = x.clamp(a + 1e-14 * m.h[d], a + width - 1e-14 * m.h[d]);
                    pts.push((x, w * width / 90.0));
                }
            }
        }
        pts
    };
    let ax = axis(0);
    if m.dim == 1 {
        ax.iter().map(|(x, w)| w * f(&[*x])).sum()
    } else {
        let ay = axis(1);
        let mut s = 0.0;
        for (y, wy) in &ay {
            for (x, wx) in &ax {
                s += wx * wy * f(&[*x, *y]);
            }
        }
        s
    }
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| d[i][j])
}

/// Eigenpairs of `S v = λ M v` through a Cholesky reduction; eigenvectors
/// are M-orthonormal, eigenvalues ascending.
pub fn generalized_eigen(s: &DMatrix<f64>, m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let l = m.clone().cholesky().expect("mass matrix is SPD").l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * s * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let y = eig.eigenvectors.column(i).into_owned();
            (li.transpose() * y).iter().copied().collect()
        })
        .collect();
    (vals, vecs)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Linear problem with an exactly rank-2 separable discrete solution
/// `u_n = ξ₁ rₐⁿ φ_a + ξ₂ r_bⁿ φ_b`: fixed diffusion `ν Δu`, initial data on
/// two M-orthonormal generalized eigenvectors of the Laplacian, no source.
pub fn separable_problem(cells: usize) -> (ParametricProblem, MeshSpec) {
    let base = unit_problem(1, vec![]);
    let spec = MeshSpec { cells: vec![cells] };
    let disc = Discretization::new(&base, &spec).unwrap();
    let k = dense(&disc.a_mats[0]).scale(-1.0);
    let m = dense(&disc.m);
    let (_, vecs) = generalized_eigen(&k, &m);
    let full = |v: &[f64]| disc.extend(v);
    let phi1 = full(&vecs[0]);
    let phi2 = full(&vecs[2]);
    let problem = ParametricProblem {
        name: "separable".into(),
        domain: base.domain.clone(),
        t_final: 0.1,
        parameter_box: vec![(0.5, 1.5), (0.5, 1.5)],
        affine: AffineExpansion {
            constant: vec![],
            linear: vec![LinearTerm {
                coef: Coefficient::constant("nu", 0.1),
                op: LinearOp::Laplacian,
            }],
            nonlinear: vec![],
        },
        initial: vec![
            FieldTerm {
                coef: Coefficient::monomial("xi1", 1.0, &[(0, 1)]),
                field: SpatialFn::Nodal { values: phi1 },
            },
            FieldTerm {
                coef: Coefficient::monomial("xi2", 1.0, &[(1, 1)]),
                field: SpatialFn::Nodal { values: phi2 },
            },
        ],
        lifting: vec![],
    };
    (problem, spec)
}
