//! Structured meshes and piecewise (bi)linear finite elements.
//!
//! Nodes are numbered x-fastest. Dirichlet nodes are eliminated: the
//! unknowns ("dofs") are the interior nodes, and every interior matrix
//! shares one sparsity pattern (the element connectivity), so affine
//! combinations and lagged nonlinear matrices are plain array operations.

use serde::{Deserialize, Serialize};

use crate::error::{DvsError, Result};
use crate::linalg::{dot, BandedLu, CsrMatrix};
use crate::problem::{Coefficients, LinearOp, Load, NonlinearOp, ParametricProblem};

/// Cells per axis; the geometry comes from the problem's domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub cells: Vec<usize>,
}

impl MeshSpec {
    pub fn uniform(dim: usize, cells: usize) -> Self {
        MeshSpec { cells: vec![cells; dim] }
    }

    /// Cells needed for spacing `h` on an interval of the given length.
    pub fn from_spacing(lengths: &[f64], h: f64) -> Self {
        MeshSpec {
            cells: lengths.iter().map(|l| (l / h).round().max(2.0) as usize).collect(),
        }
    }

    /// Same mesh with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        MeshSpec {
            cells: self.cells.iter().map(|c| c * factor).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
    pub boundary: Vec<usize>,
    /// Node index of every dof.
    pub interior: Vec<usize>,
    node_to_dof: Vec<usize>,
    elements: Vec<[usize; 4]>,
}

const NO_DOF: usize = usize::MAX;

impl Mesh {
    pub fn new(lo: &[f64], hi: &[f64], spec: &MeshSpec) -> Result<Self> {
        let dim = lo.len();
        if spec.cells.len() != dim || !(1..=2).contains(&dim) {
            return Err(DvsError::Config(format!(
                "mesh has {} axes but the domain has {dim}",
                spec.cells.len()
            )));
        }
        if spec.cells.iter().any(|&c| c < 2) {
            return Err(DvsError::Config("need at least 3 nodes per axis".into()));
        }
        let cells = spec.cells.clone();
        let h: Vec<f64> = (0..dim).map(|d| (hi[d] - lo[d]) / cells[d] as f64).collect();
        let nx = cells[0] + 1;
        let ny = if dim == 2 { cells[1] + 1 } else { 1 };
        let mut coords = Vec::with_capacity(nx * ny);
        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        let mut node_to_dof = vec![NO_DOF; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let node = i + nx * j;
                let x = lo[0] + i as f64 * h[0];
                let on_bd = i == 0 || i == nx - 1 || (dim == 2 && (j == 0 || j == ny - 1));
                if dim == 1 {
                    coords.push(vec![x]);
                } else {
                    coords.push(vec![x, lo[1] + j as f64 * h[1]]);
                }
                if on_bd {
                    boundary.push(node);
                } else {
                    node_to_dof[node] = interior.len();
                    interior.push(node);
                }
            }
        }
        let mut elements = Vec::new();
        if dim == 1 {
            for e in 0..cells[0] {
                elements.push([e, e + 1, 0, 0]);
            }
        } else {
            for j in 0..cells[1] {
                for i in 0..cells[0] {
                    let n = i + nx * j;
                    elements.push([n, n + 1, n + nx, n + nx + 1]);
                }
            }
        }
        Ok(Mesh {
            dim,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            cells,
            h,
            coords,
            boundary,
            interior,
            node_to_dof,
            elements,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.interior.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn local_count(&self) -> usize {
        1 << self.dim
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.local_count()]
    }

    pub fn dof_of(&self, node: usize) -> Option<usize> {
        let d = self.node_to_dof[node];
        (d != NO_DOF).then_some(d)
    }
}

/// Reference-element data at the quadrature points of one rule. Elements
/// are congruent, so a single table serves the whole mesh.
#[derive(Clone, Debug)]
struct QuadCache {
    weights: Vec<f64>,
    /// `values[q * nloc + a]`
    values: Vec<f64>,
    /// `grads[(q * nloc + a) * dim + d]`
    grads: Vec<f64>,
    nloc: usize,
    dim: usize,
}

fn gauss01(points: usize) -> (Vec<f64>, Vec<f64>) {
    match points {
        2 => {
            let s = 0.5 / 3f64.sqrt();
            (vec![0.5 - s, 0.5 + s], vec![0.5, 0.5])
        }
        3 => {
            let s = 0.5 * (0.6f64).sqrt();
            (vec![0.5 - s, 0.5, 0.5 + s], vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
        }
        _ => unreachable!("only 2- and 3-point rules are used"),
    }
}

impl QuadCache {
    fn new(dim: usize, h: &[f64], points: usize) -> Self {
        let (x, w) = gauss01(points);
        let nloc = 1 << dim;
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut grads = Vec::new();
        let phi = |s: f64, a: usize| if a == 0 { 1.0 - s } else { s };
        let dphi = |a: usize| if a == 0 { -1.0 } else { 1.0 };
        if dim == 1 {
            for (s, ws) in x.iter().zip(&w) {
                weights.push(ws * h[0]);
                for a in 0..2 {
                    values.push(phi(*s, a));
                    grads.push(dphi(a) / h[0]);
                }
            }
        } else {
            for (sy, wy) in x.iter().zip(&w) {
                for (sx, wx) in x.iter().zip(&w) {
                    weights.push(wx * wy * h[0] * h[1]);
                    for a in 0..4 {
                        let (ax, ay) = (a & 1, a >> 1);
                        values.push(phi(*sx, ax) * phi(*sy, ay));
                        grads.push(dphi(ax) / h[0] * phi(*sy, ay));
                        grads.push(phi(*sx, ax) * dphi(ay) / h[1]);
                    }
                }
            }
        }
        QuadCache {
            weights,
            values,
            grads,
            nloc,
            dim,
        }
    }

    fn n_points(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    fn value(&self, q: usize, a: usize) -> f64 {
        self.values[q * self.nloc + a]
    }

    #[inline]
    fn grad(&self, q: usize, a: usize, d: usize) -> f64 {
        self.grads[(q * self.nloc + a) * self.dim + d]
    }

    /// Field value and x-derivative at each quadrature point of an element.
    fn interpolate(&self, local: &[f64], val: &mut [f64], dx: &mut [f64]) {
        for q in 0..self.n_points() {
            let mut v = 0.0;
            let mut g = 0.0;
            for (a, &u) in local.iter().enumerate() {
                v += self.value(q, a) * u;
                g += self.grad(q, a, 0) * u;
            }
            val[q] = v;
            dx[q] = g;
        }
    }
}

/// Assembled operators of one problem on one mesh.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    /// Full-node mass and stiffness matrices (used for liftings and norms).
    pub m_full: CsrMatrix,
    pub k_full: CsrMatrix,
    /// Interior mass matrix and its factorization.
    pub m: CsrMatrix,
    pub m_lu: BandedLu,
    /// Interior matrices of the linear terms `A^i`.
    pub a_mats: Vec<CsrMatrix>,
    /// Interior load vectors of the constant terms `C^i`.
    pub c_vecs: Vec<Vec<f64>>,
    /// Interior vectors of the homogeneous initial data: the initial terms
    /// followed by the negated liftings.
    pub init_vecs: Vec<Vec<f64>>,
    /// Full-node lifting fields.
    pub lift_fields: Vec<Vec<f64>>,
    pub nonlinear_ops: Vec<NonlinearOp>,
    scatter: Vec<usize>,
    q3: QuadCache,
}

impl Discretization {
    pub fn new(problem: &ParametricProblem, spec: &MeshSpec) -> Result<Self> {
        problem.validate()?;
        let mesh = Mesh::new(&problem.domain.lo, &problem.domain.hi, spec)?;
        let q2 = QuadCache::new(mesh.dim, &mesh.h, 2);
        let q3 = QuadCache::new(mesh.dim, &mesh.h, 3);
        let nloc = mesh.local_count();
        let mut me = vec![0.0; nloc * nloc];
        let mut ke = vec![0.0; nloc * nloc];
        for q in 0..q2.n_points() {
            let w = q2.weights[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    me[a * nloc + b] += w * q2.value(q, a) * q2.value(q, b);
                    let mut g = 0.0;
                    for d in 0..mesh.dim {
                        g += q2.grad(q, a, d) * q2.grad(q, b, d);
                    }
                    ke[a * nloc + b] += w * g;
                }
            }
        }
        let n = mesh.n_nodes();
        let mut tm = Vec::new();
        let mut tk = Vec::new();
        let mut ti = Vec::new();
        for e in 0..mesh.n_elements() {
            let nodes = mesh.element_nodes(e);
            for a in 0..nloc {
                for b in 0..nloc {
                    tm.push((nodes[a], nodes[b], me[a * nloc + b]));
                    tk.push((nodes[a], nodes[b], ke[a * nloc + b]));
                    if let (Some(r), Some(c)) = (mesh.dof_of(nodes[a]), mesh.dof_of(nodes[b])) {
                        ti.push((r, c, 0.0));
                    }
                }
            }
        }
        let m_full = CsrMatrix::from_triplets(n, n, &tm);
        let k_full = CsrMatrix::from_triplets(n, n, &tk);
        let nd = mesh.n_dofs();
        let pattern = CsrMatrix::from_triplets(nd, nd, &ti);
        let mut scatter = Vec::with_capacity(mesh.n_elements() * nloc * nloc);
        for e in 0..mesh.n_elements() {
            let nodes = mesh.element_nodes(e);
            for a in 0..nloc {
                for b in 0..nloc {
                    let pos = match (mesh.dof_of(nodes[a]), mesh.dof_of(nodes[b])) {
                        (Some(r), Some(c)) => pattern.position(r, c).unwrap(),
                        _ => NO_DOF,
                    };
                    scatter.push(pos);
                }
            }
        }
        let mut disc = Discretization {
            mesh,
            m_full,
            k_full,
            m: pattern.clone(),
            m_lu: BandedLu::factor(&CsrMatrix::identity(1)).unwrap(),
            a_mats: Vec::new(),
            c_vecs: Vec::new(),
            init_vecs: Vec::new(),
            lift_fields: Vec::new(),
            nonlinear_ops: problem.affine.nonlinear.iter().map(|t| t.op).collect(),
            scatter,
            q3,
        };
        disc.m = disc.assemble_element_matrix(&pattern, &me);
        let k = disc.assemble_element_matrix(&pattern, &ke);
        disc.m_lu = BandedLu::factor(&disc.m).map_err(|(row, pivot)| DvsError::SingularStep { step: 0, row, pivot })?;
        disc.a_mats = problem
            .affine
            .linear
            .iter()
            .map(|t| match t.op {
                LinearOp::Laplacian => {
                    let mut a = k.clone();
                    a.data_mut().iter_mut().for_each(|v| *v = -*v);
                    a
                }
                LinearOp::Mass => disc.m.clone(),
            })
            .collect();
        let coords = &disc.mesh.coords;
        let mut c_vecs = Vec::new();
        for t in &problem.affine.constant {
            let full = match &t.load {
                Load::Source { field } => disc.m_full.matvec(&field.sample(coords)?),
                Load::OperatorApplied { op, field } => {
                    let f = field.sample(coords)?;
                    match op {
                        LinearOp::Laplacian => disc.k_full.matvec(&f).into_iter().map(|v| -v).collect(),
                        LinearOp::Mass => disc.m_full.matvec(&f),
                    }
                }
            };
            c_vecs.push(disc.restrict(&full));
        }
        disc.c_vecs = c_vecs;
        let mut init_vecs = Vec::new();
        for t in &problem.initial {
            init_vecs.push(disc.restrict(&t.field.sample(coords)?));
        }
        let mut lift_fields = Vec::new();
        for t in &problem.lifting {
            let f = t.field.sample(coords)?;
            init_vecs.push(disc.restrict(&f));
            lift_fields.push(f);
        }
        disc.init_vecs = init_vecs;
        disc.lift_fields = lift_fields;
        Ok(disc)
    }

    fn assemble_element_matrix(&self, pattern: &CsrMatrix, elem: &[f64]) -> CsrMatrix {
        let mut out = pattern.clone();
        let nloc2 = elem.len();
        let data = out.data_mut();
        data.iter_mut().for_each(|v| *v = 0.0);
        for e in 0..self.mesh.n_elements() {
            for (ab, &v) in elem.iter().enumerate() {
                let pos = self.scatter[e * nloc2 + ab];
                if pos != NO_DOF {
                    data[pos] += v;
                }
            }
        }
        out
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Interior values of a full-node field.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.mesh.interior.iter().map(|&n| full[n]).collect()
    }

    /// Full-node field with zero boundary values.
    pub fn extend(&self, dofs: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes()];
        self.extend_into(dofs, &mut full);
        full
    }

    pub fn extend_into(&self, dofs: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        for (&n, &v) in self.mesh.interior.iter().zip(dofs) {
            full[n] = v;
        }
    }

    /// Physical field: homogeneous part plus the lifting at `lift_coefs`.
    pub fn physical(&self, dofs: &[f64], lift_coefs: &[f64]) -> Vec<f64> {
        let mut full = self.extend(dofs);
        for (c, l) in lift_coefs.iter().zip(&self.lift_fields) {
            for (f, v) in full.iter_mut().zip(l) {
                *f += c * v;
            }
        }
        full
    }

    /// Discrete L² product on the dofs.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.m.bilinear(a, b)
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Discrete L² norm of a full-node field.
    pub fn norm_full(&self, a: &[f64]) -> f64 {
        self.m_full.bilinear(a, a).max(0.0).sqrt()
    }

    /// `Σ κ_A^i A^i`.
    pub fn linear_operator(&self, kappa_a: &[f64]) -> CsrMatrix {
        if self.a_mats.is_empty() {
            let mut z = self.m.clone();
            z.data_mut().iter_mut().for_each(|v| *v = 0.0);
            return z;
        }
        let terms: Vec<(f64, &CsrMatrix)> = kappa_a.iter().copied().zip(self.a_mats.iter()).collect();
        CsrMatrix::linear_combination(&terms)
    }

    /// `Σ κ_C^i C^i`.
    pub fn source(&self, kappa_c: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_dofs()];
        for (k, c) in kappa_c.iter().zip(&self.c_vecs) {
            for (o, v) in s.iter_mut().zip(c) {
                *o += k * v;
            }
        }
        s
    }

    /// Homogeneous initial dofs `Σ p^i q^i − Σ λ_j ℓ_j` from its coefficients.
    pub fn initial_dofs(&self, init_coefs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        for (p, q) in init_coefs.iter().zip(&self.init_vecs) {
            for (o, v) in out.iter_mut().zip(q) {
                *o += p * v;
            }
        }
        out
    }

    fn gather(&self, e: usize, full: &[f64], local: &mut [f64; 4]) {
        for (a, &n) in self.mesh.element_nodes(e).iter().enumerate() {
            local[a] = full[n];
        }
    }

    /// Dual vector `⟨N(fields), φ_i⟩` of a nonlinear term over all nodes:
    /// convection takes `(a, b)` and gives `⟨a ∂b/∂x, φ_i⟩`, cubic takes
    /// `(a, b, c)` and gives `⟨a b c, φ_i⟩`. Fields are full-node arrays.
    pub fn apply_nonlinear(&self, op: NonlinearOp, fields: &[&[f64]]) -> Result<Vec<f64>> {
        let arity = op.degree() as usize;
        if fields.len() != arity {
            return Err(DvsError::Config(format!("{op:?} takes {arity} fields, got {}", fields.len())));
        }
        for f in fields {
            if f.len() != self.n_nodes() {
                return Err(DvsError::Config("field length does not match the mesh".into()));
            }
        }
        if op == NonlinearOp::Convection && self.mesh.dim != 1 {
            return Err(DvsError::Config("convection is only available in one dimension".into()));
        }
        let q = &self.q3;
        let nq = q.n_points();
        let mut out = vec![0.0; self.n_nodes()];
        let mut la = [0.0; 4];
        let mut lb = [0.0; 4];
        let mut lc = [0.0; 4];
        let (mut va, mut da) = (vec![0.0; nq], vec![0.0; nq]);
        let (mut vb, mut db) = (vec![0.0; nq], vec![0.0; nq]);
        let (mut vc, mut dc) = (vec![0.0; nq], vec![0.0; nq]);
        let nloc = self.mesh.local_count();
        for e in 0..self.mesh.n_elements() {
            self.gather(e, fields[0], &mut la);
            self.gather(e, fields[1], &mut lb);
            q.interpolate(&la[..nloc], &mut va, &mut da);
            q.interpolate(&lb[..nloc], &mut vb, &mut db);
            let integrand: Vec<f64> = match op {
                NonlinearOp::Convection => (0..nq).map(|k| va[k] * db[k]).collect(),
                NonlinearOp::Cubic => {
                    self.gather(e, fields[2], &mut lc);
                    q.interpolate(&lc[..nloc], &mut vc, &mut dc);
                    (0..nq).map(|k| va[k] * vb[k] * vc[k]).collect()
                }
            };
            let nodes = self.mesh.element_nodes(e);
            for k in 0..nq {
                let w = q.weights[k] * integrand[k];
                for a in 0..nloc {
                    out[nodes[a]] += w * q.value(k, a);
                }
            }
        }
        Ok(out)
    }

    /// Lagged interior matrix of a nonlinear term, so that its contribution
    /// at step n+1 is `−κ N(w_n) u_{n+1}`: convection `∫ w ∂φ_j/∂x φ_i`,
    /// cubic `∫ w² φ_j φ_i`. `w` is a full-node field.
    pub fn lagged_matrix(&self, op: NonlinearOp, w: &[f64]) -> CsrMatrix {
        self.weighted_matrix(w, |wv, _wd| match op {
            NonlinearOp::Convection => (wv, true),
            NonlinearOp::Cubic => (wv * wv, false),
        })
    }

    /// Interior matrix `∫ ∂w/∂x φ_j φ_i` (the second convection Jacobian part).
    pub fn derivative_weight_matrix(&self, w: &[f64]) -> CsrMatrix {
        self.weighted_matrix(w, |_wv, wd| (wd, false))
    }

    /// `∫ ρ(w) ψ_j φ_i` where `ρ` and the choice `ψ = ∂φ/∂x` (flag) come
    /// from `f(w, ∂w/∂x)`. The flag must be the same at every point.
    fn weighted_matrix(&self, w: &[f64], f: impl Fn(f64, f64) -> (f64, bool)) -> CsrMatrix {
        let q = &self.q3;
        let nq = q.n_points();
        let nloc = self.mesh.local_count();
        let mut out = self.m.clone();
        let data = out.data_mut();
        data.iter_mut().for_each(|v| *v = 0.0);
        let mut lw = [0.0; 4];
        let mut wv = vec![0.0; nq];
        let mut wd = vec![0.0; nq];
        for e in 0..self.mesh.n_elements() {
            self.gather(e, w, &mut lw);
            q.interpolate(&lw[..nloc], &mut wv, &mut wd);
            let base = e * nloc * nloc;
            for k in 0..nq {
                let (rho, deriv) = f(wv[k], wd[k]);
                let wr = q.weights[k] * rho;
                for a in 0..nloc {
                    let pa = q.value(k, a) * wr;
                    for b in 0..nloc {
                        let pos = self.scatter[base + a * nloc + b];
                        if pos == NO_DOF {
                            continue;
                        }
                        let psi = if deriv { q.grad(k, b, 0) } else { q.value(k, b) };
                        data[pos] += pa * psi;
                    }
                }
            }
        }
        out
    }

    /// `v_j = ∫ a c ∂φ_j/∂x` over all nodes, so `Σ_j b_j v_j = ⟨a ∂b/∂x, c⟩`.
    pub fn convection_test_vector(&self, a: &[f64], c: &[f64]) -> Vec<f64> {
        let q = &self.q3;
        let nq = q.n_points();
        let nloc = self.mesh.local_count();
        let mut out = vec![0.0; self.n_nodes()];
        let (mut la, mut lc) = ([0.0; 4], [0.0; 4]);
        let (mut va, mut vc, mut dd) = (vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]);
        for e in 0..self.mesh.n_elements() {
            self.gather(e, a, &mut la);
            self.gather(e, c, &mut lc);
            q.interpolate(&la[..nloc], &mut va, &mut dd);
            q.interpolate(&lc[..nloc], &mut vc, &mut dd);
            let nodes = self.mesh.element_nodes(e);
            for k in 0..nq {
                let w = q.weights[k] * va[k] * vc[k];
                for b in 0..nloc {
                    out[nodes[b]] += w * q.grad(k, b, 0);
                }
            }
        }
        out
    }

    pub fn dims_check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_dofs() {
            return Err(DvsError::Config(format!(
                "vector of length {} where {} dofs are expected",
                v.len(),
                self.n_dofs()
            )));
        }
        Ok(())
    }

    /// Restriction of a full-node dual vector to the dofs.
    pub fn restrict_dual(&self, full: &[f64]) -> Vec<f64> {
        self.restrict(full)
    }

    /// Coefficient-weighted lagged matrix of every nonlinear term at `w`.
    pub fn nonlinear_matrix(&self, kappa_h: &[f64], w: &[f64]) -> Option<CsrMatrix> {
        if self.nonlinear_ops.is_empty() {
            return None;
        }
        let mut acc: Option<CsrMatrix> = None;
        for (&op, &k) in self.nonlinear_ops.iter().zip(kappa_h) {
            let mat = self.lagged_matrix(op, w);
            match acc.as_mut() {
                None => {
                    let mut m = mat;
                    m.data_mut().iter_mut().for_each(|v| *v *= k);
                    acc = Some(m);
                }
                Some(a) => a.add_scaled(k, &mat),
            }
        }
        acc
    }

    /// `F(u) = Σκ_C C + Σκ_A A u + Σκ_H H(u)` as an interior dual vector,
    /// with `u` given on the dofs (homogeneous part).
    pub fn rhs_operator(&self, coefs: &Coefficients, a_op: &CsrMatrix, u: &[f64]) -> Vec<f64> {
        let mut out = a_op.matvec(u);
        for (o, s) in out.iter_mut().zip(self.source(&coefs.c)) {
            *o += s;
        }
        if !self.nonlinear_ops.is_empty() {
            let full = self.extend(u);
            for (&op, &k) in self.nonlinear_ops.iter().zip(&coefs.h) {
                let v = match op {
                    NonlinearOp::Convection => self.apply_nonlinear(op, &[&full, &full]),
                    NonlinearOp::Cubic => self.apply_nonlinear(op, &[&full, &full, &full]),
                }
                .expect("arity is fixed by the operator");
                for (o, x) in out.iter_mut().zip(self.restrict(&v)) {
                    *o -= k * x;
                }
            }
        }
        out
    }
}

/// `aᵀ M b`
pub fn inner_product(a: &[f64], b: &[f64], m: &CsrMatrix) -> Result<f64> {
    if a.len() != b.len() || a.len() != m.rows() {
        return Err(DvsError::Config(format!(
            "inner product of lengths {} and {} with a {}x{} matrix",
            a.len(),
            b.len(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.bilinear(a, b))
}

/// Riesz norm `sqrt(rᵀ M⁻¹ r)` of a dual vector.
pub fn dual_norm(r: &[f64], m_lu: &BandedLu) -> f64 {
    let z = m_lu.solve(r);
    dot(r, &z).max(0.0).sqrt()
}
