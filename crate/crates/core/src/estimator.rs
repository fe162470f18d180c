//! Residual-based a posteriori bound and the true-error indicator.
//!
//! `δ_n = e^{τ β_{n−1}} δ_{n−1} + τ α_n`, `δ_0 = ‖e_0‖`, where `α_n` is the
//! Riesz norm of the residual of the separated approximation and `β_n` a
//! local logarithmic Lipschitz constant of the right-hand side at it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{dual_norm, Discretization};
use crate::error::{DvsError, Result};
use crate::fom::{combine, solve_fom, PrevTerm, TimeGrid, Trajectory};
use crate::linalg::{dot, generalized_max_eigenvalue, CsrMatrix};
use crate::model::ReducedModel;
use crate::online::{online_zetas, subtract_term, time_l2, trapezoid_weights};
use crate::problem::{Coefficients, NonlinearOp};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzMode {
    /// Largest eigenvalue of the symmetrized Jacobian.
    #[default]
    EigenBound,
    /// The eigen-bound or the largest sampled difference quotient,
    /// whichever is larger.
    SampledSup,
}

impl std::str::FromStr for LipschitzMode {
    type Err = DvsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen-bound" => Ok(LipschitzMode::EigenBound),
            "sampled-sup" => Ok(LipschitzMode::SampledSup),
            _ => Err(DvsError::Config(format!("unknown Lipschitz mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub lipschitz_mode: LipschitzMode,
    /// Evaluations of `β` per trajectory for nonlinear problems; the value
    /// is held constant in between.
    pub beta_evaluations: usize,
    /// Random directions of the sampled sup.
    pub directions: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lipschitz_mode: LipschitzMode::SampledSup,
            beta_evaluations: 100,
            directions: 16,
            seed: 0x5eed,
        }
    }
}

const LANCZOS_TOL: f64 = 1e-11;
const LANCZOS_MAX_ITER: usize = 10_000;
const OVERFLOW: f64 = 1e300;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBound {
    /// `α_n`, `n = 0..=N_t` (`α_0` is unused and zero).
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    /// `sqrt(∫ δ² dt)` by the trapezoid rule; `+∞` after overflow.
    pub big_delta: f64,
    pub mode: LipschitzMode,
}

/// Runs the comparison recursion on given `α`, `β` and `δ_0`.
pub fn bound_from_parts(alpha: &[f64], beta: &[f64], delta0: f64, grid: &TimeGrid, mode: LipschitzMode) -> ErrorBound {
    let tau = grid.tau();
    let mut delta = Vec::with_capacity(grid.nodes());
    delta.push(delta0);
    for n in 1..grid.nodes() {
        let d = (tau * beta[n - 1]).exp() * delta[n - 1] + tau * alpha[n];
        delta.push(if d.is_finite() && d <= OVERFLOW { d } else { f64::INFINITY });
    }
    let sq: Vec<f64> = delta.iter().map(|d| d * d).collect();
    let big = if sq.iter().all(|v| v.is_finite()) {
        time_l2(&sq, &trapezoid_weights(grid))
    } else {
        f64::INFINITY
    };
    ErrorBound {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        delta,
        big_delta: if big.is_finite() { big } else { f64::INFINITY },
        mode,
    }
}

/// `β` of a linear right-hand side: largest eigenvalue of
/// `½(A + Aᵀ)` against `M`.
pub fn linear_beta(disc: &Discretization, kappa: &Coefficients) -> Result<f64> {
    let a = disc.linear_operator(&kappa.a).symmetric_part();
    generalized_max_eigenvalue(&a, &disc.m, &disc.m_lu, LANCZOS_TOL, LANCZOS_MAX_ITER, 17)
}

/// Jacobian of `F(u) = Σκ_A A u + C − Σκ_H N(u)` at `u` (dofs).
pub fn jacobian(disc: &Discretization, kappa: &Coefficients, u: &[f64]) -> CsrMatrix {
    let mut j = disc.linear_operator(&kappa.a);
    let full = disc.extend(u);
    for (&op, &kh) in disc.nonlinear_ops.iter().zip(&kappa.h) {
        match op {
            NonlinearOp::Convection => {
                j.add_scaled(-kh, &disc.lagged_matrix(op, &full));
                j.add_scaled(-kh, &disc.derivative_weight_matrix(&full));
            }
            NonlinearOp::Cubic => j.add_scaled(-3.0 * kh, &disc.lagged_matrix(op, &full)),
        }
    }
    j
}

/// `F(u) − C` on the dofs.
fn homogeneous_rhs(disc: &Discretization, kappa: &Coefficients, a_op: &CsrMatrix, u: &[f64]) -> Vec<f64> {
    let mut out = a_op.matvec(u);
    let full = disc.extend(u);
    for (&op, &kh) in disc.nonlinear_ops.iter().zip(&kappa.h) {
        let v = match op {
            NonlinearOp::Convection => disc.apply_nonlinear(op, &[&full, &full]),
            NonlinearOp::Cubic => disc.apply_nonlinear(op, &[&full, &full, &full]),
        }
        .expect("arity is fixed by the operator");
        for (o, x) in out.iter_mut().zip(disc.restrict(&v)) {
            *o -= kh * x;
        }
    }
    out
}

/// Largest of `⟨d, F(u+d) − F(u)⟩ / ‖d‖²` over random directions `d`.
fn sampled_sup(disc: &Discretization, kappa: &Coefficients, u: &[f64], directions: usize, seed: u64) -> f64 {
    let a_op = disc.linear_operator(&kappa.a);
    let fu = homogeneous_rhs(disc, kappa, &a_op, u);
    let scale = (0.1 * disc.norm(u)).max(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..directions {
        let mut d: Vec<f64> = (0..u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nd = disc.norm(&d);
        if nd == 0.0 {
            continue;
        }
        d.iter_mut().for_each(|v| *v *= scale / nd);
        let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
        let fv = homogeneous_rhs(disc, kappa, &a_op, &v);
        let diff: Vec<f64> = fv.iter().zip(&fu).map(|(a, b)| a - b).collect();
        best = best.max(dot(&d, &diff) / (scale * scale));
    }
    best
}

/// Local logarithmic Lipschitz constant of the right-hand side at `u_ref`
/// (dofs of the homogeneous part). For linear problems `u_ref` is ignored.
pub fn log_lipschitz(
    disc: &Discretization,
    kappa: &Coefficients,
    u_ref: &[f64],
    mode: LipschitzMode,
    directions: usize,
    seed: u64,
) -> Result<f64> {
    if disc.nonlinear_ops.is_empty() {
        return linear_beta(disc, kappa);
    }
    disc.dims_check(u_ref)?;
    let j = jacobian(disc, kappa, u_ref).symmetric_part();
    let eig = generalized_max_eigenvalue(&j, &disc.m, &disc.m_lu, LANCZOS_TOL, LANCZOS_MAX_ITER, 17)?;
    Ok(match mode {
        LipschitzMode::EigenBound => eig,
        LipschitzMode::SampledSup => eig.max(sampled_sup(disc, kappa, u_ref, directions, seed)),
    })
}

/// Riesz norms of the scheme residual of `u` (homogeneous dofs):
/// `C + A u_n − N(u_{n−1}) u_n − M (u_n − u_{n−1})/τ`.
pub fn direct_alpha(disc: &Discretization, kappa: &Coefficients, grid: &TimeGrid, u: &Trajectory) -> Vec<f64> {
    let tau = grid.tau();
    let a_op = disc.linear_operator(&kappa.a);
    let source = disc.source(&kappa.c);
    let mut alpha = vec![0.0; grid.nodes()];
    alpha[1..].par_iter_mut().enumerate().for_each(|(i, out)| {
        let n = i + 1;
        let (u0, u1) = (u.field(n - 1), u.field(n));
        let mut r = a_op.matvec(u1);
        let dt: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| (a - b) / tau).collect();
        let mdt = disc.m.matvec(&dt);
        for i in 0..r.len() {
            r[i] += source[i] - mdt[i];
        }
        if let Some(nm) = disc.nonlinear_matrix(&kappa.h, &disc.extend(u0)) {
            let nv = nm.matvec(u1);
            for (a, b) in r.iter_mut().zip(nv) {
                *a -= b;
            }
        }
        *out = dual_norm(&r, &disc.m_lu);
    });
    alpha
}

/// `β_n` along a trajectory. Linear problems need one eigenvalue; for
/// nonlinear ones it is evaluated every `⌈N_t / evaluations⌉` nodes and held.
pub fn beta_along(
    disc: &Discretization,
    kappa: &Coefficients,
    grid: &TimeGrid,
    u: &Trajectory,
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    if disc.nonlinear_ops.is_empty() {
        return Ok(vec![linear_beta(disc, kappa)?; grid.nodes()]);
    }
    let stride = grid.steps.div_ceil(cfg.beta_evaluations.max(1)).max(1);
    let anchors: Vec<usize> = (0..grid.nodes()).step_by(stride).collect();
    let vals = anchors
        .par_iter()
        .map(|&n| {
            log_lipschitz(
                disc,
                kappa,
                u.field(n),
                cfg.lipschitz_mode,
                cfg.directions,
                cfg.seed.wrapping_add(n as u64),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((0..grid.nodes()).map(|n| vals[n / stride]).collect())
}

/// `Σ ζ_j g_j` at every node.
pub fn approximation(dofs: usize, grid: &TimeGrid, terms: &[PrevTerm<'_>]) -> Trajectory {
    let mut u = Trajectory::zeros(dofs, grid.nodes());
    for n in 0..grid.nodes() {
        combine(terms, n, u.field_mut(n));
    }
    u
}

/// Bound for the given model at `ξ`, assembled on the mesh.
pub fn residual_bound(model: &ReducedModel, disc: &Discretization, xi: &[f64], cfg: &EstimatorConfig) -> Result<ErrorBound> {
    let kappa = model.problem.evaluate_coefficients(xi)?;
    let eval = online_zetas(model, xi)?;
    let gs = (0..model.n_terms()).map(|k| model.g(k)).collect::<Result<Vec<_>>>()?;
    let terms: Vec<PrevTerm<'_>> = gs.iter().zip(&eval.zetas).map(|(g, z)| PrevTerm { g, zeta: z }).collect();
    let u = approximation(disc.n_dofs(), &model.grid, &terms);
    let mut e0 = disc.initial_dofs(&model.problem.homogeneous_initial_coefficients(xi));
    for (a, b) in e0.iter_mut().zip(u.field(0)) {
        *a -= b;
    }
    let alpha = direct_alpha(disc, &kappa, &model.grid, &u);
    let beta = beta_along(disc, &kappa, &model.grid, &u, cfg)?;
    Ok(bound_from_parts(&alpha, &beta, disc.norm(&e0), &model.grid, cfg.lipschitz_mode))
}

/// `‖u − u_N‖_{L²(0,T;V)}` against a full-order solve.
pub fn true_error(model: &ReducedModel, disc: &Discretization, xi: &[f64]) -> Result<f64> {
    let eval = online_zetas(model, xi)?;
    let mut diff = solve_fom(&model.problem, disc, xi, &model.grid)?;
    for (k, row) in eval.zetas.iter().enumerate() {
        subtract_term(&mut diff, model.g(k)?, row);
    }
    Ok(trajectory_norm(disc, &model.grid, &diff))
}

/// `sqrt(∫ ‖e(t)‖² dt)` of a dof trajectory.
pub fn trajectory_norm(disc: &Discretization, grid: &TimeGrid, e: &Trajectory) -> f64 {
    let sq: Vec<f64> = (0..grid.nodes()).map(|n| disc.inner(e.field(n), e.field(n))).collect();
    time_l2(&sq, &trapezoid_weights(grid))
}

/// Index of the largest value; the lowest index wins ties and NaN is never
/// selected. `None` when every value is `+∞` or NaN (no usable ranking).
pub fn greedy_indicator(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    let all_inf = values.iter().all(|v| v.is_nan() || *v == f64::INFINITY);
    if all_inf {
        None
    } else {
        best
    }
}

/// Incremental Gram data for the mesh-free `α_n` of linear problems.
///
/// The residual at node `n` is a combination of fixed vectors with weights
/// built from `κ(ξ)` and `ζ(ξ)`:
/// `C^i` (weight `κ_C^i`), `A^i g_{j,n}` (`κ_A^i ζ_{j,n}`),
/// `M (g_{j,n} − g_{j,n−1})/τ` (`−ζ_{j,n}`) and `M g_{j,n−1}`
/// (`−(ζ_{j,n} − ζ_{j,n−1})/τ`); `α_n²` is a quadratic form in those
/// weights against the Gram matrix of their Riesz representatives.
#[derive(Clone, Debug)]
pub struct AlphaGram {
    n_a: usize,
    n_c: usize,
    n_init: usize,
    terms: usize,
    /// Per node `n ≥ 1`: dense square matrix of the current size.
    grams: Vec<Vec<f64>>,
    /// Initial-error Gram over `[init vectors, g_{j,0}]`.
    gram0: Vec<f64>,
}

impl AlphaGram {
    pub fn new(disc: &Discretization, grid: &TimeGrid) -> Result<Self> {
        if !disc.nonlinear_ops.is_empty() {
            return Err(DvsError::Config("the Gram form of the residual needs a linear problem".into()));
        }
        let n_c = disc.c_vecs.len();
        let riesz: Vec<Vec<f64>> = disc.c_vecs.iter().map(|c| disc.m_lu.solve(c)).collect();
        let mut g = vec![0.0; n_c * n_c];
        for i in 0..n_c {
            for j in 0..n_c {
                g[i * n_c + j] = dot(&disc.c_vecs[i], &riesz[j]);
            }
        }
        let n_init = disc.init_vecs.len();
        let mut gram0 = vec![0.0; n_init * n_init];
        for i in 0..n_init {
            let mq = disc.m.matvec(&disc.init_vecs[i]);
            for j in 0..n_init {
                gram0[i * n_init + j] = dot(&mq, &disc.init_vecs[j]);
            }
        }
        Ok(AlphaGram {
            n_a: disc.a_mats.len(),
            n_c,
            n_init,
            terms: 0,
            grams: vec![g; grid.steps],
            gram0,
        })
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    fn size(&self, terms: usize) -> usize {
        self.n_c + terms * (self.n_a + 2)
    }

    /// Appends the components of the newest basis `gs.last()`.
    pub fn add_term(&mut self, disc: &Discretization, grid: &TimeGrid, gs: &[&Trajectory]) {
        assert_eq!(gs.len(), self.terms + 1, "terms are added one at a time");
        let tau = grid.tau();
        let old = self.size(self.terms);
        let new = self.size(self.terms + 1);
        let (n_a, k) = (self.n_a, self.terms);
        self.grams.par_iter_mut().enumerate().for_each(|(i, gram)| {
            let n = i + 1;
            // duals of the existing components
            let mut duals: Vec<Vec<f64>> = disc.c_vecs.clone();
            let push_term = |duals: &mut Vec<Vec<f64>>, g: &Trajectory| {
                let (g1, g0) = (g.field(n), g.field(n - 1));
                for a in &disc.a_mats {
                    duals.push(a.matvec(g1));
                }
                let d: Vec<f64> = g1.iter().zip(g0).map(|(x, y)| (x - y) / tau).collect();
                duals.push(disc.m.matvec(&d));
                duals.push(disc.m.matvec(g0));
            };
            for g in gs {
                push_term(&mut duals, g);
            }
            // Riesz representatives of the new components
            let g = gs[k];
            let (g1, g0) = (g.field(n), g.field(n - 1));
            let mut riesz: Vec<Vec<f64>> = (0..n_a).map(|a| disc.m_lu.solve(&duals[old + a])).collect();
            riesz.push(g1.iter().zip(g0).map(|(x, y)| (x - y) / tau).collect());
            riesz.push(g0.to_vec());
            let mut out = vec![0.0; new * new];
            for r in 0..old {
                out[r * new..r * new + old].copy_from_slice(&gram[r * old..(r + 1) * old]);
            }
            for (c, rz) in riesz.iter().enumerate() {
                let col = old + c;
                for (r, du) in duals.iter().enumerate() {
                    let v = dot(du, rz);
                    out[r * new + col] = v;
                    if r < old {
                        out[col * new + r] = v;
                    }
                }
            }
            *gram = out;
        });
        // initial-error Gram
        let old0 = self.n_init + k;
        let new0 = old0 + 1;
        let mut g0 = vec![0.0; new0 * new0];
        for r in 0..old0 {
            g0[r * new0..r * new0 + old0].copy_from_slice(&self.gram0[r * old0..(r + 1) * old0]);
        }
        let mg = disc.m.matvec(gs[k].field(0));
        let others = disc.init_vecs.iter().map(|v| v.as_slice()).chain(gs.iter().map(|g| g.field(0)));
        for (r, v) in others.enumerate() {
            let x = dot(&mg, v);
            g0[r * new0 + old0] = x;
            g0[old0 * new0 + r] = x;
        }
        self.gram0 = g0;
        self.terms += 1;
    }

    /// `(‖e_0‖, α)` for the current terms at a parameter with coefficients
    /// `kappa`, homogeneous initial coefficients `init` and rows `zetas`.
    pub fn alpha(&self, grid: &TimeGrid, kappa: &Coefficients, init: &[f64], zetas: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let k = self.terms;
        assert_eq!(zetas.len(), k);
        let tau = grid.tau();
        let size = self.size(k);
        let mut alpha = vec![0.0; grid.nodes()];
        let mut w = vec![0.0; size];
        for n in 1..grid.nodes() {
            w[..self.n_c].copy_from_slice(&kappa.c);
            for (j, z) in zetas.iter().enumerate() {
                let base = self.n_c + j * (self.n_a + 2);
                for a in 0..self.n_a {
                    w[base + a] = kappa.a[a] * z[n];
                }
                w[base + self.n_a] = -z[n];
                w[base + self.n_a + 1] = -(z[n] - z[n - 1]) / tau;
            }
            alpha[n] = quad_form(&self.grams[n - 1], &w).max(0.0).sqrt();
        }
        let mut w0: Vec<f64> = init.to_vec();
        w0.extend(zetas.iter().map(|z| -z[0]));
        let e0 = quad_form(&self.gram0, &w0).max(0.0).sqrt();
        (e0, alpha)
    }
}

fn quad_form(g: &[f64], w: &[f64]) -> f64 {
    let n = w.len();
    let mut s = 0.0;
    for r in 0..n {
        if w[r] == 0.0 {
            continue;
        }
        s += w[r] * dot(&g[r * n..(r + 1) * n], w);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(greedy_indicator(&[3.0, 1.0, 3.0]), Some(0));
        assert_eq!(greedy_indicator(&[0.5]), Some(0));
        assert_eq!(greedy_indicator(&[1.0, f64::INFINITY, 2.0]), Some(1));
        assert_eq!(greedy_indicator(&[f64::INFINITY, f64::INFINITY]), None);
        assert_eq!(greedy_indicator(&[f64::NAN, 1.0]), Some(1));
    }

    #[test]
    fn constant_alpha_gives_linear_growth() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let a = 2.0;
        let mut alpha = vec![a; grid.nodes()];
        alpha[0] = 0.0;
        let b = bound_from_parts(&alpha, &vec![0.0; grid.nodes()], 0.0, &grid, LipschitzMode::EigenBound);
        for n in 0..grid.nodes() {
            assert!((b.delta[n] - a * grid.time(n)).abs() < 1e-12);
        }
        let exact = a / 3f64.sqrt();
        assert!((b.big_delta - exact).abs() < 1e-5);
    }

    #[test]
    fn overflow_is_infinite() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let b = bound_from_parts(&vec![0.0; 11], &vec![1e4; 11], 1.0, &grid, LipschitzMode::EigenBound);
        assert_eq!(b.big_delta, f64::INFINITY);
        assert!(b.delta.iter().all(|d| *d >= 0.0));
    }
}
