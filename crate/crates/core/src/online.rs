//! Online evaluation: `ζ_k(t_n; ξ̄)` from the stored scalars, reconstruction
//! of the separated approximation, and the space-time error metric.

use std::time::Instant;

use rayon::prelude::*;

use crate::discretization::{Discretization, Mesh};
use crate::error::{DvsError, Result};
use crate::fom::{solve_fom, TimeGrid, Trajectory};
use crate::model::{Method, ReducedModel, SeparatedTerm};
use crate::problem::{Coefficients, ParametricProblem};
use crate::record::{zeta_row, ProjectionRecord, TimeDerivative};

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineEvaluation {
    pub xi: Vec<f64>,
    /// `zetas[k][n] = ζ_{k+1}(t_n; ξ)`
    pub zetas: Vec<Vec<f64>>,
    pub seconds: f64,
    /// Reduced steps that hit the `l` guard.
    pub held_steps: usize,
}

/// Static coefficient `ζ_k(ξ)` from the projected relation at transition
/// `n`; `None` when the bilinear form vanishes there.
pub fn vs_value(rec: &ProjectionRecord, kappa: &Coefficients, prev: &[f64], n: usize, tau: f64) -> Option<f64> {
    let k = rec.k;
    let km = k - 1;
    let mut den = (rec.gg_diag[n] - rec.gg_lag[n]) / tau;
    for i in 0..rec.n_a {
        den -= kappa.a[i] * rec.a_self[n * rec.n_a + i];
    }
    let mut num = 0.0;
    for i in 0..rec.n_c {
        num += kappa.c[i] * rec.c_proj[n * rec.n_c + i];
    }
    for i in 0..rec.n_a {
        let base = (n * rec.n_a + i) * km;
        let mut acc = 0.0;
        for j in 0..km {
            acc += prev[j] * rec.a_cross[base + j];
        }
        num += kappa.a[i] * acc;
    }
    for j in 0..km {
        num -= prev[j] * (rec.g_cross[n * k + j] - rec.g_cross_lag[n * k + j]) / tau;
    }
    let v = num / den;
    (den != 0.0 && v.is_finite()).then_some(v)
}

/// Row of one term given the rows of the earlier terms. Offline and online
/// both go through here, which makes anchor evaluations agree bitwise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn term_row(
    method: Method,
    term: &SeparatedTerm,
    grid: &TimeGrid,
    form: TimeDerivative,
    kappa: &Coefficients,
    init: &[f64],
    prev: &[&[f64]],
) -> (Vec<f64>, usize) {
    match method {
        Method::Dvs => {
            let prev0: Vec<f64> = prev.iter().map(|r| r[0]).collect();
            let z0 = term.zeta0.eval(init, &prev0);
            zeta_row(&term.record, kappa, prev, z0, grid.tau(), form)
        }
        Method::Vs => {
            let vals: Vec<f64> = prev.iter().map(|r| r[0]).collect();
            let n = term.vs_step.expect("validated static-coefficient term");
            let v = vs_value(&term.record, kappa, &vals, n, grid.tau()).unwrap_or(0.0);
            (vec![v; grid.nodes()], 0)
        }
    }
}

pub(crate) fn rows_for(
    problem: &ParametricProblem,
    method: Method,
    terms: &[SeparatedTerm],
    grid: &TimeGrid,
    form: TimeDerivative,
    xi: &[f64],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let kappa = problem.evaluate_coefficients(xi)?;
    let init = problem.homogeneous_initial_coefficients(xi);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(terms.len());
    let mut held = 0;
    for term in terms {
        let prev: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (row, h) = term_row(method, term, grid, form, &kappa, &init, &prev);
        held += h;
        rows.push(row);
    }
    Ok((rows, held))
}

/// Evaluates every `ζ_k` at `ξ̄`. Only the stored scalars are read.
pub fn online_zetas(model: &ReducedModel, xi: &[f64]) -> Result<OnlineEvaluation> {
    online_zetas_truncated(model, xi, model.n_terms())
}

/// As [`online_zetas`] with the first `n_terms` terms.
pub fn online_zetas_truncated(model: &ReducedModel, xi: &[f64], n_terms: usize) -> Result<OnlineEvaluation> {
    if n_terms > model.n_terms() {
        return Err(DvsError::OutOfRange {
            index: n_terms,
            limit: model.n_terms(),
        });
    }
    let start = Instant::now();
    let (zetas, held_steps) = rows_for(
        &model.problem,
        model.method,
        &model.terms[..n_terms],
        &model.grid,
        model.form,
        xi,
    )?;
    Ok(OnlineEvaluation {
        xi: xi.to_vec(),
        zetas,
        seconds: start.elapsed().as_secs_f64(),
        held_steps,
    })
}

/// Maps dof-space sums to physical nodal fields (lifting included).
#[derive(Clone, Debug)]
pub struct Reconstructor {
    mesh: Mesh,
    lift: Vec<Vec<f64>>,
}

impl Reconstructor {
    pub fn new(model: &ReducedModel) -> Result<Self> {
        let p = &model.problem;
        let mesh = Mesh::new(&p.domain.lo, &p.domain.hi, &model.mesh)?;
        let lift = p
            .lifting
            .iter()
            .map(|t| t.field.sample(&mesh.coords))
            .collect::<Result<Vec<_>>>()?;
        Ok(Reconstructor { mesh, lift })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// `u_N(·, t_n; ξ̄)` at every node.
    pub fn field(&self, model: &ReducedModel, eval: &OnlineEvaluation, n: usize) -> Result<Vec<f64>> {
        if n > model.grid.steps {
            return Err(DvsError::OutOfRange {
                index: n,
                limit: model.grid.steps + 1,
            });
        }
        if eval.zetas.len() > model.n_terms() {
            return Err(DvsError::State("evaluation has more rows than the model has terms".into()));
        }
        let mut full = vec![0.0; self.mesh.n_nodes()];
        for (k, row) in eval.zetas.iter().enumerate() {
            let g = model.g(k)?;
            let z = row[n];
            for (&node, v) in self.mesh.interior.iter().zip(g.field(n)) {
                full[node] += z * v;
            }
        }
        let lc = model.problem.lifting_coefficients(&eval.xi);
        for (c, l) in lc.iter().zip(&self.lift) {
            for (f, v) in full.iter_mut().zip(l) {
                *f += c * v;
            }
        }
        Ok(full)
    }
}

/// `Σ_k ζ_k(t_n) g_k(t_n)` plus the lifting, at every node.
pub fn reconstruct(model: &ReducedModel, eval: &OnlineEvaluation, n: usize) -> Result<Vec<f64>> {
    Reconstructor::new(model)?.field(model, eval, n)
}

/// Trapezoid weights on the time grid.
pub fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    let tau = grid.tau();
    let mut w = vec![tau; grid.nodes()];
    w[0] = 0.5 * tau;
    w[grid.steps] = 0.5 * tau;
    w
}

/// `sqrt(∫ f(t)² dt)` from nodal values of `f²`.
pub fn time_l2(sq: &[f64], weights: &[f64]) -> f64 {
    sq.iter().zip(weights).map(|(s, w)| s * w).sum::<f64>().max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleError {
    pub xi: Vec<f64>,
    /// `‖u − u_N‖_{L²(0,T;V)} / ‖u‖_{L²(0,T;V)}`
    pub rel_error: f64,
    /// Relative error at each requested fixed time.
    pub fixed: Vec<f64>,
    pub online_seconds: f64,
    pub fom_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub n_terms: usize,
    pub samples: Vec<SampleError>,
    pub mean: f64,
    pub max: f64,
    /// Mean over samples of the relative error at each time node.
    pub curve: Vec<f64>,
    pub fixed_times: Vec<f64>,
    /// Mean relative error at each fixed time.
    pub fixed_means: Vec<f64>,
    pub fom_seconds_mean: f64,
    pub online_seconds_mean: f64,
    pub online_seconds_total: f64,
    /// Samples dropped for a zero reference norm.
    pub excluded: usize,
}

struct PerSample {
    xi: Vec<f64>,
    fom_seconds: f64,
    /// per N: (rel, node curve, fixed, online seconds)
    per_n: Vec<(f64, Vec<f64>, Vec<f64>, f64)>,
    zero_norm: bool,
}

/// Relative space-time errors of the model truncated to each entry of
/// `n_list`, against full-order solves at the test parameters.
pub fn evaluate_error_metric(
    model: &ReducedModel,
    disc: &Discretization,
    test: &[Vec<f64>],
    n_list: &[usize],
    fixed_times: &[f64],
) -> Result<Vec<ErrorReport>> {
    if test.is_empty() {
        return Err(DvsError::Config("the test set is empty".into()));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if n_max > model.n_terms() || n_list.contains(&0) {
        return Err(DvsError::OutOfRange {
            index: n_max,
            limit: model.n_terms(),
        });
    }
    let grid = &model.grid;
    let weights = trapezoid_weights(grid);
    let fixed_nodes: Vec<usize> = fixed_times.iter().map(|&t| grid.node_at(t)).collect();
    let results: Vec<Result<PerSample>> = test
        .par_iter()
        .map(|xi| {
            let t0 = Instant::now();
            let u = solve_fom(&model.problem, disc, xi, grid)?;
            let fom_seconds = t0.elapsed().as_secs_f64();
            let mut online = Vec::with_capacity(n_list.len());
            for &n in n_list {
                online.push(online_zetas_truncated(model, xi, n)?.seconds);
            }
            let eval = online_zetas_truncated(model, xi, n_max)?;
            let lc = model.problem.lifting_coefficients(xi);
            let truth_sq: Vec<f64> = (0..grid.nodes())
                .map(|n| {
                    let f = disc.physical(u.field(n), &lc);
                    disc.m_full.bilinear(&f, &f)
                })
                .collect();
            let truth = time_l2(&truth_sq, &weights);
            let zero_norm = !(truth > 0.0);
            let mut diff = u;
            let mut per_n = Vec::with_capacity(n_list.len());
            for k in 0..n_max {
                subtract_term(&mut diff, model.g(k)?, &eval.zetas[k]);
                for (idx, &n) in n_list.iter().enumerate() {
                    if n != k + 1 {
                        continue;
                    }
                    let err_sq: Vec<f64> = (0..grid.nodes()).map(|t| disc.inner(diff.field(t), diff.field(t))).collect();
                    let rel = time_l2(&err_sq, &weights) / truth;
                    let curve: Vec<f64> = err_sq
                        .iter()
                        .zip(&truth_sq)
                        .map(|(e, t)| if *t > 0.0 { (e / t).max(0.0).sqrt() } else { 0.0 })
                        .collect();
                    let fixed = fixed_nodes.iter().map(|&m| curve[m]).collect();
                    per_n.push((idx, (rel, curve, fixed, online[idx])));
                }
            }
            per_n.sort_by_key(|(i, _)| *i);
            Ok(PerSample {
                xi: xi.clone(),
                fom_seconds,
                per_n: per_n.into_iter().map(|(_, v)| v).collect(),
                zero_norm,
            })
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        samples.push(r?);
    }
    let excluded = samples.iter().filter(|s| s.zero_norm).count();
    if excluded > 0 {
        log::warn!("{excluded} test samples have a zero reference norm and are excluded");
    }
    let kept: Vec<&PerSample> = samples.iter().filter(|s| !s.zero_norm).collect();
    let count = kept.len().max(1) as f64;
    let fom_mean = samples.iter().map(|s| s.fom_seconds).sum::<f64>() / samples.len() as f64;
    let mut reports = Vec::with_capacity(n_list.len());
    for (idx, &n) in n_list.iter().enumerate() {
        let mut curve = vec![0.0; grid.nodes()];
        let mut fixed_means = vec![0.0; fixed_times.len()];
        let mut mean = 0.0;
        let mut max: f64 = 0.0;
        let mut online_total = 0.0;
        let mut out = Vec::with_capacity(kept.len());
        for s in &kept {
            let (rel, c, fx, on) = &s.per_n[idx];
            mean += rel;
            max = max.max(*rel);
            online_total += on;
            for (a, b) in curve.iter_mut().zip(c) {
                *a += b;
            }
            for (a, b) in fixed_means.iter_mut().zip(fx) {
                *a += b;
            }
            out.push(SampleError {
                xi: s.xi.clone(),
                rel_error: *rel,
                fixed: fx.clone(),
                online_seconds: *on,
                fom_seconds: s.fom_seconds,
            });
        }
        curve.iter_mut().for_each(|v| *v /= count);
        fixed_means.iter_mut().for_each(|v| *v /= count);
        reports.push(ErrorReport {
            n_terms: n,
            samples: out,
            mean: mean / count,
            max,
            curve,
            fixed_times: fixed_times.to_vec(),
            fixed_means,
            fom_seconds_mean: fom_mean,
            online_seconds_mean: online_total / count,
            online_seconds_total: online_total,
            excluded,
        });
    }
    Ok(reports)
}

/// `traj -= ζ ⊗ g`
pub(crate) fn subtract_term(traj: &mut Trajectory, g: &Trajectory, zeta: &[f64]) {
    for (n, &z) in zeta.iter().enumerate() {
        if z == 0.0 {
            continue;
        }
        let gn = g.field(n);
        for (d, v) in traj.field_mut(n).iter_mut().zip(gn) {
            *d -= z * v;
        }
    }
}
