//! Greedy offline stage: anchors, spatial bases from the error equation,
//! projection records and the training-set indicator sweep.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{Discretization, MeshSpec};
use crate::error::{DvsError, Result};
use crate::estimator::{
    approximation, beta_along, bound_from_parts, direct_alpha, greedy_indicator, linear_beta, trajectory_norm,
    AlphaGram, EstimatorConfig,
};
use crate::fom::{solve_error_equation, solve_fom, PrevTerm, TimeGrid, Trajectory};
use crate::model::{GreedyTrace, Method, ReducedModel, SeparatedTerm, Strategy, TraceStep};
use crate::online::{subtract_term, term_row, time_l2, trapezoid_weights};
use crate::problem::{Coefficients, ParametricProblem};
use crate::record::{build_record, TimeDerivative, Zeta0Rep};
use crate::vs::{choose_vs_step, vs_candidates, VsConfig};

/// Relative size below which `g_{k,0}` counts as zero.
pub const DEGENERATE_G0: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineConfig {
    /// Stop once the largest indicator over the training set is below this.
    pub tolerance: f64,
    pub n_max: usize,
    pub strategy: Strategy,
    pub form: TimeDerivative,
    pub method: Method,
    pub estimator: EstimatorConfig,
    pub vs: VsConfig,
    /// Memory allowed for cached training error trajectories; above it the
    /// full-order solves are repeated at every step.
    pub fom_cache_bytes: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        OfflineConfig {
            tolerance: 1e-8,
            n_max: 10,
            strategy: Strategy::TrueError,
            form: TimeDerivative::Exact,
            method: Method::Dvs,
            estimator: EstimatorConfig::default(),
            vs: VsConfig::default(),
            fom_cache_bytes: 1 << 30,
        }
    }
}

/// A failed offline run with whatever was built before the failure.
#[derive(Debug)]
pub struct OfflineFailure {
    pub partial: Option<ReducedModel>,
    pub error: DvsError,
}

impl std::fmt::Display for OfflineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.partial {
            Some(m) => write!(f, "{} (after {} terms)", self.error, m.n_terms()),
            None => write!(f, "{} (no terms built)", self.error),
        }
    }
}

impl std::error::Error for OfflineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Model plus the `ζ` rows cached at every training sample.
#[derive(Clone, Debug)]
pub struct OfflineRun {
    pub model: ReducedModel,
    pub training: Vec<Vec<f64>>,
    /// `rows[s][k][n] = ζ_{k+1}(t_n; ξ_s)`
    pub rows: Vec<Vec<Vec<f64>>>,
}

struct Sample {
    xi: Vec<f64>,
    kappa: Coefficients,
    init: Vec<f64>,
    rows: Vec<Vec<f64>>,
    held: usize,
    active: bool,
    /// `u − u_k` when cached.
    err: Option<Trajectory>,
    beta: Option<f64>,
}

pub fn run_offline(
    problem: &ParametricProblem,
    disc: &Discretization,
    grid: &TimeGrid,
    training: &[Vec<f64>],
    cfg: &OfflineConfig,
) -> std::result::Result<ReducedModel, OfflineFailure> {
    run_offline_detailed(problem, disc, grid, training, cfg).map(|r| r.model)
}

pub fn run_offline_detailed(
    problem: &ParametricProblem,
    disc: &Discretization,
    grid: &TimeGrid,
    training: &[Vec<f64>],
    cfg: &OfflineConfig,
) -> std::result::Result<OfflineRun, OfflineFailure> {
    let mut st = State::new(problem, disc, grid, training, cfg).map_err(|error| OfflineFailure { partial: None, error })?;
    match st.run() {
        Ok(()) => Ok(st.finish()),
        Err(error) => {
            let partial = (!st.terms.is_empty()).then(|| st.finish().model);
            Err(OfflineFailure { partial, error })
        }
    }
}

struct State<'a> {
    problem: &'a ParametricProblem,
    disc: &'a Discretization,
    grid: &'a TimeGrid,
    cfg: &'a OfflineConfig,
    samples: Vec<Sample>,
    terms: Vec<SeparatedTerm>,
    trace: GreedyTrace,
    cache_errors: bool,
    gram: Option<AlphaGram>,
    g10_norm: f64,
}

impl<'a> State<'a> {
    fn new(
        problem: &'a ParametricProblem,
        disc: &'a Discretization,
        grid: &'a TimeGrid,
        training: &[Vec<f64>],
        cfg: &'a OfflineConfig,
    ) -> Result<Self> {
        problem.validate()?;
        if training.is_empty() {
            return Err(DvsError::Config("the training set is empty".into()));
        }
        if !(cfg.tolerance > 0.0) {
            return Err(DvsError::Config(format!("tolerance must be positive, got {}", cfg.tolerance)));
        }
        if cfg.n_max == 0 {
            return Err(DvsError::Config("n_max must be at least 1".into()));
        }
        if cfg.method == Method::Vs && !problem.is_linear() {
            return Err(DvsError::Config("the static-coefficient baseline is defined for linear problems only".into()));
        }
        if disc.a_mats.len() != problem.n_a() || disc.c_vecs.len() != problem.n_c() {
            return Err(DvsError::Config("the discretization was built for a different problem".into()));
        }
        let samples = training
            .iter()
            .map(|xi| {
                Ok(Sample {
                    xi: xi.clone(),
                    kappa: problem.evaluate_coefficients(xi)?,
                    init: problem.homogeneous_initial_coefficients(xi),
                    rows: Vec::new(),
                    held: 0,
                    active: true,
                    err: None,
                    beta: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let traj_bytes = disc.n_dofs() * grid.nodes() * std::mem::size_of::<f64>();
        let cache_errors = traj_bytes.saturating_mul(samples.len()) <= cfg.fom_cache_bytes;
        if !cache_errors {
            log::info!("training error trajectories exceed the cache budget; full-order solves will be repeated");
        }
        let gram = (cfg.strategy == Strategy::Estimator && problem.is_linear())
            .then(|| AlphaGram::new(disc, grid))
            .transpose()?;
        Ok(State {
            problem,
            disc,
            grid,
            cfg,
            samples,
            terms: Vec::new(),
            trace: GreedyTrace::default(),
            cache_errors,
            gram,
            g10_norm: 0.0,
        })
    }

    fn gs(&self) -> Vec<&Trajectory> {
        self.terms.iter().map(|t| t.g.as_ref().expect("offline terms keep their fields")).collect()
    }

    fn run(&mut self) -> Result<()> {
        let mut anchor = 0usize;
        let mut selected_by: Option<f64> = None;
        let mut strategy_used = String::from("first");
        loop {
            let t0 = Instant::now();
            let k = self.terms.len() + 1;
            let (g, zeta0) = self.enrich(anchor)?;
            let record = {
                let gs = self.gs();
                build_record(self.disc, &g, &gs)
            };
            log::info!("term {k}: {} stored scalars", record.scalar_count());
            let vs_step = if self.cfg.method == Method::Vs {
                Some(self.pick_vs_step(&g, &record)?)
            } else {
                None
            };
            self.terms.push(SeparatedTerm {
                anchor: self.samples[anchor].xi.clone(),
                anchor_index: anchor,
                g: Some(g),
                record,
                zeta0,
                vs_step,
            });
            self.extend_rows();
            if let Some(gram) = self.gram.as_mut() {
                let gs: Vec<&Trajectory> = self.terms.iter().map(|t| t.g.as_ref().unwrap()).collect();
                gram.add_term(self.disc, self.grid, &gs);
            }
            let anchor_error = self.anchor_step_error(anchor)?;
            self.samples[anchor].active = false;
            let mut step = TraceStep {
                k,
                xi: self.samples[anchor].xi.clone(),
                sample_index: anchor,
                delta_max: selected_by,
                strategy: strategy_used.clone(),
                seconds: 0.0,
                anchor_error,
                held_steps: self.samples[anchor].held,
            };

            let stop = if k >= self.cfg.n_max {
                Some("n-max".to_string())
            } else if self.samples.iter().all(|s| !s.active) {
                Some("training set exhausted".to_string())
            } else {
                None
            };
            if let Some(reason) = stop {
                step.seconds = t0.elapsed().as_secs_f64();
                self.trace.steps.push(step);
                self.trace.stop = reason;
                return Ok(());
            }

            let (values, used) = self.indicators()?;
            let active: Vec<usize> = (0..self.samples.len()).filter(|&s| self.samples[s].active).collect();
            let pick = greedy_indicator(&values).expect("indicators contain a finite value");
            let max = values[pick];
            step.seconds = t0.elapsed().as_secs_f64();
            self.trace.steps.push(step);
            self.trace.final_delta_max = Some(max);
            log::info!("step {k}: max indicator {max:.3e} ({used})");
            if max < self.cfg.tolerance {
                self.trace.stop = "tolerance".into();
                return Ok(());
            }
            anchor = active[pick];
            selected_by = Some(max);
            strategy_used = used;
        }
    }

    /// Spatial basis and initial representation of the next term at `anchor`.
    fn enrich(&mut self, anchor: usize) -> Result<(Trajectory, Zeta0Rep)> {
        let disc = self.disc;
        let s = &self.samples[anchor];
        let gs = self.gs();
        let prev: Vec<PrevTerm<'_>> = gs.iter().zip(&s.rows).map(|(g, z)| PrevTerm { g, zeta: z }).collect();
        let mu = disc.initial_dofs(&s.init);
        let mut e0 = mu.clone();
        for p in &prev {
            for (e, v) in e0.iter_mut().zip(p.g.field(0)) {
                *e -= p.zeta[0] * v;
            }
        }
        let g = solve_error_equation(disc, &s.kappa, self.grid, &prev, &e0)?;
        let k = gs.len() + 1;
        let n_init = self.problem.initial.len() + self.problem.lifting.len();
        let g0 = g.field(0);
        let g0_norm = disc.norm(g0);
        let g10 = if k == 1 { g0_norm } else { self.g10_norm };
        let degenerate = if k == 1 {
            g0.iter().all(|v| *v == 0.0)
        } else {
            g0_norm <= DEGENERATE_G0 * disc.norm(&mu).max(g10)
        };
        let zeta0 = if degenerate || self.cfg.method == Method::Vs {
            Zeta0Rep::zero(n_init, k)
        } else {
            let prev0: Vec<&[f64]> = gs.iter().map(|g| g.field(0)).collect();
            Zeta0Rep::project(disc, g0, &prev0)
        };
        self.g10_norm = g10;
        Ok((g, zeta0))
    }

    fn pick_vs_step(&mut self, g: &Trajectory, record: &crate::record::ProjectionRecord) -> Result<usize> {
        let k = self.terms.len() + 1;
        let cands = vs_candidates(self.grid.steps, self.cfg.vs.candidates, self.cfg.vs.seed.wrapping_add(k as u64));
        let val: Vec<usize> = (0..self.samples.len().min(self.cfg.vs.validation.max(1))).collect();
        self.ensure_errors(&val)?;
        let tau = self.grid.tau();
        let errs: Vec<(&Trajectory, &Coefficients, Vec<f64>)> = val
            .iter()
            .map(|&s| {
                let smp = &self.samples[s];
                let prev: Vec<f64> = smp.rows.iter().map(|r| r[0]).collect();
                (smp.err.as_ref().unwrap(), &smp.kappa, prev)
            })
            .collect();
        choose_vs_step(self.disc, self.grid, g, record, &cands, &errs, tau)
    }

    /// Row `k` at every training sample.
    fn extend_rows(&mut self) {
        let k = self.terms.len() - 1;
        let term = &self.terms[k];
        let (grid, form, method) = (self.grid, self.cfg.form, self.cfg.method);
        self.samples.par_iter_mut().for_each(|s| {
            let prev: Vec<&[f64]> = s.rows.iter().map(|r| r.as_slice()).collect();
            let (row, held) = term_row(method, term, grid, form, &s.kappa, &s.init, &prev);
            s.held += held;
            s.rows.push(row);
        });
        // cached errors move to the new approximation
        let g = self.terms[k].g.as_ref().unwrap();
        self.samples.par_iter_mut().for_each(|s| {
            if let Some(e) = s.err.as_mut() {
                subtract_term(e, g, &s.rows[k]);
            }
        });
    }

    /// Makes sure the listed samples have `u − u_k` available.
    fn ensure_errors(&mut self, which: &[usize]) -> Result<()> {
        let gs: Vec<&Trajectory> = self.terms.iter().map(|t| t.g.as_ref().unwrap()).collect();
        let (problem, disc, grid) = (self.problem, self.disc, self.grid);
        let mut todo: Vec<&mut Sample> = self
            .samples
            .iter_mut()
            .enumerate()
            .filter(|(i, s)| which.contains(i) && s.err.is_none())
            .map(|(_, s)| s)
            .collect();
        todo.par_iter_mut()
            .map(|s| {
                let mut e = solve_fom(problem, disc, &s.xi, grid)?;
                for (g, row) in gs.iter().zip(&s.rows) {
                    subtract_term(&mut e, g, row);
                }
                s.err = Some(e);
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    fn drop_uncached(&mut self) {
        if !self.cache_errors {
            for s in &mut self.samples {
                s.err = None;
            }
        }
    }

    /// Indicators over the active samples and the strategy that produced them.
    fn indicators(&mut self) -> Result<(Vec<f64>, String)> {
        let active: Vec<usize> = (0..self.samples.len()).filter(|&s| self.samples[s].active).collect();
        if self.cfg.strategy == Strategy::Estimator {
            match self.estimator_values(&active) {
                Ok(v) if greedy_indicator(&v).is_some() => return Ok((v, Strategy::Estimator.to_string())),
                Ok(_) => log::warn!("every residual bound overflowed; using the true error for this step"),
                Err(e) if e.is_numerical() => log::warn!("residual bound failed ({e}); using the true error for this step"),
                Err(e) => return Err(e),
            }
            let v = self.true_values(&active)?;
            return Ok((v, "true-error (fallback)".into()));
        }
        let v = self.true_values(&active)?;
        Ok((v, Strategy::TrueError.to_string()))
    }

    fn true_values(&mut self, active: &[usize]) -> Result<Vec<f64>> {
        let (disc, grid) = (self.disc, self.grid);
        if self.cache_errors {
            self.ensure_errors(active)?;
            return Ok(active
                .par_iter()
                .map(|&s| trajectory_norm(disc, grid, self.samples[s].err.as_ref().unwrap()))
                .collect());
        }
        // one sample at a time keeps the memory bounded
        let mut out = Vec::with_capacity(active.len());
        for &s in active {
            self.ensure_errors(&[s])?;
            out.push(trajectory_norm(disc, grid, self.samples[s].err.as_ref().unwrap()));
            self.drop_uncached();
        }
        Ok(out)
    }

    fn estimator_values(&mut self, active: &[usize]) -> Result<Vec<f64>> {
        let (disc, grid, cfg) = (self.disc, self.grid, &self.cfg.estimator);
        if let Some(gram) = &self.gram {
            for &s in active {
                if self.samples[s].beta.is_none() {
                    self.samples[s].beta = Some(linear_beta(disc, &self.samples[s].kappa)?);
                }
            }
            let samples = &self.samples;
            return Ok(active
                .par_iter()
                .map(|&s| {
                    let smp = &samples[s];
                    let (e0, alpha) = gram.alpha(grid, &smp.kappa, &smp.init, &smp.rows);
                    let beta = vec![smp.beta.unwrap(); grid.nodes()];
                    bound_from_parts(&alpha, &beta, e0, grid, cfg.lipschitz_mode).big_delta
                })
                .collect());
        }
        let gs = self.gs();
        let samples = &self.samples;
        active
            .par_iter()
            .map(|&s| {
                let smp = &samples[s];
                let prev: Vec<PrevTerm<'_>> = gs.iter().zip(&smp.rows).map(|(g, z)| PrevTerm { g, zeta: z }).collect();
                let u = approximation(disc.n_dofs(), grid, &prev);
                let mut e0 = disc.initial_dofs(&smp.init);
                for (a, b) in e0.iter_mut().zip(u.field(0)) {
                    *a -= b;
                }
                let alpha = direct_alpha(disc, &smp.kappa, grid, &u);
                let beta = beta_along(disc, &smp.kappa, grid, &u, cfg)?;
                Ok(bound_from_parts(&alpha, &beta, disc.norm(&e0), grid, cfg.lipschitz_mode).big_delta)
            })
            .collect()
    }

    /// `‖u_k − u‖ / ‖u‖` at the anchor of term `k`, using
    /// `u(ξ_k) = u_{k−1}(ξ_k) + g_k`.
    fn anchor_step_error(&self, anchor: usize) -> Result<f64> {
        let k = self.terms.len() - 1;
        let s = &self.samples[anchor];
        let g = self.terms[k].g.as_ref().unwrap();
        let z = &s.rows[k];
        let w = trapezoid_weights(self.grid);
        let err_sq: Vec<f64> = (0..self.grid.nodes())
            .map(|n| {
                let f = (z[n] - 1.0).powi(2);
                f * self.disc.inner(g.field(n), g.field(n))
            })
            .collect();
        let truth = self.truth_norm(anchor, k + 1)?;
        Ok(relative(time_l2(&err_sq, &w), truth))
    }

    /// Norm of the physical full-order solution at the anchor of term `j`
    /// (1-based), rebuilt from the first `j` terms.
    fn truth_norm(&self, sample: usize, j: usize) -> Result<f64> {
        let s = &self.samples[sample];
        let gs = self.gs();
        let mut prev: Vec<PrevTerm<'_>> = gs[..j - 1]
            .iter()
            .zip(&s.rows)
            .map(|(g, z)| PrevTerm { g, zeta: z })
            .collect();
        let ones = vec![1.0; self.grid.nodes()];
        prev.push(PrevTerm { g: gs[j - 1], zeta: &ones });
        let u = approximation(self.disc.n_dofs(), self.grid, &prev);
        let lc = self.problem.lifting_coefficients(&s.xi);
        let sq: Vec<f64> = (0..self.grid.nodes())
            .map(|n| {
                let f = self.disc.physical(u.field(n), &lc);
                self.disc.m_full.bilinear(&f, &f)
            })
            .collect();
        Ok(time_l2(&sq, &trapezoid_weights(self.grid)))
    }

    /// Relative error of the final model at every anchor.
    fn final_anchor_errors(&self) -> Result<Vec<f64>> {
        let gs = self.gs();
        let w = trapezoid_weights(self.grid);
        let nt = self.terms.len();
        (0..nt)
            .map(|j| {
                let sidx = self.terms[j].anchor_index;
                let s = &self.samples[sidx];
                // u(ξ_j) − u_N(ξ_j) = (1 − ζ_j) g_j − Σ_{i>j} ζ_i g_i
                let mut diff = gs[j].clone();
                let one_minus: Vec<f64> = s.rows[j].iter().map(|z| z - 1.0).collect();
                let mut tmp = Trajectory::zeros(diff.dofs(), diff.nodes());
                std::mem::swap(&mut tmp, &mut diff);
                subtract_term(&mut diff, &tmp, &one_minus);
                for i in j + 1..nt {
                    subtract_term(&mut diff, gs[i], &s.rows[i]);
                }
                let sq: Vec<f64> = (0..self.grid.nodes())
                    .map(|n| self.disc.inner(diff.field(n), diff.field(n)))
                    .collect();
                Ok(relative(time_l2(&sq, &w), self.truth_norm(sidx, j + 1)?))
            })
            .collect()
    }

    fn finish(mut self) -> OfflineRun {
        match self.final_anchor_errors() {
            Ok(v) => self.trace.final_anchor_errors = v,
            Err(e) => log::warn!("final anchor errors unavailable: {e}"),
        }
        let model = ReducedModel {
            method: self.cfg.method,
            problem: self.problem.clone(),
            mesh: MeshSpec {
                cells: self.disc.mesh.cells.clone(),
            },
            grid: *self.grid,
            form: self.cfg.form,
            terms: self.terms,
            trace: self.trace,
        };
        OfflineRun {
            model,
            training: self.samples.iter().map(|s| s.xi.clone()).collect(),
            rows: self.samples.into_iter().map(|s| s.rows).collect(),
        }
    }
}

fn relative(err: f64, truth: f64) -> f64 {
    if truth > 0.0 {
        err / truth
    } else {
        err
    }
}
