//! Acceptance suite: one test and one PASS/FAIL line per criterion.
//!
//! `PARDYN_ACCEPTANCE_TIER=full` runs the heat, Burgers and Allen–Cahn
//! checks at full resolution (hours on a laptop); the default is the CI tier.
//! The reaction–diffusion table always runs at full resolution.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Instant;

use common::*;
use pardyn::benchmarks::{build_tier, parameter_sets, BenchmarkId, BenchmarkSpec, Tier};
use pardyn::discretization::{Discretization, MeshSpec};
use pardyn::estimator::{residual_bound, EstimatorConfig, LipschitzMode};
use pardyn::fom::{solve_fom, PrevTerm, TimeGrid};
use pardyn::model::{Method, ReducedModel, Strategy};
use pardyn::offline::{run_offline, run_offline_detailed, OfflineConfig, OfflineRun};
use pardyn::online::{evaluate_error_metric, online_zetas, ErrorReport};
use pardyn::problem::{Coefficients, ParametricProblem, SamplingLaw};
use pardyn::record::{zeta_row, ProjectionRecord, TimeDerivative};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    // straight to the process stream so the line survives output capture
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// Timing checks run alone; every other test holds a shared guard.
static EXCLUSIVE: RwLock<()> = RwLock::new(());

fn shared() -> RwLockReadGuard<'static, ()> {
    EXCLUSIVE.read().unwrap_or_else(|e| e.into_inner())
}

fn exclusive() -> RwLockWriteGuard<'static, ()> {
    EXCLUSIVE.write().unwrap_or_else(|e| e.into_inner())
}

fn tier() -> Tier {
    match std::env::var("PARDYN_ACCEPTANCE_TIER").as_deref() {
        Ok("full") => Tier::Full,
        _ => Tier::Ci,
    }
}

fn within_order(got: f64, reference: f64) -> bool {
    got > 0.0 && (got / reference).log10().abs() <= 1.0
}

fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

struct Bench {
    problem: ParametricProblem,
    spec: BenchmarkSpec,
    disc: Discretization,
    run: OfflineRun,
    reports: Vec<ErrorReport>,
}

impl Bench {
    fn means(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.mean).collect()
    }

    fn report(&self, n: usize) -> &ErrorReport {
        self.reports.iter().find(|r| r.n_terms == n).unwrap()
    }
}

fn compute(id: BenchmarkId, tier: Tier, cfg: &OfflineConfig) -> Bench {
    let (problem, spec) = build_tier(id, tier);
    let disc = Discretization::new(&problem, &spec.mesh).unwrap();
    let grid = spec.grid().unwrap();
    let (training, test) = parameter_sets(&problem, &spec).unwrap();
    let n_max = *spec.n_list.iter().max().unwrap();
    let cfg = OfflineConfig { n_max, ..cfg.clone() };
    let run = run_offline_detailed(&problem, &disc, &grid, &training, &cfg).unwrap();
    let reports = evaluate_error_metric(&run.model, &disc, &test, &spec.n_list, &spec.fixed_times).unwrap();
    Bench { problem, spec, disc, run, reports }
}

/// Benchmark runs shared between criteria; each is computed once.
fn bench(id: BenchmarkId, tier: Tier, method: Method, strategy: Strategy, form: TimeDerivative) -> &'static Bench {
    static CACHE: OnceLock<Mutex<HashMap<String, &'static OnceLock<Bench>>>> = OnceLock::new();
    let cell = {
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap();
        *map.entry(format!("{id:?}/{tier:?}/{method:?}/{strategy:?}/{form:?}"))
            .or_insert_with(|| Box::leak(Box::new(OnceLock::new())))
    };
    cell.get_or_init(|| {
        let cfg = OfflineConfig { method, strategy, form, ..OfflineConfig::default() };
        compute(id, tier, &cfg)
    })
}

fn dvs(id: BenchmarkId, tier: Tier) -> &'static Bench {
    bench(id, tier, Method::Dvs, Strategy::TrueError, TimeDerivative::Exact)
}

#[test]
fn criterion_1_reaction_diffusion_table() {
    let _guard = shared();
    let b = dvs(BenchmarkId::ReactionDiffusion, Tier::Full);
    let means = b.means();
    let refs = [(2, 3.43e-4), (4, 1.46e-4), (7, 4.66e-5)];
    let brackets = refs.iter().all(|&(n, r)| within_order(b.report(n).mean, r));
    let mono = monotone(&means);
    let pr = bench(BenchmarkId::ReactionDiffusion, Tier::Full, Method::Dvs, Strategy::TrueError, TimeDerivative::ProductRule);
    verdict(
        1,
        brackets && mono,
        &format!(
            "M={} eps(N=1..7) = [{}]; refs N=2/4/7 3.43e-4/1.46e-4/4.66e-5 within 10x: {brackets}; monotone: {mono} \
             (product-rule form for context: [{}])",
            b.spec.test_size,
            fmt(&means),
            fmt(&pr.means())
        ),
    );
}

#[test]
fn criterion_2_heat_dvs_vs_vs() {
    let _guard = shared();
    let t = tier();
    let d = dvs(BenchmarkId::Heat2d, t);
    let v = bench(BenchmarkId::Heat2d, t, Method::Vs, Strategy::TrueError, TimeDerivative::Exact);
    let dm: Vec<f64> = [2, 4, 6, 8].iter().map(|&n| d.report(n).mean).collect();
    let vm: Vec<f64> = [2, 4, 6, 8].iter().map(|&n| v.report(n).mean).collect();
    let mono = monotone(&dm);
    let below = dm.iter().zip(&vm).skip(1).all(|(a, b)| a <= b);
    let ratio = vm[3] / dm[3];
    let pass = match t {
        Tier::Ci => mono && below,
        Tier::Full => dm[3] <= 5e-4 && ratio >= 1e2,
    };
    verdict(
        2,
        pass,
        &format!(
            "{t:?} tier: DVS eps(N=2,4,6,8) = [{}] monotone: {mono}; VS = [{}]; DVS <= VS for N>=4: {below}; \
             eps_DVS(8) = {:.3e}, VS/DVS ratio at N=8 = {ratio:.1}",
            fmt(&dm),
            fmt(&vm),
            dm[3]
        ),
    );
}

#[test]
fn criterion_3_burgers_fixed_times() {
    let _guard = shared();
    let b = dvs(BenchmarkId::Burgers, tier());
    let col = |i: usize| -> Vec<f64> { b.reports.iter().map(|r| r.fixed_means[i]).collect() };
    let (t1, t2) = (col(0), col(1));
    let at = |c: &[f64], n: usize| c[b.spec.n_list.iter().position(|&m| m == n).unwrap()];
    let refs1 = [(2, 1.17e-2), (6, 2.17e-4), (10, 2.76e-5)];
    let refs2 = [(2, 0.87e-2), (6, 4.10e-4), (10, 7.12e-5)];
    let ok1 = refs1.iter().all(|&(n, r)| within_order(at(&t1, n), r));
    let ok2 = refs2.iter().all(|&(n, r)| within_order(at(&t2, n), r));
    let (m1, m2) = (monotone(&t1), monotone(&t2));
    verdict(
        3,
        ok1 && ok2 && m1 && m2,
        &format!(
            "N={:?}: eps(t=1) = [{}] (refs 1.17e-2/2.17e-4/2.76e-5: {ok1}, monotone: {m1}); \
             eps(t=2) = [{}] (refs 8.7e-3/4.10e-4/7.12e-5: {ok2}, monotone: {m2})",
            b.spec.n_list,
            fmt(&t1),
            fmt(&t2)
        ),
    );
}

#[test]
fn criterion_4_allen_cahn() {
    let _guard = shared();
    let b = dvs(BenchmarkId::AllenCahn, tier());
    let (e1, e3) = (b.report(1).mean, b.report(3).mean);
    verdict(
        4,
        e1 <= 5e-2 && e3 <= 1e-3,
        &format!("eps(N=1) = {e1:.3e} (<= 5e-2), eps(N=3) = {e3:.3e} (<= 1e-3); all N: [{}]", fmt(&b.means())),
    );
}

/// Smallest total wall time of `reps` sweeps of online evaluations.
fn online_sweep_seconds(model: &ReducedModel, params: &[Vec<f64>], reps: usize) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            for xi in params {
                std::hint::black_box(online_zetas(model, xi).unwrap());
            }
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn fom_sweep_seconds(model: &ReducedModel, disc: &Discretization, params: &[Vec<f64>], reps: usize) -> f64 {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            for xi in params {
                std::hint::black_box(solve_fom(&model.problem, disc, xi, &model.grid).unwrap());
            }
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_5_online_speed_and_mesh_independence() {
    let _guard = exclusive();
    let t = tier();
    let mut lines = Vec::new();
    let mut fast = true;
    for id in BenchmarkId::ALL {
        let b = if id == BenchmarkId::ReactionDiffusion { dvs(id, Tier::Full) } else { dvs(id, t) };
        // fresh timings: the cached reports were measured while other tests ran
        let (_, test) = parameter_sets(&b.problem, &b.spec).unwrap();
        let fom = fom_sweep_seconds(&b.run.model, &b.disc, &test[..2], 1) / 2.0;
        let worst = b
            .spec
            .n_list
            .iter()
            .filter(|&&n| n <= 10 && n <= b.run.model.n_terms())
            .map(|&n| (n, fom * 20.0 / online_sweep_seconds(&b.run.model.truncated(n), &test[..20], 5)))
            .fold((0, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a });
        fast &= worst.1 >= 10.0;
        lines.push(format!("{id}: min FOM/online = {:.1} at N={}", worst.1, worst.0));
    }

    // same model structure on a mesh and its 2x refinement
    let (problem, spec) = build_tier(BenchmarkId::ReactionDiffusion, Tier::Ci);
    let grid = spec.grid().unwrap();
    let training = problem.sample_parameters(6, 1, SamplingLaw::Uniform).unwrap();
    let params = problem.sample_parameters(200, 5, SamplingLaw::Uniform).unwrap();
    let mut on = Vec::new();
    let mut fom = Vec::new();
    for mesh in [spec.mesh.clone(), spec.mesh.refined(2)] {
        let disc = Discretization::new(&problem, &mesh).unwrap();
        let cfg = OfflineConfig { n_max: 4, ..OfflineConfig::default() };
        let model = run_offline(&problem, &disc, &grid, &training, &cfg).unwrap();
        on.push(online_sweep_seconds(&model, &params, 7));
        fom.push(fom_sweep_seconds(&model, &disc, &params[..40], 3) / 40.0);
    }
    let on_ratio = on[1] / on[0];
    let fom_ratio = fom[1] / fom[0];
    let mesh_ok = (on_ratio - 1.0).abs() <= 0.2 && fom_ratio >= 2.0;
    verdict(
        5,
        fast && mesh_ok,
        &format!(
            "{}; refining 2x: online time ratio {on_ratio:.3} (within 20%), FOM time ratio {fom_ratio:.2} (>= 2)",
            lines.join("; ")
        ),
    );
}

#[test]
fn criterion_6_anchor_consistency() {
    let _guard = shared();
    let mut worst_row = 0.0f64;
    let mut worst_start = 0.0f64;
    let mut starts = 0;
    for id in BenchmarkId::ALL {
        let tier = if id == BenchmarkId::ReactionDiffusion { Tier::Full } else { tier() };
        let b = dvs(id, tier);
        let model = &b.run.model;
        for (k, term) in model.terms.iter().enumerate() {
            let online = online_zetas(model, &term.anchor).unwrap();
            let cached = &b.run.rows[term.anchor_index];
            for (a, c) in online.zetas.iter().zip(cached) {
                for (x, y) in a.iter().zip(c) {
                    worst_row = worst_row.max((x - y).abs() / y.abs().max(1.0));
                }
            }
            if !term.zeta0.degenerate {
                starts += 1;
                worst_start = worst_start.max((online.zetas[k][0] - 1.0).abs());
            }
        }
    }
    verdict(
        6,
        worst_row <= 1e-14 && worst_start <= 4.0 * f64::EPSILON,
        &format!(
            "max online/offline row deviation at anchors {worst_row:.1e} (<= 1e-14); \
             max |zeta_k0(xi_k) - 1| over {starts} non-degenerate starts {worst_start:.1e}"
        ),
    );
}

#[test]
fn criterion_7_separable_truth() {
    let _guard = shared();
    let (problem, spec) = separable_problem(40);
    let disc = Discretization::new(&problem, &spec).unwrap();
    let grid = TimeGrid::new(problem.t_final, 100).unwrap();
    let training = problem.sample_parameters(10, 1, SamplingLaw::Uniform).unwrap();
    let cfg = OfflineConfig { n_max: 2, ..OfflineConfig::default() };
    let model = run_offline(&problem, &disc, &grid, &training, &cfg).unwrap();
    let test = problem.sample_parameters(50, 2, SamplingLaw::Uniform).unwrap();
    let r = evaluate_error_metric(&model, &disc, &test, &[1, 2], &[]).unwrap();
    verdict(
        7,
        r[1].max <= 1e-8,
        &format!("rank-2 manufactured problem: eps(N=1) = {:.3e}, max eps(N=2) = {:.3e} (<= 1e-8)", r[0].mean, r[1].max),
    );
}

#[test]
fn criterion_8_estimator_validity_and_strategies() {
    let _guard = shared();
    let b = dvs(BenchmarkId::Heat2d, tier());
    let model = b.run.model.truncated(3);
    let params = b.problem.sample_parameters(50, 8, SamplingLaw::Uniform).unwrap();
    let cfg = EstimatorConfig::default();
    let (mut covered, mut total) = (0usize, 0usize);
    for xi in &params {
        let bound = residual_bound(&model, &b.disc, xi, &cfg).unwrap();
        let u = solve_fom(&b.problem, &b.disc, xi, &model.grid).unwrap();
        let ev = online_zetas(&model, xi).unwrap();
        let gs: Vec<_> = (0..3).map(|k| model.g(k).unwrap()).collect();
        let terms: Vec<PrevTerm<'_>> = gs.iter().zip(&ev.zetas).map(|(g, z)| PrevTerm { g, zeta: z }).collect();
        let approx = pardyn::estimator::approximation(b.disc.n_dofs(), &model.grid, &terms);
        for n in 0..model.grid.nodes() {
            let e: Vec<f64> = u.field(n).iter().zip(approx.field(n)).map(|(a, c)| a - c).collect();
            total += 1;
            // the same rounding slack on both sides of the comparison
            covered += (bound.delta[n] >= b.disc.norm(&e) * (1.0 - 1e-12)) as usize;
        }
    }
    let frac = covered as f64 / total as f64;

    let t = tier();
    let rd_tier = if t == Tier::Full { Tier::Full } else { Tier::Ci };
    let truth = bench(BenchmarkId::ReactionDiffusion, rd_tier, Method::Dvs, Strategy::TrueError, TimeDerivative::Exact);
    let est = bench(BenchmarkId::ReactionDiffusion, rd_tier, Method::Dvs, Strategy::Estimator, TimeDerivative::Exact);
    let (a, c) = (truth.reports.last().unwrap().mean, est.reports.last().unwrap().mean);
    let spread = a.max(c) / a.min(c);
    let same: usize = truth
        .run
        .model
        .terms
        .iter()
        .zip(&est.run.model.terms)
        .filter(|(x, y)| x.anchor_index == y.anchor_index)
        .count();
    verdict(
        8,
        frac >= 0.98 && spread <= 3.0,
        &format!(
            "heat k=3, 50 samples: delta_n >= ||e_n|| at {:.2}% of nodes (>= 98%); reaction-diffusion final eps \
             true-error {a:.3e} vs estimator {c:.3e}, ratio {spread:.2} (<= 3); {same} of {} anchors agree",
            100.0 * frac,
            truth.run.model.n_terms()
        ),
    );
}

#[test]
fn criterion_9_kernel_oracles() {
    let _guard = shared();
    let mut worst_quad = 0.0f64;
    for (dim, cells) in [(1usize, 17usize), (2, 6)] {
        let p = unit_problem(dim, vec![pardyn::problem::NonlinearOp::Cubic]);
        let d = Discretization::new(&p, &MeshSpec::uniform(dim, cells)).unwrap();
        let ip = Interp { disc: &d };
        let n = d.n_nodes();
        let f: Vec<Vec<f64>> = (0..4).map(|s| random_field(n, 40 + s)).collect();
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
        let mass = fine_quadrature(&d, 2, |x| ip.value(&f[0], x) * ip.value(&f[1], x));
        worst_quad = worst_quad.max(rel(d.m_full.bilinear(&f[0], &f[1]), mass));
        let stiff = fine_quadrature(&d, 2, |x| ip.grad(&f[0], x).iter().zip(ip.grad(&f[1], x)).map(|(a, b)| a * b).sum());
        worst_quad = worst_quad.max(rel(d.k_full.bilinear(&f[0], &f[1]), stiff));
        let v = d.apply_nonlinear(pardyn::problem::NonlinearOp::Cubic, &[&f[0], &f[1], &f[2]]).unwrap();
        let got: f64 = v.iter().zip(&f[3]).map(|(a, b)| a * b).sum();
        worst_quad = worst_quad.max(rel(got, fine_quadrature(&d, 2, |x| f.iter().map(|g| ip.value(g, x)).product())));
    }

    let p = unit_problem(2, vec![]);
    let d = Discretization::new(&p, &MeshSpec::uniform(2, 8)).unwrap();
    let kappa = Coefficients { c: vec![1.0], a: vec![0.9], h: vec![] };
    let got = pardyn::estimator::log_lipschitz(&d, &kappa, &vec![0.0; d.n_dofs()], LipschitzMode::EigenBound, 0, 0).unwrap();
    let (vals, _) = generalized_eigen(&dense(&d.linear_operator(&kappa.a).symmetric_part()), &dense(&d.m));
    let want = *vals.last().unwrap();
    let eig_err = (got - want).abs() / want.abs();

    let (a, c, gamma, tau, steps) = (-4.0, 0.3, 1.7, 0.005, 400);
    let rec = ProjectionRecord {
        k: 1,
        n_a: 1,
        n_c: 1,
        steps,
        gg_diag: vec![gamma; steps],
        gg_lag: vec![gamma; steps],
        a_self: vec![a * gamma; steps],
        a_cross: vec![],
        g_cross: vec![gamma; steps],
        g_cross_lag: vec![gamma; steps],
        c_proj: vec![c; steps],
        nonlinear: vec![],
    };
    let k1 = Coefficients { c: vec![1.0], a: vec![1.0], h: vec![] };
    let (row, _) = zeta_row(&rec, &k1, &[], 0.8, tau, TimeDerivative::Exact);
    let fixed = -c / (gamma * a);
    let r = 1.0 / (1.0 - tau * a);
    let zeta_err = row
        .iter()
        .enumerate()
        .map(|(n, z)| {
            let w = fixed + (0.8 - fixed) * r.powi(n as i32);
            (z - w).abs() / w.abs()
        })
        .fold(0.0, f64::max);

    verdict(
        9,
        worst_quad <= 1e-10 && eig_err <= 1e-8 && zeta_err <= 1e-12,
        &format!(
            "assembly vs quadrature {worst_quad:.1e} (<= 1e-10); eigen-bound vs dense {eig_err:.1e} (<= 1e-8); \
             zeta recursion vs closed form {zeta_err:.1e} (<= 1e-12)"
        ),
    );
}
