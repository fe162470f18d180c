mod common;

use common::*;
use pardyn::discretization::{Discretization, MeshSpec};
use pardyn::error::DvsError;
use pardyn::estimator::{bound_from_parts, true_error, LipschitzMode};
use pardyn::fom::{initial_dofs, solve_fom, TimeGrid};
use pardyn::linalg::dot;
use pardyn::model::{Method, ReducedModel, Strategy};
use pardyn::offline::{run_offline, run_offline_detailed, OfflineConfig, OfflineRun};
use pardyn::online::{evaluate_error_metric, online_zetas, online_zetas_truncated, reconstruct};
use pardyn::persist::{load_model, manifest_path, read_header, save_model};
use pardyn::problem::*;
use pardyn::record::TimeDerivative;
use proptest::prelude::*;

/// `u' = ξ₁ Δu + ξ₂` on (0, 1) with `u(0) = bubble + ξ₃ sin(πx)`.
fn forced_problem() -> ParametricProblem {
    ParametricProblem {
        name: "forced".into(),
        domain: Domain { lo: vec![0.0], hi: vec![1.0] },
        t_final: 0.2,
        parameter_box: vec![(0.5, 2.0), (0.0, 1.0), (-1.0, 1.0)],
        affine: AffineExpansion {
            constant: vec![ConstantTerm {
                coef: Coefficient::monomial("xi2", 1.0, &[(1, 1)]),
                load: Load::Source { field: SpatialFn::Constant { value: 1.0 } },
            }],
            linear: vec![LinearTerm {
                coef: Coefficient::monomial("xi1", 1.0, &[(0, 1)]),
                op: LinearOp::Laplacian,
            }],
            nonlinear: vec![],
        },
        initial: vec![
            FieldTerm {
                coef: Coefficient::constant("1", 1.0),
                field: SpatialFn::Bubble { scale: 4.0, lo: vec![0.0], hi: vec![1.0] },
            },
            FieldTerm {
                coef: Coefficient::monomial("xi3", 1.0, &[(2, 1)]),
                field: SpatialFn::SinProduct { scale: 1.0, freq: vec![std::f64::consts::PI] },
            },
        ],
        lifting: vec![],
    }
}

struct Setup {
    problem: ParametricProblem,
    disc: Discretization,
    grid: TimeGrid,
    training: Vec<Vec<f64>>,
}

fn setup(problem: ParametricProblem, cells: usize, steps: usize, training: usize) -> Setup {
    let disc = Discretization::new(&problem, &MeshSpec::uniform(problem.domain.dim(), cells)).unwrap();
    let grid = TimeGrid::new(problem.t_final, steps).unwrap();
    let training = problem.sample_parameters(training, 1, SamplingLaw::Uniform).unwrap();
    Setup { problem, disc, grid, training }
}

fn offline(s: &Setup, cfg: &OfflineConfig) -> OfflineRun {
    run_offline_detailed(&s.problem, &s.disc, &s.grid, &s.training, cfg).unwrap()
}

fn cfg(n_max: usize, form: TimeDerivative) -> OfflineConfig {
    OfflineConfig { n_max, form, ..OfflineConfig::default() }
}

/// ζ rows of one parameter computed from the basis fields on the mesh,
/// with no use of the stored projection scalars.
fn mesh_level_rows(s: &Setup, model: &ReducedModel, xi: &[f64]) -> Vec<Vec<f64>> {
    let d = &s.disc;
    let tau = s.grid.tau();
    let kappa = s.problem.evaluate_coefficients(xi).unwrap();
    let a_op = d.linear_operator(&kappa.a);
    let src = d.source(&kappa.c);
    let u0 = initial_dofs(&s.problem, d, xi);
    let nodes = s.grid.nodes();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, term) in model.terms.iter().enumerate() {
        let g = term.g.as_ref().unwrap();
        let prev = |n: usize| -> Vec<f64> {
            let mut u = vec![0.0; d.n_dofs()];
            for (j, r) in rows.iter().enumerate() {
                let gj = model.terms[j].g.as_ref().unwrap().field(n);
                for (o, v) in u.iter_mut().zip(gj) {
                    *o += r[n] * v;
                }
            }
            u
        };
        let g0 = g.field(0);
        let mut z = if term.zeta0.degenerate {
            0.0
        } else {
            let r0: Vec<f64> = u0.iter().zip(prev(0)).map(|(a, b)| a - b).collect();
            d.inner(&r0, g0) / d.inner(g0, g0)
        };
        let mut row = vec![z];
        for n in 0..s.grid.steps {
            let (gn, g1) = (g.field(n), g.field(n + 1));
            let p1 = prev(n + 1);
            let mut dp = vec![0.0; d.n_dofs()];
            for (j, r) in rows.iter().enumerate() {
                let gj = model.terms[j].g.as_ref().unwrap();
                let (a, b) = (gj.field(n), gj.field(n + 1));
                for i in 0..dp.len() {
                    dp[i] += match model.form {
                        TimeDerivative::Exact => (r[n + 1] * b[i] - r[n] * a[i]) / tau,
                        TimeDerivative::ProductRule => ((r[n + 1] - r[n]) * b[i] + r[n + 1] * (b[i] - a[i])) / tau,
                    };
                }
            }
            let rhs = dot(&src, g1) + dot(&a_op.matvec(&p1), g1) - d.inner(&dp, g1);
            let gg = d.inner(g1, g1);
            let ag = dot(&a_op.matvec(g1), g1);
            z = match model.form {
                TimeDerivative::Exact => (z * d.inner(gn, g1) / tau + rhs) / (gg / tau - ag),
                TimeDerivative::ProductRule => {
                    (z * gg / tau + rhs) / (2.0 * gg / tau - d.inner(gn, g1) / tau - ag)
                }
            };
            row.push(z);
        }
        assert_eq!(row.len(), nodes, "term {k}");
        rows.push(row);
    }
    rows
}

#[test]
fn stored_scalars_reproduce_mesh_projection() {
    let s = setup(forced_problem(), 24, 40, 6);
    for form in [TimeDerivative::Exact, TimeDerivative::ProductRule] {
        let run = offline(&s, &cfg(4, form));
        assert_eq!(run.model.n_terms(), 4);
        // ζ_k multiplies g_k, so agreement is measured relative to the
        // reconstructed field: |Δζ_k| max‖g_k‖ against max_j |ζ_j| max‖g_j‖.
        let gmax: Vec<f64> = run
            .model
            .terms
            .iter()
            .map(|t| {
                let g = t.g.as_ref().unwrap();
                (0..g.nodes()).map(|n| s.disc.norm(g.field(n))).fold(0.0, f64::max)
            })
            .collect();
        for (i, xi) in run.training.iter().enumerate() {
            let want = mesh_level_rows(&s, &run.model, xi);
            let field_scale = want
                .iter()
                .zip(&gmax)
                .map(|(r, g)| r.iter().fold(0.0f64, |m, v| m.max(v.abs())) * g)
                .fold(0.0, f64::max);
            for (k, (a, b)) in run.rows[i].iter().zip(&want).enumerate() {
                for (n, (x, y)) in a.iter().zip(b).enumerate() {
                    assert!(
                        (x - y).abs() * gmax[k] <= 1e-12 * field_scale,
                        "{form:?} sample {i} k={k} n={n}: {x} vs {y}"
                    );
                }
            }
        }
    }
}

#[test]
fn anchors_are_reproduced() {
    let s = setup(forced_problem(), 24, 40, 8);
    let run = offline(&s, &cfg(5, TimeDerivative::Exact));
    let model = &run.model;
    assert_eq!(model.terms[0].anchor, s.training[0], "first anchor is the first training sample");
    let mut seen = std::collections::HashSet::new();
    for (k, term) in model.terms.iter().enumerate() {
        assert!(seen.insert(term.anchor_index), "anchor chosen twice");
        assert_eq!(term.anchor, s.training[term.anchor_index]);
        let online = online_zetas(model, &term.anchor).unwrap();
        let cached = &run.rows[term.anchor_index];
        for (j, (a, b)) in online.zetas.iter().zip(cached).enumerate() {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0), "k={k} row {j}");
            }
        }
        if !term.zeta0.degenerate {
            assert!((online.zetas[k][0] - 1.0).abs() <= 1e-14, "ζ_{{k,0}}(ξ_k) = {}", online.zetas[k][0]);
        }
    }
    // two independent initial components: the first two starts are non-degenerate
    assert!(!model.terms[0].zeta0.degenerate && !model.terms[1].zeta0.degenerate);
    assert!(model.terms[2..].iter().all(|t| t.zeta0.degenerate));
}

#[test]
fn anchor_error_is_far_below_training_maximum() {
    let s = setup(forced_problem(), 24, 40, 10);
    let run = offline(&s, &cfg(5, TimeDerivative::Exact));
    let steps = &run.model.trace.steps;
    for w in steps.windows(2) {
        let max = w[1].delta_max.unwrap();
        assert!(w[0].anchor_error * 10.0 <= max, "k={}: anchor {} vs max {}", w[0].k, w[0].anchor_error, max);
    }
    // the model at step k reproduces its own anchor up to the solver's rounding
    for (k, step) in steps.iter().enumerate() {
        let e = true_error(&run.model.truncated(k + 1), &s.disc, &step.xi).unwrap();
        assert!(e < 1e-9, "k={} anchor error {e}", k + 1);
    }
}

#[test]
fn greedy_loop_structure() {
    let s = setup(forced_problem(), 16, 20, 5);
    let one = Setup { training: s.training[..1].to_vec(), ..setup(forced_problem(), 16, 20, 1) };
    let m = run_offline(&one.problem, &one.disc, &one.grid, &one.training, &cfg(10, TimeDerivative::Exact)).unwrap();
    assert_eq!(m.n_terms(), 1);
    assert_eq!(m.trace.stop, "training set exhausted");
    assert!(m.trace.steps[0].delta_max.is_none());

    let loose = OfflineConfig { tolerance: f64::INFINITY, ..cfg(10, TimeDerivative::Exact) };
    let m = run_offline(&s.problem, &s.disc, &s.grid, &s.training, &loose).unwrap();
    assert_eq!(m.n_terms(), 1);
    assert_eq!(m.trace.stop, "tolerance");

    let m = run_offline(&s.problem, &s.disc, &s.grid, &s.training, &cfg(3, TimeDerivative::Exact)).unwrap();
    assert_eq!(m.n_terms(), 3);
    assert_eq!(m.trace.stop, "n-max");

    let m = run_offline(&s.problem, &s.disc, &s.grid, &s.training, &cfg(10, TimeDerivative::Exact)).unwrap();
    assert_eq!(m.n_terms(), 5);

    let bad = OfflineConfig { tolerance: -1.0, ..cfg(3, TimeDerivative::Exact) };
    assert!(run_offline(&s.problem, &s.disc, &s.grid, &s.training, &bad).is_err());
    let err = run_offline(&s.problem, &s.disc, &s.grid, &[], &cfg(3, TimeDerivative::Exact)).unwrap_err();
    assert!(err.partial.is_none());
}

#[test]
fn estimator_strategy_builds_a_model() {
    let s = setup(forced_problem(), 16, 20, 6);
    let c = OfflineConfig { strategy: Strategy::Estimator, ..cfg(3, TimeDerivative::Exact) };
    let m = run_offline(&s.problem, &s.disc, &s.grid, &s.training, &c).unwrap();
    assert_eq!(m.n_terms(), 3);
    let labels: Vec<&str> = m.trace.steps.iter().map(|t| t.strategy.as_str()).collect();
    assert_eq!(labels[0], "first");
    assert!(labels[1..].iter().all(|l| *l == "estimator"), "{labels:?}");
}

#[test]
fn separable_truth_is_recovered_with_two_terms() {
    let (problem, spec) = separable_problem(30);
    let disc = Discretization::new(&problem, &spec).unwrap();
    let grid = TimeGrid::new(problem.t_final, 50).unwrap();
    let training = problem.sample_parameters(8, 3, SamplingLaw::Uniform).unwrap();
    let model = run_offline(&problem, &disc, &grid, &training, &cfg(2, TimeDerivative::Exact)).unwrap();
    let test = problem.sample_parameters(20, 4, SamplingLaw::Uniform).unwrap();
    let reports = evaluate_error_metric(&model, &disc, &test, &[1, 2], &[]).unwrap();
    assert!(reports[0].mean > 1e-4, "one term cannot hold two modes: {}", reports[0].mean);
    assert!(reports[1].max <= 1e-8, "rank-2 truth, error {}", reports[1].max);
}

#[test]
fn nonlinear_models_are_consistent_at_anchors() {
    let mut p = forced_problem();
    p.affine.nonlinear.push(NonlinearTerm { coef: Coefficient::constant("1", 0.5), op: NonlinearOp::Convection });
    let s = setup(p.clone(), 20, 30, 6);
    let run = offline(&s, &cfg(3, TimeDerivative::Exact));
    for term in &run.model.terms {
        let online = online_zetas(&run.model, &term.anchor).unwrap();
        assert_eq!(online.zetas, run.rows[term.anchor_index]);
    }
    let test = p.sample_parameters(5, 9, SamplingLaw::Uniform).unwrap();
    let r = evaluate_error_metric(&run.model, &s.disc, &test, &[1, 3], &[]).unwrap();
    assert!(r[1].mean < r[0].mean);

    let mut p = forced_problem();
    p.affine.nonlinear.push(NonlinearTerm { coef: Coefficient::constant("1", 1.0), op: NonlinearOp::Cubic });
    let s = setup(p, 20, 30, 6);
    let run = offline(&s, &cfg(3, TimeDerivative::Exact));
    for term in &run.model.terms {
        assert_eq!(online_zetas(&run.model, &term.anchor).unwrap().zetas, run.rows[term.anchor_index]);
    }
}

#[test]
fn online_rejects_bad_requests() {
    let s = setup(forced_problem(), 12, 10, 3);
    let model = offline(&s, &cfg(2, TimeDerivative::Exact)).model;
    assert!(matches!(online_zetas_truncated(&model, &s.training[0], 3), Err(DvsError::OutOfRange { .. })));
    assert!(matches!(online_zetas(&model, &[1.0, 0.5]), Err(DvsError::Domain(_))));
    assert!(matches!(online_zetas(&model, &[9.0, 0.5, 0.0]), Err(DvsError::Domain(_))));
    let e = online_zetas(&model, &s.training[1]).unwrap();
    assert!(matches!(reconstruct(&model, &e, 11), Err(DvsError::OutOfRange { .. })));
    let u = reconstruct(&model, &e, 10).unwrap();
    assert_eq!(u.len(), 13);
    assert!(matches!(reconstruct(&model.stripped(), &e, 1), Err(DvsError::State(_))));
}

#[test]
fn reconstruction_approximates_fom() {
    let s = setup(forced_problem(), 16, 20, 6);
    let model = offline(&s, &cfg(6, TimeDerivative::Exact)).model;
    let xi = [1.3, 0.4, 0.2];
    let e = online_zetas(&model, &xi).unwrap();
    let fom = solve_fom(&s.problem, &s.disc, &xi, &s.grid).unwrap();
    let u = reconstruct(&model, &e, 20).unwrap();
    let want = s.disc.extend(fom.field(20));
    let diff: Vec<f64> = u.iter().zip(&want).map(|(a, b)| a - b).collect();
    assert!(s.disc.norm_full(&diff) <= 1e-3 * s.disc.norm_full(&want));
}

#[test]
fn persistence_roundtrip() {
    let s = setup(forced_problem(), 12, 10, 4);
    let model = offline(&s, &cfg(3, TimeDerivative::Exact)).model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dvs");
    save_model(&model, &path, false).unwrap();
    assert!(manifest_path(&path).exists());
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);

    let stripped_path = dir.path().join("s.dvs");
    save_model(&model, &stripped_path, true).unwrap();
    let stripped = load_model(&stripped_path).unwrap();
    assert!(!stripped.has_fields());
    assert!(std::fs::metadata(&stripped_path).unwrap().len() < std::fs::metadata(&path).unwrap().len());
    for xi in &s.training {
        assert_eq!(online_zetas(&stripped, xi).unwrap().zetas, online_zetas(&model, xi).unwrap().zetas);
    }

    // newer major version
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8..10].copy_from_slice(&2u16.to_le_bytes());
    let newer = dir.path().join("newer.dvs");
    std::fs::write(&newer, &bytes).unwrap();
    assert_eq!(read_header(&newer).unwrap().major, 2);
    assert!(matches!(load_model(&newer), Err(DvsError::Version { found_major: 2, .. })));

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.dvs");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_model(&cut), Err(DvsError::Format(_))));
    let long = dir.path().join("long.dvs");
    std::fs::write(&long, [bytes.as_slice(), &[0u8; 8]].concat()).unwrap();
    assert!(matches!(load_model(&long), Err(DvsError::Format(_))));
    let junk = dir.path().join("junk.dvs");
    std::fs::write(&junk, b"not a model").unwrap();
    assert!(matches!(load_model(&junk), Err(DvsError::Format(_))));
    assert!(matches!(load_model(&dir.path().join("missing.dvs")), Err(DvsError::Io { .. })));
}

#[test]
fn vs_baseline_has_static_coefficients() {
    let s = setup(forced_problem(), 16, 20, 6);
    let c = OfflineConfig { method: Method::Vs, ..cfg(3, TimeDerivative::Exact) };
    let m = run_offline(&s.problem, &s.disc, &s.grid, &s.training, &c).unwrap();
    assert_eq!(m.method, Method::Vs);
    assert!(m.terms.iter().all(|t| t.vs_step.is_some() && t.zeta0.degenerate));
    let e = online_zetas(&m, &[1.1, 0.3, 0.5]).unwrap();
    for row in &e.zetas {
        assert!(row.iter().all(|v| *v == row[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_grows_with_residual(
        alpha in prop::collection::vec(0.0f64..10.0, 21),
        bump in prop::collection::vec(0.0f64..1.0, 21),
        beta in -5.0f64..5.0,
        d0 in 0.0f64..1.0,
    ) {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let betas = vec![beta; 21];
        let a = bound_from_parts(&alpha, &betas, d0, &grid, LipschitzMode::EigenBound);
        let raised: Vec<f64> = alpha.iter().zip(&bump).map(|(x, y)| x + y).collect();
        let b = bound_from_parts(&raised, &betas, d0, &grid, LipschitzMode::EigenBound);
        for (x, y) in a.delta.iter().zip(&b.delta) {
            prop_assert!(y >= x);
        }
        prop_assert!(b.big_delta >= a.big_delta);
        let steeper = bound_from_parts(&alpha, &vec![beta + 1.0; 21], d0, &grid, LipschitzMode::EigenBound);
        prop_assert!(steeper.big_delta >= a.big_delta);
    }

    #[test]
    fn bound_scales_linearly(
        alpha in prop::collection::vec(0.0f64..10.0, 11),
        beta in -5.0f64..5.0,
        d0 in 0.0f64..1.0,
        c in 0.1f64..100.0,
    ) {
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let betas = vec![beta; 11];
        let a = bound_from_parts(&alpha, &betas, d0, &grid, LipschitzMode::EigenBound);
        let scaled: Vec<f64> = alpha.iter().map(|x| c * x).collect();
        let b = bound_from_parts(&scaled, &betas, c * d0, &grid, LipschitzMode::EigenBound);
        prop_assert!((b.big_delta - c * a.big_delta).abs() <= 1e-12 * (1.0 + c * a.big_delta));
    }

    #[test]
    fn greedy_picks_first_maximum(values in prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5), Just(f64::NAN)], 1..20)) {
        let got = pardyn::estimator::greedy_indicator(&values);
        let finite: Vec<(usize, f64)> = values.iter().copied().enumerate().filter(|(_, v)| v.is_finite()).collect();
        match finite.iter().map(|(_, v)| *v).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))) {
            None => prop_assert_eq!(got, None),
            Some(max) => prop_assert_eq!(got, finite.iter().find(|(_, v)| *v == max).map(|(i, _)| *i)),
        }
    }
}
