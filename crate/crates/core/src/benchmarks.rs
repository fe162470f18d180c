//! The four reference problems with their discretization settings, and the
//! harness that turns one offline run into error/time tables.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discretization::{Discretization, MeshSpec};
use crate::error::{DvsError, Result};
use crate::fom::TimeGrid;
use crate::model::{Method, ReducedModel, Strategy};
use crate::offline::{run_offline, OfflineConfig};
use crate::online::{evaluate_error_metric, ErrorReport};
use crate::problem::{
    AffineExpansion, Coefficient, ConstantTerm, Domain, FieldTerm, LinearOp, LinearTerm, Load, NonlinearOp,
    NonlinearTerm, ParametricProblem, SamplingLaw, SpatialFn,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkId {
    ReactionDiffusion,
    Heat2d,
    Burgers,
    AllenCahn,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 4] = [
        BenchmarkId::ReactionDiffusion,
        BenchmarkId::Heat2d,
        BenchmarkId::Burgers,
        BenchmarkId::AllenCahn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkId::ReactionDiffusion => "reaction-diffusion",
            BenchmarkId::Heat2d => "heat2d",
            BenchmarkId::Burgers => "burgers",
            BenchmarkId::AllenCahn => "allen-cahn",
        }
    }
}

impl std::fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BenchmarkId {
    type Err = DvsError;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| DvsError::Config(format!("unknown benchmark {s:?}")))
    }
}

/// Resolution tier: the reference settings, or a reduced one for routine
/// testing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    #[default]
    Full,
    Ci,
}

impl std::str::FromStr for Tier {
    type Err = DvsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Tier::Full),
            "ci" => Ok(Tier::Ci),
            _ => Err(DvsError::Config(format!("unknown tier {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub id: BenchmarkId,
    pub tier: Tier,
    pub mesh: MeshSpec,
    /// Mesh width along each axis.
    pub h: f64,
    pub tau: f64,
    pub t_final: f64,
    pub training_size: usize,
    pub test_size: usize,
    pub training_seed: u64,
    pub test_seed: u64,
    /// Times of the fixed-time error columns.
    pub fixed_times: Vec<f64>,
    pub n_list: Vec<usize>,
}

impl BenchmarkSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.t_final, self.tau)
    }
}

fn c(id: &str, v: f64) -> Coefficient {
    Coefficient::constant(id, v)
}

fn mono(id: &str, scale: f64, powers: &[(usize, u32)]) -> Coefficient {
    Coefficient::monomial(id, scale, powers)
}

fn reaction_diffusion() -> ParametricProblem {
    let lift = SpatialFn::Linear {
        offset: 2.0,
        slope: vec![2.0],
    };
    ParametricProblem {
        name: "reaction-diffusion".into(),
        domain: Domain {
            lo: vec![0.0],
            hi: vec![1.0],
        },
        t_final: 1.0,
        parameter_box: vec![(1.0, 3.0); 4],
        affine: AffineExpansion {
            constant: vec![
                ConstantTerm {
                    coef: mono("xi3", 1.0, &[(2, 1)]),
                    load: Load::Source {
                        field: SpatialFn::Constant { value: 1.0 },
                    },
                },
                ConstantTerm {
                    coef: mono("-xi1*xi4", -1.0, &[(0, 1), (3, 1)]),
                    load: Load::Source { field: lift.clone() },
                },
            ],
            linear: vec![
                LinearTerm {
                    coef: mono("-xi1", -1.0, &[(0, 1)]),
                    op: LinearOp::Mass,
                },
                LinearTerm {
                    coef: mono("2*xi2", 2.0, &[(1, 1)]),
                    op: LinearOp::Laplacian,
                },
            ],
            nonlinear: vec![],
        },
        initial: vec![FieldTerm {
            coef: mono("xi4", 1.0, &[(3, 1)]),
            field: lift.clone(),
        }],
        lifting: vec![FieldTerm {
            coef: mono("xi4", 1.0, &[(3, 1)]),
            field: lift,
        }],
    }
}

fn heat2d() -> ParametricProblem {
    let mut constant = vec![ConstantTerm {
        coef: c("1", 1.0),
        load: Load::Source {
            field: SpatialFn::Constant { value: 1.0 },
        },
    }];
    for m in 1..=10 {
        let mf = m as f64;
        constant.push(ConstantTerm {
            coef: mono(&format!("xi{}", m + 1), 1.0, &[(m, 1)]),
            load: Load::Source {
                field: SpatialFn::SinAxisSum {
                    scale: 1.0 / (mf * mf * PI * PI),
                    freq: 2.0 * PI * mf,
                },
            },
        });
    }
    ParametricProblem {
        name: "heat2d".into(),
        domain: Domain {
            lo: vec![0.0, 0.0],
            hi: vec![PI, PI],
        },
        t_final: 1.0,
        parameter_box: vec![(1.0, 4.0); 11],
        affine: AffineExpansion {
            constant,
            linear: vec![LinearTerm {
                coef: mono("xi1", 1.0, &[(0, 1)]),
                op: LinearOp::Laplacian,
            }],
            nonlinear: vec![],
        },
        initial: vec![
            FieldTerm {
                coef: c("1", 1.0),
                field: SpatialFn::SinProduct {
                    scale: 1.0,
                    freq: vec![1.0, 1.0],
                },
            },
            FieldTerm {
                coef: c("1", 1.0),
                field: SpatialFn::Constant { value: 1.0 },
            },
        ],
        lifting: vec![FieldTerm {
            coef: c("1", 1.0),
            field: SpatialFn::Constant { value: 1.0 },
        }],
    }
}

fn burgers() -> ParametricProblem {
    ParametricProblem {
        name: "burgers".into(),
        domain: Domain {
            lo: vec![0.0],
            hi: vec![1.0],
        },
        t_final: 2.0,
        parameter_box: vec![(1.0, 3.0); 2],
        affine: AffineExpansion {
            constant: vec![],
            linear: vec![LinearTerm {
                coef: mono("xi1/50", 0.02, &[(0, 1)]),
                op: LinearOp::Laplacian,
            }],
            nonlinear: vec![NonlinearTerm {
                coef: c("1", 1.0),
                op: NonlinearOp::Convection,
            }],
        },
        initial: vec![FieldTerm {
            coef: mono("xi2", 1.0, &[(1, 1)]),
            field: SpatialFn::Bubble {
                scale: 0.5,
                lo: vec![0.0],
                hi: vec![1.0],
            },
        }],
        lifting: vec![],
    }
}

fn allen_cahn() -> ParametricProblem {
    ParametricProblem {
        name: "allen-cahn".into(),
        domain: Domain {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        },
        t_final: 1.0,
        parameter_box: vec![(0.1, 0.2)],
        affine: AffineExpansion {
            constant: vec![],
            linear: vec![
                LinearTerm {
                    coef: mono("xi^2", 1.0, &[(0, 2)]),
                    op: LinearOp::Laplacian,
                },
                LinearTerm {
                    coef: c("1", 1.0),
                    op: LinearOp::Mass,
                },
            ],
            nonlinear: vec![NonlinearTerm {
                coef: c("1", 1.0),
                op: NonlinearOp::Cubic,
            }],
        },
        initial: vec![FieldTerm {
            coef: c("1", 1.0),
            field: SpatialFn::Bubble {
                scale: 5f64.sqrt(),
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
        }],
        lifting: vec![],
    }
}

/// Problem and reference settings.
pub fn build(id: BenchmarkId) -> (ParametricProblem, BenchmarkSpec) {
    build_tier(id, Tier::Full)
}

pub fn build_tier(id: BenchmarkId, tier: Tier) -> (ParametricProblem, BenchmarkSpec) {
    let problem = match id {
        BenchmarkId::ReactionDiffusion => reaction_diffusion(),
        BenchmarkId::Heat2d => heat2d(),
        BenchmarkId::Burgers => burgers(),
        BenchmarkId::AllenCahn => allen_cahn(),
    };
    let lengths: Vec<f64> = problem.domain.lo.iter().zip(&problem.domain.hi).map(|(a, b)| b - a).collect();
    let ci = tier == Tier::Ci;
    let (h, tau, training_size, test_size, fixed_times, n_list) = match id {
        BenchmarkId::ReactionDiffusion => (0.02, 1e-3, 11, if ci { 100 } else { 1000 }, vec![], vec![1, 2, 3, 4, 5, 6, 7]),
        BenchmarkId::Heat2d => (
            if ci { PI / 25.0 } else { PI / 50.0 },
            if ci { 1e-3 } else { 1e-4 },
            12,
            if ci { 100 } else { 1000 },
            vec![],
            vec![2, 4, 6, 8, 10],
        ),
        BenchmarkId::Burgers => (0.01, 1e-4, 12, if ci { 100 } else { 1000 }, vec![1.0, 2.0], vec![2, 4, 6, 8, 10]),
        BenchmarkId::AllenCahn => (
            0.05,
            if ci { 1e-3 } else { 1e-4 },
            8,
            if ci { 50 } else { 1000 },
            vec![],
            vec![1, 2, 3, 4, 5, 6],
        ),
    };
    let spec = BenchmarkSpec {
        id,
        tier,
        mesh: MeshSpec::from_spacing(&lengths, h),
        h,
        tau,
        t_final: problem.t_final,
        training_size,
        test_size,
        training_seed: 1,
        test_seed: 2,
        fixed_times,
        n_list,
    };
    (problem, spec)
}

/// Training and test parameters of a benchmark.
pub fn parameter_sets(problem: &ParametricProblem, spec: &BenchmarkSpec) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    Ok((
        problem.sample_parameters(spec.training_size, spec.training_seed, SamplingLaw::Uniform)?,
        problem.sample_parameters(spec.test_size, spec.test_seed, SamplingLaw::Uniform)?,
    ))
}

#[derive(Clone, Debug)]
pub struct TableResult {
    pub id: BenchmarkId,
    pub method: Method,
    pub model: ReducedModel,
    pub offline_seconds: f64,
    /// One report per entry of the N list that the model can serve.
    pub reports: Vec<ErrorReport>,
}

/// One offline run up to `max(N)` followed by the metric for every `N`.
pub fn run_table(
    problem: &ParametricProblem,
    spec: &BenchmarkSpec,
    disc: &Discretization,
    cfg: &OfflineConfig,
) -> Result<TableResult> {
    let grid = spec.grid()?;
    let (training, test) = parameter_sets(problem, spec)?;
    let n_max = spec.n_list.iter().copied().max().unwrap_or(1);
    let cfg = OfflineConfig {
        n_max,
        ..cfg.clone()
    };
    let t0 = Instant::now();
    let model = run_offline(problem, disc, &grid, &training, &cfg).map_err(|f| f.error)?;
    let offline_seconds = t0.elapsed().as_secs_f64();
    let n_list: Vec<usize> = spec.n_list.iter().copied().filter(|&n| n <= model.n_terms()).collect();
    if n_list.len() < spec.n_list.len() {
        log::warn!(
            "{}: the greedy stopped at {} terms ({}); larger N are skipped",
            spec.id,
            model.n_terms(),
            model.trace.stop
        );
    }
    let reports = evaluate_error_metric(&model, disc, &test, &n_list, &spec.fixed_times)?;
    Ok(TableResult {
        id: spec.id,
        method: cfg.method,
        model,
        offline_seconds,
        reports,
    })
}

/// Convenience: discretization, offline and tables with the given strategy.
pub fn run_benchmark(id: BenchmarkId, tier: Tier, method: Method, strategy: Strategy) -> Result<TableResult> {
    let (problem, spec) = build_tier(id, tier);
    let disc = Discretization::new(&problem, &spec.mesh)?;
    let cfg = OfflineConfig {
        method,
        strategy,
        ..OfflineConfig::default()
    };
    run_table(&problem, &spec, &disc, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_counts() {
        let (b, _) = build(BenchmarkId::Burgers);
        assert_eq!((b.n_a(), b.n_h(), b.n_c()), (1, 1, 0));
        let (h, s) = build(BenchmarkId::Heat2d);
        assert_eq!((h.n_a(), h.n_c(), h.n_h()), (1, 11, 0));
        assert_eq!(s.mesh.cells, vec![50, 50]);
        let (a, _) = build(BenchmarkId::AllenCahn);
        assert_eq!(a.parameter_box, vec![(0.1, 0.2)]);
        for id in BenchmarkId::ALL {
            let (p, _) = build(id);
            p.validate().unwrap();
            assert_eq!(id.as_str().parse::<BenchmarkId>().unwrap(), id);
        }
    }

    #[test]
    fn reaction_diffusion_initial_is_homogeneous_zero() {
        let (p, _) = build(BenchmarkId::ReactionDiffusion);
        let xi = [2.0, 1.0, 3.0, 1.5];
        let c = p.homogeneous_initial_coefficients(&xi);
        assert_eq!(c, vec![1.5, -1.5]);
        let k = p.evaluate_coefficients(&xi).unwrap();
        assert_eq!(k.c, vec![3.0, -3.0]);
        assert_eq!(k.a, vec![-2.0, 2.0]);
    }
}
