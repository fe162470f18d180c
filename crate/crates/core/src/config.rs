//! TOML problem files for user-defined problems.
//!
//! ```toml
//! [problem]
//! name = "decay"
//! t_final = 1.0
//! parameter_box = [[1.0, 2.0]]
//! domain = { lo = [0.0], hi = [1.0] }
//!
//! [[problem.affine.linear]]
//! coef = { id = "xi1", scale = 1.0, powers = [[0, 1]] }
//! op = "laplacian"
//!
//! [[problem.initial]]
//! coef = { id = "1", scale = 1.0, powers = [] }
//! field = { kind = "bubble", scale = 1.0, lo = [0.0], hi = [1.0] }
//!
//! [discretization]
//! h = 0.02
//! tau = 1e-3
//!
//! [training]
//! size = 10
//! seed = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::MeshSpec;
use crate::error::{DvsError, Result};
use crate::fom::TimeGrid;
use crate::problem::{ParametricProblem, SamplingLaw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    /// Uniform mesh width; ignored when `cells` is given.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub law: SamplingLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub problem: ParametricProblem,
    pub discretization: DiscretizationConfig,
    pub training: SampleConfig,
    #[serde(default)]
    pub test: Option<SampleConfig>,
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = toml::from_str(text).map_err(|e| DvsError::Config(e.to_string()))?;
        cfg.problem.validate()?;
        cfg.mesh()?;
        cfg.grid()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DvsError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn mesh(&self) -> Result<MeshSpec> {
        let d = &self.discretization;
        let dim = self.problem.domain.dim();
        match (&d.cells, d.h) {
            (Some(c), _) if c.len() == dim => Ok(MeshSpec { cells: c.clone() }),
            (Some(c), _) => Err(DvsError::Config(format!("{} cell counts for a {dim}-d domain", c.len()))),
            (None, Some(h)) if h > 0.0 => {
                let lengths: Vec<f64> = self
                    .problem
                    .domain
                    .lo
                    .iter()
                    .zip(&self.problem.domain.hi)
                    .map(|(a, b)| b - a)
                    .collect();
                Ok(MeshSpec::from_spacing(&lengths, h))
            }
            _ => Err(DvsError::Config("discretization needs `cells` or a positive `h`".into())),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        if !(self.discretization.tau > 0.0) {
            return Err(DvsError::Config("tau must be positive".into()));
        }
        TimeGrid::with_step(self.problem.t_final, self.discretization.tau)
    }

    pub fn training_set(&self) -> Result<Vec<Vec<f64>>> {
        let t = &self.training;
        self.problem.sample_parameters(t.size, t.seed, t.law)
    }

    pub fn test_set(&self, default_size: usize, default_seed: u64) -> Result<Vec<Vec<f64>>> {
        match &self.test {
            Some(t) => self.problem.sample_parameters(t.size, t.seed, t.law),
            None => self.problem.sample_parameters(default_size, default_seed, SamplingLaw::Uniform),
        }
    }
}
