//! Static-coefficient baseline `u_N = Σ ζ_i(ξ) g_i(x, t)`.
//!
//! The spatial bases come from the same error equation as the dynamical
//! method (with time-constant coefficient rows); `ζ_k(ξ)` is the ratio of
//! the projected residual to the bilinear form at one transition, chosen
//! among a few seeded candidates by the error it leaves on a validation
//! subset of the training set.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{DvsError, Result};
use crate::estimator::trajectory_norm;
use crate::fom::{TimeGrid, Trajectory};
use crate::model::{Method, ReducedModel, Strategy};
use crate::offline::{run_offline, OfflineConfig, OfflineFailure};
use crate::online::vs_value;
use crate::problem::{Coefficients, ParametricProblem};
use crate::record::ProjectionRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VsConfig {
    /// Candidate transitions per term.
    pub candidates: usize,
    /// Leading training samples used to rank the candidates.
    pub validation: usize,
    pub seed: u64,
}

impl Default for VsConfig {
    fn default() -> Self {
        VsConfig {
            candidates: 8,
            validation: 4,
            seed: 11,
        }
    }
}

/// Distinct transitions `n` (of `0..steps`), sorted.
pub fn vs_candidates(steps: usize, count: usize, seed: u64) -> Vec<usize> {
    let count = count.clamp(1, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, steps, count).into_vec();
    v.sort_unstable();
    v
}

/// `ζ_k(ξ)` of a stored term; `prev` are the earlier `ζ_j(ξ)`.
pub fn vs_zeta(rec: &ProjectionRecord, kappa: &Coefficients, prev: &[f64], step: usize, tau: f64) -> Option<f64> {
    vs_value(rec, kappa, prev, step, tau)
}

/// Candidate leaving the smallest mean error on the validation samples.
/// Each entry of `val` is `(u − u_{k−1}, κ, ζ_{j<k})` at one sample.
pub fn choose_vs_step(
    disc: &Discretization,
    grid: &TimeGrid,
    g: &Trajectory,
    rec: &ProjectionRecord,
    candidates: &[usize],
    val: &[(&Trajectory, &Coefficients, Vec<f64>)],
    tau: f64,
) -> Result<usize> {
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let mut best: Option<(f64, usize)> = None;
    for &n in candidates {
        let mut total = 0.0;
        let mut ok = true;
        for (e, kappa, prev) in val {
            let Some(z) = vs_value(rec, kappa, prev, n, tau) else {
                ok = false;
                break;
            };
            let mut d = (*e).clone();
            crate::online::subtract_term(&mut d, g, &vec![z; grid.nodes()]);
            total += trajectory_norm(disc, grid, &d);
        }
        if !ok {
            log::debug!("candidate transition {n} discarded: vanishing bilinear form");
            continue;
        }
        let mean = total / val.len() as f64;
        if best.is_none_or(|(b, _)| mean < b) {
            best = Some((mean, n));
        }
    }
    best.map(|(_, n)| n)
        .ok_or_else(|| DvsError::State("every candidate transition has a vanishing bilinear form".into()))
}

/// Offline stage of the baseline: true-error greedy with static rows.
pub fn run_vs_offline(
    problem: &ParametricProblem,
    disc: &Discretization,
    grid: &TimeGrid,
    training: &[Vec<f64>],
    cfg: &OfflineConfig,
) -> std::result::Result<ReducedModel, OfflineFailure> {
    let cfg = OfflineConfig {
        method: Method::Vs,
        strategy: Strategy::TrueError,
        ..cfg.clone()
    };
    run_offline(problem, disc, grid, training, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_are_distinct_and_seeded() {
        let a = vs_candidates(1000, 8, 3);
        assert_eq!(a.len(), 8);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, vs_candidates(1000, 8, 3));
        assert_eq!(vs_candidates(5, 8, 1).len(), 5);
    }
}
