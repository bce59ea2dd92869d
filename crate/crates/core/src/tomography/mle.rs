//! Maximum-likelihood tomography over physical density matrices.
//!
//! A lower-triangular `T` (real diagonal, complex sub-diagonal: nine real
//! parameters) defines `ρ(t) = T†T / Tr(T†T)`, positive semidefinite with
//! unit trace for every `t`. The fit minimizes `Σ (R(ρ(t)) − R)² / σ²` with
//! simplex descent from a warm start (projected linear estimate) and from
//! seeded random restarts.

use nalgebra::{DMatrix, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::optics::SetupConfig;
use crate::optim::{nelder_mead, SimplexOptions};
use crate::records::MeasurementRecord;
use crate::state::{maximally_mixed, PathDensityMatrix, PATH_PARAMS};
use crate::tomography::linear::self_consistent_fit;
use crate::tomography::model::{chi_square, path_design_condition, prepare_path_records, require_design};
use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct MleOptions {
    /// Random restarts in addition to the warm start.
    pub restarts: usize,
    /// Total objective evaluations across all runs.
    pub max_evaluations: usize,
    pub stall_steps: usize,
    pub stall_tolerance: f64,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_evaluations: 100_000,
            stall_steps: 200,
            stall_tolerance: 1e-12,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleFit {
    pub rho: PathDensityMatrix,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl MleFit {
    /// Turns a budget-exhausted fit into [`Error::NonConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                evaluations: self.evaluations,
                objective: self.objective,
            })
        }
    }
}

/// Lower-triangular `T` from nine parameters.
pub fn cholesky_factor(t: &[f64]) -> Matrix3<C64> {
    let mut m = Matrix3::zeros();
    m[(0, 0)] = C64::new(t[0], 0.0);
    m[(1, 1)] = C64::new(t[1], 0.0);
    m[(2, 2)] = C64::new(t[2], 0.0);
    m[(1, 0)] = C64::new(t[3], t[4]);
    m[(2, 0)] = C64::new(t[5], t[6]);
    m[(2, 1)] = C64::new(t[7], t[8]);
    m
}

/// `T†T / Tr(T†T)`; `None` when `T` vanishes.
pub fn density_from_params(t: &[f64]) -> Option<PathDensityMatrix> {
    let f = cholesky_factor(t);
    let rho = f.adjoint() * f;
    let tr = rho.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return None;
    }
    Some(PathDensityMatrix::from_hermitian(rho / C64::new(tr, 0.0)))
}

/// Parameters `t` with `ρ(t) ≈ rho`. A small multiple of the identity keeps
/// the factorization regular for rank-deficient states.
pub fn params_from_density(rho: &PathDensityMatrix) -> [f64; PATH_PARAMS] {
    let physical = rho.project_physical();
    // ρ = J L L† J with L the Cholesky factor of JρJ, so T = J L† J.
    let j = |k: usize| 2 - k;
    let regular = physical.matrix() + Matrix3::identity() * C64::new(1e-8, 0.0);
    let flipped = Matrix3::from_fn(|r, c| regular[(j(r), j(c))]);
    let l = flipped
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(Matrix3::identity);
    let t = Matrix3::from_fn(|r, c| l[(j(c), j(r))].conj());
    [
        t[(0, 0)].re,
        t[(1, 1)].re,
        t[(2, 2)].re,
        t[(1, 0)].re,
        t[(1, 0)].im,
        t[(2, 0)].re,
        t[(2, 0)].im,
        t[(2, 1)].re,
        t[(2, 1)].im,
    ]
}

pub(crate) struct MultistartResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Runs simplex descent from `warm` and from `opts.restarts` Gaussian random
/// starts, re-seeding each run's simplex at its optimum until it stops
/// improving. Returns the best point found.
pub(crate) fn multistart<F>(objective: F, warm: &[f64], opts: &MleOptions) -> MultistartResult
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, 0.6).expect("valid normal");
    let mut starts = vec![warm.to_vec()];
    for _ in 0..opts.restarts {
        starts.push((0..warm.len()).map(|_| normal.sample(&mut rng)).collect());
    }
    let per_run = opts.max_evaluations / starts.len().max(1);

    let mut best: Option<MultistartResult> = None;
    let mut used = 0usize;
    for start in starts {
        let mut x = start;
        let mut value = f64::INFINITY;
        let mut run_used = 0usize;
        let mut converged = false;
        let mut step = 0.2;
        while run_used < per_run && used < opts.max_evaluations {
            let budget = (per_run - run_used).min(opts.max_evaluations - used);
            let res = nelder_mead(
                &objective,
                &x,
                &SimplexOptions {
                    max_evaluations: budget,
                    stall_steps: opts.stall_steps,
                    stall_tolerance: opts.stall_tolerance,
                    initial_step: step,
                },
            );
            run_used += res.evaluations;
            used += res.evaluations;
            let improvement = value - res.value;
            converged = res.converged;
            if res.value <= value {
                x = res.x;
                value = res.value;
            }
            if !res.converged || improvement.abs() < opts.stall_tolerance.max(1e-15 * value.abs()) {
                break;
            }
            step = (step * 0.3).max(1e-6);
        }
        let candidate = MultistartResult {
            x,
            value,
            evaluations: 0,
            converged,
        };
        if best.as_ref().is_none_or(|b| candidate.value < b.value) {
            best = Some(candidate);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = used;
    best
}

/// Fits a physical ρ to measurement records.
pub fn mle_reconstruct(records: &[MeasurementRecord], cfg: &SetupConfig, opts: &MleOptions) -> Result<MleFit> {
    let prepared = prepare_path_records(records, cfg)?;
    require_design(path_design_condition(&prepared), PATH_PARAMS, prepared.len())?;

    let warm = self_consistent_fit(&prepared)
        .map(|fit| {
            if fit.raw.trace() > 0.0 {
                fit.raw.normalized_by_trace().project_physical()
            } else {
                maximally_mixed()
            }
        })
        .unwrap_or_else(|_| maximally_mixed());
    let warm_params = params_from_density(&warm);

    let objective = |t: &[f64]| match density_from_params(t) {
        Some(rho) => chi_square(&prepared, &DMatrix::from_fn(3, 3, |r, c| rho.matrix()[(r, c)])),
        None => f64::INFINITY,
    };
    let best = multistart(objective, &warm_params, opts);
    let rho = density_from_params(&best.x).unwrap_or_else(maximally_mixed);
    Ok(MleFit {
        rho,
        objective: best.value,
        evaluations: best.evaluations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{noon_state, tilted_noon};

    #[test]
    fn params_round_trip_through_density() {
        let rho = tilted_noon(0.4, 0.8).mix(&maximally_mixed(), 0.7);
        let back = density_from_params(&params_from_density(&rho)).unwrap();
        assert!(rho.max_abs_diff(&back) < 1e-7);
    }

    #[test]
    fn params_for_pure_state() {
        let back = density_from_params(&params_from_density(&noon_state())).unwrap();
        assert!(noon_state().max_abs_diff(&back) < 1e-7);
    }

    #[test]
    fn parameterized_states_are_physical() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 2.0).unwrap();
            let t: Vec<f64> = (0..9).map(|_| normal.sample(&mut rng)).collect();
            let rho = density_from_params(&t).unwrap();
            assert!(rho.is_physical(1e-12));
        }
        assert!(density_from_params(&[0.0; 9]).is_none());
    }
}
