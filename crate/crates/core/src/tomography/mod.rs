//! Reconstruction of the 3×3 path density matrix.
//!
//! * [`linear`]: inversion of the nine-rate transfer matrix.
//! * [`mle`]: weighted least-squares likelihood over a Cholesky
//!   parameterization, for minimal or overcomplete record sets.
//! * [`scan`]: nine-record fits over a grid of phase pairs.

pub mod linear;
pub mod mle;
pub(crate) mod model;
pub mod scan;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};

use crate::correlations::{observable_operator, StagePropagator, COMPLETE_SET, COMPLETE_SET_PHASE};
use crate::optics::SetupConfig;
use crate::state::{PathDensityMatrix, COHERENCE_PAIRS, PATH_PARAMS};
use crate::{Error, Result, C64};

pub use linear::{linear_invert, linear_reconstruct, LinearReconstruction};
pub use mle::{mle_reconstruct, MleFit, MleOptions};
pub use model::design_condition;
pub use scan::{fidelity_scan, ScanCell, ScanOptions, ScanResult, SeparationStat};

/// Designs at or above this condition number are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e10;

/// Row of coefficients `a` such that `Tr[ρ O] = a · vectorize(ρ)` for a
/// Hermitian `O`.
pub fn design_row(op: &Matrix3<C64>) -> [f64; PATH_PARAMS] {
    let mut row = [0.0; PATH_PARAMS];
    for k in 0..3 {
        row[k] = op[(k, k)].re;
    }
    for (n, &(r, c)) in COHERENCE_PAIRS.iter().enumerate() {
        let z = op[(c, r)];
        row[3 + 2 * n] = 2.0 * z.re;
        row[4 + 2 * n] = -2.0 * z.im;
    }
    row
}

/// Linear map from `vectorize(ρ)` to the raw minimal complete set.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub matrix: SMatrix<f64, 9, 9>,
    pub condition_number: f64,
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn build_transfer_matrix(cfg: &SetupConfig, phi1: f64, phi2: f64) -> Result<TransferMatrix> {
    let stages = [StagePropagator::new(cfg, phi1)?, StagePropagator::new(cfg, phi2)?];
    let mut matrix = SMatrix::<f64, 9, 9>::zeros();
    for (k, kind) in COMPLETE_SET.iter().enumerate() {
        let stage = &stages[usize::from(COMPLETE_SET_PHASE[k] == 2)];
        let op = observable_operator(kind.observable(), Some(stage))?;
        let row = design_row(&op);
        for (c, v) in row.iter().enumerate() {
            matrix[(k, c)] = *v;
        }
    }
    let condition_number = condition_number(&DMatrix::from_fn(9, 9, |r, c| matrix[(r, c)]));
    Ok(TransferMatrix {
        matrix,
        condition_number,
    })
}

/// `⟨ψ|ρ|ψ⟩` for a normalized pure target.
pub fn fidelity(rho: &PathDensityMatrix, target: &Vector3<C64>) -> f64 {
    (target.adjoint() * rho.matrix() * target)[(0, 0)].re
}

/// HOM visibility and g²-corrected wavepacket overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceMetrics {
    pub visibility: f64,
    pub corrected_overlap: f64,
}

/// Visibility `V = 1 − 2·R01` from the normalized source coincidences and
/// the overlap corrected for multi-photon background, `V + g²(0)`.
pub fn source_metrics(r01_normalized: f64, g2: f64) -> Result<SourceMetrics> {
    if !(0.0..=1.0).contains(&r01_normalized) {
        return Err(Error::OutOfRange(format!("normalized R01 {r01_normalized} not in [0, 1]")));
    }
    if !(0.0..1.0).contains(&g2) {
        return Err(Error::OutOfRange(format!("g2 {g2} not in [0, 1)")));
    }
    let visibility = 1.0 - 2.0 * r01_normalized;
    Ok(SourceMetrics {
        visibility,
        corrected_overlap: visibility + g2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::predict_R_comp;
    use crate::state::{maximally_mixed, noon_amplitudes, noon_state, tilted_noon, PathDensityMatrix};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn transfer_matrix_reproduces_forward_model() {
        let cfg = SetupConfig::measured_source(0.6);
        let (p1, p2) = (0.2, 1.3);
        let m = build_transfer_matrix(&cfg, p1, p2).unwrap();
        let rho = tilted_noon(0.5, 1.2).mix(&maximally_mixed(), 0.8);
        let x = nalgebra::SVector::<f64, 9>::from_row_slice(&rho.vectorize());
        let via_matrix = m.matrix * x;
        let via_model = predict_R_comp(&rho, &cfg, p1, p2).unwrap();
        for k in 0..9 {
            assert!((via_matrix[k] - via_model[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_separations() {
        let cfg = SetupConfig::balanced_lossless();
        assert!(build_transfer_matrix(&cfg, 0.3, 0.3 + FRAC_PI_2).unwrap().condition_number > 1e12);
        assert!(build_transfer_matrix(&cfg, 0.0, FRAC_PI_4).unwrap().condition_number < 1e4);
    }

    #[test]
    fn condition_is_symmetric_in_phases() {
        let cfg = SetupConfig::measured_source(0.6);
        let a = build_transfer_matrix(&cfg, 0.4, 1.5).unwrap().condition_number;
        let b = build_transfer_matrix(&cfg, 1.5, 0.4).unwrap().condition_number;
        assert!((a - b).abs() / a < 1e-9);
    }

    #[test]
    fn quarter_pair_confuses_noon_and_mixture() {
        // The (π/4, 3π/4) design sees only the imaginary part of the
        // |2,0⟩–|0,2⟩ coherence, which vanishes for both states.
        let cfg = SetupConfig::balanced_lossless();
        let m = build_transfer_matrix(&cfg, FRAC_PI_4, 3.0 * FRAC_PI_4).unwrap();
        let noon = nalgebra::SVector::<f64, 9>::from_row_slice(&noon_state().vectorize());
        let mixed = nalgebra::SVector::<f64, 9>::from_row_slice(&crate::state::bunched_mixture().vectorize());
        let diff = m.matrix * (noon - mixed);
        assert!(diff.amax() < 1e-14);
        assert!(m.condition_number > SINGULAR_CONDITION);
    }

    #[test]
    fn fidelity_examples() {
        let target = noon_amplitudes();
        assert!((fidelity(&noon_state(), &target) - 1.0).abs() < 1e-15);
        assert!((fidelity(&maximally_mixed(), &target) - 1.0 / 3.0).abs() < 1e-15);
        assert!((fidelity(&PathDensityMatrix::diagonal(1.0, 0.0, 0.0), &target) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn source_metric_examples() {
        assert_eq!(source_metrics(0.0, 0.0).unwrap(), SourceMetrics { visibility: 1.0, corrected_overlap: 1.0 });
        assert_eq!(source_metrics(0.5, 0.0).unwrap(), SourceMetrics { visibility: 0.0, corrected_overlap: 0.0 });
        let m = source_metrics((1.0 - 0.945) / 2.0, 0.03).unwrap();
        assert!((m.visibility - 0.945).abs() < 1e-12);
        assert!((m.corrected_overlap - 0.975).abs() < 1e-12);
        assert!(matches!(source_metrics(1.2, 0.0), Err(Error::OutOfRange(_))));
        assert!(matches!(source_metrics(0.1, 1.0), Err(Error::OutOfRange(_))));
    }
}
