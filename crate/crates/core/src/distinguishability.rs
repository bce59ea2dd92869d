//! Photons carrying a hidden label.
//!
//! Each photon is tagged `a` or `b`; the optics act identically on both. A
//! two-photon state with one photon per label is a wavefunction `ψ(o, p)`
//! (photon `a` in mode `o`, photon `b` in mode `p`) that evolves as
//! `ψ → U ψ Uᵀ`. The visible basis is
//!
//! ```text
//! |2,0⟩ = ψ(0,0),  ψ⁺ = (ψ(0,1) + ψ(1,0))/√2,  |0,2⟩ = ψ(1,1),  ψ⁻ = (ψ(0,1) − ψ(1,0))/√2
//! ```
//!
//! Exchange-symmetric states are exactly the bosonic two-photon states; the
//! antisymmetric `ψ⁻` is only reachable by distinguishable photons. Since
//! every detection operator is label-blind, rates never couple the
//! symmetric block to `ψ⁻`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix3, Matrix4};

use crate::correlations::{clamp_rate, normalize, Observable};
use crate::optics::{build_analysis_setup, element_transform, Element, SetupConfig};
use crate::records::MeasurementRecord;
use crate::state::{PathDensityMatrix, PATH_PARAMS};
use crate::tomography::design_row;
use crate::tomography::linear::self_consistent_fit;
use crate::tomography::mle::{density_from_params, multistart, params_from_density, MleOptions};
use crate::tomography::condition_number;
use crate::tomography::model::{chi_square, prepare_path_records, require_design, PreparedRecord};
use crate::{Error, Result, C64};

/// Parameters of the visible density matrix: nine for the symmetric block
/// and one antisymmetric weight.
pub const VIS_PARAMS: usize = 10;

/// Two-photon wavefunction with one photon per label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFockVector {
    /// `amplitudes[(o, p)]`: photon `a` in mode `o`, photon `b` in mode `p`.
    pub amplitudes: DMatrix<C64>,
}

impl LabeledFockVector {
    pub fn mode_count(&self) -> usize {
        self.amplitudes.nrows()
    }

    /// `ψ → U ψ Uᵀ`
    pub fn evolve(&self, u: &DMatrix<C64>) -> Self {
        Self {
            amplitudes: u * &self.amplitudes * u.transpose(),
        }
    }

    /// Exchanges the roles of labels `a` and `b`.
    pub fn swap_labels(&self) -> Self {
        Self {
            amplitudes: self.amplitudes.transpose(),
        }
    }

    pub fn pad_modes(&self, mode_count: usize) -> Self {
        let mut amplitudes = DMatrix::zeros(mode_count, mode_count);
        let k = self.mode_count();
        amplitudes.view_mut((0, 0), (k, k)).copy_from(&self.amplitudes);
        Self { amplitudes }
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// `|2,0⟩, ψ⁺, |0,2⟩, ψ⁻` over two modes.
pub fn visible_basis() -> [LabeledFockVector; 4] {
    let s = FRAC_1_SQRT_2;
    let make = |entries: [f64; 4]| LabeledFockVector {
        amplitudes: DMatrix::from_row_slice(2, 2, &entries.map(|v| C64::new(v, 0.0))),
    };
    [
        make([1.0, 0.0, 0.0, 0.0]),
        make([0.0, s, s, 0.0]),
        make([0.0, 0.0, 0.0, 1.0]),
        make([0.0, s, -s, 0.0]),
    ]
}

/// Label-blind detection weight of outcome (a in `o`, b in `p`).
fn weight(observable: Observable, o: usize, p: usize) -> f64 {
    match observable {
        Observable::Coincidence(i, j) => {
            let (i, j) = (i.slot(), j.slot());
            f64::from(u8::from(o == i && p == j) + u8::from(o == j && p == i))
        }
        // ½ Σ over label pairs of â†ᵢₓâ†ᵢᵧâᵢᵧâᵢₓ; the two mixed-label terms survive.
        Observable::Auto(i) => f64::from(u8::from(o == i.slot() && p == i.slot())),
        Observable::Singles(i) => f64::from(u8::from(o == i.slot()) + u8::from(p == i.slot())),
    }
}

fn observable_is_direct(observable: Observable) -> bool {
    match observable {
        Observable::Coincidence(i, _) | Observable::Auto(i) | Observable::Singles(i) => i.is_direct(),
    }
}

/// Visible basis states propagated through the analysis interferometer.
#[derive(Clone, Debug)]
pub struct VisStage {
    outputs: [LabeledFockVector; 4],
}

impl VisStage {
    pub fn new(cfg: &SetupConfig, phi: f64) -> Result<Self> {
        let u = build_analysis_setup(cfg, phi)?;
        Ok(Self::through(u.matrix()))
    }

    /// Propagates through an arbitrary transform whose first two modes are
    /// the input paths.
    pub fn through(u: &DMatrix<C64>) -> Self {
        let m = u.nrows();
        Self {
            outputs: visible_basis().map(|v| v.pad_modes(m).evolve(u)),
        }
    }

    fn direct() -> Self {
        Self {
            outputs: visible_basis(),
        }
    }

    /// Operator on the visible basis, `O[k][l] = Σ w(o,p) ψₖ*(o,p) ψₗ(o,p)`.
    pub fn operator(&self, observable: Observable) -> Matrix4<C64> {
        let m = self.outputs[0].mode_count();
        Matrix4::from_fn(|k, l| {
            let (a, b) = (&self.outputs[k].amplitudes, &self.outputs[l].amplitudes);
            let mut acc = C64::new(0.0, 0.0);
            for o in 0..m {
                for p in 0..m {
                    let w = weight(observable, o, p);
                    if w != 0.0 {
                        acc += a[(o, p)].conj() * b[(o, p)] * w;
                    }
                }
            }
            acc
        })
    }
}

/// Operator of an observable on the visible basis; `stage` is needed for
/// detectors behind the interferometer.
pub fn vis_observable_operator(observable: Observable, stage: Option<&VisStage>) -> Result<Matrix4<C64>> {
    if observable_is_direct(observable) {
        Ok(VisStage::direct().operator(observable))
    } else {
        let stage = stage.ok_or_else(|| {
            Error::InvalidParameter("observable behind the interferometer needs a stage".into())
        })?;
        Ok(stage.operator(observable))
    }
}

/// Visible density matrix: a symmetric 3×3 block over `|2,0⟩, ψ⁺, |0,2⟩`
/// and an antisymmetric population, with no coherence between them.
#[derive(Clone, Debug, PartialEq)]
pub struct VisDensityMatrix {
    pub sym_block: Matrix3<C64>,
    pub antisym_pop: f64,
}

impl VisDensityMatrix {
    pub fn new(sym_block: Matrix3<C64>, antisym_pop: f64) -> Result<Self> {
        let herm = (sym_block - sym_block.adjoint()).map(|z| z.norm()).max();
        if herm > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "symmetric block is not Hermitian (deviation {herm:.3e})"
            )));
        }
        let out = Self {
            sym_block: (sym_block + sym_block.adjoint()) * C64::new(0.5, 0.0),
            antisym_pop,
        };
        if !out.is_physical(1e-9) {
            return Err(Error::InvalidParameter(
                "visible density matrix is not positive with unit trace".into(),
            ));
        }
        Ok(out)
    }

    /// Indistinguishable photons only.
    pub fn from_path(rho: &PathDensityMatrix) -> Self {
        Self {
            sym_block: *rho.matrix(),
            antisym_pop: 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.sym_block.trace().re + self.antisym_pop
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        let sym = PathDensityMatrix::from_hermitian(self.sym_block);
        (self.trace() - 1.0).abs() <= tol
            && sym.eigenvalues()[0] >= -tol
            && self.antisym_pop >= -tol
            && self.antisym_pop <= 1.0 + tol
    }

    /// Full 4×4 matrix in the order `|2,0⟩, ψ⁺, |0,2⟩, ψ⁻`.
    pub fn to_matrix4(&self) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        m.view_mut((0, 0), (3, 3)).copy_from(&self.sym_block);
        m[(3, 3)] = C64::new(self.antisym_pop, 0.0);
        m
    }

    /// Symmetric block as a path state (`ψ⁺ → |1,1⟩`); only meaningful when
    /// the antisymmetric population vanishes.
    pub fn collapse_to_path(&self) -> Result<PathDensityMatrix> {
        if self.antisym_pop.abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "antisymmetric population {} has no path-state counterpart",
                self.antisym_pop
            )));
        }
        Ok(PathDensityMatrix::from_hermitian(self.sym_block))
    }

    pub fn psi_plus_pop(&self) -> f64 {
        self.sym_block[(1, 1)].re
    }
}

/// `Re Tr[ρ O]` over the visible basis.
pub fn vis_expectation(rho: &Matrix4<C64>, op: &Matrix4<C64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            acc += (rho[(i, j)] * op[(j, i)]).re;
        }
    }
    acc
}

pub fn predict_vis_observable(
    rho: &VisDensityMatrix,
    cfg: &SetupConfig,
    phi: f64,
    observable: Observable,
) -> Result<f64> {
    let stage = if observable_is_direct(observable) {
        None
    } else {
        Some(VisStage::new(cfg, phi)?)
    };
    let op = vis_observable_operator(observable, stage.as_ref())?;
    clamp_rate(vis_expectation(&rho.to_matrix4(), &op))
}

/// Label-resolved coincidence (`i ≠ j`) or auto-correlation (`i = j`) rate.
pub fn predict_rate_vis(rho: &VisDensityMatrix, cfg: &SetupConfig, phi: f64, i: &str, j: &str) -> Result<f64> {
    let observable = Observable::pair(i.parse()?, j.parse()?)?;
    predict_vis_observable(rho, cfg, phi, observable)
}

/// Side-peak normalized version of [`predict_rate_vis`].
pub fn normalized_rate_vis(rho: &VisDensityMatrix, cfg: &SetupConfig, phi: f64, i: &str, j: &str) -> Result<f64> {
    let (di, dj) = (i.parse()?, j.parse()?);
    let rate = predict_vis_observable(rho, cfg, phi, Observable::pair(di, dj)?)?;
    let si = predict_vis_observable(rho, cfg, phi, Observable::Singles(di))?;
    let sj = predict_vis_observable(rho, cfg, phi, Observable::Singles(dj))?;
    normalize(rate, si, sj, if di == dj { 0.5 } else { 1.0 }, di, dj)
}

/// Two single photons with mean wavepacket overlap `overlap` meeting on the
/// source splitter. The input splits into an exchange-symmetric part of
/// weight `(1+m)/2` and an antisymmetric part of weight `(1−m)/2`, each
/// propagated through the splitter.
pub fn hom_source_vis(hom_reflectivity: f64, overlap: f64) -> Result<VisDensityMatrix> {
    if !(hom_reflectivity > 0.0 && hom_reflectivity < 1.0) {
        return Err(Error::OutOfRange(format!("homReflectivity {hom_reflectivity} not in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::OutOfRange(format!("overlap {overlap} not in [0, 1]")));
    }
    let labels = vec!["path0".to_string(), "path1".to_string()];
    let bs = element_transform(&Element::beam_splitter("path0", "path1", hom_reflectivity), &labels)?;
    let basis = visible_basis();
    let sym_out = basis[1].evolve(bs.matrix());
    let anti_out = basis[3].evolve(bs.matrix());
    let amps: Vec<C64> = [0, 1, 2].iter().map(|&k| basis[k].inner(&sym_out)).collect();
    let sym_weight = 0.5 * (1.0 + overlap);
    let anti_weight = 0.5 * (1.0 - overlap);
    let sym_block = Matrix3::from_fn(|r, c| amps[r] * amps[c].conj() * sym_weight);
    let antisym_pop = anti_weight * basis[3].inner(&anti_out).norm_sqr();
    Ok(VisDensityMatrix { sym_block, antisym_pop })
}

/// `(T†T ⊕ w²) / (Tr T†T + w²)` from ten parameters.
pub fn vis_from_params(t: &[f64]) -> Option<VisDensityMatrix> {
    let f = crate::tomography::mle::cholesky_factor(&t[..PATH_PARAMS]);
    let sym = f.adjoint() * f;
    let w2 = t[PATH_PARAMS] * t[PATH_PARAMS];
    let total = sym.trace().re + w2;
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some(VisDensityMatrix {
        sym_block: sym / C64::new(total, 0.0),
        antisym_pop: w2 / total,
    })
}

fn prepare_vis_records(records: &[MeasurementRecord], cfg: &SetupConfig) -> Result<Vec<PreparedRecord>> {
    cfg.validate()?;
    let mut cache: std::collections::HashMap<u64, VisStage> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        rec.validate()?;
        let stage = if rec.pair_kind.is_phase_dependent() {
            let key = rec.model_phase().to_bits();
            if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(key) {
                slot.insert(VisStage::new(cfg, rec.model_phase())?);
            }
            Some(&cache[&key])
        } else {
            None
        };
        let op = |o: Observable| -> Result<DMatrix<C64>> {
            let m = vis_observable_operator(o, stage)?;
            Ok(DMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
        };
        let (si, sj, factor) = rec.pair_kind.normalization();
        out.push(PreparedRecord {
            kind: rec.pair_kind,
            numerator: op(rec.pair_kind.observable())?,
            singles_i: op(si)?,
            singles_j: op(sj)?,
            factor,
            target: rec.normalized_rate,
            sigma: rec.sigma,
        });
    }
    Ok(out)
}

fn vis_design_condition(prepared: &[PreparedRecord]) -> f64 {
    if prepared.len() < VIS_PARAMS {
        return f64::INFINITY;
    }
    let m = DMatrix::from_fn(prepared.len(), VIS_PARAMS, |r, c| {
        let op = &prepared[r].numerator;
        if c < PATH_PARAMS {
            design_row(&Matrix3::from_fn(|i, j| op[(i, j)]))[c]
        } else {
            op[(3, 3)].re
        }
    });
    condition_number(&m)
}

#[derive(Clone, Debug)]
pub struct VisFit {
    pub rho: VisDensityMatrix,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Ten-parameter maximum-likelihood fit of the visible density matrix.
pub fn mle_reconstruct_vis(records: &[MeasurementRecord], cfg: &SetupConfig, opts: &MleOptions) -> Result<VisFit> {
    let prepared = prepare_vis_records(records, cfg)?;
    require_design(vis_design_condition(&prepared), VIS_PARAMS, prepared.len())?;

    let path_prepared = prepare_path_records(records, cfg)?;
    let warm_sym = self_consistent_fit(&path_prepared)
        .ok()
        .filter(|fit| fit.raw.trace() > 0.0)
        .map(|fit| fit.raw.normalized_by_trace().project_physical())
        .unwrap_or_else(crate::state::maximally_mixed);
    let mut warm: Vec<f64> = params_from_density(&warm_sym).to_vec();
    warm.push(0.2);

    let objective = |t: &[f64]| match vis_from_params(t) {
        Some(rho) => {
            let m = rho.to_matrix4();
            chi_square(&prepared, &DMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
        }
        None => f64::INFINITY,
    };
    let best = multistart(objective, &warm, opts);
    let rho = vis_from_params(&best.x).unwrap_or_else(|| {
        VisDensityMatrix::from_path(&density_from_params(&[1.0; 9]).expect("nonzero parameters"))
    });
    Ok(VisFit {
        rho,
        objective: best.value,
        evaluations: best.evaluations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlations::{predict_observable, Detector, RateKind};
    use crate::state::{noon_state, tilted_noon};

    fn hom_analyzer() -> DMatrix<C64> {
        let labels = vec!["path0".to_string(), "path1".to_string()];
        element_transform(&Element::beam_splitter("path0", "path1", 0.5), &labels)
            .unwrap()
            .matrix()
            .clone()
    }

    fn pure_vis(k: usize) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        m[(k, k)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn antisymmetric_pair_always_splits() {
        let stage = VisStage::through(&hom_analyzer());
        let op = stage.operator(Observable::Coincidence(Detector::Path0, Detector::Path1));
        assert!((vis_expectation(&pure_vis(3), &op) - 1.0).abs() < 1e-14);
        assert!(vis_expectation(&pure_vis(1), &op).abs() < 1e-14);
    }

    #[test]
    fn symmetric_block_matches_bosonic_model() {
        let cfg = SetupConfig::measured_source(0.7);
        let rho = tilted_noon(0.35, 1.1).mix(&crate::state::maximally_mixed(), 0.6);
        let vis = VisDensityMatrix::from_path(&rho);
        for phi in [0.0, 0.9, 2.5] {
            for kind in RateKind::ALL {
                let a = predict_vis_observable(&vis, &cfg, phi, kind.observable()).unwrap();
                let b = predict_observable(&rho, &cfg, phi, kind.observable()).unwrap();
                assert!((a - b).abs() < 1e-10, "{kind} at {phi}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hom_source_examples() {
        let ideal = hom_source_vis(0.5, 1.0).unwrap();
        assert!(ideal.antisym_pop.abs() < 1e-15);
        assert!(ideal.collapse_to_path().unwrap().max_abs_diff(&noon_state()) < 1e-14);

        let distinguishable = hom_source_vis(0.5, 0.0).unwrap();
        assert!((distinguishable.antisym_pop - 0.5).abs() < 1e-15);
        let s = distinguishable.sym_block;
        assert!((s[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!(s[(1, 1)].re.abs() < 1e-15);
        assert!((s[(2, 2)].re - 0.25).abs() < 1e-15);
        assert!((s[(0, 2)].norm() - 0.25).abs() < 1e-15);

        let measured = hom_source_vis(0.5, 0.975).unwrap();
        assert!((measured.antisym_pop - 0.0125).abs() < 1e-15);

        assert!(hom_source_vis(0.5, 1.1).is_err());
        assert!(hom_source_vis(0.0, 0.5).is_err());
    }

    #[test]
    fn vis_params_are_physical() {
        let t = [0.3, -0.2, 0.9, 0.1, 0.4, -0.7, 0.2, 0.05, -0.3, 0.5];
        let rho = vis_from_params(&t).unwrap();
        assert!(rho.is_physical(1e-12));
        assert!(vis_from_params(&[0.0; 10]).is_none());
    }
}
