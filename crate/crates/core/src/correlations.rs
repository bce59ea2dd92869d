//! Forward model: singles, coincidence and auto-correlation rates of a
//! two-photon path state, measured either directly on paths 0/1 or behind
//! the analysis interferometer on paths 3/4/5.
//!
//! Every rate is linear in the input density matrix, so each observable is
//! pulled back to a 3×3 Hermitian operator `O` on the input basis with
//! `rate = Tr[ρ O]`. The tomography routines use those operators directly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::fock::{normally_ordered_expectation, normally_ordered_operator, FockBasis, FockDensity};
use crate::optics::{build_analysis_setup, SetupConfig};
use crate::state::PathDensityMatrix;
use crate::{Error, Result, C64};

/// Rates below this magnitude are rounding noise.
pub const RATE_FLOOR: f64 = 1e-12;

/// Detectable path. Paths 0 and 1 are read directly at the source output;
/// paths 3, 4 and 5 sit behind the analysis interferometer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detector {
    Path0,
    Path1,
    Path3,
    Path4,
    Path5,
}

impl Detector {
    pub fn is_direct(self) -> bool {
        matches!(self, Detector::Path0 | Detector::Path1)
    }

    /// Mode index in its measurement stage.
    pub fn slot(self) -> usize {
        match self {
            Detector::Path0 | Detector::Path3 => 0,
            Detector::Path1 | Detector::Path4 => 1,
            Detector::Path5 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Detector::Path0 => "path0",
            Detector::Path1 => "path1",
            Detector::Path3 => "path3",
            Detector::Path4 => "path4",
            Detector::Path5 => "path5",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path0" => Ok(Detector::Path0),
            "path1" => Ok(Detector::Path1),
            "path3" => Ok(Detector::Path3),
            "path4" => Ok(Detector::Path4),
            "path5" => Ok(Detector::Path5),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// A rate that can be predicted from the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// `⟨â†ᵢâ†ⱼâⱼâᵢ⟩`, i ≠ j
    Coincidence(Detector, Detector),
    /// `½⟨â†ᵢâ†ᵢâᵢâᵢ⟩`: coincidences behind a balanced tap splitter.
    Auto(Detector),
    /// `⟨â†ᵢâᵢ⟩`
    Singles(Detector),
}

impl Observable {
    /// Coincidence or auto-correlation for a detector pair.
    pub fn pair(i: Detector, j: Detector) -> Result<Self> {
        if i.is_direct() != j.is_direct() {
            return Err(Error::IncompatibleDetectors(i.to_string(), j.to_string()));
        }
        Ok(if i == j {
            Observable::Auto(i)
        } else {
            Observable::Coincidence(i, j)
        })
    }

    fn is_direct(self) -> bool {
        match self {
            Observable::Coincidence(i, _) | Observable::Auto(i) | Observable::Singles(i) => i.is_direct(),
        }
    }

    /// Normally ordered operator on the output modes with its prefactor.
    fn output_operator(self, basis: &FockBasis) -> Result<DMatrix<C64>> {
        match self {
            Observable::Coincidence(i, j) => {
                let modes = [i.slot(), j.slot()];
                normally_ordered_operator(basis, &modes, &modes)
            }
            Observable::Auto(i) => {
                let modes = [i.slot(), i.slot()];
                Ok(normally_ordered_operator(basis, &modes, &modes)? * C64::new(0.5, 0.0))
            }
            Observable::Singles(i) => normally_ordered_operator(basis, &[i.slot()], &[i.slot()]),
        }
    }
}

/// Kinds of normalized rate in a measurement record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RateKind {
    R00,
    R01,
    R11,
    R33,
    R34,
    R35,
    R45,
}

impl RateKind {
    pub const ALL: [RateKind; 7] = [
        RateKind::R00,
        RateKind::R01,
        RateKind::R11,
        RateKind::R33,
        RateKind::R34,
        RateKind::R35,
        RateKind::R45,
    ];

    /// Kinds measured behind the drifting interferometer.
    pub const PHASE_DEPENDENT: [RateKind; 4] = [RateKind::R33, RateKind::R34, RateKind::R35, RateKind::R45];

    pub const STATIC: [RateKind; 3] = [RateKind::R00, RateKind::R01, RateKind::R11];

    pub fn detectors(self) -> (Detector, Detector) {
        use Detector::*;
        match self {
            RateKind::R00 => (Path0, Path0),
            RateKind::R01 => (Path0, Path1),
            RateKind::R11 => (Path1, Path1),
            RateKind::R33 => (Path3, Path3),
            RateKind::R34 => (Path3, Path4),
            RateKind::R35 => (Path3, Path5),
            RateKind::R45 => (Path4, Path5),
        }
    }

    pub fn is_phase_dependent(self) -> bool {
        !self.detectors().0.is_direct()
    }

    pub fn observable(self) -> Observable {
        let (i, j) = self.detectors();
        Observable::pair(i, j).expect("rate kinds pair detectors of one stage")
    }

    /// Observables whose product forms the side-peak normalization, with
    /// the prefactor of that product.
    pub fn normalization(self) -> (Observable, Observable, f64) {
        let (i, j) = self.detectors();
        let factor = if i == j { 0.5 } else { 1.0 };
        (Observable::Singles(i), Observable::Singles(j), factor)
    }

    pub fn name(self) -> &'static str {
        match self {
            RateKind::R00 => "R00",
            RateKind::R01 => "R01",
            RateKind::R11 => "R11",
            RateKind::R33 => "R33",
            RateKind::R34 => "R34",
            RateKind::R35 => "R35",
            RateKind::R45 => "R45",
        }
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Lifted analysis stage at a fixed phase, restricted to input states with
/// both photons in paths 0/1 and the rest of the modes empty.
#[derive(Clone, Debug)]
pub struct StagePropagator {
    basis: FockBasis,
    /// Columns: output-sector images of |2,0⟩, |1,1⟩, |0,2⟩.
    columns: DMatrix<C64>,
    lifted: DMatrix<C64>,
}

impl StagePropagator {
    pub fn new(cfg: &SetupConfig, phi: f64) -> Result<Self> {
        let transform = build_analysis_setup(cfg, phi)?;
        let basis = FockBasis::new(transform.mode_count(), 2);
        let lifted = transform.lift(2)?;
        let input_rows: Vec<usize> = [[2, 0], [1, 1], [0, 2]]
            .iter()
            .map(|occ| {
                let mut full = vec![0; transform.mode_count()];
                full[..2].copy_from_slice(occ);
                basis
                    .index_of(&crate::fock::OccupationState::new(full))
                    .expect("two-photon input state is in the basis")
            })
            .collect();
        let columns = DMatrix::from_fn(basis.dim(), 3, |r, k| lifted[(r, input_rows[k])]);
        Ok(Self {
            basis,
            columns,
            lifted,
        })
    }

    /// Output density matrix over all stage modes.
    pub fn propagate(&self, rho: &PathDensityMatrix) -> FockDensity {
        let embedded = rho.to_fock().pad_modes(self.basis.mode_count());
        embedded.evolve(&self.lifted)
    }

    /// Pull-back `V† O V` of an output observable.
    pub fn pull_back(&self, observable: Observable) -> Result<Matrix3<C64>> {
        let op = observable.output_operator(&self.basis)?;
        let v = &self.columns;
        let pulled = v.adjoint() * op * v;
        Ok(Matrix3::from_fn(|r, k| pulled[(r, k)]))
    }
}

/// Input-space operator of an observable on the directly read paths.
fn direct_operator(observable: Observable) -> Result<Matrix3<C64>> {
    let basis = FockBasis::new(2, 2);
    let op = observable.output_operator(&basis)?;
    Ok(Matrix3::from_fn(|r, k| op[(r, k)]))
}

/// Input-space operator `O` with `rate = Tr[ρ O]`. `stage` is required for
/// observables behind the interferometer.
pub fn observable_operator(observable: Observable, stage: Option<&StagePropagator>) -> Result<Matrix3<C64>> {
    if observable.is_direct() {
        direct_operator(observable)
    } else {
        let stage = stage.ok_or_else(|| {
            Error::InvalidParameter("observable behind the interferometer needs a stage".into())
        })?;
        stage.pull_back(observable)
    }
}

/// `Re Tr[ρ O]` without clamping.
pub fn linear_expectation(rho: &Matrix3<C64>, op: &Matrix3<C64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += (rho[(i, j)] * op[(j, i)]).re;
        }
    }
    acc
}

pub(crate) fn clamp_rate(value: f64) -> Result<f64> {
    if value < -RATE_FLOOR {
        Err(Error::NegativeRate(value))
    } else {
        Ok(value.max(0.0))
    }
}

/// Evaluates an observable through the full Fock-space route: embed the
/// input with vacuum ancillas, evolve, take the normally ordered expectation.
pub fn predict_observable(
    rho: &PathDensityMatrix,
    cfg: &SetupConfig,
    phi: f64,
    observable: Observable,
) -> Result<f64> {
    let out = if observable.is_direct() {
        rho.to_fock()
    } else {
        StagePropagator::new(cfg, phi)?.propagate(rho)
    };
    let value = match observable {
        Observable::Coincidence(i, j) => {
            let modes = [i.slot(), j.slot()];
            normally_ordered_expectation(&out, &modes, &modes)?.re
        }
        Observable::Auto(i) => {
            let modes = [i.slot(), i.slot()];
            0.5 * normally_ordered_expectation(&out, &modes, &modes)?.re
        }
        Observable::Singles(i) => normally_ordered_expectation(&out, &[i.slot()], &[i.slot()])?.re,
    };
    clamp_rate(value)
}

fn parse_pair(i: &str, j: &str) -> Result<(Detector, Detector)> {
    Ok((i.parse()?, j.parse()?))
}

/// `Tr[ρ_out â†ᵢâ†ⱼâⱼâᵢ]` for two distinct detectors.
pub fn coincidence_rate(rho: &PathDensityMatrix, cfg: &SetupConfig, phi: f64, i: &str, j: &str) -> Result<f64> {
    let (di, dj) = parse_pair(i, j)?;
    if di == dj {
        return Err(Error::InvalidParameter(format!(
            "coincidence needs two detectors, got {di} twice"
        )));
    }
    predict_observable(rho, cfg, phi, Observable::pair(di, dj)?)
}

/// `½ Tr[ρ_out â†ᵢâ†ᵢâᵢâᵢ]`
pub fn auto_rate(rho: &PathDensityMatrix, cfg: &SetupConfig, phi: f64, i: &str) -> Result<f64> {
    predict_observable(rho, cfg, phi, Observable::Auto(i.parse()?))
}

/// `Tr[ρ_out â†ⱼâⱼ]`
pub fn singles_rate(rho: &PathDensityMatrix, cfg: &SetupConfig, phi: f64, j: &str) -> Result<f64> {
    predict_observable(rho, cfg, phi, Observable::Singles(j.parse()?))
}

/// Coincidence rate divided by its side-peak level (product of singles,
/// with the tap factor ½ for auto-correlations).
pub fn normalized_rate(rho: &PathDensityMatrix, cfg: &SetupConfig, phi: f64, i: &str, j: &str) -> Result<f64> {
    let (di, dj) = parse_pair(i, j)?;
    let rate = predict_observable(rho, cfg, phi, Observable::pair(di, dj)?)?;
    let si = predict_observable(rho, cfg, phi, Observable::Singles(di))?;
    let sj = predict_observable(rho, cfg, phi, Observable::Singles(dj))?;
    normalize(rate, si, sj, if di == dj { 0.5 } else { 1.0 }, di, dj)
}

pub(crate) fn normalize(rate: f64, si: f64, sj: f64, factor: f64, di: Detector, dj: Detector) -> Result<f64> {
    if si < RATE_FLOOR {
        return Err(Error::DivisionByZeroSingles(di.to_string()));
    }
    if sj < RATE_FLOOR {
        return Err(Error::DivisionByZeroSingles(dj.to_string()));
    }
    Ok(rate / (factor * si * sj))
}

/// The minimal complete set
/// `(R00, R01, R11, R33(φ₁), R34(φ₁), R45(φ₁), R33(φ₂), R34(φ₂), R45(φ₂))`.
pub const COMPLETE_SET: [RateKind; 9] = [
    RateKind::R00,
    RateKind::R01,
    RateKind::R11,
    RateKind::R33,
    RateKind::R34,
    RateKind::R45,
    RateKind::R33,
    RateKind::R34,
    RateKind::R45,
];

/// Phase slot (0 = none, 1 = φ₁, 2 = φ₂) of each entry of [`COMPLETE_SET`].
pub const COMPLETE_SET_PHASE: [u8; 9] = [0, 0, 0, 1, 1, 1, 2, 2, 2];

/// Raw (unnormalized) rates of the minimal complete set.
#[allow(non_snake_case)]
pub fn predict_R_comp(rho: &PathDensityMatrix, cfg: &SetupConfig, phi1: f64, phi2: f64) -> Result<[f64; 9]> {
    let mut out = [0.0; 9];
    for (k, kind) in COMPLETE_SET.iter().enumerate() {
        let phi = match COMPLETE_SET_PHASE[k] {
            2 => phi2,
            _ => phi1,
        };
        out[k] = predict_observable(rho, cfg, phi, kind.observable())?;
    }
    Ok(out)
}
