//! Mode transforms for beam splitters, phase shifters and loss channels, and
//! the compiled analysis interferometer.
//!
//! A transform matrix `U` maps input creation operators to output ones:
//! `â†_in,i → Σ_o U[o][i] â†_out,o`. Composition multiplies later elements on
//! the left.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::fock::{lift_unitary, unitarity_deviation, UNITARY_TOL};
use crate::state::PathDensityMatrix;
use crate::{Error, Result, C64};

/// Base modes of the analysis stage: the two input paths and the vacuum
/// ancilla path entering BS1.
pub const STAGE_BASE_MODES: [&str; 3] = ["path0", "path1", "path2"];
/// Loss ancillas of the analysis stage, in declaration order.
pub const STAGE_LOSS_MODES: [&str; 3] = ["loss0", "loss1", "loss2"];

#[derive(Clone, Debug, PartialEq)]
pub struct ModeTransform {
    matrix: DMatrix<C64>,
    labels: Vec<String>,
}

impl ModeTransform {
    pub fn new(matrix: DMatrix<C64>, labels: Vec<String>) -> Result<Self> {
        if matrix.nrows() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for a {}-mode transform",
                labels.len(),
                matrix.nrows()
            )));
        }
        check_unique(&labels)?;
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NonUnitaryInput { deviation });
        }
        Ok(Self { matrix, labels })
    }

    pub fn identity(labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        Self::new(DMatrix::identity(n, n), labels)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mode_count(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        position(&self.labels, label)
    }

    /// Lifts the transform to the `photon_number` sector.
    pub fn lift(&self, photon_number: usize) -> Result<DMatrix<C64>> {
        lift_unitary(&self.matrix, photon_number)
    }

    /// Appends identity modes up to the given label list (which must extend
    /// the current one).
    fn extended_to(&self, labels: &[String]) -> Self {
        let n = labels.len();
        let mut matrix = DMatrix::identity(n, n);
        let k = self.mode_count();
        matrix.view_mut((0, 0), (k, k)).copy_from(&self.matrix);
        Self {
            matrix,
            labels: labels.to_vec(),
        }
    }
}

fn position(labels: &[String], label: &str) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownMode(label.to_string()))
}

fn check_unique(labels: &[String]) -> Result<()> {
    for (k, l) in labels.iter().enumerate() {
        if labels[..k].contains(l) {
            return Err(Error::InvalidParameter(format!("duplicate mode label `{l}`")));
        }
    }
    Ok(())
}

/// A single optical element acting on named modes.
#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    /// `[[√T, √R], [√R, −√T]]` on `(first, second)`, `T = 1 − R`.
    BeamSplitter {
        modes: (String, String),
        reflectivity: f64,
    },
    /// Multiplies the mode by `e^{iφ}`.
    PhaseShifter { mode: String, phase: f64 },
    /// Couples the mode to a fresh vacuum ancilla, keeping amplitude `√η`.
    LossChannel {
        mode: String,
        efficiency: f64,
        ancilla: String,
    },
}

impl Element {
    pub fn beam_splitter(a: &str, b: &str, reflectivity: f64) -> Self {
        Element::BeamSplitter {
            modes: (a.to_string(), b.to_string()),
            reflectivity,
        }
    }

    pub fn phase(mode: &str, phase: f64) -> Self {
        Element::PhaseShifter {
            mode: mode.to_string(),
            phase,
        }
    }

    pub fn loss(mode: &str, efficiency: f64, ancilla: &str) -> Self {
        Element::LossChannel {
            mode: mode.to_string(),
            efficiency,
            ancilla: ancilla.to_string(),
        }
    }
}

fn unit_interval(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} {value} not in [0, 1]")))
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Transform of one element over `all_modes`. A loss channel appends its
/// ancilla label to the returned transform.
pub fn element_transform(element: &Element, all_modes: &[String]) -> Result<ModeTransform> {
    check_unique(all_modes)?;
    match element {
        Element::BeamSplitter {
            modes: (a, b),
            reflectivity,
        } => {
            unit_interval("reflectivity", *reflectivity)?;
            let (ia, ib) = (position(all_modes, a)?, position(all_modes, b)?);
            if ia == ib {
                return Err(Error::InvalidParameter(format!(
                    "beam splitter needs two distinct modes, got `{a}` twice"
                )));
            }
            let r = reflectivity.sqrt();
            let t = (1.0 - reflectivity).sqrt();
            let mut m = DMatrix::identity(all_modes.len(), all_modes.len());
            m[(ia, ia)] = c(t);
            m[(ia, ib)] = c(r);
            m[(ib, ia)] = c(r);
            m[(ib, ib)] = c(-t);
            ModeTransform::new(m, all_modes.to_vec())
        }
        Element::PhaseShifter { mode, phase } => {
            let i = position(all_modes, mode)?;
            let mut m = DMatrix::identity(all_modes.len(), all_modes.len());
            m[(i, i)] = C64::from_polar(1.0, *phase);
            ModeTransform::new(m, all_modes.to_vec())
        }
        Element::LossChannel {
            mode,
            efficiency,
            ancilla,
        } => {
            unit_interval("efficiency", *efficiency)?;
            let i = position(all_modes, mode)?;
            if all_modes.contains(ancilla) {
                return Err(Error::DuplicateAncilla(ancilla.clone()));
            }
            let mut labels = all_modes.to_vec();
            labels.push(ancilla.clone());
            let n = labels.len();
            let j = n - 1;
            let keep = efficiency.sqrt();
            let leak = (1.0 - efficiency).sqrt();
            // The ancilla is never detected, so its output sign is chosen to
            // make η = 1 the identity.
            let mut m = DMatrix::identity(n, n);
            m[(i, i)] = c(keep);
            m[(j, i)] = c(leak);
            m[(i, j)] = c(-leak);
            m[(j, j)] = c(keep);
            ModeTransform::new(m, labels)
        }
    }
}

/// Product of the elements in order (later elements on the left). Labels are
/// `base_modes` followed by loss ancillas in declaration order.
pub fn compose(elements: &[Element], base_modes: &[String]) -> Result<ModeTransform> {
    let mut acc = ModeTransform::identity(base_modes.to_vec())?;
    for element in elements {
        let step = element_transform(element, acc.labels())?;
        if step.mode_count() > acc.mode_count() {
            acc = acc.extended_to(step.labels());
        }
        acc = ModeTransform {
            matrix: step.matrix() * acc.matrix(),
            labels: step.labels,
        };
    }
    Ok(acc)
}

/// Which Mach-Zehnder arm carries the drifting phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseArm {
    /// The direct arm from path 0 to BS2.
    Upper,
    /// The free-space arm from BS1 to BS2.
    #[default]
    Lower,
}

/// Splitter ratios and loss factors of the source and analysis optics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SetupConfig {
    pub hom_reflectivity: f64,
    pub bs1_reflectivity: f64,
    pub bs2_reflectivity: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    #[serde(default)]
    pub phase_arm: PhaseArm,
}

impl SetupConfig {
    /// Balanced splitters everywhere, no loss.
    pub fn balanced_lossless() -> Self {
        Self {
            hom_reflectivity: 0.5,
            bs1_reflectivity: 0.5,
            bs2_reflectivity: 0.5,
            eta0: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            phase_arm: PhaseArm::Lower,
        }
    }

    /// Source splitter as measured (R = 0.508), balanced analysis
    /// splitters, and a common transmission `eta` on every path.
    pub fn measured_source(eta: f64) -> Self {
        Self {
            hom_reflectivity: 0.508,
            eta0: eta,
            eta1: eta,
            eta2: eta,
            ..Self::balanced_lossless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("homReflectivity", self.hom_reflectivity),
            ("bs1Reflectivity", self.bs1_reflectivity),
            ("bs2Reflectivity", self.bs2_reflectivity),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} {r} not in (0, 1)")));
            }
        }
        for (name, eta) in [("eta0", self.eta0), ("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} {eta} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Compiles the analysis interferometer at phase `phi`.
///
/// Modes are `path0, path1, path2, loss0, loss1, loss2`. On the output side
/// slot 0 is detector path 3, slot 1 is path 4 and slot 2 is path 5.
pub fn build_analysis_setup(cfg: &SetupConfig, phi: f64) -> Result<ModeTransform> {
    cfg.validate()?;
    let [p0, p1, p2] = STAGE_BASE_MODES;
    let [l0, l1, l2] = STAGE_LOSS_MODES;
    let phase_mode = match cfg.phase_arm {
        PhaseArm::Upper => p0,
        PhaseArm::Lower => p1,
    };
    let elements = [
        Element::loss(p0, cfg.eta0, l0),
        Element::loss(p1, cfg.eta1, l1),
        Element::beam_splitter(p1, p2, cfg.bs1_reflectivity),
        // second BS1 output is path 5
        Element::loss(p2, cfg.eta2, l2),
        Element::phase(phase_mode, phi),
        Element::beam_splitter(p0, p1, cfg.bs2_reflectivity),
    ];
    let base: Vec<String> = STAGE_BASE_MODES.iter().map(|s| s.to_string()).collect();
    compose(&elements, &base)
}

/// State leaving the source splitter when one photon enters each input.
pub fn hom_output_amplitudes(hom_reflectivity: f64) -> Result<Vector3<C64>> {
    if !(hom_reflectivity > 0.0 && hom_reflectivity < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "homReflectivity {hom_reflectivity} not in (0, 1)"
        )));
    }
    let labels = vec!["path0".to_string(), "path1".to_string()];
    let bs = element_transform(&Element::beam_splitter("path0", "path1", hom_reflectivity), &labels)?;
    let lifted = bs.lift(2)?;
    Ok(Vector3::new(lifted[(0, 1)], lifted[(1, 1)], lifted[(2, 1)]))
}

/// Density matrix leaving the source splitter for two indistinguishable
/// photons.
pub fn build_hom_source(hom_reflectivity: f64) -> Result<PathDensityMatrix> {
    Ok(PathDensityMatrix::from_pure(hom_output_amplitudes(hom_reflectivity)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn balanced_splitter_matrix() {
        let t = element_transform(&Element::beam_splitter("a", "b", 0.5), &labels(&["a", "b"])).unwrap();
        let expect = [[FRAC_1_SQRT_2, FRAC_1_SQRT_2], [FRAC_1_SQRT_2, -FRAC_1_SQRT_2]];
        for r in 0..2 {
            for col in 0..2 {
                assert!((t.matrix()[(r, col)] - c(expect[r][col])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn measured_splitter_entries() {
        let t = element_transform(&Element::beam_splitter("a", "b", 0.508), &labels(&["a", "b"])).unwrap();
        assert!((t.matrix()[(0, 0)].re - 0.492f64.sqrt()).abs() < 1e-15);
        assert!((t.matrix()[(0, 1)].re - 0.508f64.sqrt()).abs() < 1e-15);
        assert!((t.matrix()[(1, 0)].re - 0.508f64.sqrt()).abs() < 1e-15);
        assert!((t.matrix()[(1, 1)].re + 0.492f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lossless_channel_is_identity() {
        let t = element_transform(&Element::loss("a", 1.0, "anc"), &labels(&["a", "b"])).unwrap();
        assert_eq!(t.labels(), &labels(&["a", "b", "anc"])[..]);
        assert!((t.matrix() - DMatrix::<C64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn element_errors() {
        let modes = labels(&["a", "b"]);
        assert!(matches!(
            element_transform(&Element::phase("z", 0.1), &modes),
            Err(Error::UnknownMode(_))
        ));
        assert!(matches!(
            element_transform(&Element::loss("a", 0.5, "b"), &modes),
            Err(Error::DuplicateAncilla(_))
        ));
        assert!(element_transform(&Element::beam_splitter("a", "b", 1.5), &modes).is_err());
    }

    #[test]
    fn compose_examples() {
        let base = labels(&["m0", "m1"]);
        let id = compose(&[], &base).unwrap();
        assert!((id.matrix() - DMatrix::<C64>::identity(2, 2)).norm() < 1e-15);

        let two = compose(&[Element::phase("m1", 0.3), Element::phase("m1", 0.5)], &base).unwrap();
        assert!((two.matrix()[(1, 1)] - C64::from_polar(1.0, 0.8)).norm() < 1e-14);

        // H·H = 1 for the real symmetric balanced splitter.
        let hh = compose(
            &[
                Element::beam_splitter("m0", "m1", 0.5),
                Element::beam_splitter("m0", "m1", 0.5),
            ],
            &base,
        )
        .unwrap();
        assert!((hh.matrix() - DMatrix::<C64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn compose_orders_later_elements_on_the_left() {
        let base = labels(&["m0", "m1"]);
        let u = compose(
            &[Element::phase("m0", 0.4), Element::beam_splitter("m0", "m1", 0.3)],
            &base,
        )
        .unwrap();
        let bs = element_transform(&Element::beam_splitter("m0", "m1", 0.3), &base).unwrap();
        let ph = element_transform(&Element::phase("m0", 0.4), &base).unwrap();
        assert!((u.matrix() - bs.matrix() * ph.matrix()).norm() < 1e-14);
    }

    #[test]
    fn analysis_setup_lossless_is_block_diagonal() {
        let u = build_analysis_setup(&SetupConfig::balanced_lossless(), 0.7).unwrap();
        assert_eq!(u.mode_count(), 6);
        for r in 0..6 {
            for col in 0..6 {
                let in_block = (r < 3) == (col < 3);
                if !in_block {
                    assert!(u.matrix()[(r, col)].norm() < 1e-15);
                }
                if r >= 3 && col >= 3 {
                    let target = if r == col { 1.0 } else { 0.0 };
                    assert!((u.matrix()[(r, col)] - c(target)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn analysis_setup_is_periodic() {
        let cfg = SetupConfig::measured_source(0.6);
        let a = build_analysis_setup(&cfg, 1.1).unwrap();
        let b = build_analysis_setup(&cfg, 1.1 + 2.0 * PI).unwrap();
        assert!((a.matrix() - b.matrix()).map(|z| z.norm()).max() < 1e-12);
    }

    #[test]
    fn hom_source_examples() {
        let ideal = build_hom_source(0.5).unwrap();
        assert!(ideal.max_abs_diff(&crate::state::noon_state()) < 1e-14);

        let measured = build_hom_source(0.508).unwrap();
        assert!((measured.matrix()[(1, 1)].re - 2.56e-4).abs() < 1e-15);

        let nearly_transparent = build_hom_source(1e-9).unwrap();
        assert!((nearly_transparent.matrix()[(1, 1)].re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn config_json_keys() {
        let json = r#"{"homReflectivity":0.508,"bs1Reflectivity":0.5,"bs2Reflectivity":0.5,
                      "eta0":0.6,"eta1":0.6,"eta2":0.6,"phaseArm":"lower"}"#;
        let cfg: SetupConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg, SetupConfig::measured_source(0.6));
        assert!(SetupConfig { eta1: 0.0, ..cfg.clone() }.validate().is_err());
        assert!(SetupConfig { bs2_reflectivity: 1.0, ..cfg }.validate().is_err());
    }
}
