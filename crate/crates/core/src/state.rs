//! Two-photon path states in the `{|2,0⟩, |1,1⟩, |0,2⟩}` basis.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::fock::FockDensity;
use crate::{Error, Result, C64};

/// Number of real parameters of a 3×3 Hermitian matrix.
pub const PATH_PARAMS: usize = 9;

/// Index pairs of the off-diagonal coherences in vectorization order.
pub const COHERENCE_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// 3×3 density matrix of two photons over two paths.
///
/// Raw linear-inversion output may be indefinite or have a trace other than
/// one, so the type only guarantees Hermiticity; see [`Self::is_physical`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathDensityMatrix {
    matrix: Matrix3<C64>,
}

impl PathDensityMatrix {
    pub fn new(matrix: Matrix3<C64>) -> Result<Self> {
        let dev = (matrix - matrix.adjoint()).map(|z| z.norm()).max();
        if dev > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "density matrix is not Hermitian (deviation {dev:.3e})"
            )));
        }
        // Symmetrize away rounding.
        Ok(Self {
            matrix: (matrix + matrix.adjoint()) * C64::new(0.5, 0.0),
        })
    }

    /// Symmetrizes `matrix` without checking it.
    pub(crate) fn from_hermitian(matrix: Matrix3<C64>) -> Self {
        Self {
            matrix: (matrix + matrix.adjoint()) * C64::new(0.5, 0.0),
        }
    }

    pub fn from_pure(amplitudes: Vector3<C64>) -> Self {
        let norm = amplitudes.norm();
        let v = amplitudes / C64::new(norm, 0.0);
        Self {
            matrix: v * v.adjoint(),
        }
    }

    pub fn diagonal(p20: f64, p11: f64, p02: f64) -> Self {
        Self {
            matrix: Matrix3::from_diagonal(&Vector3::new(
                C64::new(p20, 0.0),
                C64::new(p11, 0.0),
                C64::new(p02, 0.0),
            )),
        }
    }

    pub fn matrix(&self) -> &Matrix3<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.matrix);
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Unit trace and non-negative spectrum within `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        (self.trace() - 1.0).abs() <= tol && self.eigenvalues()[0] >= -tol
    }

    pub fn normalized_by_trace(&self) -> Self {
        Self {
            matrix: self.matrix / C64::new(self.trace(), 0.0),
        }
    }

    /// Nearest-physical projection: clamps negative eigenvalues to zero
    /// and renormalizes the trace.
    pub fn project_physical(&self) -> Self {
        let eig = SymmetricEigen::new(self.matrix);
        let mut out = Matrix3::zeros();
        let mut total = 0.0;
        for k in 0..3 {
            let lambda = eig.eigenvalues[k].max(0.0);
            total += lambda;
            let v = eig.eigenvectors.column(k);
            out += v * v.adjoint() * C64::new(lambda, 0.0);
        }
        if total <= 0.0 {
            return maximally_mixed();
        }
        Self {
            matrix: out / C64::new(total, 0.0),
        }
    }

    /// Real parameter vector: populations, then (re, im) of ρ₀₁, ρ₀₂, ρ₁₂.
    pub fn vectorize(&self) -> [f64; PATH_PARAMS] {
        let m = &self.matrix;
        let mut out = [0.0; PATH_PARAMS];
        for k in 0..3 {
            out[k] = m[(k, k)].re;
        }
        for (n, &(r, c)) in COHERENCE_PAIRS.iter().enumerate() {
            out[3 + 2 * n] = m[(r, c)].re;
            out[4 + 2 * n] = m[(r, c)].im;
        }
        out
    }

    pub fn from_vector(x: &[f64; PATH_PARAMS]) -> Self {
        let mut m = Matrix3::zeros();
        for k in 0..3 {
            m[(k, k)] = C64::new(x[k], 0.0);
        }
        for (n, &(r, c)) in COHERENCE_PAIRS.iter().enumerate() {
            let z = C64::new(x[3 + 2 * n], x[4 + 2 * n]);
            m[(r, c)] = z;
            m[(c, r)] = z.conj();
        }
        Self { matrix: m }
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        Self {
            matrix: self.matrix * C64::new(w, 0.0) + other.matrix * C64::new(1.0 - w, 0.0),
        }
    }

    /// Same state as a two-mode [`FockDensity`].
    pub fn to_fock(&self) -> FockDensity {
        FockDensity {
            mode_count: 2,
            photon_number: 2,
            matrix: DMatrix::from_fn(3, 3, |r, c| self.matrix[(r, c)]),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.matrix - other.matrix).map(|z| z.norm()).max()
    }
}

/// `(|2,0⟩ − |0,2⟩)/√2`
pub fn noon_amplitudes() -> Vector3<C64> {
    Vector3::new(
        C64::new(FRAC_1_SQRT_2, 0.0),
        C64::new(0.0, 0.0),
        C64::new(-FRAC_1_SQRT_2, 0.0),
    )
}

/// Density matrix of the two-photon N00N state `(|2,0⟩ − |0,2⟩)/√2`.
pub fn noon_state() -> PathDensityMatrix {
    PathDensityMatrix::from_pure(noon_amplitudes())
}

pub fn maximally_mixed() -> PathDensityMatrix {
    PathDensityMatrix::diagonal(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
}

/// Equal incoherent mixture of `|2,0⟩` and `|0,2⟩`.
pub fn bunched_mixture() -> PathDensityMatrix {
    PathDensityMatrix::diagonal(0.5, 0.0, 0.5)
}

/// `cosθ/√2 |2,0⟩ + sinθ e^{iχ} |1,1⟩ − cosθ/√2 |0,2⟩`
pub fn tilted_noon_amplitudes(theta: f64, chi: f64) -> Vector3<C64> {
    let a = theta.cos() * FRAC_1_SQRT_2;
    Vector3::new(
        C64::new(a, 0.0),
        C64::from_polar(theta.sin(), chi),
        C64::new(-a, 0.0),
    )
}

pub fn tilted_noon(theta: f64, chi: f64) -> PathDensityMatrix {
    PathDensityMatrix::from_pure(tilted_noon_amplitudes(theta, chi))
}

/// Named reference states for rate curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fixture {
    /// The N00N state.
    Ideal,
    /// Incoherent mixture of `|2,0⟩` and `|0,2⟩`.
    Mixed,
    /// Tilted N00N state with a `|1,1⟩` admixture of angle θ and phase π/4.
    Dashed { theta: f64 },
}

impl Fixture {
    pub fn state(&self) -> PathDensityMatrix {
        match *self {
            Fixture::Ideal => noon_state(),
            Fixture::Mixed => bunched_mixture(),
            Fixture::Dashed { theta } => tilted_noon(theta, std::f64::consts::FRAC_PI_4),
        }
    }
}

impl std::str::FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Fixture::Ideal),
            "mixed" => Ok(Fixture::Mixed),
            _ => {
                let theta = s
                    .strip_prefix("dashed-theta=")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture `{s}`")))?;
                Ok(Fixture::Dashed { theta })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorize_round_trip() {
        let rho = tilted_noon(0.3, 0.7).mix(&maximally_mixed(), 0.6);
        let back = PathDensityMatrix::from_vector(&rho.vectorize());
        assert!(rho.max_abs_diff(&back) < 1e-15);
    }

    #[test]
    fn projection_clamps_negative_eigenvalues() {
        let raw = PathDensityMatrix::from_vector(&[0.6, -0.05, 0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0]);
        assert!(raw.eigenvalues()[0] < 0.0);
        let p = raw.project_physical();
        assert!(p.is_physical(1e-12));
    }

    #[test]
    fn fixtures_parse() {
        assert_eq!("ideal".parse::<Fixture>().unwrap(), Fixture::Ideal);
        assert_eq!("mixed".parse::<Fixture>().unwrap(), Fixture::Mixed);
        assert_eq!(
            "dashed-theta=0.2".parse::<Fixture>().unwrap(),
            Fixture::Dashed { theta: 0.2 }
        );
        assert!("bogus".parse::<Fixture>().is_err());
    }

    #[test]
    fn noon_is_pure() {
        let rho = noon_state();
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        let purity = (rho.matrix() * rho.matrix()).trace().re;
        assert!((purity - 1.0).abs() < 1e-14);
    }
}
