//! Fock-space algebra for a few photons spread over several optical modes.
//!
//! States are indexed by [`basis_states`], which lists occupation tuples in
//! descending lexicographic order, so for two photons in two modes the
//! order is `|2,0⟩, |1,1⟩, |0,2⟩`.
//!
//! Mode transforms act on creation operators: an input creation operator
//! `â†_i` becomes `Σ_o U[o][i] â†_o`. Lifting `U` to the photon-number
//! sector uses permanents of row/column-repeated submatrices.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Tolerance for unitarity and Hermiticity checks.
pub const UNITARY_TOL: f64 = 1e-10;

/// Photon counts, one per mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationState(Vec<usize>);

impl OccupationState {
    pub fn new(occupations: Vec<usize>) -> Self {
        Self(occupations)
    }

    pub fn occupations(&self) -> &[usize] {
        &self.0
    }

    pub fn mode_count(&self) -> usize {
        self.0.len()
    }

    pub fn photon_number(&self) -> usize {
        self.0.iter().sum()
    }

    /// `∏ nᵢ!`
    fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n)).product()
    }

    /// Mode indices repeated by occupation, e.g. `(2,0,1)` → `[0,0,2]`.
    fn repeated_modes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(m, &n)| std::iter::repeat_n(m, n))
            .collect()
    }

    /// Applies `â_mode`, returning the resulting basis state and its
    /// `√n` prefactor, or `None` when the mode is empty.
    fn annihilate(&self, mode: usize) -> Option<(OccupationState, f64)> {
        let n = self.0[mode];
        if n == 0 {
            return None;
        }
        let mut occ = self.0.clone();
        occ[mode] -= 1;
        Some((OccupationState(occ), (n as f64).sqrt()))
    }
}

impl std::fmt::Display for OccupationState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|")?;
        for (k, n) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All ways of placing `photon_number` photons into `mode_count` modes, in
/// descending lexicographic order of the occupation tuple.
pub fn basis_states(mode_count: usize, photon_number: usize) -> Vec<OccupationState> {
    assert!(mode_count >= 1, "mode_count must be at least 1");
    let mut out = Vec::new();
    let mut current = vec![0usize; mode_count];
    fill_compositions(&mut current, 0, photon_number, &mut out);
    out
}

fn fill_compositions(
    current: &mut [usize],
    mode: usize,
    remaining: usize,
    out: &mut Vec<OccupationState>,
) {
    if mode + 1 == current.len() {
        current[mode] = remaining;
        out.push(OccupationState(current.to_vec()));
        return;
    }
    for n in (0..=remaining).rev() {
        current[mode] = n;
        fill_compositions(current, mode + 1, remaining - n, out);
    }
    current[mode] = 0;
}

/// Canonical basis of the `N`-photon sector with a reverse index.
#[derive(Clone, Debug)]
pub struct FockBasis {
    mode_count: usize,
    photon_number: usize,
    states: Vec<OccupationState>,
    index: HashMap<OccupationState, usize>,
}

impl FockBasis {
    pub fn new(mode_count: usize, photon_number: usize) -> Self {
        let states = basis_states(mode_count, photon_number);
        let index = states
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), k))
            .collect();
        Self {
            mode_count,
            photon_number,
            states,
            index,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn photon_number(&self) -> usize {
        self.photon_number
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[OccupationState] {
        &self.states
    }

    pub fn index_of(&self, state: &OccupationState) -> Option<usize> {
        self.index.get(state).copied()
    }
}

/// Pure state in the `N`-photon sector.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    pub mode_count: usize,
    pub photon_number: usize,
    pub amplitudes: DVector<C64>,
}

impl FockVector {
    /// Single basis ket.
    pub fn basis(occupations: &[usize]) -> Self {
        let state = OccupationState::new(occupations.to_vec());
        let basis = FockBasis::new(state.mode_count(), state.photon_number());
        let mut amplitudes = DVector::zeros(basis.dim());
        amplitudes[basis.index_of(&state).expect("state is in its own basis")] = C64::new(1.0, 0.0);
        Self {
            mode_count: state.mode_count(),
            photon_number: state.photon_number(),
            amplitudes,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn density(&self) -> FockDensity {
        FockDensity {
            mode_count: self.mode_count,
            photon_number: self.photon_number,
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Density matrix over the canonical `N`-photon basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockDensity {
    pub mode_count: usize,
    pub photon_number: usize,
    pub matrix: DMatrix<C64>,
}

impl FockDensity {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `U_F ρ U_F†` for a lifted transform of matching dimension.
    pub fn evolve(&self, lifted: &DMatrix<C64>) -> FockDensity {
        FockDensity {
            mode_count: self.mode_count,
            photon_number: self.photon_number,
            matrix: lifted * &self.matrix * lifted.adjoint(),
        }
    }

    /// Embeds the state into a space with extra vacuum modes appended.
    pub fn pad_modes(&self, mode_count: usize) -> FockDensity {
        assert!(mode_count >= self.mode_count);
        let small = FockBasis::new(self.mode_count, self.photon_number);
        let large = FockBasis::new(mode_count, self.photon_number);
        let positions: Vec<usize> = small
            .states()
            .iter()
            .map(|s| {
                let mut occ = s.occupations().to_vec();
                occ.resize(mode_count, 0);
                large
                    .index_of(&OccupationState::new(occ))
                    .expect("padded state exists")
            })
            .collect();
        let mut matrix = DMatrix::zeros(large.dim(), large.dim());
        for (r, &pr) in positions.iter().enumerate() {
            for (c, &pc) in positions.iter().enumerate() {
                matrix[(pr, pc)] = self.matrix[(r, c)];
            }
        }
        FockDensity {
            mode_count,
            photon_number: self.photon_number,
            matrix,
        }
    }
}

/// Largest entry of `|U†U − 1|`.
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let product = u.adjoint() * u;
    product
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let (r, c) = (k % u.nrows(), k / u.nrows());
            let target = if r == c { 1.0 } else { 0.0 };
            (z - C64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// Permanent of a square matrix by Ryser's formula.
pub fn permanent(a: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "permanent needs a square matrix");
    if n == 0 {
        return C64::new(1.0, 0.0);
    }
    let mut total = C64::new(0.0, 0.0);
    for subset in 1u64..(1u64 << n) {
        let mut prod = C64::new(1.0, 0.0);
        for r in 0..n {
            let mut row_sum = C64::new(0.0, 0.0);
            for c in 0..n {
                if subset & (1 << c) != 0 {
                    row_sum += a[(r, c)];
                }
            }
            prod *= row_sum;
        }
        let sign = if (n - subset.count_ones() as usize).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += prod * sign;
    }
    total
}

/// Lifts a mode unitary to the `photon_number` sector:
/// `⟨m|U_F|n⟩ = Per(U[m,n]) / √(∏ mᵢ! ∏ nⱼ!)`.
pub fn lift_unitary(u: &DMatrix<C64>, photon_number: usize) -> Result<DMatrix<C64>> {
    let deviation = unitarity_deviation(u);
    if deviation > UNITARY_TOL {
        return Err(Error::NonUnitaryInput { deviation });
    }
    let basis = FockBasis::new(u.nrows(), photon_number);
    let repeated: Vec<Vec<usize>> = basis.states().iter().map(|s| s.repeated_modes()).collect();
    let norms: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.factorial_product())
        .collect();
    let dim = basis.dim();
    let mut lifted = DMatrix::zeros(dim, dim);
    for (col, cols) in repeated.iter().enumerate() {
        for (row, rows) in repeated.iter().enumerate() {
            let sub = DMatrix::from_fn(photon_number, photon_number, |r, c| u[(rows[r], cols[c])]);
            lifted[(row, col)] = permanent(&sub) / (norms[row] * norms[col]).sqrt();
        }
    }
    Ok(lifted)
}

/// Applies annihilators for `modes` (in any order, they commute) to a
/// basis state.
fn annihilate_all(state: &OccupationState, modes: &[usize]) -> Option<(OccupationState, f64)> {
    let mut current = state.clone();
    let mut coef = 1.0;
    for &m in modes {
        let (next, c) = current.annihilate(m)?;
        current = next;
        coef *= c;
    }
    Some((current, coef))
}

/// Matrix of `â†_{c₁}…â†_{cₖ} â_{aₖ}…â_{a₁}` in the canonical basis.
pub fn normally_ordered_operator(
    basis: &FockBasis,
    create_modes: &[usize],
    annihilate_modes: &[usize],
) -> Result<DMatrix<C64>> {
    let mode_count = basis.mode_count();
    for &index in create_modes.iter().chain(annihilate_modes) {
        if index >= mode_count {
            return Err(Error::IndexOutOfRange { index, mode_count });
        }
    }
    let dim = basis.dim();
    let mut op = DMatrix::zeros(dim, dim);
    if create_modes.len() != annihilate_modes.len() {
        return Ok(op);
    }
    let left: Vec<Option<(OccupationState, f64)>> = basis
        .states()
        .iter()
        .map(|s| annihilate_all(s, create_modes))
        .collect();
    let right: Vec<Option<(OccupationState, f64)>> = basis
        .states()
        .iter()
        .map(|s| annihilate_all(s, annihilate_modes))
        .collect();
    for (m, l) in left.iter().enumerate() {
        let Some((ls, lc)) = l else { continue };
        for (n, r) in right.iter().enumerate() {
            let Some((rs, rc)) = r else { continue };
            if ls == rs {
                op[(m, n)] = C64::new(lc * rc, 0.0);
            }
        }
    }
    Ok(op)
}

/// `Tr[ρ · â†_{c₁}…â†_{cₖ} â_{aₖ}…â_{a₁}]`.
pub fn normally_ordered_expectation(
    rho: &FockDensity,
    create_modes: &[usize],
    annihilate_modes: &[usize],
) -> Result<C64> {
    let basis = FockBasis::new(rho.mode_count, rho.photon_number);
    let op = normally_ordered_operator(&basis, create_modes, annihilate_modes)?;
    Ok(trace_product(&rho.matrix, &op))
}

/// `Tr[A·B]` without forming the product.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn two_photons_two_modes_order() {
        let states = basis_states(2, 2);
        let occ: Vec<&[usize]> = states.iter().map(|s| s.occupations()).collect();
        assert_eq!(occ, vec![&[2, 0][..], &[1, 1], &[0, 2]]);
    }

    #[test]
    fn basis_sizes() {
        let three = basis_states(3, 2);
        assert_eq!(three.len(), 6);
        assert_eq!(three[0].occupations(), &[2, 0, 0]);
        assert_eq!(three[5].occupations(), &[0, 0, 2]);
        assert_eq!(basis_states(6, 2).len(), 21);
        assert_eq!(basis_states(4, 0).len(), 1);
        assert_eq!(basis_states(1, 5).len(), 1);
    }

    #[test]
    fn lift_identity() {
        let lifted = lift_unitary(&DMatrix::identity(2, 2), 2).unwrap();
        assert!((lifted - DMatrix::<C64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn balanced_splitter_makes_noon() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(-FRAC_1_SQRT_2, 0.0),
            ],
        );
        let lifted = lift_unitary(&h, 2).unwrap();
        let out = &lifted * FockVector::basis(&[1, 1]).amplitudes;
        assert!((out[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!(out[1].norm() < 1e-12);
        assert!((out[2] - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_shifter_accumulates() {
        let phi = 0.37;
        let p = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), C64::from_polar(1.0, phi)],
        );
        let lifted = lift_unitary(&p, 2).unwrap();
        assert!((lifted[(1, 1)] - C64::from_polar(1.0, phi)).norm() < 1e-12);
        assert!((lifted[(2, 2)] - C64::from_polar(1.0, 2.0 * phi)).norm() < 1e-12);
        assert!((lifted[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_unitary() {
        let m = DMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(
            lift_unitary(&m, 2),
            Err(Error::NonUnitaryInput { .. })
        ));
    }

    #[test]
    fn expectation_examples() {
        let rho11 = FockVector::basis(&[1, 1]).density();
        assert!((normally_ordered_expectation(&rho11, &[0, 1], &[0, 1]).unwrap() - 1.0).norm() < 1e-14);

        let rho20 = FockVector::basis(&[2, 0]).density();
        assert!((normally_ordered_expectation(&rho20, &[0, 0], &[0, 0]).unwrap() - 2.0).norm() < 1e-14);

        let mut noon = FockVector::basis(&[2, 0]);
        noon.amplitudes = DVector::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), c(0.0, 0.0), c(-FRAC_1_SQRT_2, 0.0)]);
        let value = normally_ordered_expectation(&noon.density(), &[0, 1], &[0, 1]).unwrap();
        assert!(value.norm() < 1e-14);
    }

    #[test]
    fn expectation_index_errors() {
        let rho = FockVector::basis(&[1, 1]).density();
        assert!(matches!(
            normally_ordered_expectation(&rho, &[0, 2], &[0, 1]),
            Err(Error::IndexOutOfRange { index: 2, mode_count: 2 })
        ));
    }

    #[test]
    fn pad_keeps_populations() {
        let rho = FockVector::basis(&[1, 1]).density().pad_modes(4);
        let basis = FockBasis::new(4, 2);
        let idx = basis.index_of(&OccupationState::new(vec![1, 1, 0, 0])).unwrap();
        assert_eq!(rho.matrix[(idx, idx)], c(1.0, 0.0));
        assert!((rho.trace() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn permanent_small_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        assert!((permanent(&a) - c(10.0, 0.0)).norm() < 1e-12);
        let ones = DMatrix::from_element(3, 3, c(1.0, 0.0));
        assert!((permanent(&ones) - c(6.0, 0.0)).norm() < 1e-12);
    }
}
