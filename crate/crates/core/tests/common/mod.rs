#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use pathtomo::fock::basis_states;
use pathtomo::state::PathDensityMatrix;
use pathtomo::tomography::mle::density_from_params;
use pathtomo::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary(n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(normal.sample(&mut rng), normal.sample(&mut rng)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q.clone();
    for k in 0..n {
        let phase = r[(k, k)] / r[(k, k)].norm();
        for row in 0..n {
            u[(row, k)] = q[(row, k)] * phase;
        }
    }
    u
}

pub fn random_state(seed: u64) -> PathDensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let t: Vec<f64> = (0..9).map(|_| normal.sample(&mut rng)).collect();
    density_from_params(&t).unwrap()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `⟨m|U_F|n⟩` by expanding `∏ᵢ (Σₒ U[o][i] a†ₒ)^{nᵢ} / √∏nᵢ!` as a
/// polynomial in the output creation operators.
pub fn symbolic_lift(u: &DMatrix<C64>, photon_number: usize) -> DMatrix<C64> {
    let m = u.nrows();
    let states = basis_states(m, photon_number);
    let mut out = DMatrix::zeros(states.len(), states.len());
    for (col, input) in states.iter().enumerate() {
        let mut poly: HashMap<Vec<usize>, C64> = HashMap::new();
        poly.insert(vec![0; m], C64::new(1.0, 0.0));
        for (i, &count) in input.occupations().iter().enumerate() {
            for _ in 0..count {
                let mut next: HashMap<Vec<usize>, C64> = HashMap::new();
                for (mono, coeff) in &poly {
                    for o in 0..m {
                        let mut key = mono.clone();
                        key[o] += 1;
                        *next.entry(key).or_insert(C64::new(0.0, 0.0)) += coeff * u[(o, i)];
                    }
                }
                poly = next;
            }
        }
        let norm_in: f64 = input.occupations().iter().map(|&k| factorial(k)).product::<f64>().sqrt();
        for (row, output) in states.iter().enumerate() {
            let coeff = poly.get(output.occupations()).copied().unwrap_or(C64::new(0.0, 0.0));
            let norm_out: f64 = output.occupations().iter().map(|&k| factorial(k)).product::<f64>().sqrt();
            out[(row, col)] = coeff * norm_out / norm_in;
        }
    }
    out
}

fn sqrt_psd(m: &Matrix3<C64>) -> Matrix3<C64> {
    let eig = SymmetricEigen::new(*m);
    let mut out = Matrix3::zeros();
    for k in 0..3 {
        let v = eig.eigenvectors.column(k);
        out += v * v.adjoint() * C64::new(eig.eigenvalues[k].max(0.0).sqrt(), 0.0);
    }
    out
}

/// Uhlmann fidelity `(Tr √(√a b √a))²`.
pub fn state_fidelity(a: &PathDensityMatrix, b: &PathDensityMatrix) -> f64 {
    let sa = sqrt_psd(a.matrix());
    let m = sa * b.matrix() * sa;
    let root: f64 = SymmetricEigen::new((m + m.adjoint()) * C64::new(0.5, 0.0))
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    root * root
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
