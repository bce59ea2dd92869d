//! Linear-inversion tomography.
//!
//! Raw rates are linear in ρ, so `vectorize(ρ) = M⁻¹ R`. Records carry
//! side-peak normalized rates, i.e. raw rates divided by a product of singles
//! that itself depends on ρ. [`linear_reconstruct`] starts from the linear
//! solve with the singles of the maximally mixed state and then solves the
//! normalized equations exactly, still without any positivity constraint.

use nalgebra::{DMatrix, DVector, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::correlations::COMPLETE_SET;
use crate::optics::SetupConfig;
use crate::records::MeasurementRecord;
use crate::state::{maximally_mixed, PathDensityMatrix, PATH_PARAMS};
use crate::tomography::mle::density_from_params;
use crate::correlations::RATE_FLOOR;
use crate::tomography::model::{expect, prepare_path_records, PreparedRecord};
use crate::tomography::{build_transfer_matrix, design_row, SINGULAR_CONDITION};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const STATIONARY_TOL: f64 = 1e-14;
const EXTRA_STARTS: usize = 24;
/// Squared weighted residual per record below which a solution is exact.
const EXACT_COST: f64 = 1e-20;

/// `M⁻¹ R` for raw rates of the minimal complete set.
pub fn linear_invert(rates: &[f64; 9], cfg: &SetupConfig, phi1: f64, phi2: f64) -> Result<PathDensityMatrix> {
    let m = build_transfer_matrix(cfg, phi1, phi2)?;
    if !(m.condition_number < SINGULAR_CONDITION) {
        return Err(Error::SingularTransferMatrix {
            condition: m.condition_number,
        });
    }
    let r = SVector::<f64, 9>::from_row_slice(rates);
    let x = m
        .matrix
        .lu()
        .solve(&r)
        .ok_or(Error::SingularTransferMatrix { condition: f64::INFINITY })?;
    let mut v = [0.0; PATH_PARAMS];
    v.copy_from_slice(x.as_slice());
    Ok(PathDensityMatrix::from_vector(&v))
}

#[derive(Clone, Debug)]
pub struct LinearReconstruction {
    /// Direct solution; Hermitian but possibly indefinite or off unit trace.
    pub raw: PathDensityMatrix,
    /// `raw / Tr(raw)`
    pub normalized: PathDensityMatrix,
    pub condition_number: f64,
    pub iterations: usize,
    /// Whether the denormalization reached a stationary point.
    pub converged: bool,
}

/// Reconstructs ρ from the nine records of the minimal complete set, given
/// in the order `R00, R01, R11, R33(φ₁), R34(φ₁), R45(φ₁), R33(φ₂), R34(φ₂),
/// R45(φ₂)`.
pub fn linear_reconstruct(
    records: &[MeasurementRecord],
    cfg: &SetupConfig,
    phi1: f64,
    phi2: f64,
) -> Result<LinearReconstruction> {
    if records.len() != 9 {
        return Err(Error::RecordLayout(format!(
            "linear inversion needs 9 records, got {}",
            records.len()
        )));
    }
    for (k, (rec, kind)) in records.iter().zip(COMPLETE_SET).enumerate() {
        if rec.pair_kind != kind {
            return Err(Error::RecordLayout(format!(
                "record {k} is {} but {kind} is expected",
                rec.pair_kind
            )));
        }
        if let Some(phase) = rec.phase_bin_center {
            let expected = if k < 6 { phi1 } else { phi2 };
            if (phase - expected).abs() > 1e-9 {
                return Err(Error::RecordLayout(format!(
                    "record {k} has phase {phase} but the design uses {expected}"
                )));
            }
        }
    }
    let transfer = build_transfer_matrix(cfg, phi1, phi2)?;
    if !(transfer.condition_number < SINGULAR_CONDITION) {
        return Err(Error::SingularTransferMatrix {
            condition: transfer.condition_number,
        });
    }
    let prepared = prepare_path_records(records, cfg)?;
    let fit = self_consistent_fit(&prepared)?;
    Ok(LinearReconstruction {
        normalized: fit.raw.normalized_by_trace(),
        raw: fit.raw,
        condition_number: transfer.condition_number,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

pub(crate) struct SelfConsistentFit {
    pub raw: PathDensityMatrix,
    pub iterations: usize,
    pub converged: bool,
}

fn design_rows(prepared: &[PreparedRecord]) -> Vec<[f64; PATH_PARAMS]> {
    prepared
        .iter()
        .map(|p| design_row(&nalgebra::Matrix3::from_fn(|r, c| p.numerator[(r, c)])))
        .collect()
}

fn dot(a: &[f64; PATH_PARAMS], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Weighted residuals `(N(x)/D(x/Tr x) − R)/σ`; `None` where the model
/// is undefined.
fn residuals(prepared: &[PreparedRecord], rows: &[[f64; PATH_PARAMS]], x: &[f64]) -> Option<DVector<f64>> {
    let mut v = [0.0; PATH_PARAMS];
    v.copy_from_slice(x);
    let raw = PathDensityMatrix::from_vector(&v);
    let tr = raw.trace();
    if !(tr.abs() > RATE_FLOOR) {
        return None;
    }
    let rho = DMatrix::from_fn(3, 3, |r, c| raw.matrix()[(r, c)] / tr);
    let mut out = DVector::zeros(prepared.len());
    for (k, p) in prepared.iter().enumerate() {
        let d = p.denominator(&rho);
        if !(d > RATE_FLOOR) {
            return None;
        }
        out[k] = (dot(&rows[k], x) / d - p.target) / p.sigma;
    }
    Some(out)
}

/// Solves the normalized-rate equations without positivity constraints.
///
/// Denominators are first taken from a reference state, which turns the
/// problem into one weighted linear solve; a damped Gauss–Newton refinement
/// then treats them as functions of the estimate itself. The equations can
/// have spurious local solutions and, for nine records, several exact
/// ones, so seeded reference states are tried after the maximally mixed
/// one. The best fit wins, and among equally good fits the one closest to
/// a physical state. The trace of the result is fixed by the data and may
/// differ from one.
pub(crate) fn self_consistent_fit(prepared: &[PreparedRecord]) -> Result<SelfConsistentFit> {
    let rows = design_rows(prepared);
    let mut rng = ChaCha8Rng::seed_from_u64(0x11ea);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut found: Vec<(f64, SelfConsistentFit)> = Vec::new();
    let mut first_error = None;
    for attempt in 0..=EXTRA_STARTS {
        let reference = if attempt == 0 {
            maximally_mixed()
        } else {
            let t: Vec<f64> = (0..PATH_PARAMS).map(|_| normal.sample(&mut rng)).collect();
            density_from_params(&t).unwrap_or_else(maximally_mixed)
        };
        match refine(prepared, &rows, &reference) {
            Ok(candidate) => found.push(candidate),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let min_cost = found.iter().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    if !min_cost.is_finite() {
        return Err(first_error.unwrap_or_else(|| Error::InsufficientDesign("no start reached a solution".into())));
    }
    // Several states can fit equally well; prefer the least unphysical one.
    let tie = (min_cost * (1.0 + 1e-9)).max(EXACT_COST * prepared.len() as f64);
    let negativity = |fit: &SelfConsistentFit| {
        let tr = fit.raw.trace();
        -(fit.raw.eigenvalues()[0] / tr)
    };
    Ok(found
        .into_iter()
        .filter(|(c, _)| *c <= tie)
        .map(|(_, fit)| fit)
        .min_by(|a, b| negativity(a).total_cmp(&negativity(b)))
        .expect("the best start is within the tie band"))
}

/// Linear solve with the singles of `reference`, then Gauss–Newton on the
/// normalized equations. Returns the final squared residual.
fn refine(
    prepared: &[PreparedRecord],
    rows: &[[f64; PATH_PARAMS]],
    reference: &PathDensityMatrix,
) -> Result<(f64, SelfConsistentFit)> {
    let n = prepared.len();
    let start = DMatrix::from_fn(3, 3, |r, c| reference.matrix()[(r, c)]);
    let mut a = DMatrix::zeros(n, PATH_PARAMS);
    let mut b = DVector::zeros(n);
    for (k, p) in prepared.iter().enumerate() {
        let d = p.denominator(&start);
        if !(d > RATE_FLOOR) {
            let (i, j) = p.kind.detectors();
            let which = if expect(&start, &p.singles_i) <= RATE_FLOOR { i } else { j };
            return Err(Error::DivisionByZeroSingles(which.to_string()));
        }
        let w = 1.0 / (p.sigma * d);
        for c in 0..PATH_PARAMS {
            a[(k, c)] = rows[k][c] * w;
        }
        b[k] = p.target * d * w;
    }
    let mut x: Vec<f64> = a
        .svd(true, true)
        .solve(&b, 1e-15)
        .map_err(|e| Error::InsufficientDesign(e.to_string()))?
        .iter()
        .copied()
        .collect();

    let mut r = residuals(prepared, rows, &x)
        .ok_or_else(|| Error::InsufficientDesign("initial estimate has vanishing singles".into()))?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && !converged {
        iterations += 1;
        let mut jac = DMatrix::zeros(n, PATH_PARAMS);
        for c in 0..PATH_PARAMS {
            let h = 1e-7 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            match (residuals(prepared, rows, &xp), residuals(prepared, rows, &xm)) {
                (Some(rp), Some(rm)) => jac.set_column(c, &((rp - rm) / (2.0 * h))),
                _ => return Err(Error::InsufficientDesign("estimate left the model domain".into())),
            }
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        loop {
            let mut damped = jtj.clone();
            for c in 0..PATH_PARAMS {
                damped[(c, c)] += lambda * jtj[(c, c)].max(1e-12);
            }
            let step = damped
                .clone()
                .svd(true, true)
                .solve(&(-&grad), 1e-15)
                .map_err(|e| Error::InsufficientDesign(e.to_string()))?;
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let trial_r = residuals(prepared, rows, &trial);
            let trial_cost = trial_r.as_ref().map_or(f64::INFINITY, |t| t.norm_squared());
            if trial_cost <= cost {
                let size = step.amax() / x.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
                x = trial;
                r = trial_r.expect("finite cost");
                let gain = cost - trial_cost;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                converged = size < STATIONARY_TOL || gain <= 1e-30 || cost == 0.0;
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    let mut v = [0.0; PATH_PARAMS];
    v.copy_from_slice(&x);
    Ok((
        cost,
        SelfConsistentFit {
            raw: PathDensityMatrix::from_vector(&v),
            iterations,
            converged,
        },
    ))
}
