//! Records turned into operator triples (numerator and the two singles
//! observables of the side-peak level) ready for repeated evaluation.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3};

use crate::correlations::{observable_operator, Observable, RateKind, StagePropagator, RATE_FLOOR};
use crate::optics::SetupConfig;
use crate::records::MeasurementRecord;
use crate::tomography::{condition_number, design_row};
use crate::{Error, Result, C64};

/// Operators of one record on a `d`-dimensional input space.
#[derive(Clone, Debug)]
pub(crate) struct PreparedRecord {
    pub kind: RateKind,
    pub numerator: DMatrix<C64>,
    pub singles_i: DMatrix<C64>,
    pub singles_j: DMatrix<C64>,
    pub factor: f64,
    pub target: f64,
    pub sigma: f64,
}

/// `Re Tr[ρ O]`
pub(crate) fn expect(rho: &DMatrix<C64>, op: &DMatrix<C64>) -> f64 {
    let n = rho.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (rho[(i, j)] * op[(j, i)]).re;
        }
    }
    acc
}

impl PreparedRecord {
    /// Side-peak level predicted for `rho`.
    pub fn denominator(&self, rho: &DMatrix<C64>) -> f64 {
        self.factor * expect(rho, &self.singles_i) * expect(rho, &self.singles_j)
    }

    /// Model normalized rate with the denominator floored at [`RATE_FLOOR`].
    pub fn model_rate(&self, rho: &DMatrix<C64>) -> f64 {
        expect(rho, &self.numerator) / self.denominator(rho).max(RATE_FLOOR)
    }
}

/// Weighted squared residual `Σ (R(ρ) − R)² / σ²`.
pub(crate) fn chi_square(prepared: &[PreparedRecord], rho: &DMatrix<C64>) -> f64 {
    prepared
        .iter()
        .map(|p| {
            let r = (p.model_rate(rho) - p.target) / p.sigma;
            r * r
        })
        .sum()
}

/// Builds stage propagators once per distinct phase.
pub(crate) struct StageCache<'a> {
    cfg: &'a SetupConfig,
    stages: HashMap<u64, StagePropagator>,
}

impl<'a> StageCache<'a> {
    pub fn new(cfg: &'a SetupConfig) -> Self {
        Self {
            cfg,
            stages: HashMap::new(),
        }
    }

    pub fn get(&mut self, phi: f64) -> Result<&StagePropagator> {
        let key = phi.to_bits();
        if !self.stages.contains_key(&key) {
            self.stages.insert(key, StagePropagator::new(self.cfg, phi)?);
        }
        Ok(&self.stages[&key])
    }
}

fn to_dynamic(m: &Matrix3<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

/// Prepares records for the indistinguishable-photon (3×3) model.
pub(crate) fn prepare_path_records(records: &[MeasurementRecord], cfg: &SetupConfig) -> Result<Vec<PreparedRecord>> {
    cfg.validate()?;
    let mut cache = StageCache::new(cfg);
    records
        .iter()
        .map(|rec| {
            rec.validate()?;
            let stage = if rec.pair_kind.is_phase_dependent() {
                Some(cache.get(rec.model_phase())?)
            } else {
                None
            };
            let op = |o: Observable| observable_operator(o, stage).map(|m| to_dynamic(&m));
            let (si, sj, factor) = rec.pair_kind.normalization();
            Ok(PreparedRecord {
                kind: rec.pair_kind,
                numerator: op(rec.pair_kind.observable())?,
                singles_i: op(si)?,
                singles_j: op(sj)?,
                factor,
                target: rec.normalized_rate,
                sigma: rec.sigma,
            })
        })
        .collect()
}

/// Condition number of the stacked numerator design rows of a record set
/// under the 3×3 model.
pub fn design_condition(records: &[MeasurementRecord], cfg: &SetupConfig) -> Result<f64> {
    let prepared = prepare_path_records(records, cfg)?;
    Ok(path_design_condition(&prepared))
}

pub(crate) fn path_design_condition(prepared: &[PreparedRecord]) -> f64 {
    if prepared.len() < 9 {
        return f64::INFINITY;
    }
    let rows: Vec<[f64; 9]> = prepared
        .iter()
        .map(|p| design_row(&Matrix3::from_fn(|r, c| p.numerator[(r, c)])))
        .collect();
    let m = DMatrix::from_fn(rows.len(), 9, |r, c| rows[r][c]);
    condition_number(&m)
}

pub(crate) fn require_design(condition: f64, needed: usize, available: usize) -> Result<()> {
    if available < needed {
        return Err(Error::InsufficientDesign(format!(
            "{available} records for {needed} parameters"
        )));
    }
    if !(condition < crate::tomography::SINGULAR_CONDITION) {
        return Err(Error::InsufficientDesign(format!(
            "design condition number {condition:.3e}"
        )));
    }
    Ok(())
}
