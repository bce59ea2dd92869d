//! Nine-record maximum-likelihood fits over a grid of phase pairs.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::correlations::{RateKind, COMPLETE_SET, COMPLETE_SET_PHASE};
use crate::optics::SetupConfig;
use crate::records::MeasurementRecord;
use crate::state::noon_amplitudes;
use crate::tomography::mle::{mle_reconstruct, MleOptions};
use crate::tomography::{build_transfer_matrix, fidelity, SINGULAR_CONDITION};
use crate::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ScanOptions {
    /// Width of the phase bins; inferred from the record phases when `None`.
    pub bin_width: Option<f64>,
    pub mle: MleOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanCell {
    pub phi1: f64,
    pub phi2: f64,
    /// Bin centers actually used.
    pub bin1: f64,
    pub bin2: f64,
    /// `None` for singular designs.
    pub fidelity: Option<f64>,
    pub converged: bool,
    pub singular: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationStat {
    /// `|φ₂ − φ₁|` between the selected bin centers.
    pub separation: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub cells: Vec<ScanCell>,
    pub by_separation: Vec<SeparationStat>,
}

/// Smallest positive spacing between distinct phase-bin centers.
pub fn infer_bin_width(records: &[MeasurementRecord]) -> Option<f64> {
    let mut phases: Vec<f64> = records.iter().filter_map(|r| r.phase_bin_center).collect();
    phases.sort_by(|a, b| a.total_cmp(b));
    phases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-12)
        .min_by(|a, b| a.total_cmp(b))
}

fn nearest(
    records: &[MeasurementRecord],
    kind: RateKind,
    phase: Option<f64>,
    half_width: f64,
) -> Result<&MeasurementRecord> {
    let candidates = records.iter().filter(|r| r.pair_kind == kind);
    let found = match phase {
        None => candidates.into_iter().next(),
        Some(phi) => candidates
            .filter_map(|r| r.phase_bin_center.map(|c| ((c - phi).abs(), r)))
            .filter(|(d, _)| *d <= half_width + 1e-9)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r),
    };
    found.ok_or_else(|| Error::MissingPhaseBin {
        kind: kind.to_string(),
        phase: phase.unwrap_or(f64::NAN),
    })
}

/// Picks the minimal complete set nearest to `(phi1, phi2)`.
pub fn select_complete_set(
    records: &[MeasurementRecord],
    phi1: f64,
    phi2: f64,
    bin_width: f64,
) -> Result<Vec<MeasurementRecord>> {
    let half = 0.5 * bin_width;
    COMPLETE_SET
        .iter()
        .zip(COMPLETE_SET_PHASE)
        .map(|(&kind, slot)| {
            let phase = match slot {
                0 => None,
                1 => Some(phi1),
                _ => Some(phi2),
            };
            nearest(records, kind, phase, half).cloned()
        })
        .collect()
}

fn scan_cell(
    records: &[MeasurementRecord],
    cfg: &SetupConfig,
    phi1: f64,
    phi2: f64,
    bin_width: f64,
    mle: &MleOptions,
) -> Result<ScanCell> {
    let subset = select_complete_set(records, phi1, phi2, bin_width)?;
    let bin1 = subset[3].model_phase();
    let bin2 = subset[6].model_phase();
    let mut cell = ScanCell {
        phi1,
        phi2,
        bin1,
        bin2,
        fidelity: None,
        converged: false,
        singular: false,
    };
    if !(build_transfer_matrix(cfg, bin1, bin2)?.condition_number < SINGULAR_CONDITION) {
        cell.singular = true;
        return Ok(cell);
    }
    match mle_reconstruct(&subset, cfg, mle) {
        Ok(fit) => {
            cell.fidelity = Some(fidelity(&fit.rho, &noon_amplitudes()));
            cell.converged = fit.converged;
        }
        Err(Error::InsufficientDesign(_)) => cell.singular = true,
        Err(e) => return Err(e),
    }
    Ok(cell)
}

/// Fidelity to the N00N state of nine-record fits at every grid point,
/// plus mean and standard deviation grouped by `|φ₂ − φ₁|`. Grid points are
/// evaluated in parallel on the current rayon pool.
pub fn fidelity_scan(
    records: &[MeasurementRecord],
    cfg: &SetupConfig,
    grid: &[(f64, f64)],
    opts: &ScanOptions,
) -> Result<ScanResult> {
    if grid.is_empty() {
        return Ok(ScanResult {
            cells: Vec::new(),
            by_separation: Vec::new(),
        });
    }
    let bin_width = opts
        .bin_width
        .or_else(|| infer_bin_width(records))
        .ok_or_else(|| Error::InsufficientDesign("records hold fewer than two phase bins".into()))?;
    let cells = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(phi1, phi2))| {
            let mle = MleOptions {
                seed: opts.mle.seed.wrapping_add(k as u64),
                ..opts.mle.clone()
            };
            scan_cell(records, cfg, phi1, phi2, bin_width, &mle)
        })
        .collect::<Result<Vec<_>>>()?;
    let by_separation = separation_stats(&cells);
    Ok(ScanResult { cells, by_separation })
}

pub fn separation_stats(cells: &[ScanCell]) -> Vec<SeparationStat> {
    let mut groups: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    for cell in cells {
        if let Some(f) = cell.fidelity {
            let sep = (cell.bin2 - cell.bin1).abs();
            let key = (sep * 1e9).round() as i64;
            groups.entry(key).or_insert((sep, Vec::new())).1.push(f);
        }
    }
    groups
        .into_values()
        .map(|(separation, values)| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            SeparationStat {
                separation,
                mean,
                std_dev: var.sqrt(),
                count,
            }
        })
        .collect()
}
