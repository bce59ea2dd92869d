use std::f64::consts::TAU;
use std::path::Path;

use anyhow::{anyhow, Context};
use pathtomo::correlations::RateKind;
use pathtomo::distinguishability::mle_reconstruct_vis;
use pathtomo::records::MeasurementRecord;
use pathtomo::state::{noon_amplitudes, PathDensityMatrix};
use pathtomo::synth::{sample_campaign, ExperimentPlan, TrueState};
use pathtomo::tomography::scan::{infer_bin_width, select_complete_set};
use pathtomo::tomography::{fidelity, fidelity_scan, linear_reconstruct, mle_reconstruct, MleOptions, ScanOptions};
use pathtomo::optics::SetupConfig;
use serde::Serialize;

use crate::io::{self, MatrixJson, RunManifest};
use crate::TomoMode;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_GENERATION: u8 = 3;
pub const EXIT_SINGULAR: u8 = 4;
pub const EXIT_NONCONVERGENCE: u8 = 5;

/// Scans with more failed cells than this fraction exit non-zero.
const SCAN_FAILURE_FRACTION: f64 = 0.1;
const CURVE_POINTS: usize = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code, e))
    }
}

/// Exit code for a reconstruction error.
fn reconstruction_failure(e: pathtomo::Error) -> Failure {
    use pathtomo::Error as E;
    let code = match e {
        E::SingularTransferMatrix { .. } | E::InsufficientDesign(_) => EXIT_SINGULAR,
        E::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        E::RecordLayout(_) | E::MissingPhaseBin { .. } => EXIT_INPUT,
        _ => EXIT_FAILURE,
    };
    Failure::new(code, e)
}

pub fn simulate(config: &Path, plan_path: &Path, state: &str, seed: Option<u64>, out: &Path) -> Outcome {
    let cfg = io::load_config(Some(config)).code(EXIT_INPUT)?;
    let mut plan: ExperimentPlan = io::read_json(plan_path).code(EXIT_INPUT)?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    let truth = io::load_state(state).code(EXIT_INPUT)?;
    let campaign = sample_campaign(&truth, &cfg, &plan).code(EXIT_GENERATION)?;
    for skip in &campaign.skipped {
        eprintln!(
            "skipped bin {} at {:.4} rad ({:.1} s): {}",
            skip.index, skip.phase_bin_center, skip.seconds, skip.reason
        );
    }
    io::save_records(out, &campaign.records).code(EXIT_FAILURE)?;
    RunManifest::new("simulate", &cfg, Some(plan.seed))
        .input(config)
        .input(plan_path)
        .input(state)
        .output(out)
        .write_beside(out)
        .code(EXIT_FAILURE)?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TomoReport {
    mode: &'static str,
    rho: MatrixJson,
    trace: f64,
    eigenvalues: Vec<f64>,
    fidelity: f64,
    objective: f64,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluations: Option<usize>,
    /// Linear mode: trace of the solution before normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_trace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition_number: Option<f64>,
    /// Linear mode: the bin centers used.
    #[serde(skip_serializing_if = "Option::is_none")]
    phases: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    antisym_pop: Option<f64>,
    manifest: String,
}

fn chi_square(records: &[MeasurementRecord], model: impl Fn(&MeasurementRecord) -> pathtomo::Result<f64>) -> f64 {
    records
        .iter()
        .map(|r| match model(r) {
            Ok(m) => ((m - r.normalized_rate) / r.sigma).powi(2),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

fn path_report(mode: &'static str, rho: &PathDensityMatrix, objective: f64, converged: bool, out: &Path) -> TomoReport {
    TomoReport {
        mode,
        rho: MatrixJson::from_matrix3(rho.matrix()),
        trace: rho.trace(),
        eigenvalues: rho.eigenvalues().to_vec(),
        fidelity: fidelity(rho, &noon_amplitudes()),
        objective,
        converged,
        evaluations: None,
        raw_trace: None,
        condition_number: None,
        phases: None,
        antisym_pop: None,
        manifest: io::manifest_path(out).display().to_string(),
    }
}

pub fn tomo(
    records_path: &Path,
    config: &Path,
    mode: TomoMode,
    phases: Option<(f64, f64)>,
    seed: u64,
    out: &Path,
) -> Outcome {
    let cfg = io::load_config(Some(config)).code(EXIT_INPUT)?;
    let records = io::load_records(records_path).code(EXIT_INPUT)?;
    let opts = MleOptions {
        seed,
        ..MleOptions::default()
    };
    let report = match mode {
        TomoMode::Linear => {
            let (phi1, phi2) =
                phases.ok_or_else(|| Failure::new(EXIT_INPUT, anyhow!("linear mode needs --phi1 and --phi2")))?;
            let width = infer_bin_width(&records).unwrap_or(f64::INFINITY);
            let subset = select_complete_set(&records, phi1, phi2, width).map_err(reconstruction_failure)?;
            let (b1, b2) = (subset[3].model_phase(), subset[6].model_phase());
            let fit = linear_reconstruct(&subset, &cfg, b1, b2).map_err(reconstruction_failure)?;
            let raw = TrueState::Path(fit.raw.clone());
            let unit = TrueState::Path(fit.normalized.clone());
            let objective = chi_square(&subset, |r| {
                let phi = r.model_phase();
                Ok(raw.rate_parts(&cfg, phi, r.pair_kind)?.0 / unit.rate_parts(&cfg, phi, r.pair_kind)?.1)
            });
            TomoReport {
                raw_trace: Some(fit.raw.trace()),
                condition_number: Some(fit.condition_number),
                phases: Some((b1, b2)),
                ..path_report("linear", &fit.normalized, objective, fit.converged, out)
            }
        }
        TomoMode::Mle => {
            let fit = mle_reconstruct(&records, &cfg, &opts).map_err(reconstruction_failure)?;
            TomoReport {
                evaluations: Some(fit.evaluations),
                ..path_report("mle", &fit.rho, fit.objective, fit.converged, out)
            }
        }
        TomoMode::Vis => {
            let fit = mle_reconstruct_vis(&records, &cfg, &opts).map_err(reconstruction_failure)?;
            let sym = PathDensityMatrix::new(fit.rho.sym_block).code(EXIT_FAILURE)?;
            let mut eigenvalues = sym.eigenvalues().to_vec();
            eigenvalues.push(fit.rho.antisym_pop);
            eigenvalues.sort_by(f64::total_cmp);
            let m4 = fit.rho.to_matrix4();
            TomoReport {
                mode: "vis",
                rho: MatrixJson::from_dmatrix(&nalgebra::DMatrix::from_fn(4, 4, |r, c| m4[(r, c)])),
                trace: fit.rho.trace(),
                eigenvalues,
                fidelity: fidelity(&sym, &noon_amplitudes()),
                objective: fit.objective,
                converged: fit.converged,
                evaluations: Some(fit.evaluations),
                raw_trace: None,
                condition_number: None,
                phases: None,
                antisym_pop: Some(fit.rho.antisym_pop),
                manifest: io::manifest_path(out).display().to_string(),
            }
        }
    };
    io::write_json(out, &report).code(EXIT_FAILURE)?;
    RunManifest::new("tomo", &cfg, Some(seed))
        .input(records_path)
        .input(config)
        .output(out)
        .write_beside(out)
        .code(EXIT_FAILURE)?;
    if !report.converged {
        return Err(Failure::new(
            EXIT_NONCONVERGENCE,
            anyhow!("fit did not converge (objective {:.6e}); best estimate written", report.objective),
        ));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("grid `{spec}` is not of the form n1xn2"))?;
    Ok((
        a.trim().parse().with_context(|| format!("grid size `{a}`"))?,
        b.trim().parse().with_context(|| format!("grid size `{b}`"))?,
    ))
}

/// `n` phases spread over the record bin centers, one per bin slice, so grid
/// points never sit on a bin boundary.
fn grid_axis(centers: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| centers[((k as f64 + 0.5) * centers.len() as f64 / n as f64) as usize])
        .collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ScanRow {
    phi1: f64,
    phi2: f64,
    bin1: f64,
    bin2: f64,
    fidelity: Option<f64>,
    converged: bool,
    singular: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SummaryRow {
    separation: f64,
    mean: f64,
    std_dev: f64,
    count: usize,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut empty = true;
    for row in rows {
        w.serialize(row)?;
        empty = false;
    }
    if empty {
        w.write_record(header)?;
    }
    w.flush()?;
    Ok(())
}

pub fn scan(records_path: &Path, config: &Path, grid: &str, jobs: Option<usize>, seed: u64, out: &Path) -> Outcome {
    let cfg = io::load_config(Some(config)).code(EXIT_INPUT)?;
    let records = io::load_records(records_path).code(EXIT_INPUT)?;
    let (n1, n2) = parse_grid(grid).code(EXIT_INPUT)?;

    let mut centers: Vec<f64> = records.iter().filter_map(|r| r.phase_bin_center).collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    let points: Vec<(f64, f64)> = if n1 == 0 || n2 == 0 {
        Vec::new()
    } else if centers.is_empty() {
        return Err(Failure::new(EXIT_INPUT, anyhow!("records hold no phase-dependent rates")));
    } else {
        let (a1, a2) = (grid_axis(&centers, n1), grid_axis(&centers, n2));
        a1.iter().flat_map(|&p| a2.iter().map(move |&q| (p, q))).collect()
    };

    let opts = ScanOptions {
        bin_width: None,
        mle: MleOptions {
            seed,
            ..MleOptions::default()
        },
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().code(EXIT_FAILURE)?;
    let result = pool
        .install(|| fidelity_scan(&records, &cfg, &points, &opts))
        .map_err(reconstruction_failure)?;

    let rows = result.cells.iter().map(|c| ScanRow {
        phi1: c.phi1,
        phi2: c.phi2,
        bin1: c.bin1,
        bin2: c.bin2,
        fidelity: c.fidelity,
        converged: c.converged,
        singular: c.singular,
    });
    write_csv(out, rows, &["phi1", "phi2", "bin1", "bin2", "fidelity", "converged", "singular"])
        .code(EXIT_FAILURE)?;
    let summary = io::summary_path(out);
    let stats = result.by_separation.iter().map(|s| SummaryRow {
        separation: s.separation,
        mean: s.mean,
        std_dev: s.std_dev,
        count: s.count,
    });
    write_csv(&summary, stats, &["separation", "mean", "stdDev", "count"]).code(EXIT_FAILURE)?;
    RunManifest::new("scan", &cfg, Some(seed))
        .input(records_path)
        .input(config)
        .output(out)
        .output(&summary)
        .write_beside(out)
        .code(EXIT_FAILURE)?;

    let failed = result.cells.iter().filter(|c| !c.singular && !c.converged).count();
    if !points.is_empty() && failed as f64 > SCAN_FAILURE_FRACTION * points.len() as f64 {
        return Err(Failure::new(
            EXIT_NONCONVERGENCE,
            anyhow!("{failed} of {} grid points failed to converge", points.len()),
        ));
    }
    Ok(())
}

pub fn curves(state: &str, config: Option<&Path>, normalized: bool, out: &Path) -> Outcome {
    let cfg: SetupConfig = io::load_config(config).code(EXIT_INPUT)?;
    let truth = io::load_state(state).code(EXIT_INPUT)?;
    let mut w = csv::Writer::from_path(out).code(EXIT_FAILURE)?;
    let mut header = vec!["phi".to_string()];
    header.extend(RateKind::ALL.iter().map(|k| k.name().to_string()));
    w.write_record(&header).code(EXIT_FAILURE)?;
    for j in 0..CURVE_POINTS {
        let phi = TAU * j as f64 / CURVE_POINTS as f64;
        let mut row = vec![phi.to_string()];
        for kind in RateKind::ALL {
            let v = if normalized {
                truth.normalized_rate(&cfg, phi, kind)
            } else {
                truth.rate_parts(&cfg, phi, kind).map(|p| p.0)
            }
            .code(EXIT_FAILURE)?;
            row.push(v.to_string());
        }
        w.write_record(&row).code(EXIT_FAILURE)?;
    }
    w.flush().code(EXIT_FAILURE)?;
    let mut manifest = RunManifest::new("curves", &cfg, None).input(state).output(out);
    if let Some(c) = config {
        manifest = manifest.input(c);
    }
    manifest.write_beside(out).code(EXIT_FAILURE)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("10x12").unwrap(), (10, 12));
        assert_eq!(parse_grid("0x0").unwrap(), (0, 0));
        assert!(parse_grid("10").is_err());
        assert!(parse_grid("ax2").is_err());
    }

    #[test]
    fn grid_axis_picks_bin_centers() {
        let centers: Vec<f64> = (0..20).map(|k| (k as f64 + 0.5) * PI / 20.0).collect();
        let axis = grid_axis(&centers, 10);
        assert_eq!(axis.len(), 10);
        assert_eq!(axis[0], centers[1]);
        assert_eq!(axis[9], centers[19]);
        assert_eq!(grid_axis(&centers, 40).len(), 40);
    }
}
