//! Synthetic acquisition campaigns.
//!
//! The interferometer phase drifts as a Gaussian random walk. Every probe
//! interval the phase is read off a single-photon shutter signal, the
//! elapsed time is credited to a phase bin, and coincidence counts for the
//! bin accumulate at the true phase. At the end each bin yields one
//! record per phase-dependent rate kind: a Poisson center-peak count
//! divided by the mean of several Poisson side-peak counts.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::correlations::{normalize, predict_observable, Observable, RateKind};
use crate::distinguishability::{predict_vis_observable, VisDensityMatrix};
use crate::optics::{build_analysis_setup, element_transform, Element, SetupConfig};
use crate::records::MeasurementRecord;
use crate::state::PathDensityMatrix;
use crate::{Error, Result, C64};

/// Slack on the shutter calibration range, relative to `iMax − iMin`.
pub const CALIBRATION_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PhaseMode {
    /// Bins follow the shutter estimate, folded into `[0, π]`.
    #[default]
    Experimental,
    /// Bins follow the true phase wrapped into `[0, 2π)`.
    GroundTruth,
}

fn default_shutter_period() -> f64 {
    600.0
}
fn default_probe_interval() -> f64 {
    10.0
}
fn default_pulse_rate() -> f64 {
    82e6
}
fn default_bin_count() -> usize {
    20
}
fn default_side_peaks() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentPlan {
    pub duration_seconds: f64,
    /// Typical time for the phase to wander by 2π.
    #[serde(default = "default_shutter_period")]
    pub shutter_period_seconds: f64,
    #[serde(default = "default_probe_interval")]
    pub probe_interval_seconds: f64,
    /// Phase diffusion in rad²/s; derived from the shutter period if absent.
    #[serde(default)]
    pub phase_diffusion: Option<f64>,
    #[serde(default = "default_pulse_rate")]
    pub pulse_rate_hz: f64,
    pub flux_per_pulse: f64,
    #[serde(default = "default_bin_count")]
    pub bin_count: usize,
    /// Acquisition time of the phase-independent rates; one average bin if absent.
    #[serde(default)]
    pub static_seconds: Option<f64>,
    #[serde(default = "default_side_peaks")]
    pub side_peaks: usize,
    #[serde(default)]
    pub phase_mode: PhaseMode,
    pub seed: u64,
}

impl ExperimentPlan {
    pub fn new(duration_seconds: f64, flux_per_pulse: f64, seed: u64) -> Self {
        Self {
            duration_seconds,
            shutter_period_seconds: default_shutter_period(),
            probe_interval_seconds: default_probe_interval(),
            phase_diffusion: None,
            pulse_rate_hz: default_pulse_rate(),
            flux_per_pulse,
            bin_count: default_bin_count(),
            static_seconds: None,
            side_peaks: default_side_peaks(),
            phase_mode: PhaseMode::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("durationSeconds", self.duration_seconds),
            ("shutterPeriodSeconds", self.shutter_period_seconds),
            ("probeIntervalSeconds", self.probe_interval_seconds),
            ("pulseRateHz", self.pulse_rate_hz),
            ("fluxPerPulse", self.flux_per_pulse),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(d) = self.phase_diffusion {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("phaseDiffusion must be non-negative, got {d}")));
            }
        }
        if let Some(s) = self.static_seconds {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("staticSeconds must be positive, got {s}")));
            }
        }
        if self.bin_count < 2 {
            return Err(Error::InvalidParameter(format!("binCount must be at least 2, got {}", self.bin_count)));
        }
        if self.side_peaks == 0 {
            return Err(Error::InvalidParameter("sidePeaks must be at least 1".into()));
        }
        Ok(())
    }

    /// Phase variance per second.
    pub fn diffusion(&self) -> f64 {
        self.phase_diffusion
            .unwrap_or(TAU * TAU / self.shutter_period_seconds)
    }

    pub fn static_acquisition_seconds(&self) -> f64 {
        self.static_seconds
            .unwrap_or(self.duration_seconds / self.bin_count as f64)
    }

    /// Expected pair detections per second of acquisition.
    fn pair_rate(&self) -> f64 {
        self.flux_per_pulse * self.pulse_rate_hz
    }
}

/// Phase probed at regular intervals. Sample `k` holds the phase at the
/// start of the `k`-th interval; the last interval may be shorter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseTrace {
    pub samples: Vec<(f64, f64)>,
    pub step_seconds: f64,
    pub duration_seconds: f64,
}

impl PhaseTrace {
    /// Length of each sample's interval.
    pub fn dwell_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .map(move |&(t, _)| (self.duration_seconds - t).min(self.step_seconds))
    }
}

/// Seeded random walk of the unwrapped phase.
pub fn generate_phase_trace(plan: &ExperimentPlan) -> Result<PhaseTrace> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    trace_with(plan, &mut rng)
}

fn trace_with(plan: &ExperimentPlan, rng: &mut ChaCha8Rng) -> Result<PhaseTrace> {
    let step = plan.probe_interval_seconds;
    let n = (plan.duration_seconds / step).ceil().max(1.0) as usize;
    let std = (plan.diffusion() * step).sqrt();
    let kick = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut phi = rng.random_range(0.0..TAU);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        samples.push((k as f64 * step, phi));
        phi += kick.sample(rng);
    }
    Ok(PhaseTrace {
        samples,
        step_seconds: step,
        duration_seconds: plan.duration_seconds,
    })
}

pub fn wrap_phase(phi: f64) -> f64 {
    phi.rem_euclid(TAU)
}

/// Maps φ to the `[0, π]` value with the same cosine.
pub fn fold_phase(phi: f64) -> f64 {
    let w = wrap_phase(phi);
    if w > PI {
        TAU - w
    } else {
        w
    }
}

/// Inverts the shutter fringe `I = iMin + (iMax − iMin)(1 + cos φ)/2`.
pub fn estimate_phase_from_shutter(intensity: f64, i_min: f64, i_max: f64) -> Result<f64> {
    if !(i_min < i_max) {
        return Err(Error::InvalidParameter(format!(
            "shutter calibration needs iMin < iMax, got {i_min} and {i_max}"
        )));
    }
    let eps = CALIBRATION_SLACK * (i_max - i_min);
    if !(intensity >= i_min - eps && intensity <= i_max + eps) {
        return Err(Error::CalibrationRange {
            intensity,
            min: i_min,
            max: i_max,
        });
    }
    let x = 2.0 * (intensity - i_min) / (i_max - i_min) - 1.0;
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// Path-3 detection probability of a single photon that entered the source
/// splitter through its first port.
pub fn shutter_intensity(cfg: &SetupConfig, phi: f64) -> Result<f64> {
    let labels = vec!["path0".to_string(), "path1".to_string()];
    let hom = element_transform(&Element::beam_splitter("path0", "path1", cfg.hom_reflectivity), &labels)?;
    let stage = build_analysis_setup(cfg, phi)?;
    let u = stage.matrix();
    let amp: C64 = (0..2).map(|k| u[(0, k)] * hom.matrix()[(k, 0)]).sum();
    Ok(amp.norm_sqr())
}

/// Shutter fringe extremes and whether the maximum sits at φ = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShutterCalibration {
    pub i_min: f64,
    pub i_max: f64,
    pub max_at_zero: bool,
}

impl ShutterCalibration {
    /// The fringe is `A + B cos φ` with real `B` for real splitter
    /// amplitudes, so its extremes sit at 0 and π.
    pub fn new(cfg: &SetupConfig) -> Result<Self> {
        let at0 = shutter_intensity(cfg, 0.0)?;
        let at_pi = shutter_intensity(cfg, PI)?;
        if (at0 - at_pi).abs() < 1e-12 {
            return Err(Error::InvalidParameter("shutter signal shows no fringe".into()));
        }
        Ok(Self {
            i_min: at0.min(at_pi),
            i_max: at0.max(at_pi),
            max_at_zero: at0 > at_pi,
        })
    }

    /// Folded phase estimate from one shutter reading.
    pub fn estimate(&self, intensity: f64) -> Result<f64> {
        let est = estimate_phase_from_shutter(intensity, self.i_min, self.i_max)?;
        Ok(if self.max_at_zero { est } else { PI - est })
    }
}

fn bin_index(phase: f64, range: f64, bin_count: usize) -> usize {
    ((phase / range * bin_count as f64).floor() as usize).min(bin_count - 1)
}

/// Acquisition seconds per bin of the folded phase over `[0, π]`.
pub fn bin_phases(trace: &PhaseTrace, bin_count: usize) -> Result<Vec<f64>> {
    if bin_count < 2 {
        return Err(Error::InvalidParameter(format!("binCount must be at least 2, got {bin_count}")));
    }
    let mut bins = vec![0.0; bin_count];
    for (&(_, phi), dt) in trace.samples.iter().zip(trace.dwell_times()) {
        bins[bin_index(fold_phase(phi), PI, bin_count)] += dt;
    }
    Ok(bins)
}

pub fn bin_centers(bin_count: usize, mode: PhaseMode) -> Vec<f64> {
    let range = match mode {
        PhaseMode::Experimental => PI,
        PhaseMode::GroundTruth => TAU,
    };
    (0..bin_count)
        .map(|k| (k as f64 + 0.5) * range / bin_count as f64)
        .collect()
}

/// State a campaign is generated from.
#[derive(Clone, Debug, PartialEq)]
pub enum TrueState {
    Path(PathDensityMatrix),
    Vis(VisDensityMatrix),
}

impl From<PathDensityMatrix> for TrueState {
    fn from(rho: PathDensityMatrix) -> Self {
        TrueState::Path(rho)
    }
}

impl From<VisDensityMatrix> for TrueState {
    fn from(rho: VisDensityMatrix) -> Self {
        TrueState::Vis(rho)
    }
}

impl TrueState {
    pub fn observable_rate(&self, cfg: &SetupConfig, phi: f64, observable: Observable) -> Result<f64> {
        match self {
            TrueState::Path(rho) => predict_observable(rho, cfg, phi, observable),
            TrueState::Vis(rho) => predict_vis_observable(rho, cfg, phi, observable),
        }
    }

    /// Numerator, and `factor·Sᵢ·Sⱼ`, of a normalized rate.
    pub fn rate_parts(&self, cfg: &SetupConfig, phi: f64, kind: RateKind) -> Result<(f64, f64)> {
        let (si, sj, factor) = kind.normalization();
        let num = self.observable_rate(cfg, phi, kind.observable())?;
        let den = factor * self.observable_rate(cfg, phi, si)? * self.observable_rate(cfg, phi, sj)?;
        Ok((num, den))
    }

    pub fn normalized_rate(&self, cfg: &SetupConfig, phi: f64, kind: RateKind) -> Result<f64> {
        let (si, sj, factor) = kind.normalization();
        let num = self.observable_rate(cfg, phi, kind.observable())?;
        let a = self.observable_rate(cfg, phi, si)?;
        let b = self.observable_rate(cfg, phi, sj)?;
        let (di, dj) = kind.detectors();
        normalize(num, a, b, factor, di, dj)
    }
}

/// Degree-two trigonometric polynomial, exact for every rate of a two-photon
/// state since the phase enters through one mode.
#[derive(Clone, Copy, Debug)]
struct Fringe {
    coeffs: [f64; 5],
}

impl Fringe {
    fn sample<F: Fn(f64) -> Result<f64>>(f: F) -> Result<Self> {
        let values = (0..5)
            .map(|k| f(TAU * k as f64 / 5.0))
            .collect::<Result<Vec<_>>>()?;
        let mut coeffs = [0.0; 5];
        for (k, v) in values.iter().enumerate() {
            let x = TAU * k as f64 / 5.0;
            coeffs[0] += v / 5.0;
            coeffs[1] += 2.0 * v * x.cos() / 5.0;
            coeffs[2] += 2.0 * v * x.sin() / 5.0;
            coeffs[3] += 2.0 * v * (2.0 * x).cos() / 5.0;
            coeffs[4] += 2.0 * v * (2.0 * x).sin() / 5.0;
        }
        Ok(Self { coeffs })
    }

    fn eval(&self, phi: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + c[1] * phi.cos() + c[2] * phi.sin() + c[3] * (2.0 * phi).cos() + c[4] * (2.0 * phi).sin()
    }
}

/// One drawn record: center count over mean side-peak count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakDraw {
    pub center: f64,
    pub side_mean: f64,
    pub normalized_rate: f64,
    pub sigma: f64,
}

fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lambda > 0.0 {
        Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Draws a center peak with mean `center_mean` and `side_peaks` side peaks
/// with mean `side_mean` each. `None` when every side peak comes up empty.
pub fn draw_peaks(center_mean: f64, side_mean: f64, side_peaks: usize, rng: &mut ChaCha8Rng) -> Option<PeakDraw> {
    let c = poisson(center_mean, rng);
    let s: f64 = (0..side_peaks).map(|_| poisson(side_mean, rng)).sum::<f64>() / side_peaks as f64;
    if s <= 0.0 {
        return None;
    }
    // First-order propagation for a Poisson ratio; an empty center peak still
    // carries the uncertainty of one count.
    let var = c.max(1.0) / (s * s) + c * c / (side_peaks as f64 * s * s * s);
    Some(PeakDraw {
        center: c,
        side_mean: s,
        normalized_rate: c / s,
        sigma: var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SkippedBin {
    pub index: usize,
    pub phase_bin_center: f64,
    pub seconds: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub records: Vec<MeasurementRecord>,
    /// Acquisition seconds per phase bin.
    pub bin_seconds: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub skipped: Vec<SkippedBin>,
    pub trace: PhaseTrace,
}

/// Runs one synthetic acquisition.
///
/// Expected side-peak counts are `flux · pulseRate · t · factor·Sᵢ·Sⱼ` and
/// the center peak is the model's raw rate on the same scale, so that the
/// ratio estimates the model's normalized rate.
pub fn sample_campaign(state: &TrueState, cfg: &SetupConfig, plan: &ExperimentPlan) -> Result<Campaign> {
    plan.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let trace = trace_with(plan, &mut rng)?;
    let calibration = ShutterCalibration::new(cfg)?;

    let kinds = RateKind::PHASE_DEPENDENT;
    let fringes = kinds
        .iter()
        .map(|&kind| {
            let num = Fringe::sample(|phi| Ok(state.rate_parts(cfg, phi, kind)?.0))?;
            let den = Fringe::sample(|phi| Ok(state.rate_parts(cfg, phi, kind)?.1))?;
            Ok((num, den))
        })
        .collect::<Result<Vec<_>>>()?;
    let shutter = Fringe::sample(|phi| shutter_intensity(cfg, phi))?;

    let n = plan.bin_count;
    let range = match plan.phase_mode {
        PhaseMode::Experimental => PI,
        PhaseMode::GroundTruth => TAU,
    };
    let mut seconds = vec![0.0; n];
    // Per bin and kind: time-integrated numerator and denominator rates.
    let mut exposure = vec![[(0.0, 0.0); 4]; n];
    for (&(_, phi), dt) in trace.samples.iter().zip(trace.dwell_times()) {
        let measured = match plan.phase_mode {
            PhaseMode::Experimental => calibration.estimate(shutter.eval(phi).clamp(calibration.i_min, calibration.i_max))?,
            PhaseMode::GroundTruth => wrap_phase(phi),
        };
        let b = bin_index(measured, range, n);
        seconds[b] += dt;
        for (slot, (num, den)) in fringes.iter().enumerate() {
            exposure[b][slot].0 += dt * num.eval(phi).max(0.0);
            exposure[b][slot].1 += dt * den.eval(phi).max(0.0);
        }
    }

    let centers = bin_centers(n, plan.phase_mode);
    let scale = plan.pair_rate();
    let mut records = Vec::new();
    let mut skipped = Vec::new();

    let t_static = plan.static_acquisition_seconds();
    for kind in RateKind::STATIC {
        let (num, den) = state.rate_parts(cfg, 0.0, kind)?;
        match draw_peaks(scale * t_static * num, scale * t_static * den, plan.side_peaks, &mut rng) {
            Some(d) => records.push(MeasurementRecord {
                pair_kind: kind,
                phase_bin_center: None,
                normalized_rate: d.normalized_rate,
                sigma: d.sigma,
                acquisition_weight: t_static,
            }),
            None => {
                return Err(Error::InvalidParameter(format!(
                    "no side-peak counts for {kind}; raise fluxPerPulse or staticSeconds"
                )))
            }
        }
    }

    for b in 0..n {
        if seconds[b] <= 0.0 {
            skipped.push(SkippedBin {
                index: b,
                phase_bin_center: centers[b],
                seconds: 0.0,
                reason: "no acquisition time".into(),
            });
            continue;
        }
        for (slot, &kind) in kinds.iter().enumerate() {
            let (num, den) = exposure[b][slot];
            match draw_peaks(scale * num, scale * den, plan.side_peaks, &mut rng) {
                Some(d) => records.push(MeasurementRecord {
                    pair_kind: kind,
                    phase_bin_center: Some(centers[b]),
                    normalized_rate: d.normalized_rate,
                    sigma: d.sigma,
                    acquisition_weight: seconds[b],
                }),
                None => skipped.push(SkippedBin {
                    index: b,
                    phase_bin_center: centers[b],
                    seconds: seconds[b],
                    reason: format!("no side-peak counts for {kind}"),
                }),
            }
        }
    }

    Ok(Campaign {
        records,
        bin_seconds: seconds,
        bin_centers: centers,
        skipped,
        trace,
    })
}

/// Model values of a design, each with the given sigma.
pub fn noiseless_records(
    state: &TrueState,
    cfg: &SetupConfig,
    design: &[(RateKind, Option<f64>)],
    sigma: f64,
) -> Result<Vec<MeasurementRecord>> {
    design
        .iter()
        .map(|&(kind, phase)| {
            Ok(MeasurementRecord {
                pair_kind: kind,
                phase_bin_center: phase,
                normalized_rate: state.normalized_rate(cfg, phase.unwrap_or(0.0), kind)?,
                sigma,
                acquisition_weight: 1.0,
            })
        })
        .collect()
}

/// Poisson-sampled records of a fixed design. `exposure` is the expected
/// count in each side peak, so center peaks hold about `exposure` times the
/// normalized rate.
pub fn sample_design(
    state: &TrueState,
    cfg: &SetupConfig,
    design: &[(RateKind, Option<f64>)],
    exposure: f64,
    side_peaks: usize,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    if !(exposure > 0.0) || side_peaks == 0 {
        return Err(Error::InvalidParameter("exposure and side-peak count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    design
        .iter()
        .map(|&(kind, phase)| {
            let rate = state.normalized_rate(cfg, phase.unwrap_or(0.0), kind)?;
            let d = draw_peaks(exposure * rate, exposure, side_peaks, &mut rng)
                .ok_or_else(|| Error::InvalidParameter(format!("no side-peak counts for {kind}")))?;
            Ok(MeasurementRecord {
                pair_kind: kind,
                phase_bin_center: phase,
                normalized_rate: d.normalized_rate,
                sigma: d.sigma,
                acquisition_weight: exposure,
            })
        })
        .collect()
}

/// Minimal complete design at `(phi1, phi2)`.
pub fn complete_design(phi1: f64, phi2: f64) -> Vec<(RateKind, Option<f64>)> {
    crate::correlations::COMPLETE_SET
        .iter()
        .zip(crate::correlations::COMPLETE_SET_PHASE)
        .map(|(&kind, slot)| {
            let phase = match slot {
                0 => None,
                1 => Some(phi1),
                _ => Some(phi2),
            };
            (kind, phase)
        })
        .collect()
}

/// The three static rates plus every phase-dependent rate at each phase.
pub fn overcomplete_design(phases: &[f64]) -> Vec<(RateKind, Option<f64>)> {
    let mut design: Vec<_> = RateKind::STATIC.iter().map(|&k| (k, None)).collect();
    for &phi in phases {
        design.extend(RateKind::PHASE_DEPENDENT.iter().map(|&k| (k, Some(phi))));
    }
    design
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::noon_state;

    #[test]
    fn shutter_examples() {
        assert!(estimate_phase_from_shutter(2.0, 1.0, 2.0).unwrap().abs() < 1e-15);
        assert!((estimate_phase_from_shutter(1.0, 1.0, 2.0).unwrap() - PI).abs() < 1e-15);
        assert!((estimate_phase_from_shutter(1.5, 1.0, 2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(matches!(
            estimate_phase_from_shutter(2.1, 1.0, 2.0),
            Err(Error::CalibrationRange { .. })
        ));
        assert!(estimate_phase_from_shutter(1.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn shutter_recovers_folded_phase() {
        for cfg in [SetupConfig::balanced_lossless(), SetupConfig::measured_source(0.6)] {
            let cal = ShutterCalibration::new(&cfg).unwrap();
            for k in 0..40 {
                let phi = -3.0 + 0.17 * k as f64;
                let est = cal.estimate(shutter_intensity(&cfg, phi).unwrap()).unwrap();
                assert!((est - fold_phase(phi)).abs() < 1e-6, "{phi}: {est}");
            }
        }
    }

    #[test]
    fn fringe_is_exact_for_rates() {
        let cfg = SetupConfig::measured_source(0.7);
        let state = TrueState::Path(crate::state::tilted_noon(0.3, 0.9));
        for kind in RateKind::PHASE_DEPENDENT {
            let f = Fringe::sample(|phi| Ok(state.rate_parts(&cfg, phi, kind)?.0)).unwrap();
            for phi in [0.1, 1.3, 2.9, 4.4] {
                let direct = state.rate_parts(&cfg, phi, kind).unwrap().0;
                assert!((f.eval(phi) - direct).abs() < 1e-12, "{kind}");
            }
        }
    }

    #[test]
    fn trace_is_seeded_and_uniform() {
        let plan = ExperimentPlan::new(3600.0, 1e-6, 7);
        let a = generate_phase_trace(&plan).unwrap();
        let b = generate_phase_trace(&plan).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.windows(2).all(|w| (w[1].0 - w[0].0 - 10.0).abs() < 1e-9));
        let c = generate_phase_trace(&ExperimentPlan { seed: 8, ..plan }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_diffusion_holds_phase() {
        let plan = ExperimentPlan {
            phase_diffusion: Some(0.0),
            ..ExperimentPlan::new(1000.0, 1e-6, 3)
        };
        let trace = generate_phase_trace(&plan).unwrap();
        let phi0 = trace.samples[0].1;
        assert!(trace.samples.iter().all(|&(_, p)| p == phi0));
        let bins = bin_phases(&trace, 20).unwrap();
        assert_eq!(bins.iter().filter(|&&s| s > 0.0).count(), 1);
    }

    #[test]
    fn diffusion_calibration() {
        let mut total = 0.0;
        for seed in 0..100 {
            let plan = ExperimentPlan::new(600.0 + 10.0, 1e-6, seed);
            let trace = generate_phase_trace(&plan).unwrap();
            let first = trace.samples[0].1;
            let at600 = trace.samples[60].1;
            total += (at600 - first).abs();
        }
        let mean = total / 100.0;
        assert!((PI..=4.0 * PI).contains(&mean), "mean drift {mean}");
    }

    #[test]
    fn bins_conserve_duration_and_are_flat() {
        for seed in 0..5 {
            let plan = ExperimentPlan::new(36_000.0 + 3.0, 1e-6, seed);
            let trace = generate_phase_trace(&plan).unwrap();
            let bins = bin_phases(&trace, 20).unwrap();
            assert!((bins.iter().sum::<f64>() - plan.duration_seconds).abs() < 1e-9);
            let mean = plan.duration_seconds / 20.0;
            let lo = bins.iter().cloned().fold(f64::INFINITY, f64::min) / mean;
            let hi = bins.iter().cloned().fold(0.0, f64::max) / mean;
            assert!(lo >= 0.5 && hi <= 1.5, "seed {seed}: {lo} {hi}");
        }
    }

    fn ideal_plan(seed: u64) -> ExperimentPlan {
        ExperimentPlan::new(36_000.0, 2e-6, seed)
    }

    #[test]
    fn campaigns_are_reproducible() {
        let cfg = SetupConfig::measured_source(0.6);
        let state = TrueState::Path(noon_state());
        let a = sample_campaign(&state, &cfg, &ideal_plan(11)).unwrap();
        let b = sample_campaign(&state, &cfg, &ideal_plan(11)).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.records.len() <= 3 + 4 * 20);
        assert!(a.records.iter().all(|r| r.sigma > 0.0));
    }

    #[test]
    fn ideal_campaign_matches_model() {
        let cfg = SetupConfig::measured_source(0.6);
        let state = TrueState::Path(noon_state());
        let campaign = sample_campaign(&state, &cfg, &ideal_plan(5)).unwrap();
        let mut chi2 = 0.0;
        for rec in &campaign.records {
            let model = state.normalized_rate(&cfg, rec.model_phase(), rec.pair_kind).unwrap();
            chi2 += ((rec.normalized_rate - model) / rec.sigma).powi(2);
        }
        let dof = campaign.records.len() as f64;
        assert!(chi2 / dof < 2.0, "chi2/dof {}", chi2 / dof);
        let r01 = campaign.records.iter().find(|r| r.pair_kind == RateKind::R01).unwrap();
        assert!(r01.normalized_rate < 3.0 * r01.sigma + 0.01);
    }

    #[test]
    fn huge_flux_converges_to_model() {
        let cfg = SetupConfig::measured_source(0.6);
        let state = TrueState::Path(crate::state::tilted_noon(0.4, 0.5));
        let design = complete_design(0.3, 1.1);
        let records = sample_design(&state, &cfg, &design, 1e10, 4, 1).unwrap();
        for (rec, &(kind, phase)) in records.iter().zip(&design) {
            let model = state.normalized_rate(&cfg, phase.unwrap_or(0.0), kind).unwrap();
            assert!(rec.sigma < 1e-3);
            assert!((rec.normalized_rate - model).abs() < 3.0 * rec.sigma + 1e-12);
        }
    }

    #[test]
    fn sigma_scales_as_inverse_root_time() {
        let cfg = SetupConfig::measured_source(0.6);
        let state = TrueState::Path(noon_state());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, duration) in [3_600.0, 10_000.0, 36_000.0].into_iter().enumerate() {
            let plan = ExperimentPlan::new(duration, 2e-6, 100 + k as u64);
            let c = sample_campaign(&state, &cfg, &plan).unwrap();
            let mean_sigma = c.records.iter().map(|r| r.sigma.ln()).sum::<f64>() / c.records.len() as f64;
            xs.push(duration.ln());
            ys.push(mean_sigma);
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn path_and_embedded_vis_states_give_same_rates() {
        let cfg = SetupConfig::measured_source(0.8);
        let rho = crate::state::tilted_noon(0.2, 0.6);
        let path = TrueState::Path(rho.clone());
        let vis = TrueState::Vis(VisDensityMatrix::from_path(&rho));
        for (kind, phase) in overcomplete_design(&[0.2, 1.7]) {
            let a = path.normalized_rate(&cfg, phase.unwrap_or(0.0), kind).unwrap();
            let b = vis.normalized_rate(&cfg, phase.unwrap_or(0.0), kind).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn plan_json_defaults() {
        let plan: ExperimentPlan =
            serde_json::from_str(r#"{"durationSeconds": 3600, "fluxPerPulse": 1e-6, "seed": 4}"#).unwrap();
        assert_eq!(plan.bin_count, 20);
        assert_eq!(plan.side_peaks, 4);
        assert_eq!(plan.pulse_rate_hz, 82e6);
        assert_eq!(plan.phase_mode, PhaseMode::Experimental);
        assert!(ExperimentPlan { bin_count: 1, ..plan }.validate().is_err());
    }
}
