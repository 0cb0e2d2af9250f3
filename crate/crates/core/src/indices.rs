//! Oscillation and recovery indices, their thresholds and the assembled
//! stability assessment.

use serde::{Deserialize, Serialize};

use crate::distribution::{gompertz_reference, histogram, kl_divergence, DivergenceHistogram, GompertzReference, Grid};
use crate::emd::{self, DecompositionResult, EmdConfig};
use crate::embed::{self, EmbedConfig, EmbedError};
use crate::ingest::{self, VoltageTrajectory};
use crate::lyapunov::{self, ExponentSeries, LyapunovError};
use crate::oel::{
    self, construct_critical_signals, fit_qv, shifted_critical_pair, tune_gamma, GeneratorSpec, OelCharacteristic,
    OelError, OelParameters, SearchRanges, TuningResult,
};
use crate::Error;

/// Reference shift used for the oscillation index.
pub const OSCILLATION_X_STAR: f64 = 1.0;
pub const DEFAULT_GAMMA2: f64 = 10.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IndicesError {
    #[error("threshold grid [{lo}, {hi}) does not contain x = 1")]
    GridMissesOne { lo: f64, hi: f64 },
    #[error("threshold needs a bin on each side of the bin at x = 1 ({bins} bins)")]
    NoNeighbourBins { bins: usize },
    #[error("generator `{0}` has no matching voltage channel")]
    UnknownGenerator(String),
    #[error("analysis window must be at least 2 samples, got {0}")]
    WindowTooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Unstable,
    Critical,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Critical => "critical",
        }
    }
}

/// Relative widening of the critical band that absorbs rounding in the
/// threshold.
const BAND_SLACK: f64 = 1e-12;

/// Places `index` against `threshold` with a critical band of width
/// `epsilon`. Returns the class and the margin in percent. Expects
/// `threshold > 0` and `epsilon >= 0`.
pub fn classify(index: f64, threshold: f64, epsilon: f64) -> (Classification, f64) {
    let half = 0.5 * epsilon + BAND_SLACK * threshold.abs();
    let class = if index < threshold - half {
        Classification::Stable
    } else if index > threshold + half {
        Classification::Unstable
    } else {
        Classification::Critical
    };
    (class, (index - threshold) / threshold * 100.0)
}

/// Critical oscillation value: KL from a distribution spread evenly over
/// three bins around `x = 1` to the Gompertz reference with shift 1. The
/// middle bin is the last one whose centre does not exceed 1.
pub fn imf_threshold(grid: Grid, gamma2: f64) -> Result<f64, Error> {
    Ok(imf_threshold_detail(grid, gamma2)?.0)
}

/// Threshold together with the three-bin distribution and the reference.
pub fn imf_threshold_detail(grid: Grid, gamma2: f64) -> Result<(f64, Vec<f64>, GompertzReference), Error> {
    let grid = Grid::new(grid.bins, grid.lo, grid.hi)?;
    if grid.bins < 3 {
        return Err(crate::distribution::DistributionError::TooFewBins(grid.bins).into());
    }
    if !(grid.lo <= OSCILLATION_X_STAR && OSCILLATION_X_STAR < grid.hi) {
        return Err(IndicesError::GridMissesOne { lo: grid.lo, hi: grid.hi }.into());
    }
    let position = (OSCILLATION_X_STAR - grid.lo) / grid.width() - 0.5;
    if position < 1.0 {
        return Err(IndicesError::NoNeighbourBins { bins: grid.bins }.into());
    }
    let middle = position.floor() as usize;
    if middle + 1 >= grid.bins {
        return Err(IndicesError::NoNeighbourBins { bins: grid.bins }.into());
    }
    let mut p = vec![0.0; grid.bins];
    for slot in &mut p[middle - 1..=middle + 1] {
        *slot = 1.0 / 3.0;
    }
    let reference = gompertz_reference(gamma2, OSCILLATION_X_STAR, grid)?;
    let kl = crate::distribution::kl_to_reference(&p, &reference)?;
    Ok((kl, p, reference))
}

/// Oscillation index and the embedding it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationIndex {
    pub index: f64,
    /// Set when the decomposition kept no IMF (monotone recovery).
    pub no_oscillatory_content: bool,
    pub tau: Option<usize>,
    pub theiler: Option<usize>,
    pub m: Option<usize>,
    pub histogram: Option<DivergenceHistogram>,
    pub series: Option<ExponentSeries>,
}

impl OscillationIndex {
    fn empty() -> Self {
        Self {
            index: 0.0,
            no_oscillatory_content: true,
            tau: None,
            theiler: None,
            m: None,
            histogram: None,
            series: None,
        }
    }
}

/// Index of the channel whose signal carries the most energy.
fn dominant_channel(signals: &[Vec<f64>]) -> usize {
    signals
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.iter().map(|v| v * v).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i)
}

fn choose_delay(signal: &[f64]) -> usize {
    match embed::select_delay(signal) {
        Ok(tau) => tau,
        Err(_) => embed::dominant_period_samples(signal)
            .map(|p| ((p / 4.0).round() as usize).max(1))
            .unwrap_or(1),
    }
}

/// FTLE series of the summed IMFs of all channels.
pub fn oscillation_series(decomp: &DecompositionResult, cfg: &EmbedConfig) -> Result<Option<(ExponentSeries, usize, usize, usize)>, Error> {
    if !decomp.has_imfs() {
        return Ok(None);
    }
    let osc = decomp.oscillatory_part();
    let lead = &osc[dominant_channel(&osc)];
    let views: Vec<&[f64]> = osc.iter().map(Vec::as_slice).collect();
    let mut states = embed::augment_rocov(&views)?;
    if cfg.normalize {
        embed::normalize_columns(&mut states);
    }
    let n = states.len();
    let m = cfg.m.max(1);
    let mut tau = cfg.tau.unwrap_or_else(|| choose_delay(lead)).max(1);
    if m > 1 {
        let cap = n.saturating_sub(2) / (m - 1);
        if cap == 0 {
            return Err(EmbedError::TooShort { len: n, needed: m + 1 }.into());
        }
        tau = tau.min(cap);
    }
    let points = n - (m - 1) * tau;
    let theiler = cfg
        .theiler
        .unwrap_or_else(|| embed::dominant_period_samples(lead).map_or(0, |p| p.round() as usize))
        .min(points.saturating_sub(1) / 2);
    let emb = embed::delay_embed(&states, m, tau, theiler, decomp.dt)?;
    let pairs = embed::nearest_neighbors(&emb)?;
    let series = lyapunov::ftle_imf_series(&emb, &pairs)?;
    Ok(Some((series, m, tau, theiler)))
}

/// KL distance of the oscillatory divergence factors from the Gompertz
/// reference with shape `gamma2` and shift 1. Zero when no IMF is present.
pub fn oscillation_index(
    decomp: &DecompositionResult,
    gamma2: f64,
    grid: Grid,
    cfg: &EmbedConfig,
) -> Result<OscillationIndex, Error> {
    let Some((series, m, tau, theiler)) = oscillation_series(decomp, cfg)? else {
        return Ok(OscillationIndex::empty());
    };
    let reference = gompertz_reference(gamma2, OSCILLATION_X_STAR, grid)?;
    let hist = histogram(&series.divergence_factors, grid)?;
    let index = kl_divergence(&hist, &reference)?;
    Ok(OscillationIndex {
        index,
        no_oscillatory_content: false,
        tau: Some(tau),
        theiler: Some(theiler),
        m: Some(m),
        histogram: Some(hist),
        series: Some(series),
    })
}

/// Dip depth and divergence-factor histogram of one residual; the index for
/// any reference follows from these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProfile {
    pub delta_r0: f64,
    /// `None` when the initial deviation from `eq0` is below the floor.
    pub histogram: Option<DivergenceHistogram>,
    pub series: Option<ExponentSeries>,
}

impl RecoveryProfile {
    pub fn new(residual: &[f64], v_pre: f64, eq0: f64, dt: f64, grid: Grid) -> Result<Self, Error> {
        if residual.is_empty() {
            return Err(LyapunovError::TooShort(0).into());
        }
        let delta_r0 = (v_pre - residual[0]).abs();
        match lyapunov::fsle_residual_series(residual, eq0, 0, dt) {
            Ok(series) if series.is_empty() => Ok(Self {
                delta_r0,
                histogram: None,
                series: Some(series),
            }),
            Ok(series) => Ok(Self {
                delta_r0,
                histogram: Some(histogram(&series.divergence_factors, grid)?),
                series: Some(series),
            }),
            Err(LyapunovError::BelowFloor { .. }) => Ok(Self {
                delta_r0,
                histogram: None,
                series: None,
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn below_floor(&self) -> bool {
        self.histogram.is_none()
    }

    /// `delta_r0 * KL(P || reference)`, zero without a dip.
    pub fn index(&self, reference: &GompertzReference) -> Result<f64, crate::distribution::DistributionError> {
        match &self.histogram {
            Some(h) => Ok(self.delta_r0 * kl_divergence(h, reference)?),
            None => Ok(0.0),
        }
    }
}

impl From<Error> for OelError {
    fn from(e: Error) -> Self {
        match e {
            Error::Distribution(d) => OelError::Distribution(d),
            Error::Lyapunov(l) => OelError::Lyapunov(l),
            other => OelError::InvalidInput(other.to_string()),
        }
    }
}

/// Recovery index of one residual against `Gompertz(gamma1, x_star)`.
pub fn recovery_index(
    residual: &[f64],
    v_pre: f64,
    eq0: f64,
    gamma1: f64,
    x_star: f64,
    grid: Grid,
    dt: f64,
) -> Result<f64, Error> {
    let profile = RecoveryProfile::new(residual, v_pre, eq0, dt, grid)?;
    let reference = gompertz_reference(gamma1, x_star, grid)?;
    Ok(profile.index(&reference)?)
}

/// Settings for a full assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessConfig {
    pub window: f64,
    pub grid: Grid,
    pub gamma2: f64,
    /// Post-fault equilibrium override; defaults to each channel's `V_pre`.
    pub eq0: Option<f64>,
    pub max_frequency_hz: f64,
    pub oscillation_epsilon: f64,
    pub emd: EmdConfig,
    pub embed: EmbedConfig,
    pub search: SearchRanges,
    pub generators: Vec<GeneratorSpec>,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            window: ingest::DEFAULT_WINDOW_S,
            grid: Grid::default(),
            gamma2: DEFAULT_GAMMA2,
            eq0: None,
            max_frequency_hz: emd::DEFAULT_MAX_FREQUENCY_HZ,
            oscillation_epsilon: 0.0,
            emd: EmdConfig::default(),
            embed: EmbedConfig::default(),
            search: SearchRanges::default(),
            generators: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub index: f64,
    pub threshold: f64,
    pub margin: f64,
    pub class: Classification,
    pub epsilon: f64,
    pub no_oscillatory_content: bool,
    pub m: Option<usize>,
    pub tau: Option<usize>,
    pub theiler: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub id: String,
    pub index: f64,
    pub threshold: Option<f64>,
    pub margin: Option<f64>,
    pub class: Classification,
    pub delta_r0: f64,
    pub epsilon: Option<f64>,
    pub vcaps: Vec<(f64, f64)>,
    pub tuning: Option<TuningResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub t0: f64,
    pub window_s: f64,
    pub dt: f64,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub gamma2: f64,
    pub eq0: Option<f64>,
    pub search: SearchRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityAssessment {
    pub oscillation: OscillationReport,
    pub generators: Vec<GeneratorReport>,
    pub config: ConfigEcho,
    /// Post-fault data time covered by the assessment, seconds.
    pub latency_s: f64,
}

impl StabilityAssessment {
    pub fn oscillation_index(&self) -> f64 {
        self.oscillation.index
    }

    pub fn oscillation_threshold(&self) -> f64 {
        self.oscillation.threshold
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorReport> {
        self.generators.iter().find(|g| g.id == id)
    }
}

/// Full pipeline on the configured window after the fault-clear point of
/// `traj` (which must already carry `t0` and `V_pre`).
pub fn assess(traj: &VoltageTrajectory, cfg: &AssessConfig) -> Result<StabilityAssessment, Error> {
    let window = ingest::extract_post_fault_window(traj, cfg.window)?;
    assess_window(traj.fault_clear_time(), &window, cfg)
}

/// Assessment of a trajectory that starts at the fault-clear point.
pub fn assess_window(t0: f64, window: &VoltageTrajectory, cfg: &AssessConfig) -> Result<StabilityAssessment, Error> {
    let n = window.len();
    if n < 2 {
        return Err(IndicesError::WindowTooShort(n).into());
    }
    let dt = window.dt();
    for g in &cfg.generators {
        if window.channel(&g.id).is_none() {
            return Err(IndicesError::UnknownGenerator(g.id.clone()).into());
        }
    }

    let decomp = emd::decompose(window, &cfg.emd)?;
    let kept = emd::filter_imfs_by_frequency(&decomp, 0.0, cfg.max_frequency_hz)?;
    let osc = oscillation_index(&kept, cfg.gamma2, cfg.grid, &cfg.embed)?;
    let threshold = imf_threshold(cfg.grid, cfg.gamma2)?;
    let (class, margin) = classify(osc.index, threshold, cfg.oscillation_epsilon);
    let oscillation = OscillationReport {
        index: osc.index,
        threshold,
        margin,
        class,
        epsilon: cfg.oscillation_epsilon,
        no_oscillatory_content: osc.no_oscillatory_content,
        m: osc.m,
        tau: osc.tau,
        theiler: osc.theiler,
    };

    let generators = cfg
        .generators
        .iter()
        .map(|g| {
            let ch = window.channels().iter().position(|c| c.id == g.id).expect("checked above");
            assess_generator(window, &decomp, ch, g, cfg)
        })
        .collect::<Result<Vec<_>, Error>>()?;

    Ok(StabilityAssessment {
        oscillation,
        generators,
        config: ConfigEcho {
            t0,
            window_s: cfg.window,
            dt,
            bins: cfg.grid.bins,
            lo: cfg.grid.lo,
            hi: cfg.grid.hi,
            gamma2: cfg.gamma2,
            eq0: cfg.eq0,
            search: cfg.search.clone(),
        },
        latency_s: n as f64 * dt,
    })
}

fn assess_generator(
    window: &VoltageTrajectory,
    decomp: &DecompositionResult,
    ch: usize,
    spec: &GeneratorSpec,
    cfg: &AssessConfig,
) -> Result<GeneratorReport, Error> {
    let channel = &window.channels()[ch];
    let dt = window.dt();
    let v_pre = window.prefault_voltage()[ch];
    let eq0 = cfg.eq0.unwrap_or(v_pre);
    let residual = &decomp.residual[ch];
    let profile = RecoveryProfile::new(residual, v_pre, eq0, dt, cfg.grid)?;
    let mut report = GeneratorReport {
        id: spec.id.clone(),
        index: 0.0,
        threshold: None,
        margin: None,
        class: Classification::Stable,
        delta_r0: profile.delta_r0,
        epsilon: None,
        vcaps: Vec::new(),
        tuning: None,
        note: None,
    };
    let Some(series) = profile.series.as_ref().filter(|s| !s.is_empty()) else {
        report.note = Some("initial deviation below floor; no dip".into());
        return Ok(report);
    };

    let params = if spec.needs_reactive_power() {
        let q = channel
            .reactive_power
            .as_ref()
            .ok_or_else(|| OelError::MissingReactivePower(spec.id.clone()))?;
        let q_pu: Vec<f64> = q.iter().map(|x| x / spec.mva_base).collect();
        let (k1, k2) = fit_qv(&channel.voltage, &q_pu)?;
        Some(OelParameters {
            xd_prime: spec.xd_prime.unwrap_or(0.0),
            p_active: spec.p_active.unwrap_or(0.0),
            k1,
            k2,
        })
    } else {
        None
    };
    let v_measured = channel.voltage[channel.voltage.len() - 1];
    let characteristic = match OelCharacteristic::build(params, &spec.pickups, &spec.lvrt, v_measured) {
        Ok(c) => c,
        Err(OelError::NoVoltageCaps) => {
            report.note = Some("no pickup reachable under the fitted Q-V line".into());
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };
    report.vcaps = characteristic.vcaps.clone();

    let pair = match construct_critical_signals(residual, dt, eq0, &characteristic.vcaps, series) {
        Ok(pair) => pair,
        Err(e @ (OelError::TriviallySafe | OelError::TriviallyTripping)) => {
            report.note = Some(e.to_string());
            match shifted_critical_pair(residual, dt, eq0, &characteristic.vcaps, series) {
                Ok(pair) => pair,
                Err(e) => return cap_above_equilibrium(report, e),
            }
        }
        Err(e) => return cap_above_equilibrium(report, e),
    };
    let tuning = tune_gamma(&pair.s1_samples, &pair.s2_samples, eq0, v_pre, dt, cfg.grid, &cfg.search)?;
    let reference = gompertz_reference(tuning.gamma1, tuning.x_star, cfg.grid)?;
    let index = profile.index(&reference)?;
    let (class, margin) = classify(index, tuning.d_critical_r, tuning.epsilon);
    report.index = index;
    report.threshold = Some(tuning.d_critical_r);
    report.margin = Some(margin);
    report.class = class;
    report.epsilon = Some(tuning.epsilon);
    report.tuning = Some(tuning);
    Ok(report)
}

fn cap_above_equilibrium(mut report: GeneratorReport, e: OelError) -> Result<GeneratorReport, Error> {
    match e {
        OelError::NoCriticalShift { .. } => {
            report.class = Classification::Unstable;
            report.note = Some(e.to_string());
            Ok(report)
        }
        other => Err(other.into()),
    }
}

/// Convenience for callers holding a raw trajectory: locates `t0`,
/// estimates `V_pre` and runs [`assess`].
pub fn assess_raw(
    traj: VoltageTrajectory,
    fault_clear_time: Option<f64>,
    lookback: f64,
    cfg: &AssessConfig,
) -> Result<StabilityAssessment, Error> {
    let traj = ingest::prepare_trajectory(traj, fault_clear_time, lookback)?;
    assess(&traj, cfg)
}

pub use oel::GeneratorConfig;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_on_default_grid() {
        let d = imf_threshold(Grid::default(), 10.0).unwrap();
        assert!((d - 2.09).abs() < 0.05, "{d}");
    }

    #[test]
    fn flat_reference_limit() {
        // A vanishing shape flattens the reference to 1/B per bin.
        for bins in [20, 40] {
            let grid = Grid::new(bins, 0.0, 1.5).unwrap();
            let d = imf_threshold(grid, 1e-12).unwrap();
            let closed = (bins as f64 / 3.0).ln();
            assert!((d - closed).abs() < 1e-9, "{bins}: {d} vs {closed}");
        }
    }

    #[test]
    fn threshold_depends_on_bins() {
        let a = imf_threshold(Grid::new(20, 0.0, 1.5).unwrap(), 10.0).unwrap();
        let b = imf_threshold(Grid::new(40, 0.0, 1.5).unwrap(), 10.0).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn threshold_needs_one_inside_grid() {
        let grid = Grid::new(20, 1.2, 2.0).unwrap();
        assert!(matches!(
            imf_threshold(grid, 10.0),
            Err(Error::Indices(IndicesError::GridMissesOne { .. }))
        ));
    }

    #[test]
    fn classification_edges() {
        assert_eq!(classify(1.0, 1.0, 0.0), (Classification::Critical, 0.0));
        let (c, m) = classify(0.5, 1.0, 0.0);
        assert_eq!(c, Classification::Stable);
        assert!((m + 50.0).abs() < 1e-12);
        let (c, m) = classify(1.2, 1.0, 0.05);
        assert_eq!(c, Classification::Unstable);
        assert!((m - 20.0).abs() < 1e-9);
        assert_eq!(classify(1.02, 1.0, 0.05).0, Classification::Critical);
    }

    #[test]
    fn no_dip_gives_zero_recovery_index() {
        let r = vec![1.0; 150];
        let d = recovery_index(&r, 1.0, 1.0, 10.0, 1.0, Grid::default(), 0.02).unwrap();
        assert_eq!(d, 0.0);
    }

    fn exp_recovery(rate: f64, depth: f64) -> Vec<f64> {
        (0..150).map(|i| 1.0 - depth * (-rate * i as f64 * 0.02).exp()).collect()
    }

    #[test]
    fn slower_recovery_scores_higher() {
        let idx = |r: &[f64]| recovery_index(r, 1.0, 1.0, 10.0, 1.0, Grid::default(), 0.02).unwrap();
        let fast = idx(&exp_recovery(2.0, 0.3));
        let slow = idx(&exp_recovery(0.05, 0.3));
        let stalled = idx(&[0.7; 150]);
        assert!(fast < slow, "{fast} {slow}");
        assert!(stalled > fast && stalled > slow, "{stalled}");
    }

    #[test]
    fn monotone_residual_has_no_oscillation() {
        let decomp = DecompositionResult {
            ids: vec!["a".into()],
            imfs: vec![Vec::new()],
            residual: vec![exp_recovery(1.0, 0.2)],
            dt: 0.02,
        };
        let o = oscillation_index(&decomp, 10.0, Grid::default(), &EmbedConfig::default()).unwrap();
        assert_eq!(o.index, 0.0);
        assert!(o.no_oscillatory_content);
    }
}
