//! Synthetic validation signals: the linear two-time-scale benchmark,
//! measurement noise and parameterised post-fault voltage scenarios.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Channel, IngestError, VoltageTrajectory};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: String, value: f64, reason: &'static str },
    #[error("unknown scenario kind `{0}` (expected stable-osc, growing-osc, fast-recovery, stalled-recovery or mixed)")]
    UnknownKind(String),
    #[error("unknown scenario parameter `{0}`")]
    UnknownParameter(String),
    #[error("malformed scenario parameter `{0}` (expected key=value)")]
    MalformedParameter(String),
    #[error("a + j omega equals eps; the forced response is resonant")]
    Resonant,
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl SynthError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, SynthError::Ingest(_))
    }
}

fn invalid(name: &str, value: f64, reason: &'static str) -> SynthError {
    SynthError::InvalidParameter {
        name: name.to_string(),
        value,
        reason,
    }
}

/// `x' = -a x + omega y + b z`, `y' = -omega x - a y`, `z' = -eps z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTimescaleParams {
    pub a: f64,
    pub omega: f64,
    pub b: f64,
    pub eps: f64,
    pub z0: f64,
    pub x0: f64,
    pub y0: f64,
}

impl TwoTimescaleParams {
    /// Forced response from rest: `x0 = y0 = 0`, `z0 = 1`.
    pub fn new(a: f64, omega: f64, b: f64, eps: f64) -> Self {
        Self {
            a,
            omega,
            b,
            eps,
            z0: 1.0,
            x0: 0.0,
            y0: 0.0,
        }
    }

    /// Checks finiteness and, with `paper_regime`, `omega > a > eps > 0`.
    pub fn validate(&self, paper_regime: bool) -> Result<(), SynthError> {
        for (name, v) in [
            ("a", self.a),
            ("omega", self.omega),
            ("b", self.b),
            ("eps", self.eps),
            ("z0", self.z0),
            ("x0", self.x0),
            ("y0", self.y0),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, v, "must be finite"));
            }
        }
        if paper_regime {
            if !(self.eps > 0.0) {
                return Err(invalid("eps", self.eps, "must be > 0"));
            }
            if !(self.a > self.eps) {
                return Err(invalid("a", self.a, "must exceed eps"));
            }
            if !(self.omega > self.a) {
                return Err(invalid("omega", self.omega, "must exceed a"));
            }
        }
        if self.a == self.eps && self.omega == 0.0 {
            return Err(SynthError::Resonant);
        }
        Ok(())
    }

    /// `1 + b^2 / ((a - eps)^2 + omega^2)`.
    pub fn gain_squared(&self) -> f64 {
        let d = (self.a - self.eps).powi(2) + self.omega * self.omega;
        1.0 + self.b * self.b / d
    }

    /// State `(x, y, z)` at time `t` from the closed-form solution.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        // w = x + j y; w(t) = w0 e^{-(a + j omega) t} + b z0 (e^{-eps t} - e^{-(a + j omega) t}) / (a - eps + j omega)
        let decay = (-self.a * t).exp();
        let (s, c) = (self.omega * t).sin_cos();
        // e^{-(a + j omega) t} = decay (cos - j sin)
        let (er, ei) = (decay * c, -decay * s);
        let slow = (-self.eps * t).exp();
        let (hr, hi) = (self.x0 * er - self.y0 * ei, self.x0 * ei + self.y0 * er);
        let (nr, ni) = (slow - er, -ei);
        let (dr, di) = (self.a - self.eps, self.omega);
        let den = dr * dr + di * di;
        let k = self.b * self.z0 / den;
        let fr = k * (nr * dr + ni * di);
        let fi = k * (ni * dr - nr * di);
        (hr + fr, hi + fi, self.z0 * slow)
    }
}

/// Sampled `(x, y, z)` trajectory of the two-time-scale system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTrajectory {
    pub dt: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn norm(&self, k: usize) -> f64 {
        (self.x[k].powi(2) + self.y[k].powi(2) + self.z[k].powi(2)).sqrt()
    }

    /// `ln(|s(k dt)| / |s(0)|) / (k dt)` for `k = 1..len`.
    pub fn norm_ftle(&self) -> Vec<f64> {
        let n0 = self.norm(0);
        (1..self.len())
            .map(|k| (self.norm(k) / n0).ln() / (k as f64 * self.dt))
            .collect()
    }
}

/// Exact solution sampled at `k dt`, `k = 0..=floor(t_end / dt)`.
pub fn simulate_two_timescale(p: &TwoTimescaleParams, t_end: f64, dt: f64) -> Result<StateTrajectory, SynthError> {
    p.validate(false)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", dt, "must be > 0"));
    }
    if !(t_end.is_finite() && t_end > dt) {
        return Err(invalid("t_end", t_end, "must exceed dt"));
    }
    let n = (t_end / dt + 1e-9).floor() as usize + 1;
    let mut out = StateTrajectory {
        dt,
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (x, y, z) = p.state_at(k as f64 * dt);
        out.x.push(x);
        out.y.push(y);
        out.z.push(z);
    }
    Ok(out)
}

/// Closed-form FTLE of the norm in the intermediate window together with
/// the largest `T` for which it stays positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticFtle {
    pub lambda: f64,
    pub positivity_bound: f64,
}

/// `lambda(T) = -eps + ln(G) / (2T)` with `G` from [`TwoTimescaleParams::gain_squared`];
/// positive while `T < ln(G) / (2 eps)`. Warns outside `3/a < T < 1/(3 eps)`.
pub fn analytic_ftle(p: &TwoTimescaleParams, t: f64) -> AnalyticFtle {
    if !(t > 3.0 / p.a && t < 1.0 / (3.0 * p.eps)) {
        log::warn!("T = {t} s lies outside the intermediate window (3/a, 1/(3 eps))");
    }
    let g = p.gain_squared().ln();
    AnalyticFtle {
        lambda: -p.eps + g / (2.0 * t),
        positivity_bound: g / (2.0 * p.eps),
    }
}

/// Earliest window length after which the norm FTLE stays within
/// `rel_tol * eps` of `-eps` up to `t_end`.
pub fn ftle_settling_time(p: &TwoTimescaleParams, t_end: f64, dt: f64, rel_tol: f64) -> Result<Option<f64>, SynthError> {
    let traj = simulate_two_timescale(p, t_end, dt)?;
    let ftle = traj.norm_ftle();
    let band = rel_tol * p.eps.abs();
    let last_out = ftle.iter().rposition(|l| (l + p.eps).abs() > band);
    Ok(match last_out {
        None => Some(dt),
        Some(i) if i + 1 < ftle.len() => Some((i + 2) as f64 * dt),
        Some(_) => None,
    })
}

/// Additive white Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn check(&self) -> Result<(), SynthError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid("sigma", self.sigma, "must be >= 0"));
        }
        Ok(())
    }
}

/// Adds `N(0, sigma^2)` to every voltage sample, channel by channel in
/// order, from a ChaCha8 stream seeded with `spec.seed`.
pub fn add_noise(traj: &VoltageTrajectory, spec: NoiseSpec) -> Result<VoltageTrajectory, SynthError> {
    spec.check()?;
    if spec.sigma == 0.0 {
        return Ok(traj.clone());
    }
    let mut rng = spec.rng();
    let channels = traj
        .channels()
        .iter()
        .map(|c| {
            let voltage = c
                .voltage
                .iter()
                .map(|v| v + spec.sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            Channel {
                id: c.id.clone(),
                voltage,
                reactive_power: c.reactive_power.clone(),
            }
        })
        .collect();
    Ok(VoltageTrajectory::new(channels, traj.dt(), traj.start_time())?
        .with_fault_clear_index(traj.fault_clear_index())?
        .with_prefault_voltage(traj.prefault_voltage().to_vec())?)
}

/// Mean shift and variance of `(1/T) ln((delta_t + eta) / delta0)` around
/// its noiseless value over `pairs` antithetic pairs `(eta, -eta)`.
pub fn noisy_ftle_statistics(sigma: f64, delta_t: f64, t: f64, pairs: usize, seed: u64) -> Result<(f64, f64), SynthError> {
    NoiseSpec { sigma, seed }.check()?;
    if !(delta_t > 0.0 && t > 0.0 && pairs > 0) {
        return Err(invalid("delta_t", delta_t, "delta_t, T and pairs must be > 0"));
    }
    let mut rng = NoiseSpec { sigma, seed }.rng();
    let mut shifts = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let eta = sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        for e in [eta, -eta] {
            shifts.push((1.0 + e / delta_t).ln() / t);
        }
    }
    let n = shifts.len() as f64;
    let mean = shifts.iter().sum::<f64>() / n;
    let var = shifts.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    StableOsc,
    GrowingOsc,
    FastRecovery,
    StalledRecovery,
    Mixed,
}

impl FromStr for ScenarioKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "stable-osc" => ScenarioKind::StableOsc,
            "growing-osc" => ScenarioKind::GrowingOsc,
            "fast-recovery" => ScenarioKind::FastRecovery,
            "stalled-recovery" => ScenarioKind::StalledRecovery,
            "mixed" => ScenarioKind::Mixed,
            other => return Err(SynthError::UnknownKind(other.to_string())),
        })
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::StableOsc => "stable-osc",
            ScenarioKind::GrowingOsc => "growing-osc",
            ScenarioKind::FastRecovery => "fast-recovery",
            ScenarioKind::StalledRecovery => "stalled-recovery",
            ScenarioKind::Mixed => "mixed",
        })
    }
}

/// Scenario settings. Times in seconds, voltages in pu, rates in 1/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub channels: usize,
    pub dt: f64,
    pub prefault: f64,
    pub fault: f64,
    pub duration: f64,
    pub v_pre: f64,
    pub fault_level: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub decay: f64,
    pub growth: f64,
    pub recovery: f64,
    pub depth: f64,
    pub level: f64,
    pub creep: f64,
    /// Ground-truth Q-V line used to emit reactive power (`V = k1 Q + k2`).
    pub k1: f64,
    pub k2: f64,
    pub mva_base: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            channels: 3,
            dt: 0.02,
            prefault: 1.0,
            fault: 0.1,
            duration: 3.0,
            v_pre: 1.0,
            fault_level: 0.4,
            amplitude: 0.05,
            frequency: 1.5,
            decay: 0.4,
            growth: 0.3,
            recovery: 1.0,
            depth: 0.3,
            level: 0.7,
            creep: 0.01,
            k1: -0.4,
            k2: 1.1,
            mva_base: 100.0,
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), SynthError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| SynthError::MalformedParameter(assignment.to_string()))?;
        let key = key.trim();
        let raw = value.trim();
        if matches!(key, "channels" | "seed") {
            let v: u64 = raw
                .parse()
                .map_err(|_| SynthError::MalformedParameter(assignment.to_string()))?;
            if key == "channels" {
                self.channels = v as usize;
            } else {
                self.seed = v;
            }
            return Ok(());
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| SynthError::MalformedParameter(assignment.to_string()))?;
        let slot = match key {
            "dt" => &mut self.dt,
            "prefault" => &mut self.prefault,
            "fault" => &mut self.fault,
            "duration" => &mut self.duration,
            "v_pre" => &mut self.v_pre,
            "fault_level" => &mut self.fault_level,
            "amplitude" => &mut self.amplitude,
            "frequency" => &mut self.frequency,
            "decay" => &mut self.decay,
            "growth" => &mut self.growth,
            "recovery" => &mut self.recovery,
            "depth" => &mut self.depth,
            "level" => &mut self.level,
            "creep" => &mut self.creep,
            "k1" => &mut self.k1,
            "k2" => &mut self.k2,
            "mva_base" => &mut self.mva_base,
            "sigma" => &mut self.sigma,
            _ => return Err(SynthError::UnknownParameter(key.to_string())),
        };
        *slot = v;
        Ok(())
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.channels == 0 {
            return Err(invalid("channels", 0.0, "must be >= 1"));
        }
        let positive = [
            ("dt", self.dt),
            ("duration", self.duration),
            ("v_pre", self.v_pre),
            ("fault_level", self.fault_level),
            ("frequency", self.frequency),
            ("mva_base", self.mva_base),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, v, "must be > 0"));
            }
        }
        let non_negative = [
            ("prefault", self.prefault),
            ("fault", self.fault),
            ("amplitude", self.amplitude),
            ("decay", self.decay),
            ("growth", self.growth),
            ("recovery", self.recovery),
            ("depth", self.depth),
            ("creep", self.creep),
            ("sigma", self.sigma),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, v, "must be >= 0"));
            }
        }
        if !(self.level.is_finite() && self.level > 0.0) {
            return Err(invalid("level", self.level, "must be > 0"));
        }
        if !(self.k1.is_finite() && self.k1 != 0.0 && self.k2.is_finite()) {
            return Err(invalid("k1", self.k1, "Q-V line needs finite k1 != 0 and k2"));
        }
        Ok(())
    }
}

/// Known rates and levels embedded in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub kind: ScenarioKind,
    pub fault_clear_time: f64,
    pub fault_clear_index: usize,
    pub v_pre: f64,
    /// Oscillation envelope rate (negative for damping).
    pub oscillation_rate: Option<f64>,
    pub recovery_rate: Option<f64>,
    pub frequency: Option<f64>,
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trajectory: VoltageTrajectory,
    pub truth: ScenarioTruth,
}

/// Post-fault voltage of channel `ch` at `t` seconds after clearing and the
/// oscillatory part of it.
fn post_fault(kind: ScenarioKind, p: &ScenarioParams, phase: f64, t: f64) -> f64 {
    let wave = (2.0 * PI * p.frequency * t + phase).sin();
    match kind {
        ScenarioKind::StableOsc => p.v_pre + p.amplitude * (-p.decay * t).exp() * wave,
        ScenarioKind::GrowingOsc => p.v_pre + p.amplitude * (p.growth * t).exp() * wave,
        ScenarioKind::FastRecovery => p.v_pre - p.depth * (-p.recovery * t).exp(),
        ScenarioKind::StalledRecovery => p.level + p.creep * (1.0 - (-t).exp()),
        ScenarioKind::Mixed => {
            p.v_pre - p.depth * (-p.recovery * t).exp() + p.amplitude * (-p.decay * t).exp() * wave
        }
    }
}

/// Builds a multi-channel scenario: flat `v_pre` for `prefault` seconds, a
/// fault at `fault_level` for `fault` seconds, then `duration` seconds of
/// the post-fault shape. Channel `c` is phase-shifted by `0.4 c` rad.
/// Reactive power follows `Q = (V - k2) / k1` in MVAr on `mva_base`.
pub fn synth_scenario(kind: ScenarioKind, p: &ScenarioParams) -> Result<Scenario, SynthError> {
    p.validate()?;
    let pre = (p.prefault / p.dt).round() as usize;
    let fault = (p.fault / p.dt).round() as usize;
    let post = (p.duration / p.dt).round() as usize + 1;
    let clear = pre + fault;
    let phases: Vec<f64> = (0..p.channels).map(|c| 0.4 * c as f64).collect();
    let channels = phases
        .iter()
        .enumerate()
        .map(|(c, &phase)| {
            let mut v = vec![p.v_pre; pre];
            v.extend(std::iter::repeat_n(p.fault_level, fault));
            v.extend((0..post).map(|k| post_fault(kind, p, phase, k as f64 * p.dt)));
            let q = v.iter().map(|x| (x - p.k2) / p.k1 * p.mva_base).collect();
            Channel::new(format!("G{}", c + 1), v).with_reactive_power(q)
        })
        .collect();
    let mut trajectory = VoltageTrajectory::new(channels, p.dt, 0.0)?.with_fault_clear_index(clear)?;
    if pre > 0 {
        trajectory = trajectory.with_prefault_voltage(vec![p.v_pre; p.channels])?;
    }
    if p.sigma > 0.0 {
        trajectory = add_noise(
            &trajectory,
            NoiseSpec {
                sigma: p.sigma,
                seed: p.seed,
            },
        )?;
    }
    let osc = matches!(kind, ScenarioKind::StableOsc | ScenarioKind::GrowingOsc | ScenarioKind::Mixed);
    let truth = ScenarioTruth {
        kind,
        fault_clear_time: clear as f64 * p.dt,
        fault_clear_index: clear,
        v_pre: p.v_pre,
        oscillation_rate: match kind {
            ScenarioKind::GrowingOsc => Some(p.growth),
            _ if osc => Some(-p.decay),
            _ => None,
        },
        recovery_rate: match kind {
            ScenarioKind::FastRecovery | ScenarioKind::Mixed => Some(p.recovery),
            _ => None,
        },
        frequency: osc.then_some(p.frequency),
        phases,
    };
    Ok(Scenario { trajectory, truth })
}
