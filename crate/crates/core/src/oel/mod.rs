//! Over-excitation limiter voltage caps, critical recovery signals and
//! recovery-threshold tuning.

pub mod quartic;
pub mod tuning;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigDocument, ConfigError, Section};
use crate::distribution::DistributionError;
use crate::lyapunov::{ExponentSeries, LyapunovError};

pub use tuning::{tune_gamma, SearchRanges, TuningResult};

/// Admissible terminal-voltage interval for quartic roots, per-unit (open).
pub const VCAP_RANGE: (f64, f64) = (0.0, 2.0);
/// Default machine base used to convert MVAr to per-unit.
pub const DEFAULT_MVA_BASE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum OelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Q-V fit is singular: reactive power is constant")]
    SingularFit,
    #[error("pickup E = {e} pu has no terminal-voltage solution in (0, 2) pu under the fitted Q-V line")]
    Unreachable { e: f64 },
    #[error("no reachable pickup or ride-through point")]
    NoVoltageCaps,
    #[error("admissible recovery tube stays above every voltage cap (trivially safe)")]
    TriviallySafe,
    #[error("admissible recovery tube falls below a voltage cap for every rate (trivially tripping)")]
    TriviallyTripping,
    #[error("voltage cap {vcap} pu is not below the equilibrium {eq0} pu; no critical shift exists")]
    NoCriticalShift { vcap: f64, eq0: f64 },
    #[error("empty exponent series")]
    EmptySeries,
    #[error("empty tuning grid")]
    EmptyGrid,
    #[error("channel `{0}` has no reactive-power samples (needed for the Q-V fit)")]
    MissingReactivePower(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

impl OelError {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            OelError::InvalidInput(_) | OelError::Config(_) | OelError::MissingReactivePower(_) | OelError::EmptyGrid
        )
    }
}

/// Ordinary least-squares fit of `V = k1 Q + k2`, solved from the 2x2
/// normal equations.
pub fn fit_qv(v: &[f64], q: &[f64]) -> Result<(f64, f64), OelError> {
    if v.len() != q.len() {
        return Err(OelError::InvalidInput(format!(
            "Q-V fit needs equal lengths ({} vs {})",
            v.len(),
            q.len()
        )));
    }
    if v.len() < 2 {
        return Err(OelError::InvalidInput("Q-V fit needs at least 2 samples".into()));
    }
    if v.iter().chain(q).any(|x| !x.is_finite()) {
        return Err(OelError::InvalidInput("Q-V fit input is not finite".into()));
    }
    if q.iter().all(|&x| x == q[0]) {
        return Err(OelError::SingularFit);
    }
    let n = v.len() as f64;
    let sq: f64 = q.iter().sum();
    let sv: f64 = v.iter().sum();
    let sqq: f64 = q.iter().map(|x| x * x).sum();
    let sqv: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
    let det = n * sqq - sq * sq;
    if !(det > 0.0) {
        return Err(OelError::SingularFit);
    }
    let k1 = (n * sqv - sq * sv) / det;
    let k2 = (sqq * sv - sq * sqv) / det;
    Ok((k1, k2))
}

/// Machine data and fitted Q-V line entering the E'-V relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OelParameters {
    pub xd_prime: f64,
    pub p_active: f64,
    pub k1: f64,
    pub k2: f64,
}

impl OelParameters {
    /// `(V + X'd (V - K2) / (K1 V))^2 + (X'd P / V)^2 - E^2`.
    pub fn residual(&self, v: f64, e: f64) -> f64 {
        let a = self.xd_prime / self.k1;
        let real = v + a * (v - self.k2) / v;
        let imag = self.xd_prime * self.p_active / v;
        real * real + imag * imag - e * e
    }

    /// Coefficients `[c3, c2, c1, c0]` of the monic quartic in `V`.
    pub fn quartic(&self, e: f64) -> [f64; 4] {
        let a = self.xd_prime / self.k1;
        let k2 = self.k2;
        let xp = self.xd_prime * self.p_active;
        [
            2.0 * a,
            a * a - 2.0 * a * k2 - e * e,
            -2.0 * a * a * k2,
            a * a * k2 * k2 + xp * xp,
        ]
    }

    fn validate(&self, e: f64) -> Result<(), OelError> {
        let finite = [self.xd_prime, self.p_active, self.k1, self.k2, e].iter().all(|x| x.is_finite());
        if !finite {
            return Err(OelError::InvalidInput("OEL parameters must be finite".into()));
        }
        if !(e > 0.0) {
            return Err(OelError::InvalidInput(format!("pickup level must be > 0, got {e}")));
        }
        if self.xd_prime < 0.0 {
            return Err(OelError::InvalidInput(format!("X'd must be >= 0, got {}", self.xd_prime)));
        }
        if self.k1 == 0.0 {
            return Err(OelError::InvalidInput("K1 must be non-zero".into()));
        }
        Ok(())
    }

    /// Every real root of the cap equation inside `(0, 2)` pu, ascending.
    pub fn admissible_roots(&self, e: f64) -> Result<Vec<f64>, OelError> {
        self.validate(e)?;
        if self.xd_prime == 0.0 {
            return Ok(if e < VCAP_RANGE.1 { vec![e] } else { Vec::new() });
        }
        let mut roots: Vec<f64> = quartic::real_roots_monic(self.quartic(e))
            .into_iter()
            .filter(|&v| v > VCAP_RANGE.0 && v < VCAP_RANGE.1)
            .collect();
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Ok(roots)
    }

    /// Terminal voltage at which the internal EMF reaches `e`. With several
    /// admissible roots the one closest to `v_measured` is returned.
    pub fn voltage_cap(&self, e: f64, v_measured: f64) -> Result<f64, OelError> {
        let roots = self.admissible_roots(e)?;
        roots
            .into_iter()
            .min_by(|a, b| (a - v_measured).abs().total_cmp(&(b - v_measured).abs()))
            .ok_or(OelError::Unreachable { e })
    }
}

/// Voltage-time characteristic of one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OelCharacteristic {
    pub params: Option<OelParameters>,
    /// `(E_i, t_i)` pickups.
    pub pickups: Vec<(f64, f64)>,
    /// `(V_cap_i, t_i)`: OEL caps followed by ride-through points.
    pub vcaps: Vec<(f64, f64)>,
}

impl OelCharacteristic {
    /// Solves every pickup for its voltage cap and appends the LVRT points.
    /// Unreachable pickups are skipped with a warning.
    pub fn build(
        params: Option<OelParameters>,
        pickups: &[(f64, f64)],
        lvrt: &[(f64, f64)],
        v_measured: f64,
    ) -> Result<Self, OelError> {
        let mut vcaps = Vec::new();
        if !pickups.is_empty() {
            let p = params.ok_or_else(|| OelError::InvalidInput("pickups need OEL parameters".into()))?;
            for &(e, t) in pickups {
                match p.voltage_cap(e, v_measured) {
                    Ok(v) => vcaps.push((v, t)),
                    Err(OelError::Unreachable { e }) => log::warn!("OEL pickup E = {e} pu unreachable; skipped"),
                    Err(err) => return Err(err),
                }
            }
        }
        vcaps.extend_from_slice(lvrt);
        if vcaps.is_empty() {
            return Err(OelError::NoVoltageCaps);
        }
        Ok(Self {
            params,
            pickups: pickups.to_vec(),
            vcaps,
        })
    }
}

/// Per-generator machine data from a config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: String,
    pub xd_prime: Option<f64>,
    pub p_active: Option<f64>,
    pub mva_base: f64,
    pub pickups: Vec<(f64, f64)>,
    pub lvrt: Vec<(f64, f64)>,
}

impl GeneratorSpec {
    pub fn from_section(section: &Section, default_base: f64) -> Result<Self, OelError> {
        let mut spec = GeneratorSpec {
            id: section.name.clone(),
            xd_prime: None,
            p_active: None,
            mva_base: default_base,
            pickups: Vec::new(),
            lvrt: Vec::new(),
        };
        for entry in &section.entries {
            match entry.key.as_str() {
                "xd_prime" => spec.xd_prime = Some(non_negative(entry)?),
                "p_active" => spec.p_active = Some(entry.parse_f64()?),
                "mva_base" => spec.mva_base = positive(entry)?,
                "pickup" | "lvrt" => {
                    let (level, t) = entry.parse_pair()?;
                    if !(level > 0.0 && t >= 0.0) {
                        return Err(entry.invalid("need level > 0 and delay >= 0".into()).into());
                    }
                    if entry.key == "pickup" {
                        spec.pickups.push((level, t));
                    } else {
                        spec.lvrt.push((level, t));
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: entry.line,
                        key: entry.key.clone(),
                    }
                    .into())
                }
            }
        }
        if !spec.pickups.is_empty() {
            section.require("xd_prime")?;
            section.require("p_active")?;
        }
        if spec.pickups.is_empty() && spec.lvrt.is_empty() {
            return Err(ConfigError::MissingKey {
                section: section.name.clone(),
                key: "pickup or lvrt".into(),
            }
            .into());
        }
        Ok(spec)
    }

    pub fn needs_reactive_power(&self) -> bool {
        !self.pickups.is_empty()
    }
}

fn positive(entry: &crate::config::Entry) -> Result<f64, OelError> {
    let v = entry.parse_f64()?;
    if !(v > 0.0) {
        return Err(entry.invalid("must be > 0".into()).into());
    }
    Ok(v)
}

fn non_negative(entry: &crate::config::Entry) -> Result<f64, OelError> {
    let v = entry.parse_f64()?;
    if !(v >= 0.0) {
        return Err(entry.invalid("must be >= 0".into()).into());
    }
    Ok(v)
}

/// Generator sections plus the tuner settings from the global block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub generators: Vec<GeneratorSpec>,
    pub search: SearchRanges,
}

/// Global keys understood by the generator config besides the ingest keys.
const GLOBAL_KEYS: &[&str] = &[
    "fault_clear_time",
    "window_duration",
    "lookback",
    "mva_base",
    "gamma1_min",
    "gamma1_max",
    "gamma1_points",
    "x_star_min",
    "x_star_max",
    "x_star_points",
    "tolerance",
];

impl GeneratorConfig {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, OelError> {
        for e in &doc.global {
            if !GLOBAL_KEYS.contains(&e.key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    key: e.key.clone(),
                }
                .into());
            }
        }
        let base = match doc.global_value("mva_base") {
            Some(e) => positive(e)?,
            None => DEFAULT_MVA_BASE,
        };
        let search = SearchRanges::from_document(doc)?;
        let generators = doc
            .sections
            .iter()
            .map(|s| GeneratorSpec::from_section(s, base))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { generators, search })
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorSpec> {
        self.generators.iter().find(|g| g.id == id)
    }
}

/// `eq0 - amplitude * exp(rate (t - anchor))`, time in seconds after clearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSignal {
    pub rate: f64,
    pub amplitude: f64,
    pub eq0: f64,
    pub anchor: f64,
}

impl CriticalSignal {
    pub fn value_at(&self, t: f64) -> f64 {
        self.eq0 - self.amplitude * (self.rate * (t - self.anchor)).exp()
    }

    pub fn samples(&self, len: usize, dt: f64) -> Vec<f64> {
        (0..len).map(|k| self.value_at(k as f64 * dt)).collect()
    }
}

/// Slowest (`s1`) and fastest (`s2`) critical recoveries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPair {
    pub s1: CriticalSignal,
    pub s2: CriticalSignal,
    pub s1_samples: Vec<f64>,
    pub s2_samples: Vec<f64>,
}

/// Outcome of extrapolating the observed residual with every rate in the
/// observed exponent range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TubeVerdict {
    Mixed,
    AllSafe,
    AllTrip,
}

fn check_inputs(residual: &[f64], dt: f64, vcaps: &[(f64, f64)], series: &ExponentSeries) -> Result<(f64, f64), OelError> {
    if residual.len() < 2 || !(dt.is_finite() && dt > 0.0) {
        return Err(OelError::InvalidInput("residual window needs >= 2 samples and dt > 0".into()));
    }
    if vcaps.is_empty() {
        return Err(OelError::NoVoltageCaps);
    }
    let lo = series.min_lambda().ok_or(OelError::EmptySeries)?;
    let hi = series.max_lambda().ok_or(OelError::EmptySeries)?;
    Ok((lo, hi))
}

/// Classifies the unshifted tube `eq0 + (R(Tw) - eq0) e^{lambda (t - Tw)}`
/// against the step characteristic (`V(t_i) >= V_cap_i` is safe).
pub fn tube_verdict(
    residual: &[f64],
    dt: f64,
    eq0: f64,
    vcaps: &[(f64, f64)],
    series: &ExponentSeries,
) -> Result<TubeVerdict, OelError> {
    let (lo, hi) = check_inputs(residual, dt, vcaps, series)?;
    let tw = (residual.len() - 1) as f64 * dt;
    let dev = residual[residual.len() - 1] - eq0;
    let steps = 32;
    let (mut any_safe, mut any_trip) = (false, false);
    for s in 0..=steps {
        let lambda = lo + (hi - lo) * s as f64 / steps as f64;
        let trips = vcaps
            .iter()
            .any(|&(v, t)| eq0 + dev * (lambda * (t - tw)).exp() < v);
        if trips {
            any_trip = true;
        } else {
            any_safe = true;
        }
    }
    Ok(match (any_safe, any_trip) {
        (true, false) => TubeVerdict::AllSafe,
        (false, true) => TubeVerdict::AllTrip,
        _ => TubeVerdict::Mixed,
    })
}

/// Shifts the slowest and fastest observed rates onto the characteristic:
/// each signal is the highest-amplitude curve of its rate that still meets
/// every `V(t_i) >= V_cap_i`, so it touches the binding cap exactly.
pub fn shifted_critical_pair(
    residual: &[f64],
    dt: f64,
    eq0: f64,
    vcaps: &[(f64, f64)],
    series: &ExponentSeries,
) -> Result<CriticalPair, OelError> {
    let (lo, hi) = check_inputs(residual, dt, vcaps, series)?;
    if let Some(&(v, _)) = vcaps.iter().find(|&&(v, _)| !(v < eq0)) {
        return Err(OelError::NoCriticalShift { vcap: v, eq0 });
    }
    let tw = (residual.len() - 1) as f64 * dt;
    let make = |rate: f64| {
        let amplitude = vcaps
            .iter()
            .map(|&(v, t)| (eq0 - v) * (-rate * (t - tw)).exp())
            .fold(f64::INFINITY, f64::min);
        CriticalSignal {
            rate,
            amplitude,
            eq0,
            anchor: tw,
        }
    };
    let s1 = make(hi);
    let s2 = make(lo);
    let n = residual.len();
    Ok(CriticalPair {
        s1_samples: s1.samples(n, dt),
        s2_samples: s2.samples(n, dt),
        s1,
        s2,
    })
}

/// Critical boundary signals; errors when the observed tube never crosses
/// the characteristic.
pub fn construct_critical_signals(
    residual: &[f64],
    dt: f64,
    eq0: f64,
    vcaps: &[(f64, f64)],
    series: &ExponentSeries,
) -> Result<CriticalPair, OelError> {
    match tube_verdict(residual, dt, eq0, vcaps, series)? {
        TubeVerdict::AllSafe => Err(OelError::TriviallySafe),
        TubeVerdict::AllTrip => Err(OelError::TriviallyTripping),
        TubeVerdict::Mixed => shifted_critical_pair(residual, dt, eq0, vcaps, series),
    }
}
