//! Multivariate empirical mode decomposition.
//!
//! All non-constant channels are sifted together: the envelope mean at each
//! iteration averages upper envelopes taken along a fixed set of projection
//! directions, so IMF number `i` covers a comparable time scale on every
//! channel.

mod directions;
pub mod sift;
mod spline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::VoltageTrajectory;

pub use directions::projection_directions;
pub use sift::{count_extrema, count_zero_crossings, local_extrema, satisfies_mode_condition, SiftConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EmdError {
    #[error("signal has too few extrema to sift (already a trend)")]
    TooFewExtrema,
    #[error("signal needs at least 4 samples, got {0}")]
    TooShort(usize),
    #[error("channels have different lengths")]
    LengthMismatch,
    #[error("no channels supplied")]
    NoChannels,
    #[error("non-finite sample in channel {channel} at index {index}")]
    NonFinite { channel: usize, index: usize },
    #[error("frequency band [{lo}, {hi}] Hz is invalid")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("sample interval must be finite and > 0, got {0}")]
    InvalidDt(f64),
    #[error("need at least 2 projection directions, got {0}")]
    InvalidDirections(usize),
}

/// Decomposition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    pub sift: SiftConfig,
    /// Projection directions for two or more channels.
    pub directions: usize,
    /// Hard cap on IMFs; `None` means `floor(log2(n))`.
    pub max_imfs: Option<usize>,
    /// Decomposition stops once every channel's remainder has fewer extrema.
    pub min_extrema: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            sift: SiftConfig::default(),
            directions: 8,
            max_imfs: None,
            min_extrema: 3,
        }
    }
}

/// Per-channel IMF stacks and residual trends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub ids: Vec<String>,
    /// `imfs[channel][level]`, finest scale first.
    pub imfs: Vec<Vec<Vec<f64>>>,
    pub residual: Vec<Vec<f64>>,
    pub dt: f64,
}

impl DecompositionResult {
    pub fn channel_count(&self) -> usize {
        self.residual.len()
    }

    pub fn len(&self) -> usize {
        self.residual.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest number of IMFs on any channel.
    pub fn levels(&self) -> usize {
        self.imfs.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_imfs(&self) -> bool {
        self.levels() > 0
    }

    /// Per-channel sum of all IMFs (zeros for channels without IMFs).
    pub fn oscillatory_part(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.imfs
            .iter()
            .map(|stack| {
                let mut acc = vec![0.0; n];
                for imf in stack {
                    for (a, v) in acc.iter_mut().zip(imf) {
                        *a += v;
                    }
                }
                acc
            })
            .collect()
    }

    /// Sum of IMFs and residual for one channel.
    pub fn reconstruct(&self, channel: usize) -> Vec<f64> {
        let mut out = self.residual[channel].clone();
        for imf in &self.imfs[channel] {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

/// Extracts a single IMF from a univariate signal.
pub fn sift(signal: &[f64], cfg: &SiftConfig) -> Result<(Vec<f64>, Vec<f64>), EmdError> {
    if signal.len() < 4 {
        return Err(EmdError::TooShort(signal.len()));
    }
    check_finite(&[signal])?;
    if count_extrema(signal) < 2 {
        return Err(EmdError::TooFewExtrema);
    }
    let dirs = projection_directions(1, 2);
    let (mut imf, mut rem) = sift::sift_multichannel(&[signal.to_vec()], &dirs, cfg)?;
    Ok((imf.remove(0), rem.remove(0)))
}

fn check_finite(channels: &[&[f64]]) -> Result<(), EmdError> {
    for (c, ch) in channels.iter().enumerate() {
        if let Some(i) = ch.iter().position(|x| !x.is_finite()) {
            return Err(EmdError::NonFinite { channel: c, index: i });
        }
    }
    Ok(())
}

/// Decomposes the channels of a trajectory.
pub fn decompose(traj: &VoltageTrajectory, cfg: &EmdConfig) -> Result<DecompositionResult, EmdError> {
    let channels = traj.voltages();
    let mut out = decompose_channels(&channels, traj.dt(), cfg)?;
    out.ids = traj.channels().iter().map(|c| c.id.clone()).collect();
    Ok(out)
}

/// Decomposes equally long channels sampled every `dt` seconds. Constant
/// channels get no IMFs and keep their samples as residual.
pub fn decompose_channels(channels: &[&[f64]], dt: f64, cfg: &EmdConfig) -> Result<DecompositionResult, EmdError> {
    if channels.is_empty() {
        return Err(EmdError::NoChannels);
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(EmdError::InvalidDt(dt));
    }
    if cfg.directions < 2 {
        return Err(EmdError::InvalidDirections(cfg.directions));
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(EmdError::LengthMismatch);
    }
    check_finite(channels)?;

    let ids = (0..channels.len()).map(|i| i.to_string()).collect();
    let mut imfs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); channels.len()];
    let mut residual: Vec<Vec<f64>> = channels.iter().map(|c| c.to_vec()).collect();

    let active: Vec<usize> = (0..channels.len())
        .filter(|&c| channels[c].iter().any(|&v| v != channels[c][0]))
        .collect();
    if active.is_empty() || n < 4 {
        return Ok(DecompositionResult { ids, imfs, residual, dt });
    }

    let dirs = projection_directions(active.len(), cfg.directions);
    let max_imfs = cfg.max_imfs.unwrap_or_else(|| (n as f64).log2().floor() as usize);
    let mut rem: Vec<Vec<f64>> = active.iter().map(|&c| residual[c].clone()).collect();
    for level in 0..max_imfs {
        if rem.iter().all(|r| count_extrema(r) < cfg.min_extrema) {
            break;
        }
        match sift::sift_multichannel(&rem, &dirs, &cfg.sift) {
            Ok((imf, next)) => {
                for (k, &c) in active.iter().enumerate() {
                    imfs[c].push(imf[k].clone());
                }
                rem = next;
            }
            Err(EmdError::TooFewExtrema) => {
                log::debug!("sifting stopped at level {level}: projections lack extrema");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    for (k, &c) in active.iter().enumerate() {
        residual[c] = std::mem::take(&mut rem[k]);
    }
    Ok(DecompositionResult { ids, imfs, residual, dt })
}

/// Zero-crossing frequency estimate `crossings / (2 span)` in Hz.
pub fn zero_crossing_frequency(imf: &[f64], dt: f64) -> f64 {
    if imf.len() < 2 {
        return 0.0;
    }
    count_zero_crossings(imf) as f64 / (2.0 * (imf.len() - 1) as f64 * dt)
}

/// Default upper frequency limit for retained IMFs (Hz).
pub const DEFAULT_MAX_FREQUENCY_HZ: f64 = 10.0;

/// Removes IMF levels whose zero-crossing frequency lies outside
/// `[f_min, f_max]`. The frequency of a level is read from the channel
/// carrying the most energy at that level, so levels stay aligned across
/// channels. Removed IMFs are discarded, not folded into the residual.
pub fn filter_imfs_by_frequency(
    decomp: &DecompositionResult,
    f_min: f64,
    f_max: f64,
) -> Result<DecompositionResult, EmdError> {
    if !(f_min.is_finite() && f_max.is_finite() && f_min >= 0.0 && f_min < f_max) {
        return Err(EmdError::InvalidBand { lo: f_min, hi: f_max });
    }
    let levels = decomp.levels();
    let keep: Vec<bool> = (0..levels)
        .map(|level| {
            let dominant = decomp
                .imfs
                .iter()
                .filter_map(|stack| stack.get(level))
                .map(|imf| (imf.iter().map(|v| v * v).sum::<f64>(), imf))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            match dominant {
                Some((_, imf)) => {
                    let f = zero_crossing_frequency(imf, decomp.dt);
                    (f_min..=f_max).contains(&f)
                }
                None => false,
            }
        })
        .collect();
    let imfs = decomp
        .imfs
        .iter()
        .map(|stack| {
            stack
                .iter()
                .enumerate()
                .filter(|(level, _)| keep[*level])
                .map(|(_, imf)| imf.clone())
                .collect()
        })
        .collect();
    Ok(DecompositionResult {
        ids: decomp.ids.clone(),
        imfs,
        residual: decomp.residual.clone(),
        dt: decomp.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, dt: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 * dt + phase).sin()).collect()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn sift_pure_sine() {
        let x = tone(1.0, 0.01, 1000, 0.3);
        let (imf, rem) = sift(&x, &SiftConfig::default()).unwrap();
        assert!(correlation(&imf, &x) > 0.99);
        let interior = &rem[100..900];
        assert!(interior.iter().all(|r| r.abs() < 0.05), "{:?}", interior.iter().fold(0.0f64, |m, r| m.max(r.abs())));
        for i in 0..x.len() {
            assert_eq!(imf[i] + rem[i], x[i]);
        }
    }

    #[test]
    fn sift_ramp_has_no_extrema() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        assert_eq!(sift(&x, &SiftConfig::default()), Err(EmdError::TooFewExtrema));
    }

    #[test]
    fn sift_sine_plus_ramp() {
        let n = 1000;
        let ramp: Vec<f64> = (0..n).map(|i| 0.002 * i as f64).collect();
        let s = tone(1.0, 0.01, n, 0.0);
        let x: Vec<f64> = s.iter().zip(&ramp).map(|(a, b)| a + b).collect();
        let (imf, rem) = sift(&x, &SiftConfig::default()).unwrap();
        assert!(correlation(&imf, &s) > 0.99);
        let range = ramp[n - 1] - ramp[0];
        let worst = (100..900).map(|i| (rem[i] - ramp[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02 * range, "worst {worst}");
    }

    #[test]
    fn constant_channel_has_no_imfs() {
        let c = vec![1.0; 150];
        let d = decompose_channels(&[&c], 0.02, &EmdConfig::default()).unwrap();
        assert!(d.imfs[0].is_empty());
        assert_eq!(d.residual[0], c);
        assert!(!d.has_imfs());
    }

    #[test]
    fn identical_channels_decompose_identically() {
        let dt = 0.02;
        let x: Vec<f64> = (0..150)
            .map(|i| {
                let t = i as f64 * dt;
                0.05 * (2.0 * PI * 1.5 * t).sin() + 1.0 - 0.3 * (-0.4 * t).exp()
            })
            .collect();
        let d = decompose_channels(&[&x, &x], dt, &EmdConfig::default()).unwrap();
        assert_eq!(d.imfs[0], d.imfs[1]);
        assert_eq!(d.residual[0], d.residual[1]);
    }

    #[test]
    fn recovers_exponential_trend() {
        let dt = 0.02;
        let trend: Vec<f64> = (0..150).map(|i| 1.0 - 0.3 * (-0.4 * i as f64 * dt).exp()).collect();
        let x: Vec<f64> = trend
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.05 * (2.0 * PI * 1.5 * i as f64 * dt).sin())
            .collect();
        let d = decompose_channels(&[&x], dt, &EmdConfig::default()).unwrap();
        let worst = (25..=125).map(|i| (d.residual[0][i] - trend[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 0.01, "worst {worst}");
        let rec = d.reconstruct(0);
        assert!(rec.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(count_extrema(&d.residual[0]) < EmdConfig::default().min_extrema);
    }

    #[test]
    fn decomposition_is_deterministic() {
        let dt = 0.02;
        let a: Vec<f64> = (0..150).map(|i| (i as f64 * 0.3).sin() + 0.01 * i as f64).collect();
        let b: Vec<f64> = (0..150).map(|i| (i as f64 * 0.21).cos()).collect();
        let d1 = decompose_channels(&[&a, &b], dt, &EmdConfig::default()).unwrap();
        let d2 = decompose_channels(&[&a, &b], dt, &EmdConfig::default()).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn frequency_filter_keeps_in_band_levels() {
        let dt = 0.02;
        let n = 150;
        let noise: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mid = tone(1.5, dt, n, 0.1);
        let slow = tone(0.2, dt, n, 0.1);
        assert!((zero_crossing_frequency(&noise, dt) - 25.0).abs() < 1e-9);
        let d = DecompositionResult {
            ids: vec!["A".into()],
            imfs: vec![vec![noise, mid.clone(), slow]],
            residual: vec![vec![0.0; n]],
            dt,
        };
        let f = filter_imfs_by_frequency(&d, 0.5, 5.0).unwrap();
        assert_eq!(f.imfs[0], vec![mid]);
        assert!(filter_imfs_by_frequency(&d, 5.0, 0.5).is_err());
        let none = filter_imfs_by_frequency(&d, 40.0, 50.0).unwrap();
        assert!(!none.has_imfs());
    }
}
