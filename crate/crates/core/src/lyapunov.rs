//! Finite-time and finite-size Lyapunov exponent series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddedTrajectory;

/// Smallest initial residual deviation (pu) worth analysing.
pub const EPS_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("separations and window length must be finite and > 0 (delta0 = {delta0}, deltaT = {delta_t}, T = {t})")]
    InvalidWindow { delta0: f64, delta_t: f64, t: f64 },
    #[error("initial deviation {deviation:e} pu is below the floor {EPS_FLOOR:e} pu")]
    BelowFloor { deviation: f64 },
    #[error("need at least 2 samples from t0 onward, got {0}")]
    TooShort(usize),
    #[error("sample interval must be finite and > 0, got {0}")]
    InvalidDt(f64),
    #[error("no neighbour pairs supplied")]
    NoPairs,
    #[error("no neighbour pair with non-zero initial distance and >= 2 evolvable steps")]
    NoUsablePairs,
    #[error("pair ({i}, {j}) outside trajectory of {len} points")]
    PairOutOfRange { i: usize, j: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    ResidualFsle,
    ImfFtle,
}

/// Time-resolved exponents `lambda(k)` (1/s) with their divergence factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSeries {
    pub lambdas: Vec<f64>,
    pub divergence_factors: Vec<f64>,
    pub k_offsets: Vec<usize>,
    pub dt: f64,
    pub kind: SeriesKind,
}

impl ExponentSeries {
    pub fn new(lambdas: Vec<f64>, k_offsets: Vec<usize>, dt: f64, kind: SeriesKind) -> Self {
        let divergence_factors = lambdas.iter().map(|l| l.exp()).collect();
        Self {
            lambdas,
            divergence_factors,
            k_offsets,
            dt,
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn min_lambda(&self) -> Option<f64> {
        self.lambdas.iter().copied().reduce(f64::min)
    }

    pub fn max_lambda(&self) -> Option<f64> {
        self.lambdas.iter().copied().reduce(f64::max)
    }
}

/// `(1/T) ln(deltaT / delta0)`.
pub fn ftle_window(delta0: f64, delta_t: f64, t: f64) -> Result<f64, LyapunovError> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !(ok(delta0) && ok(delta_t) && ok(t)) {
        return Err(LyapunovError::InvalidWindow {
            delta0,
            delta_t,
            t,
        });
    }
    Ok((delta_t / delta0).ln() / t)
}

/// Convergence rate of the residual towards `eq0`:
/// `lambda_R(k) = ln(|R(t0 + k dt) - eq0| / |R(t0) - eq0|) / (k dt)`, `k >= 1`.
///
/// Offsets where the deviation is exactly zero are skipped.
pub fn fsle_residual_series(
    residual: &[f64],
    eq0: f64,
    t0_index: usize,
    dt: f64,
) -> Result<ExponentSeries, LyapunovError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(LyapunovError::InvalidDt(dt));
    }
    let available = residual.len().saturating_sub(t0_index);
    if available < 2 {
        return Err(LyapunovError::TooShort(available));
    }
    let d0 = (residual[t0_index] - eq0).abs();
    if !(d0 > EPS_FLOOR) {
        return Err(LyapunovError::BelowFloor { deviation: d0 });
    }
    let mut lambdas = Vec::with_capacity(available - 1);
    let mut offsets = Vec::with_capacity(available - 1);
    for k in 1..available {
        let d = (residual[t0_index + k] - eq0).abs();
        if d == 0.0 {
            continue;
        }
        lambdas.push((d / d0).ln() / (k as f64 * dt));
        offsets.push(k);
    }
    Ok(ExponentSeries::new(lambdas, offsets, dt, SeriesKind::ResidualFsle))
}

/// Time-resolved divergence exponent from neighbour pairs.
///
/// For each pair the log ratio `ln(d_ij(k) / d_ij(0))` is tracked while both
/// points can be advanced. `L(k)` is the mean over pairs still available at
/// offset `k`, and `lambda(k)` is the least-squares slope of `L(k')` against
/// `k' dt` for `k' = 0..=k`. Pairs with zero initial distance or fewer than
/// two evolvable steps are dropped; zero distances at later offsets are
/// skipped for that offset.
pub fn ftle_imf_series(emb: &EmbeddedTrajectory, pairs: &[(usize, usize)]) -> Result<ExponentSeries, LyapunovError> {
    if pairs.is_empty() {
        return Err(LyapunovError::NoPairs);
    }
    let n = emb.len();
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(LyapunovError::PairOutOfRange { i, j, len: n });
        }
    }
    let curves: Vec<Vec<Option<f64>>> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let steps = n - 1 - i.max(j);
            let d0 = emb.distance(i, j);
            if steps < 2 || d0 == 0.0 {
                return None;
            }
            Some(
                (0..=steps)
                    .map(|k| {
                        let d = emb.distance(i + k, j + k);
                        (d > 0.0).then(|| (d / d0).ln())
                    })
                    .collect(),
            )
        })
        .collect();
    if curves.is_empty() {
        return Err(LyapunovError::NoUsablePairs);
    }
    let kmax = curves.iter().map(|c| c.len() - 1).max().unwrap_or(0);
    let mut sums = vec![0.0; kmax + 1];
    let mut counts = vec![0usize; kmax + 1];
    for c in &curves {
        for (k, v) in c.iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let dt = emb.dt;
    let mut lambdas = Vec::with_capacity(kmax);
    let mut offsets = Vec::with_capacity(kmax);
    let (mut st, mut sl, mut stt, mut stl, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..=kmax {
        if counts[k] == 0 {
            continue;
        }
        let t = k as f64 * dt;
        let l = sums[k] / counts[k] as f64;
        st += t;
        sl += l;
        stt += t * t;
        stl += t * l;
        m += 1.0;
        if k == 0 || m < 2.0 {
            continue;
        }
        let denom = m * stt - st * st;
        if denom > 0.0 {
            lambdas.push((m * stl - st * sl) / denom);
            offsets.push(k);
        }
    }
    Ok(ExponentSeries::new(lambdas, offsets, dt, SeriesKind::ImfFtle))
}

/// Small-noise bias and variance of a window FTLE whose end separation
/// carries additive Gaussian noise of standard deviation `sigma`.
pub fn noise_bias_variance(sigma: f64, t: f64, delta_t: f64) -> (f64, f64) {
    let r2 = sigma * sigma / (delta_t * delta_t);
    (-r2 / (2.0 * t), r2 / (t * t))
}
