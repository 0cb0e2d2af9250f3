//! Phase-space reconstruction: ROCOV augmentation, delay embedding and
//! Theiler-windowed nearest neighbours.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of equiprobable bins for the mutual-information scan.
pub const MI_BINS: usize = 16;
/// Shortest signal accepted by [`select_delay`].
pub const MIN_DELAY_SIGNAL: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("no channels supplied")]
    NoChannels,
    #[error("need at least {needed} samples, got {len}")]
    TooShort { len: usize, needed: usize },
    #[error("channel {channel} has {found} samples, expected {expected}")]
    LengthMismatch {
        channel: usize,
        expected: usize,
        found: usize,
    },
    #[error("signal has zero variance")]
    ConstantSignal,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("embedding dimension and delay must be >= 1 (m = {m}, tau = {tau})")]
    InvalidParameters { m: usize, tau: usize },
    #[error("Theiler window {theiler} leaves no admissible neighbour among {points} points")]
    NoAdmissiblePair { theiler: usize, points: usize },
}

/// Delay-embedded trajectory. Points are stored row-major in `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedTrajectory {
    data: Vec<f64>,
    dim: usize,
    pub m: usize,
    pub tau: usize,
    pub theiler: usize,
    pub dt: f64,
}

impl EmbeddedTrajectory {
    /// Builds a trajectory directly from points (all of equal dimension).
    pub fn from_points(points: &[Vec<f64>], m: usize, tau: usize, theiler: usize, dt: f64) -> Result<Self, EmbedError> {
        if m == 0 || tau == 0 {
            return Err(EmbedError::InvalidParameters { m, tau });
        }
        if points.len() < 2 {
            return Err(EmbedError::TooShort {
                len: points.len(),
                needed: 2,
            });
        }
        let dim = points[0].len();
        let mut data = Vec::with_capacity(dim * points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(EmbedError::LengthMismatch {
                    channel: i,
                    expected: dim,
                    found: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Ok(Self {
            data,
            dim,
            m,
            tau,
            theiler,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Appends the first difference to every channel: `x_i = [v_i, v_i - v_{i-1}]`
/// per channel, for `i = 1..n`. Output rows are ordered
/// `[v_1, dv_1, v_2, dv_2, ...]`.
pub fn augment_rocov(channels: &[&[f64]]) -> Result<Vec<Vec<f64>>, EmbedError> {
    let Some(first) = channels.first() else {
        return Err(EmbedError::NoChannels);
    };
    let n = first.len();
    if n < 2 {
        return Err(EmbedError::TooShort { len: n, needed: 2 });
    }
    for (c, ch) in channels.iter().enumerate() {
        if ch.len() != n {
            return Err(EmbedError::LengthMismatch {
                channel: c,
                expected: n,
                found: ch.len(),
            });
        }
    }
    Ok((1..n)
        .map(|i| {
            channels
                .iter()
                .flat_map(|ch| [ch[i], ch[i] - ch[i - 1]])
                .collect()
        })
        .collect())
}

/// Shifts every coordinate to zero mean and scales it to unit RMS.
/// Coordinates with zero spread are left at zero.
pub fn normalize_columns(states: &mut [Vec<f64>]) {
    let Some(dim) = states.first().map(Vec::len) else {
        return;
    };
    let n = states.len() as f64;
    for c in 0..dim {
        let mean = states.iter().map(|s| s[c]).sum::<f64>() / n;
        let rms = (states.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 0.0 };
        for s in states.iter_mut() {
            s[c] = (s[c] - mean) * scale;
        }
    }
}

/// Stacks delayed copies: point `i` is `[x_i, x_{i+tau}, ..., x_{i+(m-1)tau}]`.
pub fn delay_embed(
    states: &[Vec<f64>],
    m: usize,
    tau: usize,
    theiler: usize,
    dt: f64,
) -> Result<EmbeddedTrajectory, EmbedError> {
    if m == 0 || tau == 0 {
        return Err(EmbedError::InvalidParameters { m, tau });
    }
    let span = (m - 1) * tau;
    if states.len() <= span + 1 {
        return Err(EmbedError::TooShort {
            len: states.len(),
            needed: span + 2,
        });
    }
    let n = states.len() - span;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).flat_map(|k| states[i + k * tau].iter().copied()).collect())
        .collect();
    EmbeddedTrajectory::from_points(&points, m, tau, theiler, dt)
}

/// For each point with an admissible partner (`|i - j| > theiler`), the
/// nearest such partner by Euclidean distance; ties go to the smaller `j`.
pub fn nearest_neighbors(emb: &EmbeddedTrajectory) -> Result<Vec<(usize, usize)>, EmbedError> {
    let n = emb.len();
    let theiler = emb.theiler;
    if n < 2 || theiler + 1 >= n {
        return Err(EmbedError::NoAdmissiblePair { theiler, points: n });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let yi = emb.point(i);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if i.abs_diff(j) <= theiler {
                    continue;
                }
                let d2: f64 = yi.iter().zip(emb.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(_, b)| d2 < b) {
                    best = Some((j, d2));
                }
            }
            best.map(|(j, _)| (i, j))
        })
        .collect();
    if pairs.is_empty() {
        return Err(EmbedError::NoAdmissiblePair { theiler, points: n });
    }
    Ok(pairs)
}

fn check_signal(signal: &[f64]) -> Result<(), EmbedError> {
    if let Some(i) = signal.iter().position(|x| !x.is_finite()) {
        return Err(EmbedError::NonFinite(i));
    }
    Ok(())
}

fn equiprobable_bins(signal: &[f64], bins: usize) -> Vec<usize> {
    let n = signal.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| signal[a].total_cmp(&signal[b]).then(a.cmp(&b)));
    // Equal values share the bin of their lowest rank.
    let mut out = vec![0; n];
    let mut bin = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank == 0 || signal[i] != signal[order[rank - 1]] {
            bin = rank * bins / n;
        }
        out[i] = bin;
    }
    out
}

/// Mutual information (nats) between `x_i` and `x_{i+lag}` using the given
/// bin labels.
fn lagged_mi(labels: &[usize], bins: usize, lag: usize) -> f64 {
    let n = labels.len() - lag;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for i in 0..n {
        let (a, b) = (labels[i], labels[i + lag]);
        joint[a * bins + b] += 1;
        pa[a] += 1;
        pb[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (pa[a] as f64 * pb[b] as f64)).ln();
            }
        }
    }
    mi
}

/// Mutual-information curve for lags `1..=max_lag`.
pub fn mutual_information_curve(signal: &[f64], max_lag: usize) -> Vec<f64> {
    let labels = equiprobable_bins(signal, MI_BINS);
    (1..=max_lag).map(|lag| lagged_mi(&labels, MI_BINS, lag)).collect()
}

/// Delay (in samples) at the first minimum of the binned mutual information.
///
/// A lag whose information is already at the finite-sample bias level of
/// independent data also counts as the minimum. Without a minimum before
/// `len / 4`, falls back to the lag where the autocorrelation first drops
/// below `1/e`.
pub fn select_delay(signal: &[f64]) -> Result<usize, EmbedError> {
    check_signal(signal)?;
    let n = signal.len();
    if n < MIN_DELAY_SIGNAL {
        return Err(EmbedError::TooShort {
            len: n,
            needed: MIN_DELAY_SIGNAL,
        });
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    if signal.iter().all(|&x| x == signal[0]) || signal.iter().all(|&x| (x - mean).abs() == 0.0) {
        return Err(EmbedError::ConstantSignal);
    }
    let max_lag = n / 4;
    let mi = mutual_information_curve(signal, max_lag + 1);
    let bias_floor = |lag: usize| 1.5 * ((MI_BINS - 1) * (MI_BINS - 1)) as f64 / (2.0 * (n - lag) as f64);
    for k in 1..=max_lag {
        let here = mi[k - 1];
        if here <= bias_floor(k) || here <= mi[k] {
            return Ok(k);
        }
    }
    Ok(autocorrelation_delay(signal).unwrap_or(max_lag.max(1)))
}

/// First lag at which the sample autocorrelation falls below `1/e`.
pub fn autocorrelation_delay(signal: &[f64]) -> Option<usize> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let var: f64 = signal.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return None;
    }
    let threshold = (-1.0f64).exp();
    (1..n).find(|&lag| {
        let c: f64 = (0..n - lag).map(|i| (signal[i] - mean) * (signal[i + lag] - mean)).sum();
        c / var < threshold
    })
}

/// Number of sign changes of `signal - mean(signal)`.
pub fn zero_crossings(signal: &[f64]) -> usize {
    let mean = signal.iter().sum::<f64>() / signal.len().max(1) as f64;
    let mut count = 0;
    let mut prev: Option<bool> = None;
    for &x in signal {
        let d = x - mean;
        if d == 0.0 {
            continue;
        }
        let pos = d > 0.0;
        if prev.is_some_and(|p| p != pos) {
            count += 1;
        }
        prev = Some(pos);
    }
    count
}

/// Mean oscillation period in samples estimated from zero crossings, or
/// `None` when the signal never crosses its mean.
pub fn dominant_period_samples(signal: &[f64]) -> Option<f64> {
    let zc = zero_crossings(signal);
    if zc == 0 || signal.len() < 2 {
        None
    } else {
        Some(2.0 * (signal.len() - 1) as f64 / zc as f64)
    }
}

/// Embedding settings. `tau` and `theiler` are chosen from the data when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub m: usize,
    pub tau: Option<usize>,
    pub theiler: Option<usize>,
    pub normalize: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            m: 4,
            tau: None,
            theiler: None,
            normalize: true,
        }
    }
}
