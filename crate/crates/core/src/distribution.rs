//! Divergence-factor histograms, the normalized shifted-reversed Gompertz
//! reference and the KL divergence between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("no divergence factors to bin")]
    Empty,
    #[error("bin count must be >= 2, got {0}")]
    TooFewBins(usize),
    #[error("invalid range [{lo}, {hi}]: need finite lo < hi")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("divergence factor #{index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("Gompertz shape must be finite and > 0, got {0}")]
    InvalidGamma(f64),
    #[error("Gompertz shift must be finite, got {0}")]
    InvalidShift(f64),
    #[error("bin grids differ")]
    GridMismatch,
    #[error("distributions have different lengths ({p} vs {q})")]
    LengthMismatch { p: usize, q: usize },
    #[error("reference probability is zero in bin {0} (KL undefined)")]
    ZeroReference(usize),
    #[error("probability vector invalid: {0}")]
    InvalidProbabilities(String),
}

/// Uniform binning of `[lo, hi]` into `bins` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { bins: 20, lo: 0.0, hi: 1.5 }
    }
}

impl Grid {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self, DistributionError> {
        if bins < 2 {
            return Err(DistributionError::TooFewBins(bins));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DistributionError::InvalidRange { lo, hi });
        }
        Ok(Self { bins, lo, hi })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.bins)
            .map(|i| if i == self.bins { self.hi } else { self.lo + i as f64 * w })
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    /// Bin holding `x`; values outside the range clamp to the edge bins.
    pub fn index_of(&self, x: f64) -> usize {
        let pos = (x - self.lo) * self.bins as f64 / (self.hi - self.lo);
        if pos <= 0.0 {
            0
        } else {
            (pos.floor() as usize).min(self.bins - 1)
        }
    }
}

/// What happens to samples outside `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfRangePolicy {
    ClampToEdges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceHistogram {
    pub grid: Grid,
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub counts: Vec<usize>,
    pub below_range: usize,
    pub above_range: usize,
    pub policy: OutOfRangePolicy,
}

impl DivergenceHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn histogram(factors: &[f64], grid: Grid) -> Result<DivergenceHistogram, DistributionError> {
    let grid = Grid::new(grid.bins, grid.lo, grid.hi)?;
    if factors.is_empty() {
        return Err(DistributionError::Empty);
    }
    let mut counts = vec![0usize; grid.bins];
    let (mut below, mut above) = (0, 0);
    for (index, &x) in factors.iter().enumerate() {
        if !x.is_finite() {
            return Err(DistributionError::NonFinite { index, value: x });
        }
        if x < grid.lo {
            below += 1;
        } else if x > grid.hi {
            above += 1;
        }
        counts[grid.index_of(x)] += 1;
    }
    let total = factors.len() as f64;
    Ok(DivergenceHistogram {
        grid,
        bin_edges: grid.edges(),
        probabilities: counts.iter().map(|&c| c as f64 / total).collect(),
        counts,
        below_range: below,
        above_range: above,
        policy: OutOfRangePolicy::ClampToEdges,
    })
}

/// Unnormalized shifted-reversed Gompertz curve `exp(-exp(gamma (x - x_star)))`.
pub fn gompertz(x: f64, gamma: f64, x_star: f64) -> f64 {
    (-(gamma * (x - x_star)).exp()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GompertzReference {
    pub gamma: f64,
    pub x_star: f64,
    pub grid: Grid,
    pub bin_edges: Vec<f64>,
    /// Normalized probabilities. Bins whose mass underflows `f64` are
    /// stored as `f64::MIN_POSITIVE`; `log_probabilities` stays exact.
    pub probabilities: Vec<f64>,
    pub log_probabilities: Vec<f64>,
}

pub fn gompertz_reference(gamma: f64, x_star: f64, grid: Grid) -> Result<GompertzReference, DistributionError> {
    let grid = Grid::new(grid.bins, grid.lo, grid.hi)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(DistributionError::InvalidGamma(gamma));
    }
    if !x_star.is_finite() {
        return Err(DistributionError::InvalidShift(x_star));
    }
    // log sigma(x) = -exp(gamma (x - x*)); normalize with log-sum-exp.
    let log_sigma: Vec<f64> = grid
        .centers()
        .iter()
        .map(|&x| -(gamma * (x - x_star)).exp())
        .collect();
    let max = log_sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + log_sigma.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let log_probabilities: Vec<f64> = log_sigma.iter().map(|l| l - log_norm).collect();
    let probabilities = log_probabilities
        .iter()
        .map(|l| l.exp().max(f64::MIN_POSITIVE))
        .collect();
    Ok(GompertzReference {
        gamma,
        x_star,
        grid,
        bin_edges: grid.edges(),
        probabilities,
        log_probabilities,
    })
}

/// `sum p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &DivergenceHistogram, q: &GompertzReference) -> Result<f64, DistributionError> {
    if p.grid != q.grid {
        return Err(DistributionError::GridMismatch);
    }
    Ok(kl_from_logs(&p.probabilities, &q.log_probabilities))
}

/// KL between a probability vector on the reference's grid and the reference.
pub fn kl_to_reference(p: &[f64], q: &GompertzReference) -> Result<f64, DistributionError> {
    if p.len() != q.log_probabilities.len() {
        return Err(DistributionError::LengthMismatch {
            p: p.len(),
            q: q.log_probabilities.len(),
        });
    }
    Ok(kl_from_logs(p, &q.log_probabilities))
}

fn kl_from_logs(p: &[f64], log_q: &[f64]) -> f64 {
    p.iter()
        .zip(log_q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &lq)| pi * (pi.ln() - lq))
        .sum::<f64>()
        .max(0.0)
}

/// KL on plain probability vectors. A zero `q_i` is an error regardless of `p_i`.
pub fn kl_divergence_raw(p: &[f64], q: &[f64]) -> Result<f64, DistributionError> {
    if p.len() != q.len() {
        return Err(DistributionError::LengthMismatch { p: p.len(), q: q.len() });
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(DistributionError::InvalidProbabilities(format!(
                "{name} has negative or non-finite entries"
            )));
        }
    }
    if let Some(i) = q.iter().position(|&x| x == 0.0) {
        return Err(DistributionError::ZeroReference(i));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_at_one() {
        let h = histogram(&[1.0; 50], Grid::default()).unwrap();
        assert_eq!(h.probabilities[13], 1.0);
        assert_eq!(h.probabilities.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn three_equal_bins() {
        let h = histogram(&[0.9, 1.0, 1.1], Grid::default()).unwrap();
        let nonzero: Vec<_> = h.probabilities.iter().filter(|&&p| p > 0.0).collect();
        assert_eq!(nonzero.len(), 3);
        assert!(nonzero.iter().all(|&&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_samples_fill_bins_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.5)).collect();
        let h = histogram(&xs, Grid::default()).unwrap();
        let worst = h.probabilities.iter().map(|p| (p - 0.05).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02, "worst deviation {worst}");
    }

    #[test]
    fn out_of_range_clamps() {
        let h = histogram(&[-3.0, 0.0, 1.5, 40.0], Grid::default()).unwrap();
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[19], 2);
        assert_eq!((h.below_range, h.above_range), (1, 1));
    }

    #[test]
    fn histogram_errors() {
        assert_eq!(histogram(&[], Grid::default()), Err(DistributionError::Empty));
        assert!(matches!(
            histogram(&[1.0], Grid { bins: 1, lo: 0.0, hi: 1.0 }),
            Err(DistributionError::TooFewBins(1))
        ));
        assert!(histogram(&[1.0], Grid { bins: 4, lo: 1.0, hi: 1.0 }).is_err());
        assert!(histogram(&[f64::NAN], Grid::default()).is_err());
    }

    #[test]
    fn gompertz_at_shift_is_inverse_e() {
        assert!((gompertz(1.0, 10.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gompertz(0.7, 3.0, 0.7) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn steep_reference_is_a_step() {
        let r = gompertz_reference(1e3, 1.0, Grid::default()).unwrap();
        let c = Grid::default().centers();
        let below: f64 = r.probabilities.iter().zip(&c).filter(|(_, &x)| x < 1.0).map(|(p, _)| p).sum();
        assert!(below > 1.0 - 1e-9);
        assert!(r.probabilities.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn reference_for_default_grid() {
        let r = gompertz_reference(10.0, 1.0, Grid::default()).unwrap();
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Independent evaluation at bin centres 0.0375 + 0.075 i.
        let raw: Vec<f64> = (0..20)
            .map(|i| {
                let x = 0.0375 + 0.075 * i as f64;
                (-(10.0 * (x - 1.0)).exp()).exp()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in r.probabilities.iter().zip(&raw) {
            assert!((a - b / z).abs() < 1e-14);
        }
        for w in r.probabilities.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn reference_rejects_bad_gamma() {
        assert_eq!(
            gompertz_reference(0.0, 1.0, Grid::default()),
            Err(DistributionError::InvalidGamma(0.0))
        );
        assert!(gompertz_reference(-1.0, 1.0, Grid::default()).is_err());
    }

    #[test]
    fn two_bin_kl() {
        let v = kl_divergence_raw(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(kl_divergence_raw(&[0.5, 0.5], &[1.0, 0.0]), Err(DistributionError::ZeroReference(1)));
        assert_eq!(kl_divergence_raw(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let h = histogram(&[1.0], Grid::default()).unwrap();
        let r = gompertz_reference(10.0, 1.0, Grid::new(40, 0.0, 1.5).unwrap()).unwrap();
        assert_eq!(kl_divergence(&h, &r), Err(DistributionError::GridMismatch));
    }

    #[test]
    fn underflowing_reference_keeps_finite_kl() {
        let r = gompertz_reference(200.0, 0.8, Grid::default()).unwrap();
        let h = histogram(&[1.45], Grid::default()).unwrap();
        let d = kl_divergence(&h, &r).unwrap();
        assert!(d.is_finite() && d > 1e20);
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_self(raw in proptest::collection::vec(0.0f64..1.0, 2..30)) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-3;
            let q: Vec<f64> = raw.iter().map(|x| (x + 1e-3 / raw.len() as f64) / s).collect();
            prop_assert!(kl_divergence_raw(&q, &q).unwrap().abs() < 1e-12);
            let mut p = q.clone();
            p.rotate_left(1);
            prop_assert!(kl_divergence_raw(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn histogram_is_order_invariant(mut xs in proptest::collection::vec(-1.0f64..3.0, 1..200)) {
            let a = histogram(&xs, Grid::default()).unwrap();
            xs.reverse();
            let b = histogram(&xs, Grid::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn reference_is_non_increasing(gamma in 0.01f64..500.0, x_star in -1.0f64..3.0) {
            let r = gompertz_reference(gamma, x_star, Grid::default()).unwrap();
            for w in r.log_probabilities.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
