//! Grid search for the recovery reference shape.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OelError;
use crate::config::{ConfigDocument, ConfigError};
use crate::distribution::{gompertz_reference, Grid};
use crate::indices::RecoveryProfile;

/// Search grid for `(gamma1, x_star)`; gamma1 points are log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub gamma1_min: f64,
    pub gamma1_max: f64,
    pub gamma1_points: usize,
    pub x_star_min: f64,
    pub x_star_max: f64,
    pub x_star_points: usize,
    /// Selection tolerance; `None` uses the achieved minimum `f*`.
    pub tolerance: Option<f64>,
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            gamma1_min: 1.0,
            gamma1_max: 200.0,
            gamma1_points: 40,
            x_star_min: 0.8,
            x_star_max: 1.3,
            x_star_points: 26,
            tolerance: None,
        }
    }
}

impl SearchRanges {
    pub fn gamma1_values(&self) -> Vec<f64> {
        log_space(self.gamma1_min, self.gamma1_max, self.gamma1_points)
    }

    pub fn x_star_values(&self) -> Vec<f64> {
        lin_space(self.x_star_min, self.x_star_max, self.x_star_points)
    }

    pub fn validate(&self) -> Result<(), OelError> {
        if self.gamma1_points == 0 || self.x_star_points == 0 {
            return Err(OelError::EmptyGrid);
        }
        let ok = self.gamma1_min > 0.0
            && self.gamma1_max >= self.gamma1_min
            && self.gamma1_max.is_finite()
            && self.x_star_min.is_finite()
            && self.x_star_max >= self.x_star_min
            && self.x_star_max.is_finite();
        if !ok {
            return Err(OelError::InvalidInput(format!(
                "bad search ranges: gamma1 [{}, {}], x* [{}, {}]",
                self.gamma1_min, self.gamma1_max, self.x_star_min, self.x_star_max
            )));
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(OelError::InvalidInput(format!("tolerance must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Reads the optional global tuner keys.
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, OelError> {
        let mut s = Self::default();
        let float = |key: &str, slot: &mut f64| -> Result<(), ConfigError> {
            if let Some(e) = doc.global_value(key) {
                *slot = e.parse_f64()?;
            }
            Ok(())
        };
        float("gamma1_min", &mut s.gamma1_min)?;
        float("gamma1_max", &mut s.gamma1_max)?;
        float("x_star_min", &mut s.x_star_min)?;
        float("x_star_max", &mut s.x_star_max)?;
        for (key, slot) in [("gamma1_points", &mut s.gamma1_points), ("x_star_points", &mut s.x_star_points)] {
            if let Some(e) = doc.global_value(key) {
                *slot = e
                    .value
                    .parse()
                    .map_err(|_| e.invalid("expected a non-negative integer".into()))?;
            }
        }
        if let Some(e) = doc.global_value("tolerance") {
            s.tolerance = Some(e.parse_f64()?);
        }
        s.validate()?;
        Ok(s)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub gamma1: f64,
    pub x_star: f64,
    pub d_s1: f64,
    pub d_s2: f64,
    /// Smallest `|D_s1 - D_s2|` over the grid.
    pub f_star: f64,
    /// `|D_s1 - D_s2|` at the selected point, used as the detection tolerance.
    pub epsilon: f64,
    /// Tolerance used for the selection stage.
    pub search_tolerance: f64,
    pub d_critical_r: f64,
}

/// Two-stage search: `f*` is the smallest `|D_s1 - D_s2|` over the grid,
/// then the smallest gamma1 (ties: smallest x*) with
/// `|D_s1 - D_s2| <= f* + tolerance` is returned.
pub fn tune_gamma(
    s1: &[f64],
    s2: &[f64],
    eq0: f64,
    v_pre: f64,
    dt: f64,
    grid: Grid,
    search: &SearchRanges,
) -> Result<TuningResult, OelError> {
    search.validate()?;
    let p1 = RecoveryProfile::new(s1, v_pre, eq0, dt, grid)?;
    let p2 = RecoveryProfile::new(s2, v_pre, eq0, dt, grid)?;
    let gammas = search.gamma1_values();
    let shifts = search.x_star_values();
    let points: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| shifts.iter().map(move |&x| (g, x)))
        .collect();
    let scored = points
        .par_iter()
        .map(|&(g, x)| {
            let reference = gompertz_reference(g, x, grid)?;
            let d1 = p1.index(&reference)?;
            let d2 = p2.index(&reference)?;
            Ok((g, x, d1, d2))
        })
        .collect::<Result<Vec<_>, OelError>>()?;
    let f_star = scored
        .iter()
        .map(|&(_, _, d1, d2)| (d1 - d2).abs())
        .fold(f64::INFINITY, f64::min);
    let search_tolerance = search.tolerance.unwrap_or(f_star);
    let bound = f_star + search_tolerance;
    // `scored` is ordered by gamma1, then x*, so the first hit is the minimum.
    let &(gamma1, x_star, d_s1, d_s2) = scored
        .iter()
        .find(|&&(_, _, d1, d2)| (d1 - d2).abs() <= bound)
        .ok_or(OelError::EmptyGrid)?;
    Ok(TuningResult {
        gamma1,
        x_star,
        d_s1,
        d_s2,
        f_star,
        epsilon: (d_s1 - d_s2).abs(),
        search_tolerance,
        d_critical_r: 0.5 * (d_s1 + d_s2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_hit_their_ends() {
        let s = SearchRanges::default();
        let g = s.gamma1_values();
        assert_eq!((g.len(), g[0], g[39]), (40, 1.0, 200.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let x = s.x_star_values();
        assert_eq!(x.len(), 26);
        assert!((x[1] - 0.82).abs() < 1e-12 && x[25] == 1.3);
    }

    #[test]
    fn identical_signals_pick_the_first_point() {
        let dt = 0.02;
        let s: Vec<f64> = (0..150).map(|i| 1.0 - 0.2 * (-0.3 * i as f64 * dt).exp()).collect();
        let r = tune_gamma(&s, &s, 1.0, 1.0, dt, Grid::default(), &SearchRanges::default()).unwrap();
        assert_eq!(r.f_star, 0.0);
        assert_eq!((r.gamma1, r.x_star), (1.0, 0.8));
        assert_eq!(r.d_critical_r, r.d_s1);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let s = vec![0.8; 10];
        let ranges = SearchRanges {
            gamma1_points: 0,
            ..SearchRanges::default()
        };
        assert!(matches!(
            tune_gamma(&s, &s, 1.0, 1.0, 0.02, Grid::default(), &ranges),
            Err(OelError::EmptyGrid)
        ));
    }

    #[test]
    fn global_keys_override_defaults() {
        let doc = ConfigDocument::parse("gamma1_points = 5\ntolerance = 0.01\nx_star_min = 0.9\n").unwrap();
        let s = SearchRanges::from_document(&doc).unwrap();
        assert_eq!((s.gamma1_points, s.tolerance, s.x_star_min), (5, Some(0.01), 0.9));
    }
}
