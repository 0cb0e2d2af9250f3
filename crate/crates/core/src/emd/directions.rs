//! Projection directions for multivariate sifting.

use std::f64::consts::PI;

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f /= b;
    }
    r
}

/// `count` unit vectors in `dims` dimensions.
///
/// One dimension: `+1` and `-1`. Two: evenly spaced angles offset by half a
/// step. Three or more: Halton points pushed through Box-Muller and
/// normalized, each followed by its antipode.
pub fn projection_directions(dims: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(dims >= 1 && count >= 2, "need at least one dimension and two directions");
    match dims {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let pairs = count.div_ceil(2);
            let coords = dims.div_ceil(2) * 2;
            let primes = first_primes(coords);
            let mut out = Vec::with_capacity(pairs * 2);
            for k in 1..=pairs as u64 {
                let u: Vec<f64> = primes
                    .iter()
                    .map(|&p| radical_inverse(k, p))
                    .collect();
                let mut v: Vec<f64> = u
                    .chunks_exact(2)
                    .flat_map(|p| {
                        let r = (-2.0 * p[0].max(f64::MIN_POSITIVE).ln()).sqrt();
                        let a = 2.0 * PI * p[1];
                        [r * a.cos(), r * a.sin()]
                    })
                    .take(dims)
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                } else {
                    v = (0..dims).map(|d| if d == 0 { 1.0 } else { 0.0 }).collect();
                }
                let anti: Vec<f64> = v.iter().map(|x| -x).collect();
                out.push(v);
                out.push(anti);
            }
            out.truncate(count.max(2));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_directions() {
        let d = projection_directions(2, 8);
        assert_eq!(d.len(), 8);
        for v in &d {
            assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-15);
        }
        // Antipodes present.
        for k in 0..4 {
            assert!((d[k][0] + d[k + 4][0]).abs() < 1e-12);
            assert!((d[k][1] + d[k + 4][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn spatial_directions_are_unit_and_deterministic() {
        let a = projection_directions(5, 8);
        assert_eq!(a, projection_directions(5, 8));
        assert_eq!(a.len(), 8);
        for v in &a {
            assert_eq!(v.len(), 5);
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(projection_directions(1, 8), vec![vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn halton_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }
}
