//! Real roots of the voltage-cap quartic.

use nalgebra::Matrix4;

/// Tolerance on the imaginary part when accepting an eigenvalue as real.
pub const IMAG_TOL: f64 = 1e-9;

/// Roots of the monic quartic `x^4 + c[0] x^3 + c[1] x^2 + c[2] x + c[3]`
/// with negligible imaginary part, polished by Newton steps and sorted.
pub fn real_roots_monic(c: [f64; 4]) -> Vec<f64> {
    #[rustfmt::skip]
    let companion = Matrix4::new(
        -c[0], -c[1], -c[2], -c[3],
        1.0,   0.0,   0.0,   0.0,
        0.0,   1.0,   0.0,   0.0,
        0.0,   0.0,   1.0,   0.0,
    );
    let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < IMAG_TOL * scale)
        .map(|z| polish(c, z.re))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn eval(c: [f64; 4], x: f64) -> (f64, f64) {
    let p = (((x + c[0]) * x + c[1]) * x + c[2]) * x + c[3];
    let dp = ((4.0 * x + 3.0 * c[0]) * x + 2.0 * c[1]) * x + c[2];
    (p, dp)
}

fn polish(c: [f64; 4], mut x: f64) -> f64 {
    for _ in 0..8 {
        let (p, dp) = eval(c, x);
        if dp == 0.0 || !p.is_finite() {
            break;
        }
        let next = x - p / dp;
        if !next.is_finite() || eval(c, next).0.abs() >= p.abs() {
            break;
        }
        x = next;
    }
    x
}
