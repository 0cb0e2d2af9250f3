//! Natural cubic spline through scattered knots, evaluated on a sample grid.

/// Coefficients of a natural cubic spline.
pub(crate) struct NaturalSpline<'a> {
    x: &'a [f64],
    y: &'a [f64],
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl<'a> NaturalSpline<'a> {
    /// `x` must be strictly increasing and as long as `y` (at least 2 knots).
    pub(crate) fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len();
        debug_assert!(n >= 2 && y.len() == n);
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self { x, y, m }
    }

    fn eval_in(&self, seg: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[seg], self.x[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[seg]
            + b * self.y[seg + 1]
            + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0
    }

    /// Evaluates at `0, 1, ..., len - 1`. Points outside the knot span use
    /// the end cubic pieces.
    pub(crate) fn sample(&self, len: usize) -> Vec<f64> {
        let last = self.x.len() - 2;
        let mut seg = 0;
        (0..len)
            .map(|i| {
                let t = i as f64;
                while seg < last && t > self.x[seg + 1] {
                    seg += 1;
                }
                self.eval_in(seg, t)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_and_lines() {
        let x = [0.0, 2.0, 5.0, 9.0];
        let y = [1.0, 3.0, 6.0, 10.0];
        let s = NaturalSpline::new(&x, &y).sample(10);
        for (i, v) in s.iter().enumerate() {
            assert!((v - (i as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_end_conditions() {
        let x = [-1.0, 1.0, 3.0, 6.0, 7.0];
        let y = [0.0, 2.0, -1.0, 0.5, 0.0];
        let sp = NaturalSpline::new(&x, &y);
        assert_eq!(sp.m[0], 0.0);
        assert_eq!(sp.m[4], 0.0);
        let s = sp.sample(8);
        assert!((s[1] - 2.0).abs() < 1e-12);
        assert!((s[3] + 1.0).abs() < 1e-12);
        assert!((s[6] - 0.5).abs() < 1e-12);
        // Continuity of the first derivative at an interior knot.
        let d = |seg: usize, t: f64| (sp.eval_in(seg, t + 1e-6) - sp.eval_in(seg, t - 1e-6)) / 2e-6;
        assert!((d(1, 3.0) - d(2, 3.0)).abs() < 1e-6);
    }

    #[test]
    fn two_knots_is_linear() {
        let s = NaturalSpline::new(&[0.0, 4.0], &[0.0, 2.0]).sample(5);
        assert_eq!(s, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
