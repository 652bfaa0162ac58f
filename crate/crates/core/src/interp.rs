//! Interpolation over strictly increasing abscissae.

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Clone, Debug)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Returns `None` for fewer than two knots or non-increasing `xs`.
    pub fn new(xs: &[f64], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return None;
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            //   h[i-1] m[i-1] + 2 (h[i-1] + h[i]) m[i] + h[i] m[i+1] = rhs[i]
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                diag[j] = 2.0 * (h[i - 1] + h[i]);
                upper[j] = h[i];
                rhs[j] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
            }
            for j in 1..k {
                let lower = h[j];
                let w = lower / diag[j - 1];
                diag[j] -= w * upper[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                sol[j] = (rhs[j] - upper[j] * sol[j + 1]) / diag[j];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Some(NaturalCubicSpline {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    /// Evaluates the spline; outside the knot range the end cubic is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        if x == x0 {
            return self.ys[i];
        }
        if x == x1 {
            return self.ys[i + 1];
        }
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Piecewise-linear interpolation, constant beyond the ends.
pub fn linear_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let p = xs.partition_point(|&k| k <= x);
    let (x0, x1) = (xs[p - 1], xs[p]);
    let w = (x - x0) / (x1 - x0);
    ys[p - 1] + w * (ys[p] - ys[p - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_linear_data() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.37 + (i * i) as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
        let s = NaturalCubicSpline::new(&xs, &ys).unwrap();
        for k in 0..200 {
            let x = xs[0] + (xs[11] - xs[0]) * k as f64 / 199.0;
            assert!((s.eval(x) - (3.0 * x - 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn spline_hits_knots_and_is_natural() {
        let xs = [0.0, 1.0, 2.5, 3.0, 4.0];
        let ys = [1.0, -1.0, 2.0, 0.5, 0.0];
        let s = NaturalCubicSpline::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert_eq!(s.eval(*x), y);
        }
        assert_eq!(s.m[0], 0.0);
        assert_eq!(s.m[4], 0.0);
        // second difference near the ends is ~0
        let e = 1e-4;
        let d2 = (s.eval(2.0 * e) - 2.0 * s.eval(e) + s.eval(0.0)) / (e * e);
        assert!(d2.abs() < 1e-2, "{d2}");
    }

    #[test]
    fn spline_rejects_bad_knots() {
        assert!(NaturalCubicSpline::new(&[0.0], &[1.0]).is_none());
        assert!(NaturalCubicSpline::new(&[0.0, 0.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn linear_interpolation() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 0.0];
        assert_eq!(linear_at(&xs, &ys, 0.5), 1.0);
        assert_eq!(linear_at(&xs, &ys, 2.0), 1.0);
        assert_eq!(linear_at(&xs, &ys, -5.0), 0.0);
        assert_eq!(linear_at(&xs, &ys, 9.0), 0.0);
    }
}
