//! Natural cubic spline interpolation on strictly increasing knots.

use crate::error::{IceLabError, Result};

/// Cubic spline with natural (zero second derivative) end conditions.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Fit a natural cubic spline through (x, y). Requires at least 2 knots
    /// with strictly increasing x.
    pub fn natural(x: &[f64], y: &[f64]) -> Result<CubicSpline> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(IceLabError::Data(format!(
                "spline needs >= 2 matching knots, got {} x and {} y",
                n,
                y.len()
            )));
        }
        for i in 1..n {
            if !(x[i] > x[i - 1]) {
                return Err(IceLabError::Data(format!(
                    "spline knots must be strictly increasing; x[{}]={} <= x[{}]={}",
                    i,
                    x[i],
                    i - 1,
                    x[i - 1]
                )));
            }
        }
        // Tridiagonal system for interior second derivatives (Thomas solve);
        // natural conditions pin m[0] = m[n-1] = 0.
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut lower = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..=k {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                lower[i - 1] = h0 / 6.0;
                diag[i - 1] = (x[i + 1] - x[i - 1]) / 3.0;
                upper[i - 1] = h1 / 6.0;
                rhs[i - 1] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
            }
            for i in 1..k {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            m[1..=k].copy_from_slice(&sol);
        }
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    fn segment(&self, xq: f64) -> usize {
        let n = self.x.len();
        match self
            .x
            .binary_search_by(|v| v.partial_cmp(&xq).expect("finite knot"))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }

    /// Evaluate the spline; arguments outside the knot range are clamped to
    /// the nearest endpoint.
    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        let xq = xq.clamp(self.x[0], self.x[n - 1]);
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - xq) / h;
        let b = (xq - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative of the spline (clamped like `eval`).
    pub fn eval_derivative(&self, xq: f64) -> f64 {
        let n = self.x.len();
        let xq = xq.clamp(self.x[0], self.x[n - 1]);
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - xq) / h;
        let b = (xq - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }
}
