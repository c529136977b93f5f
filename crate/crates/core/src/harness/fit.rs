//! Least-squares fits on log-log data.

use crate::error::{Error, Result};

/// Fitted line `log10 y = slope * log10 x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

impl LogLogFit {
    /// Value of the fitted line at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        10f64.powf(self.slope * x.log10() + self.intercept)
    }
}

/// Fits a line through `(log10 x, log10 y)`. Points with a non-positive or
/// non-finite coordinate are skipped.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { expected: x.len(), found: y.len() });
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::TraceTooShort(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("log-log fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(LogLogFit { slope, intercept: my - slope * mx, points: pts.len() })
}

/// Same as [`loglog_fit`] but keeps only points with `y >= floor`.
pub fn loglog_fit_above(x: &[f64], y: &[f64], floor: f64) -> Result<LogLogFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(_, b)| **b >= floor).map(|(a, b)| (*a, *b)).unzip();
    loglog_fit(&xs, &ys)
}
