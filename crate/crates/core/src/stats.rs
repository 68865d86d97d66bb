//! Small regression helpers shared by the slope and decay estimators.

use serde::Serialize;

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for two points or an exact fit).
    pub slope_stderr: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Fits a line through `(x, y)`; needs at least two distinct abscissae.
pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (ss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
        rms: (ss / nf).sqrt(),
    })
}

/// Slope of `log|y|` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    if ly.iter().chain(&lx).any(|v| !v.is_finite()) {
        return None;
    }
    line_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = line_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }

    #[test]
    fn power_law_slope() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.5)).collect();
        assert!((loglog_fit(&x, &y).unwrap().slope + 2.5).abs() < 1e-12);
        assert!(loglog_fit(&x, &[0.0; 4]).is_none());
    }
}
