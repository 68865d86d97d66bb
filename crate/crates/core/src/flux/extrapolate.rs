use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest admissible decay exponent in the fit.
pub const P_MIN: f64 = 0.1;

/// Fit `F(r) ≈ F∞ + c r^{−p} + c₂ r^{−2p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    #[serde(rename = "F_inf")]
    pub f_inf: f64,
    /// Fitted exponent; absent for a constant series.
    pub p: Option<f64>,
    pub c: f64,
    pub c2: f64,
    /// RMS misfit of the fit over all radii.
    pub residual: f64,
    /// Set when the series does not settle, e.g. the exponent is pinned at
    /// its lower bound while increments keep growing.
    pub diverged: bool,
}

impl Extrapolation {
    /// Fitted curve at radius `r`.
    pub fn model(&self, r: f64) -> f64 {
        match self.p {
            Some(p) => self.f_inf + self.c * r.powf(-p) + self.c2 * r.powf(-2.0 * p),
            None => self.f_inf,
        }
    }
}

/// Weighted linear least squares for fixed `p` on the basis
/// `1, r^{−p}, r^{−2p}`; returns `(F∞, c, c₂, weighted SS)`.
fn solve_fixed(r: &[f64], f: &[f64], w: &[f64], p: f64) -> (f64, f64, f64, f64) {
    let k = r.len();
    let a = DMatrix::from_fn(k, 3, |i, j| w[i].sqrt() * r[i].powf(-p * j as f64));
    let b = DVector::from_fn(k, |i, _| w[i].sqrt() * f[i]);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-13)
        .unwrap_or_else(|_| {
            DVector::from_vec(vec![
                b.sum() / w.iter().map(|x| x.sqrt()).sum::<f64>(),
                0.0,
                0.0,
            ])
        });
    let ss = (a * &coef - b).norm_squared();
    (coef[0], coef[1], coef[2], ss)
}

/// Fits `F(r) = F∞ + c r^{−p} + c₂ r^{−2p}` with `p ∈ [0.1, p_max]`.
///
/// The second correction absorbs the next term of the typical expansion in
/// powers of `1/r`; without it the inner radii bias `F∞`. Points are weighted by `r²`, which favours the radii closest to the
/// limit; with the unweighted fit the slowly decaying second-order terms of
/// typical flux integrands bias `F∞` by far more than the quadrature error.
/// The exponent is found by a grid scan followed by golden-section refinement.
pub fn extrapolate(radii: &[f64], values: &[f64], p_max: f64) -> Result<Extrapolation> {
    if radii.len() < 4 || radii.len() != values.len() {
        return Err(Error::Invalid(format!(
            "extrapolation needs at least 4 radii with values, got {} and {}",
            radii.len(),
            values.len()
        )));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= 0.0 {
        return Err(Error::Invalid(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("non-finite flux value {v}")));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = values.iter().fold(f64::NEG_INFINITY, |m: f64, v| m.max(*v))
        - values.iter().fold(f64::INFINITY, |m: f64, v| m.min(*v));
    let k = values.len() as f64;
    if spread <= 4.0 * f64::EPSILON * scale {
        let mean = values.iter().sum::<f64>() / k;
        let residual = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt();
        return Ok(Extrapolation {
            f_inf: mean,
            p: None,
            c: 0.0,
            c2: 0.0,
            residual,
            diverged: false,
        });
    }
    let r_last = radii[radii.len() - 1];
    let w: Vec<f64> = radii.iter().map(|r| (r / r_last).powi(2)).collect();
    let ss = |p: f64| solve_fixed(radii, values, &w, p).3;

    let steps = 400;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| P_MIN + (p_max - P_MIN) * i as f64 / steps as f64)
        .collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| ss(grid[a]).total_cmp(&ss(grid[b])))
        .unwrap_or(0);
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(steps)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (ss(x1), ss(x2));
    for _ in 0..200 {
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ss(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ss(x2);
        }
    }
    let mut p = 0.5 * (lo + hi);
    for cand in [grid[best], P_MIN, p_max] {
        if ss(cand) < ss(p) {
            p = cand;
        }
    }
    let (f_inf, c, c2, _) = solve_fixed(radii, values, &w, p);
    let residual = (radii
        .iter()
        .zip(values)
        .map(|(&r, &v)| (v - f_inf - c * r.powf(-p) - c2 * r.powf(-2.0 * p)).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let n = values.len();
    let d1 = (values[n - 1] - values[n - 2]).abs();
    let d2 = (values[n - 2] - values[n - 3]).abs();
    let diverged =
        !f_inf.is_finite() || (p <= P_MIN * (1.0 + 1e-9) && d1 >= d2 && d1 > 1e-12 * scale);
    Ok(Extrapolation {
        f_inf,
        p: Some(p),
        c,
        c2,
        residual,
        diverged,
    })
}
