//! Identity suite: trace identities, conservation of G_J and the contracted
//! Bianchi identity, evaluated at sample points and reported as maximum
//! residuals relative to the local curvature scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::MetricSpec;
use crate::error::Result;
use crate::fourth::{trace_value, Fault, FourthOrderFrame};
use crate::sampling::shell_points;
use crate::tensor::{CurvatureFrame, MetricJetFrame};

/// Default relative tolerance of the trace identities.
pub const TRACE_TOL: f64 = 1e-10;
/// Default relative tolerance of the divergence identities.
pub const DIVERGENCE_TOL: f64 = 1e-8;

/// Names of the residuals, in report order.
pub const RESIDUALS: [&str; 5] = ["trJ-Q", "trGJ-(4-n)Q/4", "trT", "divGJ", "bianchi"];

/// Worst value of one residual over the sampled points.
#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub name: &'static str,
    pub max: f64,
    pub tolerance: f64,
    pub point: Option<Vec<f64>>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub points: usize,
    pub residuals: Vec<Residual>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.passed)
    }

    /// First failing residual, if any.
    pub fn first_failure(&self) -> Option<&Residual> {
        self.residuals.iter().find(|r| !r.passed)
    }

    /// CSV rows `name,max,tolerance,passed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,max,tolerance,passed\n");
        for r in &self.residuals {
            out.push_str(&format!(
                "{},{:.6e},{:.1e},{}\n",
                r.name, r.max, r.tolerance, r.passed
            ));
        }
        out
    }
}

/// Tolerances of the suite; `trace` covers the first three residuals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub trace: f64,
    pub divergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            trace: TRACE_TOL,
            divergence: DIVERGENCE_TOL,
        }
    }
}

/// All residuals at one point, each divided by its local scale.
/// Uses metric jets of order 5.
pub fn residuals_at(spec: &MetricSpec, point: &[f64], fault: Option<Fault>) -> Result<[f64; 5]> {
    let metric = MetricJetFrame::new(spec, point, 5)?;
    let s3 = metric.scale(3);
    let s4 = metric.scale(4);
    let s5 = metric.scale(5);
    let curvature = CurvatureFrame::new(metric)?;
    let bianchi = curvature
        .divergence(&curvature.einstein())?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.value().abs()));
    let f = FourthOrderFrame::new(curvature, fault)?;
    let m = f.curvature().metric();
    let n = m.dim() as f64;
    let q = f.q().value();
    let tr_j = trace_value(m, f.j()) - q;
    let tr_gj = trace_value(m, f.g_j()) - (4.0 - n) * q / 4.0;
    let tr_t = trace_value(m, f.t());
    let div = f.div_g_j()?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok([
        tr_j.abs() / s4,
        tr_gj.abs() / s4,
        tr_t.abs() / s4,
        div / s5,
        bianchi / s3,
    ])
}

/// Sample points for identity checks: spread over `1.5 R₀ ≤ |x| ≤ 8 R₀`,
/// where curvature is largest.
pub fn check_points(spec: &MetricSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let r0 = spec.inner_radius();
    shell_points(spec.dim(), 1.5 * r0, 8.0 * r0, count, seed)
}

/// Runs the suite at `points`.
pub fn run(
    spec: &MetricSpec,
    points: &[Vec<f64>],
    tol: Tolerances,
    fault: Option<Fault>,
) -> Result<CheckReport> {
    let all: Vec<[f64; 5]> = points
        .par_iter()
        .map(|x| residuals_at(spec, x, fault))
        .collect::<Result<_>>()?;
    let residuals = RESIDUALS
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let tolerance = if k < 3 { tol.trace } else { tol.divergence };
            let worst = all
                .iter()
                .enumerate()
                .max_by(|a, b| a.1[k].total_cmp(&b.1[k]));
            let (max, point) = match worst {
                Some((i, r)) => (r[k], Some(points[i].clone())),
                None => (0.0, None),
            };
            Residual {
                name,
                max,
                tolerance,
                point,
                passed: max <= tolerance,
            }
        })
        .collect();
    Ok(CheckReport {
        points: points.len(),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{catalog_with, CatalogArg};

    #[test]
    fn flat_residuals_vanish() {
        let spec = catalog_with("flat", &[("n", CatalogArg::Number(5.0))]).unwrap();
        let r = run(
            &spec,
            &check_points(&spec, 8, 1),
            Tolerances::default(),
            None,
        )
        .unwrap();
        assert!(r.passed());
        assert!(r.residuals.iter().all(|x| x.max == 0.0));
    }

    #[test]
    fn conformal_passes_and_fault_fails() {
        let spec = catalog_with("conformal", &[]).unwrap();
        let pts = check_points(&spec, 8, 2);
        let r = run(&spec, &pts, Tolerances::default(), None).unwrap();
        assert!(r.passed(), "{r:?}");
        let bad = run(
            &spec,
            &pts,
            Tolerances::default(),
            Some(Fault::BachLaplacian),
        )
        .unwrap();
        assert!(!bad.passed());
        assert_eq!(bad.first_failure().unwrap().name, "trJ-Q");
    }
}
