//! Flux integrals over Euclidean spheres `S_r` and their limits `r → ∞`.

mod extrapolate;
mod quadrature;

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

pub use extrapolate::{extrapolate, Extrapolation, P_MIN};
pub use quadrature::{sphere_area, SphereQuadrature};

use crate::dsl::{Expr, MetricSpec};
use crate::error::{Error, Result};
use crate::fourth::{adjoint_dq_flat, boundary_one_form, perturbation, FourthOrderFrame};
use crate::tensor::{CurvatureFrame, MetricJetFrame};

/// A surface functional.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    /// `(1/(2(n−1)ω)) ∮ (∂_i g_ij − ∂_j g_ii) ν^j`.
    Adm,
    /// `−(1/((n−1)(n−2)ω)) ∮ G(r∂_r, ν)`.
    AdmEinstein,
    /// `∮ (∂_j∂_i∂_i g_aa − ∂_j∂_a∂_i g_ai) ν^j`.
    FourthOrderEnergy,
    /// `∮ G_J(r∂_r, ν)`.
    GjFlux,
    /// `∮ ⟨U(g − δ, V), ν⟩`.
    Charge(Expr),
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::Adm => "adm",
            Functional::AdmEinstein => "adm_einstein",
            Functional::FourthOrderEnergy => "fourth_order_energy",
            Functional::GjFlux => "gj_flux",
            Functional::Charge(_) => "charge",
        }
    }

    /// Metric jet order the integrand consumes.
    pub fn order(&self) -> usize {
        match self {
            Functional::Adm => 1,
            Functional::AdmEinstein => 2,
            Functional::FourthOrderEnergy | Functional::Charge(_) => 3,
            Functional::GjFlux => 4,
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::Charge(v) => write!(f, "charge[V={v}]"),
            other => f.write_str(other.name()),
        }
    }
}

/// Dyadic radii `r0 · 2^k` for `k = 3, …, 3 + count − 1`.
pub fn dyadic_radii(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 * 2f64.powi(3 + k as i32)).collect()
}

/// Default number of Gauss nodes per polar angle, chosen so that the node
/// count stays moderate in high dimension.
pub fn default_degree(n: usize) -> usize {
    match n {
        0..=3 => 8,
        4 => 6,
        5 => 4,
        _ => 3,
    }
}

/// Flux values over increasing radii together with their extrapolated limit.
#[derive(Clone, Debug, Serialize)]
pub struct FluxSeries {
    pub functional: String,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Absent when fewer than four radii were swept or the fit failed.
    pub fit: Option<Extrapolation>,
    pub warnings: Vec<String>,
}

impl FluxSeries {
    pub fn limit(&self) -> Option<f64> {
        self.fit.map(|f| f.f_inf)
    }

    pub fn diverged(&self) -> bool {
        self.fit.is_some_and(|f| f.diverged)
    }
}

fn integrand(
    functional: &Functional,
    spec: &MetricSpec,
    x: &[f64],
    nu: &[f64],
    r: f64,
) -> Result<f64> {
    let n = x.len();
    let metric = MetricJetFrame::new(spec, x, functional.order())?;
    let g = metric.g();
    Ok(match functional {
        Functional::Adm => {
            let mut s = 0.0;
            for j in 0..n {
                let mut t = 0.0;
                for i in 0..n {
                    t += g.get(i, j).partial(&[i]) - g.get(i, i).partial(&[j]);
                }
                s += t * nu[j];
            }
            s
        }
        Functional::AdmEinstein => {
            let c = CurvatureFrame::new(metric)?;
            let e = c.einstein();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += e.get(i, j).value() * r * nu[i] * nu[j];
                }
            }
            s
        }
        Functional::FourthOrderEnergy => {
            let mut s = 0.0;
            for j in 0..n {
                let mut t = 0.0;
                for i in 0..n {
                    for a in 0..n {
                        t += g.get(a, a).partial(&[j, i, i]) - g.get(a, i).partial(&[j, a, i]);
                    }
                }
                s += t * nu[j];
            }
            s
        }
        Functional::GjFlux => {
            let f = FourthOrderFrame::new(CurvatureFrame::new(metric)?, None)?;
            let gj = f.g_j();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gj.get(i, j).value() * r * nu[i] * nu[j];
                }
            }
            s
        }
        Functional::Charge(v) => {
            let vj = v.eval_jet(x, spec.params(), 3)?;
            let h = perturbation(&metric);
            let u = boundary_one_form(&h, &vj)?;
            u.iter().zip(nu).map(|(a, b)| a * b).sum()
        }
    })
}

/// `∮_{S_r} F dω_δ` for one radius: parallel over nodes, summed in node order.
pub fn sphere_flux(
    functional: &Functional,
    spec: &MetricSpec,
    quad: &SphereQuadrature,
    r: f64,
) -> Result<f64> {
    let n = spec.dim();
    if quad.dim() != n {
        return Err(Error::Mismatch {
            what: "quadrature dimension",
            left: quad.dim(),
            right: n,
        });
    }
    let vals: Vec<f64> = quad
        .nodes()
        .par_iter()
        .map(|w| {
            let x: Vec<f64> = w.iter().map(|c| c * r).collect();
            integrand(functional, spec, &x, w, r)
        })
        .collect::<Result<_>>()?;
    let sum: f64 = vals.iter().zip(quad.weights()).map(|(v, w)| v * w).sum();
    let n_f = n as f64;
    let area = sphere_area(n);
    let norm = match functional {
        Functional::Adm => 1.0 / (2.0 * (n_f - 1.0) * area),
        Functional::AdmEinstein => -1.0 / ((n_f - 1.0) * (n_f - 2.0) * area),
        _ => 1.0,
    };
    Ok(norm * r.powi(n as i32 - 1) * sum)
}

/// Sweeps `functional` over `radii` and extrapolates when at least four radii are given.
pub fn sweep(
    functional: &Functional,
    spec: &MetricSpec,
    quad: &SphereQuadrature,
    radii: &[f64],
) -> Result<FluxSeries> {
    for &r in radii {
        spec.check_domain(&radial_point(spec.dim(), r))?;
    }
    let mut warnings = Vec::new();
    if let Functional::Charge(v) = functional {
        if let Some(w) = kernel_warning(v, spec, quad, radii)? {
            warnings.push(w);
        }
    }
    let values = radii
        .iter()
        .map(|&r| sphere_flux(functional, spec, quad, r))
        .collect::<Result<Vec<_>>>()?;
    let fit = if radii.len() >= 4 {
        match extrapolate(radii, &values, 2.0 * spec.dim() as f64) {
            Ok(f) => Some(f),
            Err(e) => {
                warnings.push(format!("extrapolation failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    if fit.is_some_and(|f| f.diverged) {
        warnings.push("series does not converge; limit is not meaningful".into());
    }
    Ok(FluxSeries {
        functional: functional.to_string(),
        radii: radii.to_vec(),
        values,
        fit,
        warnings,
    })
}

fn radial_point(n: usize, r: f64) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[0] = r;
    p
}

/// Samples `DQ*_δ V` on the first swept sphere and reports when `V` is
/// visibly outside the kernel.
fn kernel_warning(
    v: &Expr,
    spec: &MetricSpec,
    quad: &SphereQuadrature,
    radii: &[f64],
) -> Result<Option<String>> {
    let Some(&r) = radii.first() else {
        return Ok(None);
    };
    let step = (quad.len() / 16).max(1);
    let mut worst = 0.0f64;
    for w in quad.nodes().iter().step_by(step) {
        let x: Vec<f64> = w.iter().map(|c| c * r).collect();
        let jet = v.eval_jet(&x, spec.params(), 4)?;
        let size = jet.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let out = adjoint_dq_flat(&jet)?;
        worst = worst.max(out.iter().fold(0.0f64, |m, c| m.max(c.abs())) / size);
    }
    Ok((worst > 1e-10).then(|| {
        format!("V = {v} is not in the kernel of the adjoint linearization (relative residual {worst:.3e}); the charge need not converge")
    }))
}

pub fn adm_energy(spec: &MetricSpec, quad: &SphereQuadrature, radii: &[f64]) -> Result<FluxSeries> {
    sweep(&Functional::Adm, spec, quad, radii)
}

pub fn adm_energy_einstein(
    spec: &MetricSpec,
    quad: &SphereQuadrature,
    radii: &[f64],
) -> Result<FluxSeries> {
    sweep(&Functional::AdmEinstein, spec, quad, radii)
}

pub fn fourth_order_energy(
    spec: &MetricSpec,
    quad: &SphereQuadrature,
    radii: &[f64],
) -> Result<FluxSeries> {
    sweep(&Functional::FourthOrderEnergy, spec, quad, radii)
}

pub fn gj_flux(spec: &MetricSpec, quad: &SphereQuadrature, radii: &[f64]) -> Result<FluxSeries> {
    sweep(&Functional::GjFlux, spec, quad, radii)
}

pub fn charge(
    spec: &MetricSpec,
    v: &Expr,
    quad: &SphereQuadrature,
    radii: &[f64],
) -> Result<FluxSeries> {
    sweep(&Functional::Charge(v.clone()), spec, quad, radii)
}

/// The proportionality between the fourth-order energy and the G_J flux:
/// `(n−4)/(8(n−1)) E(g) = −lim ∮ G_J(r∂_r, ν)`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyRatio {
    pub dim: usize,
    pub energy: f64,
    pub gj_limit: f64,
    /// `−gj_limit / energy`, absent when the energy vanishes.
    pub ratio: Option<f64>,
    pub expected: f64,
    pub relative_error: Option<f64>,
}

pub fn energy_ratio(dim: usize, energy: &FluxSeries, gj: &FluxSeries) -> Option<EnergyRatio> {
    let e = energy.limit()?;
    let gjl = gj.limit()?;
    let n = dim as f64;
    let expected = (n - 4.0) / (8.0 * (n - 1.0));
    let ratio = (e != 0.0).then(|| -gjl / e);
    let relative_error = ratio.map(|r| {
        if expected != 0.0 {
            (r - expected).abs() / expected.abs()
        } else {
            r.abs()
        }
    });
    Some(EnergyRatio {
        dim,
        energy: e,
        gj_limit: gjl,
        ratio,
        expected,
        relative_error,
    })
}

impl FluxSeries {
    /// CSV rows `functional,radius,value,fit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (r, v) in self.radii.iter().zip(&self.values) {
            let fit = self
                .fit
                .map(|f| format!("{:.17e}", f.model(*r)))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{}\n",
                self.functional, r, v, fit
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{catalog_with, CatalogArg};

    fn num(k: &'static str, v: f64) -> (&'static str, CatalogArg) {
        (k, CatalogArg::Number(v))
    }

    #[test]
    fn flat_fluxes_vanish() {
        for n in 3..=5 {
            let spec = catalog_with("flat", &[num("n", n as f64)]).unwrap();
            let q = SphereQuadrature::new(n, 2).unwrap();
            for f in [
                Functional::Adm,
                Functional::AdmEinstein,
                Functional::FourthOrderEnergy,
                Functional::GjFlux,
            ] {
                let s = sweep(&f, &spec, &q, &dyadic_radii(1.0, 4)).unwrap();
                assert!(s.values.iter().all(|&v| v == 0.0), "{f}");
                assert_eq!(s.limit(), Some(0.0));
            }
        }
    }

    #[test]
    fn schwarzschild_adm_energy() {
        let spec = catalog_with("schwarzschild_isotropic", &[num("m", 1.0)]).unwrap();
        let q = SphereQuadrature::new(3, 2).unwrap();
        let radii = dyadic_radii(1.0, 8);
        let a = adm_energy(&spec, &q, &radii).unwrap();
        let fit = a.fit.unwrap();
        assert!((fit.f_inf - 1.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.p.unwrap() - 1.0).abs() < 0.05);
        let b = adm_energy_einstein(&spec, &q, &radii).unwrap();
        assert!((b.limit().unwrap() - 1.0).abs() < 1e-4, "{:?}", b.fit);
    }

    #[test]
    fn radii_layout() {
        assert_eq!(
            dyadic_radii(1.0, 8),
            vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]
        );
    }

    #[test]
    fn radius_inside_domain_is_rejected() {
        let spec = catalog_with("schwarzschild_isotropic", &[num("R0", 100.0)]).unwrap();
        let q = SphereQuadrature::new(3, 2).unwrap();
        assert!(matches!(
            adm_energy(&spec, &q, &[8.0, 16.0]),
            Err(Error::OutOfDomain { .. })
        ));
    }
}
