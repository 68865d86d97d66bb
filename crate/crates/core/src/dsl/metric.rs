use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::expr::{Expr, JetContext};
use super::parser::parse;
use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_DIM};
use crate::sampling::shell_points;

/// Index of `(i, j)` in the packed upper triangle of an `n × n` symmetric matrix.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

/// A metric on the end chart `|x| >= inner_radius` of `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    dim: usize,
    /// Packed upper triangle, row-major.
    components: Vec<Expr>,
    params: BTreeMap<String, f64>,
    inner_radius: f64,
    decay: Option<f64>,
    /// Distinct component trees and the slot each packed component reads from.
    unique: Vec<Expr>,
    slot: Vec<usize>,
}

/// Result of sample-based validation.
#[derive(Clone, Debug, Default)]
pub struct Validation {
    pub points_checked: usize,
    pub warnings: Vec<String>,
}

/// On-disk representation of a metric.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricFile {
    pub dim: usize,
    pub components: Vec<Vec<Option<String>>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub inner_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
}

impl MetricSpec {
    /// Builds a spec from the packed upper triangle of component trees.
    pub fn new(
        dim: usize,
        upper: Vec<Expr>,
        params: BTreeMap<String, f64>,
        inner_radius: f64,
        decay: Option<f64>,
    ) -> Result<MetricSpec> {
        if !(3..=MAX_DIM).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Invalid(format!(
                "expected {} upper-triangle components, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            )));
        }
        if !(inner_radius > 0.0 && inner_radius.is_finite()) {
            return Err(Error::Invalid(format!(
                "inner radius must be positive, got {inner_radius}"
            )));
        }
        if let Some(t) = decay {
            if !(t > 0.0) {
                return Err(Error::Invalid(format!(
                    "declared decay must be positive, got {t}"
                )));
            }
        }
        for e in &upper {
            let v = e.max_variable();
            if v > dim {
                return Err(Error::VariableOutOfRange { index: v, dim });
            }
            let mut ps = Vec::new();
            e.params(&mut ps);
            if let Some(p) = ps.into_iter().find(|p| !params.contains_key(p)) {
                return Err(Error::UnknownParameter(p));
            }
        }
        let mut unique: Vec<Expr> = Vec::new();
        let slot = upper
            .iter()
            .map(|e| match unique.iter().position(|u| u == e) {
                Some(i) => i,
                None => {
                    unique.push(e.clone());
                    unique.len() - 1
                }
            })
            .collect();
        Ok(MetricSpec {
            dim,
            components: upper,
            params,
            inner_radius,
            decay,
            unique,
            slot,
        })
    }

    /// Builds a spec from a full `n × n` table of source strings. Entries below
    /// the diagonal may be `None`; if given they must match their mirror.
    pub fn from_sources(
        dim: usize,
        rows: &[Vec<Option<String>>],
        params: BTreeMap<String, f64>,
        inner_radius: f64,
        decay: Option<f64>,
    ) -> Result<MetricSpec> {
        if rows.len() != dim {
            return Err(Error::Invalid(format!(
                "expected {dim} component rows, got {}",
                rows.len()
            )));
        }
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for (i, row) in rows.iter().enumerate() {
            // rows may be full (n entries) or upper-only (n - i entries)
            let offset = match row.len() {
                l if l == dim => 0,
                l if l == dim - i => i,
                l => {
                    return Err(Error::Invalid(format!(
                        "row {} has {l} entries; expected {dim} or {}",
                        i + 1,
                        dim - i
                    )))
                }
            };
            for j in i..dim {
                let src = row[j - offset].as_deref().ok_or_else(|| {
                    Error::Invalid(format!("component ({}, {}) is missing", i + 1, j + 1))
                })?;
                upper.push(parse(src)?);
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                continue;
            }
            for (j, entry) in row.iter().enumerate().take(i) {
                if let Some(src) = entry {
                    if parse(src)? != upper[sym_index(dim, j, i)] {
                        return Err(Error::Invalid(format!(
                            "components ({}, {}) and ({}, {}) differ",
                            i + 1,
                            j + 1,
                            j + 1,
                            i + 1
                        )));
                    }
                }
            }
        }
        MetricSpec::new(dim, upper, params, inner_radius, decay)
    }

    /// A diagonal metric from one source string per diagonal entry.
    pub fn diagonal(
        dim: usize,
        diag: &[String],
        params: BTreeMap<String, f64>,
        inner_radius: f64,
        decay: Option<f64>,
    ) -> Result<MetricSpec> {
        if diag.len() != dim {
            return Err(Error::Invalid(format!(
                "expected {dim} diagonal entries, got {}",
                diag.len()
            )));
        }
        let mut upper = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                upper.push(if i == j {
                    parse(&diag[i])?
                } else {
                    Expr::Const(0.0)
                });
            }
        }
        MetricSpec::new(dim, upper, params, inner_radius, decay)
    }

    pub fn from_file(file: &MetricFile) -> Result<MetricSpec> {
        MetricSpec::from_sources(
            file.dim,
            &file.components,
            file.params.clone(),
            file.inner_radius,
            file.decay,
        )
    }

    pub fn from_json(text: &str) -> Result<MetricSpec> {
        let file: MetricFile = serde_json::from_str(text)?;
        MetricSpec::from_file(&file)
    }

    pub fn to_file(&self) -> MetricFile {
        let n = self.dim;
        MetricFile {
            dim: n,
            components: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| Some(self.component(i, j).to_string()))
                        .collect()
                })
                .collect(),
            params: self.params.clone(),
            inner_radius: self.inner_radius,
            decay: self.decay,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("metric serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn declared_decay(&self) -> Option<f64> {
        self.decay
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.components[sym_index(self.dim, i, j)]
    }

    pub fn with_inner_radius(mut self, r0: f64) -> Result<MetricSpec> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::Invalid(format!(
                "inner radius must be positive, got {r0}"
            )));
        }
        self.inner_radius = r0;
        Ok(self)
    }

    /// True when every off-diagonal component is the literal 0.
    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.component(i, j).is_zero_const()))
    }

    pub fn check_domain(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::Mismatch {
                what: "point dimension",
                left: point.len(),
                right: self.dim,
            });
        }
        let r = point.iter().map(|x| x * x).sum::<f64>().sqrt();
        // small slack so points placed exactly on the inner sphere pass
        if !(r >= self.inner_radius * (1.0 - 1e-12)) {
            return Err(Error::OutOfDomain {
                point: point.to_vec(),
                inner_radius: self.inner_radius,
            });
        }
        Ok(())
    }

    /// Packed upper-triangle jets of `g_ij` at `point`.
    pub fn eval_jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.check_domain(point)?;
        let mut ctx = JetContext::new(point, &self.params, order)?;
        let vals = self
            .unique
            .iter()
            .map(|e| ctx.eval(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.slot.iter().map(|&s| vals[s].clone()).collect())
    }

    /// Values `g_ij` as a full row-major matrix.
    pub fn eval_matrix(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(point)?;
        let vals = self
            .unique
            .iter()
            .map(|e| e.eval(point, &self.params))
            .collect::<Result<Vec<_>>>()?;
        let n = self.dim;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = vals[self.slot[sym_index(n, i, j)]];
            }
        }
        if let Some(k) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("g_{}{}", k / n + 1, k % n + 1),
                point: point.to_vec(),
            });
        }
        Ok(m)
    }

    /// Samples 64 quasi-random points in each of `annuli` dyadic shells and
    /// checks positive definiteness by Cholesky. A declared decay rate is
    /// compared loosely against `max |g_ij - δ_ij|` and only warns.
    pub fn validate(&self, annuli: usize, seed: u64) -> Result<Validation> {
        let mut report = Validation::default();
        let mut sup = Vec::new();
        for k in 0..annuli {
            let r_in = self.inner_radius * 2f64.powi(k as i32);
            let pts = shell_points(self.dim, r_in, 2.0 * r_in, 64, seed.wrapping_add(k as u64));
            let mut worst: f64 = 0.0;
            for p in pts {
                let m = self.eval_matrix(&p)?;
                if !cholesky_ok(&m, self.dim) {
                    return Err(Error::NotPositiveDefinite { point: p });
                }
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let d = m[i * self.dim + j] - if i == j { 1.0 } else { 0.0 };
                        worst = worst.max(d.abs());
                    }
                }
                report.points_checked += 1;
            }
            sup.push((r_in, worst));
        }
        if let Some(tau) = self.decay {
            let (r_lo, d_lo) = sup[0];
            for &(r, d) in sup.iter().skip(1) {
                // allow a generous constant before flagging slower decay
                let bound = 4.0 * d_lo.max(1e-300) * (r_lo / r).powf(tau);
                if d > bound && d > 1e-14 {
                    report.warnings.push(format!(
                        "|g - δ| = {d:.3e} at r ≈ {r:.3e} decays slower than the declared r^-{tau}"
                    ));
                    break;
                }
            }
        }
        for w in &report.warnings {
            log::warn!("{w}");
        }
        Ok(report)
    }
}

/// Cholesky factorisation succeeds on a row-major symmetric matrix.
pub fn cholesky_ok(m: &[f64], n: usize) -> bool {
    let mat = nalgebra::DMatrix::from_row_slice(n, n, m);
    nalgebra::linalg::Cholesky::new(mat).is_some()
}
