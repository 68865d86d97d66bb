use nalgebra::DMatrix;

use crate::dsl::{sym_index, MetricSpec};
use crate::error::{Error, Result};
use crate::jet::{layout, Jet, MAX_ORDER};

/// Symmetric 2-tensor of jets in packed upper-triangle storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymJets {
    n: usize,
    data: Vec<Jet>,
}

impl SymJets {
    pub fn zeros(n: usize, order: usize) -> SymJets {
        SymJets {
            n,
            data: vec![Jet::zero(n, order); n * (n + 1) / 2],
        }
    }

    pub fn from_packed(n: usize, data: Vec<Jet>) -> SymJets {
        assert_eq!(data.len(), n * (n + 1) / 2);
        SymJets { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Jet) -> SymJets {
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                data.push(f(i, j));
            }
        }
        SymJets { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.data[0].order()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.data[sym_index(self.n, i, j)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Jet {
        &mut self.data[sym_index(self.n, i, j)]
    }

    pub fn packed(&self) -> &[Jet] {
        &self.data
    }

    pub fn truncate(&self, order: usize) -> SymJets {
        SymJets {
            n: self.n,
            data: self.data.iter().map(|j| j.truncate(order)).collect(),
        }
    }

    /// Row-major matrix of values.
    pub fn values(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j).value();
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> SymJets {
        SymJets {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// `self += s * other` (componentwise, at `self`'s order).
    pub fn axpy(&mut self, other: &SymJets, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.axpy(b, s);
        }
    }

    /// Largest absolute value among the stored coefficients.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|j| j.coeffs().iter())
            .fold(0.0, |m: f64, c| m.max(c.abs()))
    }
}

/// Metric jets, inverse metric jets and volume density at one point.
#[derive(Clone, Debug)]
pub struct MetricJetFrame {
    point: Vec<f64>,
    order: usize,
    g: SymJets,
    g_inv: SymJets,
}

impl MetricJetFrame {
    /// Evaluates the metric at `point` with all partials up to `order` and
    /// inverts it in jet arithmetic.
    pub fn new(spec: &MetricSpec, point: &[f64], order: usize) -> Result<MetricJetFrame> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh {
                requested: order,
                max: MAX_ORDER,
            });
        }
        let g = SymJets::from_packed(spec.dim(), spec.eval_jets(point, order)?);
        MetricJetFrame::from_jets(point, g)
    }

    /// Builds a frame from metric jets computed elsewhere.
    pub fn from_jets(point: &[f64], g: SymJets) -> Result<MetricJetFrame> {
        let n = g.dim();
        let order = g.order();
        let value = DMatrix::from_row_slice(n, n, &g.values());
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "metric".into(),
                point: point.to_vec(),
            });
        }
        let inv = value.clone().try_inverse().ok_or_else(|| Error::Singular {
            point: point.to_vec(),
        })?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                point: point.to_vec(),
            });
        }
        let g_inv = invert_jets(&g, &inv);
        Ok(MetricJetFrame {
            point: point.to_vec(),
            order,
            g,
            g_inv,
        })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn g(&self) -> &SymJets {
        &self.g
    }

    pub fn g_inv(&self) -> &SymJets {
        &self.g_inv
    }

    /// `sqrt(det g)` as a jet, by jet-valued Gaussian elimination.
    pub fn sqrt_det_g(&self) -> Result<Jet> {
        let n = self.dim();
        let mut m: Vec<Vec<Jet>> = (0..n)
            .map(|i| (0..n).map(|j| self.g.get(i, j).clone()).collect())
            .collect();
        let mut det = Jet::constant(n, self.order, 1.0);
        for k in 0..n {
            let pivot = m[k][k].clone();
            let inv = pivot.recip().map_err(|_| Error::Singular {
                point: self.point.clone(),
            })?;
            det = &det * &pivot;
            for i in k + 1..n {
                if m[i][k].is_zero() {
                    continue;
                }
                let factor = &m[i][k] * &inv;
                for j in k..n {
                    let delta = &factor * &m[k][j];
                    m[i][j] = &m[i][j] - &delta;
                }
            }
        }
        det.sqrt().map_err(|_| Error::NotPositiveDefinite {
            point: self.point.clone(),
        })
    }

    /// Natural magnitude of a quantity built from `k` derivatives of the
    /// metric: `max_{1≤j≤k} (max_{|α|=j} |∂^α g|)^{k/j}`, floored at 1e-30.
    /// Used to judge identities that should vanish relative to the local
    /// curvature, including where the curvature itself is zero.
    pub fn scale(&self, k: usize) -> f64 {
        let mut per_degree = vec![0.0f64; self.order + 1];
        for jet in self.g.packed() {
            for (alpha, c) in jet.multi_indices().zip(jet.coeffs()) {
                let d: usize = alpha.iter().map(|&a| a as usize).sum();
                per_degree[d] = per_degree[d].max(c.abs());
            }
        }
        (1..=k.min(self.order))
            .map(|j| per_degree[j].powf(k as f64 / j as f64))
            .fold(1e-30, f64::max)
    }

    /// Requires at least `required` orders for `quantity`.
    pub fn require(&self, quantity: &str, required: usize) -> Result<()> {
        if self.order < required {
            return Err(Error::insufficient(quantity, required, self.order));
        }
        Ok(())
    }
}

/// Solves `g · X = I` order by order: for each multi-index α > 0,
/// `∂^α X = -A Σ_{0<β≤α} C(α,β) ∂^β g ∂^{α-β} X` with `A = g(p)^{-1}`.
fn invert_jets(g: &SymJets, a: &DMatrix<f64>) -> SymJets {
    let n = g.dim();
    let order = g.order();
    let l = layout(n);
    let len = l.len(order);
    // coefficient-major dense matrices
    let mut gc = vec![vec![0.0; n * n]; len];
    for i in 0..n {
        for j in 0..n {
            for (t, &c) in g.get(i, j).coeffs().iter().enumerate() {
                gc[t][i * n + j] = c;
            }
        }
    }
    let nonzero: Vec<bool> = gc.iter().map(|m| m.iter().any(|&v| v != 0.0)).collect();
    let mut xc = vec![vec![0.0; n * n]; len];
    xc[0] = a.transpose().as_slice().to_vec(); // row-major copy of the column-major inverse
    let mut acc = vec![0.0; n * n];
    for t in 1..len {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (b, c, coef) in l.terms_for(t) {
            if b == 0 || !nonzero[b] {
                continue;
            }
            let (gb, xcc) = (&gc[b], &xc[c]);
            for i in 0..n {
                for k in 0..n {
                    let gik = gb[i * n + k];
                    if gik == 0.0 {
                        continue;
                    }
                    let s = coef * gik;
                    for j in 0..n {
                        acc[i * n + j] += s * xcc[k * n + j];
                    }
                }
            }
        }
        let out = &mut xc[t];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[(i, k)] * acc[k * n + j];
                }
                out[i * n + j] = -s;
            }
        }
    }
    SymJets::from_fn(n, |i, j| {
        let mut jet = Jet::zero(n, order);
        for (t, c) in jet.coeffs_mut().iter_mut().enumerate() {
            // symmetrise to remove rounding asymmetry
            *c = 0.5 * (xc[t][i * n + j] + xc[t][j * n + i]);
        }
        jet
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{catalog_with, CatalogArg};

    #[test]
    fn flat_inverse_is_identity() {
        let spec = catalog_with("flat", &[]).unwrap();
        let f = MetricJetFrame::new(&spec, &[3.0, 1.0, -2.0], 4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let jet = f.g_inv().get(i, j);
                assert_eq!(jet.value(), if i == j { 1.0 } else { 0.0 });
                assert!(jet.coeffs()[1..].iter().all(|&c| c == 0.0));
            }
        }
        assert_eq!(f.sqrt_det_g().unwrap().value(), 1.0);
    }

    #[test]
    fn schwarzschild_inverse_value() {
        let spec =
            catalog_with("schwarzschild_isotropic", &[("m", CatalogArg::Number(1.0))]).unwrap();
        let f = MetricJetFrame::new(&spec, &[10.0, 0.0, 0.0], 2).unwrap();
        let want = 1.05f64.powi(-4);
        assert!((f.g_inv().get(0, 0).value() - want).abs() < 1e-15);
        assert!((want - 0.822702).abs() < 1e-6);
    }

    #[test]
    fn jet_identity_for_non_diagonal_metric() {
        let spec = crate::dsl::flat_pullback(4, 0.7, 2.0, 1.0).unwrap();
        let p = [1.1, -0.4, 0.8, 0.5];
        let f = MetricJetFrame::new(&spec, &p, 4).unwrap();
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                let mut prod = Jet::zero(n, 4);
                for k in 0..n {
                    prod.fma(f.g().get(i, k), f.g_inv().get(k, j), 1.0);
                }
                let delta = if i == j { 1.0 } else { 0.0 };
                assert!((prod.value() - delta).abs() < 1e-12);
                assert!(
                    prod.coeffs()[1..].iter().all(|c| c.abs() < 1e-12),
                    "{i}{j}: {:?}",
                    prod.coeffs()
                );
            }
        }
        // sqrt det by elimination matches the value-level determinant
        let m = DMatrix::from_row_slice(n, n, &f.g().values());
        assert!((f.sqrt_det_g().unwrap().value() - m.determinant().sqrt()).abs() < 1e-12);
    }
}
