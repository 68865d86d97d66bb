//! Fourth-order curvature: Q-curvature, the T and Bach tensors, the J-tensor
//! and its trace-adjusted form G_J, plus the linearization of Q at the flat
//! metric.

use serde::Serialize;

use crate::dsl::MetricSpec;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::stats::{loglog_fit, LineFit};
use crate::tensor::{fma_nz, norm_sq, raise_first, trace, CurvatureFrame, MetricJetFrame, SymJets};

/// Deliberate formula corruption used as a negative control for the
/// identity suite. Never enabled in normal runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Doubles the rough-Laplacian term of the Bach tensor.
    BachLaplacian,
}

/// Jet orders consumed and produced by a fourth-order evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub metric_order: usize,
    pub ricci_order: usize,
    pub output_order: usize,
}

/// Fourth-order curvature at one point, as jets of order `K − 4`.
#[derive(Clone, Debug)]
pub struct FourthOrderFrame {
    curvature: CurvatureFrame,
    q: Jet,
    t: SymJets,
    b: SymJets,
    j: SymJets,
    g_j: SymJets,
    provenance: Provenance,
}

impl FourthOrderFrame {
    pub fn evaluate(spec: &MetricSpec, point: &[f64], order: usize) -> Result<FourthOrderFrame> {
        let metric = MetricJetFrame::new(spec, point, order)?;
        FourthOrderFrame::new(CurvatureFrame::new(metric)?, None)
    }

    pub fn new(curvature: CurvatureFrame, fault: Option<Fault>) -> Result<FourthOrderFrame> {
        let k = curvature.order();
        if k < 4 {
            return Err(Error::insufficient("Q", 4, k));
        }
        let p = k - 4;
        let c = &curvature;
        let n = c.dim();
        let nf = n as f64;
        let m = c.metric();
        let g = m.g();
        let ric = c.ricci();
        let r = c.scalar();

        // Q
        let lap_r = c.laplacian(r)?;
        let ric_sq = norm_sq(m, ric).truncate(p);
        let r_sq = r.mul_to(r, p);
        let coef_r2 = (nf.powi(3) - 4.0 * nf * nf + 16.0 * nf - 16.0)
            / (8.0 * (nf - 1.0).powi(2) * (nf - 2.0).powi(2));
        let mut q = lap_r.scale(-1.0 / (2.0 * (nf - 1.0)));
        q.axpy(&ric_sq, -2.0 / (nf - 2.0).powi(2));
        q.axpy(&r_sq, coef_r2);

        // Schouten algebra at output order
        let s_full = c.schouten();
        let tr_s_full = trace(m, &s_full);
        let s = s_full.truncate(p);
        let tr_s = tr_s_full.truncate(p);
        let mixed = raise_first(m, &s);
        let s_sq = SymJets::from_fn(n, |i, j| {
            let mut o = Jet::zero(n, p);
            for kk in 0..n {
                fma_nz(&mut o, &mixed[kk * n + i], s.get(kk, j), 1.0);
            }
            o
        });
        let mut s_norm = Jet::zero(n, p);
        for a in 0..n {
            for i in 0..n {
                fma_nz(&mut s_norm, &mixed[a * n + i], &mixed[i * n + a], 1.0);
            }
        }

        // T
        let hess_tr_s = c.hessian(&tr_s_full)?;
        let lap_tr_s = trace(m, &hess_tr_s);
        let t = SymJets::from_fn(n, |i, j| {
            let gij = g.get(i, j);
            let mut o = hess_tr_s.get(i, j).scale(nf - 2.0);
            fma_nz(&mut o, gij, &lap_tr_s, -(nf - 2.0) / nf);
            o.axpy(s_sq.get(i, j), 4.0 * (nf - 1.0));
            fma_nz(&mut o, gij, &s_norm, -4.0 * (nf - 1.0) / nf);
            // S̊ = S − tr S g / n
            let mut s_tf = s.get(i, j).clone();
            fma_nz(&mut s_tf, gij, &tr_s, -1.0 / nf);
            fma_nz(&mut o, &tr_s, &s_tf, -nf * nf);
            o
        });

        // Bach
        let lap_ric = c.tensor_laplacian(ric)?;
        let hess_r = c.hessian(r)?;
        let riem = c.riemann(p)?;
        let lap_coef = match fault {
            Some(Fault::BachLaplacian) => 2.0,
            None => 1.0,
        };
        let b = SymJets::from_fn(n, |u, v| {
            let guv = g.get(u, v);
            let mut o = lap_ric.get(u, v).scale(lap_coef / (nf - 2.0));
            fma_nz(&mut o, guv, &lap_r, -1.0 / (2.0 * (nf - 1.0) * (nf - 2.0)));
            o.axpy(hess_r.get(u, v), -1.0 / (2.0 * (nf - 1.0)));
            // 2 R^e_{ubv} S^b_e
            for e in 0..n {
                for bb in 0..n {
                    fma_nz(
                        &mut o,
                        &riem[((e * n + u) * n + bb) * n + v],
                        &mixed[bb * n + e],
                        2.0,
                    );
                }
            }
            o.axpy(s_sq.get(u, v), -(nf - 4.0));
            fma_nz(&mut o, guv, &s_norm, -1.0);
            fma_nz(&mut o, &tr_s, s.get(u, v), -2.0);
            o
        });

        // J and G_J
        let t_coef = (nf - 4.0) / (4.0 * (nf - 1.0) * (nf - 2.0));
        let j = SymJets::from_fn(n, |u, v| {
            let mut o = Jet::zero(n, p);
            fma_nz(&mut o, &q, g.get(u, v), 1.0 / nf);
            o.axpy(b.get(u, v), -1.0 / (nf - 2.0));
            if t_coef != 0.0 {
                o.axpy(t.get(u, v), -t_coef);
            }
            o
        });
        let g_j = SymJets::from_fn(n, |u, v| {
            let mut o = j.get(u, v).clone();
            fma_nz(&mut o, &q, g.get(u, v), -0.25);
            o
        });

        let provenance = Provenance {
            metric_order: k,
            ricci_order: k - 2,
            output_order: p,
        };
        Ok(FourthOrderFrame {
            curvature,
            q,
            t,
            b,
            j,
            g_j,
            provenance,
        })
    }

    pub fn curvature(&self) -> &CurvatureFrame {
        &self.curvature
    }

    pub fn q(&self) -> &Jet {
        &self.q
    }

    pub fn t(&self) -> &SymJets {
        &self.t
    }

    pub fn bach(&self) -> &SymJets {
        &self.b
    }

    pub fn j(&self) -> &SymJets {
        &self.j
    }

    pub fn g_j(&self) -> &SymJets {
        &self.g_j
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `(div_g G_J)_v` at the point; needs metric jets of order 5.
    pub fn div_g_j(&self) -> Result<Vec<f64>> {
        if self.provenance.metric_order < 5 {
            return Err(Error::insufficient(
                "div G_J",
                5,
                self.provenance.metric_order,
            ));
        }
        Ok(self
            .curvature
            .divergence(&self.g_j)?
            .iter()
            .map(Jet::value)
            .collect())
    }

    /// Natural magnitude of fourth-order quantities at this point.
    pub fn scale(&self) -> f64 {
        self.curvature.metric().scale(4)
    }
}

/// Value of `g^{ij} T_ij` for a symmetric jet tensor.
pub fn trace_value(frame: &MetricJetFrame, t: &SymJets) -> f64 {
    trace(frame, &t.truncate(0)).value()
}

/// Q-curvature at a point (metric jets of order `order ≥ 4`).
pub fn q_curvature(spec: &MetricSpec, point: &[f64], order: usize) -> Result<f64> {
    Ok(FourthOrderFrame::evaluate(spec, point, order)?.q().value())
}

fn require(quantity: &str, have: usize, need: usize) -> Result<()> {
    if have < need {
        return Err(Error::insufficient(quantity, need, have));
    }
    Ok(())
}

fn lap_partial(f: &Jet, extra: &[usize]) -> f64 {
    let n = f.dim();
    let mut idx = extra.to_vec();
    idx.extend([0, 0]);
    let last = idx.len() - 1;
    let mut s = 0.0;
    for k in 0..n {
        idx[last - 1] = k;
        idx[last] = k;
        s += f.partial(&idx);
    }
    s
}

fn bilap(f: &Jet) -> f64 {
    let n = f.dim();
    let mut s = 0.0;
    for k in 0..n {
        for l in 0..n {
            s += f.partial(&[k, k, l, l]);
        }
    }
    s
}

/// `tr_δ h` as a jet.
fn flat_trace(h: &SymJets) -> Jet {
    let n = h.dim();
    let mut t = Jet::zero(n, h.order());
    for i in 0..n {
        t.axpy(h.get(i, i), 1.0);
    }
    t
}

/// `div²_δ h = ∂_i ∂_j h_ij` as a jet two orders below `h`.
fn flat_double_divergence(h: &SymJets) -> Jet {
    let n = h.dim();
    let mut t = Jet::zero(n, h.order() - 2);
    for i in 0..n {
        for j in 0..n {
            t.axpy(&h.get(i, j).d(i).d(j), 1.0);
        }
    }
    t
}

/// `DQ_δ·h = −(Δ(div² h) − Δ²(tr h)) / (2(n−1))` at the point.
pub fn linearized_q_flat(h: &SymJets) -> Result<f64> {
    require("linearized Q", h.order(), 4)?;
    let n = h.dim() as f64;
    let div2 = flat_double_divergence(h);
    let lap_div2 = lap_partial(&div2, &[]);
    let bilap_tr = bilap(&flat_trace(h));
    Ok(-(lap_div2 - bilap_tr) / (2.0 * (n - 1.0)))
}

/// `DQ*_δ·V = −(−Δ²V δ + ∂²ΔV) / (2(n−1))`, row-major.
pub fn adjoint_dq_flat(v: &Jet) -> Result<Vec<f64>> {
    require("adjoint linearized Q", v.order(), 4)?;
    let n = v.dim();
    let c = -1.0 / (2.0 * (n as f64 - 1.0));
    let b = bilap(v);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut val = lap_partial(v, &[i, j]);
            if i == j {
                val -= b;
            }
            out[i * n + j] = c * val;
        }
    }
    Ok(out)
}

/// Boundary 1-form
/// `U(h,V) = −(V du − u dV + ΔV(div h − d tr h) − h(dΔV,·) + tr h dΔV) / (2(n−1))`
/// with `u = div² h − Δ tr h`.
pub fn boundary_one_form(h: &SymJets, v: &Jet) -> Result<Vec<f64>> {
    require("boundary form (h)", h.order(), 3)?;
    require("boundary form (V)", v.order(), 3)?;
    let n = h.dim();
    let c = -1.0 / (2.0 * (n as f64 - 1.0));
    let tr = flat_trace(h);
    let div2 = flat_double_divergence(h);
    // u as an order-1 jet
    let mut u = div2.truncate(1);
    for k in 0..n {
        u.axpy(&tr.d(k).d(k), -1.0);
    }
    let lap_v = |extra: &[usize]| lap_partial(v, extra);
    let lv = lap_v(&[]);
    Ok((0..n)
        .map(|k| {
            let div_h: f64 = (0..n).map(|i| h.get(i, k).partial(&[i])).sum();
            let h_dlap: f64 = (0..n).map(|l| h.get(k, l).value() * lap_v(&[l])).sum();
            c * (v.value() * u.partial(&[k]) - u.value() * v.partial(&[k])
                + lv * (div_h - tr.partial(&[k]))
                - h_dlap
                + tr.value() * lap_v(&[k]))
        })
        .collect())
}

/// `g − δ` as jets.
pub fn perturbation(frame: &MetricJetFrame) -> SymJets {
    let n = frame.dim();
    SymJets::from_fn(n, |i, j| {
        let x = frame.g().get(i, j);
        if i == j {
            x.add_scalar(-1.0)
        } else {
            x.clone()
        }
    })
}

/// Taylor remainder `R(h) = Q_g − Q_δ − DQ_δ·h` with `h = g − δ` and `Q_δ = 0`.
pub fn taylor_remainder(spec: &MetricSpec, point: &[f64]) -> Result<f64> {
    let f = FourthOrderFrame::evaluate(spec, point, 4)?;
    let h = perturbation(f.curvature().metric());
    Ok(f.q().value() - linearized_q_flat(&h)?)
}

/// Remainder of `δ + ε h` for the given perturbation jets (order ≥ 4).
pub fn remainder_for(h: &SymJets, point: &[f64], eps: f64) -> Result<f64> {
    let n = h.dim();
    let g = SymJets::from_fn(n, |i, j| {
        let x = h.get(i, j).scale(eps);
        if i == j {
            x.add_scalar(1.0)
        } else {
            x
        }
    });
    let frame = MetricJetFrame::from_jets(point, g)?;
    let q = FourthOrderFrame::new(CurvatureFrame::new(frame)?, None)?
        .q()
        .value();
    Ok(q - eps * linearized_q_flat(h)?)
}

/// Log-log slope of `|R(εh)|` over the given ε values.
#[derive(Clone, Debug, Serialize)]
pub struct RemainderSlope {
    pub eps: Vec<f64>,
    pub remainder: Vec<f64>,
    pub fit: Option<LineFit>,
}

pub fn remainder_slope(h: &SymJets, point: &[f64], eps: &[f64]) -> Result<RemainderSlope> {
    let remainder = eps
        .iter()
        .map(|&e| remainder_for(h, point, e))
        .collect::<Result<Vec<_>>>()?;
    let fit = loglog_fit(eps, &remainder);
    Ok(RemainderSlope {
        eps: eps.to_vec(),
        remainder,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::dsl::{catalog_with, flat_pullback, parse, CatalogArg};
    use crate::sampling::shell_points;

    fn num(k: &'static str, v: f64) -> (&'static str, CatalogArg) {
        (k, CatalogArg::Number(v))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn flat_everything_vanishes() {
        for n in 3..=6 {
            let spec = catalog_with("flat", &[num("n", n as f64)]).unwrap();
            let p: Vec<f64> = (0..n).map(|i| 2.0 + i as f64).collect();
            let f = FourthOrderFrame::evaluate(&spec, &p, 5).unwrap();
            assert!(f.q().is_zero());
            for t in [f.t(), f.bach(), f.j(), f.g_j()] {
                assert!(t.packed().iter().all(Jet::is_zero));
            }
            assert!(f.div_g_j().unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn q_matches_closed_form_values() {
        let p5 = [1.5, -0.5, 1.0, 0.25, 2.0];
        let s5 = catalog_with("conformal", &[]).unwrap();
        assert!(
            rel(
                q_curvature(&s5, &p5, 4).unwrap(),
                -0.001_229_148_278_308_225_871_5
            ) < 1e-8
        );

        let s4 = catalog_with("conformal", &[num("n", 4.0), num("exponent", 1.0)]).unwrap();
        let q4 = q_curvature(&s4, &p5[..4], 4).unwrap();
        assert!(rel(q4, -0.002_523_975_780_704_165_419_3) < 1e-8, "{q4}");

        let s3 = catalog_with("schwarzschild_isotropic", &[num("m", 0.2)]).unwrap();
        let q3 = q_curvature(&s3, &p5[..3], 4).unwrap();
        assert!(rel(q3, -0.005_993_201_115_436_597_939_6) < 1e-8, "{q3}");
    }

    #[test]
    fn trace_identities() {
        let specs = [
            catalog_with("conformal", &[]).unwrap(),
            catalog_with("conformal", &[num("n", 6.0)]).unwrap(),
            catalog_with("diagonal_perturbation", &[num("n", 4.0), num("eps", 0.5)]).unwrap(),
            catalog_with("schwarzschild_isotropic", &[]).unwrap(),
            flat_pullback(5, 0.3, 1.5, 1.0).unwrap(),
        ];
        for s in &specs {
            let n = s.dim();
            for p in shell_points(n, 1.5, 6.0, 6, 4) {
                let f = FourthOrderFrame::evaluate(s, &p, 4).unwrap();
                let m = f.curvature().metric();
                let q = f.q().value();
                let tol = 1e-10 * q.abs().max(f.scale());
                assert!((trace_value(m, f.j()) - q).abs() <= tol);
                assert!((trace_value(m, f.g_j()) - (4.0 - n as f64) / 4.0 * q).abs() <= tol);
                assert!(trace_value(m, f.t()).abs() <= tol);
                let b = f.bach();
                for u in 0..n {
                    for v in 0..n {
                        assert_eq!(b.get(u, v), b.get(v, u));
                    }
                }
            }
        }
    }

    #[test]
    fn conformally_flat_four_metrics_are_bach_flat() {
        let s = catalog_with("conformal", &[num("n", 4.0)]).unwrap();
        for p in shell_points(4, 1.2, 4.0, 8, 1) {
            let f = FourthOrderFrame::evaluate(&s, &p, 4).unwrap();
            let scale = f.scale();
            assert!(
                f.bach().max_abs() <= 1e-9 * scale,
                "{} vs {scale}",
                f.bach().max_abs()
            );
        }
    }

    #[test]
    fn four_dimensional_j_has_no_t_part() {
        let s = catalog_with("diagonal_perturbation", &[num("n", 4.0)]).unwrap();
        let f = FourthOrderFrame::evaluate(&s, &[1.0, 2.0, -1.0, 0.5], 4).unwrap();
        let g = f.curvature().metric().g();
        for u in 0..4 {
            for v in 0..4 {
                let want =
                    0.25 * f.q().value() * g.get(u, v).value() - 0.5 * f.bach().get(u, v).value();
                assert!((f.j().get(u, v).value() - want).abs() <= 1e-15 * f.scale().max(1.0));
            }
        }
    }

    #[test]
    fn j_einstein_tensor_is_divergence_free() {
        let specs = [
            catalog_with("conformal", &[]).unwrap(),
            catalog_with("diagonal_perturbation", &[num("n", 3.0), num("eps", 0.5)]).unwrap(),
        ];
        for s in &specs {
            for p in shell_points(s.dim(), 1.5, 4.0, 4, 8) {
                let f = FourthOrderFrame::evaluate(s, &p, 5).unwrap();
                let scale = f.curvature().metric().scale(5);
                for d in f.div_g_j().unwrap() {
                    assert!(d.abs() <= 1e-8 * scale, "{d} vs {scale}");
                }
            }
        }
    }

    #[test]
    fn fault_breaks_trace_identity() {
        let s = catalog_with("conformal", &[]).unwrap();
        let m = MetricJetFrame::new(&s, &[1.5, -0.5, 1.0, 0.25, 2.0], 4).unwrap();
        let f = FourthOrderFrame::new(CurvatureFrame::new(m).unwrap(), Some(Fault::BachLaplacian))
            .unwrap();
        let q = f.q().value();
        assert!((trace_value(f.curvature().metric(), f.j()) - q).abs() > 1e-6 * q.abs());
    }

    #[test]
    fn order_errors() {
        let s = catalog_with("flat", &[]).unwrap();
        let e = FourthOrderFrame::evaluate(&s, &[2.0, 0.0, 0.0], 3).unwrap_err();
        assert_eq!(e.to_string(), "Q requires derivative order 4 (have 3)");
        let f = FourthOrderFrame::evaluate(&s, &[2.0, 0.0, 0.0], 4).unwrap();
        assert!(f.div_g_j().is_err());
    }

    fn scalar(src: &str, p: &[f64]) -> Jet {
        parse(src)
            .unwrap()
            .eval_jet(p, &BTreeMap::new(), 4)
            .unwrap()
    }

    #[test]
    fn adjoint_kernel() {
        let p = [0.7, -1.2, 0.4, 2.0];
        for src in ["1", "x1", "x1^2 + x2^2 + x3^2 + x4^2", "x1*x2 + 3*x3"] {
            let out = adjoint_dq_flat(&scalar(src, &p)).unwrap();
            assert!(out.iter().all(|v| v.abs() <= 1e-10), "{src}: {out:?}");
        }
        let out = adjoint_dq_flat(&scalar("x1^4", &p)).unwrap();
        assert!(out.iter().any(|v| v.abs() > 1.0));
    }

    /// `∂^γ` of the polynomial `Σ c x^β` at `p`.
    fn poly_partial(terms: &[(f64, [u32; 3])], gamma: [u32; 3], p: &[f64]) -> f64 {
        terms
            .iter()
            .map(|(c, beta)| {
                let mut v = *c;
                for k in 0..3 {
                    if gamma[k] > beta[k] {
                        return 0.0;
                    }
                    for m in 0..gamma[k] {
                        v *= f64::from(beta[k] - m);
                    }
                    v *= p[k].powi((beta[k] - gamma[k]) as i32);
                }
                v
            })
            .sum()
    }

    #[test]
    fn hessian_perturbations_are_in_the_kernel() {
        // h_ij = ∂_ij φ gives div² h = Δ²φ = Δ tr h, so DQ·h = 0
        let phi = [(1.0, [4, 2, 0]), (-2.0, [0, 3, 3]), (0.5, [1, 1, 4])];
        let p = [1.1, 0.3, -0.8];
        let h = SymJets::from_fn(3, |i, j| {
            Jet::from_fn(3, 4, |a| {
                let mut g = [u32::from(a[0]), u32::from(a[1]), u32::from(a[2])];
                g[i] += 1;
                g[j] += 1;
                poly_partial(&phi, g, &p)
            })
        });
        let v = linearized_q_flat(&h).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
        assert!(linearized_q_flat(&h.truncate(3)).is_err());
    }

    #[test]
    fn boundary_form_with_unit_v() {
        let s = catalog_with("conformal", &[]).unwrap();
        let p = [1.5, -0.5, 1.0, 0.25, 2.0];
        let m = MetricJetFrame::new(&s, &p, 4).unwrap();
        let h = perturbation(&m);
        let one = Jet::constant(5, 3, 1.0);
        let u = boundary_one_form(&h.truncate(3), &one).unwrap();
        let tr = flat_trace(&h);
        let div2 = flat_double_divergence(&h);
        for k in 0..5 {
            let du = div2.partial(&[k]) - (0..5).map(|i| tr.partial(&[i, i, k])).sum::<f64>();
            let want = -du / 8.0;
            assert!((u[k] - want).abs() <= 1e-13 * want.abs().max(1e-3));
        }
        let zero = SymJets::zeros(5, 3);
        let v = parse("x1*x2")
            .unwrap()
            .eval_jet(&p, &BTreeMap::new(), 3)
            .unwrap();
        assert!(boundary_one_form(&zero, &v)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn remainder_is_quadratic() {
        let s = catalog_with("diagonal_perturbation", &[num("n", 4.0), num("eps", 1.0)]).unwrap();
        let p = [1.3, -0.6, 0.9, 1.7];
        let m = MetricJetFrame::new(&s, &p, 4).unwrap();
        let h = perturbation(&m);
        let r = remainder_slope(&h, &p, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
        let slope = r.fit.unwrap().slope;
        assert!(slope >= 1.9, "{slope} {:?}", r.remainder);
        assert_eq!(remainder_for(&SymJets::zeros(4, 4), &p, 0.5).unwrap(), 0.0);
    }
}
