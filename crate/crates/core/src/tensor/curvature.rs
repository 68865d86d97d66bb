use super::frame::{MetricJetFrame, SymJets};
use crate::error::{Error, Result};
use crate::jet::Jet;

/// `acc += s * a * b`, skipping identically zero factors.
#[inline]
pub(crate) fn fma_nz(acc: &mut Jet, a: &Jet, b: &Jet, s: f64) {
    if !a.is_zero() && !b.is_zero() {
        acc.fma(a, b, s);
    }
}

/// Christoffel symbols `Γ^k_{ij}` stored densely as `[k][i][j]`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    n: usize,
    order: usize,
    data: Vec<Jet>,
}

impl Christoffel {
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Jet {
        &self.data[(k * self.n + i) * self.n + j]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{lj} + ∂_j g_{li} − ∂_l g_{ij})`, one order below the frame.
pub fn christoffel(frame: &MetricJetFrame) -> Result<Christoffel> {
    frame.require("Christoffel symbols", 1)?;
    let n = frame.dim();
    let order = frame.order() - 1;
    let g = frame.g();
    let dg: Vec<Vec<Jet>> = (0..n)
        .map(|l| g.packed().iter().map(|j| j.d(l)).collect())
        .collect();
    let dgc = |l: usize, i: usize, j: usize| &dg[l][crate::dsl::sym_index(n, i, j)];
    // lowered symbols Γ_{l,ij}
    let mut lower = vec![Jet::zero(n, order); n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = Jet::zero(n, order);
                s.axpy(dgc(i, l, j), 0.5);
                s.axpy(dgc(j, l, i), 0.5);
                s.axpy(dgc(l, i, j), -0.5);
                lower[(l * n + j) * n + i] = s.clone();
                lower[(l * n + i) * n + j] = s;
            }
        }
    }
    let g_inv = frame.g_inv();
    let mut data = vec![Jet::zero(n, order); n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = Jet::zero(n, order);
                for l in 0..n {
                    fma_nz(&mut s, g_inv.get(k, l), &lower[(l * n + i) * n + j], 1.0);
                }
                data[(k * n + j) * n + i] = s.clone();
                data[(k * n + i) * n + j] = s;
            }
        }
    }
    Ok(Christoffel { n, order, data })
}

/// Curvature of a metric frame: Christoffel symbols, Ricci and scalar
/// curvature, Einstein and Schouten tensors. Ricci-level quantities carry
/// two orders fewer than the metric.
#[derive(Clone, Debug)]
pub struct CurvatureFrame {
    metric: MetricJetFrame,
    gamma: Christoffel,
    ric: SymJets,
    scalar: Jet,
}

impl CurvatureFrame {
    pub fn new(metric: MetricJetFrame) -> Result<CurvatureFrame> {
        metric.require("curvature", 2)?;
        let gamma = christoffel(&metric)?;
        let ric = ricci_from(&metric, &gamma);
        let scalar = trace(&metric, &ric);
        Ok(CurvatureFrame {
            metric,
            gamma,
            ric,
            scalar,
        })
    }

    pub fn metric(&self) -> &MetricJetFrame {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Derivative order of the metric jets.
    pub fn order(&self) -> usize {
        self.metric.order()
    }

    pub fn christoffel(&self) -> &Christoffel {
        &self.gamma
    }

    pub fn ricci(&self) -> &SymJets {
        &self.ric
    }

    pub fn scalar(&self) -> &Jet {
        &self.scalar
    }

    /// `G = Ric − ½ R g`.
    pub fn einstein(&self) -> SymJets {
        self.ric_minus_scalar(0.5)
    }

    /// `S = (Ric − R g / (2(n−1))) / (n−2)`.
    pub fn schouten(&self) -> SymJets {
        let n = self.dim() as f64;
        let mut s = self.ric_minus_scalar(1.0 / (2.0 * (n - 1.0)));
        s = s.map(|j| j.scale(1.0 / (n - 2.0)));
        s
    }

    fn ric_minus_scalar(&self, c: f64) -> SymJets {
        let mut out = self.ric.clone();
        let g = self.metric.g();
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                fma_nz(out.get_mut(i, j), &self.scalar, g.get(i, j), -c);
            }
        }
        out
    }

    /// `R^i_{jkl}` at jet order `order ≤ K−2`, stored as `[i][j][k][l]`.
    pub fn riemann(&self, order: usize) -> Result<Vec<Jet>> {
        let k_max = self.order() - 2;
        if order > k_max {
            return Err(Error::insufficient(
                "Riemann tensor",
                order + 2,
                self.order(),
            ));
        }
        let n = self.dim();
        let gm = &self.gamma;
        let mut out = vec![Jet::zero(n, order); n * n * n * n];
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in k + 1..n {
                        let mut r = Jet::zero(n, order);
                        r.axpy_derivative(gm.get(i, l, j), k, 1.0);
                        r.axpy_derivative(gm.get(i, k, j), l, -1.0);
                        for m in 0..n {
                            fma_nz(&mut r, gm.get(i, k, m), gm.get(m, l, j), 1.0);
                            fma_nz(&mut r, gm.get(i, l, m), gm.get(m, k, j), -1.0);
                        }
                        out[idx(i, j, l, k)] = -&r;
                        out[idx(i, j, k, l)] = r;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `Ric_{jl} = ∂_i Γ^i_{lj} − ∂_l Γ^i_{ij} + Γ^i_{im} Γ^m_{lj} − Γ^i_{lm} Γ^m_{ij}`.
fn ricci_from(frame: &MetricJetFrame, gm: &Christoffel) -> SymJets {
    let n = frame.dim();
    let order = frame.order() - 2;
    let contracted: Vec<Jet> = (0..n)
        .map(|m| {
            let mut c = Jet::zero(n, gm.order());
            for i in 0..n {
                c.axpy(gm.get(i, i, m), 1.0);
            }
            c
        })
        .collect();
    SymJets::from_fn(n, |j, l| {
        let mut acc = Jet::zero(n, order);
        for i in 0..n {
            if !gm.get(i, l, j).is_zero() {
                acc.axpy_derivative(gm.get(i, l, j), i, 1.0);
            }
        }
        acc.axpy_derivative(&contracted[j], l, -1.0);
        for m in 0..n {
            fma_nz(&mut acc, &contracted[m], gm.get(m, l, j), 1.0);
        }
        for i in 0..n {
            for m in 0..n {
                fma_nz(&mut acc, gm.get(i, l, m), gm.get(m, i, j), -1.0);
            }
        }
        acc
    })
}

/// `g^{ij} T_ij` at the order of `t`.
pub fn trace(frame: &MetricJetFrame, t: &SymJets) -> Jet {
    let n = frame.dim();
    let mut out = Jet::zero(n, t.order());
    let g_inv = frame.g_inv();
    for i in 0..n {
        for j in 0..n {
            fma_nz(&mut out, g_inv.get(i, j), t.get(i, j), 1.0);
        }
    }
    out
}

/// Mixed tensor `T^b_e = g^{bj} T_{ej}` stored as `[b][e]`.
pub fn raise_first(frame: &MetricJetFrame, t: &SymJets) -> Vec<Jet> {
    let n = frame.dim();
    let g_inv = frame.g_inv();
    let mut out = vec![Jet::zero(n, t.order()); n * n];
    for b in 0..n {
        for e in 0..n {
            let o = &mut out[b * n + e];
            for j in 0..n {
                fma_nz(o, g_inv.get(b, j), t.get(e, j), 1.0);
            }
        }
    }
    out
}

/// `|T|²_g = g^{ia} g^{jb} T_ij T_ab` at the order of `t`.
pub fn norm_sq(frame: &MetricJetFrame, t: &SymJets) -> Jet {
    let n = frame.dim();
    let mixed = raise_first(frame, t);
    // |T|² = T^a_i T^i_a
    let mut out = Jet::zero(n, t.order());
    for a in 0..n {
        for i in 0..n {
            fma_nz(&mut out, &mixed[a * n + i], &mixed[i * n + a], 1.0);
        }
    }
    out
}

/// Ricci tensor of a frame.
pub fn ricci(frame: &MetricJetFrame) -> Result<SymJets> {
    frame.require("Ricci tensor", 2)?;
    let gm = christoffel(frame)?;
    Ok(ricci_from(frame, &gm))
}

/// Riemann tensor `R^i_{jkl}` at jet order `K−2`, stored as `[i][j][k][l]`.
pub fn riemann(frame: &MetricJetFrame) -> Result<Vec<Jet>> {
    frame.require("Riemann tensor", 2)?;
    let c = CurvatureFrame::new(frame.clone())?;
    c.riemann(frame.order() - 2)
}

/// Scalar curvature `R = g^{jl} Ric_jl`.
pub fn scalar_curv(frame: &MetricJetFrame) -> Result<Jet> {
    let ric = ricci(frame)?;
    Ok(trace(frame, &ric))
}
