use super::curvature::{fma_nz, CurvatureFrame};
use super::frame::SymJets;
use crate::error::{Error, Result};
use crate::jet::Jet;

/// Covariant derivative `∇_a T_{bc}` of a symmetric 2-tensor, stored as `[a][b][c]`.
pub type CovDerivative = Vec<Jet>;

impl CurvatureFrame {
    fn need(&self, quantity: &str, have: usize, required: usize) -> Result<()> {
        if have < required {
            return Err(Error::InsufficientOrder {
                quantity: quantity.to_string(),
                required,
                available: have,
            });
        }
        Ok(())
    }

    /// `∇²f_{uv} = ∂_{uv} f − Γ^k_{uv} ∂_k f`, two orders below `f`.
    pub fn hessian(&self, f: &Jet) -> Result<SymJets> {
        self.need("covariant Hessian", f.order(), 2)?;
        let n = self.dim();
        let order = (f.order() - 2).min(self.christoffel().order());
        let grad: Vec<Jet> = (0..n).map(|k| f.d(k)).collect();
        let gm = self.christoffel();
        Ok(SymJets::from_fn(n, |u, v| {
            let mut h = Jet::zero(n, order);
            h.axpy_derivative(&grad[u], v, 1.0);
            for (k, gk) in grad.iter().enumerate() {
                fma_nz(&mut h, gm.get(k, u, v), gk, -1.0);
            }
            h
        }))
    }

    /// Laplace–Beltrami operator `Δ_g f = g^{uv} ∇²f_{uv}`.
    pub fn laplacian(&self, f: &Jet) -> Result<Jet> {
        let h = self.hessian(f)?;
        Ok(super::curvature::trace(self.metric(), &h))
    }

    /// `∇_a T_{bc} = ∂_a T_{bc} − Γ^k_{ab} T_{kc} − Γ^k_{ac} T_{bk}`, one order below `t`.
    pub fn covariant_derivative(&self, t: &SymJets) -> Result<CovDerivative> {
        self.need("covariant derivative", t.order(), 1)?;
        let n = self.dim();
        let order = (t.order() - 1).min(self.christoffel().order());
        let gm = self.christoffel();
        let mut out = vec![Jet::zero(n, order); n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in b..n {
                    let mut s = Jet::zero(n, order);
                    s.axpy_derivative(t.get(b, c), a, 1.0);
                    for k in 0..n {
                        fma_nz(&mut s, gm.get(k, a, b), t.get(k, c), -1.0);
                        fma_nz(&mut s, gm.get(k, a, c), t.get(b, k), -1.0);
                    }
                    out[(a * n + c) * n + b] = s.clone();
                    out[(a * n + b) * n + c] = s;
                }
            }
        }
        Ok(out)
    }

    /// Rough Laplacian `(Δ_g T)_{bc} = g^{ad} ∇_d ∇_a T_{bc}`, two orders below `t`.
    pub fn tensor_laplacian(&self, t: &SymJets) -> Result<SymJets> {
        self.need("tensor Laplacian", t.order(), 2)?;
        let n = self.dim();
        let nt = self.covariant_derivative(t)?;
        let order = (t.order() - 2).min(self.order() - 2);
        let gm = self.christoffel();
        let g_inv = self.metric().g_inv();
        let at = |a: usize, b: usize, c: usize| &nt[(a * n + b) * n + c];
        Ok(SymJets::from_fn(n, |b, c| {
            let mut out = Jet::zero(n, order);
            for a in 0..n {
                for d in 0..n {
                    let w = g_inv.get(a, d);
                    if w.is_zero() {
                        continue;
                    }
                    // ∇_d (∇T)_{abc}
                    let mut s = Jet::zero(n, order);
                    s.axpy_derivative(at(a, b, c), d, 1.0);
                    for k in 0..n {
                        fma_nz(&mut s, gm.get(k, d, a), at(k, b, c), -1.0);
                        fma_nz(&mut s, gm.get(k, d, b), at(a, k, c), -1.0);
                        fma_nz(&mut s, gm.get(k, d, c), at(a, b, k), -1.0);
                    }
                    out.fma(w, &s, 1.0);
                }
            }
            out
        }))
    }

    /// Value of the rough Laplacian assembled as the componentwise scalar
    /// Laplacian plus first- and zeroth-order corrections:
    ///
    /// `Δ_g T_uv = Δ_g(T_uv) − g^{ab}[∂_aΓ^k_{bu} T_kv + ∂_aΓ^k_{bv} T_uk
    ///   + Γ^k_{bu} ∂_a T_kv + Γ^k_{bv} ∂_a T_uk − Γ^k_{ab}(Γ^m_{ku} T_mv + Γ^m_{kv} T_um)
    ///   + Γ^k_{au} ∇_b T_kv + Γ^k_{av} ∇_b T_uk]`.
    ///
    /// Works on plain partial derivatives only, independently of [`Self::tensor_laplacian`].
    pub fn tensor_laplacian_expanded(&self, t: &SymJets) -> Result<Vec<f64>> {
        self.need("tensor Laplacian", t.order(), 2)?;
        let n = self.dim();
        let gm = |k: usize, i: usize, j: usize| self.christoffel().get(k, i, j).value();
        let dgm =
            |a: usize, k: usize, i: usize, j: usize| self.christoffel().get(k, i, j).partial(&[a]);
        let g_inv: Vec<f64> = self.metric().g_inv().values();
        let tv = |i: usize, j: usize| t.get(i, j).value();
        let dt = |a: usize, i: usize, j: usize| t.get(i, j).partial(&[a]);
        let ddt = |a: usize, b: usize, i: usize, j: usize| t.get(i, j).partial(&[a, b]);
        let nabla = |b: usize, u: usize, v: usize| {
            let mut s = dt(b, u, v);
            for k in 0..n {
                s -= gm(k, b, u) * tv(k, v) + gm(k, b, v) * tv(u, k);
            }
            s
        };
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in u..n {
                let mut total = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let w = g_inv[a * n + b];
                        if w == 0.0 {
                            continue;
                        }
                        let mut scalar = ddt(a, b, u, v);
                        let mut corr = 0.0;
                        for k in 0..n {
                            scalar -= gm(k, a, b) * dt(k, u, v);
                            corr += dgm(a, k, b, u) * tv(k, v) + dgm(a, k, b, v) * tv(u, k);
                            corr += gm(k, b, u) * dt(a, k, v) + gm(k, b, v) * dt(a, u, k);
                            let mut inner = 0.0;
                            for m in 0..n {
                                inner += gm(m, k, u) * tv(m, v) + gm(m, k, v) * tv(u, m);
                            }
                            corr -= gm(k, a, b) * inner;
                            corr += gm(k, a, u) * nabla(b, k, v) + gm(k, a, v) * nabla(b, u, k);
                        }
                        total += w * (scalar - corr);
                    }
                }
                out[u * n + v] = total;
                out[v * n + u] = total;
            }
        }
        Ok(out)
    }

    /// `(div_g T)_v = g^{ab} ∇_a T_{bv}`, one order below `t`.
    pub fn divergence(&self, t: &SymJets) -> Result<Vec<Jet>> {
        let nt = self.covariant_derivative(t)?;
        let n = self.dim();
        let order = nt[0].order();
        let g_inv = self.metric().g_inv();
        Ok((0..n)
            .map(|v| {
                let mut s = Jet::zero(n, order);
                for a in 0..n {
                    for b in 0..n {
                        fma_nz(&mut s, g_inv.get(a, b), &nt[(a * n + b) * n + v], 1.0);
                    }
                }
                s
            })
            .collect())
    }
}
