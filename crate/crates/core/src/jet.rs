//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores every partial derivative `∂^α f` with `|α| ≤ order` of a
//! scalar function at a fixed point. Coefficients are raw partials, not
//! Taylor coefficients `∂^α f / α!`, so downstream formulas read them as
//! written.
//!
//! Multi-indices are laid out by total degree, and the layout for order `k`
//! is a prefix of the layout for order `k + 1`. Truncation is therefore a
//! slice, and one Leibniz table per dimension serves every order.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest derivative order carried by any jet.
pub const MAX_ORDER: usize = 5;
/// Largest supported number of variables.
pub const MAX_DIM: usize = 8;

type MultiIndex = [u8; MAX_DIM];

pub(crate) struct Layout {
    alphas: Vec<MultiIndex>,
    len_at: [usize; MAX_ORDER + 1],
    up: Vec<Vec<u32>>,
    term_start: Vec<u32>,
    terms: Vec<(u32, u32, f64)>,
    index: HashMap<MultiIndex, usize>,
}

const NONE: u32 = u32::MAX;

fn binomial(n: u8, k: u8) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c
}

impl Layout {
    fn build(dim: usize) -> Layout {
        let mut alphas: Vec<MultiIndex> = Vec::new();
        let mut len_at = [0usize; MAX_ORDER + 1];
        for degree in 0..=MAX_ORDER {
            let mut cur = [0u8; MAX_DIM];
            enumerate(dim, 0, degree, &mut cur, &mut alphas);
            len_at[degree] = alphas.len();
        }
        let index: HashMap<MultiIndex, usize> =
            alphas.iter().enumerate().map(|(i, a)| (*a, i)).collect();

        let up = (0..dim)
            .map(|var| {
                alphas
                    .iter()
                    .map(|a| {
                        let mut b = *a;
                        b[var] += 1;
                        index.get(&b).map_or(NONE, |&i| i as u32)
                    })
                    .collect()
            })
            .collect();

        let mut term_start = Vec::with_capacity(alphas.len() + 1);
        let mut terms = Vec::new();
        for alpha in &alphas {
            term_start.push(terms.len() as u32);
            let mut beta = [0u8; MAX_DIM];
            loop {
                let mut gamma = [0u8; MAX_DIM];
                let mut coef = 1.0;
                for i in 0..dim {
                    gamma[i] = alpha[i] - beta[i];
                    coef *= binomial(alpha[i], beta[i]);
                }
                terms.push((index[&beta] as u32, index[&gamma] as u32, coef));
                // odometer over beta <= alpha
                let mut i = 0;
                while i < dim {
                    if beta[i] < alpha[i] {
                        beta[i] += 1;
                        break;
                    }
                    beta[i] = 0;
                    i += 1;
                }
                if i == dim {
                    break;
                }
            }
        }
        term_start.push(terms.len() as u32);

        Layout {
            alphas,
            len_at,
            up,
            term_start,
            terms,
            index,
        }
    }

    #[inline]
    pub(crate) fn len(&self, order: usize) -> usize {
        self.len_at[order]
    }

    /// Leibniz terms `(β, α-β, C(α,β))` of target index `t`.
    pub(crate) fn terms_for(&self, t: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let lo = self.term_start[t] as usize;
        let hi = self.term_start[t + 1] as usize;
        self.terms[lo..hi]
            .iter()
            .map(|&(i, j, c)| (i as usize, j as usize, c))
    }

    /// `out[t] += scale * Σ C(α,β) a[β] b[α-β]` for every target `t < out.len()`.
    #[inline]
    pub(crate) fn mul_acc(&self, out: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
        let n = out.len();
        debug_assert!(a.len() >= n && b.len() >= n);
        for (t, o) in out.iter_mut().enumerate().take(n) {
            let lo = self.term_start[t] as usize;
            let hi = self.term_start[t + 1] as usize;
            let mut s = 0.0;
            for &(i, j, c) in &self.terms[lo..hi] {
                s += c * a[i as usize] * b[j as usize];
            }
            *o += scale * s;
        }
    }
}

fn enumerate(
    dim: usize,
    pos: usize,
    remaining: usize,
    cur: &mut MultiIndex,
    out: &mut Vec<MultiIndex>,
) {
    if pos + 1 == dim {
        cur[pos] = remaining as u8;
        out.push(*cur);
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k as u8;
        enumerate(dim, pos + 1, remaining - k, cur, out);
    }
    cur[pos] = 0;
}

pub(crate) fn layout(dim: usize) -> &'static Layout {
    static LAYOUTS: [OnceLock<Layout>; MAX_DIM] = [const { OnceLock::new() }; MAX_DIM];
    assert!(
        (1..=MAX_DIM).contains(&dim),
        "jet dimension {dim} out of range"
    );
    LAYOUTS[dim - 1].get_or_init(|| Layout::build(dim))
}

/// Number of stored coefficients for a jet in `dim` variables truncated at `order`.
pub fn coefficient_count(dim: usize, order: usize) -> usize {
    layout(dim).len(order)
}

/// All partial derivatives up to `order` of a scalar at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    dim: u8,
    order: u8,
    coeffs: Vec<f64>,
}

fn check_shape(dim: usize, order: usize) -> Result<()> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::Dimension(dim));
    }
    if order > MAX_ORDER {
        return Err(Error::OrderTooHigh {
            requested: order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Jet {
        check_shape(dim, order).expect("jet shape");
        Jet {
            dim: dim as u8,
            order: order as u8,
            coeffs: vec![0.0; layout(dim).len(order)],
        }
    }

    pub fn constant(dim: usize, order: usize, value: f64) -> Jet {
        let mut j = Jet::zero(dim, order);
        j.coeffs[0] = value;
        j
    }

    /// The coordinate function `x_var` (0-based) at a point where it equals `value`.
    pub fn variable(dim: usize, order: usize, var: usize, value: f64) -> Jet {
        assert!(var < dim, "variable index {var} out of range for dim {dim}");
        let mut j = Jet::constant(dim, order, value);
        if order > 0 {
            let l = layout(dim);
            let idx = l.up[var][0];
            j.coeffs[idx as usize] = 1.0;
        }
        j
    }

    /// Builds a jet from coefficients in layout order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Jet> {
        check_shape(dim, order)?;
        let want = layout(dim).len(order);
        if coeffs.len() != want {
            return Err(Error::Mismatch {
                what: "coefficient count",
                left: coeffs.len(),
                right: want,
            });
        }
        Ok(Jet {
            dim: dim as u8,
            order: order as u8,
            coeffs,
        })
    }

    /// Builds a jet by calling `f` with every multi-index of total degree `<= order`.
    pub fn from_fn(dim: usize, order: usize, mut f: impl FnMut(&[u8]) -> f64) -> Jet {
        check_shape(dim, order).expect("jet shape");
        let l = layout(dim);
        let coeffs = l.alphas[..l.len(order)]
            .iter()
            .map(|a| f(&a[..dim]))
            .collect();
        Jet {
            dim: dim as u8,
            order: order as u8,
            coeffs,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order as usize
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// `self += s * ∂_var src`, where `src` carries at least one more order than `self`.
    pub fn axpy_derivative(&mut self, src: &Jet, var: usize, s: f64) {
        debug_assert!(src.order > self.order);
        let up = &layout(self.dim()).up[var];
        for (t, o) in self.coeffs.iter_mut().enumerate() {
            *o += s * src.coeffs[up[t] as usize];
        }
    }

    /// Multi-indices in storage order, each of length `dim`.
    pub fn multi_indices(&self) -> impl Iterator<Item = &[u8]> {
        let l = layout(self.dim());
        let d = self.dim();
        l.alphas[..self.coeffs.len()].iter().map(move |a| &a[..d])
    }

    /// `∂^α f` for a multi-index given as per-variable counts.
    pub fn coeff(&self, alpha: &[u8]) -> Option<f64> {
        if alpha.len() != self.dim() {
            return None;
        }
        let mut key = [0u8; MAX_DIM];
        key[..alpha.len()].copy_from_slice(alpha);
        layout(self.dim())
            .index
            .get(&key)
            .and_then(|&i| self.coeffs.get(i).copied())
    }

    /// Partial derivative along a list of (0-based) variables, e.g. `[0, 0, 2]` for `∂₁∂₁∂₃`.
    pub fn partial(&self, vars: &[usize]) -> f64 {
        let l = layout(self.dim());
        let mut idx = 0u32;
        for &v in vars {
            idx = l.up[v][idx as usize];
            if idx == NONE {
                return 0.0;
            }
        }
        self.coeffs.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Drops every coefficient above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(
            order <= self.order(),
            "cannot raise jet order by truncation"
        );
        Jet {
            dim: self.dim,
            order: order as u8,
            coeffs: self.coeffs[..layout(self.dim()).len(order)].to_vec(),
        }
    }

    /// The jet of `∂f/∂x_var`, one order lower.
    pub fn derivative(&self, var: usize) -> Result<Jet> {
        if self.order == 0 {
            return Err(Error::insufficient("derivative", 1, 0));
        }
        if var >= self.dim() {
            return Err(Error::VariableOutOfRange {
                index: var + 1,
                dim: self.dim(),
            });
        }
        Ok(self.d(var))
    }

    /// Unchecked derivative for internal callers that have validated orders.
    pub(crate) fn d(&self, var: usize) -> Jet {
        let l = layout(self.dim());
        let n = l.len(self.order() - 1);
        let up = &l.up[var];
        Jet {
            dim: self.dim,
            order: self.order - 1,
            coeffs: (0..n).map(|i| self.coeffs[up[i] as usize]).collect(),
        }
    }

    fn check_same(&self, other: &Jet) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Mismatch {
                what: "jet dimension",
                left: self.dim(),
                right: other.dim(),
            });
        }
        if self.order != other.order {
            return Err(Error::Mismatch {
                what: "jet order",
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet> {
        self.check_same(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet> {
        self.check_same(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn try_mul(&self, other: &Jet) -> Result<Jet> {
        self.check_same(other)?;
        Ok(self.mul_to(other, self.order()))
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            dim: self.dim,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] += s;
        j
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        Jet {
            dim: self.dim,
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Product truncated at `order`, which may be below either operand's order.
    pub fn mul_to(&self, other: &Jet, order: usize) -> Jet {
        assert_eq!(self.dim, other.dim, "jet dimension mismatch");
        assert!(
            order <= self.order() && order <= other.order(),
            "product order too high"
        );
        let l = layout(self.dim());
        let mut out = vec![0.0; l.len(order)];
        l.mul_acc(&mut out, &self.coeffs, &other.coeffs, 1.0);
        Jet {
            dim: self.dim,
            order: order as u8,
            coeffs: out,
        }
    }

    /// `self += s * a * b`, truncated at `self.order()`.
    pub fn fma(&mut self, a: &Jet, b: &Jet, s: f64) {
        debug_assert!(a.order >= self.order && b.order >= self.order);
        layout(self.dim()).mul_acc(&mut self.coeffs, &a.coeffs, &b.coeffs, s);
    }

    /// `self += s * a`, reading only the coefficients `self` stores.
    pub fn axpy(&mut self, a: &Jet, s: f64) {
        debug_assert!(a.order >= self.order);
        for (o, &x) in self.coeffs.iter_mut().zip(&a.coeffs) {
            *o += s * x;
        }
    }

    /// Composition `f ∘ self` where `table[k] = f^{(k)}(self.value())`.
    ///
    /// `table` must hold at least `order + 1` entries. Evaluated as the
    /// truncated Taylor series of `f` in the nilpotent part of `self`.
    pub fn compose(&self, table: &[f64]) -> Jet {
        let k = self.order();
        assert!(table.len() > k, "composition table too short");
        let mut out = Jet::constant(self.dim(), k, table[k] / factorial(k));
        if k == 0 {
            return out;
        }
        let mut du = self.clone();
        du.coeffs[0] = 0.0;
        for m in (0..k).rev() {
            out = out.mul_to(&du, k);
            out.coeffs[0] += table[m] / factorial(m);
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    pub fn ln(&self) -> Result<Jet> {
        let v = self.value();
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::Domain {
                op: "log",
                value: v,
            });
        }
        let mut t = vec![v.ln()];
        // d^k/dv^k ln v = (-1)^(k-1) (k-1)! v^-k
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign * factorial(k - 1) / v.powi(k as i32));
        }
        Ok(self.compose(&t))
    }

    /// Real power. Integral exponents accept any base (negative integral
    /// exponents need a nonzero base); others need a positive base.
    pub fn powf(&self, p: f64) -> Result<Jet> {
        let v = self.value();
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            let n = p as i32;
            if n >= 0 {
                return Ok(self.powi(n as u32));
            }
            return Ok(self.recip()?.powi((-n) as u32));
        }
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::Domain {
                op: "pow",
                value: v,
            });
        }
        Ok(self.compose(&power_table(v, p, self.order())))
    }

    pub fn powi(&self, mut n: u32) -> Jet {
        let k = self.order();
        let mut acc = Jet::constant(self.dim(), k, 1.0);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul_to(&base, k);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul_to(&base, k);
            }
        }
        acc
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let v = self.value();
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::Domain {
                op: "sqrt",
                value: v,
            });
        }
        Ok(self.compose(&power_table(v, 0.5, self.order())))
    }

    pub fn recip(&self) -> Result<Jet> {
        let v = self.value();
        if v == 0.0 || !v.is_finite() {
            return Err(Error::Domain {
                op: "division",
                value: v,
            });
        }
        Ok(self.compose(&power_table(v, -1.0, self.order())))
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet> {
        self.check_same(other)?;
        Ok(self.mul_to(&other.recip()?, self.order()))
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

fn power_table(v: f64, p: f64, order: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(order + 1);
    let mut falling = 1.0;
    for k in 0..=order {
        t.push(falling * v.powf(p - k as f64));
        falling *= p - k as f64;
    }
    t
}

macro_rules! binop {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                self.$checked(rhs)
                    .expect("jet operands must share dim and order")
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
    };
}
binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes_are_binomial() {
        for dim in 1..=MAX_DIM {
            for k in 0..=MAX_ORDER {
                let want = (1..=k)
                    .fold(1.0, |a, i| a * (dim + i) as f64 / i as f64)
                    .round() as usize;
                assert_eq!(coefficient_count(dim, k), want, "dim {dim} order {k}");
            }
        }
    }

    #[test]
    fn add_of_coordinates() {
        let x = Jet::variable(2, 1, 0, 0.0);
        let y = Jet::variable(2, 1, 1, 0.0);
        let s = &x + &y;
        assert_eq!(s.value(), 0.0);
        assert_eq!(s.partial(&[0]), 1.0);
        assert_eq!(s.partial(&[1]), 1.0);
    }

    #[test]
    fn scale_of_square() {
        let x = Jet::variable(1, 2, 0, 3.0);
        let sq = &(&x * &x) * 2.0;
        assert_eq!(sq.value(), 18.0);
        assert_eq!(sq.partial(&[0]), 12.0);
        assert_eq!(sq.partial(&[0, 0]), 4.0);
    }

    #[test]
    fn product_rules() {
        let x = Jet::variable(1, 2, 0, 2.0);
        let p = &x * &x;
        assert_eq!(
            (p.value(), p.partial(&[0]), p.partial(&[0, 0])),
            (4.0, 4.0, 2.0)
        );

        let a = Jet::variable(2, 2, 0, 1.0);
        let b = Jet::variable(2, 2, 1, 1.0);
        let m = &a * &b;
        assert_eq!(m.partial(&[0, 1]), 1.0);
        assert_eq!(m.partial(&[0, 0]), 0.0);
        assert_eq!(m.partial(&[1, 1]), 0.0);
    }

    #[test]
    fn mismatched_operands_are_errors() {
        let a = Jet::zero(2, 2);
        let b = Jet::zero(3, 2);
        let c = Jet::zero(2, 3);
        assert!(matches!(
            a.try_add(&b),
            Err(Error::Mismatch {
                what: "jet dimension",
                ..
            })
        ));
        assert!(matches!(
            a.try_mul(&c),
            Err(Error::Mismatch {
                what: "jet order",
                ..
            })
        ));
    }

    #[test]
    fn exp_of_coordinate() {
        let e = Jet::variable(1, 3, 0, 0.0).exp();
        for k in 0..=3 {
            assert!((e.coeffs()[k] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reciprocal_of_constant() {
        let r = Jet::constant(3, 4, 2.0).recip().unwrap();
        assert_eq!(r.value(), 0.5);
        assert!(r.coeffs()[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn reciprocal_is_exact_inverse() {
        let x = Jet::variable(2, 5, 0, 0.7);
        let y = Jet::variable(2, 5, 1, -0.3);
        let a = (&(&x * &y) + &x.exp()).add_scalar(1.5);
        let unit = &a * &a.recip().unwrap();
        assert!((unit.value() - 1.0).abs() < 1e-15);
        assert!(unit.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn domain_errors() {
        let z = Jet::constant(2, 2, 0.0);
        assert!(matches!(
            z.recip(),
            Err(Error::Domain { op: "division", .. })
        ));
        assert!(matches!(z.sqrt(), Err(Error::Domain { op: "sqrt", .. })));
        assert!(matches!(
            z.add_scalar(-1.0).ln(),
            Err(Error::Domain { op: "log", .. })
        ));
        assert!(z.add_scalar(-2.0).powf(0.5).is_err());
        // integral powers of negative bases are fine
        assert_eq!(z.add_scalar(-2.0).powf(3.0).unwrap().value(), -8.0);
    }

    #[test]
    fn derivative_shifts_coefficients() {
        // f = x^2 y at (2, 3): ∂x f = 2xy
        let x = Jet::variable(2, 3, 0, 2.0);
        let y = Jet::variable(2, 3, 1, 3.0);
        let f = &(&x * &x) * &y;
        let fx = f.derivative(0).unwrap();
        assert_eq!(fx.order(), 2);
        assert_eq!(fx.value(), 12.0);
        assert_eq!(fx.partial(&[1]), 4.0);
        assert_eq!(fx.partial(&[0]), 6.0);
        assert!(Jet::zero(2, 0).derivative(0).is_err());
    }

    #[test]
    fn sqrt_against_finite_differences() {
        // sqrt(1 + x) at x = 0.21, order 4, against central differences with h = 1e-2
        let x0 = 0.21;
        let j = Jet::variable(1, 4, 0, x0).add_scalar(1.0).sqrt().unwrap();
        let f = |x: f64| (1.0 + x).sqrt();
        let h = 1e-2;
        // one Richardson step on the standard central stencils
        let stencil = |h: f64| -> [f64; 4] {
            let fp = f(x0 + h);
            let fm = f(x0 - h);
            let fp2 = f(x0 + 2.0 * h);
            let fm2 = f(x0 - 2.0 * h);
            let f0 = f(x0);
            [
                (fp - fm) / (2.0 * h),
                (fp - 2.0 * f0 + fm) / (h * h),
                (fp2 - 2.0 * fp + 2.0 * fm - fm2) / (2.0 * h * h * h),
                (fp2 - 4.0 * fp + 6.0 * f0 - 4.0 * fm + fm2) / (h * h * h * h),
            ]
        };
        let coarse = stencil(2.0 * h);
        let fine = stencil(h);
        for k in 0..4 {
            let refined = (4.0 * fine[k] - coarse[k]) / 3.0;
            let exact = j.coeffs()[k + 1];
            assert!(
                ((refined - exact) / exact).abs() < 1e-6,
                "order {}: {refined} vs {exact}",
                k + 1
            );
        }
    }

    #[test]
    fn truncation_is_prefix() {
        let x = Jet::variable(3, 5, 0, 0.4);
        let y = Jet::variable(3, 5, 2, 1.3);
        let f5 = (&(&x * &y) + &y.ln().unwrap()).exp();
        let x4 = Jet::variable(3, 4, 0, 0.4);
        let y4 = Jet::variable(3, 4, 2, 1.3);
        let f4 = (&(&x4 * &y4) + &y4.ln().unwrap()).exp();
        assert_eq!(f5.truncate(4), f4);
    }
}
