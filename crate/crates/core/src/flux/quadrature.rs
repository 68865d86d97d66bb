use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Product quadrature on the unit sphere `S^{n−1} ⊂ R^n`.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    dim: usize,
    degree: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Area of the unit sphere `S^{n−1}`.
pub fn sphere_area(n: usize) -> f64 {
    // Γ(n/2) by its recurrence from Γ(1) = 1 or Γ(½) = √π
    let (mut g, mut x) = if n % 2 == 0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while x < n as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / g
}

/// `m`-point Gauss rule for the weight `(1−t²)^{λ−½}` on `[−1, 1]` by
/// Golub–Welsch. `λ = ½` is Gauss–Legendre.
fn gauss_gegenbauer(m: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    // monic recurrence: α_k = 0, β_k = k(k + 2λ − 1) / (4(k + λ)(k + λ − 1))
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0));
        let off = beta.sqrt();
        jac[(k, k - 1)] = off;
        jac[(k - 1, k)] = off;
    }
    let mu0 = std::f64::consts::PI.sqrt() * (ln_gamma(lambda + 0.5) - ln_gamma(lambda + 1.0)).exp();
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise against eigen-solver rounding
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

impl SphereQuadrature {
    /// Builds the rule with `m` Gauss nodes per polar angle and `2m`
    /// equispaced azimuths; exact for polynomials of degree `≤ 2m − 1`.
    ///
    /// In spherical coordinates `ω = (cos θ₁, sin θ₁ cos θ₂, …)` the surface
    /// element is `Π sin^{n−1−i} θ_i dθ_i dφ`. With `t = cos θ_i` each factor
    /// becomes `(1−t²)^{(n−2−i)/2} dt`, which the Gauss–Gegenbauer rule of
    /// parameter `λ = (n−1−i)/2` integrates exactly against polynomials in `t`.
    pub fn new(n: usize, m: usize) -> Result<SphereQuadrature> {
        if !(3..=8).contains(&n) {
            return Err(Error::Dimension(n));
        }
        if m < 2 {
            return Err(Error::Invalid(format!(
                "quadrature degree must be at least 2, got {m}"
            )));
        }
        let polar: Vec<(Vec<f64>, Vec<f64>)> = (1..=n - 2)
            .map(|i| gauss_gegenbauer(m, (n - 1 - i) as f64 / 2.0))
            .collect();
        let az = 2 * m;
        let mut nodes = vec![Vec::new()];
        let mut weights = vec![1.0];
        for (t, w) in &polar {
            let mut nn = Vec::with_capacity(nodes.len() * m);
            let mut nw = Vec::with_capacity(nodes.len() * m);
            for (prefix, pw) in nodes.iter().zip(&weights) {
                for (ti, wi) in t.iter().zip(w) {
                    let mut p: Vec<f64> = prefix.clone();
                    p.push(*ti);
                    nn.push(p);
                    nw.push(pw * wi);
                }
            }
            nodes = nn;
            weights = nw;
        }
        let mut out_nodes = Vec::with_capacity(nodes.len() * az);
        let mut out_weights = Vec::with_capacity(nodes.len() * az);
        let dphi = 2.0 * std::f64::consts::PI / az as f64;
        for (cos_list, w) in nodes.iter().zip(&weights) {
            for k in 0..az {
                let phi = (k as f64 + 0.5) * dphi;
                let mut x = Vec::with_capacity(n);
                let mut sin_prod = 1.0;
                for &c in cos_list {
                    x.push(sin_prod * c);
                    sin_prod *= (1.0 - c * c).max(0.0).sqrt();
                }
                x.push(sin_prod * phi.cos());
                x.push(sin_prod * phi.sin());
                out_nodes.push(x);
                out_weights.push(w * dphi);
            }
        }
        Ok(SphereQuadrature {
            dim: n,
            degree: m,
            nodes: out_nodes,
            weights: out_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k f(ω_k)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `∫_{S^{n−1}} ω^α dω` in closed form: zero unless every exponent is
    /// even, otherwise `2 Π Γ((α_i+1)/2) / Γ((|α|+n)/2)`.
    fn moment(alpha: &[u32]) -> f64 {
        if alpha.iter().any(|a| a % 2 == 1) {
            return 0.0;
        }
        let n = alpha.len() as f64;
        let total: f64 = alpha.iter().map(|&a| f64::from(a)).sum();
        let log: f64 = alpha
            .iter()
            .map(|&a| ln_gamma((f64::from(a) + 1.0) / 2.0))
            .sum::<f64>()
            - ln_gamma((total + n) / 2.0);
        2.0 * log.exp()
    }

    #[test]
    fn areas() {
        for n in 3..=8 {
            let q = SphereQuadrature::new(n, 3).unwrap();
            let s: f64 = q.weights().iter().sum();
            assert!((s - sphere_area(n)).abs() < 1e-12, "n={n}");
        }
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn nodes_are_unit_vectors() {
        let q = SphereQuadrature::new(5, 4).unwrap();
        for x in q.nodes() {
            assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn second_moments_on_s2() {
        let q = SphereQuadrature::new(3, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = q.integrate(|x| x[i] * x[j]);
                let want = if i == j {
                    4.0 * std::f64::consts::PI / 3.0
                } else {
                    0.0
                };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fourth_moment_on_s4() {
        let q = SphereQuadrature::new(5, 3).unwrap();
        let v = q.integrate(|x| x[0].powi(4));
        // 2 Γ(5/2) Γ(1/2)^4 / Γ(9/2) = 8π²/35
        let want = 8.0 * std::f64::consts::PI.powi(2) / 35.0;
        assert!((v - want).abs() < 1e-12);
        assert!((moment(&[4, 0, 0, 0, 0]) - want).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exact_through_declared_degree(n in 3usize..=6, m in 2usize..=4, seed in 0u64..1000) {
            let q = SphereQuadrature::new(n, m).unwrap();
            // pseudo-random multi-index with total degree <= 2m - 1
            let max = 2 * m as u32 - 1;
            let mut alpha = vec![0u32; n];
            let mut s = seed;
            let mut left = (seed % u64::from(max + 1)) as u32;
            while left > 0 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                alpha[(s >> 33) as usize % n] += 1;
                left -= 1;
            }
            let v = q.integrate(|x| x.iter().zip(&alpha).map(|(xi, &a)| xi.powi(a as i32)).product());
            prop_assert!((v - moment(&alpha)).abs() < 1e-12, "{:?}: {} vs {}", alpha, v, moment(&alpha));
        }
    }
}
