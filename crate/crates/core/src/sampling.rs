//! Deterministic low-discrepancy sampling of spherical shells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = f64::from(base);
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % u64::from(base)) as f64 * inv;
        i /= u64::from(base);
        inv /= b;
    }
    out
}

/// Halton points in `[0,1)^dims`, shifted by a seeded Cranley-Patterson rotation.
pub fn halton(count: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dims <= PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dims)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Points spread over the shell `r_in <= |x| <= r_out` in `R^dim`,
/// uniformly with respect to volume.
pub fn shell_points(dim: usize, r_in: f64, r_out: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    let (a, b) = (r_in.powi(dim as i32), r_out.powi(dim as i32));
    halton(count, dim + 1, seed)
        .into_iter()
        .map(|u| {
            let mut dir: Vec<f64> = u[..dim]
                .iter()
                .map(|&p| normal.inverse_cdf(p.clamp(1e-12, 1.0 - 1e-12)))
                .collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radius = (a + u[dim] * (b - a)).powf(1.0 / dim as f64);
            for x in &mut dir {
                *x *= radius / norm;
            }
            dir
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn shell_points_stay_in_shell() {
        for p in shell_points(4, 2.0, 4.0, 200, 9) {
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((2.0 - 1e-12..=4.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(
            shell_points(3, 1.0, 2.0, 10, 5),
            shell_points(3, 1.0, 2.0, 10, 5)
        );
        assert_ne!(
            shell_points(3, 1.0, 2.0, 10, 5),
            shell_points(3, 1.0, 2.0, 10, 6)
        );
    }
}
