//! Decay on the asymptotic end: weighted norms over dyadic annuli, decay
//! exponents, a Yamabe quotient probe, and harmonic coordinates for
//! spherically symmetric metrics.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dsl::{Expr, MetricSpec};
use crate::error::{Error, Result};
use crate::flux::SphereQuadrature;
use crate::fourth::FourthOrderFrame;
use crate::jet::Jet;
use crate::sampling::shell_points;
use crate::stats::{loglog_fit, LineFit};
use crate::tensor::{CurvatureFrame, MetricJetFrame, SymJets};

/// One dyadic shell `r_in ≤ |x| ≤ r_out` with its sample points.
#[derive(Clone, Debug)]
pub struct Annulus {
    pub r_in: f64,
    pub r_out: f64,
    pub points: Vec<Vec<f64>>,
}

/// Dyadic annuli `2^k R₀ ≤ |x| ≤ 2^{k+1} R₀` for consecutive `k`.
#[derive(Clone, Debug)]
pub struct AnnulusGrid {
    dim: usize,
    seed: u64,
    annuli: Vec<Annulus>,
}

/// Minimum number of samples per annulus.
pub const MIN_SAMPLES: usize = 64;

impl AnnulusGrid {
    /// Annuli for `k = first, …, first + count − 1`, each with `samples`
    /// quasi-random points (at least 64).
    pub fn dyadic(
        dim: usize,
        r0: f64,
        first: i32,
        count: usize,
        samples: usize,
        seed: u64,
    ) -> Result<AnnulusGrid> {
        if !(r0 > 0.0) {
            return Err(Error::Invalid(format!(
                "inner radius must be positive, got {r0}"
            )));
        }
        if count == 0 {
            return Err(Error::Invalid(
                "annulus grid needs at least one annulus".into(),
            ));
        }
        let samples = samples.max(MIN_SAMPLES);
        let annuli = (0..count)
            .map(|i| {
                let r_in = r0 * 2f64.powi(first + i as i32);
                let r_out = 2.0 * r_in;
                Annulus {
                    r_in,
                    r_out,
                    points: shell_points(dim, r_in, r_out, samples, seed.wrapping_add(i as u64)),
                }
            })
            .collect();
        Ok(AnnulusGrid { dim, seed, annuli })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn annuli(&self) -> &[Annulus] {
        &self.annuli
    }
}

/// `σ = √(1 + r²)`.
pub fn sigma(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

fn annulus_volume(n: usize, a: &Annulus) -> f64 {
    crate::flux::sphere_area(n) / n as f64 * (a.r_out.powi(n as i32) - a.r_in.powi(n as i32))
}

/// Lebesgue exponent of a weighted norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Discrete `‖u‖_{p,δ} = ‖u σ^{−δ−n/p}‖_{L^p}` over the gridded end.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedNorm {
    pub p: Exponent,
    pub delta: f64,
    pub value: f64,
    /// Contribution of each annulus (sup for `p = ∞`).
    pub per_annulus: Vec<f64>,
    /// Set when the outermost annulus dominates and contributions keep
    /// growing, i.e. the norm would not saturate with more annuli.
    pub divergent: bool,
}

fn sample_field<F>(field: &F, grid: &AnnulusGrid) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    grid.annuli
        .iter()
        .map(|a| {
            a.points
                .par_iter()
                .map(|x| {
                    let v = field(x)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: "field sample".into(),
                            point: x.clone(),
                        });
                    }
                    Ok(v)
                })
                .collect()
        })
        .collect()
}

/// Monte-Carlo estimate of the weighted norm; `p = ∞` uses sample maxima.
pub fn weighted_norm<F>(
    field: F,
    p: Exponent,
    delta: f64,
    grid: &AnnulusGrid,
) -> Result<WeightedNorm>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if let Exponent::Finite(q) = p {
        if !(q > 1.0) {
            return Err(Error::Invalid(format!(
                "weighted norm exponent must exceed 1, got {q}"
            )));
        }
    }
    let n = grid.dim as f64;
    let values = sample_field(&field, grid)?;
    let per_annulus: Vec<f64> = grid
        .annuli
        .iter()
        .zip(&values)
        .map(|(a, vals)| match p {
            Exponent::Infinity => a
                .points
                .iter()
                .zip(vals)
                .map(|(x, v)| v.abs() * sigma(x).powf(-delta))
                .fold(0.0, f64::max),
            Exponent::Finite(q) => {
                let mean = a
                    .points
                    .iter()
                    .zip(vals)
                    .map(|(x, v)| (v.abs() * sigma(x).powf(-delta - n / q)).powf(q))
                    .sum::<f64>()
                    / a.points.len() as f64;
                mean * annulus_volume(grid.dim, a)
            }
        })
        .collect();
    let value = match p {
        Exponent::Infinity => per_annulus.iter().copied().fold(0.0, f64::max),
        Exponent::Finite(q) => per_annulus.iter().sum::<f64>().powf(1.0 / q),
    };
    let k = per_annulus.len();
    let divergent = k >= 3 && {
        let tail = &per_annulus[k - 3..];
        tail[2] > tail[1] && tail[1] > tail[0] && tail[2] > 0.0
    };
    Ok(WeightedNorm {
        p,
        delta,
        value,
        per_annulus,
        divergent,
    })
}

/// Decay exponents and norms of a field over the annuli.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub field: String,
    pub seed: u64,
    /// Radius at which each annulus attains its sample maximum.
    pub radii: Vec<f64>,
    pub sup: Vec<f64>,
    /// `δ̂ = −slope` of `log sup|u|` against `log r`; `+∞` for a zero field.
    #[serde(serialize_with = "serialize_extended")]
    pub exponent: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// `δ̂ ± 2·stderr`.
    pub band: (f64, f64),
    pub norms: Vec<WeightedNorm>,
}

impl DecayReport {
    /// CSV rows `field,annulus,radius,sup`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, (r, s)) in self.radii.iter().zip(&self.sup).enumerate() {
            out.push_str(&format!("{},{},{:.17e},{:.17e}\n", self.field, i, r, s));
        }
        out
    }
}

/// Fits the decay exponent of `sup_{A_k} |u|` across at least four annuli.
pub fn estimate_decay<F>(
    name: &str,
    field: F,
    grid: &AnnulusGrid,
    norms: &[(Exponent, f64)],
) -> Result<DecayReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if grid.annuli.len() < 4 {
        return Err(Error::Invalid(format!(
            "decay fit needs at least 4 annuli, got {}",
            grid.annuli.len()
        )));
    }
    let values = sample_field(&field, grid)?;
    let mut radii = Vec::new();
    let mut sup = Vec::new();
    for (a, vals) in grid.annuli.iter().zip(&values) {
        let (i, m) = vals.iter().enumerate().fold((0, -1.0), |(bi, bm), (i, v)| {
            if v.abs() > bm {
                (i, v.abs())
            } else {
                (bi, bm)
            }
        });
        radii.push(a.points[i].iter().map(|x| x * x).sum::<f64>().sqrt());
        sup.push(m);
    }
    let (exponent, stderr) = if sup.iter().all(|&s| s == 0.0) {
        (f64::INFINITY, 0.0)
    } else {
        let fit = loglog_fit(&radii, &sup).ok_or_else(|| {
            Error::Solver("decay regression failed: a sampled maximum is zero".into())
        })?;
        (-fit.slope, fit.slope_stderr)
    };
    let norms = norms
        .iter()
        .map(|&(p, d)| weighted_norm(&field, p, d, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayReport {
        field: name.to_string(),
        seed: grid.seed,
        radii,
        sup,
        exponent,
        stderr,
        band: (exponent - 2.0 * stderr, exponent + 2.0 * stderr),
        norms,
    })
}

/// Sampler for `max_ij |g_ij − δ_ij|`.
pub fn metric_deviation(spec: &MetricSpec) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x| {
        let n = spec.dim();
        let m = spec.eval_matrix(x)?;
        Ok((0..n * n)
            .map(|k| (m[k] - if k / n == k % n { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max))
    }
}

/// Sampler for `max_ij |J_ij|`.
pub fn j_magnitude(spec: &MetricSpec) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x| Ok(FourthOrderFrame::evaluate(spec, x, 4)?.j().max_abs())
}

/// Sampler for `|Q|`.
pub fn q_magnitude(spec: &MetricSpec) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x| Ok(FourthOrderFrame::evaluate(spec, x, 4)?.q().value().abs())
}

/// A trial function for the Yamabe quotient.
#[derive(Clone, Debug)]
pub enum Trial {
    /// Any expression; it is integrated over the grid region only.
    Expr(Expr),
    /// `(1 − ((r − c)/w)²)₊²`.
    Bump { center: f64, width: f64 },
}

impl Trial {
    fn jet(&self, x: &[f64], spec: &MetricSpec) -> Result<Jet> {
        match self {
            Trial::Expr(e) => e.eval_jet(x, spec.params(), 1),
            Trial::Bump { center, width } => {
                let r = Expr::Radius.eval_jet(x, spec.params(), 1)?;
                let t = (r.value() - center) / width;
                if t.abs() >= 1.0 {
                    return Ok(Jet::zero(x.len(), 1));
                }
                let s = 1.0 - t * t;
                // d/dr of s² = 2 s · (−2t / w)
                Ok(r.compose(&[s * s, -4.0 * s * t / width]))
            }
        }
    }

    /// Radial extent `[lo, hi]` to integrate over, if known.
    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Trial::Expr(_) => None,
            Trial::Bump { center, width } => Some((center - width, center + width)),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` (degree `2m − 1`).
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Rayleigh quotient
/// `∫(a_n |∇u|²_g + R u²) dV_g / ‖u‖²_{L^{2n/(n−2)}(g)}`, `a_n = 4(n−1)/(n−2)`,
/// integrated by radial Gauss–Legendre panels times a sphere rule over the
/// grid region (or the bump support).
pub fn yamabe_quotient(spec: &MetricSpec, u: &Trial, grid: &AnnulusGrid) -> Result<f64> {
    let n = spec.dim();
    let nf = n as f64;
    let a_n = 4.0 * (nf - 1.0) / (nf - 2.0);
    let crit = 2.0 * nf / (nf - 2.0);
    let first = grid.annuli.first().map_or(spec.inner_radius(), |a| a.r_in);
    let last = grid.annuli.last().map_or(spec.inner_radius(), |a| a.r_out);
    let (lo, hi) = match u.support() {
        Some((a, b)) => (a.max(first).max(spec.inner_radius()), b.min(last)),
        None => (first.max(spec.inner_radius()), last),
    };
    if !(hi > lo) {
        return Err(Error::Invalid(
            "trial function support misses the grid region".into(),
        ));
    }
    let sphere = SphereQuadrature::new(n, 4)?;
    let (gx, gw) = gauss_legendre(12);
    let panels = 16;
    let mut radial = Vec::new();
    for k in 0..panels {
        let a = lo + (hi - lo) * k as f64 / panels as f64;
        let b = lo + (hi - lo) * (k + 1) as f64 / panels as f64;
        for (x, w) in gx.iter().zip(&gw) {
            radial.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
        }
    }
    let terms: Vec<(f64, f64)> = radial
        .par_iter()
        .map(|&(r, wr)| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (omega, ws) in sphere.nodes().iter().zip(sphere.weights()) {
                let x: Vec<f64> = omega.iter().map(|c| c * r).collect();
                let uj = u.jet(&x, spec)?;
                if uj.is_zero() {
                    continue;
                }
                let c = CurvatureFrame::new(MetricJetFrame::new(spec, &x, 2)?)?;
                let m = c.metric();
                let vol = m.sqrt_det_g()?.value();
                let g_inv = m.g_inv();
                let mut grad = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        grad += g_inv.get(i, j).value() * uj.partial(&[i]) * uj.partial(&[j]);
                    }
                }
                let uv = uj.value();
                let w = wr * ws * r.powi(n as i32 - 1) * vol;
                num += w * (a_n * grad + c.scalar().value() * uv * uv);
                den += w * uv.abs().powf(crit);
            }
            Ok((num, den))
        })
        .collect::<Result<_>>()?;
    let num: f64 = terms.iter().map(|t| t.0).sum();
    let den: f64 = terms.iter().map(|t| t.1).sum();
    if den <= 0.0 {
        return Err(Error::Invalid(
            "trial function vanishes on the grid region".into(),
        ));
    }
    Ok(num / den.powf(2.0 / crit))
}

/// Radial bumps `(1 − ((r−c)/w)²)₊²` over a `(c, w)` grid inside the grid region.
pub fn bump_battery(grid: &AnnulusGrid) -> Vec<Trial> {
    let mut out = Vec::new();
    for a in &grid.annuli {
        for frac in [0.25, 0.5, 0.75] {
            let center = a.r_in + frac * (a.r_out - a.r_in);
            for wf in [0.2, 0.45] {
                out.push(Trial::Bump {
                    center,
                    width: wf * (a.r_out - a.r_in),
                });
            }
        }
    }
    out
}

/// Radial profile of a spherically symmetric metric
/// `g = a(r) δ + b(r) x x / r²`, sampled on the first axis.
#[derive(Clone, Copy, Debug)]
struct Profile {
    a: f64,
    da: f64,
    big_a: f64,
    d_big_a: f64,
}

fn profile(spec: &MetricSpec, r: f64) -> Result<Profile> {
    let n = spec.dim();
    let mut x = vec![0.0; n];
    x[0] = r;
    let g = SymJets::from_packed(n, spec.eval_jets(&x, 1)?);
    Ok(Profile {
        a: g.get(1, 1).value(),
        da: g.get(1, 1).partial(&[0]),
        big_a: g.get(0, 0).value(),
        d_big_a: g.get(0, 0).partial(&[0]),
    })
}

/// Checks `g = a(r) δ + b(r) x x / r²` at sample points.
fn check_spherical(spec: &MetricSpec, r_max: f64) -> Result<()> {
    let n = spec.dim();
    let r0 = spec.inner_radius();
    for x in shell_points(n, r0, r_max.max(2.0 * r0), 24, 0x5ca1e) {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pr = profile(spec, r)?;
        let b = pr.big_a - pr.a;
        let m = spec.eval_matrix(&x)?;
        let scale = pr.a.abs().max(pr.big_a.abs());
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { pr.a } else { 0.0 } + b * x[i] * x[j] / (r * r);
                if (m[i * n + j] - want).abs() > 1e-10 * scale {
                    return Err(Error::Invalid(format!(
                        "metric is not spherically symmetric: g_{}{} = {} at {x:?}, expected {want}",
                        i + 1,
                        j + 1,
                        m[i * n + j]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Harmonic coordinates `y^i = f(r) x^i / r` for a spherically symmetric metric.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicCoordinate {
    /// Radii of the integration grid.
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    /// `max |Δ_g y^i|` relative to the size of its terms, over the check radii.
    pub residual: f64,
    /// Fit of `log|f − r|` against `log r` over dyadic radii.
    pub growth: Option<LineFit>,
    /// Decay rate of `g − δ`: the declared one, else fitted along an axis
    /// (`+∞` when `g = δ` there).
    #[serde(serialize_with = "serialize_extended")]
    pub tau: f64,
    /// `1 − τ*` with `τ* = min(τ, n − 2)`.
    pub expected_growth: f64,
    pub deviation: DecayReport,
}

impl HarmonicCoordinate {
    /// `(f, f')` at radius `r` by cubic Hermite interpolation.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let k = match self.r.binary_search_by(|v| v.total_cmp(&r)) {
            Ok(i) => return (self.f[i], self.df[i]),
            Err(i) => i.clamp(1, self.r.len() - 1),
        };
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        let (f0, f1, d0, d1) = (self.f[k - 1], self.f[k], self.df[k - 1] * h, self.df[k] * h);
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        let dh00 = 6.0 * t * t - 6.0 * t;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = -6.0 * t * t + 6.0 * t;
        let dh11 = 3.0 * t * t - 2.0 * t;
        (
            h00 * f0 + h10 * d0 + h01 * f1 + h11 * d1,
            (dh00 * f0 + dh10 * d0 + dh01 * f1 + dh11 * d1) / h,
        )
    }
}

/// `f'' = −[(n−1)/r + (n−1)a'/(2a) − A'/(2A)] f' + (n−1) A f / (a r²)`
/// with `A = a + b`, from `Δ_g (f(r) x^i / r) = 0`.
fn second_derivative(n: f64, r: f64, p: &Profile, f: f64, df: f64) -> f64 {
    let drift = (n - 1.0) / r + (n - 1.0) * p.da / (2.0 * p.a) - p.d_big_a / (2.0 * p.big_a);
    -drift * df + (n - 1.0) * p.big_a * f / (p.a * r * r)
}

/// Integrates the radial equation in `s = log r` with classical RK4 and
/// `steps_per_octave` steps per doubling of `r`.
fn integrate(
    spec: &MetricSpec,
    r0: f64,
    r_max: f64,
    steps_per_octave: usize,
    f0: f64,
    df0: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = spec.dim() as f64;
    let octaves = (r_max / r0).log2();
    let steps = ((octaves * steps_per_octave as f64).ceil() as usize).max(8);
    let h = (r_max / r0).ln() / steps as f64;
    // state (f, df/dr); d/ds = r d/dr
    let rhs = |s: f64, y: [f64; 2]| -> Result<[f64; 2]> {
        let r = r0 * s.exp();
        let p = profile(spec, r)?;
        Ok([r * y[1], r * second_derivative(n, r, &p, y[0], y[1])])
    };
    let mut rs = vec![r0];
    let mut fs = vec![f0];
    let mut dfs = vec![df0];
    let mut y = [f0, df0];
    for i in 0..steps {
        let s = i as f64 * h;
        let k1 = rhs(s, y)?;
        let k2 = rhs(
            s + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        )?;
        let k3 = rhs(
            s + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        )?;
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]])?;
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::Solver(format!(
                "radial integration blew up near r = {}",
                r0 * (s + h).exp()
            )));
        }
        rs.push(r0 * ((i + 1) as f64 * h).exp());
        fs.push(y[0]);
        dfs.push(y[1]);
    }
    Ok((rs, fs, dfs))
}

/// Octaves integrated beyond `r_max` before imposing `f' = 1`, so that the
/// truncated outer condition does not leak into the reported range.
const OUTER_OCTAVES: i32 = 12;

/// Solves `Δ_g (f(r) x^i / r) = 0` with `f(R₀) = R₀` and `f' = 1` at
/// `2^12 r_max`, so that `f(r)/r → 1`, and reports the solution on
/// `[R₀, r_max]`. The equation is linear, so one secant step on the initial
/// slope is exact.
pub fn harmonic_radial_coordinate(spec: &MetricSpec, r_max: f64) -> Result<HarmonicCoordinate> {
    let n = spec.dim();
    let r0 = spec.inner_radius();
    if !(r_max >= 16.0 * r0) {
        return Err(Error::Invalid(format!(
            "r_max must be at least 16 R0 = {}, got {r_max}",
            16.0 * r0
        )));
    }
    check_spherical(spec, r_max)?;
    let steps = 256;
    let r_far = r_max * 2f64.powi(OUTER_OCTAVES);
    let (_, _, d_a) = integrate(spec, r0, r_far, steps, r0, 0.0)?;
    let (_, _, d_b) = integrate(spec, r0, r_far, steps, r0, 1.0)?;
    let (ea, eb) = (d_a[d_a.len() - 1], d_b[d_b.len() - 1]);
    if (eb - ea).abs() < 1e-300 {
        return Err(Error::Solver("shooting slopes are degenerate".into()));
    }
    let slope = (1.0 - ea) / (eb - ea);
    let (mut r, mut f, mut df) = integrate(spec, r0, r_far, steps, r0, slope)?;
    let keep = r.iter().take_while(|&&x| x <= r_max * (1.0 + 1e-9)).count();
    r.truncate(keep);
    f.truncate(keep);
    df.truncate(keep);
    let mut radii = Vec::new();
    let mut rr = 8.0 * r0;
    while rr <= r_max * (1.0 + 1e-12) {
        radii.push(rr);
        rr *= 2.0;
    }
    let tau = match spec.declared_decay() {
        Some(t) => t,
        None => {
            let dev = radii
                .iter()
                .map(|&x| {
                    let mut p = vec![0.0; n];
                    p[0] = x;
                    metric_deviation(spec)(&p)
                })
                .collect::<Result<Vec<_>>>()?;
            if dev.iter().all(|&d| d == 0.0) {
                f64::INFINITY
            } else {
                -loglog_fit(&radii, &dev)
                    .ok_or_else(|| {
                        Error::Solver(
                            "cannot fit the metric decay rate: g − δ vanishes at some radii".into(),
                        )
                    })?
                    .slope
            }
        }
    };
    let mut sol = HarmonicCoordinate {
        r,
        f,
        df,
        residual: 0.0,
        growth: None,
        tau,
        expected_growth: 1.0 - tau.min(n as f64 - 2.0),
        deviation: DecayReport {
            field: "f - r".into(),
            seed: 0,
            radii: Vec::new(),
            sup: Vec::new(),
            exponent: f64::NAN,
            stderr: 0.0,
            band: (f64::NAN, f64::NAN),
            norms: Vec::new(),
        },
    };
    sol.residual = harmonic_residual(spec, &sol, 50)?;
    let dev: Vec<f64> = radii.iter().map(|&x| (sol.eval(x).0 - x).abs()).collect();
    sol.growth = loglog_fit(&radii, &dev);
    let (exponent, stderr) = sol
        .growth
        .map_or((f64::NAN, 0.0), |g| (-g.slope, g.slope_stderr));
    sol.deviation.radii = radii;
    sol.deviation.sup = dev;
    sol.deviation.exponent = exponent;
    sol.deviation.stderr = stderr;
    sol.deviation.band = (exponent - 2.0 * stderr, exponent + 2.0 * stderr);
    Ok(sol)
}

/// Evaluates `Δ_g (f(r) x^1 / r)` with the tensor Laplacian at `count`
/// log-spaced radii and returns the worst value relative to
/// `|f''| + (n−1)(|f'|/r + |f|/r²)`. `f''` comes from a five-point
/// difference of the stored `f'`.
fn harmonic_residual(spec: &MetricSpec, sol: &HarmonicCoordinate, count: usize) -> Result<f64> {
    let n = spec.dim();
    let nf = n as f64;
    let m = sol.r.len();
    let h = (sol.r[1] / sol.r[0]).ln();
    let mut worst = 0.0f64;
    for c in 0..count {
        let i = 2 + c * (m - 5) / count.max(2).saturating_sub(1).max(1);
        let i = i.min(m - 3);
        let r = sol.r[i];
        let (f, df) = (sol.f[i], sol.df[i]);
        let d_ds = (sol.df[i - 2] - 8.0 * sol.df[i - 1] + 8.0 * sol.df[i + 1] - sol.df[i + 2])
            / (12.0 * h);
        let ddf = d_ds / r;
        // φ(r) = f/r and its first two derivatives
        let phi = f / r;
        let dphi = df / r - f / (r * r);
        let ddphi = ddf / r - 2.0 * df / (r * r) + 2.0 * f / (r * r * r);
        // a point on the sphere of radius r away from the axes
        let dir: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * k as f64).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = dir.iter().map(|v| v * r / norm).collect();
        let rj = Expr::Radius.eval_jet(&x, spec.params(), 2)?;
        let y = &rj.compose(&[phi, dphi, ddphi]) * &Jet::variable(n, 2, 0, x[0]);
        let frame = CurvatureFrame::new(MetricJetFrame::new(spec, &x, 2)?)?;
        let lap = frame.laplacian(&y)?.value();
        let scale = ddf.abs() + (nf - 1.0) * (df.abs() / r + f.abs() / (r * r));
        worst = worst.max(lap.abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{catalog_with, CatalogArg};

    fn grid(n: usize) -> AnnulusGrid {
        AnnulusGrid::dyadic(n, 1.0, 0, 6, 64, 7).unwrap()
    }

    #[test]
    fn sigma_power_has_unit_sup_norm() {
        let g = grid(3);
        for d in [-1.0, 0.5, 2.0] {
            let w = weighted_norm(|x| Ok(sigma(x).powf(d)), Exponent::Infinity, d, &g).unwrap();
            assert!((w.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_square_is_bounded_in_weight_minus_two() {
        let g = grid(3);
        let w = weighted_norm(
            |x| Ok(1.0 / x.iter().map(|v| v * v).sum::<f64>()),
            Exponent::Infinity,
            -2.0,
            &g,
        )
        .unwrap();
        assert!(w.value <= 2.0 + 1e-12);
        assert!(!w.divergent);
        let d = weighted_norm(
            |x| Ok(1.0 / x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            Exponent::Infinity,
            -2.0,
            &g,
        )
        .unwrap();
        assert!(d.divergent);
    }

    #[test]
    fn norm_decreases_with_weight() {
        let g = grid(4);
        let f = |x: &[f64]| Ok(1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>()));
        let mut last = f64::INFINITY;
        for d in [-3.0, -2.0, -1.0, 0.0] {
            let w = weighted_norm(f, Exponent::Finite(2.0), d, &g)
                .unwrap()
                .value;
            assert!(w <= last);
            last = w;
        }
        assert!(weighted_norm(f, Exponent::Finite(1.0), 0.0, &g).is_err());
    }

    #[test]
    fn power_law_decay() {
        let g = grid(3);
        let r = estimate_decay(
            "r^-2",
            |x| Ok(x.iter().map(|v| v * v).sum::<f64>().recip()),
            &g,
            &[],
        )
        .unwrap();
        assert!((r.exponent - 2.0).abs() < 0.04);
        let z = estimate_decay("zero", |_| Ok(0.0), &g, &[]).unwrap();
        assert!(z.exponent.is_infinite());
        assert!(serde_json::to_string(&z).unwrap().contains("\"inf\""));
    }

    #[test]
    fn flat_yamabe_quotient_is_positive_and_scale_invariant() {
        let spec = catalog_with("flat", &[]).unwrap();
        let g = grid(3);
        let b = Trial::Bump {
            center: 6.0,
            width: 3.0,
        };
        let q1 = yamabe_quotient(&spec, &b, &g).unwrap();
        assert!(q1 > 0.0);
        let u = Trial::Expr(crate::dsl::parse("exp(-(r - 6)^2)").unwrap());
        let u2 = Trial::Expr(crate::dsl::parse("2*exp(-(r - 6)^2)").unwrap());
        let (a, b) = (
            yamabe_quotient(&spec, &u, &g).unwrap(),
            yamabe_quotient(&spec, &u2, &g).unwrap(),
        );
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
        let s = catalog_with("schwarzschild_isotropic", &[]).unwrap();
        for t in bump_battery(&g).iter().take(6) {
            assert!(yamabe_quotient(&s, t, &g).unwrap() > 0.0);
        }
    }

    #[test]
    fn flat_harmonic_coordinate_is_identity() {
        let spec = catalog_with("flat", &[]).unwrap();
        let h = harmonic_radial_coordinate(&spec, 64.0).unwrap();
        for (r, f) in h.r.iter().zip(&h.f) {
            assert!((f - r).abs() < 1e-9 * r);
        }
        assert!(h.residual < 1e-8);
    }

    #[test]
    fn schwarzschild_harmonic_coordinate() {
        let spec = catalog_with("schwarzschild_isotropic", &[]).unwrap();
        let h = harmonic_radial_coordinate(&spec, 1024.0).unwrap();
        assert!(h.residual <= 1e-6, "{}", h.residual);
        let g = h.growth.unwrap().slope;
        assert!(g.abs() <= 0.05, "{g}");
        assert_eq!(h.expected_growth, 0.0);
    }

    #[test]
    fn conformal_harmonic_coordinate_is_bounded() {
        let spec = catalog_with(
            "conformal",
            &[
                ("n", CatalogArg::Number(5.0)),
                ("u", CatalogArg::Text("1 + 0.1*r^(-1)".into())),
                ("exponent", CatalogArg::Number(4.0 / 3.0)),
            ],
        )
        .unwrap();
        let h = harmonic_radial_coordinate(&spec, 1024.0).unwrap();
        assert!(h.residual <= 1e-6);
        assert!((h.tau - 1.0).abs() < 0.05);
        assert!((h.growth.unwrap().slope - h.expected_growth).abs() <= 0.1);
    }

    #[test]
    fn non_symmetric_metric_is_rejected() {
        let spec =
            catalog_with("diagonal_perturbation", &[("n", CatalogArg::Number(3.0))]).unwrap();
        assert!(harmonic_radial_coordinate(&spec, 64.0).is_err());
    }
}
