//! Run configuration. The same structs back the command line and the
//! `config` block recorded in every JSON output, so a recorded run can be
//! replayed exactly.

use std::path::PathBuf;

use aecurv_core::dsl::{catalog, CatalogArg, CatalogArgs, MetricSpec};
use aecurv_core::{Error, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Metric source: a catalog entry with parameters, or a JSON metric file.
#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
pub struct MetricArgs {
    /// Catalog metric name (see `aecurv catalog`).
    #[arg(long, conflicts_with = "metric_file")]
    pub metric: Option<String>,
    /// JSON metric file.
    #[arg(long)]
    pub metric_file: Option<PathBuf>,
    /// Catalog parameter `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    #[serde(default)]
    pub params: Vec<String>,
}

impl MetricArgs {
    pub fn load(&self) -> Result<MetricSpec> {
        match (&self.metric, &self.metric_file) {
            (Some(name), None) => {
                let mut args = CatalogArgs::new();
                for p in &self.params {
                    let (k, v) = p.split_once('=').ok_or_else(|| {
                        Error::Invalid(format!("parameter `{p}` is not of the form key=value"))
                    })?;
                    args.insert(k.trim().to_string(), CatalogArg::parse_value(v));
                }
                catalog(name, &args)
            }
            (None, Some(path)) => {
                if !self.params.is_empty() {
                    return Err(Error::Invalid("--param applies to catalog metrics only; put parameters in the metric file".into()));
                }
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Invalid(format!("cannot read metric file {}: {e}", path.display()))
                })?;
                MetricSpec::from_json(&text)
            }
            (None, None) => Err(Error::Invalid(
                "a metric is required: pass --metric NAME or --metric-file PATH".into(),
            )),
            (Some(_), Some(_)) => Err(Error::Invalid(
                "--metric and --metric-file are mutually exclusive".into(),
            )),
        }
    }
}

/// Options shared by every metric command.
#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
pub struct Common {
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    /// Seed for sample points.
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Output path (stdout when absent).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(default)]
    pub format: Format,
}

/// Points: a file and/or inline coordinates.
#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
pub struct PointArgs {
    /// File of points: a JSON array of arrays, or one point per line with
    /// comma or whitespace separated coordinates.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Inline point `x1,x2,…`; repeatable.
    #[arg(long = "at", value_name = "X1,X2,...", allow_hyphen_values = true)]
    #[serde(default)]
    pub at: Vec<String>,
}

/// `R0,K`: radii `R0·2^k` for `k = 3, …, K + 2`.
#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
pub struct RadiiArgs {
    /// Base radius and count `R0,K` (default: the metric's inner radius, 8).
    #[arg(long, value_name = "R0,K")]
    pub radii: Option<String>,
}

impl RadiiArgs {
    pub fn resolve(&self, spec: &MetricSpec) -> Result<(f64, usize)> {
        match &self.radii {
            None => Ok((spec.inner_radius(), 8)),
            Some(s) => {
                let (a, b) = s
                    .split_once(',')
                    .ok_or_else(|| Error::Invalid(format!("--radii expects R0,K, got `{s}`")))?;
                let r0: f64 = a
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("--radii: bad base radius `{a}`")))?;
                let k: usize = b
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("--radii: bad count `{b}`")))?;
                if !(r0 > 0.0) || r0 < spec.inner_radius() {
                    return Err(Error::Invalid(format!(
                        "--radii: base radius {r0} must be at least the inner radius {}",
                        spec.inner_radius()
                    )));
                }
                if k < 4 {
                    return Err(Error::Invalid(format!(
                        "--radii: at least 4 radii are needed, got {k}"
                    )));
                }
                Ok((r0, k))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub points: PointArgs,
    /// Metric jet order; fourth-order quantities need 4.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FaultArg {
    BachLaplacian,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub points: PointArgs,
    /// Number of sample points when no points are given.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Metric jet order; the divergence identities need 5.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Relative tolerance of the trace identities.
    #[arg(long, default_value_t = aecurv_core::check::TRACE_TOL)]
    pub tol: f64,
    /// Relative tolerance of the divergence identities.
    #[arg(long, default_value_t = aecurv_core::check::DIVERGENCE_TOL)]
    pub div_tol: f64,
    /// Corrupts a formula on purpose (negative control for the suite).
    #[arg(long, value_enum, hide = true)]
    pub fault: Option<FaultArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FluxKind {
    Adm,
    AdmEinstein,
    Energy,
    Gj,
    Charge,
    /// Energy and G_J flux together with their ratio.
    Thm45,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct FluxArgs {
    /// Functionals to sweep.
    #[arg(value_enum, default_values_t = [FluxKind::Adm])]
    pub functionals: Vec<FluxKind>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub radii: RadiiArgs,
    /// Gauss nodes per polar angle (default depends on the dimension).
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Multiplier V of the charge functional.
    #[arg(long, default_value = "1")]
    pub charge_v: String,
    /// Relative tolerance of the energy ratio check.
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    /// `max |g_ij − δ_ij|`.
    Metric,
    /// `max |J_ij|`.
    J,
    /// `|Q|`.
    Q,
    /// `max |G_J,ij|`.
    Gj,
    /// `|R|`.
    Scalar,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Field::Metric)]
    pub field: Field,
    #[command(flatten)]
    #[serde(flatten)]
    pub radii: RadiiArgs,
    /// Sample points per annulus (at least 64).
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Weighted norm `p:δ` to report (p may be `inf`); repeatable.
    #[arg(long = "norm", value_name = "P:DELTA", allow_hyphen_values = true)]
    #[serde(default)]
    pub norms: Vec<String>,
    /// Also evaluate the Yamabe quotient on a battery of radial bumps.
    #[arg(long)]
    #[serde(default)]
    pub yamabe: bool,
    /// Also solve for harmonic coordinates out to this radius
    /// (spherically symmetric metrics only).
    #[arg(long, value_name = "R_MAX")]
    #[serde(default)]
    pub harmonic: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct LinearizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub points: PointArgs,
    /// Scalings ε of the perturbation `h = g − δ`.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4])]
    pub eps: Vec<f64>,
    /// Minimum acceptable remainder slope.
    #[arg(long, default_value_t = 1.9)]
    pub tol: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, Args)]
pub struct CatalogCmdArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize, Args)]
pub struct ReplayArgs {
    /// A JSON output written by an earlier run.
    pub file: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Subcommand)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Curvature and fourth-order tensors at points.
    Eval(EvalArgs),
    /// Trace, conservation and Bianchi identity residuals.
    Check(CheckArgs),
    /// Flux integrals over spheres and their limits.
    Flux(FluxArgs),
    /// Decay exponents and weighted norms over dyadic annuli.
    Decay(DecayArgs),
    /// Quadratic remainder of the linearized Q-curvature.
    Linearize(LinearizeArgs),
    /// List built-in metrics.
    Catalog(CatalogCmdArgs),
    /// Re-run the configuration recorded in an earlier JSON output.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eval(_) => "eval",
            Command::Check(_) => "check",
            Command::Flux(_) => "flux",
            Command::Decay(_) => "decay",
            Command::Linearize(_) => "linearize",
            Command::Catalog(_) => "catalog",
            Command::Replay(_) => "replay",
        }
    }

    pub fn output(&self) -> (Option<&PathBuf>, Format) {
        match self {
            Command::Eval(a) => (a.common.out.as_ref(), a.common.format),
            Command::Check(a) => (a.common.out.as_ref(), a.common.format),
            Command::Flux(a) => (a.common.out.as_ref(), a.common.format),
            Command::Decay(a) => (a.common.out.as_ref(), a.common.format),
            Command::Linearize(a) => (a.common.out.as_ref(), a.common.format),
            Command::Catalog(a) => (a.out.as_ref(), a.format),
            Command::Replay(a) => (a.out.as_ref(), Format::Json),
        }
    }

    pub fn set_out(&mut self, out: Option<PathBuf>) {
        match self {
            Command::Eval(a) => a.common.out = out,
            Command::Check(a) => a.common.out = out,
            Command::Flux(a) => a.common.out = out,
            Command::Decay(a) => a.common.out = out,
            Command::Linearize(a) => a.common.out = out,
            Command::Catalog(a) => a.out = out,
            Command::Replay(a) => a.out = out,
        }
    }
}

/// Parses points from a file body.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>> {
    let t = text.trim_start();
    if t.starts_with('[') {
        return Ok(serde_json::from_str(t)?);
    }
    t.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_point)
        .collect()
}

pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad coordinate `{t}` in point `{s}`")))
        })
        .collect()
}

impl PointArgs {
    /// File points followed by inline ones; checked against the dimension.
    pub fn load(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        let mut pts = match &self.points {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Invalid(format!("cannot read points file {}: {e}", p.display()))
                })?;
                parse_points(&text)?
            }
            None => Vec::new(),
        };
        for s in &self.at {
            pts.push(parse_point(s)?);
        }
        if let Some(p) = pts.iter().find(|p| p.len() != dim) {
            return Err(Error::Invalid(format!(
                "point {p:?} has {} coordinates, metric dimension is {dim}",
                p.len()
            )));
        }
        Ok(pts)
    }
}

/// Parses `p:δ`.
pub fn parse_norm(s: &str) -> Result<(aecurv_core::asymptotics::Exponent, f64)> {
    use aecurv_core::asymptotics::Exponent;
    let (p, d) = s
        .split_once(':')
        .ok_or_else(|| Error::Invalid(format!("--norm expects P:DELTA, got `{s}`")))?;
    let p = match p.trim() {
        "inf" | "infinity" => Exponent::Infinity,
        x => Exponent::Finite(
            x.parse()
                .map_err(|_| Error::Invalid(format!("--norm: bad exponent `{x}`")))?,
        ),
    };
    let d = d
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("--norm: bad weight `{d}`")))?;
    Ok((p, d))
}
