//! Built-in asymptotically Euclidean metrics.

use std::collections::BTreeMap;

use super::expr::Expr;
use super::metric::MetricSpec;
use super::parser::parse;
use crate::error::{Error, Result};

/// A catalog argument: a number or an expression source.
#[derive(Clone, Debug, PartialEq)]
pub enum CatalogArg {
    Number(f64),
    Text(String),
}

impl CatalogArg {
    /// Interprets a `key=value` right-hand side: numbers stay numbers.
    pub fn parse_value(s: &str) -> CatalogArg {
        match s.trim().parse::<f64>() {
            Ok(v) => CatalogArg::Number(v),
            Err(_) => CatalogArg::Text(s.trim().to_string()),
        }
    }
}

pub type CatalogArgs = BTreeMap<String, CatalogArg>;

/// Documentation for one catalog entry.
#[derive(Clone, Copy, Debug)]
pub struct CatalogInfo {
    pub name: &'static str,
    pub args: &'static str,
    pub metric: &'static str,
    pub properties: &'static str,
}

pub const ENTRIES: [CatalogInfo; 5] = [
    CatalogInfo {
        name: "flat",
        args: "n=3",
        metric: "g_ij = δ_ij",
        properties: "all curvature vanishes; every flux and charge is zero",
    },
    CatalogInfo {
        name: "schwarzschild_isotropic",
        args: "n=3 (fixed), m=1",
        metric: "g_ij = (1 + m/(2r))^4 δ_ij",
        properties: "scalar-flat, conformally flat, ADM energy m, decay rate 1",
    },
    CatalogInfo {
        name: "conformal",
        args: "n=5, u=\"1 + a*r^(-2)\", a=0.1 (when u uses it), exponent=4/(n-2), tau (optional)",
        metric: "g_ij = u^exponent δ_ij",
        properties:
            "conformally flat; R = -4(n-1)/(n-2) u^{-(n+2)/(n-2)} Δu at the default exponent",
    },
    CatalogInfo {
        name: "diagonal_perturbation",
        args: "n=3, eps=0.1, h1..hn (default hi = \"xi^2*r^(-3)\")",
        metric: "g_ij = (1 + eps*h_i) δ_ij",
        properties: "generic anisotropic perturbation of δ; linear in eps",
    },
    CatalogInfo {
        name: "product_decay",
        args: "n=3, tau=1",
        metric: "g_ij = (1 + r^(-tau)) δ_ij",
        properties: "conformally flat with exact decay rate tau",
    },
];

struct Args<'a> {
    name: &'a str,
    args: &'a CatalogArgs,
    used: Vec<&'static str>,
}

impl<'a> Args<'a> {
    fn number(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.push(key);
        match self.args.get(key) {
            None => Ok(default),
            Some(CatalogArg::Number(v)) => Ok(*v),
            Some(CatalogArg::Text(t)) => Err(Error::Invalid(format!(
                "{}: argument `{key}` must be a number, got `{t}`",
                self.name
            ))),
        }
    }

    fn dim(&mut self, default: usize) -> Result<usize> {
        let n = self.number("n", default as f64)?;
        if n.fract() != 0.0 || !(3.0..=8.0).contains(&n) {
            return Err(Error::Invalid(format!(
                "{}: dimension must be an integer in 3..=8, got {n}",
                self.name
            )));
        }
        Ok(n as usize)
    }

    fn text(&mut self, key: &'static str) -> Option<String> {
        self.used.push(key);
        match self.args.get(key) {
            Some(CatalogArg::Text(t)) => Some(t.clone()),
            Some(CatalogArg::Number(v)) => Some(format!("{v:?}")),
            None => None,
        }
    }

    /// Numeric arguments not consumed by the entry become expression parameters.
    fn leftover_params(&self) -> BTreeMap<String, f64> {
        self.args
            .iter()
            .filter(|(k, _)| !self.used.contains(&k.as_str()) && !is_h_key(k))
            .filter_map(|(k, v)| match v {
                CatalogArg::Number(x) => Some((k.clone(), *x)),
                CatalogArg::Text(_) => None,
            })
            .collect()
    }

    fn reject_unknown_text(&self) -> Result<()> {
        for (k, v) in self.args {
            if let CatalogArg::Text(t) = v {
                if !self.used.contains(&k.as_str()) {
                    return Err(Error::Invalid(format!(
                        "{}: unexpected expression argument `{k}={t}`",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn is_h_key(k: &str) -> bool {
    k.strip_prefix('h')
        .is_some_and(|d| d.parse::<usize>().is_ok())
}

fn inner_radius(a: &mut Args<'_>) -> Result<f64> {
    a.number("R0", 1.0)
}

/// Builds the named catalog metric.
pub fn catalog(name: &str, args: &CatalogArgs) -> Result<MetricSpec> {
    let mut a = Args {
        name,
        args,
        used: Vec::new(),
    };
    let spec = match name {
        "flat" => {
            let n = a.dim(3)?;
            let r0 = inner_radius(&mut a)?;
            MetricSpec::diagonal(n, &vec!["1".to_string(); n], BTreeMap::new(), r0, None)?
        }
        "schwarzschild_isotropic" | "schwarzschild" => {
            let n = a.dim(3)?;
            if n != 3 {
                return Err(Error::Invalid(
                    "schwarzschild_isotropic is defined for n = 3 only".into(),
                ));
            }
            let m = a.number("m", 1.0)?;
            if m <= 0.0 {
                log::warn!("schwarzschild_isotropic with non-positive mass m = {m}");
            }
            let r0 = inner_radius(&mut a)?;
            let mut params = BTreeMap::new();
            params.insert("m".to_string(), m);
            MetricSpec::diagonal(
                3,
                &vec!["(1 + m/(2*r))^4".to_string(); 3],
                params,
                r0,
                Some(1.0),
            )?
        }
        "conformal" => {
            let n = a.dim(5)?;
            let u_src = a.text("u");
            let u_src = u_src.unwrap_or_else(|| "1 + a*r^(-2)".to_string());
            let exponent = a.number("exponent", 4.0 / (n as f64 - 2.0))?;
            let tau = a
                .args
                .get("tau")
                .map(|_| a.number("tau", 0.0))
                .transpose()?;
            a.used.push("tau");
            let r0 = inner_radius(&mut a)?;
            a.reject_unknown_text()?;
            let mut params = a.leftover_params();
            let u = parse(&u_src)?;
            let mut names = Vec::new();
            u.params(&mut names);
            if names.iter().any(|p| p == "a") {
                params.entry("a".to_string()).or_insert(0.1);
            }
            let g = Expr::Pow(Box::new(u), exponent).to_string();
            MetricSpec::diagonal(n, &vec![g; n], params, r0, tau)?
        }
        "diagonal_perturbation" => {
            let n = a.dim(3)?;
            let eps = a.number("eps", 0.1)?;
            let r0 = inner_radius(&mut a)?;
            let mut diag = Vec::with_capacity(n);
            for i in 1..=n {
                let h = match args.get(&format!("h{i}")) {
                    Some(CatalogArg::Text(t)) => t.clone(),
                    Some(CatalogArg::Number(v)) => format!("{v:?}"),
                    None => format!("x{i}^2*r^(-3)"),
                };
                let h = parse(&h)?;
                diag.push(format!("1 + {eps:?}*({h})"));
            }
            if let Some(k) = args
                .keys()
                .find(|k| is_h_key(k) && k[1..].parse::<usize>().map_or(true, |i| i == 0 || i > n))
            {
                return Err(Error::Invalid(format!(
                    "diagonal_perturbation: `{k}` is out of range for n = {n}"
                )));
            }
            a.reject_unknown_text_except_h()?;
            let params = a.leftover_params();
            let spec = MetricSpec::diagonal(n, &diag, params, r0, None)?;
            // reject perturbations large enough to break positivity
            spec.validate(6, 0x5eed)?;
            spec
        }
        "product_decay" => {
            let n = a.dim(3)?;
            let tau = a.number("tau", 1.0)?;
            if !(tau > 0.0) {
                return Err(Error::Invalid(format!(
                    "product_decay: tau must be positive, got {tau}"
                )));
            }
            let r0 = inner_radius(&mut a)?;
            let g = format!("1 + {}", Expr::Pow(Box::new(Expr::Radius), -tau));
            MetricSpec::diagonal(n, &vec![g; n], BTreeMap::new(), r0, Some(tau))?
        }
        other => return Err(Error::UnknownCatalog(other.to_string())),
    };
    Ok(spec)
}

impl Args<'_> {
    fn reject_unknown_text_except_h(&self) -> Result<()> {
        for (k, v) in self.args {
            if let CatalogArg::Text(t) = v {
                if !is_h_key(k) && !self.used.contains(&k.as_str()) {
                    return Err(Error::Invalid(format!(
                        "{}: unexpected expression argument `{k}={t}`",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper taking `(key, value)` pairs.
pub fn catalog_with(name: &str, args: &[(&str, CatalogArg)]) -> Result<MetricSpec> {
    let map = args
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    catalog(name, &map)
}

/// Pullback of the Euclidean metric by `x ↦ x (1 + a r^{-p})`.
///
/// Every curvature tensor of the result vanishes identically while its
/// components are far from δ, which makes it a pure-gauge test input.
pub fn flat_pullback(n: usize, a: f64, p: f64, inner_radius: f64) -> Result<MetricSpec> {
    let big_a = format!("(1 + a*r^(-{p:?}))");
    let c = format!(
        "a*{p:?}*r^(-{:?})*(a*{p:?}*r^(-{p:?}) - 2*{big_a})",
        p + 2.0
    );
    let mut upper = Vec::new();
    for i in 1..=n {
        for j in i..=n {
            let src = if i == j {
                format!("{big_a}^2 + x{i}^2*{c}")
            } else {
                format!("x{i}*x{j}*{c}")
            };
            upper.push(parse(&src)?);
        }
    }
    let mut params = BTreeMap::new();
    params.insert("a".to_string(), a);
    MetricSpec::new(n, upper, params, inner_radius, Some(p + 1.0))
}
