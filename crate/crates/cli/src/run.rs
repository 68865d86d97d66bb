use aecurv_core::asymptotics::{
    bump_battery, estimate_decay, harmonic_radial_coordinate, j_magnitude, metric_deviation,
    q_magnitude, yamabe_quotient, AnnulusGrid, Trial,
};
use aecurv_core::check::{self, Tolerances};
use aecurv_core::dsl::{parse, MetricSpec, ENTRIES};
use aecurv_core::flux::{
    self, default_degree, dyadic_radii, energy_ratio, FluxSeries, SphereQuadrature,
};
use aecurv_core::fourth::{perturbation, remainder_slope, Fault, FourthOrderFrame};
use aecurv_core::tensor::{CurvatureFrame, MetricJetFrame, SymJets};
use aecurv_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

/// Output of a command: a JSON result, a CSV rendering, and an optional
/// tolerance breach that turns into exit code 1.
pub struct Report {
    pub result: Value,
    pub csv: String,
    pub breach: Option<String>,
}

pub fn run(cmd: &Command) -> Result<Report> {
    match cmd {
        Command::Eval(a) => eval(a),
        Command::Check(a) => check_cmd(a),
        Command::Flux(a) => flux_cmd(a),
        Command::Decay(a) => decay(a),
        Command::Linearize(a) => linearize(a),
        Command::Catalog(_) => Ok(catalog_listing()),
        Command::Replay(_) => Err(Error::Invalid("replay cannot be nested".into())),
    }
}

/// The JSON document written for a run.
pub fn envelope(cmd: &Command, report: &Report) -> Value {
    json!({
        "schema": 1,
        "command": cmd.name(),
        "config": cmd,
        "result": report.result,
    })
}

fn matrix(t: &SymJets) -> Vec<Vec<f64>> {
    let n = t.dim();
    t.values().chunks(n).map(<[f64]>::to_vec).collect()
}

#[derive(Serialize)]
struct PointFrame {
    point: Vec<f64>,
    g: Vec<Vec<f64>>,
    ricci: Vec<Vec<f64>>,
    scalar: f64,
    schouten: Vec<Vec<f64>>,
    bach: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    q: f64,
    j: Vec<Vec<f64>>,
    g_j: Vec<Vec<f64>>,
}

impl PointFrame {
    fn rows(&self, idx: usize) -> String {
        let mut out = String::new();
        let mut push = |name: &str, m: &[Vec<f64>]| {
            for (i, row) in m.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out.push_str(&format!("{idx},{name},{},{},{v:.17e}\n", i + 1, j + 1));
                }
            }
        };
        push("g", &self.g);
        push("ricci", &self.ricci);
        push("schouten", &self.schouten);
        push("bach", &self.bach);
        push("t", &self.t);
        push("j", &self.j);
        push("g_j", &self.g_j);
        out.push_str(&format!("{idx},scalar,,,{:.17e}\n", self.scalar));
        out.push_str(&format!("{idx},q,,,{:.17e}\n", self.q));
        out
    }
}

fn eval(a: &EvalArgs) -> Result<Report> {
    let spec = a.common.metric.load()?;
    let points = a.points.load(spec.dim())?;
    if points.is_empty() {
        return Err(Error::Invalid(
            "eval needs at least one point: pass --points FILE or --at X1,X2,...".into(),
        ));
    }
    let frames = points
        .iter()
        .map(|p| {
            let metric = MetricJetFrame::new(&spec, p, a.order)?;
            let f = FourthOrderFrame::new(CurvatureFrame::new(metric)?, None)?;
            let c = f.curvature();
            Ok(PointFrame {
                point: p.clone(),
                g: matrix(c.metric().g()),
                ricci: matrix(c.ricci()),
                scalar: c.scalar().value(),
                schouten: matrix(&c.schouten()),
                bach: matrix(f.bach()),
                t: matrix(f.t()),
                q: f.q().value(),
                j: matrix(f.j()),
                g_j: matrix(f.g_j()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("point,quantity,i,j,value\n");
    for (i, f) in frames.iter().enumerate() {
        csv.push_str(&f.rows(i));
    }
    Ok(Report {
        result: json!({ "dim": spec.dim(), "order": a.order, "frames": frames }),
        csv,
        breach: None,
    })
}

fn check_cmd(a: &CheckArgs) -> Result<Report> {
    let spec = a.common.metric.load()?;
    if a.order < 5 {
        return Err(Error::InsufficientOrder {
            quantity: "div G_J".into(),
            required: 5,
            available: a.order,
        });
    }
    if a.order > 5 {
        return Err(Error::OrderTooHigh {
            requested: a.order,
            max: 5,
        });
    }
    let mut points = a.points.load(spec.dim())?;
    if points.is_empty() {
        points = check::check_points(&spec, a.count, a.common.seed);
    }
    let tol = Tolerances {
        trace: a.tol,
        divergence: a.div_tol,
    };
    let fault = a.fault.map(|f| match f {
        FaultArg::BachLaplacian => Fault::BachLaplacian,
    });
    let report = check::run(&spec, &points, tol, fault)?;
    let breach = report.first_failure().map(|r| {
        format!(
            "{} residual {:.3e} exceeds tolerance {:.1e} at {:?}",
            r.name,
            r.max,
            r.tolerance,
            r.point.as_deref().unwrap_or(&[])
        )
    });
    Ok(Report {
        csv: report.to_csv(),
        result: json!({ "passed": report.passed(), "report": report }),
        breach,
    })
}

fn flux_cmd(a: &FluxArgs) -> Result<Report> {
    let spec = a.common.metric.load()?;
    let n = spec.dim();
    let (r0, k) = a.radii.resolve(&spec)?;
    let radii = dyadic_radii(r0, k);
    let degree = a.quad_degree.unwrap_or_else(|| default_degree(n));
    let quad = SphereQuadrature::new(n, degree)?;
    let mut series: Vec<FluxSeries> = Vec::new();
    let mut ratio = None;
    let run_one = |f: &flux::Functional, series: &mut Vec<FluxSeries>| -> Result<usize> {
        if let Some(i) = series.iter().position(|s| s.functional == f.to_string()) {
            return Ok(i);
        }
        series.push(flux::sweep(f, &spec, &quad, &radii)?);
        Ok(series.len() - 1)
    };
    for kind in &a.functionals {
        match kind {
            FluxKind::Adm => {
                run_one(&flux::Functional::Adm, &mut series)?;
            }
            FluxKind::AdmEinstein => {
                run_one(&flux::Functional::AdmEinstein, &mut series)?;
            }
            FluxKind::Energy => {
                run_one(&flux::Functional::FourthOrderEnergy, &mut series)?;
            }
            FluxKind::Gj => {
                run_one(&flux::Functional::GjFlux, &mut series)?;
            }
            FluxKind::Charge => {
                let v = parse(&a.charge_v)?;
                run_one(&flux::Functional::Charge(v), &mut series)?;
            }
            FluxKind::Thm45 => {
                let e = run_one(&flux::Functional::FourthOrderEnergy, &mut series)?;
                let g = run_one(&flux::Functional::GjFlux, &mut series)?;
                ratio = energy_ratio(n, &series[e], &series[g]);
            }
        }
    }
    for s in &series {
        for w in &s.warnings {
            eprintln!("warning: {}: {w}", s.functional);
        }
    }
    let breach = ratio.as_ref().and_then(|r| match r.relative_error {
        Some(err) if err > a.tol => Some(format!(
            "energy ratio {:.6e} differs from {:.6e} by {:.3e} relative (tolerance {:.1e})",
            r.ratio.unwrap_or(f64::NAN),
            r.expected,
            err,
            a.tol
        )),
        _ => None,
    });
    let mut csv = String::from("functional,radius,value,fit\n");
    for s in &series {
        csv.push_str(&s.to_csv());
    }
    let entries: Vec<Value> = series
        .iter()
        .map(|s| json!({ "series": s, "limit": s.limit(), "diverged": s.diverged() }))
        .collect();
    Ok(Report {
        result: json!({
            "dim": n,
            "quad_degree": degree,
            "radii": { "R0": r0, "count": k },
            "functionals": entries,
            "energy_ratio": ratio,
        }),
        csv,
        breach,
    })
}

fn sup_abs(t: &SymJets) -> f64 {
    t.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn decay(a: &DecayArgs) -> Result<Report> {
    let spec = a.common.metric.load()?;
    let n = spec.dim();
    let (r0, k) = a.radii.resolve(&spec)?;
    let grid = AnnulusGrid::dyadic(n, r0, 3, k, a.samples, a.common.seed)?;
    let norms = a
        .norms
        .iter()
        .map(|s| parse_norm(s))
        .collect::<Result<Vec<_>>>()?;
    let report = match a.field {
        Field::Metric => estimate_decay("metric", metric_deviation(&spec), &grid, &norms)?,
        Field::J => estimate_decay("J", j_magnitude(&spec), &grid, &norms)?,
        Field::Q => estimate_decay("Q", q_magnitude(&spec), &grid, &norms)?,
        Field::Gj => estimate_decay("G_J", gj_magnitude(&spec), &grid, &norms)?,
        Field::Scalar => estimate_decay("R", scalar_magnitude(&spec), &grid, &norms)?,
    };
    let mut result = json!({ "dim": n, "radii": { "R0": r0, "count": k }, "samples": a.samples.max(64), "report": report });
    if a.yamabe {
        let probes = bump_battery(&grid)
            .iter()
            .map(|t| {
                let Trial::Bump { center, width } = t else { unreachable!() };
                Ok(json!({ "center": center, "width": width, "quotient": yamabe_quotient(&spec, t, &grid)? }))
            })
            .collect::<Result<Vec<_>>>()?;
        let min = probes
            .iter()
            .filter_map(|p| p["quotient"].as_f64())
            .fold(f64::INFINITY, f64::min);
        result["yamabe"] =
            json!({ "min_quotient": min, "all_positive": min > 0.0, "bumps": probes });
    }
    if let Some(r_max) = a.harmonic {
        result["harmonic"] =
            serde_json::to_value(harmonic_radial_coordinate(&spec, r_max)?).map_err(Error::from)?;
    }
    Ok(Report {
        csv: format!("field,annulus,radius,sup\n{}", report.to_csv()),
        result,
        breach: None,
    })
}

fn gj_magnitude(spec: &MetricSpec) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x| Ok(sup_abs(FourthOrderFrame::evaluate(spec, x, 4)?.g_j()))
}

fn scalar_magnitude(spec: &MetricSpec) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x| {
        Ok(CurvatureFrame::new(MetricJetFrame::new(spec, x, 2)?)?
            .scalar()
            .value()
            .abs())
    }
}

fn linearize(a: &LinearizeArgs) -> Result<Report> {
    let spec = a.common.metric.load()?;
    let n = spec.dim();
    let mut points = a.points.load(n)?;
    if points.is_empty() {
        let r0 = spec.inner_radius();
        points.push(
            (0..n)
                .map(|i| if i == 0 { 1.5 * r0 } else { 0.5 * r0 })
                .collect(),
        );
    }
    if a.eps.len() < 2 || a.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Invalid(
            "--eps needs at least two positive values".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut csv = String::from("point,eps,remainder\n");
    let mut breach = None;
    for (i, p) in points.iter().enumerate() {
        let h = perturbation(&MetricJetFrame::new(&spec, p, 4)?);
        let r = remainder_slope(&h, p, &a.eps)?;
        for (e, v) in r.eps.iter().zip(&r.remainder) {
            csv.push_str(&format!("{i},{e:.6e},{v:.17e}\n"));
        }
        let slope = r.fit.map(|f| f.slope);
        // an identically zero remainder is exact linearity
        let exact = r.remainder.iter().all(|v| *v == 0.0);
        let passed = exact || slope.is_some_and(|s| s >= a.tol);
        if !passed && breach.is_none() {
            breach = Some(format!(
                "remainder slope {} below {} at {p:?}",
                slope.map_or("undefined".to_string(), |s| format!("{s:.4}")),
                a.tol
            ));
        }
        rows.push(json!({ "point": p, "slope": slope, "passed": passed, "detail": r }));
    }
    Ok(Report {
        result: json!({ "dim": n, "points": rows }),
        csv,
        breach,
    })
}

fn catalog_listing() -> Report {
    let entries: Vec<Value> = ENTRIES
        .iter()
        .map(|e| json!({ "name": e.name, "args": e.args, "metric": e.metric, "properties": e.properties }))
        .collect();
    let mut csv = String::from("name,args,metric,properties\n");
    for e in &ENTRIES {
        let q = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.name,
            q(e.args),
            q(e.metric),
            q(e.properties)
        ));
    }
    Report {
        result: json!({ "entries": entries }),
        csv,
        breach: None,
    }
}
