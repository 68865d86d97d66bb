use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sqrt" => Some(Func::Sqrt),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }
}

/// Expression tree for metric components and scalar fields.
///
/// Variables are 0-based internally (`x1` is `Var(0)`). `Radius` is the
/// Euclidean norm of the point and is expanded only at evaluation time, so
/// the same tree works in any dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Radius,
    Param(String),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
}

impl Expr {
    pub fn is_zero_const(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Highest variable index referenced (1-based), 0 if none.
    pub fn max_variable(&self) -> usize {
        match self {
            Expr::Var(i) => i + 1,
            Expr::Const(_) | Expr::Radius | Expr::Param(_) => 0,
            Expr::Neg(e) | Expr::Func(_, e) | Expr::Pow(e, _) => e.max_variable(),
            Expr::Binary(_, a, b) => a.max_variable().max(b.max_variable()),
        }
    }

    pub fn params(&self, out: &mut Vec<String>) {
        match self {
            Expr::Param(p) => {
                if !out.contains(p) {
                    out.push(p.clone());
                }
            }
            Expr::Const(_) | Expr::Var(_) | Expr::Radius => {}
            Expr::Neg(e) | Expr::Func(_, e) | Expr::Pow(e, _) => e.params(out),
            Expr::Binary(_, a, b) => {
                a.params(out);
                b.params(out);
            }
        }
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, point: &[f64], params: &BTreeMap<String, f64>) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *point.get(*i).ok_or(Error::VariableOutOfRange {
                index: i + 1,
                dim: point.len(),
            })?,
            Expr::Radius => point.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Expr::Param(p) => *params
                .get(p)
                .ok_or_else(|| Error::UnknownParameter(p.clone()))?,
            Expr::Neg(e) => -e.eval(point, params)?,
            Expr::Func(f, e) => {
                let v = e.eval(point, params)?;
                match f {
                    Func::Sqrt if v < 0.0 => {
                        return Err(Error::Domain {
                            op: "sqrt",
                            value: v,
                        })
                    }
                    Func::Log if v <= 0.0 => {
                        return Err(Error::Domain {
                            op: "log",
                            value: v,
                        })
                    }
                    Func::Sqrt => v.sqrt(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                }
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(point, params)?, b.eval(point, params)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(Error::Domain {
                                op: "division",
                                value: y,
                            });
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(e, p) => {
                let v = e.eval(point, params)?;
                if p.fract() != 0.0 && v <= 0.0 {
                    return Err(Error::Domain {
                        op: "pow",
                        value: v,
                    });
                }
                if v == 0.0 && *p < 0.0 {
                    return Err(Error::Domain {
                        op: "pow",
                        value: v,
                    });
                }
                v.powf(*p)
            }
        })
    }

    /// Jet of the expression at `point`, carrying all partials up to `order`.
    pub fn eval_jet(
        &self,
        point: &[f64],
        params: &BTreeMap<String, f64>,
        order: usize,
    ) -> Result<Jet> {
        let mut ctx = JetContext::new(point, params, order)?;
        ctx.eval(self)
    }
}

/// Shared state for evaluating several expressions at one point.
pub struct JetContext<'a> {
    point: &'a [f64],
    params: &'a BTreeMap<String, f64>,
    order: usize,
    radius: Option<Jet>,
}

impl<'a> JetContext<'a> {
    pub fn new(point: &'a [f64], params: &'a BTreeMap<String, f64>, order: usize) -> Result<Self> {
        if point.is_empty() || point.len() > crate::jet::MAX_DIM {
            return Err(Error::Dimension(point.len()));
        }
        if order > crate::jet::MAX_ORDER {
            return Err(Error::OrderTooHigh {
                requested: order,
                max: crate::jet::MAX_ORDER,
            });
        }
        if let Some(i) = point.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("coordinate x{}", i + 1),
                point: point.to_vec(),
            });
        }
        Ok(JetContext {
            point,
            params,
            order,
            radius: None,
        })
    }

    fn dim(&self) -> usize {
        self.point.len()
    }

    fn radius(&mut self) -> Result<Jet> {
        if let Some(r) = &self.radius {
            return Ok(r.clone());
        }
        let n = self.dim();
        let mut sq = Jet::zero(n, self.order);
        for i in 0..n {
            let x = Jet::variable(n, self.order, i, self.point[i]);
            sq.fma(&x, &x, 1.0);
        }
        let r = sq.sqrt()?;
        self.radius = Some(r.clone());
        Ok(r)
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Jet> {
        let (n, k) = (self.dim(), self.order);
        Ok(match e {
            Expr::Const(c) => Jet::constant(n, k, *c),
            Expr::Var(i) => {
                if *i >= n {
                    return Err(Error::VariableOutOfRange {
                        index: i + 1,
                        dim: n,
                    });
                }
                Jet::variable(n, k, *i, self.point[*i])
            }
            Expr::Radius => self.radius()?,
            Expr::Param(p) => {
                let v = *self
                    .params
                    .get(p)
                    .ok_or_else(|| Error::UnknownParameter(p.clone()))?;
                Jet::constant(n, k, v)
            }
            Expr::Neg(a) => -&self.eval(a)?,
            Expr::Func(f, a) => {
                let j = self.eval(a)?;
                match f {
                    Func::Sqrt => j.sqrt()?,
                    Func::Exp => j.exp(),
                    Func::Log => j.ln()?,
                }
            }
            Expr::Binary(op, a, b) => {
                // constants on either side avoid a full product
                match (op, a.as_ref(), b.as_ref()) {
                    (BinOp::Mul, Expr::Const(c), other) | (BinOp::Mul, other, Expr::Const(c)) => {
                        self.eval(other)?.scale(*c)
                    }
                    (BinOp::Add, Expr::Const(c), other) | (BinOp::Add, other, Expr::Const(c)) => {
                        self.eval(other)?.add_scalar(*c)
                    }
                    _ => {
                        let x = self.eval(a)?;
                        let y = self.eval(b)?;
                        match op {
                            BinOp::Add => &x + &y,
                            BinOp::Sub => &x - &y,
                            BinOp::Mul => &x * &y,
                            BinOp::Div => x.try_div(&y)?,
                        }
                    }
                }
            }
            Expr::Pow(a, p) => self.eval(a)?.powf(*p)?,
        })
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        // only reachable for hand-built trees; keep it reparsable
        write!(f, "(0 - {:?})", -c)
    } else {
        write!(f, "{:?}", c)
    }
}

/// Pretty-printing emits the minimum parentheses needed for the text to
/// parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if prec(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => fmt_number(f, *c),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Radius => write!(f, "r"),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, 3)
            }
            Expr::Func(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                };
                child(f, a, p)?;
                write!(f, " {sym} ")?;
                // left associative: right operand of equal precedence needs parens
                child(f, b, p + 1)
            }
            Expr::Pow(e, p) => {
                child(f, e, 5)?;
                if *p < 0.0 {
                    write!(f, "^(-{:?})", -p)
                } else {
                    write!(f, "^{:?}", p)
                }
            }
        }
    }
}
