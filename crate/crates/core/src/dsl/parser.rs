//! Recursive-descent parser for the metric expression language.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" exponent)?
//! exponent:= number | "-" number | "(" constant-expr ")"
//! primary := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! Identifiers `x1`..`x8` are coordinates, `r` is the Euclidean radius,
//! `sqrt`/`exp`/`log` are functions and anything else is a parameter.

use std::collections::BTreeMap;

use super::expr::{BinOp, Expr, Func};
use crate::error::{Error, Result};
use crate::jet::MAX_DIM;

const MAX_DEPTH: usize = 200;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token {
                tok,
                line: l0,
                col: c0,
            });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                line: l0,
                col: c0,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                line: l0,
                col: c0,
            });
            col += i - start;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token {
                tok: Tok::Ident(text),
                line: l0,
                col: c0,
            });
            col += i - start;
            continue;
        }
        return Err(Error::Parse {
            line: l0,
            col: c0,
            msg: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, t: &Token, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let t = self.peek().clone();
            return self.err(&t, "expression nested too deeply");
        }
        Ok(())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let t = self.next();
        if t.tok == want {
            Ok(())
        } else {
            self.err(&t, format!("expected {what}, found {}", describe(&t.tok)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek().tok == Tok::Minus {
            self.next();
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.next();
        let t = self.next();
        let exponent = match t.tok {
            Tok::Num(v) => v,
            Tok::Minus => match self.next().tok {
                Tok::Num(v) => -v,
                _ => return self.err(&t, "exponent must be a numeric constant"),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                match fold_constant(&e) {
                    Some(v) if v.is_finite() => v,
                    _ => return self.err(&t, "exponent must be a numeric constant"),
                }
            }
            _ => return self.err(&t, "exponent must be a numeric constant"),
        };
        if self.peek().tok == Tok::Caret {
            let t = self.peek().clone();
            return self.err(&t, "chained `^` is ambiguous; add parentheses");
        }
        Ok(Expr::Pow(Box::new(base), exponent))
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(ref name) => {
                if self.peek().tok == Tok::LParen {
                    return self.call(name, &t);
                }
                Ok(ident(name))
            }
            _ => self.err(&t, format!("expected a value, found {}", describe(&t.tok))),
        }
    }

    fn call(&mut self, name: &str, at: &Token) -> Result<Expr> {
        let Some(func) = Func::from_name(name) else {
            return Err(Error::UnknownIdentifier {
                name: name.to_string(),
                line: at.line,
                col: at.col,
            });
        };
        self.next(); // (
        if self.peek().tok == Tok::RParen {
            return Err(Error::Arity {
                name: name.to_string(),
                expected: 1,
                found: 0,
                line: at.line,
                col: at.col,
            });
        }
        let arg = self.expr()?;
        let mut extra = 0;
        while self.peek().tok == Tok::Comma {
            self.next();
            self.expr()?;
            extra += 1;
        }
        if extra > 0 {
            return Err(Error::Arity {
                name: name.to_string(),
                expected: 1,
                found: 1 + extra,
                line: at.line,
                col: at.col,
            });
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Expr::Func(func, Box::new(arg)))
    }
}

fn ident(name: &str) -> Expr {
    if name == "r" {
        return Expr::Radius;
    }
    if let Some(rest) = name.strip_prefix('x') {
        if let Ok(i) = rest.parse::<usize>() {
            if (1..=MAX_DIM).contains(&i) && !rest.starts_with('0') {
                return Expr::Var(i - 1);
            }
        }
    }
    Expr::Param(name.to_string())
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

fn fold_constant(e: &Expr) -> Option<f64> {
    e.eval(&[], &BTreeMap::new()).ok().filter(|_| {
        let mut ps = Vec::new();
        e.params(&mut ps);
        ps.is_empty() && e.max_variable() == 0 && !contains_radius(e)
    })
}

fn contains_radius(e: &Expr) -> bool {
    match e {
        Expr::Radius => true,
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => false,
        Expr::Neg(a) | Expr::Func(_, a) | Expr::Pow(a, _) => contains_radius(a),
        Expr::Binary(_, a, b) => contains_radius(a) || contains_radius(b),
    }
}

/// Parses one expression.
pub fn parse(src: &str) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: "empty expression".into(),
        });
    }
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return p.err(
            &t,
            format!("unexpected {} after expression", describe(&t.tok)),
        );
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: f64) -> Box<Expr> {
        Box::new(Expr::Const(v))
    }

    #[test]
    fn schwarzschild_lapse_shape() {
        let e = parse("1 + 2*m/r").unwrap();
        let want = Expr::Binary(
            BinOp::Add,
            c(1.0),
            Box::new(Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Binary(
                    BinOp::Mul,
                    c(2.0),
                    Box::new(Expr::Param("m".into())),
                )),
                Box::new(Expr::Radius),
            )),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn power_of_group() {
        let e = parse("(1 + m/(2*r))^4").unwrap();
        assert!(matches!(e, Expr::Pow(_, p) if p == 4.0));
    }

    #[test]
    fn arithmetic_value() {
        let e = parse("x1*x2/r^2").unwrap();
        let v = e.eval(&[3.0, 4.0], &BTreeMap::new()).unwrap();
        assert!((v - 12.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        // ^ binds tighter than unary minus
        assert_eq!(
            parse("-x1^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2.0)))
        );
        let v = parse("8 - 2 - 1")
            .unwrap()
            .eval(&[], &BTreeMap::new())
            .unwrap();
        assert_eq!(v, 5.0);
        let v = parse("8 / 2 / 2")
            .unwrap()
            .eval(&[], &BTreeMap::new())
            .unwrap();
        assert_eq!(v, 2.0);
        let v = parse("2 + 3 * 4")
            .unwrap()
            .eval(&[], &BTreeMap::new())
            .unwrap();
        assert_eq!(v, 14.0);
        assert_eq!(
            parse("r^(-3)").unwrap(),
            Expr::Pow(Box::new(Expr::Radius), -3.0)
        );
        assert_eq!(
            parse("r^-1.5").unwrap(),
            Expr::Pow(Box::new(Expr::Radius), -1.5)
        );
        assert_eq!(
            parse("r^(4/3)").unwrap(),
            Expr::Pow(Box::new(Expr::Radius), 4.0 / 3.0)
        );
    }

    #[test]
    fn errors_carry_positions() {
        match parse("1 +\n  * 2") {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("sin(x1)"),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("sqrt(x1, x2)"),
            Err(Error::Arity { found: 2, .. })
        ));
        assert!(matches!(parse("exp()"), Err(Error::Arity { found: 0, .. })));
        assert!(matches!(parse("r^m"), Err(Error::Parse { .. })));
        assert!(matches!(parse("r^2^3"), Err(Error::Parse { .. })));
        assert!(matches!(parse("   "), Err(Error::Parse { .. })));
        assert!(matches!(parse("(1 + 2"), Err(Error::Parse { .. })));
        assert!(matches!(parse("1 $ 2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = "(".repeat(10_000) + "1" + &")".repeat(10_000);
        assert!(parse(&src).is_err());
        let src = "-".repeat(10_000) + "1";
        assert!(parse(&src).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Const),
            (0usize..4).prop_map(Expr::Var),
            Just(Expr::Radius),
            "[a-w][a-z0-9_]{0,3}"
                .prop_filter("reserved", |s| { Func::from_name(s).is_none() && s != "r" })
                .prop_map(Expr::Param),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    inner.clone(),
                    prop_oneof![Just(Func::Sqrt), Just(Func::Exp), Just(Func::Log)]
                )
                    .prop_map(|(e, f)| Expr::Func(f, Box::new(e))),
                (
                    inner.clone(),
                    inner.clone(),
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div)
                    ]
                )
                    .prop_map(|(a, b, op)| Expr::Binary(
                        op,
                        Box::new(a),
                        Box::new(b)
                    )),
                (inner, -6.0f64..6.0).prop_map(|(e, p)| Expr::Pow(Box::new(e), p)),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let text = e.to_string();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &e, "text: {}", text);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn random_token_streams_never_panic(
            toks in proptest::collection::vec(
                prop_oneof![
                    Just("+"), Just("-"), Just("*"), Just("/"), Just("^"), Just("("), Just(")"),
                    Just(","), Just("r"), Just("x1"), Just("x9"), Just("m"), Just("sqrt"),
                    Just("exp"), Just("foo"), Just("2"), Just("0.5"), Just("1e-3"), Just("@"),
                    Just("\n"), Just(" "), Just("1e"), Just(".")
                ],
                0..40,
            )
        ) {
            let src: String = toks.concat();
            let _ = parse(&src);
        }
    }
}
