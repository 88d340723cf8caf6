//! Arithmetic expressions over named variables.
//!
//! Objectives and constraint components are stated in a small infix language:
//! `+`, `-`, `*`, `/`, the calls `max(..)`, `min(..)`, `abs(a)`, `exp(a)`,
//! `pow(a, k)` with a literal integer exponent, numeric literals, and the
//! variables `x1..xn`, `y1..ym`, `z1..zm` plus the reserved accuracy symbol
//! `nu`. Parsed expressions are immutable and safe to share across threads.
//!
//! Evaluation is strict IEEE double arithmetic with no silent non-finite
//! results: division by zero and overflow (including `exp` saturation) are
//! reported as errors instead of propagating `inf`/`NaN`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaryOp {
    Max,
    Min,
}

/// Parsed expression tree.
///
/// Unary minus applied to a numeric literal is folded into a negative
/// constant at parse time, so printing and re-parsing yields a structurally
/// identical tree.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprAst {
    Constant(f64),
    Variable(String),
    Unary(UnaryOp, Box<ExprAst>),
    Binary(BinaryOp, Box<ExprAst>, Box<ExprAst>),
    Nary(NaryOp, Vec<ExprAst>),
    /// Integer power of the base expression.
    Pow(Box<ExprAst>, i32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("exp overflow: result saturates beyond the finite range")]
    ExpOverflow,
    #[error("non-finite result in `{op}`")]
    Overflow { op: &'static str },
}

/// Name-to-value lookup used by [`eval_expr`].
pub trait Bindings {
    fn resolve(&self, name: &str) -> Option<f64>;
}

impl Bindings for std::collections::HashMap<String, f64> {
    fn resolve(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for std::collections::BTreeMap<String, f64> {
    fn resolve(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for [(&str, f64)] {
    fn resolve(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<T: Bindings + ?Sized> Bindings for &T {
    fn resolve(&self, name: &str) -> Option<f64> {
        (**self).resolve(name)
    }
}

/// True for names the grammar accepts as variables: `x<i>`, `y<i>`, `z<i>`
/// with a decimal index, or the reserved `nu`.
pub fn is_variable_name(name: &str) -> bool {
    if name == "nu" {
        return true;
    }
    let mut chars = name.chars();
    matches!(chars.next(), Some('x' | 'y' | 'z'))
        && name.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Token::Slash, i));
                i += 1;
            }
            '(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Token::Comma, i));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    if i >= bytes.len() || !bytes[i].is_ascii_digit() {
                        return Err(ParseError::Syntax {
                            pos: i,
                            msg: "expected digits after decimal point".into(),
                        });
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("invalid number literal `{lit}`"),
                })?;
                if !v.is_finite() {
                    return Err(ParseError::Syntax {
                        pos: start,
                        msg: format!("number literal `{lit}` overflows the finite range"),
                    });
                }
                out.push((Token::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser (recursive descent, usual precedence: */ over +-)
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a (Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<&'a (Token, usize)> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some((t, _)) if t == want => Ok(()),
            Some((_, p)) => Err(ParseError::Syntax {
                pos: *p,
                msg: format!("expected {what}"),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.term()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.factor()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<ExprAst, ParseError> {
        if let Some((Token::Minus, _)) = self.peek() {
            self.bump();
            let inner = self.factor()?;
            // Fold so that "-1.5" and printed negative constants round-trip.
            return Ok(match inner {
                ExprAst::Constant(c) => ExprAst::Constant(-c),
                other => ExprAst::Unary(UnaryOp::Neg, Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<ExprAst, ParseError> {
        match self.bump() {
            Some((Token::Num(v), _)) => Ok(ExprAst::Constant(*v)),
            Some((Token::LParen, _)) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some((Token::Ident(name), p)) => self.ident(name, *p),
            Some((_, p)) => Err(ParseError::Syntax {
                pos: *p,
                msg: "expected a number, variable, call, or `(`".into(),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                msg: "unexpected end of input".into(),
            }),
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<ExprAst, ParseError> {
        let is_call = matches!(self.peek(), Some((Token::LParen, _)));
        match name {
            "max" | "min" | "abs" | "exp" | "pow" if is_call => {
                self.bump();
                let args = self.args()?;
                self.call(name, args, pos)
            }
            _ => {
                if is_variable_name(name) {
                    Ok(ExprAst::Variable(name.to_string()))
                } else {
                    Err(ParseError::UnknownIdentifier {
                        name: name.to_string(),
                        pos,
                    })
                }
            }
        }
    }

    fn args(&mut self) -> Result<Vec<ExprAst>, ParseError> {
        let mut args = vec![self.expr()?];
        loop {
            match self.bump() {
                Some((Token::Comma, _)) => args.push(self.expr()?),
                Some((Token::RParen, _)) => return Ok(args),
                Some((_, p)) => {
                    return Err(ParseError::Syntax {
                        pos: *p,
                        msg: "expected `,` or `)` in argument list".into(),
                    })
                }
                None => {
                    return Err(ParseError::Syntax {
                        pos: self.end,
                        msg: "unterminated argument list".into(),
                    })
                }
            }
        }
    }

    fn call(&mut self, name: &str, args: Vec<ExprAst>, pos: usize) -> Result<ExprAst, ParseError> {
        let arity_err = |msg: &str| ParseError::Syntax {
            pos,
            msg: msg.to_string(),
        };
        match name {
            "max" | "min" => {
                if args.len() < 2 {
                    return Err(arity_err("`max`/`min` take at least two arguments"));
                }
                let op = if name == "max" {
                    NaryOp::Max
                } else {
                    NaryOp::Min
                };
                Ok(ExprAst::Nary(op, args))
            }
            "abs" | "exp" => {
                if args.len() != 1 {
                    return Err(arity_err("`abs`/`exp` take exactly one argument"));
                }
                let op = if name == "abs" {
                    UnaryOp::Abs
                } else {
                    UnaryOp::Exp
                };
                Ok(ExprAst::Unary(
                    op,
                    Box::new(args.into_iter().next().unwrap()),
                ))
            }
            "pow" => {
                if args.len() != 2 {
                    return Err(arity_err("`pow` takes exactly two arguments"));
                }
                let mut it = args.into_iter();
                let base = it.next().unwrap();
                let exp = match it.next().unwrap() {
                    ExprAst::Constant(c) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => {
                        c as i32
                    }
                    _ => return Err(arity_err("`pow` exponent must be an integer literal")),
                };
                Ok(ExprAst::Pow(Box::new(base), exp))
            }
            _ => unreachable!("call() only sees known function names"),
        }
    }
}

/// Parse an infix expression.
pub fn parse_expr(text: &str) -> Result<ExprAst, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    };
    let ast = parser.expr()?;
    match parser.peek() {
        None => Ok(ast),
        Some((_, p)) => Err(ParseError::Syntax {
            pos: *p,
            msg: "unexpected trailing input".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn finite(v: f64, op: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Overflow { op })
    }
}

/// Evaluate `ast` with every free variable bound to a finite real.
pub fn eval_expr<B: Bindings + ?Sized>(ast: &ExprAst, bindings: &B) -> Result<f64, EvalError> {
    match ast {
        ExprAst::Constant(c) => finite(*c, "constant"),
        ExprAst::Variable(name) => bindings
            .resolve(name)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone()))
            .and_then(|v| finite(v, "binding")),
        ExprAst::Unary(op, a) => {
            let v = eval_expr(a, bindings)?;
            match op {
                UnaryOp::Neg => Ok(-v),
                UnaryOp::Abs => Ok(v.abs()),
                UnaryOp::Exp => {
                    let e = v.exp();
                    if e.is_finite() {
                        Ok(e)
                    } else {
                        Err(EvalError::ExpOverflow)
                    }
                }
            }
        }
        ExprAst::Binary(op, a, b) => {
            let va = eval_expr(a, bindings)?;
            let vb = eval_expr(b, bindings)?;
            match op {
                BinaryOp::Add => finite(va + vb, "+"),
                BinaryOp::Sub => finite(va - vb, "-"),
                BinaryOp::Mul => finite(va * vb, "*"),
                BinaryOp::Div => {
                    if vb == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        finite(va / vb, "/")
                    }
                }
            }
        }
        ExprAst::Nary(op, args) => {
            let mut acc = eval_expr(&args[0], bindings)?;
            for a in &args[1..] {
                let v = eval_expr(a, bindings)?;
                acc = match op {
                    NaryOp::Max => acc.max(v),
                    NaryOp::Min => acc.min(v),
                };
            }
            Ok(acc)
        }
        ExprAst::Pow(base, k) => {
            let v = eval_expr(base, bindings)?;
            finite(v.powi(*k), "pow")
        }
    }
}

/// Collect the exact set of variable names appearing in `ast`.
pub fn free_vars(ast: &ExprAst) -> BTreeSet<String> {
    fn walk(ast: &ExprAst, out: &mut BTreeSet<String>) {
        match ast {
            ExprAst::Constant(_) => {}
            ExprAst::Variable(name) => {
                out.insert(name.clone());
            }
            ExprAst::Unary(_, a) => walk(a, out),
            ExprAst::Binary(_, a, b) => {
                walk(a, out);
                walk(b, out);
            }
            ExprAst::Nary(_, args) => {
                for a in args {
                    walk(a, out);
                }
            }
            ExprAst::Pow(base, _) => walk(base, out),
        }
    }
    let mut out = BTreeSet::new();
    walk(ast, &mut out);
    out
}

/// Replace every occurrence of `name` by the constant `value`.
pub fn substitute(ast: &ExprAst, name: &str, value: f64) -> ExprAst {
    match ast {
        ExprAst::Constant(_) => ast.clone(),
        ExprAst::Variable(n) => {
            if n == name {
                ExprAst::Constant(value)
            } else {
                ast.clone()
            }
        }
        ExprAst::Unary(op, a) => ExprAst::Unary(*op, Box::new(substitute(a, name, value))),
        ExprAst::Binary(op, a, b) => ExprAst::Binary(
            *op,
            Box::new(substitute(a, name, value)),
            Box::new(substitute(b, name, value)),
        ),
        ExprAst::Nary(op, args) => ExprAst::Nary(
            *op,
            args.iter().map(|a| substitute(a, name, value)).collect(),
        ),
        ExprAst::Pow(base, k) => ExprAst::Pow(Box::new(substitute(base, name, value)), *k),
    }
}

// Precedence levels used by the printer: additive 1, multiplicative 2,
// unary minus 3, atoms 4.
fn precedence(ast: &ExprAst) -> u8 {
    match ast {
        ExprAst::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        ExprAst::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        ExprAst::Unary(UnaryOp::Neg, _) => 3,
        ExprAst::Constant(c) if *c < 0.0 => 3,
        _ => 4,
    }
}

fn fmt_prec(ast: &ExprAst, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = precedence(ast);
    if prec < min {
        write!(f, "(")?;
    }
    match ast {
        ExprAst::Constant(c) => write!(f, "{c}")?,
        ExprAst::Variable(name) => write!(f, "{name}")?,
        ExprAst::Unary(UnaryOp::Neg, a) => {
            write!(f, "-")?;
            fmt_prec(a, 3, f)?;
        }
        ExprAst::Unary(UnaryOp::Abs, a) => {
            write!(f, "abs(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
        ExprAst::Unary(UnaryOp::Exp, a) => {
            write!(f, "exp(")?;
            fmt_prec(a, 0, f)?;
            write!(f, ")")?;
        }
        ExprAst::Binary(op, a, b) => {
            // Left-associative, so the right child is printed one level up:
            // `a + (b + c)` and `a * (b / c)` keep the tree shape on reparse.
            let (sym, rhs_min) = match op {
                BinaryOp::Add => ("+", 2),
                BinaryOp::Sub => ("-", 2),
                BinaryOp::Mul => ("*", 3),
                BinaryOp::Div => ("/", 3),
            };
            fmt_prec(a, prec, f)?;
            write!(f, " {sym} ")?;
            fmt_prec(b, rhs_min, f)?;
        }
        ExprAst::Nary(op, args) => {
            write!(f, "{}(", if *op == NaryOp::Max { "max" } else { "min" })?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_prec(a, 0, f)?;
            }
            write!(f, ")")?;
        }
        ExprAst::Pow(base, k) => {
            write!(f, "pow(")?;
            fmt_prec(base, 0, f)?;
            write!(f, ", {k})")?;
        }
    }
    if prec < min {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn bind(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn parses_upper_objective() {
        let ast = parse_expr("(y1 - 1/2) * x1").unwrap();
        let expected = ExprAst::Binary(
            BinaryOp::Mul,
            Box::new(ExprAst::Binary(
                BinaryOp::Sub,
                Box::new(ExprAst::Variable("y1".into())),
                Box::new(ExprAst::Binary(
                    BinaryOp::Div,
                    Box::new(ExprAst::Constant(1.0)),
                    Box::new(ExprAst::Constant(2.0)),
                )),
            )),
            Box::new(ExprAst::Variable("x1".into())),
        );
        assert_eq!(ast, expected);
    }

    #[test]
    fn parses_constant_zero() {
        assert_eq!(parse_expr("0").unwrap(), ExprAst::Constant(0.0));
    }

    #[test]
    fn parses_min_exp_composition() {
        let ast = parse_expr("min(y1 + 1, exp(-y1))").unwrap();
        let expected = ExprAst::Nary(
            NaryOp::Min,
            vec![
                ExprAst::Binary(
                    BinaryOp::Add,
                    Box::new(ExprAst::Variable("y1".into())),
                    Box::new(ExprAst::Constant(1.0)),
                ),
                ExprAst::Unary(
                    UnaryOp::Exp,
                    Box::new(ExprAst::Unary(
                        UnaryOp::Neg,
                        Box::new(ExprAst::Variable("y1".into())),
                    )),
                ),
            ],
        );
        assert_eq!(ast, expected);
    }

    #[test]
    fn eval_matches_hand_computation() {
        let f = parse_expr("(y1 - 1/2) * x1").unwrap();
        let v = eval_expr(&f, &bind(&[("x1", 1.0), ("y1", 1.0)])).unwrap();
        assert_eq!(v, 0.5);

        let zero = parse_expr("x1 - x1").unwrap();
        assert_eq!(eval_expr(&zero, &bind(&[("x1", 0.0)])).unwrap(), 0.0);

        let shifted = parse_expr("y1 - 1 + 1/nu").unwrap();
        let v = eval_expr(&shifted, &bind(&[("y1", 1.0), ("nu", 4.0)])).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn precedence_and_associativity() {
        let b = bind(&[]);
        assert_eq!(
            eval_expr(&parse_expr("2 + 3 * 4").unwrap(), &b).unwrap(),
            14.0
        );
        assert_eq!(
            eval_expr(&parse_expr("(2 + 3) * 4").unwrap(), &b).unwrap(),
            20.0
        );
        assert_eq!(
            eval_expr(&parse_expr("2 - 3 - 4").unwrap(), &b).unwrap(),
            -5.0
        );
        assert_eq!(
            eval_expr(&parse_expr("12 / 4 / 3").unwrap(), &b).unwrap(),
            1.0
        );
        assert_eq!(
            eval_expr(&parse_expr("pow(2, -1)").unwrap(), &b).unwrap(),
            0.5
        );
        assert_eq!(
            eval_expr(&parse_expr("pow(x1, 3)").unwrap(), &bind(&[("x1", 2.0)])).unwrap(),
            8.0
        );
    }

    #[test]
    fn free_vars_exact() {
        let names = |s: &str| {
            free_vars(&parse_expr(s).unwrap())
                .into_iter()
                .collect::<Vec<_>>()
        };
        assert_eq!(names("(y1 - 1/2) * x1"), vec!["x1", "y1"]);
        assert_eq!(names("3"), Vec::<String>::new());
        assert_eq!(names("z1 - 1 + 1/nu"), vec!["nu", "z1"]);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_expr("x1 + ") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_expr("x1 + foo") {
            Err(ParseError::UnknownIdentifier { name, pos }) => {
                assert_eq!(name, "foo");
                assert_eq!(pos, 5);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
        assert!(parse_expr("max(x1)").is_err());
        assert!(parse_expr("pow(x1, y1)").is_err());
        assert!(parse_expr("x1 x2").is_err());
    }

    #[test]
    fn no_silent_nonfinite_values() {
        assert!(matches!(parse_expr("1e999"), Err(ParseError::Syntax { .. })));
        assert_eq!(
            eval_expr(&ExprAst::Constant(f64::NAN), &bind(&[])),
            Err(EvalError::Overflow { op: "constant" })
        );
        assert_eq!(
            eval_expr(&parse_expr("x1").unwrap(), &bind(&[("x1", f64::INFINITY)])),
            Err(EvalError::Overflow { op: "binding" })
        );
    }

    #[test]
    fn eval_errors() {
        let b = bind(&[("x1", 1.0)]);
        assert_eq!(
            eval_expr(&parse_expr("y1").unwrap(), &b),
            Err(EvalError::UnboundVariable("y1".into()))
        );
        assert_eq!(
            eval_expr(&parse_expr("x1 / (x1 - 1)").unwrap(), &b),
            Err(EvalError::DivisionByZero)
        );
        assert_eq!(
            eval_expr(&parse_expr("exp(1000)").unwrap(), &b),
            Err(EvalError::ExpOverflow)
        );
        assert!(matches!(
            eval_expr(&parse_expr("pow(x1 * 1e200, 3)").unwrap(), &b),
            Err(EvalError::Overflow { .. })
        ));
    }

    #[test]
    fn substitute_nu_materializes() {
        let ast = parse_expr("y1 - 1 + 1/nu").unwrap();
        let at4 = substitute(&ast, "nu", 4.0);
        assert!(free_vars(&at4).iter().all(|n| n != "nu"));
        let v = eval_expr(&at4, &bind(&[("y1", 1.0)])).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn print_parse_round_trip_samples() {
        for text in [
            "(y1 - 1/2) * x1",
            "min(y1 + 1, exp(-y1))",
            "max(x1, y1, z1, nu)",
            "-x1 * (y1 - z2) / 3",
            "pow(x1 + 1, -2) - abs(y1)",
            "1 - (2 - 3)",
            "x1 / (y1 / z1)",
            "2 * -1.5",
        ] {
            let ast = parse_expr(text).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_expr(&printed)
                .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
            assert_eq!(
                reparsed, ast,
                "round trip failed for `{text}` -> `{printed}`"
            );
        }
    }
}
