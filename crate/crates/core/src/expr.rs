//! Small expression grammar used by custom scheme and potential configs.
//!
//! Grammar version 1:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'n' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := log | exp | sqrt | abs | sin | cos | asin
//! ```
//!
//! `x` is the point, `n` the branch index inside a parametric family. Affine
//! maps, Möbius maps `(a*x+b)/(c*x+d)`, powers and their compositions are all
//! expressible. Expressions can be differentiated symbolically in `x`.

use std::fmt;

pub const GRAMMAR_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Asin,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "log" | "ln" => Func::Log,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "asin" => Func::Asin,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Asin => "asin",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Log => v.ln(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Asin => v.asin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parse failure with the byte offset into the source expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at column {})", self.message, self.offset + 1)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
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
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else {
            return Err(ParseError {
                offset: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "n" => Ok(Expr::Var(Var::N)),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => {
                        let Some(func) = Func::from_name(&name) else {
                            self.pos -= 1;
                            return self.err(format!("unknown identifier `{name}`"));
                        };
                        if !self.eat_op('(') {
                            return self.err(format!("expected `(` after `{name}`"));
                        }
                        let arg = self.expr()?;
                        if !self.eat_op(')') {
                            return self.err("expected `)`");
                        }
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(Token::Op(c)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of expression"),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            len: src.len(),
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, n: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::N) => n,
            Expr::Neg(a) => -a.eval(x, n),
            Expr::Add(a, b) => a.eval(x, n) + b.eval(x, n),
            Expr::Sub(a, b) => a.eval(x, n) - b.eval(x, n),
            Expr::Mul(a, b) => a.eval(x, n) * b.eval(x, n),
            Expr::Div(a, b) => a.eval(x, n) / b.eval(x, n),
            Expr::Pow(a, b) => {
                let base = a.eval(x, n);
                match b.as_ref() {
                    Expr::Num(k) if k.fract() == 0.0 && k.abs() < 64.0 => base.powi(*k as i32),
                    _ => base.powf(b.eval(x, n)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x, n)),
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// Substitute a value for the family index `n`.
    pub fn bind_n(&self, n: f64) -> Expr {
        match self {
            Expr::Var(Var::N) => Expr::Num(n),
            Expr::Num(_) | Expr::Var(Var::X) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.bind_n(n))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.bind_n(n))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.bind_n(n)), Box::new(b.bind_n(n))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.bind_n(n)), Box::new(b.bind_n(n))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.bind_n(n)), Box::new(b.bind_n(n))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.bind_n(n)), Box::new(b.bind_n(n))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.bind_n(n)), Box::new(b.bind_n(n))),
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let d = match self {
            Num(_) | Var(self::Var::N) => Num(0.0),
            Var(self::Var::X) => Num(1.0),
            Neg(a) => Neg(Box::new(a.derivative())),
            Add(a, b) => Add(Box::new(a.derivative()), Box::new(b.derivative())),
            Sub(a, b) => Sub(Box::new(a.derivative()), Box::new(b.derivative())),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.derivative()), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.derivative()))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.derivative()), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.derivative()))),
                )),
                Box::new(Pow(b.clone(), Box::new(Num(2.0)))),
            ),
            Pow(a, b) if !b.depends_on(self::Var::X) => Mul(
                Box::new(Mul(
                    b.clone(),
                    Box::new(Pow(a.clone(), Box::new(Sub(b.clone(), Box::new(Num(1.0)))))),
                )),
                Box::new(a.derivative()),
            ),
            Pow(a, b) => Mul(
                Box::new(self.clone()),
                Box::new(Add(
                    Box::new(Mul(Box::new(b.derivative()), Box::new(Call(Func::Log, a.clone())))),
                    Box::new(Div(Box::new(Mul(b.clone(), Box::new(a.derivative()))), a.clone())),
                )),
            ),
            Call(f, a) => {
                let inner = a.derivative();
                let outer = match f {
                    Func::Log => Div(Box::new(Num(1.0)), a.clone()),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Sqrt => Div(Box::new(Num(0.5)), Box::new(Call(Func::Sqrt, a.clone()))),
                    Func::Abs => Div(a.clone(), Box::new(Call(Func::Abs, a.clone()))),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Box::new(Call(Func::Sin, a.clone()))),
                    Func::Asin => Div(
                        Box::new(Num(1.0)),
                        Box::new(Call(
                            Func::Sqrt,
                            Box::new(Sub(Box::new(Num(1.0)), Box::new(Pow(a.clone(), Box::new(Num(2.0)))))),
                        )),
                    ),
                };
                Mul(Box::new(outer), Box::new(inner))
            }
        };
        d.simplify()
    }

    /// Constant folding and removal of trivial zeros/ones.
    pub fn simplify(self) -> Expr {
        use Expr::*;
        match self {
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                e => Neg(Box::new(e)),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x + y),
                (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
                (x, y) => Add(Box::new(x), Box::new(y)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x - y),
                (e, Num(z)) if z == 0.0 => e,
                (Num(z), e) if z == 0.0 => Neg(Box::new(e)),
                (x, y) => Sub(Box::new(x), Box::new(y)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x * y),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
                (x, y) => Mul(Box::new(x), Box::new(y)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) if y != 0.0 => Num(x / y),
                (Num(z), _) if z == 0.0 => Num(0.0),
                (e, Num(o)) if o == 1.0 => e,
                (x, y) => Div(Box::new(x), Box::new(y)),
            },
            Pow(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x.powf(y)),
                (_, Num(z)) if z == 0.0 => Num(1.0),
                (e, Num(o)) if o == 1.0 => e,
                (x, y) => Pow(Box::new(x), Box::new(y)),
            },
            Call(f, a) => match a.simplify() {
                Num(v) => Num(f.apply(v)),
                e => Call(f, Box::new(e)),
            },
            e => e,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::N) => write!(f, "n"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
