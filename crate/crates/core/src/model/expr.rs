//! Arithmetic expressions over parameters and delayed state references.
//!
//! Grammar:
//!
//! ```text
//! expr   := term {("+"|"-") term}
//! term   := factor {("*"|"/") factor}
//! factor := ["-"] base ["^" integer]
//! base   := number | ident | "x" int "@" int | "(" expr ")" | func "(" expr ")"
//! ```

use std::fmt;

use crate::error::{Error, Result, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tan,
    Atan,
}

impl Func {
    const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tan,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tan => "tan",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Tan => x.tan(),
            Func::Atan => x.atan(),
        }
    }
}

/// Expression tree. State references and parameters are resolved to indices;
/// components and slots are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Param(usize),
    State { component: usize, slot: usize },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates with `slots[(slot-1)*dim + component-1]` holding delayed states.
    pub fn eval(&self, slots: &[f64], dim: usize, params: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Param(i) => params[*i],
            Expr::State { component, slot } => slots[(slot - 1) * dim + component - 1],
            Expr::Neg(a) => -a.eval(slots, dim, params),
            Expr::Add(a, b) => a.eval(slots, dim, params) + b.eval(slots, dim, params),
            Expr::Sub(a, b) => a.eval(slots, dim, params) - b.eval(slots, dim, params),
            Expr::Mul(a, b) => a.eval(slots, dim, params) * b.eval(slots, dim, params),
            Expr::Div(a, b) => a.eval(slots, dim, params) / b.eval(slots, dim, params),
            Expr::Pow(a, k) => a.eval(slots, dim, params).powi(*k),
            Expr::Call(f, a) => f.apply(a.eval(slots, dim, params)),
        }
    }

    /// Calls `visit(component, slot)` for every state reference.
    pub fn for_each_state(&self, visit: &mut impl FnMut(usize, usize)) {
        match self {
            Expr::Num(_) | Expr::Param(_) => {}
            Expr::State { component, slot } => visit(*component, *slot),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.for_each_state(visit),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.for_each_state(visit);
                b.for_each_state(visit);
            }
        }
    }

    /// Pretty-printer; the output parses back to the same tree.
    pub fn display<'a>(&'a self, params: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, params }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    params: &'a [String],
}

impl ExprDisplay<'_> {
    fn write(&self, e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let paren = e.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match e {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Param(i) => f.write_str(&self.params[*i])?,
            Expr::State { component, slot } => write!(f, "x{component}@{slot}")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.write(a, 4, f)?;
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                self.write(a, 1, f)?;
                f.write_str(if matches!(e, Expr::Add(..)) {
                    " + "
                } else {
                    " - "
                })?;
                self.write(b, 2, f)?;
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                self.write(a, 2, f)?;
                f.write_str(if matches!(e, Expr::Mul(..)) { "*" } else { "/" })?;
                self.write(b, 3, f)?;
            }
            Expr::Pow(a, k) => {
                self.write(a, 5, f)?;
                write!(f, "^{k}")?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.write(a, 0, f)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, 0, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    State(usize, usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

fn syntax(column: usize, message: impl Into<String>) -> Error {
    Error::Syntax(SyntaxError {
        line: 1,
        column,
        message: message.into(),
    })
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            _src: src,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    /// Returns the next token and its 1-based column.
    fn next(&mut self) -> Result<(Tok, usize)> {
        while matches!(self.peek_char(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
        let col = self.pos + 1;
        let Some(c) = self.peek_char() else {
            return Ok((Tok::End, col));
        };
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok((t, col));
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number(col);
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = self.pos;
            while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            let ident: String = self.chars[start..self.pos].iter().collect();
            if self.peek_char() == Some('@') {
                let comp = ident
                    .strip_prefix('x')
                    .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| syntax(col, format!("`{ident}@` is not a state reference")))?;
                self.pos += 1;
                let s = self.pos;
                while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if s == self.pos {
                    return Err(syntax(self.pos + 1, "expected delay slot number after `@`"));
                }
                let slot: String = self.chars[s..self.pos].iter().collect();
                let slot = slot
                    .parse()
                    .map_err(|_| syntax(s + 1, "delay slot out of range"))?;
                return Ok((Tok::State(comp, slot), col));
            }
            return Ok((Tok::Ident(ident), col));
        }
        Err(syntax(col, format!("unexpected character `{c}`")))
    }

    fn number(&mut self, col: usize) -> Result<(Tok, usize)> {
        let start = self.pos;
        let mut integral = true;
        while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek_char() == Some('.') {
            integral = false;
            self.pos += 1;
            while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek_char(), Some('+' | '-')) {
                self.pos += 1;
            }
            if matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                integral = false;
                while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let v = text
            .parse::<f64>()
            .map_err(|_| syntax(col, format!("malformed number `{text}`")))?;
        Ok((Tok::Num(v, integral), col))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    col: usize,
    params: &'a [String],
}

/// Parses one expression, resolving identifiers against `params`.
///
/// Syntax errors report line 1 and the column within `src`; callers embedding
/// expressions in a larger file relocate them.
pub fn parse_expr(src: &str, params: &[String]) -> Result<Expr> {
    let mut lexer = Lexer::new(src);
    let (tok, col) = lexer.next()?;
    let mut p = Parser {
        lexer,
        tok,
        col,
        params,
    };
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(syntax(p.col, "unexpected trailing input"));
    }
    Ok(e)
}

impl Parser<'_> {
    fn bump(&mut self) -> Result<()> {
        let (t, c) = self.lexer.next()?;
        self.tok = t;
        self.col = c;
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.bump()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.bump()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let negate = if self.tok == Tok::Minus {
            self.bump()?;
            true
        } else {
            false
        };
        let mut e = self.base()?;
        if self.tok == Tok::Caret {
            self.bump()?;
            let neg_exp = if self.tok == Tok::Minus {
                self.bump()?;
                true
            } else {
                false
            };
            let Tok::Num(v, true) = self.tok else {
                return Err(syntax(self.col, "exponent must be an integer literal"));
            };
            if v > i32::MAX as f64 {
                return Err(syntax(self.col, "exponent too large"));
            }
            let k = if neg_exp { -(v as i32) } else { v as i32 };
            self.bump()?;
            e = Expr::Pow(Box::new(e), k);
        }
        Ok(if negate { Expr::Neg(Box::new(e)) } else { e })
    }

    fn base(&mut self) -> Result<Expr> {
        let col = self.col;
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v, _) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::State(component, slot) => {
                self.bump()?;
                Ok(Expr::State { component, slot })
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::LParen {
                        return Err(syntax(self.col, format!("expected `(` after `{name}`")));
                    }
                    self.bump()?;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match self.params.iter().position(|p| *p == name) {
                    Some(i) => Ok(Expr::Param(i)),
                    None => Err(Error::UnknownIdentifier(name)),
                }
            }
            Tok::End => Err(syntax(col, "unexpected end of expression")),
            other => Err(syntax(col, format!("unexpected token {other:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.tok != Tok::RParen {
            return Err(syntax(self.col, "expected `)`"));
        }
        self.bump()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names() -> Vec<String> {
        vec!["p".into(), "tau0".into(), "s0".into()]
    }

    fn ev(src: &str, slots: &[f64], params: &[f64]) -> f64 {
        parse_expr(src, &names()).unwrap().eval(slots, 1, params)
    }

    #[test]
    fn precedence_and_associativity() {
        let p = [2.0, 3.0, 5.0];
        assert_eq!(ev("1 + 2*3", &[], &p), 7.0);
        assert_eq!(ev("10 - 4 - 3", &[], &p), 3.0);
        assert_eq!(ev("16/4/2", &[], &p), 2.0);
        assert_eq!(ev("-p^2", &[], &p), -4.0);
        assert_eq!(ev("(-p)^2", &[], &p), 4.0);
        assert_eq!(ev("2*-p", &[], &p), -4.0);
        assert_eq!(ev("p^-1", &[], &p), 0.5);
        assert_eq!(ev("1.5e1 + .5", &[], &p), 15.5);
        assert!((ev("sin(p*0) + cos(0) + exp(0) + log(1) + sqrt(4)", &[], &p) - 4.0).abs() < 1e-15);
        assert_eq!(ev("s0 - x1@2", &[1.0, 7.0], &p), -2.0);
    }

    #[test]
    fn syntax_errors_carry_columns() {
        let err = parse_expr("1 + * 2", &names()).unwrap_err();
        match err {
            Error::Syntax(e) => assert_eq!(e.column, 5),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            parse_expr("x^1.5", &names()),
            Err(Error::UnknownIdentifier(_)) | Err(Error::Syntax(_))
        ));
        assert!(matches!(
            parse_expr("p^1.5", &names()),
            Err(Error::Syntax(_))
        ));
        assert!(matches!(
            parse_expr("sin p", &names()),
            Err(Error::Syntax(_))
        ));
        assert!(matches!(parse_expr("(p", &names()), Err(Error::Syntax(_))));
        assert!(
            matches!(parse_expr("q + 1", &names()), Err(Error::UnknownIdentifier(n)) if n == "q")
        );
        assert!(matches!(
            parse_expr("y1@2", &names()),
            Err(Error::Syntax(_))
        ));
        assert!(matches!(
            parse_expr("p $ 1", &names()),
            Err(Error::Syntax(_))
        ));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0..100.0f64).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Param),
            (1usize..3, 1usize..4).prop_map(|(component, slot)| Expr::State { component, slot }),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -3i32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
                (inner, 0usize..7).prop_map(|(a, f)| Expr::Call(Func::ALL[f], Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_round_trips(e in arb_expr()) {
            let text = e.display(&names()).to_string();
            let back = parse_expr(&text, &names()).unwrap();
            prop_assert_eq!(back, e, "{}", text);
        }
    }
}
