//! Text grammar for polynomials.
//!
//! Terms are joined by `+`/`-`; a term is a product of numeric literals and
//! variable powers. Parenthesized subexpressions support `+ - * / ^`, where
//! `/` divides by a numeric-valued expression and `^` takes a non-negative
//! integer exponent. Whitespace is insignificant; scientific notation is
//! accepted.

use super::{Monomial, Point, PolyError, Polynomial};

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq)]
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
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> PolyError {
        PolyError::Parse { line: self.line, col: self.col, msg: msg.into() }
    }

    fn next_token(&mut self) -> Result<Spanned, PolyError> {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(b) = self.peek() else {
            return Ok(Spanned { tok: Tok::End, line, col });
        };
        let tok = match b {
            b'+' => {
                self.bump();
                Tok::Plus
            }
            b'-' => {
                self.bump();
                Tok::Minus
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'^' => {
                self.bump();
                Tok::Caret
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while matches!(self.peek(), Some(b'0'..=b'9' | b'.')) {
                    self.bump();
                }
                if matches!(self.peek(), Some(b'e' | b'E')) {
                    let save = (self.pos, self.line, self.col);
                    self.bump();
                    if matches!(self.peek(), Some(b'+' | b'-')) {
                        self.bump();
                    }
                    if matches!(self.peek(), Some(b'0'..=b'9')) {
                        while matches!(self.peek(), Some(b'0'..=b'9')) {
                            self.bump();
                        }
                    } else {
                        (self.pos, self.line, self.col) = save;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text
                    .parse()
                    .map_err(|_| PolyError::Parse { line, col, msg: format!("bad number `{text}`") })?;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')) {
                    self.bump();
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
            }
            other => return Err(self.err(format!("unexpected character `{}`", other as char))),
        };
        Ok(Spanned { tok, line, col })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    cur: Spanned,
    varnames: &'a [String],
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, varnames: &'a [String]) -> Result<Self, PolyError> {
        let mut lexer = Lexer::new(src);
        let cur = lexer.next_token()?;
        Ok(Parser { lexer, cur, varnames })
    }

    fn advance(&mut self) -> Result<(), PolyError> {
        self.cur = self.lexer.next_token()?;
        Ok(())
    }

    fn err_here(&self, msg: impl Into<String>) -> PolyError {
        PolyError::Parse { line: self.cur.line, col: self.cur.col, msg: msg.into() }
    }

    // expr := ['+'|'-'] term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut neg = false;
        loop {
            match self.cur.tok {
                Tok::Plus => self.advance()?,
                Tok::Minus => {
                    neg = !neg;
                    self.advance()?;
                }
                _ => break,
            }
        }
        let mut acc = self.term()?;
        if neg {
            acc = acc.neg();
        }
        loop {
            let sign = match self.cur.tok {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => break,
            };
            self.advance()?;
            let t = self.term()?;
            acc = acc.add(&t.scale(sign)).expect("same nvars");
        }
        Ok(acc)
    }

    // term := factor (('*'|'/') factor)*  — with '/' requiring a constant divisor
    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        loop {
            match self.cur.tok {
                Tok::Star => {
                    self.advance()?;
                    let f = self.factor()?;
                    acc = acc.mul(&f).expect("same nvars");
                }
                Tok::Slash => {
                    let (line, col) = (self.cur.line, self.cur.col);
                    self.advance()?;
                    let f = self.factor()?;
                    if f.degree() > 0 {
                        return Err(PolyError::Parse {
                            line,
                            col,
                            msg: "division is only allowed by a numeric value".into(),
                        });
                    }
                    let d = f.coeff(&Monomial::unit(f.nvars()));
                    if d == 0.0 {
                        return Err(PolyError::Parse { line, col, msg: "division by zero".into() });
                    }
                    acc = acc.scale(1.0 / d);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    // factor := atom ('^' uint)*
    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let mut base = self.atom()?;
        while self.cur.tok == Tok::Caret {
            let (line, col) = (self.cur.line, self.cur.col);
            self.advance()?;
            let e = match self.cur.tok {
                Tok::Num(v) => {
                    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                        return Err(PolyError::Parse {
                            line,
                            col,
                            msg: format!("exponent must be a non-negative integer, got {v}"),
                        });
                    }
                    v as u32
                }
                _ => {
                    return Err(PolyError::Parse { line, col, msg: "expected integer exponent after `^`".into() })
                }
            };
            self.advance()?;
            base = base.pow(e);
        }
        Ok(base)
    }

    // atom := number | var | '(' expr ')' | ('+'|'-') atom
    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        let n = self.varnames.len();
        match self.cur.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Polynomial::constant(n, v))
            }
            Tok::Ident(name) => {
                let idx = self
                    .varnames
                    .iter()
                    .position(|v| v == &name)
                    .ok_or_else(|| self.err_here(format!("unknown variable `{name}`")))?;
                self.advance()?;
                Ok(Polynomial::var(n, idx))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                if self.cur.tok != Tok::RParen {
                    return Err(self.err_here("expected `)`"));
                }
                self.advance()?;
                Ok(inner)
            }
            Tok::Minus => {
                self.advance()?;
                Ok(self.atom()?.neg())
            }
            Tok::Plus => {
                self.advance()?;
                self.atom()
            }
            _ => Err(self.err_here("expected a number, variable, or `(`")),
        }
    }
}

/// Parse a polynomial over the given variable names.
pub fn parse_polynomial(text: &str, varnames: &[String]) -> Result<Polynomial, PolyError> {
    let mut parser = Parser::new(text, varnames)?;
    let p = parser.expr()?;
    if parser.cur.tok != Tok::End {
        return Err(parser.err_here("trailing input after polynomial"));
    }
    Ok(p)
}

/// Deterministic text form; `parse_polynomial(format_polynomial(p), names)` is
/// exact for every finite coefficient. Terms are emitted in descending
/// graded-lex order, coefficients in shortest round-trip notation.
pub fn format_polynomial(p: &Polynomial, varnames: &[String]) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (m, c)) in p.terms().collect::<Vec<_>>().into_iter().rev().enumerate() {
        let mag = c.abs();
        if i == 0 {
            if *c < 0.0 {
                out.push('-');
            }
        } else if *c < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mono = format_monomial(m, varnames);
        match mono {
            None => out.push_str(&format!("{mag:?}")),
            Some(ms) => {
                if mag == 1.0 {
                    out.push_str(&ms);
                } else {
                    out.push_str(&format!("{mag:?}*{ms}"));
                }
            }
        }
    }
    out
}

fn format_monomial(m: &Monomial, varnames: &[String]) -> Option<String> {
    if m.is_unit() {
        return None;
    }
    let mut parts = Vec::new();
    for (i, &e) in m.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        if e == 1 {
            parts.push(varnames[i].clone());
        } else {
            parts.push(format!("{}^{}", varnames[i], e));
        }
    }
    Some(parts.join("*"))
}

/// Evaluate `p(x - c)`-style shifted monomial bases; re-exported for tests.
#[allow(dead_code)]
pub(crate) fn shift_eval(m: &Monomial, x: &Point, c: &Point) -> f64 {
    m.exponents()
        .iter()
        .enumerate()
        .map(|(i, &e)| (x.coords()[i] - c.coords()[i]).powi(e as i32))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn parses_section7_f1() {
        let p = parse_polynomial("-0.05*x1 - 57.9*x2 + 0.00919*x3", &names(3)).unwrap();
        assert_eq!(p.num_terms(), 3);
        assert_eq!(p.coeff(&Monomial::var(3, 0)), -0.05);
        assert_eq!(p.coeff(&Monomial::var(3, 1)), -57.9);
        assert_eq!(p.coeff(&Monomial::var(3, 2)), 0.00919);
    }

    #[test]
    fn parses_zero() {
        let p = parse_polynomial("0", &names(2)).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn parses_section7_w1_expanded() {
        let p = parse_polynomial("(x1 + 0.3)^2 + (x2/20)^2 + (x3/20)^2 - 0.5^2", &names(3)).unwrap();
        let q = parse_polynomial("x1^2 + 0.6*x1 + 0.09 + x2^2/400 + x3^2/400 - 0.25", &names(3)).unwrap();
        let d = p.sub(&q).unwrap();
        assert!(d.max_abs_coeff() < 1e-15, "difference {d:?}");
    }

    #[test]
    fn error_carries_position() {
        let e = parse_polynomial("x1 + $", &names(1)).unwrap_err();
        match e {
            PolyError::Parse { line, col, .. } => {
                assert_eq!(line, 1);
                assert_eq!(col, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_variable() {
        assert!(parse_polynomial("y1", &names(2)).is_err());
    }

    #[test]
    fn rejects_polynomial_division() {
        assert!(parse_polynomial("x1 / x1", &names(1)).is_err());
    }

    #[test]
    fn scientific_notation() {
        let p = parse_polynomial("1.71e3*x1 + 9.19e-3*x2", &names(2)).unwrap();
        assert_eq!(p.coeff(&Monomial::var(2, 0)), 1710.0);
        assert_eq!(p.coeff(&Monomial::var(2, 1)), 0.00919);
    }

    #[test]
    fn format_round_trip_exact() {
        let p = parse_polynomial("-0.05*x1 - 57.9*x2 + 0.00919*x3 + 1e-30*x1*x2", &names(3)).unwrap();
        let s = format_polynomial(&p, &names(3));
        let q = parse_polynomial(&s, &names(3)).unwrap();
        assert_eq!(p, q);
    }
}
