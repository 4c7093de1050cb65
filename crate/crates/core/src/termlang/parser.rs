//! Text grammar for nonlinearities.
//!
//! ```text
//! input  := sum
//! sum    := term (('+' | '-') term)*
//! term   := ['-'] unit ('*' unit)*        one vector unit per term
//! unit   := number | factor | vector
//! vector := 'x' | matrix '*' 'x' | '[' sexpr (',' sexpr)* ']'
//!         | 'comp' '(' sum ';' sterm ';' int ')'
//! factor := x_i ['^' int]
//!         | 'abs' '(' x_i ')' ['^' exp]
//!         | 'sgnpow' '(' x_i ',' rational ')'
//!         | 'norm' int '(' normarg ')' ['^' exp]
//!         | 'lpnorm' '(' rational ';' normarg ')' ['^' exp]
//!         | 'polynorm' int '(' sexpr (',' sexpr)* ')' ['^' exp]
//!         | '(' sexpr ')' ['^' int]       polynomial grouping
//! normarg := 'x' | matrix '*' 'x'
//! matrix  := '[' '[' rational (',' rational)* ']' (',' ...)* ']'
//! exp     := int | '{' rational '}'
//! ```
//!
//! Plain coordinate powers take integer exponents only; fractional powers of
//! a signed quantity must be spelled `abs(x_i)^{...}` or `sgnpow(x_i, ...)`
//! so the intended branch is explicit.

use super::composite::{CompositeRule, ScalarProduct};
use super::poly::Poly;
use super::{HomogeneousComponent, NonlinearitySpec, ProductTerm, ScalarFactor, SignMode, SpecMode, TermError};
use crate::linalg::Mat;
use crate::rational::{parse_rat, rat_int, rat_to_f64, Rat};
use num_traits::{Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error(transparent)]
    Term(#[from] TermError),
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Ident(String),
    Number(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    while i < bytes.len() {
        let c = bytes[i] as char;
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
        let (tline, tcol) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_alphanumeric() || c == '_' {
                    i += 1;
                    col += 1;
                } else {
                    break;
                }
            }
            toks.push(Tok {
                kind: TokKind::Ident(src[start..i].to_string()),
                line: tline,
                col: tcol,
            });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
                col += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                col += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                    col += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        j += 1;
                    }
                    col += j - i;
                    i = j;
                }
            }
            toks.push(Tok {
                kind: TokKind::Number(src[start..i].to_string()),
                line: tline,
                col: tcol,
            });
        } else if "[](){},;*+-^/".contains(c) {
            toks.push(Tok {
                kind: TokKind::Punct(c),
                line: tline,
                col: tcol,
            });
            i += 1;
            col += 1;
        } else {
            return Err(ParseError::Syntax {
                line,
                col,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    toks.push(Tok {
        kind: TokKind::Eof,
        line,
        col,
    });
    Ok(toks)
}

/// One multiplicative unit of a term.
enum Unit {
    Num(f64),
    Factor(ScalarFactor),
    Poly(Poly),
    StateVec,
    MatVec(Mat),
    Entries(Vec<Vec<ScalarProduct>>),
    Comp(CompositeRule),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos]
    }

    fn peek_kind(&self, ahead: usize) -> &TokKind {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek().kind == TokKind::Punct(c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.at_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn parse_rational(&mut self) -> Result<Rat, ParseError> {
        let neg = self.eat_punct('-');
        let text = match self.bump().kind {
            TokKind::Number(s) => s,
            _ => return self.err("expected a number"),
        };
        let mut r = match parse_rat(&text) {
            Ok(r) => r,
            Err(e) => return self.err(e),
        };
        if self.at_punct('/') {
            self.bump();
            let den = match self.bump().kind {
                TokKind::Number(s) => s,
                _ => return self.err("expected a denominator"),
            };
            let d = match parse_rat(&den) {
                Ok(d) => d,
                Err(e) => return self.err(e),
            };
            if d.is_zero() {
                return self.err("zero denominator");
            }
            r /= d;
        }
        if neg {
            r = -r;
        }
        Ok(r)
    }

    fn parse_usize(&mut self) -> Result<usize, ParseError> {
        let r = self.parse_rational()?;
        if !r.is_integer() || r.is_negative() {
            return self.err("expected a nonnegative integer");
        }
        r.numer()
            .to_usize()
            .map_or_else(|| self.err("integer too large"), Ok)
    }

    /// `^ int` or `^ { rational }`; `default` when no `^` follows.
    fn parse_exponent(&mut self, default: Rat) -> Result<Rat, ParseError> {
        if !self.eat_punct('^') {
            return Ok(default);
        }
        if self.eat_punct('{') {
            let r = self.parse_rational()?;
            self.expect_punct('}')?;
            Ok(r)
        } else {
            let r = self.parse_rational()?;
            if !r.is_integer() {
                return self.err("fractional exponents must be braced: ^{p/q}");
            }
            Ok(r)
        }
    }

    /// Coordinate ident `x_<k>`, one-based in the source; zero-based out.
    fn coord_index(&self, name: &str) -> Option<usize> {
        let rest = name.strip_prefix("x_")?;
        let k: usize = rest.parse().ok()?;
        (k >= 1).then_some(k - 1)
    }

    fn expect_coord(&mut self) -> Result<usize, ParseError> {
        let t = self.bump();
        if let TokKind::Ident(name) = &t.kind {
            if let Some(i) = self.coord_index(name) {
                if i >= self.dim {
                    return Err(ParseError::Syntax {
                        line: t.line,
                        col: t.col,
                        message: format!(
                            "coordinate {name} exceeds state dimension {}",
                            self.dim
                        ),
                    });
                }
                return Ok(i);
            }
        }
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: "expected a coordinate like x_1".into(),
        })
    }

    fn parse_matrix(&mut self) -> Result<Mat, ParseError> {
        self.expect_punct('[')?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        loop {
            self.expect_punct('[')?;
            let mut row = Vec::new();
            loop {
                row.push(rat_to_f64(&self.parse_rational()?));
                if !self.eat_punct(',') {
                    break;
                }
            }
            self.expect_punct(']')?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return self.err("matrix rows have different lengths");
                }
            }
            rows.push(row);
            if !self.eat_punct(',') {
                break;
            }
        }
        self.expect_punct(']')?;
        Ok(Mat::from_rows(&rows))
    }

    /// `x` or `matrix * x`; the matrix may be rectangular with `dim` columns.
    fn parse_normarg(&mut self) -> Result<Option<Mat>, ParseError> {
        if self.at_punct('[') {
            let m = self.parse_matrix()?;
            if m.cols != self.dim {
                return self.err(format!(
                    "norm matrix has {} columns, state dimension is {}",
                    m.cols, self.dim
                ));
            }
            self.expect_punct('*')?;
            match self.bump().kind {
                TokKind::Ident(ref s) if s == "x" => Ok(Some(m)),
                _ => self.err("expected 'x' after the matrix"),
            }
        } else {
            match self.bump().kind {
                TokKind::Ident(ref s) if s == "x" => Ok(None),
                _ => self.err("expected 'x' or a matrix"),
            }
        }
    }

    /// Scalar atom shared between term units and scalar expressions.
    /// Returns `None` when the lookahead is not a scalar atom.
    fn parse_scalar_atom(&mut self) -> Result<Option<Unit>, ParseError> {
        match self.peek().kind.clone() {
            TokKind::Number(_) => {
                let v = self.parse_rational()?;
                Ok(Some(Unit::Num(rat_to_f64(&v))))
            }
            TokKind::Punct('(') => {
                self.bump();
                let sexpr = self.parse_sexpr()?;
                self.expect_punct(')')?;
                let poly = self.require_pure_poly(sexpr, "parenthesized group")?;
                let e = self.parse_exponent(rat_int(1))?;
                if !e.is_integer() || e.is_negative() {
                    return self.err(
                        "parenthesized groups take nonnegative integer exponents",
                    );
                }
                let n = e.numer().to_u32().unwrap_or(u32::MAX);
                Ok(Some(Unit::Poly(poly.pow(n))))
            }
            TokKind::Ident(name) => {
                if let Some(i) = self.coord_index(&name) {
                    let t = self.bump();
                    if i >= self.dim {
                        return Err(ParseError::Syntax {
                            line: t.line,
                            col: t.col,
                            message: format!(
                                "coordinate {name} exceeds state dimension {}",
                                self.dim
                            ),
                        });
                    }
                    let e = self.parse_exponent(rat_int(1))?;
                    if !e.is_integer() || e.is_negative() {
                        return Err(ParseError::Syntax {
                            line: t.line,
                            col: t.col,
                            message: format!(
                                "plain powers of {name} take integer exponents; \
                                 write abs({name})^{{...}} or sgnpow({name}, ...) \
                                 for fractional powers"
                            ),
                        });
                    }
                    let n = e.numer().to_u32().unwrap_or(u32::MAX);
                    return Ok(Some(Unit::Poly(Poly::monomial(
                        self.dim,
                        {
                            let mut exps = vec![0; self.dim];
                            exps[i] = n;
                            exps
                        },
                        1.0,
                    ))));
                }
                match name.as_str() {
                    "abs" => {
                        self.bump();
                        self.expect_punct('(')?;
                        let i = self.expect_coord()?;
                        self.expect_punct(')')?;
                        let e = self.parse_exponent(rat_int(1))?;
                        return Ok(Some(Unit::Factor(ScalarFactor::CoordPower {
                            index: i,
                            mode: SignMode::Abs,
                            exponent: e,
                        })));
                    }
                    "sgnpow" => {
                        self.bump();
                        self.expect_punct('(')?;
                        let i = self.expect_coord()?;
                        self.expect_punct(',')?;
                        let e = self.parse_rational()?;
                        self.expect_punct(')')?;
                        return Ok(Some(Unit::Factor(ScalarFactor::CoordPower {
                            index: i,
                            mode: SignMode::Signed,
                            exponent: e,
                        })));
                    }
                    "lpnorm" => {
                        self.bump();
                        self.expect_punct('(')?;
                        let p = self.parse_rational()?;
                        self.expect_punct(';')?;
                        let m = self.parse_normarg()?;
                        self.expect_punct(')')?;
                        let e = self.parse_exponent(rat_int(1))?;
                        return Ok(Some(Unit::Factor(ScalarFactor::NormPower {
                            matrix: m,
                            p,
                            exponent: e,
                        })));
                    }
                    _ => {}
                }
                if let Some(digits) = name.strip_prefix("polynorm") {
                    if let Ok(p) = digits.parse::<u32>() {
                        self.bump();
                        self.expect_punct('(')?;
                        let mut polys = Vec::new();
                        loop {
                            let sexpr = self.parse_sexpr()?;
                            polys.push(
                                self.require_pure_poly(sexpr, "polynorm argument")?,
                            );
                            if !self.eat_punct(',') {
                                break;
                            }
                        }
                        self.expect_punct(')')?;
                        let e = self.parse_exponent(rat_int(1))?;
                        return Ok(Some(Unit::Factor(ScalarFactor::PolyNormPower {
                            polys,
                            p,
                            exponent: e,
                        })));
                    }
                }
                if let Some(digits) = name.strip_prefix("norm") {
                    if let Ok(p) = digits.parse::<u32>() {
                        self.bump();
                        self.expect_punct('(')?;
                        let m = self.parse_normarg()?;
                        self.expect_punct(')')?;
                        let e = self.parse_exponent(rat_int(1))?;
                        return Ok(Some(Unit::Factor(ScalarFactor::NormPower {
                            matrix: m,
                            p: rat_int(p as i64),
                            exponent: e,
                        })));
                    }
                }
                Ok(None)
            }
            _ => Ok(None),
        }
    }

    fn require_pure_poly(
        &self,
        sexpr: Vec<ScalarProduct>,
        what: &str,
    ) -> Result<Poly, ParseError> {
        let mut poly = Poly::zero(self.dim);
        for sp in sexpr {
            if !sp.factors.is_empty() {
                let t = self.peek();
                return Err(ParseError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: format!("{what} may contain polynomials only"),
                });
            }
            poly = poly.add(&sp.poly.scale(sp.coeff));
        }
        Ok(poly)
    }

    /// Scalar expression: sum of scalar products.
    fn parse_sexpr(&mut self) -> Result<Vec<ScalarProduct>, ParseError> {
        let mut out = Vec::new();
        let mut sign = if self.eat_punct('-') { -1.0 } else { 1.0 };
        loop {
            out.push(self.parse_sterm(sign)?);
            if self.eat_punct('+') {
                sign = 1.0;
            } else if self.eat_punct('-') {
                sign = -1.0;
            } else {
                break;
            }
        }
        Ok(out)
    }

    fn parse_sterm(&mut self, sign: f64) -> Result<ScalarProduct, ParseError> {
        let mut coeff = sign;
        let mut factors = Vec::new();
        let mut poly = Poly::one(self.dim);
        let mut any = false;
        loop {
            match self.parse_scalar_atom()? {
                Some(Unit::Num(v)) => coeff *= v,
                Some(Unit::Factor(f)) => factors.push(f),
                Some(Unit::Poly(p)) => poly = poly.mul(&p),
                Some(_) => unreachable!("scalar atoms only"),
                None => {
                    if let TokKind::Ident(name) = &self.peek().kind {
                        if name == "x" || name == "comp" {
                            return self.err(format!(
                                "'{name}' is not allowed in a scalar expression"
                            ));
                        }
                        return self.err(format!("unknown identifier '{name}'"));
                    }
                    return if any {
                        self.err("expected a factor after '*'")
                    } else {
                        self.err("expected a scalar expression")
                    };
                }
            }
            any = true;
            if !self.eat_punct('*') {
                break;
            }
        }
        super::composite::normalize_factors(&mut factors);
        Ok(ScalarProduct {
            coeff,
            factors,
            poly,
        })
    }

    fn parse_unit(&mut self) -> Result<Unit, ParseError> {
        // Vector forms first: bare x, [entries], [[matrix]]*x, comp(...).
        match self.peek().kind.clone() {
            TokKind::Ident(name) if name == "x" => {
                self.bump();
                return Ok(Unit::StateVec);
            }
            TokKind::Ident(name) if name == "comp" => {
                self.bump();
                return self.parse_comp();
            }
            TokKind::Punct('[') => {
                if *self.peek_kind(1) == TokKind::Punct('[') {
                    let m = self.parse_matrix()?;
                    if m.rows != self.dim || m.cols != self.dim {
                        return self.err(format!(
                            "state matrix must be {dim}x{dim}",
                            dim = self.dim
                        ));
                    }
                    self.expect_punct('*')?;
                    return match self.bump().kind {
                        TokKind::Ident(ref s) if s == "x" => Ok(Unit::MatVec(m)),
                        _ => self.err("expected 'x' after the matrix"),
                    };
                }
                self.bump();
                let mut entries = Vec::new();
                loop {
                    entries.push(self.parse_sexpr()?);
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                self.expect_punct(']')?;
                if entries.len() != self.dim {
                    return self.err(format!(
                        "vector has {} entries, state dimension is {}",
                        entries.len(),
                        self.dim
                    ));
                }
                return Ok(Unit::Entries(entries));
            }
            _ => {}
        }
        match self.parse_scalar_atom()? {
            Some(u) => Ok(u),
            None => {
                if let TokKind::Ident(name) = &self.peek().kind {
                    return self.err(format!("unknown identifier '{name}'"));
                }
                self.err("expected a factor, number, or vector expression")
            }
        }
    }

    fn parse_comp(&mut self) -> Result<Unit, ParseError> {
        self.expect_punct('(')?;
        let (num_terms, nested) = self.parse_sum(false)?;
        if nested.is_some() {
            return self.err("composite expressions cannot be nested");
        }
        self.expect_punct(';')?;
        let neg = self.eat_punct('-');
        let den = self.parse_sterm(if neg { -1.0 } else { 1.0 })?;
        self.expect_punct(';')?;
        let depth = self.parse_usize()?;
        if depth == 0 {
            return self.err("composite depth must be at least 1");
        }
        self.expect_punct(')')?;
        let numerator = group_terms(num_terms);
        if numerator.is_empty() {
            return self.err("composite numerator is empty");
        }
        Ok(Unit::Comp(CompositeRule {
            numerator,
            denominator: den,
            depth,
        }))
    }

    /// Parses a sum of terms. Returns the explicit product terms plus at
    /// most one composite rule.
    fn parse_sum(
        &mut self,
        top: bool,
    ) -> Result<(Vec<ProductTerm>, Option<CompositeRule>), ParseError> {
        let mut terms = Vec::new();
        let mut rule: Option<CompositeRule> = None;
        let mut sign = if self.eat_punct('-') { -1.0 } else { 1.0 };
        loop {
            match self.parse_term(sign)? {
                TermOut::Terms(ts) => terms.extend(ts),
                TermOut::Composite(c) => {
                    if !top {
                        return self.err("composite expressions cannot be nested");
                    }
                    if rule.is_some() {
                        return self.err("at most one composite expression is allowed");
                    }
                    rule = Some(c);
                }
            }
            if self.eat_punct('+') {
                sign = 1.0;
            } else if self.eat_punct('-') {
                sign = -1.0;
            } else {
                break;
            }
        }
        Ok((terms, rule))
    }

    fn parse_term(&mut self, sign: f64) -> Result<TermOut, ParseError> {
        let mut coeff = sign;
        let mut factors: Vec<ScalarFactor> = Vec::new();
        let mut poly = Poly::one(self.dim);
        let mut vector: Option<Unit> = None;
        loop {
            let unit = self.parse_unit()?;
            match unit {
                Unit::Num(v) => coeff *= v,
                Unit::Factor(f) => factors.push(f),
                Unit::Poly(p) => poly = poly.mul(&p),
                v @ (Unit::StateVec | Unit::MatVec(_) | Unit::Entries(_) | Unit::Comp(_)) => {
                    if vector.is_some() {
                        return self.err("a term may contain only one vector part");
                    }
                    vector = Some(v);
                }
            }
            if !self.eat_punct('*') {
                break;
            }
        }
        let vector = match vector {
            Some(v) => v,
            None => {
                return self.err(
                    "term needs a vector part: x, [entries], a matrix times x, or comp(...)",
                )
            }
        };
        if let Unit::Comp(mut rule) = vector {
            if !factors.is_empty() || !poly.terms.iter().all(|(e, _)| e.iter().all(|&k| k == 0))
            {
                return self.err("comp(...) can be scaled by numbers only");
            }
            let scale = coeff * poly.eval(&vec![0.0; self.dim]);
            if scale != 1.0 {
                for c in rule.numerator.iter_mut() {
                    for t in c.terms.iter_mut() {
                        t.tail = t.tail.iter().map(|q| q.scale(scale)).collect();
                    }
                }
            }
            return Ok(TermOut::Composite(rule));
        }
        let entries: Vec<Vec<ScalarProduct>> = match vector {
            Unit::StateVec => (0..self.dim)
                .map(|c| {
                    vec![ScalarProduct {
                        coeff: 1.0,
                        factors: vec![],
                        poly: Poly::coord(self.dim, c),
                    }]
                })
                .collect(),
            Unit::MatVec(m) => (0..self.dim)
                .map(|c| {
                    let mut p = Poly::zero(self.dim);
                    for j in 0..self.dim {
                        let v = m[(c, j)];
                        if v != 0.0 {
                            p = p.add(&Poly::coord(self.dim, j).scale(v));
                        }
                    }
                    vec![ScalarProduct {
                        coeff: 1.0,
                        factors: vec![],
                        poly: p,
                    }]
                })
                .collect(),
            Unit::Entries(e) => e,
            _ => unreachable!(),
        };
        // Each (coordinate, scalar product) pair becomes one single-slot
        // product term; grouping merges compatible slots afterwards.
        let mut out = Vec::new();
        for (c, entry) in entries.into_iter().enumerate() {
            for sp in entry {
                if sp.poly.is_zero() {
                    continue;
                }
                let mut fs = factors.clone();
                fs.extend(sp.factors);
                super::composite::normalize_factors(&mut fs);
                let tail_poly = poly.mul(&sp.poly).scale(coeff * sp.coeff);
                if tail_poly.is_zero() {
                    continue;
                }
                let mut tail = vec![Poly::zero(self.dim); self.dim];
                tail[c] = tail_poly;
                out.push(ProductTerm { factors: fs, tail });
            }
        }
        Ok(TermOut::Terms(out))
    }
}

enum TermOut {
    Terms(Vec<ProductTerm>),
    Composite(CompositeRule),
}

/// Groups product terms into homogeneous components, merging terms with
/// identical factor lists and equal tail degree, ascending by degree.
pub fn group_terms(terms: Vec<ProductTerm>) -> Vec<HomogeneousComponent> {
    let mut by_degree: BTreeMap<Rat, Vec<ProductTerm>> = BTreeMap::new();
    for mut t in terms {
        t.factors.sort_by_key(|f| f.to_string());
        let degree = t.degree();
        let bucket = by_degree.entry(degree).or_default();
        let key: Vec<String> = t.factors.iter().map(|f| f.to_string()).collect();
        let tail_deg: Vec<_> = t
            .tail
            .iter()
            .filter(|&q| !q.is_zero()).map(|q| q.homogeneous_degree())
            .collect();
        let merged = bucket.iter_mut().find(|u| {
            let ukey: Vec<String> = u.factors.iter().map(|f| f.to_string()).collect();
            let utail: Vec<_> = u
                .tail
                .iter()
                .filter(|&q| !q.is_zero()).map(|q| q.homogeneous_degree())
                .collect();
            ukey == key && utail.first() == tail_deg.first()
        });
        match merged {
            Some(u) => {
                u.tail = u
                    .tail
                    .iter()
                    .zip(&t.tail)
                    .map(|(a, b)| a.add(b))
                    .collect();
            }
            None => bucket.push(t),
        }
    }
    by_degree.into_values().filter_map(|terms| {
            let terms: Vec<ProductTerm> = terms
                .into_iter()
                .filter(|t| t.tail.iter().any(|q| !q.is_zero()))
                .collect();
            (!terms.is_empty()).then(|| HomogeneousComponent::new(terms).expect("grouped by degree"))
        })
        .collect()
}

/// Parses a nonlinearity from source text.
pub fn parse_nonlinearity(
    src: &str,
    dim: usize,
    mode: SpecMode,
) -> Result<NonlinearitySpec, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let (terms, rule) = p.parse_sum(true)?;
    if p.peek().kind != TokKind::Eof {
        return p.err("unexpected trailing input");
    }
    let mode = if rule.is_some() && mode == SpecMode::Finite {
        SpecMode::Infinite
    } else {
        mode
    };
    let components = group_terms(terms);
    Ok(NonlinearitySpec::new(dim, mode, components, rule)?)
}

/// Parses a pure polynomial scalar expression (used for structured input).
pub fn parse_scalar_poly(src: &str, dim: usize) -> Result<Poly, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let sexpr = p.parse_sexpr()?;
    if p.peek().kind != TokKind::Eof {
        return p.err("unexpected trailing input");
    }
    p.require_pure_poly(sexpr, "polynomial")
}

/// Parses a scalar product (used for structured composite denominators).
pub fn parse_scalar_product(src: &str, dim: usize) -> Result<ScalarProduct, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let neg = p.eat_punct('-');
    let sp = p.parse_sterm(if neg { -1.0 } else { 1.0 })?;
    if p.peek().kind != TokKind::Eof {
        return p.err("unexpected trailing input");
    }
    Ok(sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn parses_scalar_cubic() {
        let spec = parse_nonlinearity("[-x_1^3]", 1, SpecMode::Finite).unwrap();
        assert_eq!(spec.n_components(), 1);
        assert_eq!(spec.degree(0), rat_int(3));
        assert!((spec.evaluate_modeled(&[0.5])[0] + 0.125).abs() < 1e-16);
    }

    #[test]
    fn parses_norm_power_times_state() {
        let spec = parse_nonlinearity("-norm2(x)^{1/2} * x", 2, SpecMode::Finite).unwrap();
        assert_eq!(spec.degree(0), rat(3, 2));
        let v = spec.evaluate_modeled(&[3.0, 4.0]);
        let s = 5.0f64.sqrt();
        assert!((v[0] + 3.0 * s).abs() < 1e-12);
        assert!((v[1] + 4.0 * s).abs() < 1e-12);
    }

    #[test]
    fn parses_two_component_system() {
        let spec = parse_nonlinearity(
            "[-abs(x_2)^{1/2} * x_1, 0] + [0, -x_1^2 * x_2]",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        assert_eq!(spec.n_components(), 2);
        assert_eq!(spec.degree(0), rat(3, 2));
        assert_eq!(spec.degree(1), rat_int(3));
        let v = spec.evaluate_modeled(&[2.0, 4.0]);
        assert!((v[0] + 4.0).abs() < 1e-14);
        assert!((v[1] + 16.0).abs() < 1e-14);
    }

    #[test]
    fn factors_distribute_over_entries() {
        let spec = parse_nonlinearity(
            "abs(x_1)^{1/3} * [x_2, -x_1]",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        assert_eq!(spec.n_components(), 1);
        assert_eq!(spec.component(0).terms.len(), 1);
        let v = spec.evaluate_modeled(&[8.0, 1.0]);
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] + 16.0).abs() < 1e-12);
    }

    #[test]
    fn parses_matrix_norm_argument() {
        let spec = parse_nonlinearity(
            "norm2([[1, 0], [0, 2]]*x)^{2} * x",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        let v = spec.evaluate_modeled(&[1.0, 1.0]);
        // |(1, 2)|^2 = 5
        assert!((v[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn parses_matrix_times_state_tail() {
        let spec = parse_nonlinearity(
            "-norm2(x) * [[0, 1], [1, 0]] * x",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        let v = spec.evaluate_modeled(&[3.0, 4.0]);
        assert!((v[0] + 20.0).abs() < 1e-12);
        assert!((v[1] + 15.0).abs() < 1e-12);
    }

    #[test]
    fn parses_lpnorm_and_polynorm() {
        let spec = parse_nonlinearity(
            "lpnorm(3; x)^{1/2} * polynorm2(x_1^2 + x_2^2, x_1*x_2)^{1/4} * x",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        // degree = 1/2 + 2*(1/4) + 1 = 2
        assert_eq!(spec.degree(0), rat_int(2));
        let v = spec.evaluate_modeled(&[1.0, 1.0]);
        // lpnorm part: (1+1)^{1/3 * 1/2}; polynorm part: (5)^{1/4 / 2}
        let expect = 2.0f64.powf(1.0 / 6.0) * 5.0f64.powf(0.125);
        assert!((v[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn parses_composite() {
        let spec = parse_nonlinearity(
            "comp(norm2(x)^{1/3} * x; norm2(x)^{1/4}; 5)",
            1,
            SpecMode::Infinite,
        )
        .unwrap();
        assert!(spec.has_rule());
        let x = [0.3f64];
        let n = x[0].abs();
        let expect = n.powf(1.0 / 3.0) * x[0] / (1.0 + n.powf(0.25));
        assert!((spec.evaluate_modeled(&x)[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn rejects_fractional_plain_power() {
        let err = parse_nonlinearity("[x_2^{1/3} * x_1, 0]", 2, SpecMode::Finite).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sgnpow"), "message should suggest sgnpow: {msg}");
    }

    #[test]
    fn rejects_unknown_identifier_with_position() {
        let err = parse_nonlinearity("[-y^3]", 1, SpecMode::Finite).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("column 3"), "{msg}");
        assert!(msg.contains("'y'"), "{msg}");
    }

    #[test]
    fn rejects_dimension_mismatch() {
        assert!(parse_nonlinearity("[x_1^2, x_2^2]", 1, SpecMode::Finite).is_err());
        assert!(parse_nonlinearity("[-x_3^2]", 1, SpecMode::Finite).is_err());
    }

    #[test]
    fn rejects_low_degree_through_validation() {
        let err = parse_nonlinearity("[-x_1]", 1, SpecMode::Finite).unwrap_err();
        assert!(matches!(err, ParseError::Term(TermError::DegreeError { .. })));
    }

    #[test]
    fn merges_repeated_norm_factors() {
        let spec =
            parse_nonlinearity("norm2(x) * norm2(x) * x", 2, SpecMode::Finite).unwrap();
        let t = &spec.component(0).terms[0];
        assert_eq!(t.factors.len(), 1);
        assert_eq!(spec.degree(0), rat_int(3));
    }

    #[test]
    fn scalar_poly_entry_point() {
        let p = parse_scalar_poly("x_1^2 + 2*x_1*x_2", 2).unwrap();
        assert_eq!(p.eval(&[1.0, 3.0]), 7.0);
        assert!(parse_scalar_poly("abs(x_1)", 2).is_err());
    }

    #[test]
    fn polynomial_grouping_with_power() {
        let spec = parse_nonlinearity("[(x_1 + x_2)^3, 0]", 2, SpecMode::Finite).unwrap();
        assert_eq!(spec.degree(0), rat_int(3));
        let v = spec.evaluate_modeled(&[1.0, 1.0]);
        assert!((v[0] - 8.0).abs() < 1e-14);
    }
}
