//! Payoff and cost expressions.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := number | '(' expr ')' | var
//!          | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
//!          | 'piecewise' '(' var ';' const ':' expr (',' const ':' expr)* ')'
//! var     := 'tau' '(' action ')'        -- game payoffs
//!          | 'x'                         -- edge costs
//! ```
//!
//! Division is only allowed by constants, so every expression is total and
//! continuous wherever its `piecewise` branches agree at their breakpoints.
//! A `piecewise` selects the branch of the largest breakpoint not exceeding
//! the variable, and the first branch below the first breakpoint.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A linear functional of the summary: the sum of a set of coordinates.
///
/// Plain `tau(a)` is a one-element set; congestion games produce edge loads,
/// which are sums over the paths through the edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Vec<usize>);

impl Var {
    pub fn coord(i: usize) -> Self {
        Var(vec![i])
    }

    pub fn sum_of(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Var(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn value(&self, tau: &[f64]) -> f64 {
        self.0.iter().map(|&i| tau[i]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Division by a constant-valued expression.
    Div(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Piecewise {
        var: Var,
        pieces: Vec<(f64, Expr)>,
    },
}

/// How identifiers in the source text resolve to variables.
#[derive(Clone, Copy, Debug)]
pub enum Scope<'a> {
    /// `tau(name)` with `name` among the listed actions.
    Game(&'a [String]),
    /// The single scalar `x`, stored as coordinate 0.
    Scalar,
}

impl Expr {
    pub fn parse(src: &str, scope: Scope<'_>) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            src,
            tokens,
            pos: 0,
            scope,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error(format!("unexpected `{}`", p.tokens[p.pos].1.text())));
        }
        e.validate_continuity(scope)?;
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// Evaluates with variables looked up through `value`.
    pub fn eval_with(&self, value: &dyn Fn(&Var) -> f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => value(v),
            Expr::Neg(a) => -a.eval_with(value),
            Expr::Add(a, b) => a.eval_with(value) + b.eval_with(value),
            Expr::Sub(a, b) => a.eval_with(value) - b.eval_with(value),
            Expr::Mul(a, b) => a.eval_with(value) * b.eval_with(value),
            Expr::Div(a, b) => a.eval_with(value) / b.eval_with(value),
            Expr::Min(a, b) => a.eval_with(value).min(b.eval_with(value)),
            Expr::Max(a, b) => a.eval_with(value).max(b.eval_with(value)),
            Expr::Piecewise { var, pieces } => {
                let x = value(var);
                let idx = pieces.iter().rposition(|(bp, _)| *bp <= x).unwrap_or(0);
                pieces[idx].1.eval_with(value)
            }
        }
    }

    /// Evaluates at a summary (or, for scalar expressions, at `[x]`).
    pub fn eval(&self, tau: &[f64]) -> f64 {
        self.eval_with(&|v| v.value(tau))
    }

    /// Evaluates a scalar-scope expression at `x`.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        self.eval_with(&|_| x)
    }

    /// Distinct variables occurring in the expression.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Piecewise { var, pieces } => {
                out.insert(var.clone());
                pieces.iter().for_each(|(_, e)| e.collect_vars(out));
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.vars().is_empty()
    }

    /// Replaces every variable by the expression `f` returns for it.
    ///
    /// A `piecewise` selector must map to another variable; any other
    /// replacement is rejected.
    pub fn substitute(&self, f: &dyn Fn(&Var) -> Expr) -> Result<Expr> {
        let bin = |a: &Expr, b: &Expr| -> Result<(Box<Expr>, Box<Expr>)> {
            Ok((Box::new(a.substitute(f)?), Box::new(b.substitute(f)?)))
        };
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(v),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(f)?)),
            Expr::Add(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Mul(a, b)
            }
            Expr::Div(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Div(a, b)
            }
            Expr::Min(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Min(a, b)
            }
            Expr::Max(a, b) => {
                let (a, b) = bin(a, b)?;
                Expr::Max(a, b)
            }
            Expr::Piecewise { var, pieces } => {
                let var = match f(var) {
                    Expr::Var(v) => v,
                    _ => {
                        return Err(Error::arg(
                            "piecewise selector must be replaced by a variable",
                        ))
                    }
                };
                let pieces = pieces
                    .iter()
                    .map(|(bp, e)| Ok((*bp, e.substitute(f)?)))
                    .collect::<Result<Vec<_>>>()?;
                Expr::Piecewise { var, pieces }
            }
        })
    }

    /// Splits the expression into additive terms with constant coefficients.
    pub fn additive_terms(&self) -> Vec<(f64, Expr)> {
        let mut out = Vec::new();
        self.push_terms(1.0, &mut out);
        out
    }

    fn push_terms(&self, coef: f64, out: &mut Vec<(f64, Expr)>) {
        match self {
            Expr::Add(a, b) => {
                a.push_terms(coef, out);
                b.push_terms(coef, out);
            }
            Expr::Sub(a, b) => {
                a.push_terms(coef, out);
                b.push_terms(-coef, out);
            }
            Expr::Neg(a) => a.push_terms(-coef, out),
            Expr::Mul(a, b) if a.is_constant() => b.push_terms(coef * a.eval(&[]), out),
            Expr::Mul(a, b) if b.is_constant() => a.push_terms(coef * b.eval(&[]), out),
            Expr::Div(a, b) => a.push_terms(coef / b.eval(&[]), out),
            other => out.push((coef, other.clone())),
        }
    }

    /// Candidate kinks in `[0, 1]` when every variable is read as one scalar.
    ///
    /// Collects `piecewise` breakpoints and sign changes of `a - b` under
    /// `min(a, b)` / `max(a, b)`, located by a 1000-cell scan and bisection.
    pub fn scalar_kinks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_kinks(&mut out);
        out.retain(|x| *x > 0.0 && *x < 1.0);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        out
    }

    fn collect_kinks(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(a) => a.collect_kinks(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_kinks(out);
                b.collect_kinks(out);
            }
            Expr::Min(a, b) | Expr::Max(a, b) => {
                a.collect_kinks(out);
                b.collect_kinks(out);
                let d = |x: f64| a.eval_scalar(x) - b.eval_scalar(x);
                out.extend(sign_changes(&d, 1000));
            }
            Expr::Piecewise { pieces, .. } => {
                for (bp, e) in pieces {
                    out.push(*bp);
                    e.collect_kinks(out);
                }
            }
        }
    }

    /// Renders the expression, naming variables through `name`.
    pub fn render(&self, name: &dyn Fn(&Var) -> String) -> String {
        let mut s = String::new();
        self.render_into(&mut s, name, 0);
        s
    }

    fn render_into(&self, s: &mut String, name: &dyn Fn(&Var) -> String, parent: u8) {
        // Precedence: 1 additive, 2 multiplicative, 3 unary.
        let wrap = |s: &mut String, prec: u8, body: &dyn Fn(&mut String)| {
            if prec < parent {
                s.push('(');
                body(s);
                s.push(')');
            } else {
                body(s);
            }
        };
        match self {
            Expr::Const(c) => {
                if *c < 0.0 && parent > 0 {
                    let _ = write!(s, "({c})");
                } else {
                    let _ = write!(s, "{c}");
                }
            }
            Expr::Var(v) => s.push_str(&name(v)),
            Expr::Neg(a) => wrap(s, 3, &|s| {
                s.push('-');
                a.render_into(s, name, 3);
            }),
            Expr::Add(a, b) => wrap(s, 1, &|s| {
                a.render_into(s, name, 1);
                s.push_str(" + ");
                b.render_into(s, name, 2);
            }),
            Expr::Sub(a, b) => wrap(s, 1, &|s| {
                a.render_into(s, name, 1);
                s.push_str(" - ");
                b.render_into(s, name, 2);
            }),
            Expr::Mul(a, b) => wrap(s, 2, &|s| {
                a.render_into(s, name, 2);
                s.push('*');
                b.render_into(s, name, 3);
            }),
            Expr::Div(a, b) => wrap(s, 2, &|s| {
                a.render_into(s, name, 2);
                s.push('/');
                b.render_into(s, name, 3);
            }),
            Expr::Min(a, b) | Expr::Max(a, b) => {
                s.push_str(if matches!(self, Expr::Min(..)) {
                    "min("
                } else {
                    "max("
                });
                a.render_into(s, name, 0);
                s.push_str(", ");
                b.render_into(s, name, 0);
                s.push(')');
            }
            Expr::Piecewise { var, pieces } => {
                let _ = write!(s, "piecewise({};", name(var));
                for (i, (bp, e)) in pieces.iter().enumerate() {
                    let _ = write!(s, "{} {bp}: ", if i == 0 { "" } else { "," });
                    e.render_into(s, name, 0);
                }
                s.push(')');
            }
        }
    }

    /// Checks that adjacent `piecewise` branches agree at their breakpoints.
    fn validate_continuity(&self, scope: Scope<'_>) -> Result<()> {
        let dim = match scope {
            Scope::Game(actions) => actions.len(),
            Scope::Scalar => 1,
        };
        self.walk_piecewise(&mut |var, pieces| {
            for w in pieces.windows(2) {
                let (bp, left) = (&w[0].1, w[1].0);
                let right = &w[1].1;
                for tau in slice_points(var, left, dim) {
                    let (l, r) = (bp.eval(&tau), right.eval(&tau));
                    if (l - r).abs() > 1e-9 {
                        return Err(Error::parse(
                            "piecewise",
                            format!(
                                "branches disagree at breakpoint {left}: {l} vs {r} (payoffs must be continuous)"
                            ),
                        ));
                    }
                }
            }
            Ok(())
        })
    }

    fn walk_piecewise(&self, f: &mut dyn FnMut(&Var, &[(f64, Expr)]) -> Result<()>) -> Result<()> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Ok(()),
            Expr::Neg(a) => a.walk_piecewise(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.walk_piecewise(f)?;
                b.walk_piecewise(f)
            }
            Expr::Piecewise { var, pieces } => {
                f(var, pieces)?;
                pieces.iter().try_for_each(|(_, e)| e.walk_piecewise(f))
            }
        }
    }
}

/// Points of the simplex (or of `[0, 1]` when `dim == 1`) on which `var == level`.
fn slice_points(var: &Var, level: f64, dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![level]];
    }
    let inside: Vec<usize> = var.indices().to_vec();
    let outside: Vec<usize> = (0..dim).filter(|i| !inside.contains(i)).collect();
    if outside.is_empty() {
        // The selector is identically 1.
        return if (level - 1.0).abs() < 1e-12 {
            vec![vec![1.0 / dim as f64; dim]]
        } else {
            Vec::new()
        };
    }
    if !(0.0..=1.0).contains(&level) {
        return Vec::new();
    }
    let mut pts = Vec::new();
    for &i in &inside {
        for &o in &outside {
            let mut t = vec![0.0; dim];
            t[i] = level;
            t[o] += 1.0 - level;
            pts.push(t);
        }
    }
    let mut spread = vec![0.0; dim];
    inside
        .iter()
        .for_each(|&i| spread[i] = level / inside.len() as f64);
    outside
        .iter()
        .for_each(|&o| spread[o] = (1.0 - level) / outside.len() as f64);
    pts.push(spread);
    pts
}

/// Roots of `f` on `(0, 1)` where it changes sign across a scan cell.
fn sign_changes(f: &dyn Fn(f64) -> f64, cells: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut x0 = 0.0;
    let mut f0 = f(x0);
    for i in 1..=cells {
        let x1 = i as f64 / cells as f64;
        let f1 = f(x1);
        if f0 == 0.0 && x0 > 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Tau(String),
    Sym(char),
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Tau(s) => format!("tau({s})"),
            Tok::Sym(c) => c.to_string(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
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
            let v: f64 = text.parse().map_err(|_| {
                Error::parse(
                    format!("expression `{src}`"),
                    format!("bad number `{text}` at {start}"),
                )
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let ident = &src[start..i];
            let rest = src[i..].trim_start();
            if ident == "tau" && rest.starts_with('(') {
                // Action names are taken verbatim up to the closing parenthesis.
                let open = src.len() - rest.len();
                let close = src[open..].find(')').map(|c| open + c).ok_or_else(|| {
                    Error::parse(
                        format!("expression `{src}`"),
                        format!("unclosed tau( at {start}"),
                    )
                })?;
                out.push((start, Tok::Tau(src[open + 1..close].trim().to_string())));
                i = close + 1;
            } else {
                out.push((start, Tok::Ident(ident.to_string())));
            }
        } else if "+-*/(),;:".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::parse(
                format!("expression `{src}`"),
                format!("unexpected character `{c}` at {i}"),
            ));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    scope: Scope<'a>,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        let at = self
            .tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.src.len());
        Error::parse(
            format!("expression `{}`", self.src),
            format!("{} (at offset {at})", message.into()),
        )
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                let rhs = self.unary()?;
                if !rhs.is_constant() {
                    return Err(self.error("division is only allowed by a constant"));
                }
                if rhs.eval(&[]) == 0.0 {
                    return Err(self.error("division by zero"));
                }
                lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "min" | "max" => {
                    self.pos += 1;
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(',')?;
                    let b = self.expr()?;
                    self.expect(')')?;
                    Ok(if name == "min" {
                        Expr::Min(Box::new(a), Box::new(b))
                    } else {
                        Expr::Max(Box::new(a), Box::new(b))
                    })
                }
                "piecewise" => {
                    self.pos += 1;
                    self.piecewise()
                }
                _ => Ok(Expr::Var(self.var()?)),
            },
            Some(Tok::Tau(_)) => Ok(Expr::Var(self.var()?)),
            Some(t) => Err(self.error(format!("unexpected `{}`", t.text()))),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn var(&mut self) -> Result<Var> {
        let tok = self.peek().cloned();
        match (self.scope, tok) {
            (Scope::Scalar, Some(Tok::Ident(n))) if n == "x" => {
                self.pos += 1;
                Ok(Var::coord(0))
            }
            (Scope::Game(actions), Some(Tok::Tau(action))) => {
                let idx = actions
                    .iter()
                    .position(|a| *a == action)
                    .ok_or_else(|| self.error(format!("unknown action `{action}` in tau(...)")))?;
                self.pos += 1;
                Ok(Var::coord(idx))
            }
            (Scope::Scalar, Some(t)) => Err(self.error(format!(
                "unknown identifier `{}` (cost functions use the variable `x`)",
                t.text()
            ))),
            (Scope::Game(_), Some(t)) => Err(self.error(format!(
                "unknown identifier `{}` (payoffs use `tau(action)`)",
                t.text()
            ))),
            (_, None) => Err(self.error("expected a variable")),
        }
    }

    fn piecewise(&mut self) -> Result<Expr> {
        self.expect('(')?;
        let var = self.var()?;
        self.expect(';')?;
        let mut pieces: Vec<(f64, Expr)> = Vec::new();
        loop {
            let bp_expr = self.expr()?;
            if !bp_expr.is_constant() {
                return Err(self.error("piecewise breakpoints must be constants"));
            }
            let bp = bp_expr.eval(&[]);
            if let Some((last, _)) = pieces.last() {
                if bp <= *last {
                    return Err(self.error("piecewise breakpoints must be strictly increasing"));
                }
            }
            self.expect(':')?;
            let branch = self.expr()?;
            pieces.push((bp, branch));
            if self.eat(')') {
                break;
            }
            self.expect(',')?;
        }
        Ok(Expr::Piecewise { var, pieces })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn actions() -> Vec<String> {
        ["a", "b", "c"].iter().map(|s| s.to_string()).collect()
    }

    fn game(src: &str) -> Expr {
        Expr::parse(src, Scope::Game(&actions())).unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        let e = game("-tau(c) - 1/3");
        assert!((e.eval(&[5.0 / 6.0, 0.0, 1.0 / 6.0]) + 0.5).abs() < 1e-15);
        assert_eq!(game("2 + 3 * 4 - 6 / 2").eval(&[1.0, 0.0, 0.0]), 11.0);
        assert_eq!(game("-(2 - 5) * 2").eval(&[1.0, 0.0, 0.0]), 6.0);
        assert_eq!(game("1e-1 * 10").eval(&[1.0, 0.0, 0.0]), 1.0);
        let m = game("-max(tau(b), 1/2)");
        assert_eq!(m.eval(&[0.0, 1.0, 0.0]), -1.0);
        assert_eq!(m.eval(&[1.0, 0.0, 0.0]), -0.5);
        assert_eq!(game("min(tau(a), tau(b))").eval(&[0.3, 0.7, 0.0]), 0.3);
    }

    #[test]
    fn piecewise_selects_last_breakpoint_not_exceeding() {
        let e = game("piecewise(tau(b); 0: -1, 0.2: 10*tau(b)-3, 0.3: 0, 0.8: 5*tau(b)-4)");
        let at = |b: f64| e.eval(&[1.0 - b, b, 0.0]);
        assert_eq!(at(0.1), -1.0);
        assert!((at(0.25) + 0.5).abs() < 1e-12);
        assert_eq!(at(0.5), 0.0);
        assert!((at(0.9) - 0.5).abs() < 1e-12);
        assert!((at(0.2) + 1.0).abs() < 1e-12);
        assert_eq!(e.scalar_kinks(), vec![0.2, 0.3, 0.8],);
    }

    #[test]
    fn rejects_discontinuous_piecewise() {
        let err = Expr::parse("piecewise(tau(b); 0: 0, 0.5: 1)", Scope::Game(&actions()));
        assert!(matches!(err, Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_bad_syntax() {
        let a = actions();
        for bad in [
            "tau(d)",
            "tau(a",
            "1 +",
            "x",
            "tau(a) / tau(b)",
            "1/0",
            "piecewise(tau(a); 0.5: 1, 0.2: 1)",
            "3 $ 4",
            "foo(1)",
        ] {
            assert!(Expr::parse(bad, Scope::Game(&a)).is_err(), "{bad}");
        }
        assert!(Expr::parse("tau(a)", Scope::Scalar).is_err());
        assert!(Expr::parse("max(x, 1/2)", Scope::Scalar).is_ok());
    }

    #[test]
    fn scalar_kinks_of_min_max() {
        let e = Expr::parse("max(x, 1/2) + min(2*x, 0.3)", Scope::Scalar).unwrap();
        let k = e.scalar_kinks();
        assert_eq!(k.len(), 2);
        assert!((k[0] - 0.15).abs() < 1e-12);
        assert!((k[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn additive_terms_recover_expression() {
        let e = game("-(tau(a) + 2*max(tau(b), 0.5)) - 1/3 + tau(c)*3");
        let terms = e.additive_terms();
        assert_eq!(terms.len(), 4);
        let tau = [0.2, 0.7, 0.1];
        let sum: f64 = terms.iter().map(|(c, t)| c * t.eval(&tau)).sum();
        assert!((sum - e.eval(&tau)).abs() < 1e-14);
    }

    #[test]
    fn substitution_to_loads() {
        let cost = Expr::parse("x + 1/3", Scope::Scalar).unwrap();
        let load = Var::sum_of(vec![2, 0]);
        let e = cost.substitute(&|_| Expr::Var(load.clone())).unwrap();
        assert!((e.eval(&[0.25, 0.5, 0.25]) - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn render_round_trips() {
        let a = actions();
        let name = |v: &Var| format!("tau({})", a[v.indices()[0]]);
        for src in [
            "-tau(c) - 1/3",
            "-max(tau(b), 1/2)",
            "piecewise(tau(b); 0: -1, 0.2: 10*tau(b)-3, 0.3: 0, 0.8: 5*tau(b)-4)",
            "0.8*(tau(a) - 1/2)",
            "2 - (tau(a) - tau(b))",
            "-(-1)",
        ] {
            let e = game(src);
            let back = game(&e.render(&name));
            for tau in [[0.2, 0.7, 0.1], [0.0, 0.25, 0.75], [0.5, 0.5, 0.0]] {
                assert_eq!(e.eval(&tau), back.eval(&tau), "{src}");
            }
        }
    }
}
