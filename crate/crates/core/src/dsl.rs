//! A small expression language for the vector fields `V_0, …, V_d : ℝ^N → ℝ^N`.
//!
//! ```text
//! system    := { statement sep* }
//! statement := "N" "=" int | "d" "=" int | "V" int "[" int "]" "=" expr
//! sep       := ";" | newline
//! expr      := term { ("+" | "-") term }
//! term      := unary { ("*" | "/") unary }
//! unary     := "-" unary | power
//! power     := atom [ "^" unary ]
//! atom      := number | "x" int | func "(" expr ")" | "(" expr ")"
//! func      := sin | cos | exp | log | sqrt | tanh
//! ```
//!
//! `#` starts a comment running to the end of the line. Components are
//! 1-based (`V1[1]`, `x1`), field indices are 0-based with `V0` the drift.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Names accepted by [`builtin_system`].
pub const BUILTIN_NAMES: [&str; 3] = ["gbm", "linear", "ou"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// 0-based state coordinate; printed as `x{i+1}`.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates at `x`. May return NaN or ±∞; callers decide whether that is an error.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(x)),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Coefficients `(c, a)` with `expr(x) = c + a·x` when the expression is
    /// affine in `x ∈ ℝ^n` by structure, `None` otherwise.
    pub fn affine(&self, n: usize) -> Option<(f64, Vec<f64>)> {
        let constant = |v: f64| Some((v, vec![0.0; n]));
        match self {
            Expr::Num(v) => constant(*v),
            Expr::Var(i) => {
                let mut a = vec![0.0; n];
                *a.get_mut(*i)? = 1.0;
                Some((0.0, a))
            }
            Expr::Neg(e) => {
                let (c, a) = e.affine(n)?;
                Some((-c, a.into_iter().map(|v| -v).collect()))
            }
            Expr::Call(f, e) => {
                let (c, a) = e.affine(n)?;
                if a.iter().all(|&v| v == 0.0) {
                    constant(f.apply(c))
                } else {
                    None
                }
            }
            Expr::Bin(op, l, r) => {
                let (lc, la) = l.affine(n)?;
                let (rc, ra) = r.affine(n)?;
                let l_const = la.iter().all(|&v| v == 0.0);
                let r_const = ra.iter().all(|&v| v == 0.0);
                match op {
                    BinOp::Add => Some((lc + rc, la.iter().zip(&ra).map(|(p, q)| p + q).collect())),
                    BinOp::Sub => Some((lc - rc, la.iter().zip(&ra).map(|(p, q)| p - q).collect())),
                    BinOp::Mul if r_const => Some((lc * rc, la.iter().map(|v| v * rc).collect())),
                    BinOp::Mul if l_const => Some((lc * rc, ra.iter().map(|v| v * lc).collect())),
                    BinOp::Div if r_const && rc != 0.0 => Some((lc / rc, la.iter().map(|v| v / rc).collect())),
                    BinOp::Pow if l_const && r_const => constant(lc.powf(rc)),
                    BinOp::Pow if r_const && rc == 1.0 => Some((lc, la)),
                    _ => None,
                }
            }
        }
    }
}

/// Fully parenthesised; parsing the output gives back an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    Sep,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(kind: &'static str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        kind,
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            out.push(Token { tok: Tok::Sep, line: tl, column: tc });
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            i += 1;
            col += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
        } else if c == ';' {
            out.push(Token { tok: Tok::Sep, line: tl, column: tc });
            i += 1;
            col += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s
                .parse()
                .map_err(|_| syntax("syntax error", tl, tc, format!("malformed number {s:?}")))?;
            if !v.is_finite() {
                return Err(syntax("syntax error", tl, tc, format!("number {s} overflows")));
            }
            out.push(Token { tok: Tok::Num(v), line: tl, column: tc });
            col += i - start;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            col += i - start;
        } else if "+-*/^()[]=,".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line: tl, column: tc });
            i += 1;
            col += 1;
        } else {
            return Err(syntax("syntax error", tl, tc, format!("unexpected character {c:?}")));
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

/// A variable reference and where it appeared, for deferred range checks.
struct VarUse {
    index: usize,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    vars: Vec<VarUse>,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
            vars: Vec::new(),
        })
    }

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

    fn error_here(&self, message: impl Into<String>) -> Error {
        let t = self.peek();
        syntax("syntax error", t.line, t.column, message)
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected '{c}', found {}", describe(&self.peek().tok))))
        }
    }

    fn skip_separators(&mut self) {
        while self.peek().tok == Tok::Sep {
            self.next();
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek().tok == Tok::Sym('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Sym('^') {
            self.next();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::Sym('(') {
                    let func = Func::from_name(&name).ok_or_else(|| {
                        syntax("unknown function", t.line, t.column, format!("unknown function {name:?}"))
                    })?;
                    self.next();
                    let mut args = vec![self.expr()?];
                    while self.peek().tok == Tok::Sym(',') {
                        self.next();
                        args.push(self.expr()?);
                    }
                    self.expect_sym(')')?;
                    if args.len() != 1 {
                        return Err(syntax(
                            "arity error",
                            t.line,
                            t.column,
                            format!("{name} takes 1 argument, got {}", args.len()),
                        ));
                    }
                    return Ok(Expr::Call(func, Box::new(args.pop().expect("one argument"))));
                }
                if Func::from_name(&name).is_some() {
                    return Err(syntax(
                        "syntax error",
                        t.line,
                        t.column,
                        format!("function {name} must be called with parentheses"),
                    ));
                }
                match variable_index(&name) {
                    Some(index) => {
                        self.vars.push(VarUse {
                            index,
                            line: t.line,
                            column: t.column,
                        });
                        Ok(Expr::Var(index))
                    }
                    None => Err(syntax("unknown variable", t.line, t.column, format!("unknown variable {name:?}"))),
                }
            }
            other => Err(syntax(
                "syntax error",
                t.line,
                t.column,
                format!("expected an expression, found {}", describe(&other)),
            )),
        }
    }

    fn check_vars(&self, n: usize) -> Result<()> {
        match self.vars.iter().find(|v| v.index >= n) {
            Some(v) => Err(syntax(
                "unknown variable",
                v.line,
                v.column,
                format!("unknown variable x{} (state dimension N={n})", v.index + 1),
            )),
            None => Ok(()),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("{s:?}"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::Sep => "end of statement".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// `x1` ↦ 0, `x2` ↦ 1, …; `x0` and other names are not variables.
fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

fn positive_int(t: &Token, what: &str) -> Result<usize> {
    match t.tok {
        Tok::Num(v) if v >= 1.0 && v.fract() == 0.0 && v < 1e9 => Ok(v as usize),
        ref other => Err(syntax(
            "syntax error",
            t.line,
            t.column,
            format!("{what} must be a positive integer, found {}", describe(other)),
        )),
    }
}

/// Parses a scalar expression over `x1..xn`, such as a payoff `f`.
pub fn parse_scalar(text: &str, n: usize) -> Result<Expr> {
    let mut p = Parser::new(text)?;
    p.skip_separators();
    let e = p.expr()?;
    p.skip_separators();
    if p.peek().tok != Tok::Eof {
        return Err(p.error_here(format!("unexpected {} after expression", describe(&p.peek().tok))));
    }
    p.check_vars(n)?;
    Ok(e)
}

/// Vector fields `V_0, …, V_d` on `ℝ^N`, one expression per component.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSystem {
    n: usize,
    d: usize,
    /// `fields[i][k]` is component `k` (0-based) of `V_i`.
    fields: Vec<Vec<Expr>>,
}

impl VectorFieldSystem {
    pub fn new(n: usize, d: usize, fields: Vec<Vec<Expr>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("need N >= 1 and d >= 1, got N={n}, d={d}")));
        }
        if fields.len() != d + 1 || fields.iter().any(|f| f.len() != n) {
            return Err(Error::DimensionMismatch(format!("expected {} fields of {n} components", d + 1)));
        }
        if let Some(k) = fields.iter().flatten().filter_map(Expr::max_var).max().filter(|&k| k >= n) {
            return Err(Error::InvalidArgument(format!("expression references x{} but N={n}", k + 1)));
        }
        Ok(VectorFieldSystem { n, d, fields })
    }

    /// State dimension `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Driving dimension `d`.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn component(&self, i: usize, k: usize) -> &Expr {
        &self.fields[i][k]
    }

    /// `V_i(x)`, failing on any non-finite component.
    pub fn evaluate_field(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.check_point(x)?;
        if i > self.d {
            return Err(Error::InvalidArgument(format!("field index {i} exceeds d={}", self.d)));
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.component_value(i, k, x)?;
        }
        Ok(out)
    }

    /// `out = Σ_i g_i V_i(x)`, with `g` indexed like the path coordinates.
    pub fn combined_field(&self, g: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += gi * self.component_value(i, k, x)?;
            }
        }
        Ok(())
    }

    fn component_value(&self, i: usize, k: usize, x: &[f64]) -> Result<f64> {
        let v = self.fields[i][k].eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain {
                context: format!("V{i}[{}] at x={x:?}", k + 1),
                value: v,
            })
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!("point has {} coordinates, N={}", x.len(), self.n)));
        }
        Ok(())
    }

    /// Every field evaluates to finite values at every point.
    pub fn check_finite(&self, points: &[Vec<f64>]) -> Result<()> {
        for x in points {
            for i in 0..=self.d {
                self.evaluate_field(i, x)?;
            }
        }
        Ok(())
    }

    /// Whether every component is affine in `x` by structure.
    pub fn is_affine(&self) -> bool {
        self.fields.iter().flatten().all(|e| e.affine(self.n).is_some())
    }
}

impl fmt::Display for VectorFieldSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "N={}; d={}", self.n, self.d)?;
        for (i, field) in self.fields.iter().enumerate() {
            for (k, e) in field.iter().enumerate() {
                writeln!(f, "V{i}[{}] = {e}", k + 1)?;
            }
        }
        Ok(())
    }
}

pub fn parse_system(text: &str) -> Result<VectorFieldSystem> {
    let mut p = Parser::new(text)?;
    let mut n: Option<usize> = None;
    let mut d: Option<usize> = None;
    let mut comps: BTreeMap<(usize, usize), (Expr, usize, usize)> = BTreeMap::new();
    p.skip_separators();
    while p.peek().tok != Tok::Eof {
        let head = p.next();
        let Tok::Ident(name) = &head.tok else {
            return Err(syntax(
                "syntax error",
                head.line,
                head.column,
                format!("expected a statement, found {}", describe(&head.tok)),
            ));
        };
        match name.as_str() {
            "N" | "d" => {
                p.expect_sym('=')?;
                let v = positive_int(&p.next(), name)?;
                let slot = if name == "N" { &mut n } else { &mut d };
                if slot.replace(v).is_some() {
                    return Err(syntax("syntax error", head.line, head.column, format!("{name} given twice")));
                }
            }
            _ => {
                let field = name
                    .strip_prefix('V')
                    .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| {
                        syntax(
                            "syntax error",
                            head.line,
                            head.column,
                            format!("expected N, d or V<i>[<k>], found {name:?}"),
                        )
                    })?;
                p.expect_sym('[')?;
                let comp = positive_int(&p.next(), "component index")?;
                p.expect_sym(']')?;
                p.expect_sym('=')?;
                let e = p.expr()?;
                if comps.insert((field, comp), (e, head.line, head.column)).is_some() {
                    return Err(syntax(
                        "syntax error",
                        head.line,
                        head.column,
                        format!("V{field}[{comp}] given twice"),
                    ));
                }
            }
        }
        p.skip_separators();
    }
    let end = p.peek().clone();
    let (Some(n), Some(d)) = (n, d) else {
        let what = if n.is_none() { "N" } else { "d" };
        return Err(syntax("missing component", end.line, end.column, format!("{what} is not declared")));
    };
    p.check_vars(n)?;
    if let Some(((i, k), (_, line, column))) = comps.iter().find(|((i, k), _)| *i > d || *k > n) {
        return Err(syntax(
            "syntax error",
            *line,
            *column,
            format!("V{i}[{k}] is out of range for N={n}, d={d}"),
        ));
    }
    let mut fields = Vec::with_capacity(d + 1);
    for i in 0..=d {
        let mut field = Vec::with_capacity(n);
        for k in 1..=n {
            let (e, _, _) = comps.remove(&(i, k)).ok_or_else(|| {
                syntax("missing component", end.line, end.column, format!("V{i}[{k}] is not defined"))
            })?;
            field.push(e);
        }
        fields.push(field);
    }
    VectorFieldSystem::new(n, d, fields)
}

/// Named systems:
/// `gbm` is `dX = X∘dB` on ℝ;
/// `linear` has `V0 = 0`, a rotation `V1 = (x2, −x1)` and a dilation `V2 = x/2` on ℝ²;
/// `ou` is `dX = −X dt + dB` on ℝ.
pub fn builtin_system(name: &str) -> Result<VectorFieldSystem> {
    let text = match name {
        "gbm" => "N=1; d=1; V0[1]=0; V1[1]=x1",
        "linear" => "N=2; d=2; V0[1]=0; V0[2]=0; V1[1]=x2; V1[2]=-x1; V2[1]=0.5*x1; V2[2]=0.5*x2",
        "ou" => "N=1; d=1; V0[1]=-x1; V1[1]=1",
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown SDE {name:?}; built-ins are {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    parse_system(text)
}
