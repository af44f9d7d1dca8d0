//! Expression language for predicate classifiers.
//!
//! A program grounds one predicate in the continuous state:
//!
//! ```text
//! aligned(p1, p2){pos_tol=0.01, angle_tol=0.1} :=
//!     dist_xy(p1, p2) <= pos_tol
//!     && |angle_diff(roll(p1), roll(p2))| <= angle_tol
//!     && |angle_diff(pitch(p1), pitch(p2))| <= angle_tol
//! ```
//!
//! Bodies may reference the declared predicate arguments, the declared
//! hyperparameters, the perception accessors below, and previously
//! registered classifiers. No free names, no recursion.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("classifier syntax error at byte {at}: {msg}")]
    Syntax { at: usize, msg: String },
    #[error("unknown accessor or classifier `{0}`")]
    UnknownAccessor(String),
    #[error("classifier `{0}` references itself")]
    CyclicReference(String),
    #[error("`{name}` expects {expected} arguments, found {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("type error: {0}")]
    Type(String),
    #[error("unknown name `{0}` (not a parameter or hyperparameter)")]
    UnknownName(String),
    #[error("duplicate {what} `{name}`")]
    Duplicate { what: String, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Le,
    Lt,
    Ge,
    Gt,
    EqCmp,
    NeCmp,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    /// Reference to a predicate argument (an object at evaluation time).
    Param(String),
    /// Reference to a declared hyperparameter.
    Hyper(String),
    /// Accessor or sub-classifier invocation.
    Call { name: String, args: Vec<Expr> },
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinOp, left: Box<Expr>, right: Box<Expr> },
}

/// Value kinds for the little type checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Num,
    Bool,
    Obj,
}

/// Builtin perception accessors: name, argument kinds, result kind.
pub(crate) const ACCESSORS: &[(&str, &[Kind], Kind)] = &[
    ("pos_x", &[Kind::Obj], Kind::Num),
    ("pos_y", &[Kind::Obj], Kind::Num),
    ("pos_z", &[Kind::Obj], Kind::Num),
    ("roll", &[Kind::Obj], Kind::Num),
    ("pitch", &[Kind::Obj], Kind::Num),
    ("yaw", &[Kind::Obj], Kind::Num),
    ("bb_min_x", &[Kind::Obj], Kind::Num),
    ("bb_min_y", &[Kind::Obj], Kind::Num),
    ("bb_min_z", &[Kind::Obj], Kind::Num),
    ("bb_max_x", &[Kind::Obj], Kind::Num),
    ("bb_max_y", &[Kind::Obj], Kind::Num),
    ("bb_max_z", &[Kind::Obj], Kind::Num),
    ("top_z", &[Kind::Obj], Kind::Num),
    ("bottom_z", &[Kind::Obj], Kind::Num),
    ("surface_z", &[Kind::Obj], Kind::Num),
    ("gripper_is_closed", &[Kind::Obj], Kind::Bool),
    ("dist_xy", &[Kind::Obj, Kind::Obj], Kind::Num),
    ("dist_xyz", &[Kind::Obj, Kind::Obj], Kind::Num),
    ("angle_diff", &[Kind::Num, Kind::Num], Kind::Num),
    ("abs", &[Kind::Num], Kind::Num),
    ("min", &[Kind::Num, Kind::Num], Kind::Num),
    ("max", &[Kind::Num, Kind::Num], Kind::Num),
];

pub(crate) fn accessor(name: &str) -> Option<&'static (&'static str, &'static [Kind], Kind)> {
    ACCESSORS.iter().find(|(n, _, _)| *n == name)
}

/// Human-readable accessor listing for prompts: (name, argument kinds,
/// result kind).
pub fn accessor_table() -> Vec<(&'static str, String, &'static str)> {
    let kind_name = |k: &Kind| match k {
        Kind::Num => "number",
        Kind::Bool => "bool",
        Kind::Obj => "object",
    };
    ACCESSORS
        .iter()
        .map(|(name, args, ret)| {
            let args = args.iter().map(kind_name).collect::<Vec<_>>().join(", ");
            (*name, args, kind_name(ret))
        })
        .collect()
}

/// A named hyperparameter with its proposed default value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParam {
    pub name: String,
    pub default: f64,
}

/// A classifier grounding one predicate, with named hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierProgram {
    pub predicate: String,
    pub params: Vec<String>,
    pub hypers: Vec<HyperParam>,
    pub body: Expr,
    /// Original source, kept verbatim for prompts and persistence.
    pub source: String,
}

impl ClassifierProgram {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn default_assignment(&self) -> HyperAssignment {
        HyperAssignment(
            self.hypers.iter().map(|h| (h.name.clone(), h.default)).collect(),
        )
    }

    pub fn hyper_default(&self, name: &str) -> Option<f64> {
        self.hypers.iter().find(|h| h.name == name).map(|h| h.default)
    }
}

/// A concrete value for every declared hyperparameter of one program.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperAssignment(pub BTreeMap<String, f64>);

impl HyperAssignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// Must cover exactly the program's declared hyperparameters.
    pub fn covers(&self, program: &ClassifierProgram) -> bool {
        self.0.len() == program.hypers.len()
            && program.hypers.iter().all(|h| self.0.contains_key(&h.name))
    }
}

impl fmt::Display for HyperAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{}={}", k, v)?;
            first = false;
        }
        Ok(())
    }
}

/// Classifier lookup used to resolve sub-classifier calls.
pub trait ClassifierLookup {
    fn lookup(&self, name: &str) -> Option<&ClassifierProgram>;
    fn current_assignment(&self, name: &str) -> Option<&HyperAssignment>;
}

/// Empty lookup for parsing standalone programs.
pub struct NoClassifiers;

impl ClassifierLookup for NoClassifiers {
    fn lookup(&self, _name: &str) -> Option<&ClassifierProgram> {
        None
    }
    fn current_assignment(&self, _name: &str) -> Option<&HyperAssignment> {
        None
    }
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(&'static str),
}

struct Tokens {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const SYMBOLS: &[&str] = &[
    ":=", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "{", "}", ",", "=", "<", ">", "+", "-",
    "*", "/", "|", "!",
];

fn tokenize(src: &str) -> Result<Tokens, DslError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        for sym in SYMBOLS {
            if src[i..].starts_with(sym) {
                toks.push((Tok::Sym(sym), i));
                i += sym.len();
                continue 'outer;
            }
        }
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit()
                    || bytes[i] == b'.'
                    || bytes[i] == b'e'
                    || bytes[i] == b'E'
                    || ((bytes[i] == b'+' || bytes[i] == b'-')
                        && i > start
                        && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
            {
                i += 1;
            }
            let n: f64 = src[start..i]
                .parse()
                .map_err(|_| DslError::Syntax { at: start, msg: format!("bad number `{}`", &src[start..i]) })?;
            toks.push((Tok::Num(n), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            toks.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        return Err(DslError::Syntax { at: i, msg: format!("unexpected character `{}`", c) });
    }
    Ok(Tokens { toks, pos: 0 })
}

impl Tokens {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(usize::MAX)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), DslError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(DslError::Syntax {
                at: self.at(),
                msg: format!("expected `{}`, found {:?}", sym, self.peek()),
            })
        }
    }

    fn expect_ident(&mut self) -> Result<String, DslError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(DslError::Syntax {
                at: self.at(),
                msg: format!("expected identifier, found {:?}", other),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser

struct ProgramContext<'a> {
    name: &'a str,
    params: &'a [String],
    hypers: &'a [HyperParam],
    registry: &'a dyn ClassifierLookup,
}

/// Parse and validate a classifier program. Referenced classifiers must
/// already be registered in `registry`; self-reference is rejected.
pub fn parse_classifier(
    text: &str,
    registry: &dyn ClassifierLookup,
) -> Result<ClassifierProgram, DslError> {
    let mut toks = tokenize(text)?;
    let name = toks.expect_ident()?;
    toks.expect_sym("(")?;
    let mut params = Vec::new();
    if !toks.eat_sym(")") {
        loop {
            let p = toks.expect_ident()?;
            if params.contains(&p) {
                return Err(DslError::Duplicate { what: "parameter".into(), name: p });
            }
            params.push(p);
            if toks.eat_sym(")") {
                break;
            }
            toks.expect_sym(",")?;
        }
    }
    let mut hypers: Vec<HyperParam> = Vec::new();
    if toks.eat_sym("{") {
        if !toks.eat_sym("}") {
            loop {
                let h = toks.expect_ident()?;
                if hypers.iter().any(|x| x.name == h) || params.contains(&h) {
                    return Err(DslError::Duplicate { what: "hyperparameter".into(), name: h });
                }
                toks.expect_sym("=")?;
                let neg = toks.eat_sym("-");
                let v = match toks.next() {
                    Some(Tok::Num(n)) => {
                        if neg {
                            -n
                        } else {
                            n
                        }
                    }
                    other => {
                        return Err(DslError::Syntax {
                            at: toks.at(),
                            msg: format!("expected default value, found {:?}", other),
                        })
                    }
                };
                hypers.push(HyperParam { name: h, default: v });
                if toks.eat_sym("}") {
                    break;
                }
                toks.expect_sym(",")?;
            }
        }
    }
    toks.expect_sym(":=")?;
    let ctx = ProgramContext { name: &name, params: &params, hypers: &hypers, registry };
    let body = parse_or(&mut toks, &ctx)?;
    if toks.peek().is_some() {
        return Err(DslError::Syntax {
            at: toks.at(),
            msg: format!("trailing input {:?}", toks.peek()),
        });
    }
    let kind = check(&body, &ctx)?;
    if kind != Kind::Bool {
        return Err(DslError::Type("classifier body must be boolean".into()));
    }
    Ok(ClassifierProgram { predicate: name, params, hypers, body, source: text.to_string() })
}

fn parse_or(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    let mut left = parse_and(toks, ctx)?;
    while toks.eat_sym("||") {
        let right = parse_and(toks, ctx)?;
        left = Expr::Binary { op: BinOp::Or, left: Box::new(left), right: Box::new(right) };
    }
    Ok(left)
}

fn parse_and(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    let mut left = parse_not(toks, ctx)?;
    while toks.eat_sym("&&") {
        let right = parse_not(toks, ctx)?;
        left = Expr::Binary { op: BinOp::And, left: Box::new(left), right: Box::new(right) };
    }
    Ok(left)
}

fn parse_not(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    if toks.eat_sym("!") {
        let inner = parse_not(toks, ctx)?;
        return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(inner) });
    }
    parse_cmp(toks, ctx)
}

fn parse_cmp(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    let left = parse_add(toks, ctx)?;
    let op = match toks.peek() {
        Some(Tok::Sym("<=")) => Some(BinOp::Le),
        Some(Tok::Sym("<")) => Some(BinOp::Lt),
        Some(Tok::Sym(">=")) => Some(BinOp::Ge),
        Some(Tok::Sym(">")) => Some(BinOp::Gt),
        Some(Tok::Sym("==")) => Some(BinOp::EqCmp),
        Some(Tok::Sym("!=")) => Some(BinOp::NeCmp),
        _ => None,
    };
    if let Some(op) = op {
        toks.next();
        let right = parse_add(toks, ctx)?;
        return Ok(Expr::Binary { op, left: Box::new(left), right: Box::new(right) });
    }
    Ok(left)
}

fn parse_add(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    let mut left = parse_mul(toks, ctx)?;
    loop {
        let op = match toks.peek() {
            Some(Tok::Sym("+")) => BinOp::Add,
            Some(Tok::Sym("-")) => BinOp::Sub,
            _ => break,
        };
        toks.next();
        let right = parse_mul(toks, ctx)?;
        left = Expr::Binary { op, left: Box::new(left), right: Box::new(right) };
    }
    Ok(left)
}

fn parse_mul(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    let mut left = parse_unary(toks, ctx)?;
    loop {
        let op = match toks.peek() {
            Some(Tok::Sym("*")) => BinOp::Mul,
            Some(Tok::Sym("/")) => BinOp::Div,
            _ => break,
        };
        toks.next();
        let right = parse_unary(toks, ctx)?;
        left = Expr::Binary { op, left: Box::new(left), right: Box::new(right) };
    }
    Ok(left)
}

fn parse_unary(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    if toks.eat_sym("-") {
        let inner = parse_unary(toks, ctx)?;
        return Ok(Expr::Unary { op: UnaryOp::Neg, expr: Box::new(inner) });
    }
    parse_primary(toks, ctx)
}

fn parse_primary(toks: &mut Tokens, ctx: &ProgramContext) -> Result<Expr, DslError> {
    if toks.eat_sym("(") {
        let inner = parse_or(toks, ctx)?;
        toks.expect_sym(")")?;
        return Ok(inner);
    }
    if toks.eat_sym("|") {
        let inner = parse_add(toks, ctx)?;
        toks.expect_sym("|")?;
        return Ok(Expr::Unary { op: UnaryOp::Abs, expr: Box::new(inner) });
    }
    match toks.next() {
        Some(Tok::Num(n)) => Ok(Expr::Num(n)),
        Some(Tok::Ident(id)) => {
            if toks.eat_sym("(") {
                let mut args = Vec::new();
                if !toks.eat_sym(")") {
                    loop {
                        args.push(parse_or(toks, ctx)?);
                        if toks.eat_sym(")") {
                            break;
                        }
                        toks.expect_sym(",")?;
                    }
                }
                return Ok(Expr::Call { name: id, args });
            }
            match id.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                _ => {
                    if ctx.params.contains(&id) {
                        Ok(Expr::Param(id))
                    } else if ctx.hypers.iter().any(|h| h.name == id) {
                        Ok(Expr::Hyper(id))
                    } else {
                        Err(DslError::UnknownName(id))
                    }
                }
            }
        }
        other => Err(DslError::Syntax {
            at: toks.at(),
            msg: format!("expected expression, found {:?}", other),
        }),
    }
}

// ---------------------------------------------------------------------------
// Type / reference checking

fn check(expr: &Expr, ctx: &ProgramContext) -> Result<Kind, DslError> {
    match expr {
        Expr::Num(_) => Ok(Kind::Num),
        Expr::Bool(_) => Ok(Kind::Bool),
        Expr::Param(_) => Ok(Kind::Obj),
        Expr::Hyper(_) => Ok(Kind::Num),
        Expr::Unary { op, expr } => {
            let k = check(expr, ctx)?;
            match op {
                UnaryOp::Neg | UnaryOp::Abs if k == Kind::Num => Ok(Kind::Num),
                UnaryOp::Not if k == Kind::Bool => Ok(Kind::Bool),
                _ => Err(DslError::Type(format!("{:?} applied to {:?}", op, k))),
            }
        }
        Expr::Binary { op, left, right } => {
            let l = check(left, ctx)?;
            let r = check(right, ctx)?;
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                    if l == Kind::Num && r == Kind::Num {
                        Ok(Kind::Num)
                    } else {
                        Err(DslError::Type(format!("arithmetic on {:?} and {:?}", l, r)))
                    }
                }
                BinOp::Le | BinOp::Lt | BinOp::Ge | BinOp::Gt | BinOp::EqCmp | BinOp::NeCmp => {
                    if l == Kind::Num && r == Kind::Num {
                        Ok(Kind::Bool)
                    } else {
                        Err(DslError::Type(format!("comparison of {:?} and {:?}", l, r)))
                    }
                }
                BinOp::And | BinOp::Or => {
                    if l == Kind::Bool && r == Kind::Bool {
                        Ok(Kind::Bool)
                    } else {
                        Err(DslError::Type(format!("boolean op on {:?} and {:?}", l, r)))
                    }
                }
            }
        }
        Expr::Call { name, args } => {
            if let Some((_, kinds, ret)) = accessor(name) {
                if args.len() != kinds.len() {
                    return Err(DslError::Arity {
                        name: name.clone(),
                        expected: kinds.len(),
                        found: args.len(),
                    });
                }
                for (arg, want) in args.iter().zip(kinds.iter()) {
                    let got = check(arg, ctx)?;
                    if got != *want {
                        return Err(DslError::Type(format!(
                            "{} argument is {:?}, expected {:?}",
                            name, got, want
                        )));
                    }
                }
                return Ok(*ret);
            }
            if name == ctx.name {
                return Err(DslError::CyclicReference(name.clone()));
            }
            if let Some(sub) = ctx.registry.lookup(name) {
                if args.len() != sub.arity() {
                    return Err(DslError::Arity {
                        name: name.clone(),
                        expected: sub.arity(),
                        found: args.len(),
                    });
                }
                for arg in args {
                    let got = check(arg, ctx)?;
                    if got != Kind::Obj {
                        return Err(DslError::Type(format!(
                            "classifier {} takes object arguments, found {:?}",
                            name, got
                        )));
                    }
                }
                return Ok(Kind::Bool);
            }
            Err(DslError::UnknownAccessor(name.clone()))
        }
    }
}
