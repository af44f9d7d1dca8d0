use std::collections::BTreeSet;

use thiserror::Error;

use super::types::{
    DomainModel, Goal, GroundAtom, LiftedAtom, LiftedLiteral, OperatorDef, PredicateKind,
    PredicateSchema, Problem, Term, TypedParam,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: expected {expected:?}, found `{found}`")]
    Syntax { line: u32, col: u32, expected: Vec<String>, found: String },
    #[error("unsupported feature `{feature}` at {line}:{col}")]
    UnsupportedFeature { feature: String, line: u32, col: u32 },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("predicate `{predicate}` expects {expected} arguments, found {found}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
    #[error("unbound variable `?{variable}` in operator `{operator}`")]
    UnboundVariable { variable: String, operator: String },
    #[error("duplicate {what} `{name}`")]
    DuplicateName { what: String, name: String },
    #[error("operator `{operator}` adds and deletes the same atom {atom}")]
    ConflictingEffects { operator: String, atom: String },
}

// ---------------------------------------------------------------------------
// S-expression layer

#[derive(Debug, Clone)]
enum SExpr {
    Sym { text: String, line: u32, col: u32 },
    List { items: Vec<SExpr>, line: u32, col: u32 },
}

impl SExpr {
    fn pos(&self) -> (u32, u32) {
        match self {
            SExpr::Sym { line, col, .. } | SExpr::List { line, col, .. } => (*line, *col),
        }
    }

    fn as_sym(&self) -> Option<&str> {
        match self {
            SExpr::Sym { text, .. } => Some(text),
            _ => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            SExpr::Sym { text, .. } => text.clone(),
            SExpr::List { .. } => "(...)".to_string(),
        }
    }
}

fn syntax(expected: &[&str], at: &SExpr) -> PddlError {
    let (line, col) = at.pos();
    PddlError::Syntax {
        line,
        col,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: at.describe(),
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self, ch: char) {
        self.pos += ch.len_utf8();
        if ch == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(ch) = self.src[self.pos..].chars().next() {
            if ch == ';' {
                while let Some(c) = self.src[self.pos..].chars().next() {
                    self.bump(c);
                    if c == '\n' {
                        break;
                    }
                }
            } else if ch.is_whitespace() {
                self.bump(ch);
            } else {
                break;
            }
        }
    }

    fn parse_expr(&mut self) -> Result<SExpr, PddlError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        match self.src[self.pos..].chars().next() {
            None => Err(PddlError::Syntax {
                line,
                col,
                expected: vec!["(".into(), "symbol".into()],
                found: "end of input".into(),
            }),
            Some('(') => {
                self.bump('(');
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.src[self.pos..].chars().next() {
                        None => {
                            return Err(PddlError::Syntax {
                                line: self.line,
                                col: self.col,
                                expected: vec![")".into()],
                                found: "end of input".into(),
                            })
                        }
                        Some(')') => {
                            self.bump(')');
                            return Ok(SExpr::List { items, line, col });
                        }
                        Some(_) => items.push(self.parse_expr()?),
                    }
                }
            }
            Some(')') => Err(PddlError::Syntax {
                line,
                col,
                expected: vec!["(".into(), "symbol".into()],
                found: ")".into(),
            }),
            Some(_) => {
                let mut text = String::new();
                while let Some(c) = self.src[self.pos..].chars().next() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    text.push(c);
                    self.bump(c);
                }
                Ok(SExpr::Sym { text, line, col })
            }
        }
    }

    fn parse_top(&mut self) -> Result<SExpr, PddlError> {
        let expr = self.parse_expr()?;
        self.skip_trivia();
        if self.pos < self.src.len() {
            return Err(PddlError::Syntax {
                line: self.line,
                col: self.col,
                expected: vec!["end of input".into()],
                found: self.src[self.pos..].chars().next().unwrap().to_string(),
            });
        }
        Ok(expr)
    }
}

// ---------------------------------------------------------------------------
// Typed lists

/// Parse `a b c - ty d - ty2 e` style lists. Untyped trailing names get
/// `object`.
fn parse_typed_list(items: &[SExpr]) -> Result<Vec<(String, String)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = items[i].as_sym().ok_or_else(|| syntax(&["name"], &items[i]))?;
        if sym == "-" {
            i += 1;
            let ty = items
                .get(i)
                .and_then(|e| e.as_sym())
                .ok_or_else(|| syntax(&["type name"], &items[i - 1]))?;
            for name in pending.drain(..) {
                out.push((name, ty.to_string()));
            }
            i += 1;
        } else {
            pending.push(sym.to_string());
            i += 1;
        }
    }
    for name in pending {
        out.push((name, "object".to_string()));
    }
    Ok(out)
}

const SUPPORTED_REQUIREMENTS: &[&str] =
    &[":strips", ":typing", ":negative-preconditions", ":equality"];

const UNSUPPORTED_CONNECTIVES: &[&str] = &["or", "forall", "exists", "when", "imply"];

// ---------------------------------------------------------------------------
// Domain parsing

/// Parse a PDDL domain in the STRIPS + typing + negative-preconditions +
/// equality fragment. Round-trip stable with [`super::print_domain`].
pub fn parse_domain(text: &str) -> Result<DomainModel, PddlError> {
    let top = Lexer::new(text).parse_top()?;
    let items = match &top {
        SExpr::List { items, .. } => items,
        _ => return Err(syntax(&["(define ...)"], &top)),
    };
    if items.first().and_then(|e| e.as_sym()) != Some("define") {
        return Err(syntax(&["define"], items.first().unwrap_or(&top)));
    }
    let header = items.get(1).ok_or_else(|| syntax(&["(domain NAME)"], &top))?;
    let name = match header {
        SExpr::List { items, .. }
            if items.len() == 2 && items[0].as_sym() == Some("domain") =>
        {
            items[1].as_sym().ok_or_else(|| syntax(&["domain name"], &items[1]))?.to_string()
        }
        other => return Err(syntax(&["(domain NAME)"], other)),
    };

    let mut domain = DomainModel::new(name);
    let mut pending_actions: Vec<&SExpr> = Vec::new();

    for section in &items[2..] {
        let parts = match section {
            SExpr::List { items, .. } => items,
            other => return Err(syntax(&["domain section"], other)),
        };
        let head = parts.first().and_then(|e| e.as_sym()).unwrap_or("");
        match head {
            ":requirements" => {
                for req in &parts[1..] {
                    let r = req.as_sym().unwrap_or("");
                    if !SUPPORTED_REQUIREMENTS.contains(&r) {
                        let (line, col) = req.pos();
                        return Err(PddlError::UnsupportedFeature {
                            feature: r.to_string(),
                            line,
                            col,
                        });
                    }
                }
            }
            ":types" => {
                for (ty, parent) in parse_typed_list(&parts[1..])? {
                    domain.types.declare(ty, parent);
                }
            }
            ":predicates" => {
                for decl in &parts[1..] {
                    let schema = parse_predicate_decl(decl)?;
                    if domain.predicates.contains_key(&schema.name) {
                        return Err(PddlError::DuplicateName {
                            what: "predicate".into(),
                            name: schema.name,
                        });
                    }
                    domain.predicates.insert(schema.name.clone(), schema);
                }
            }
            ":action" => pending_actions.push(section),
            other => {
                let (line, col) = section.pos();
                return Err(PddlError::UnsupportedFeature { feature: other.to_string(), line, col });
            }
        }
    }

    // Types referenced by predicate parameters must resolve.
    for schema in domain.predicates.values() {
        for (_, ty) in &schema.params {
            if !domain.types.contains(ty) {
                return Err(PddlError::UnknownType(ty.clone()));
            }
        }
    }

    for action in pending_actions {
        let op = parse_action(action, &domain)?;
        if domain.operators.contains_key(&op.name) {
            return Err(PddlError::DuplicateName { what: "operator".into(), name: op.name });
        }
        domain.operators.insert(op.name.clone(), op);
    }

    Ok(domain)
}

fn parse_predicate_decl(decl: &SExpr) -> Result<PredicateSchema, PddlError> {
    let items = match decl {
        SExpr::List { items, .. } if !items.is_empty() => items,
        other => return Err(syntax(&["(name ?v - type ...)"], other)),
    };
    let name = items[0].as_sym().ok_or_else(|| syntax(&["predicate name"], &items[0]))?;
    let mut params = Vec::new();
    let mut seen = BTreeSet::new();
    for (var, ty) in parse_typed_list(&items[1..])? {
        let var = var.strip_prefix('?').ok_or_else(|| syntax(&["?variable"], decl))?.to_string();
        if !seen.insert(var.clone()) {
            return Err(PddlError::DuplicateName { what: "parameter".into(), name: var });
        }
        params.push((var, ty));
    }
    Ok(PredicateSchema::new(name, params, PredicateKind::StateBased))
}

/// Parse an `(:action ...)` form against the predicates already declared in
/// `domain`. Exposed to the oracle response parser via the crate-internal
/// [`parse_operator`].
fn parse_action(section: &SExpr, domain: &DomainModel) -> Result<OperatorDef, PddlError> {
    let items = match section {
        SExpr::List { items, .. } => items,
        other => return Err(syntax(&["(:action ...)"], other)),
    };
    let name = items
        .get(1)
        .and_then(|e| e.as_sym())
        .ok_or_else(|| syntax(&["action name"], section))?
        .to_string();

    let mut params: Vec<TypedParam> = Vec::new();
    let mut precondition = Vec::new();
    let mut add_effects = Vec::new();
    let mut del_effects = Vec::new();

    let mut i = 2;
    while i < items.len() {
        let key = items[i].as_sym().ok_or_else(|| {
            syntax(&[":parameters", ":precondition", ":effect"], &items[i])
        })?;
        let value = items
            .get(i + 1)
            .ok_or_else(|| syntax(&["section body"], &items[i]))?;
        match key {
            ":parameters" => {
                let list = match value {
                    SExpr::List { items, .. } => items,
                    other => return Err(syntax(&["(?v - type ...)"], other)),
                };
                let mut seen = BTreeSet::new();
                for (var, ty) in parse_typed_list(list)? {
                    let var = var
                        .strip_prefix('?')
                        .ok_or_else(|| syntax(&["?variable"], value))?
                        .to_string();
                    if !seen.insert(var.clone()) {
                        return Err(PddlError::DuplicateName { what: "parameter".into(), name: var });
                    }
                    if !domain.types.contains(&ty) {
                        return Err(PddlError::UnknownType(ty));
                    }
                    params.push(TypedParam { name: var, ty });
                }
            }
            ":precondition" => parse_condition(value, &name, &params, domain, &mut precondition)?,
            ":effect" => {
                parse_effect(value, &name, &params, domain, &mut add_effects, &mut del_effects)?
            }
            other => {
                let (line, col) = items[i].pos();
                return Err(PddlError::UnsupportedFeature { feature: other.to_string(), line, col });
            }
        }
        i += 2;
    }

    let op = OperatorDef::new(name.clone(), params, precondition, add_effects, del_effects);
    for atom in &op.add_effects {
        if op.del_effects.contains(atom) {
            return Err(PddlError::ConflictingEffects { operator: name, atom: atom.to_string() });
        }
    }
    Ok(op)
}

/// Parse a single `(:action ...)` block against an existing domain's
/// predicates and types.
pub fn parse_operator(text: &str, domain: &DomainModel) -> Result<OperatorDef, PddlError> {
    let expr = Lexer::new(text).parse_top()?;
    parse_action(&expr, domain)
}

/// Parse a single `(:action ...)` block without a declared-predicate
/// context: predicate schemas and parameter types are inferred from usage.
/// Used when interpreting oracle responses whose predicate declarations
/// arrive in the same message, and by rule-based oracles.
pub fn parse_operator_lenient(text: &str) -> Result<OperatorDef, PddlError> {
    let expr = Lexer::new(text).parse_top()?;
    let mut scratch = DomainModel::new("scratch");
    collect_lenient_context(&expr, &mut scratch)?;
    parse_action(&expr, &scratch)
}

/// Pre-scan an action s-expression, declaring every referenced type and
/// predicate (arity from first usage) into `domain`.
fn collect_lenient_context(expr: &SExpr, domain: &mut DomainModel) -> Result<(), PddlError> {
    let items = match expr {
        SExpr::List { items, .. } => items,
        _ => return Ok(()),
    };
    let mut i = 2;
    while i + 1 < items.len() + 1 {
        let Some(key) = items.get(i).and_then(|e| e.as_sym()) else { break };
        let Some(value) = items.get(i + 1) else { break };
        match key {
            ":parameters" => {
                if let SExpr::List { items, .. } = value {
                    for (_, ty) in parse_typed_list(items)? {
                        if !domain.types.contains(&ty) {
                            domain.types.declare(ty, "object");
                        }
                    }
                }
            }
            ":precondition" | ":effect" => collect_atoms_lenient(value, domain),
            _ => {}
        }
        i += 2;
    }
    Ok(())
}

fn collect_atoms_lenient(expr: &SExpr, domain: &mut DomainModel) {
    let SExpr::List { items, .. } = expr else { return };
    let Some(head) = items.first().and_then(|e| e.as_sym()) else { return };
    match head {
        "and" | "not" => {
            for sub in &items[1..] {
                collect_atoms_lenient(sub, domain);
            }
        }
        "=" => {}
        pred => {
            if !domain.predicates.contains_key(pred) {
                let params = (0..items.len() - 1)
                    .map(|i| (format!("a{}", i), "object".to_string()))
                    .collect();
                domain.predicates.insert(
                    pred.to_string(),
                    PredicateSchema::new(pred, params, PredicateKind::StateBased),
                );
            }
        }
    }
}

fn term_from_sym(
    sym: &str,
    operator: &str,
    params: &[TypedParam],
    in_effect: bool,
) -> Result<Term, PddlError> {
    if let Some(var) = sym.strip_prefix('?') {
        if var == "_" {
            if in_effect {
                return Err(PddlError::UnboundVariable {
                    variable: "_".into(),
                    operator: operator.into(),
                });
            }
            return Ok(Term::Anon);
        }
        if params.iter().any(|p| p.name == var) {
            Ok(Term::Var(var.to_string()))
        } else {
            Err(PddlError::UnboundVariable { variable: var.to_string(), operator: operator.into() })
        }
    } else {
        Ok(Term::Const(sym.to_string()))
    }
}

fn parse_lifted_atom(
    expr: &SExpr,
    operator: &str,
    params: &[TypedParam],
    domain: &DomainModel,
    in_effect: bool,
) -> Result<LiftedAtom, PddlError> {
    let items = match expr {
        SExpr::List { items, .. } if !items.is_empty() => items,
        SExpr::List { .. } => return Err(syntax(&["predicate atom"], expr)),
        other => return Err(syntax(&["(predicate ...)"], other)),
    };
    let pred = items[0].as_sym().ok_or_else(|| syntax(&["predicate name"], &items[0]))?;
    let schema = domain
        .predicate(pred)
        .ok_or_else(|| PddlError::UnknownPredicate(pred.to_string()))?;
    let mut args = Vec::new();
    for arg in &items[1..] {
        let sym = arg.as_sym().ok_or_else(|| syntax(&["term"], arg))?;
        args.push(term_from_sym(sym, operator, params, in_effect)?);
    }
    if args.len() != schema.arity() {
        return Err(PddlError::ArityMismatch {
            predicate: pred.to_string(),
            expected: schema.arity(),
            found: args.len(),
        });
    }
    Ok(LiftedAtom { predicate: pred.to_string(), args })
}

fn parse_condition(
    expr: &SExpr,
    operator: &str,
    params: &[TypedParam],
    domain: &DomainModel,
    out: &mut Vec<LiftedLiteral>,
) -> Result<(), PddlError> {
    let items = match expr {
        SExpr::List { items, .. } => items,
        other => return Err(syntax(&["condition"], other)),
    };
    if items.is_empty() {
        return Ok(());
    }
    let head = items[0].as_sym().unwrap_or("");
    if UNSUPPORTED_CONNECTIVES.contains(&head) {
        let (line, col) = expr.pos();
        return Err(PddlError::UnsupportedFeature { feature: head.to_string(), line, col });
    }
    match head {
        "and" => {
            for sub in &items[1..] {
                parse_condition(sub, operator, params, domain, out)?;
            }
            Ok(())
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(&["literal"], expr))?;
            let inner_items = match inner {
                SExpr::List { items, .. } => items,
                other => return Err(syntax(&["(predicate ...)"], other)),
            };
            if inner_items.first().and_then(|e| e.as_sym()) == Some("=") {
                let (left, right) = parse_equality(inner_items, operator, params)?;
                out.push(LiftedLiteral::Equality { left, right, negated: true });
            } else {
                let atom = parse_lifted_atom(inner, operator, params, domain, false)?;
                out.push(LiftedLiteral::Atom { atom, negated: true });
            }
            Ok(())
        }
        "=" => {
            let (left, right) = parse_equality(items, operator, params)?;
            out.push(LiftedLiteral::Equality { left, right, negated: false });
            Ok(())
        }
        _ => {
            let atom = parse_lifted_atom(expr, operator, params, domain, false)?;
            out.push(LiftedLiteral::Atom { atom, negated: false });
            Ok(())
        }
    }
}

fn parse_equality(
    items: &[SExpr],
    operator: &str,
    params: &[TypedParam],
) -> Result<(Term, Term), PddlError> {
    if items.len() != 3 {
        return Err(syntax(&["(= term term)"], &items[0]));
    }
    let l = items[1].as_sym().ok_or_else(|| syntax(&["term"], &items[1]))?;
    let r = items[2].as_sym().ok_or_else(|| syntax(&["term"], &items[2]))?;
    Ok((term_from_sym(l, operator, params, false)?, term_from_sym(r, operator, params, false)?))
}

fn parse_effect(
    expr: &SExpr,
    operator: &str,
    params: &[TypedParam],
    domain: &DomainModel,
    add: &mut Vec<LiftedAtom>,
    del: &mut Vec<LiftedAtom>,
) -> Result<(), PddlError> {
    let items = match expr {
        SExpr::List { items, .. } => items,
        other => return Err(syntax(&["effect"], other)),
    };
    if items.is_empty() {
        return Ok(());
    }
    let head = items[0].as_sym().unwrap_or("");
    if UNSUPPORTED_CONNECTIVES.contains(&head) {
        let (line, col) = expr.pos();
        return Err(PddlError::UnsupportedFeature { feature: head.to_string(), line, col });
    }
    match head {
        "and" => {
            for sub in &items[1..] {
                parse_effect(sub, operator, params, domain, add, del)?;
            }
            Ok(())
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(&["atom"], expr))?;
            del.push(parse_lifted_atom(inner, operator, params, domain, true)?);
            Ok(())
        }
        _ => {
            add.push(parse_lifted_atom(expr, operator, params, domain, true)?);
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Problem parsing

/// Parse a PDDL problem against `domain`.
pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<Problem, PddlError> {
    parse_problem_with_warnings(text, domain).map(|(p, _)| p)
}

/// Like [`parse_problem`] but also returns warnings. Negated atoms in `:init`
/// are dropped under the closed-world assumption and reported here.
pub fn parse_problem_with_warnings(
    text: &str,
    domain: &DomainModel,
) -> Result<(Problem, Vec<String>), PddlError> {
    let top = Lexer::new(text).parse_top()?;
    let items = match &top {
        SExpr::List { items, .. } => items,
        _ => return Err(syntax(&["(define ...)"], &top)),
    };
    if items.first().and_then(|e| e.as_sym()) != Some("define") {
        return Err(syntax(&["define"], items.first().unwrap_or(&top)));
    }
    let header = items.get(1).ok_or_else(|| syntax(&["(problem NAME)"], &top))?;
    let name = match header {
        SExpr::List { items, .. }
            if items.len() == 2 && items[0].as_sym() == Some("problem") =>
        {
            items[1].as_sym().ok_or_else(|| syntax(&["problem name"], &items[1]))?.to_string()
        }
        other => return Err(syntax(&["(problem NAME)"], other)),
    };

    let mut problem = Problem::new(name, String::new());
    let mut warnings = Vec::new();

    for section in &items[2..] {
        let parts = match section {
            SExpr::List { items, .. } => items,
            other => return Err(syntax(&["problem section"], other)),
        };
        let head = parts.first().and_then(|e| e.as_sym()).unwrap_or("");
        match head {
            ":domain" => {
                problem.domain_name = parts
                    .get(1)
                    .and_then(|e| e.as_sym())
                    .ok_or_else(|| syntax(&["domain name"], section))?
                    .to_string();
            }
            ":objects" => {
                for (obj, ty) in parse_typed_list(&parts[1..])? {
                    if !domain.types.contains(&ty) {
                        return Err(PddlError::UnknownType(ty));
                    }
                    if problem.objects.insert(obj.clone(), ty).is_some() {
                        return Err(PddlError::DuplicateName { what: "object".into(), name: obj });
                    }
                }
            }
            ":init" => {
                for entry in &parts[1..] {
                    match entry {
                        SExpr::List { items, .. }
                            if items.first().and_then(|e| e.as_sym()) == Some("not") =>
                        {
                            warnings.push(format!(
                                "dropped negated init atom {} (closed world)",
                                items.get(1).map(|e| e.describe()).unwrap_or_default()
                            ));
                        }
                        _ => {
                            let atom = parse_ground_atom(entry, domain, &problem)?;
                            problem.init.insert(atom);
                        }
                    }
                }
            }
            ":goal" => {
                let body = parts.get(1).ok_or_else(|| syntax(&["goal body"], section))?;
                let (pos, neg) = parse_goal(body, domain, &problem)?;
                problem.goal = Goal::new(pos, neg);
            }
            other => {
                let (line, col) = section.pos();
                return Err(PddlError::UnsupportedFeature { feature: other.to_string(), line, col });
            }
        }
    }

    Ok((problem, warnings))
}

fn parse_ground_atom(
    expr: &SExpr,
    domain: &DomainModel,
    problem: &Problem,
) -> Result<GroundAtom, PddlError> {
    let items = match expr {
        SExpr::List { items, .. } if !items.is_empty() => items,
        other => return Err(syntax(&["(predicate obj ...)"], other)),
    };
    let pred = items[0].as_sym().ok_or_else(|| syntax(&["predicate name"], &items[0]))?;
    let schema = domain
        .predicate(pred)
        .ok_or_else(|| PddlError::UnknownPredicate(pred.to_string()))?;
    let mut args = Vec::new();
    for arg in &items[1..] {
        let obj = arg.as_sym().ok_or_else(|| syntax(&["object name"], arg))?;
        if !problem.objects.contains_key(obj) {
            return Err(PddlError::UnknownObject(obj.to_string()));
        }
        args.push(obj.to_string());
    }
    if args.len() != schema.arity() {
        return Err(PddlError::ArityMismatch {
            predicate: pred.to_string(),
            expected: schema.arity(),
            found: args.len(),
        });
    }
    Ok(GroundAtom::new(pred, args))
}

fn parse_goal(
    expr: &SExpr,
    domain: &DomainModel,
    problem: &Problem,
) -> Result<(BTreeSet<GroundAtom>, BTreeSet<GroundAtom>), PddlError> {
    let mut pos = BTreeSet::new();
    let mut neg = BTreeSet::new();
    collect_goal(expr, domain, problem, &mut pos, &mut neg)?;
    Ok((pos, neg))
}

fn collect_goal(
    expr: &SExpr,
    domain: &DomainModel,
    problem: &Problem,
    pos: &mut BTreeSet<GroundAtom>,
    neg: &mut BTreeSet<GroundAtom>,
) -> Result<(), PddlError> {
    let items = match expr {
        SExpr::List { items, .. } => items,
        other => return Err(syntax(&["goal condition"], other)),
    };
    if items.is_empty() {
        return Ok(());
    }
    let head = items[0].as_sym().unwrap_or("");
    if UNSUPPORTED_CONNECTIVES.contains(&head) {
        let (line, col) = expr.pos();
        return Err(PddlError::UnsupportedFeature { feature: head.to_string(), line, col });
    }
    match head {
        "and" => {
            for sub in &items[1..] {
                collect_goal(sub, domain, problem, pos, neg)?;
            }
        }
        "not" => {
            let inner = items.get(1).ok_or_else(|| syntax(&["atom"], expr))?;
            neg.insert(parse_ground_atom(inner, domain, problem)?);
        }
        _ => {
            pos.insert(parse_ground_atom(expr, domain, problem)?);
        }
    }
    Ok(())
}

