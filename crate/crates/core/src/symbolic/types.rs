use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Whether a predicate can be grounded from the continuous environment state.
///
/// `StateBased` predicates have classifiers and are checked during motion
/// verification; `StateIndependent` predicates encode fixed affordances and
/// are never evaluated against the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredicateKind {
    StateBased,
    StateIndependent,
}

impl PredicateKind {
    /// Oracle responses label predicates as `state` or `other`.
    pub fn from_label(label: &str) -> Self {
        if label.trim().eq_ignore_ascii_case("state") {
            PredicateKind::StateBased
        } else {
            PredicateKind::StateIndependent
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PredicateKind::StateBased => "state",
            PredicateKind::StateIndependent => "other",
        }
    }
}

/// A lifted predicate declaration: name, typed parameters and kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PredicateSchema {
    pub name: String,
    /// Ordered (variable-name, type-name) pairs. Variable names carry no `?`.
    pub params: Vec<(String, String)>,
    pub kind: PredicateKind,
    pub description: String,
}

impl PredicateSchema {
    pub fn new(name: impl Into<String>, params: Vec<(String, String)>, kind: PredicateKind) -> Self {
        PredicateSchema { name: name.into(), params, kind, description: String::new() }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// A predicate applied to concrete objects. Equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<String>) -> Self {
        GroundAtom { predicate: predicate.into(), args }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {}", a)?;
        }
        write!(f, ")")
    }
}

/// Set of true ground atoms under the closed-world assumption.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolicState {
    pub atoms: BTreeSet<GroundAtom>,
}

impl SymbolicState {
    pub fn new() -> Self {
        SymbolicState { atoms: BTreeSet::new() }
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        SymbolicState { atoms: atoms.into_iter().collect() }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn insert(&mut self, atom: GroundAtom) {
        self.atoms.insert(atom);
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroundAtom> {
        self.atoms.iter()
    }

    /// Keep only atoms whose predicate name is in `predicates`.
    pub fn restricted_to(&self, predicates: &BTreeSet<String>) -> SymbolicState {
        SymbolicState {
            atoms: self.atoms.iter().filter(|a| predicates.contains(&a.predicate)).cloned().collect(),
        }
    }
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for atom in &self.atoms {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{}", atom)?;
            first = false;
        }
        Ok(())
    }
}

/// Argument of a lifted atom: an operator parameter, a constant object name,
/// or the anonymous wildcard `?_` (only meaningful inside preconditions).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
    Anon,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{}", v),
            Term::Const(c) => write!(f, "{}", c),
            Term::Anon => write!(f, "?_"),
        }
    }
}

/// A predicate applied to terms, used in operator preconditions and effects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiftedAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl fmt::Display for LiftedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {}", a)?;
        }
        write!(f, ")")
    }
}

/// A possibly negated condition: a predicate literal or an equality test.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LiftedLiteral {
    Atom { atom: LiftedAtom, negated: bool },
    Equality { left: Term, right: Term, negated: bool },
}

impl fmt::Display for LiftedLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LiftedLiteral::Atom { atom, negated: false } => write!(f, "{}", atom),
            LiftedLiteral::Atom { atom, negated: true } => write!(f, "(not {})", atom),
            LiftedLiteral::Equality { left, right, negated: false } => {
                write!(f, "(= {} {})", left, right)
            }
            LiftedLiteral::Equality { left, right, negated: true } => {
                write!(f, "(not (= {} {}))", left, right)
            }
        }
    }
}

/// A typed operator parameter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

impl fmt::Display for TypedParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{} - {}", self.name, self.ty)
    }
}

/// A lifted action schema: preconditions plus add and delete effects.
///
/// Preconditions and effects are kept in canonical sorted order so that
/// structurally equal operators compare equal regardless of source order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OperatorDef {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub precondition: Vec<LiftedLiteral>,
    pub add_effects: Vec<LiftedAtom>,
    pub del_effects: Vec<LiftedAtom>,
}

impl OperatorDef {
    pub fn new(
        name: impl Into<String>,
        params: Vec<TypedParam>,
        mut precondition: Vec<LiftedLiteral>,
        mut add_effects: Vec<LiftedAtom>,
        mut del_effects: Vec<LiftedAtom>,
    ) -> Self {
        precondition.sort();
        precondition.dedup();
        add_effects.sort();
        add_effects.dedup();
        del_effects.sort();
        del_effects.dedup();
        OperatorDef { name: name.into(), params, precondition, add_effects, del_effects }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn param_index(&self, var: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == var)
    }
}

/// Type tree rooted at `object`. Maps each declared type to its parent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeHierarchy {
    pub parents: BTreeMap<String, String>,
}

impl TypeHierarchy {
    pub fn new() -> Self {
        TypeHierarchy { parents: BTreeMap::new() }
    }

    pub fn declare(&mut self, ty: impl Into<String>, parent: impl Into<String>) {
        self.parents.insert(ty.into(), parent.into());
    }

    pub fn contains(&self, ty: &str) -> bool {
        ty == "object" || self.parents.contains_key(ty)
    }

    /// True when `sub` equals `sup` or is a descendant of it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        if sub == sup || sup == "object" {
            return true;
        }
        let mut cur = sub;
        while let Some(parent) = self.parents.get(cur) {
            if parent == sup {
                return true;
            }
            cur = parent;
        }
        false
    }
}

/// Domain model: type tree, predicate schemas and operators.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DomainModel {
    pub name: String,
    pub types: TypeHierarchy,
    pub predicates: BTreeMap<String, PredicateSchema>,
    pub operators: BTreeMap<String, OperatorDef>,
}

impl DomainModel {
    pub fn new(name: impl Into<String>) -> Self {
        DomainModel {
            name: name.into(),
            types: TypeHierarchy::new(),
            predicates: BTreeMap::new(),
            operators: BTreeMap::new(),
        }
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateSchema> {
        self.predicates.get(name)
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorDef> {
        self.operators.get(name)
    }

    /// Names of all predicates in this domain.
    pub fn predicate_names(&self) -> BTreeSet<String> {
        self.predicates.keys().cloned().collect()
    }

    /// Names of state-based predicates in this domain.
    pub fn state_based_predicates(&self) -> BTreeSet<String> {
        self.predicates
            .values()
            .filter(|p| p.kind == PredicateKind::StateBased)
            .map(|p| p.name.clone())
            .collect()
    }

    /// A copy containing only the named operators.
    pub fn restricted_to_operators(&self, keep: &BTreeSet<String>) -> DomainModel {
        DomainModel {
            name: self.name.clone(),
            types: self.types.clone(),
            predicates: self.predicates.clone(),
            operators: self
                .operators
                .iter()
                .filter(|(name, _)| keep.contains(*name))
                .map(|(n, o)| (n.clone(), o.clone()))
                .collect(),
        }
    }
}

/// Conjunctive goal split into positive and negative ground atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Goal {
    pub pos: BTreeSet<GroundAtom>,
    pub neg: BTreeSet<GroundAtom>,
}

impl Goal {
    pub fn new(pos: BTreeSet<GroundAtom>, neg: BTreeSet<GroundAtom>) -> Self {
        Goal { pos, neg }
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty() && self.neg.is_empty()
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(and")?;
        for a in &self.pos {
            write!(f, " {}", a)?;
        }
        for a in &self.neg {
            write!(f, " (not {})", a)?;
        }
        write!(f, ")")
    }
}

/// Planning problem: typed objects, initial state and goal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    /// Object name to type name.
    pub objects: BTreeMap<String, String>,
    pub init: SymbolicState,
    pub goal: Goal,
}

impl Problem {
    pub fn new(name: impl Into<String>, domain_name: impl Into<String>) -> Self {
        Problem {
            name: name.into(),
            domain_name: domain_name.into(),
            objects: BTreeMap::new(),
            init: SymbolicState::new(),
            goal: Goal::default(),
        }
    }
}

/// An operator bound to concrete objects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub operator: String,
    pub binding: Vec<String>,
}

impl Action {
    pub fn new(operator: impl Into<String>, binding: Vec<String>) -> Self {
        Action { operator: operator.into(), binding }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.operator)?;
        for b in &self.binding {
            write!(f, " {}", b)?;
        }
        write!(f, ")")
    }
}

/// Pair of add/delete ground-atom sets describing a state change.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectSet {
    pub add: BTreeSet<GroundAtom>,
    pub del: BTreeSet<GroundAtom>,
}

impl EffectSet {
    pub fn new(add: BTreeSet<GroundAtom>, del: BTreeSet<GroundAtom>) -> Self {
        EffectSet { add, del }
    }

    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.del.is_empty()
    }

    /// Keep only atoms whose predicate is in `predicates`.
    pub fn restricted_to(&self, predicates: &BTreeSet<String>) -> EffectSet {
        EffectSet {
            add: self.add.iter().filter(|a| predicates.contains(&a.predicate)).cloned().collect(),
            del: self.del.iter().filter(|a| predicates.contains(&a.predicate)).cloned().collect(),
        }
    }
}

impl fmt::Display for EffectSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "add:{{")?;
        let mut first = true;
        for a in &self.add {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{}", a)?;
            first = false;
        }
        write!(f, "}} del:{{")?;
        first = true;
        for a in &self.del {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{}", a)?;
            first = false;
        }
        write!(f, "}}")
    }
}
