use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::types::{
    Action, DomainModel, EffectSet, Goal, GroundAtom, LiftedAtom, LiftedLiteral, OperatorDef,
    SymbolicState, Term,
};

/// Raised by [`apply`] when an action's preconditions do not hold or its
/// grounded add and delete effects overlap. Every unsatisfied literal is
/// listed.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct PreconditionViolation {
    pub action: Action,
    pub missing: Vec<String>,
    pub conflicting_effects: Vec<String>,
}

impl fmt::Display for PreconditionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "action {} not applicable:", self.action)?;
        for m in &self.missing {
            write!(f, " missing {}", m)?;
        }
        for c in &self.conflicting_effects {
            write!(f, " conflicting effect {}", c)?;
        }
        Ok(())
    }
}

fn substitute(term: &Term, op: &OperatorDef, binding: &[String]) -> Option<String> {
    match term {
        Term::Var(v) => op.param_index(v).map(|i| binding[i].clone()),
        Term::Const(c) => Some(c.clone()),
        Term::Anon => None,
    }
}

fn ground_atom(atom: &LiftedAtom, op: &OperatorDef, binding: &[String]) -> Option<GroundAtom> {
    let mut args = Vec::with_capacity(atom.args.len());
    for t in &atom.args {
        args.push(substitute(t, op, binding)?);
    }
    Some(GroundAtom::new(atom.predicate.clone(), args))
}

/// Grounded add/delete effect sets of `op` under `binding`.
pub(crate) fn ground_effects(
    op: &OperatorDef,
    binding: &[String],
) -> (BTreeSet<GroundAtom>, BTreeSet<GroundAtom>) {
    let add = op
        .add_effects
        .iter()
        .map(|a| ground_atom(a, op, binding).expect("effects contain no wildcards"))
        .collect();
    let del = op
        .del_effects
        .iter()
        .map(|a| ground_atom(a, op, binding).expect("effects contain no wildcards"))
        .collect();
    (add, del)
}

/// True when `atom` (which may contain anonymous wildcards) matches some
/// atom in `state` under the binding.
fn atom_holds(
    atom: &LiftedAtom,
    op: &OperatorDef,
    binding: &[String],
    state: &SymbolicState,
    objects: &BTreeMap<String, String>,
) -> bool {
    if let Some(ground) = ground_atom(atom, op, binding) {
        return state.contains(&ground);
    }
    // Wildcard positions: existential match over any objects.
    state.iter().any(|candidate| {
        candidate.predicate == atom.predicate
            && candidate.args.len() == atom.args.len()
            && atom.args.iter().zip(&candidate.args).all(|(t, obj)| match t {
                Term::Anon => objects.contains_key(obj),
                other => substitute(other, op, binding).as_deref() == Some(obj.as_str()),
            })
    })
}

/// All precondition literals of `a` unsatisfied in `s`, rendered as text.
pub(crate) fn unsatisfied_literals(
    domain: &DomainModel,
    state: &SymbolicState,
    action: &Action,
    objects: &BTreeMap<String, String>,
) -> Vec<String> {
    let Some(op) = domain.operator(&action.operator) else {
        return vec![format!("(unknown-operator {})", action.operator)];
    };
    let mut missing = Vec::new();
    for lit in &op.precondition {
        let ok = match lit {
            LiftedLiteral::Atom { atom, negated } => {
                let holds = atom_holds(atom, op, &action.binding, state, objects);
                holds != *negated
            }
            LiftedLiteral::Equality { left, right, negated } => {
                let l = substitute(left, op, &action.binding);
                let r = substitute(right, op, &action.binding);
                match (l, r) {
                    (Some(l), Some(r)) => (l == r) != *negated,
                    _ => false,
                }
            }
        };
        if !ok {
            missing.push(render_literal(lit, op, &action.binding));
        }
    }
    missing
}

fn render_literal(lit: &LiftedLiteral, op: &OperatorDef, binding: &[String]) -> String {
    let render_term = |t: &Term| -> String {
        substitute(t, op, binding).unwrap_or_else(|| "?_".to_string())
    };
    match lit {
        LiftedLiteral::Atom { atom, negated } => {
            let mut s = format!("({}", atom.predicate);
            for t in &atom.args {
                s.push(' ');
                s.push_str(&render_term(t));
            }
            s.push(')');
            if *negated {
                format!("(not {})", s)
            } else {
                s
            }
        }
        LiftedLiteral::Equality { left, right, negated } => {
            let s = format!("(= {} {})", render_term(left), render_term(right));
            if *negated {
                format!("(not {})", s)
            } else {
                s
            }
        }
    }
}

fn grounded_conflicts(op: &OperatorDef, binding: &[String]) -> Vec<String> {
    let (add, del) = ground_effects(op, binding);
    add.intersection(&del).map(|a| a.to_string()).collect()
}

fn binding_type_compatible(
    op: &OperatorDef,
    binding: &[String],
    domain: &DomainModel,
    objects: &BTreeMap<String, String>,
) -> bool {
    binding.len() == op.params.len()
        && op.params.iter().zip(binding).all(|(p, obj)| {
            objects.get(obj).is_some_and(|ty| domain.types.is_subtype(ty, &p.ty))
        })
}

/// All actions executable in `state`: for every operator, every
/// type-compatible binding whose precondition holds under closed-world
/// negation. Results are in lexicographic (operator name, binding) order.
pub fn applicable(
    domain: &DomainModel,
    state: &SymbolicState,
    objects: &BTreeMap<String, String>,
) -> Vec<Action> {
    let mut out = Vec::new();
    for op in domain.operators.values() {
        // Candidate objects per parameter, honouring the type tree.
        let candidates: Vec<Vec<&String>> = op
            .params
            .iter()
            .map(|p| {
                objects
                    .iter()
                    .filter(|(_, ty)| domain.types.is_subtype(ty, &p.ty))
                    .map(|(name, _)| name)
                    .collect()
            })
            .collect();
        if candidates.iter().any(|c| c.is_empty()) && !op.params.is_empty() {
            continue;
        }
        let mut binding: Vec<String> = Vec::with_capacity(op.params.len());
        enumerate_bindings(op, &candidates, &mut binding, domain, state, objects, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn enumerate_bindings(
    op: &OperatorDef,
    candidates: &[Vec<&String>],
    binding: &mut Vec<String>,
    domain: &DomainModel,
    state: &SymbolicState,
    objects: &BTreeMap<String, String>,
    out: &mut Vec<Action>,
) {
    if binding.len() == candidates.len() {
        let action = Action::new(op.name.clone(), binding.clone());
        if unsatisfied_literals(domain, state, &action, objects).is_empty()
            && grounded_conflicts(op, binding).is_empty()
        {
            out.push(action);
        }
        return;
    }
    for obj in &candidates[binding.len()] {
        binding.push((*obj).clone());
        enumerate_bindings(op, candidates, binding, domain, state, objects, out);
        binding.pop();
    }
}

/// Apply `action` to `state`, returning the successor
/// `(state \ del) ∪ add`. The input state is unchanged.
pub fn apply(
    state: &SymbolicState,
    action: &Action,
    domain: &DomainModel,
    objects: &BTreeMap<String, String>,
) -> Result<SymbolicState, PreconditionViolation> {
    let op = domain.operator(&action.operator).ok_or_else(|| PreconditionViolation {
        action: action.clone(),
        missing: vec![format!("(unknown-operator {})", action.operator)],
        conflicting_effects: vec![],
    })?;
    let missing = unsatisfied_literals(domain, state, action, objects);
    let type_ok = binding_type_compatible(op, &action.binding, domain, objects);
    let mut missing = missing;
    if !type_ok {
        missing.push(format!("(type-compatible {})", action));
    }
    let conflicting = grounded_conflicts(op, &action.binding);
    if !missing.is_empty() || !conflicting.is_empty() {
        return Err(PreconditionViolation {
            action: action.clone(),
            missing,
            conflicting_effects: conflicting,
        });
    }
    Ok(apply_unchecked(state, action, domain))
}

/// Apply effects without checking preconditions. Used to chain states through
/// oracle-proposed plans whose validity is established later in simulation.
pub fn apply_unchecked(
    state: &SymbolicState,
    action: &Action,
    domain: &DomainModel,
) -> SymbolicState {
    let Some(op) = domain.operator(&action.operator) else {
        return state.clone();
    };
    if op.params.len() != action.binding.len() {
        return state.clone();
    }
    let (add, del) = ground_effects(op, &action.binding);
    let mut atoms = state.atoms.clone();
    for d in &del {
        atoms.remove(d);
    }
    for a in add {
        atoms.insert(a);
    }
    SymbolicState { atoms }
}

/// `⟨s_j \ s_i, s_i \ s_j⟩`: the add and delete sets that transform `s_i`
/// into `s_j`.
pub fn state_diff(s_i: &SymbolicState, s_j: &SymbolicState) -> EffectSet {
    EffectSet {
        add: s_j.atoms.difference(&s_i.atoms).cloned().collect(),
        del: s_i.atoms.difference(&s_j.atoms).cloned().collect(),
    }
}

/// True iff every positive goal atom is in `s` and no negative goal atom is.
pub fn goal_satisfied(state: &SymbolicState, goal: &Goal) -> bool {
    goal.pos.iter().all(|a| state.contains(a)) && goal.neg.iter().all(|a| !state.contains(a))
}
