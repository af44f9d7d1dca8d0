//! Forward-search planner and VAL-style plan validator with effect tracing.
//!
//! The planner is a deterministic stand-in for an external system at desk
//! scale: greedy best-first over an additive relaxed-goal heuristic with
//! first-in-first-out tie-breaking, so plateaus degrade into breadth-first
//! exploration. Validation failures are diagnostics, not verdicts; the
//! environment has the final word during motion verification.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use thiserror::Error;

use crate::symbolic::{
    applicable, apply, goal_satisfied, state_diff, Action, DomainModel, EffectSet, Goal,
    GroundAtom, LiftedAtom, LiftedLiteral, PddlError, PreconditionViolation, Problem,
    SymbolicState, Term,
};

/// Where a plan came from: classical search or an oracle fallback proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Search,
    OracleFallback,
}

/// An ordered list of ground actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<Action>,
    pub provenance: Provenance,
}

impl Plan {
    pub fn new(actions: Vec<Action>, provenance: Provenance) -> Self {
        Plan { actions, provenance }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// One `(action obj ...)` s-expression per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            out.push_str(&a.to_string());
            out.push('\n');
        }
        out
    }

    /// Parse the plan file format produced by [`Plan::to_text`].
    pub fn from_text(text: &str, provenance: Provenance) -> Result<Plan, PddlError> {
        let mut actions = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let inner = line
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or(PddlError::Syntax {
                    line: idx as u32 + 1,
                    col: 1,
                    expected: vec!["(action obj ...)".into()],
                    found: line.to_string(),
                })?;
            let mut parts = inner.split_whitespace();
            let op = parts.next().ok_or(PddlError::Syntax {
                line: idx as u32 + 1,
                col: 1,
                expected: vec!["action name".into()],
                found: line.to_string(),
            })?;
            actions.push(Action::new(op, parts.map(|s| s.to_string()).collect()));
        }
        Ok(Plan::new(actions, provenance))
    }
}

/// Outcome of one validated plan step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    PreconditionFailure { missing: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub state_before: SymbolicState,
    pub action: Action,
    pub status: StepStatus,
}

/// Step-by-step record of chaining a plan through `apply`. The first failure
/// terminates the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationTrace {
    pub steps: Vec<TraceStep>,
    pub final_state: SymbolicState,
    pub goal_achieved: bool,
}

impl ValidationTrace {
    pub fn is_valid(&self) -> bool {
        self.steps.iter().all(|s| matches!(s.status, StepStatus::Ok))
    }

    pub fn ok_steps(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s.status, StepStatus::Ok)).count()
    }

    /// States visited along the valid prefix, starting at the initial state;
    /// contains `ok_steps() + 1` entries.
    pub fn states(&self) -> Vec<SymbolicState> {
        let mut out: Vec<SymbolicState> = self
            .steps
            .iter()
            .filter(|s| matches!(s.status, StepStatus::Ok))
            .map(|s| s.state_before.clone())
            .collect();
        out.push(self.final_state.clone());
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchFailure {
    /// The reachable state space was exhausted without meeting the goal.
    #[error("problem is unsolvable within the given domain")]
    Unsolvable,
    /// The node limit was hit; the domain may still admit a plan, so callers
    /// treat this as "planner failed" and may fall back to an oracle plan.
    #[error("search budget of {limit} expanded nodes exhausted")]
    BudgetExhausted { limit: usize },
}

/// Node limit for [`search_plan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub node_limit: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { node_limit: 100_000 }
    }
}

struct GroundAction {
    pre_pos: Vec<GroundAtom>,
    add: Vec<GroundAtom>,
}

/// Ground every operator over the problem objects once, keeping only
/// bindings whose static equality constraints hold. Used by the heuristic.
fn ground_all(domain: &DomainModel, objects: &BTreeMap<String, String>) -> Vec<GroundAction> {
    let mut out = Vec::new();
    for op in domain.operators.values() {
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
        let mut binding: Vec<String> = Vec::new();
        ground_rec(op, &candidates, &mut binding, &mut out);
    }
    out
}

fn ground_rec(
    op: &crate::symbolic::OperatorDef,
    candidates: &[Vec<&String>],
    binding: &mut Vec<String>,
    out: &mut Vec<GroundAction>,
) {
    if binding.len() == candidates.len() {
        let subst = |t: &Term| -> Option<String> {
            match t {
                Term::Var(v) => op.param_index(v).map(|i| binding[i].clone()),
                Term::Const(c) => Some(c.clone()),
                Term::Anon => None,
            }
        };
        for lit in &op.precondition {
            if let LiftedLiteral::Equality { left, right, negated } = lit {
                match (subst(left), subst(right)) {
                    (Some(l), Some(r)) => {
                        if (l == r) == *negated {
                            return;
                        }
                    }
                    _ => return,
                }
            }
        }
        let ground = |a: &LiftedAtom| -> Option<GroundAtom> {
            let mut args = Vec::with_capacity(a.args.len());
            for t in &a.args {
                args.push(subst(t)?);
            }
            Some(GroundAtom::new(a.predicate.clone(), args))
        };
        let mut pre_pos = Vec::new();
        for lit in &op.precondition {
            if let LiftedLiteral::Atom { atom, negated: false } = lit {
                if let Some(g) = ground(atom) {
                    pre_pos.push(g);
                }
                // wildcard literals are optimistically satisfied in relaxation
            }
        }
        let add: Vec<GroundAtom> = op.add_effects.iter().filter_map(|a| ground(a)).collect();
        let del: BTreeSet<GroundAtom> = op.del_effects.iter().filter_map(|a| ground(a)).collect();
        if add.iter().any(|a| del.contains(a)) {
            return;
        }
        out.push(GroundAction { pre_pos, add });
        return;
    }
    for obj in &candidates[binding.len()] {
        binding.push((*obj).clone());
        ground_rec(op, candidates, binding, out);
        binding.pop();
    }
}

/// Additive relaxed-goal heuristic. Delete effects and negative
/// preconditions are ignored; `None` means some positive goal atom is
/// unreachable even in the relaxation.
fn h_add(state: &SymbolicState, goal: &Goal, grounded: &[GroundAction]) -> Option<u64> {
    let mut cost: HashMap<&GroundAtom, u64> = HashMap::new();
    for atom in state.iter() {
        cost.insert(atom, 0);
    }
    let mut changed = true;
    while changed {
        changed = false;
        'actions: for ga in grounded {
            let mut total: u64 = 1;
            for pre in &ga.pre_pos {
                match cost.get(pre) {
                    Some(c) => total = total.saturating_add(*c),
                    None => continue 'actions,
                }
            }
            for eff in &ga.add {
                let better = match cost.get(eff) {
                    Some(c) => total < *c,
                    None => true,
                };
                if better {
                    cost.insert(eff, total);
                    changed = true;
                }
            }
        }
    }
    let mut h: u64 = 0;
    for g in &goal.pos {
        h = h.saturating_add(*cost.get(g)?);
    }
    for g in &goal.neg {
        if state.contains(g) {
            h = h.saturating_add(1);
        }
    }
    Some(h)
}

/// Greedy best-first search over the grounded state space. Deterministic:
/// successors are generated in lexicographic action order and the open list
/// breaks heuristic ties first-in-first-out, so plateaus are explored
/// breadth-first. Returned plans always validate and achieve the goal.
pub fn search_plan(
    domain: &DomainModel,
    problem: &Problem,
    budget: SearchBudget,
) -> Result<Plan, SearchFailure> {
    if goal_satisfied(&problem.init, &problem.goal) {
        return Ok(Plan::new(Vec::new(), Provenance::Search));
    }
    let grounded = ground_all(domain, &problem.objects);

    struct Node {
        state: SymbolicState,
        parent: usize,
        action: Option<Action>,
    }

    let mut nodes: Vec<Node> =
        vec![Node { state: problem.init.clone(), parent: 0, action: None }];
    let mut seen: HashSet<SymbolicState> = HashSet::new();
    seen.insert(problem.init.clone());

    let mut open: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let h0 = h_add(&problem.init, &problem.goal, &grounded).ok_or(SearchFailure::Unsolvable)?;
    let mut seq: u64 = 0;
    open.push(Reverse((h0, seq, 0)));

    let mut expanded = 0usize;
    while let Some(Reverse((_h, _s, idx))) = open.pop() {
        if expanded >= budget.node_limit {
            return Err(SearchFailure::BudgetExhausted { limit: budget.node_limit });
        }
        expanded += 1;
        let state = nodes[idx].state.clone();
        for action in applicable(domain, &state, &problem.objects) {
            let next = match apply(&state, &action, domain, &problem.objects) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if seen.contains(&next) {
                continue;
            }
            seen.insert(next.clone());
            let node_idx = nodes.len();
            nodes.push(Node { state: next.clone(), parent: idx, action: Some(action) });
            if goal_satisfied(&next, &problem.goal) {
                let mut actions = Vec::new();
                let mut cur = node_idx;
                while let Some(a) = nodes[cur].action.clone() {
                    actions.push(a);
                    cur = nodes[cur].parent;
                }
                actions.reverse();
                return Ok(Plan::new(actions, Provenance::Search));
            }
            match h_add(&next, &problem.goal, &grounded) {
                Some(h) => {
                    seq += 1;
                    open.push(Reverse((h, seq, node_idx)));
                }
                None => continue, // relaxed dead end
            }
        }
    }
    Err(SearchFailure::Unsolvable)
}

/// Chain `plan` through [`apply`] from the problem's initial state, recording
/// the missing literals at the first failure. Inputs are never mutated.
pub fn validate_plan(domain: &DomainModel, problem: &Problem, plan: &Plan) -> ValidationTrace {
    let mut state = problem.init.clone();
    let mut steps = Vec::new();
    for action in &plan.actions {
        match apply(&state, action, domain, &problem.objects) {
            Ok(next) => {
                steps.push(TraceStep {
                    state_before: state.clone(),
                    action: action.clone(),
                    status: StepStatus::Ok,
                });
                state = next;
            }
            Err(violation) => {
                let mut missing = violation.missing;
                missing.extend(
                    violation.conflicting_effects.iter().map(|c| format!("(consistent {})", c)),
                );
                steps.push(TraceStep {
                    state_before: state.clone(),
                    action: action.clone(),
                    status: StepStatus::PreconditionFailure { missing },
                });
                break;
            }
        }
    }
    let goal_achieved = goal_satisfied(&state, &problem.goal);
    ValidationTrace { steps, final_state: state, goal_achieved }
}

/// Net effect of a whole plan: `state_diff(p_init, final)`. Atoms added and
/// later deleted (or vice versa) cancel out.
pub fn joint_effects(
    p_init: &SymbolicState,
    plan: &Plan,
    domain: &DomainModel,
    objects: &BTreeMap<String, String>,
) -> Result<EffectSet, PreconditionViolation> {
    let mut state = p_init.clone();
    for action in &plan.actions {
        state = apply(&state, action, domain, objects)?;
    }
    Ok(state_diff(p_init, &state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{parse_domain, parse_problem};

    fn chain_domain() -> DomainModel {
        parse_domain(
            "(define (domain chain)
               (:predicates (p) (q) (r))
               (:action step1 :parameters () :precondition (p) :effect (and (q) (not (p))))
               (:action step2 :parameters () :precondition (q) :effect (and (r) (not (q)))))",
        )
        .unwrap()
    }

    fn chain_problem(domain: &DomainModel) -> Problem {
        parse_problem(
            "(define (problem go)
               (:domain chain)
               (:init (p))
               (:goal (and (r))))",
            domain,
        )
        .unwrap()
    }

    #[test]
    fn finds_two_step_plan() {
        let d = chain_domain();
        let p = chain_problem(&d);
        let plan = search_plan(&d, &p, SearchBudget::default()).unwrap();
        assert_eq!(plan.len(), 2);
        let trace = validate_plan(&d, &p, &plan);
        assert!(trace.is_valid());
        assert!(trace.goal_achieved);
    }

    #[test]
    fn empty_plan_when_init_satisfies_goal() {
        let d = chain_domain();
        let mut p = chain_problem(&d);
        p.goal =
            crate::symbolic::Goal::new([GroundAtom::new("p", vec![])].into(), Default::default());
        let plan = search_plan(&d, &p, SearchBudget::default()).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn deleting_operator_makes_goal_unsolvable() {
        let d = parse_domain(
            "(define (domain bad)
               (:predicates (g))
               (:action ruin :parameters () :precondition (g) :effect (not (g))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem no) (:domain bad) (:init) (:goal (and (g))))",
            &d,
        )
        .unwrap();
        assert_eq!(search_plan(&d, &p, SearchBudget::default()), Err(SearchFailure::Unsolvable));
    }

    #[test]
    fn budget_zero_exhausts() {
        let d = chain_domain();
        let p = chain_problem(&d);
        assert_eq!(
            search_plan(&d, &p, SearchBudget { node_limit: 0 }),
            Err(SearchFailure::BudgetExhausted { limit: 0 })
        );
    }

    #[test]
    fn trace_stops_at_first_failure() {
        let d = chain_domain();
        let p = chain_problem(&d);
        let plan = Plan::new(
            vec![Action::new("step2", vec![]), Action::new("step1", vec![])],
            Provenance::OracleFallback,
        );
        let trace = validate_plan(&d, &p, &plan);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(
            trace.steps[0].status,
            StepStatus::PreconditionFailure { missing: vec!["(q)".to_string()] }
        );
        assert!(!trace.goal_achieved);
    }

    #[test]
    fn empty_plan_on_unsatisfied_goal() {
        let d = chain_domain();
        let p = chain_problem(&d);
        let plan = Plan::new(vec![], Provenance::Search);
        let trace = validate_plan(&d, &p, &plan);
        assert_eq!(trace.ok_steps(), 0);
        assert!(!trace.goal_achieved);
    }

    #[test]
    fn joint_effects_cancel() {
        // q is added then deleted again: absent from both sides of the diff.
        let d = parse_domain(
            "(define (domain tog)
               (:predicates (q))
               (:action on :parameters () :precondition () :effect (q))
               (:action off :parameters () :precondition (q) :effect (not (q))))",
        )
        .unwrap();
        let p =
            parse_problem("(define (problem t) (:domain tog) (:init) (:goal (and)))", &d).unwrap();
        let plan = Plan::new(
            vec![Action::new("on", vec![]), Action::new("off", vec![])],
            Provenance::Search,
        );
        let eff = joint_effects(&p.init, &plan, &d, &p.objects).unwrap();
        assert!(eff.is_empty());
    }

    #[test]
    fn pickup_subplan_joint_effects() {
        // the decomposed pick-up also opens the drawer and closes the
        // gripper: all three atoms surface in the subplan's joint effects
        let d = parse_domain(
            "(define (domain kitchen)
               (:predicates (grasps ?o) (door-open ?d) (closed-gripper) (reachable ?o))
               (:action open-door :parameters (?d) :precondition () :effect (door-open ?d))
               (:action reach :parameters (?o ?d) :precondition (door-open ?d) :effect (reachable ?o))
               (:action close-jaws :parameters (?o) :precondition (reachable ?o)
                 :effect (and (grasps ?o) (closed-gripper))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem k) (:domain kitchen) (:objects apple drawer)
               (:goal (and (grasps apple))))",
            &d,
        )
        .unwrap();
        let subplan = Plan::new(
            vec![
                Action::new("open-door", vec!["drawer".into()]),
                Action::new("reach", vec!["apple".into(), "drawer".into()]),
                Action::new("close-jaws", vec!["apple".into()]),
            ],
            Provenance::Search,
        );
        let eff = joint_effects(&p.init, &subplan, &d, &p.objects).unwrap();
        for expected in ["(grasps apple)", "(door-open drawer)", "(closed-gripper)"] {
            assert!(
                eff.add.iter().any(|a| a.to_string() == expected),
                "joint effects missing {}: {}",
                expected,
                eff
            );
        }
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = Plan::new(
            vec![
                Action::new("load_truck", vec!["package_0".into(), "truck_1".into()]),
                Action::new("noop", vec![]),
            ],
            Provenance::Search,
        );
        let text = plan.to_text();
        let back = Plan::from_text(&text, Provenance::Search).unwrap();
        assert_eq!(plan, back);
    }
}
