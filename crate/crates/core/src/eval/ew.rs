//! Generalized exploration-walk metric: how many random operator-uniform
//! walks sampled from one domain execute in the other, harmonically averaged
//! over both directions and bootstrapped per task.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::planner::{search_plan, SearchBudget, SearchFailure};
use crate::symbolic::{
    apply, Action, DomainModel, Goal, GroundAtom, Problem, SymbolicState, Term,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("task `{0}` is unsolvable in the reference domain")]
    TaskUnsolvableInReference(String),
    #[error("predicate vocabulary mismatch: {0:?}")]
    VocabularyMismatch(Vec<String>),
    #[error("walk sampling needs at least one walk")]
    NoWalks,
}

/// Walk count, optional length override and seed for one report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EWConfig {
    pub walks: usize,
    /// Walk length; when absent, each task uses its reference solution
    /// length plus two.
    pub max_len: Option<usize>,
    pub seed: u64,
}

impl Default for EWConfig {
    fn default() -> Self {
        EWConfig { walks: 500, max_len: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskEW {
    pub task: String,
    pub learned_to_reference: f64,
    pub reference_to_learned: f64,
    pub harmonic_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EWReport {
    pub per_task: Vec<TaskEW>,
    /// Mean harmonic mean across tasks.
    pub aggregate: f64,
}

/// `2pq/(p+q)`, zero when either side is zero.
pub fn harmonic_mean(p: f64, q: f64) -> f64 {
    if p <= 0.0 || q <= 0.0 {
        0.0
    } else {
        2.0 * p * q / (p + q)
    }
}

/// Canonical name form: lowercase with hyphens folded to underscores.
/// Learned and reference vocabularies are matched by exact name after this
/// renaming; anything else is reported, not guessed.
pub fn canonical_name(name: &str) -> String {
    name.to_ascii_lowercase().replace('-', "_")
}

/// Rename every predicate and operator in the domain to canonical form.
pub fn canonicalize_domain(domain: &DomainModel) -> DomainModel {
    let mut out = DomainModel::new(canonical_name(&domain.name));
    out.types = domain.types.clone();
    for (name, schema) in &domain.predicates {
        let mut schema = schema.clone();
        schema.name = canonical_name(name);
        out.predicates.insert(schema.name.clone(), schema);
    }
    for (name, op) in &domain.operators {
        let mut op = op.clone();
        op.name = canonical_name(name);
        rename_atoms(&mut op);
        out.operators.insert(op.name.clone(), op);
    }
    out
}

fn rename_atoms(op: &mut crate::symbolic::OperatorDef) {
    for lit in &mut op.precondition {
        if let crate::symbolic::LiftedLiteral::Atom { atom, .. } = lit {
            atom.predicate = canonical_name(&atom.predicate);
        }
    }
    for atom in op.add_effects.iter_mut().chain(op.del_effects.iter_mut()) {
        atom.predicate = canonical_name(&atom.predicate);
    }
}

fn canonicalize_problem(problem: &Problem) -> Problem {
    let rename_state = |s: &SymbolicState| {
        SymbolicState::from_atoms(
            s.iter().map(|a| GroundAtom::new(canonical_name(&a.predicate), a.args.clone())),
        )
    };
    let rename_set = |s: &BTreeSet<GroundAtom>| -> BTreeSet<GroundAtom> {
        s.iter().map(|a| GroundAtom::new(canonical_name(&a.predicate), a.args.clone())).collect()
    };
    let mut out = problem.clone();
    out.init = rename_state(&problem.init);
    out.goal = Goal::new(rename_set(&problem.goal.pos), rename_set(&problem.goal.neg));
    out
}

/// Restrict `domain` to the operators used by a reference solution of
/// `task`, matching names canonically. Restriction never adds operators.
pub fn bootstrap_task_domain(
    domain: &DomainModel,
    task: &Problem,
    reference: &DomainModel,
) -> Result<DomainModel, EvalError> {
    let used = reference_solution_operators(reference, task)?;
    let keep: BTreeSet<String> = domain
        .operators
        .keys()
        .filter(|name| used.contains(&canonical_name(name)))
        .cloned()
        .collect();
    Ok(domain.restricted_to_operators(&keep))
}

fn reference_solution_operators(
    reference: &DomainModel,
    task: &Problem,
) -> Result<BTreeSet<String>, EvalError> {
    match search_plan(reference, task, SearchBudget::default()) {
        Ok(plan) => {
            Ok(plan.actions.iter().map(|a| canonical_name(&a.operator)).collect())
        }
        Err(SearchFailure::Unsolvable) | Err(SearchFailure::BudgetExhausted { .. }) => {
            Err(EvalError::TaskUnsolvableInReference(task.name.clone()))
        }
    }
}

/// Pre-grounded actions for fast repeated walk stepping: bindings with
/// failing equality constraints are dropped at construction, wildcard
/// literals fall back to the general applicability check.
struct GroundedPool {
    steps: Vec<GroundStep>,
}

struct GroundStep {
    action: Action,
    pre_pos: Vec<GroundAtom>,
    pre_neg: Vec<GroundAtom>,
    add: Vec<GroundAtom>,
    del: Vec<GroundAtom>,
    /// Operator uses anonymous wildcards: defer to the slow path.
    needs_general_check: bool,
}

impl GroundedPool {
    fn build(domain: &DomainModel, objects: &BTreeMap<String, String>) -> Self {
        let mut steps = Vec::new();
        let empty = SymbolicState::new();
        // reuse the planner-facing enumeration for the action list; an
        // all-atoms state is not available, so enumerate bindings directly
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
            Self::enumerate(op, &candidates, &mut binding, domain, objects, &mut steps);
        }
        let _ = empty;
        GroundedPool { steps }
    }

    fn enumerate(
        op: &crate::symbolic::OperatorDef,
        candidates: &[Vec<&String>],
        binding: &mut Vec<String>,
        domain: &DomainModel,
        objects: &BTreeMap<String, String>,
        steps: &mut Vec<GroundStep>,
    ) {
        if binding.len() < candidates.len() {
            for obj in &candidates[binding.len()] {
                binding.push((*obj).clone());
                Self::enumerate(op, candidates, binding, domain, objects, steps);
                binding.pop();
            }
            return;
        }
        let subst = |t: &Term| -> Option<String> {
            match t {
                Term::Var(v) => op.param_index(v).map(|i| binding[i].clone()),
                Term::Const(c) => Some(c.clone()),
                Term::Anon => None,
            }
        };
        let mut needs_general_check = false;
        let mut pre_pos = Vec::new();
        let mut pre_neg = Vec::new();
        for lit in &op.precondition {
            match lit {
                crate::symbolic::LiftedLiteral::Equality { left, right, negated } => {
                    match (subst(left), subst(right)) {
                        (Some(l), Some(r)) => {
                            if (l == r) == *negated {
                                return; // statically violated
                            }
                        }
                        _ => return,
                    }
                }
                crate::symbolic::LiftedLiteral::Atom { atom, negated } => {
                    let mut args = Vec::with_capacity(atom.args.len());
                    let mut full = true;
                    for t in &atom.args {
                        match subst(t) {
                            Some(a) => args.push(a),
                            None => full = false,
                        }
                    }
                    if !full {
                        needs_general_check = true;
                        continue;
                    }
                    let ground = GroundAtom::new(atom.predicate.clone(), args);
                    if *negated {
                        pre_neg.push(ground);
                    } else {
                        pre_pos.push(ground);
                    }
                }
            }
        }
        let ground_all = |atoms: &[crate::symbolic::LiftedAtom]| -> Option<Vec<GroundAtom>> {
            atoms
                .iter()
                .map(|a| {
                    let mut args = Vec::with_capacity(a.args.len());
                    for t in &a.args {
                        args.push(subst(t)?);
                    }
                    Some(GroundAtom::new(a.predicate.clone(), args))
                })
                .collect()
        };
        let Some(add) = ground_all(&op.add_effects) else { return };
        let Some(del) = ground_all(&op.del_effects) else { return };
        if add.iter().any(|a| del.contains(a)) {
            return;
        }
        steps.push(GroundStep {
            action: Action::new(op.name.clone(), binding.clone()),
            pre_pos,
            pre_neg,
            add,
            del,
            needs_general_check,
        });
    }

    fn step_applicable(
        &self,
        step: &GroundStep,
        state: &SymbolicState,
        domain: &DomainModel,
        objects: &BTreeMap<String, String>,
    ) -> bool {
        if !step.pre_pos.iter().all(|a| state.contains(a))
            || step.pre_neg.iter().any(|a| state.contains(a))
        {
            return false;
        }
        if step.needs_general_check {
            return apply(state, &step.action, domain, objects).is_ok();
        }
        true
    }

    fn apply_step(&self, step: &GroundStep, state: &SymbolicState) -> SymbolicState {
        let mut atoms = state.atoms.clone();
        for d in &step.del {
            atoms.remove(d);
        }
        for a in &step.add {
            atoms.insert(a.clone());
        }
        SymbolicState { atoms }
    }

    fn applicable_indices(
        &self,
        state: &SymbolicState,
        domain: &DomainModel,
        objects: &BTreeMap<String, String>,
    ) -> Vec<usize> {
        (0..self.steps.len())
            .filter(|&i| self.step_applicable(&self.steps[i], state, domain, objects))
            .collect()
    }
}

/// Sample one random walk with two-stage uniform sampling: first uniformly
/// over operators with at least one applicable action, then uniformly over
/// that operator's applicable actions. Ends at `max_len` or a dead end.
pub fn sample_walk(
    domain: &DomainModel,
    problem: &Problem,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Action> {
    let pool = GroundedPool::build(domain, &problem.objects);
    sample_walk_pooled(&pool, domain, problem, max_len, rng)
}

fn sample_walk_pooled(
    pool: &GroundedPool,
    domain: &DomainModel,
    problem: &Problem,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Action> {
    let mut state = problem.init.clone();
    let mut walk = Vec::new();
    for _ in 0..max_len {
        let indices = pool.applicable_indices(&state, domain, &problem.objects);
        if indices.is_empty() {
            break;
        }
        let mut by_operator: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in &indices {
            by_operator.entry(pool.steps[i].action.operator.as_str()).or_default().push(i);
        }
        let operators: Vec<&str> = by_operator.keys().copied().collect();
        let op = operators[rng.random_range(0..operators.len())];
        let candidates = &by_operator[op];
        let chosen = candidates[rng.random_range(0..candidates.len())];
        state = pool.apply_step(&pool.steps[chosen], &state);
        walk.push(pool.steps[chosen].action.clone());
    }
    walk
}

/// A walk is executable in the other domain when every action's
/// preconditions hold along the way; the goal is irrelevant.
pub fn walk_executable(domain: &DomainModel, problem: &Problem, walk: &[Action]) -> bool {
    let mut state = problem.init.clone();
    for action in walk {
        match apply(&state, action, domain, &problem.objects) {
            Ok(next) => state = next,
            Err(_) => return false,
        }
    }
    true
}

fn walk_executable_pooled(
    pool: &GroundedPool,
    lookup: &BTreeMap<(String, Vec<String>), usize>,
    domain: &DomainModel,
    problem: &Problem,
    walk: &[Action],
) -> bool {
    let mut state = problem.init.clone();
    for action in walk {
        let Some(&idx) = lookup.get(&(action.operator.clone(), action.binding.clone())) else {
            return false;
        };
        let step = &pool.steps[idx];
        if !pool.step_applicable(step, &state, domain, &problem.objects) {
            return false;
        }
        state = pool.apply_step(step, &state);
    }
    true
}

/// Fraction of sampled walks from `source` that execute in `target`.
/// Dead-ended walks count toward the denominator like any other sample.
fn directional_rate(
    source: &DomainModel,
    target: &DomainModel,
    problem: &Problem,
    max_len: usize,
    cfg: &EWConfig,
    direction_salt: u64,
) -> f64 {
    let source_pool = GroundedPool::build(source, &problem.objects);
    let target_pool = GroundedPool::build(target, &problem.objects);
    let target_lookup: BTreeMap<(String, Vec<String>), usize> = target_pool
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.action.operator.clone(), s.action.binding.clone()), i))
        .collect();
    let mut ok = 0usize;
    for i in 0..cfg.walks {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ direction_salt ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let walk = sample_walk_pooled(&source_pool, source, problem, max_len, &mut rng);
        if walk_executable_pooled(&target_pool, &target_lookup, target, problem, &walk) {
            ok += 1;
        }
    }
    ok as f64 / cfg.walks as f64
}

/// Exploration-walk score between a learned and a reference domain over a
/// task set. Identical domains score exactly 1.0 for any seed.
pub fn ew_score(
    learned: &DomainModel,
    reference: &DomainModel,
    tasks: &[Problem],
    cfg: &EWConfig,
) -> Result<EWReport, EvalError> {
    if cfg.walks == 0 {
        return Err(EvalError::NoWalks);
    }
    let learned = canonicalize_domain(learned);
    let reference = canonicalize_domain(reference);

    let mut per_task = Vec::new();
    for task in tasks {
        let task = canonicalize_problem(task);
        // task atoms must resolve in both vocabularies
        let mut unmatched: Vec<String> = Vec::new();
        for atom in task.init.iter().chain(task.goal.pos.iter()).chain(task.goal.neg.iter()) {
            if !learned.predicates.contains_key(&atom.predicate)
                || !reference.predicates.contains_key(&atom.predicate)
            {
                unmatched.push(atom.predicate.clone());
            }
        }
        unmatched.dedup();
        if !unmatched.is_empty() {
            return Err(EvalError::VocabularyMismatch(unmatched));
        }

        let ref_plan = match search_plan(&reference, &task, SearchBudget::default()) {
            Ok(plan) => plan,
            Err(_) => return Err(EvalError::TaskUnsolvableInReference(task.name.clone())),
        };
        let ref_ops: BTreeSet<String> =
            ref_plan.actions.iter().map(|a| canonical_name(&a.operator)).collect();
        let max_len = cfg.max_len.unwrap_or(ref_plan.len() + 2);

        // bootstrap both domains symmetrically to the task's operators
        let keep_learned: BTreeSet<String> =
            learned.operators.keys().filter(|n| ref_ops.contains(*n)).cloned().collect();
        let keep_reference: BTreeSet<String> =
            reference.operators.keys().filter(|n| ref_ops.contains(*n)).cloned().collect();
        let learned_restricted = learned.restricted_to_operators(&keep_learned);
        let reference_restricted = reference.restricted_to_operators(&keep_reference);

        let l2r =
            directional_rate(&learned_restricted, &reference_restricted, &task, max_len, cfg, 0x1);
        let r2l =
            directional_rate(&reference_restricted, &learned_restricted, &task, max_len, cfg, 0x2);
        per_task.push(TaskEW {
            task: task.name.clone(),
            learned_to_reference: l2r,
            reference_to_learned: r2l,
            harmonic_mean: harmonic_mean(l2r, r2l),
        });
    }
    let aggregate = if per_task.is_empty() {
        0.0
    } else {
        per_task.iter().map(|t| t.harmonic_mean).sum::<f64>() / per_task.len() as f64
    };
    Ok(EWReport { per_task, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{parse_domain, parse_problem};

    fn toy() -> (DomainModel, Problem) {
        let d = parse_domain(
            "(define (domain toy)
               (:predicates (p) (q))
               (:action a :parameters () :precondition () :effect (p))
               (:action b :parameters () :precondition (p) :effect (q)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem t) (:domain toy) (:init) (:goal (and (q))))",
            &d,
        )
        .unwrap();
        (d, p)
    }

    #[test]
    fn identity_scores_one_exactly() {
        let (d, p) = toy();
        for seed in [0u64, 1, 2, 3, 4] {
            let cfg = EWConfig { walks: 100, max_len: Some(3), seed };
            let report = ew_score(&d, &d, &[p.clone()], &cfg).unwrap();
            assert_eq!(report.aggregate, 1.0);
        }
    }

    #[test]
    fn harmonic_mean_bounds() {
        assert_eq!(harmonic_mean(1.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.5), 0.0);
        assert_eq!(harmonic_mean(1.0, 1.0), 1.0);
        let hm = harmonic_mean(1.0, 0.5);
        assert!((hm - 2.0 / 3.0).abs() < 1e-12);
        assert!(hm <= 0.5f64.max(1.0));
        assert!(hm >= 0.0);
        // HM <= min(p, q) is false in general; HM <= max and >= 0 hold,
        // and HM = p iff p = q
        assert_eq!(harmonic_mean(0.7, 0.7), 0.7);
    }

    #[test]
    fn canonical_names_fold_case_and_hyphens() {
        assert_eq!(canonical_name("Load-Truck"), "load_truck");
        assert_eq!(canonical_name("at"), "at");
    }

    #[test]
    fn empty_direction_zeroes_harmonic_mean() {
        let (d, p) = toy();
        // learned domain where b's precondition can never be satisfied
        let broken = parse_domain(
            "(define (domain toy)
               (:predicates (p) (q) (never))
               (:action a :parameters () :precondition (never) :effect (p))
               (:action b :parameters () :precondition (never) :effect (q)))",
        )
        .unwrap();
        let cfg = EWConfig { walks: 50, max_len: Some(2), seed: 9 };
        let report = ew_score(&broken, &d, &[p], &cfg).unwrap();
        // learned walks are all empty (executable anywhere): rate 1.0;
        // reference walks never execute in the broken domain: rate 0.0
        assert_eq!(report.per_task[0].harmonic_mean, 0.0);
    }

    #[test]
    fn bootstrap_restricts_to_solution_operators() {
        let (d, p) = toy();
        let mut bigger = d.clone();
        bigger.operators.insert(
            "irrelevant".into(),
            crate::symbolic::OperatorDef::new("irrelevant", vec![], vec![], vec![], vec![]),
        );
        let restricted = bootstrap_task_domain(&bigger, &p, &d).unwrap();
        assert!(restricted.operators.contains_key("a"));
        assert!(restricted.operators.contains_key("b"));
        assert!(!restricted.operators.contains_key("irrelevant"));
        assert!(restricted.operators.len() <= bigger.operators.len());
    }

    #[test]
    fn operator_marginal_is_uniform() {
        // operator a has 10 ground actions, operator b has 1:
        // the next walk step picks operator b with probability 1/2
        let d = parse_domain(
            "(define (domain m)
               (:predicates (p ?x) (q))
               (:action a :parameters (?x) :precondition () :effect (p ?x))
               (:action b :parameters () :precondition () :effect (q)))",
        )
        .unwrap();
        let mut problem = Problem::new("m", "m");
        for i in 0..10 {
            problem.objects.insert(format!("o{}", i), "object".into());
        }
        let n = 10_000;
        let mut b_count = 0;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
            let walk = sample_walk(&d, &problem, 1, &mut rng);
            if walk[0].operator == "b" {
                b_count += 1;
            }
        }
        let freq = b_count as f64 / n as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!(
            (freq - 0.5).abs() <= 3.0 * sigma,
            "operator marginal {} deviates more than 3 sigma from 1/2",
            freq
        );
    }
}
