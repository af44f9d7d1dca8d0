//! Hierarchical domain-model construction: recursive decomposition,
//! subproblem synthesis, cross-level alignment with overshoot/side-effect
//! classification, and decomposition reuse.

mod traverse;

pub use traverse::{
    apply_domain_edit, parse_predicate_decl, traverse, Budgets, LearnError, LearnStats,
    LearnedHierarchy, SharedLearnState, TaskSpec,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::envs::SkillCall;
use crate::planner::Plan;
use crate::symbolic::{
    print_domain, print_problem, Action, DomainModel, EffectSet, Goal, GroundAtom, LiftedAtom,
    OperatorDef, Problem, SymbolicState, Term,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    /// The action produced no observable state change, so Eq.-style
    /// subgoal construction would be empty; routed to recovery.
    #[error("degenerate subproblem: states before and after the action are identical")]
    DegenerateSubproblem,
    #[error("oracle rewrite for side effects failed validation twice")]
    OracleRejection,
    #[error("maximum hierarchy depth {0} exceeded")]
    MaxDepthExceeded(u32),
    #[error("hierarchy i/o: {0}")]
    Io(String),
}

/// Whether a node's decomposition came from a fresh oracle call or the
/// cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DecompSource {
    Fresh,
    Cached,
}

/// One level of the learned hierarchical model: a domain, the problem it
/// was asked to solve, its plan, and per-action children or leaf skill
/// bindings. Child domains always retain the parent's predicates and
/// objects.
#[derive(Debug, Clone)]
pub struct HierarchyNode {
    pub level: u32,
    pub domain: DomainModel,
    pub problem: Problem,
    pub plan: Plan,
    pub children: BTreeMap<usize, HierarchyNode>,
    pub leaf_bindings: BTreeMap<usize, SkillCall>,
    /// How each decomposed plan index obtained its subdomain.
    pub decomposition_source: BTreeMap<usize, DecompSource>,
}

impl HierarchyNode {
    pub fn new(level: u32, domain: DomainModel, problem: Problem) -> Self {
        HierarchyNode {
            level,
            domain,
            problem,
            plan: Plan::new(Vec::new(), crate::planner::Provenance::Search),
            children: BTreeMap::new(),
            leaf_bindings: BTreeMap::new(),
            decomposition_source: BTreeMap::new(),
        }
    }

    /// Child predicates must always contain the parent's.
    pub fn predicates_preserved(&self) -> bool {
        self.children.values().all(|child| {
            self.domain.predicates.keys().all(|p| child.domain.predicates.contains_key(p))
                && child.predicates_preserved()
        })
    }

    pub fn depth(&self) -> u32 {
        1 + self.children.values().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Serialize as a directory tree:
    /// `level-0/domain.pddl`, `level-0/plan.txt`, `level-0/children/<i>/...`.
    pub fn save(&self, dir: &Path) -> Result<(), HierarchyError> {
        let io = |e: std::io::Error| HierarchyError::Io(e.to_string());
        let node_dir = dir.join(format!("level-{}", self.level));
        std::fs::create_dir_all(&node_dir).map_err(io)?;
        std::fs::write(node_dir.join("domain.pddl"), print_domain(&self.domain)).map_err(io)?;
        std::fs::write(node_dir.join("problem.pddl"), print_problem(&self.problem)).map_err(io)?;
        std::fs::write(node_dir.join("plan.txt"), self.plan.to_text()).map_err(io)?;
        if !self.leaf_bindings.is_empty() {
            let skills: BTreeMap<String, String> = self
                .leaf_bindings
                .iter()
                .map(|(i, s)| (i.to_string(), s.to_string()))
                .collect();
            let json = serde_json::to_string_pretty(&skills)
                .map_err(|e| HierarchyError::Io(e.to_string()))?;
            std::fs::write(node_dir.join("skills.json"), json).map_err(io)?;
        }
        for (index, child) in &self.children {
            child.save(&node_dir.join("children").join(index.to_string()))?;
        }
        Ok(())
    }

    /// A compact textual rendering of the decomposition tree, used in
    /// recovery prompts.
    pub fn render_outline(&self, out: &mut String, indent: usize) {
        for (i, action) in self.plan.actions.iter().enumerate() {
            out.push_str(&"    ".repeat(indent));
            out.push_str(&format!("- {}", action));
            if let Some(skill) = self.leaf_bindings.get(&i) {
                out.push_str(&format!(": {}", skill));
            }
            out.push('\n');
            if let Some(child) = self.children.get(&i) {
                child.render_outline(out, indent + 1);
            }
        }
    }
}

/// Two actions of the same operator share a decomposition regardless of
/// binding: the cache key is the operator name plus its parameter types.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecompositionKey {
    pub operator: String,
    pub param_types: Vec<String>,
}

impl DecompositionKey {
    pub fn of(op: &OperatorDef) -> Self {
        DecompositionKey {
            operator: op.name.clone(),
            param_types: op.params.iter().map(|p| p.ty.clone()).collect(),
        }
    }
}

/// Extra subplan effects classified against the parent action's binding.
#[derive(Debug, Clone, PartialEq)]
pub struct MisalignmentReport {
    pub action: Action,
    pub expected: EffectSet,
    pub observed: EffectSet,
    pub overshoots: BTreeSet<GroundAtom>,
    pub side_effects: BTreeSet<GroundAtom>,
    /// Expected effects the subplan failed to produce; routed to recovery
    /// rather than repaired mechanically.
    pub underachieved: EffectSet,
}

impl MisalignmentReport {
    pub fn is_empty(&self) -> bool {
        self.overshoots.is_empty() && self.side_effects.is_empty() && self.underachieved.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "action": self.action.to_string(),
            "expected": self.expected.to_string(),
            "observed": self.observed.to_string(),
            "overshoots": self.overshoots.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "side_effects": self.side_effects.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "underachieved": self.underachieved.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchKind {
    Overshoot,
    SideEffect,
}

/// Overshoots operate solely on objects bound by the action (zero-arity
/// atoms included); side effects touch at least one unbound object.
pub fn classify_mismatch(extra: &GroundAtom, action: &Action) -> MismatchKind {
    if extra.args.iter().all(|arg| action.binding.contains(arg)) {
        MismatchKind::Overshoot
    } else {
        MismatchKind::SideEffect
    }
}

/// Subproblem for decomposing the transition `s_i -> s_next`:
/// init is `s_i`, the goal is the state difference.
pub fn make_subproblem(
    s_i: &SymbolicState,
    s_next: &SymbolicState,
    objects: &BTreeMap<String, String>,
    domain_name: &str,
) -> Result<Problem, HierarchyError> {
    let diff = crate::symbolic::state_diff(s_i, s_next);
    if diff.is_empty() {
        return Err(HierarchyError::DegenerateSubproblem);
    }
    let mut problem = Problem::new(format!("{}-sub", domain_name), domain_name.to_string());
    problem.objects = objects.clone();
    problem.init = s_i.clone();
    problem.goal = Goal::new(diff.add, diff.del);
    Ok(problem)
}

/// Result of comparing an action's effects with its subplan's joint effects
/// on the upper level's predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum Alignment {
    Aligned,
    Misaligned(MisalignmentReport),
}

/// Restrict the subplan's joint effects to the upper-level predicate set
/// and compare them with the action's expected effects. Extras are
/// classified into overshoots and side effects; missing expected effects
/// are reported as underachieved.
pub fn check_alignment(
    action: &Action,
    expected: &EffectSet,
    subplan_effects: &EffectSet,
    upper_predicates: &BTreeSet<String>,
) -> Alignment {
    let observed = subplan_effects.restricted_to(upper_predicates);
    let extra_add: BTreeSet<GroundAtom> =
        observed.add.difference(&expected.add).cloned().collect();
    let extra_del: BTreeSet<GroundAtom> =
        observed.del.difference(&expected.del).cloned().collect();
    let underachieved = EffectSet {
        add: expected.add.difference(&observed.add).cloned().collect(),
        del: expected.del.difference(&observed.del).cloned().collect(),
    };
    if extra_add.is_empty() && extra_del.is_empty() && underachieved.is_empty() {
        return Alignment::Aligned;
    }
    let mut overshoots = BTreeSet::new();
    let mut side_effects = BTreeSet::new();
    for atom in extra_add.iter().chain(extra_del.iter()) {
        match classify_mismatch(atom, action) {
            MismatchKind::Overshoot => overshoots.insert(atom.clone()),
            MismatchKind::SideEffect => side_effects.insert(atom.clone()),
        };
    }
    Alignment::Misaligned(MisalignmentReport {
        action: action.clone(),
        expected: expected.clone(),
        observed,
        overshoots,
        side_effects,
        underachieved,
    })
}

/// Produces a rewritten operator covering the named side effects; prompts an
/// oracle and validates the result. Two validation failures surface as
/// [`HierarchyError::OracleRejection`].
pub type SideEffectRewriter<'a> =
    dyn FnMut(&OperatorDef, &MisalignmentReport) -> Result<OperatorDef, HierarchyError> + 'a;

/// Repair an operator against a misalignment report. Overshoots are fixed
/// mechanically: each extra literal joins the operator's effects with its
/// arguments lifted through the action binding. Side effects need new
/// parameters and are delegated to the oracle rewriter. An empty report
/// returns the operator unchanged.
pub fn realign_operator(
    op: &OperatorDef,
    report: &MisalignmentReport,
    mut rewriter: Option<&mut SideEffectRewriter>,
) -> Result<OperatorDef, HierarchyError> {
    let mut current = op.clone();
    if !report.side_effects.is_empty() {
        let Some(rewriter) = rewriter.as_deref_mut() else {
            return Err(HierarchyError::OracleRejection);
        };
        current = rewriter(&current, report)?;
    }
    if report.overshoots.is_empty() {
        return Ok(current);
    }
    let mut add = current.add_effects.clone();
    let mut del = current.del_effects.clone();
    for atom in &report.overshoots {
        let lifted = lift_through_binding(atom, &current, &report.action);
        if report.observed.add.contains(atom) {
            if !add.contains(&lifted) {
                add.push(lifted);
            }
        } else if report.observed.del.contains(atom) && !del.contains(&lifted) {
            del.push(lifted);
        }
    }
    Ok(OperatorDef::new(
        current.name.clone(),
        current.params.clone(),
        current.precondition.clone(),
        add,
        del,
    ))
}

/// Replace bound objects with the parameters they instantiate.
fn lift_through_binding(atom: &GroundAtom, op: &OperatorDef, action: &Action) -> LiftedAtom {
    let args = atom
        .args
        .iter()
        .map(|obj| match action.binding.iter().position(|b| b == obj) {
            Some(i) if i < op.params.len() => Term::Var(op.params[i].name.clone()),
            _ => Term::Const(obj.clone()),
        })
        .collect();
    LiftedAtom { predicate: atom.predicate.clone(), args }
}

/// Decomposition cache shared across a learning run: subdomains are reused
/// for any later action of the same operator without oracle calls, and
/// skill templates are reused for leaves.
#[derive(Debug, Clone, Default)]
pub struct DecompositionCache {
    pub subdomains: BTreeMap<DecompositionKey, DomainModel>,
    pub skill_templates: BTreeMap<DecompositionKey, Vec<crate::oracle::SkillTemplate>>,
}
