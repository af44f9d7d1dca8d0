//! The recursive learning engine: plan, map actions to skills, decompose
//! multi-skill actions one level down, verify leaves against the
//! environment, and convert failures into targeted repairs.
//!
//! Control flow per node: plan (falling back to an oracle plan when search
//! fails), then walk the plan left to right. Single-skill actions are
//! verified leaves; multi-skill actions get a subproblem built from the
//! surrounding symbolic states and recurse one level down with a fresh or
//! cached subdomain. After a subtree finishes, its observed joint effects
//! are compared with the parent action's effects on the parent's
//! predicates; overshoots are repaired mechanically, everything else goes
//! through the global recovery module, which patches the authoring module's
//! operator and replans from the owning level.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::envs::{Environment, SkillCall, WorldState};
use crate::grounding::{
    atom_universe, label_initial, pseudo_label, refine_loop, ClassifierRegistry, DedupConfig,
    GroundingError, Thresholds, Transition, TransitionDataset,
};
use crate::oracle::{
    build_prompt, Message, OracleError, OracleReply, OracleRole, OracleSession, PromptContext,
    SkillTemplate,
};
use crate::planner::{search_plan, Plan, Provenance, SearchBudget, SearchFailure};
use crate::symbolic::{
    apply_unchecked, goal_satisfied, parse_operator, parse_operator_lenient, print_domain,
    print_operator, print_problem, state_diff, Action, DomainModel, GroundAtom, PddlError,
    PredicateKind, PredicateSchema, Problem, SymbolicState,
};
use crate::verify::{
    decide_recovery, expected_change, verify_leaf, FailurePhase, FailureReport, FixType,
    RecoveryDecision, StateGrounder, VerifyError, VerifyOutcome,
};

use super::{
    check_alignment, make_subproblem, realign_operator, Alignment, DecompSource,
    DecompositionCache, DecompositionKey, HierarchyError, HierarchyNode,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("budget exhausted: {0}")]
    BudgetExhausted(&'static str),
    #[error("unrecoverable failure: {0}")]
    Unrecoverable(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

/// Per-task resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budgets {
    /// Environment skill executions per task.
    pub interactions: u32,
    /// Planning attempts (including post-repair replanning) per task.
    pub replans: u32,
    /// Node limit handed to the forward search.
    pub search_nodes: usize,
    /// Maximum hierarchy depth.
    pub max_depth: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { interactions: 10, replans: 20, search_nodes: 100_000, max_depth: 4 }
    }
}

/// Static configuration for one task traversal.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub instruction: String,
    pub domain_knowledge: String,
    pub budgets: Budgets,
    pub thresholds: Thresholds,
    pub seed: u64,
    /// Continuous environments ground predicates through classifiers and
    /// collect pseudo-labeled transitions; discrete ones read atoms off the
    /// simulator.
    pub continuous: bool,
    pub dedup: DedupConfig,
}

/// Learning state shared across sequential tasks: the decomposition cache,
/// classifier registry, interaction dataset, predicate book and operator
/// authorship.
#[derive(Default)]
pub struct SharedLearnState {
    pub cache: DecompositionCache,
    pub registry: ClassifierRegistry,
    pub dataset: TransitionDataset,
    /// Every predicate ever declared, with kind and description.
    pub schemas: BTreeMap<String, PredicateSchema>,
    authors: BTreeMap<String, Author>,
    force_decompose: BTreeSet<String>,
    pending_fixes: Vec<(String, crate::symbolic::OperatorDef)>,
}

#[derive(Clone)]
struct Author {
    role: OracleRole,
    level: u32,
    ctx: PromptContext,
}

impl SharedLearnState {
    pub fn record_author_domain(&mut self, operator: &str, ctx: PromptContext) {
        self.authors
            .insert(operator.to_string(), Author { role: OracleRole::Domain, level: 0, ctx });
    }
}

/// Counters and diagnostics for one task traversal.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LearnStats {
    pub interactions_used: u32,
    pub replans_used: u32,
    pub decompose_cache_hits: u32,
    pub leaf_cache_hits: u32,
    pub recoveries: u32,
    pub overshoot_repairs: u32,
    pub side_effect_repairs: u32,
    pub verified_transitions: u32,
    pub labeling_calls: u32,
    pub goal_achieved_symbolically: bool,
}

/// The finished tree plus diagnostics.
pub struct LearnedHierarchy {
    pub root: HierarchyNode,
    pub stats: LearnStats,
    pub misalignments: Vec<serde_json::Value>,
    pub failures: Vec<serde_json::Value>,
}

enum Flow {
    Done,
    /// Unwind to the node at this level and replan there.
    Retract(u32),
}

enum ActionFlow {
    Advance,
    ReplanHere,
    Retract(u32),
}

struct RegistryGrounder<'a> {
    registry: &'a ClassifierRegistry,
    universes: &'a BTreeMap<String, Vec<GroundAtom>>,
    continuous: bool,
}

impl StateGrounder for RegistryGrounder<'_> {
    fn ground(
        &self,
        world: &WorldState,
        predicates: &BTreeSet<String>,
    ) -> Result<SymbolicState, GroundingError> {
        if !self.continuous {
            return Ok(world.as_discrete().cloned().unwrap_or_default().restricted_to(predicates));
        }
        let restricted: BTreeMap<String, Vec<GroundAtom>> = self
            .universes
            .iter()
            .filter(|(name, _)| predicates.contains(*name))
            .map(|(name, atoms)| (name.clone(), atoms.clone()))
            .collect();
        self.registry.ground_state(world, &restricted)
    }
}

/// Run the learning loop for one task. The root node carries the initial
/// domain and problem (both usually assembled from a domain-oracle reply);
/// `shared` persists across tasks so later tasks reuse decompositions and
/// classifiers.
pub fn traverse(
    mut root: HierarchyNode,
    env: &mut dyn Environment,
    session: &mut OracleSession,
    spec: &TaskSpec,
    shared: &mut SharedLearnState,
) -> Result<LearnedHierarchy, LearnError> {
    let mut engine = Engine {
        env,
        session,
        shared,
        spec,
        stats: LearnStats::default(),
        misalignments: Vec::new(),
        failures: Vec::new(),
        interactions_at_start: 0,
        path: Vec::new(),
    };
    engine.interactions_at_start = engine.env.interactions();

    // register declared predicates and classifiers before anything runs
    engine.absorb_schemas(&root.domain);
    if spec.continuous {
        engine.ensure_classifiers(&root.domain)?;
        let world = engine.env.observe();
        engine.label_start_state(world)?;
    }
    // with every classifier in place, refresh the groundable part of the
    // root init; non-groundable atoms provided by the caller are kept
    {
        let grounded = engine.ground_state_based(&root.domain)?;
        let state_based = engine.state_based_of(&root.domain);
        root.problem.init.atoms.retain(|a| !state_based.contains(&a.predicate));
        root.problem.init.atoms.extend(grounded.atoms);
    }

    match engine.run_node(&mut root, None)? {
        Flow::Done => {}
        Flow::Retract(level) => {
            return Err(LearnError::Unrecoverable(format!(
                "retraction to level {} escaped the hierarchy root",
                level
            )))
        }
    }

    let final_state = engine.ground_for_planning(&root.domain)?;
    engine.stats.goal_achieved_symbolically = goal_satisfied(&final_state, &root.problem.goal);
    engine.stats.interactions_used = engine.env.interactions() - engine.interactions_at_start;

    let stats = engine.stats.clone();
    let misalignments = engine.misalignments.clone();
    let failures = engine.failures.clone();
    Ok(LearnedHierarchy { root, stats, misalignments, failures })
}

struct Engine<'a> {
    env: &'a mut dyn Environment,
    session: &'a mut OracleSession,
    shared: &'a mut SharedLearnState,
    spec: &'a TaskSpec,
    stats: LearnStats,
    misalignments: Vec<serde_json::Value>,
    failures: Vec<serde_json::Value>,
    interactions_at_start: u32,
    path: Vec<String>,
}

impl Engine<'_> {
    // -- rendering helpers -------------------------------------------------

    fn render_objects(&self) -> String {
        self.env
            .objects()
            .iter()
            .map(|(name, ty)| format!("{} - {}", name, ty))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn render_types(&self, domain: &DomainModel) -> String {
        if domain.types.parents.is_empty() {
            "object".to_string()
        } else {
            domain
                .types
                .parents
                .iter()
                .map(|(c, p)| format!("{} - {}", c, p))
                .collect::<Vec<_>>()
                .join(" ")
        }
    }

    fn render_predicates(&self, domain: &DomainModel) -> String {
        let mut out = String::new();
        for schema in domain.predicates.values() {
            let mut decl = format!("({}", schema.name);
            for (var, ty) in &schema.params {
                decl.push_str(&format!(" ?{} - {}", var, ty));
            }
            decl.push(')');
            out.push_str(&format!(
                "- {}: {}. {}\n",
                decl,
                schema.kind.label(),
                schema.description
            ));
        }
        if out.is_empty() {
            out.push_str("(none yet)\n");
        }
        out
    }

    fn render_accessor_api(&self) -> String {
        let mut out = String::new();
        for (name, args, ret) in crate::grounding::accessor_table() {
            out.push_str(&format!("- {}({}) -> {}\n", name, args, ret));
        }
        out
    }

    fn render_history(&self) -> String {
        let exchanges = self.session.exchanges();
        let from = exchanges.len().saturating_sub(8);
        let mut out = String::new();
        for ex in &exchanges[from..] {
            out.push_str(&format!("- exchange {} ({})\n", ex.seq, ex.role));
        }
        out
    }

    fn render_path(&self) -> String {
        let mut out = String::new();
        for (depth, entry) in self.path.iter().enumerate() {
            out.push_str(&"    ".repeat(depth));
            out.push_str("- ");
            out.push_str(entry);
            out.push('\n');
        }
        out
    }

    // -- predicates, classifiers and grounding -----------------------------

    fn absorb_schemas(&mut self, domain: &DomainModel) {
        for schema in domain.predicates.values() {
            self.shared.schemas.entry(schema.name.clone()).or_insert_with(|| schema.clone());
        }
    }

    fn universes_for(
        &self,
        predicates: &BTreeSet<String>,
    ) -> BTreeMap<String, Vec<GroundAtom>> {
        let mut out = BTreeMap::new();
        for name in predicates {
            if let Some(schema) = self.shared.schemas.get(name) {
                let types = crate::symbolic::TypeHierarchy {
                    parents: self.default_type_tree(),
                };
                out.insert(name.clone(), atom_universe(schema, self.env.objects(), &types));
            }
        }
        out
    }

    fn default_type_tree(&self) -> BTreeMap<String, String> {
        // the object roster's types, rooted at object
        let mut parents = BTreeMap::new();
        for ty in self.env.objects().values() {
            parents.entry(ty.clone()).or_insert_with(|| "object".to_string());
        }
        parents
    }

    /// Alg. line: learn classifiers for new state-based predicates.
    fn ensure_classifiers(&mut self, domain: &DomainModel) -> Result<(), LearnError> {
        if !self.spec.continuous {
            return Ok(());
        }
        let missing: Vec<PredicateSchema> = domain
            .predicates
            .values()
            .filter(|s| s.kind == PredicateKind::StateBased)
            .filter(|s| !self.shared.registry.contains(&s.name))
            .cloned()
            .collect();
        for schema in missing {
            let mut decl = format!("({}", schema.name);
            for (var, ty) in &schema.params {
                decl.push_str(&format!(" ?{} - {}", var, ty));
            }
            decl.push_str(&format!("): {}", schema.description));
            let existing: String = self
                .shared
                .registry
                .names()
                .filter_map(|n| self.shared.registry.get(n).map(|(p, _)| p.source.clone()))
                .collect::<Vec<_>>()
                .join("\n");
            let ctx = PromptContext {
                domain_knowledge: Some(self.spec.domain_knowledge.clone()),
                classifier_api: Some(self.render_accessor_api()),
                existing_classifiers: Some(existing),
                predicate_decl: Some(decl),
                ..Default::default()
            };
            let messages = build_prompt(OracleRole::ClassifierGen, &ctx)?;
            let reply = self.session.ask_parsed(OracleRole::ClassifierGen, messages.clone())?;
            let OracleReply::Classifier(source) = reply else {
                return Err(LearnError::Unrecoverable("classifier oracle reply malformed".into()));
            };
            if let Err(first_err) = self.shared.registry.register_source(&source) {
                // one re-ask with the validation error appended
                let mut retry = messages;
                retry.push(Message::user(format!(
                    "The proposed classifier failed validation: {}. Respond again.",
                    first_err
                )));
                let reply = self.session.ask_parsed(OracleRole::ClassifierGen, retry)?;
                let OracleReply::Classifier(source) = reply else {
                    return Err(LearnError::Unrecoverable(
                        "classifier oracle reply malformed".into(),
                    ));
                };
                self.shared.registry.register_source(&source)?;
            }
        }
        Ok(())
    }

    fn state_based_of(&self, domain: &DomainModel) -> BTreeSet<String> {
        domain.state_based_predicates()
    }

    fn ground_state_based(
        &mut self,
        domain: &DomainModel,
    ) -> Result<SymbolicState, LearnError> {
        let predicates = self.state_based_of(domain);
        let world = self.env.observe();
        if !self.spec.continuous {
            return Ok(world
                .as_discrete()
                .cloned()
                .unwrap_or_default()
                .restricted_to(&predicates));
        }
        let universes = self.universes_for(&predicates);
        Ok(self.shared.registry.ground_state(&world, &universes)?)
    }

    /// Planning view: grounded state-based atoms plus carried
    /// state-independent atoms (they never change during a task).
    fn ground_for_planning(&mut self, domain: &DomainModel) -> Result<SymbolicState, LearnError> {
        let all = domain.predicate_names();
        let world = self.env.observe();
        if !self.spec.continuous {
            return Ok(world.as_discrete().cloned().unwrap_or_default().restricted_to(&all));
        }
        self.ground_state_based(domain)
    }

    // -- dataset ------------------------------------------------------------

    fn label_start_state(&mut self, world: WorldState) -> Result<(), LearnError> {
        let session = &mut *self.session;
        let schemas = &self.shared.schemas;
        let registry_names: BTreeSet<String> =
            self.shared.registry.names().cloned().collect();
        let objects = self.env.objects().clone();
        let mut labeler = make_labeler(session, schemas, &registry_names, &objects);
        label_initial(&mut self.shared.dataset, world, &mut labeler)?;
        Ok(())
    }

    fn record_transition(&mut self, transition: Transition) -> Result<(), LearnError> {
        self.stats.verified_transitions += 1;
        if !self.spec.continuous {
            self.shared.dataset.transitions.push(transition);
            return Ok(());
        }
        let calls = {
            let session = &mut *self.session;
            let schemas = &self.shared.schemas;
            let registry_names: BTreeSet<String> =
                self.shared.registry.names().cloned().collect();
            let objects = self.env.objects().clone();
            let mut labeler = make_labeler(session, schemas, &registry_names, &objects);
            pseudo_label(&mut self.shared.dataset, vec![transition], &mut labeler, &self.spec.dedup)?
        };
        self.stats.labeling_calls += calls as u32;
        self.refine_classifiers()?;
        Ok(())
    }

    /// Post-labeling refinement pass: score every classifier with relevant
    /// data and walk the threshold ladder (optimize hyperparameters, or ask
    /// the refinement oracle when the code itself looks wrong).
    fn refine_classifiers(&mut self) -> Result<(), LearnError> {
        let names: Vec<String> = self.shared.registry.names().cloned().collect();
        for name in names {
            let Some(schema) = self.shared.schemas.get(&name).cloned() else { continue };
            if schema.kind != PredicateKind::StateBased {
                continue;
            }
            let types = crate::symbolic::TypeHierarchy { parents: self.default_type_tree() };
            let universe = atom_universe(&schema, self.env.objects(), &types);
            let knowledge = self.spec.domain_knowledge.clone();
            let api = self.render_accessor_api();
            let data = self.shared.dataset.labeled_states();
            let session = &mut *self.session;
            let mut refiner = |program: &crate::grounding::ClassifierProgram,
                               mismatches: &[crate::grounding::Mismatch]|
             -> Result<crate::grounding::ClassifierProgram, GroundingError> {
                oracle_refine(session, &knowledge, &api, program, mismatches)
            };
            let outcome = refine_loop(
                &mut self.shared.registry,
                &name,
                &data,
                &universe,
                self.spec.thresholds,
                self.spec.seed,
                5,
                Some(&mut refiner),
            );
            match outcome {
                Ok(_) | Err(GroundingError::NoRelevantAtoms(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    // -- planning -----------------------------------------------------------

    fn plan_or_fallback(&mut self, node: &HierarchyNode) -> Result<Plan, LearnError> {
        self.stats.replans_used += 1;
        if self.stats.replans_used > self.spec.budgets.replans {
            return Err(LearnError::BudgetExhausted("replans"));
        }
        let budget = SearchBudget { node_limit: self.spec.budgets.search_nodes };
        match search_plan(&node.domain, &node.problem, budget) {
            Ok(plan) => Ok(plan),
            Err(SearchFailure::Unsolvable) | Err(SearchFailure::BudgetExhausted { .. }) => {
                if std::env::var("STRATA_DEBUG").is_ok() {
                    eprintln!(
                        "[debug] search failed at level {}\n{}\n{}",
                        node.level,
                        print_domain(&node.domain),
                        print_problem(&node.problem)
                    );
                }
                let request = format!(
                    "### Domain\n```pddl\n{}```\n\n### Problem\n```pddl\n{}```\n",
                    print_domain(&node.domain),
                    print_problem(&node.problem)
                );
                let ctx = PromptContext { plan_request: Some(request), ..Default::default() };
                let messages = build_prompt(OracleRole::PlanFallback, &ctx)?;
                let reply = self.session.ask_parsed(OracleRole::PlanFallback, messages)?;
                let OracleReply::Plan(actions) = reply else {
                    return Err(LearnError::Unrecoverable("fallback reply malformed".into()));
                };
                Ok(Plan::new(actions, Provenance::OracleFallback))
            }
        }
    }

    fn chain_states(&self, node: &HierarchyNode) -> Vec<SymbolicState> {
        let mut states = vec![node.problem.init.clone()];
        for action in &node.plan.actions {
            let next = apply_unchecked(states.last().unwrap(), action, &node.domain);
            states.push(next);
        }
        states
    }

    // -- the node loop -------------------------------------------------------

    fn run_node(
        &mut self,
        node: &mut HierarchyNode,
        origin: Option<DecompositionKey>,
    ) -> Result<Flow, LearnError> {
        loop {
            self.apply_pending_fixes(node, origin.as_ref());
            self.absorb_schemas(&node.domain);
            self.ensure_classifiers(&node.domain)?;

            node.plan = self.plan_or_fallback(node)?;
            node.children.clear();
            node.leaf_bindings.clear();
            node.decomposition_source.clear();
            let mut states = self.chain_states(node);

            let mut j = 0;
            let mut replan = false;
            while j < node.plan.actions.len() {
                let action = node.plan.actions[j].clone();
                let s_j = states[j].clone();
                let s_j1 = states[j + 1].clone();
                match self.handle_action(node, j, &action, &s_j, &s_j1, origin.as_ref())? {
                    ActionFlow::Advance => {
                        // the operator may have been realigned; rechain
                        states = self.chain_states(node);
                        j += 1;
                    }
                    ActionFlow::ReplanHere => {
                        replan = true;
                        break;
                    }
                    ActionFlow::Retract(level) => {
                        if level == node.level {
                            replan = true;
                            break;
                        }
                        return Ok(Flow::Retract(level));
                    }
                }
            }
            if replan {
                // replanning resumes from wherever the environment is now
                node.problem.init = self.ground_for_planning(&node.domain)?;
                continue;
            }
            return Ok(Flow::Done);
        }
    }

    fn apply_pending_fixes(&mut self, node: &mut HierarchyNode, origin: Option<&DecompositionKey>) {
        let mut remaining = Vec::new();
        for (name, op) in std::mem::take(&mut self.shared.pending_fixes) {
            if node.domain.operators.contains_key(&name) {
                node.domain.operators.insert(name.clone(), op.clone());
                if let Some(key) = origin {
                    if let Some(cached) = self.shared.cache.subdomains.get_mut(key) {
                        cached.operators.insert(name.clone(), op.clone());
                    }
                }
            } else {
                remaining.push((name, op));
            }
        }
        self.shared.pending_fixes = remaining;
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_action(
        &mut self,
        node: &mut HierarchyNode,
        index: usize,
        action: &Action,
        s_j: &SymbolicState,
        s_j1: &SymbolicState,
        origin: Option<&DecompositionKey>,
    ) -> Result<ActionFlow, LearnError> {
        let Some(op) = node.domain.operator(&action.operator).cloned() else {
            return Err(LearnError::Unrecoverable(format!(
                "plan action {} has no operator",
                action
            )));
        };
        let key = DecompositionKey::of(&op);

        // cached decomposition wins outright: no oracle involved
        if let Some(subdomain) = self.shared.cache.subdomains.get(&key).cloned() {
            self.stats.decompose_cache_hits += 1;
            return self.descend(
                node,
                index,
                action,
                &op,
                s_j,
                s_j1,
                subdomain,
                DecompSource::Cached,
            );
        }

        let templates = match self.shared.cache.skill_templates.get(&key) {
            Some(t) => {
                self.stats.leaf_cache_hits += 1;
                t.clone()
            }
            None => {
                let templates = self.ask_translate(node, &op)?;
                self.shared.cache.skill_templates.insert(key.clone(), templates.clone());
                templates
            }
        };

        if templates.len() == 1 && !self.shared.force_decompose.contains(&op.name) {
            let skill = templates[0].bind(&op, action)?;
            node.leaf_bindings.insert(index, skill.clone());
            return self.verify_and_recover(node, action, &skill, origin);
        }

        // multi-skill mapping: synthesize the subproblem and decompose
        let suggested: String = templates
            .iter()
            .map(|t| render_template(t))
            .collect::<Vec<_>>()
            .join("\n");
        let subdomain = self.ask_decompose(node, action, &op, s_j, s_j1, &suggested)?;
        self.shared.cache.subdomains.insert(key.clone(), subdomain.clone());
        self.descend(node, index, action, &op, s_j, s_j1, subdomain, DecompSource::Fresh)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &mut self,
        node: &mut HierarchyNode,
        index: usize,
        action: &Action,
        op: &crate::symbolic::OperatorDef,
        s_j: &SymbolicState,
        s_j1: &SymbolicState,
        subdomain: DomainModel,
        source: DecompSource,
    ) -> Result<ActionFlow, LearnError> {
        if node.level + 1 >= self.spec.budgets.max_depth {
            return Err(LearnError::Hierarchy(HierarchyError::MaxDepthExceeded(
                self.spec.budgets.max_depth,
            )));
        }
        let subproblem = match make_subproblem(s_j, s_j1, self.env.objects(), &subdomain.name) {
            Ok(p) => p,
            Err(HierarchyError::DegenerateSubproblem) => {
                // the action changes nothing observable; hand it to recovery
                let report = FailureReport {
                    action: action.clone(),
                    skill: SkillCall::new("(decomposition)", vec![]),
                    phase: FailurePhase::EffectMismatch,
                    expected: crate::symbolic::EffectSet::default(),
                    observed: crate::symbolic::EffectSet::default(),
                    missing_preconditions: vec![],
                    exception: Some("degenerate subproblem: action has no effect".into()),
                    hierarchy_path: self.render_path(),
                    state_before: s_j.clone(),
                    operator_block: print_operator(op),
                };
                return self.recover(node, &report, None);
            }
            Err(e) => return Err(e.into()),
        };

        // the child retains the parent's predicates, objects and types
        let mut child_domain = subdomain;
        for (name, schema) in &node.domain.predicates {
            child_domain.predicates.entry(name.clone()).or_insert_with(|| schema.clone());
        }
        for (ty, parent) in &node.domain.types.parents {
            child_domain.types.parents.entry(ty.clone()).or_insert_with(|| parent.clone());
        }
        let mut child = HierarchyNode::new(node.level + 1, child_domain, subproblem);
        self.absorb_schemas(&child.domain);
        self.ensure_classifiers(&child.domain)?;

        let child_state_based = self.state_based_of(&child.domain);
        let before = self.observe_restricted(&child_state_based)?;

        self.path.push(action.to_string());
        let key = DecompositionKey::of(op);
        let flow = self.run_node(&mut child, Some(key))?;
        self.path.pop();

        node.decomposition_source.insert(index, source);
        node.children.insert(index, child);

        if let Flow::Retract(level) = flow {
            if level == node.level {
                return Ok(ActionFlow::ReplanHere);
            }
            return Ok(ActionFlow::Retract(level));
        }

        // cross-level alignment on the parent's predicates
        let after = self.observe_restricted(&child_state_based)?;
        let observed = state_diff(&before, &after);
        let upper = self.state_based_of(&node.domain);
        let expected = expected_change(&node.domain, s_j, action, &upper);
        match check_alignment(action, &expected, &observed, &upper) {
            Alignment::Aligned => Ok(ActionFlow::Advance),
            Alignment::Misaligned(report) => {
                self.misalignments.push(report.to_json());
                if !report.underachieved.is_empty() {
                    // not specified as mechanically repairable: recovery
                    let failure = FailureReport {
                        action: action.clone(),
                        skill: SkillCall::new("(decomposition)", vec![]),
                        phase: FailurePhase::EffectMismatch,
                        expected: report.expected.clone(),
                        observed: report.observed.clone(),
                        missing_preconditions: vec![],
                        exception: None,
                        hierarchy_path: self.render_path(),
                        state_before: s_j.clone(),
                        operator_block: print_operator(op),
                    };
                    return self.recover(node, &failure, None);
                }
                if !report.side_effects.is_empty() {
                    self.stats.side_effect_repairs += 1;
                }
                if !report.overshoots.is_empty() {
                    self.stats.overshoot_repairs += 1;
                }
                let session = &mut *self.session;
                let authors = &self.shared.authors;
                let mut rewriter = |current: &crate::symbolic::OperatorDef,
                                    rep: &super::MisalignmentReport|
                 -> Result<crate::symbolic::OperatorDef, HierarchyError> {
                    side_effect_rewrite(session, authors, current, rep)
                };
                let fixed = realign_operator(&op.clone(), &report, Some(&mut rewriter))?;
                node.domain.operators.insert(fixed.name.clone(), fixed.clone());
                if let Some(origin_key) = node_origin_key(node) {
                    let _ = origin_key;
                }
                // write through to the cache entry this node came from
                self.write_through(node, &fixed);
                // remaining plan must still validate under the realigned op
                let trace = crate::planner::validate_plan(
                    &node.domain,
                    &Problem {
                        name: node.problem.name.clone(),
                        domain_name: node.problem.domain_name.clone(),
                        objects: node.problem.objects.clone(),
                        init: node.problem.init.clone(),
                        goal: node.problem.goal.clone(),
                    },
                    &node.plan,
                );
                if trace.is_valid() {
                    Ok(ActionFlow::Advance)
                } else {
                    Ok(ActionFlow::ReplanHere)
                }
            }
        }
    }

    fn write_through(&mut self, node: &HierarchyNode, fixed: &crate::symbolic::OperatorDef) {
        for cached in self.shared.cache.subdomains.values_mut() {
            if cached.operators.contains_key(&fixed.name) {
                cached.operators.insert(fixed.name.clone(), fixed.clone());
            }
        }
        let _ = node;
    }

    fn observe_restricted(
        &mut self,
        predicates: &BTreeSet<String>,
    ) -> Result<SymbolicState, LearnError> {
        let world = self.env.observe();
        if !self.spec.continuous {
            return Ok(world.as_discrete().cloned().unwrap_or_default().restricted_to(predicates));
        }
        let universes = self.universes_for(predicates);
        Ok(self.shared.registry.ground_state(&world, &universes)?)
    }

    // -- leaves ---------------------------------------------------------------

    fn verify_and_recover(
        &mut self,
        node: &mut HierarchyNode,
        action: &Action,
        skill: &SkillCall,
        origin: Option<&DecompositionKey>,
    ) -> Result<ActionFlow, LearnError> {
        let _ = origin;
        // budget gate before the skill runs
        let used = self.env.interactions() - self.interactions_at_start;
        if used >= self.spec.budgets.interactions {
            return Err(LearnError::BudgetExhausted("interactions"));
        }

        let snapshot = self.env.snapshot();
        let state_based = self.state_based_of(&node.domain);
        let universes = self.universes_for(&state_based);
        let grounder = RegistryGrounder {
            registry: &self.shared.registry,
            universes: &universes,
            continuous: self.spec.continuous,
        };
        self.path.push(format!("{}: {}", action, skill));
        let path = self.render_path();
        let outcome = verify_leaf(
            action,
            skill,
            self.env,
            &grounder,
            &state_based,
            &node.domain,
            &path,
        )?;
        self.path.pop();

        match outcome {
            VerifyOutcome::Verified(transition) => {
                self.record_transition(transition)?;
                Ok(ActionFlow::Advance)
            }
            VerifyOutcome::Failed(report) => {
                self.failures.push(report.to_json());
                self.recover(node, &report, Some(snapshot))
            }
        }
    }

    // -- the global recovery module --------------------------------------------

    fn recover(
        &mut self,
        node: &mut HierarchyNode,
        report: &FailureReport,
        snapshot: Option<usize>,
    ) -> Result<ActionFlow, LearnError> {
        self.stats.recoveries += 1;
        if std::env::var("STRATA_DEBUG").is_ok() {
            eprintln!("[debug] recovery #{} for:\n{}", self.stats.recoveries, report.render_summary());
        }
        let history = self.render_history();
        let decision =
            decide_recovery(report, &history, self.session, &self.spec.domain_knowledge)?;
        self.apply_recovery(node, report, &decision, snapshot)
    }

    fn apply_recovery(
        &mut self,
        node: &mut HierarchyNode,
        report: &FailureReport,
        decision: &RecoveryDecision,
        snapshot: Option<usize>,
    ) -> Result<ActionFlow, LearnError> {
        // retrying from the failed state is not well defined; simulators
        // support snapshots, so rewind to the pre-action checkpoint
        if let Some(snap) = snapshot {
            self.env.restore(snap);
        }
        match decision.fix {
            FixType::PddlFix => {
                let mut retract_to = node.level;
                for op_name in &decision.operators {
                    let author = self.shared.authors.get(op_name).cloned();
                    let fixed = self.reprompt_author(op_name, author.as_ref(), report)?;
                    let level = author.map(|a| a.level).unwrap_or(node.level);
                    retract_to = retract_to.min(level);
                    self.shared.pending_fixes.push((op_name.clone(), fixed));
                }
                if retract_to == node.level {
                    Ok(ActionFlow::ReplanHere)
                } else {
                    Ok(ActionFlow::Retract(retract_to))
                }
            }
            FixType::PriorSkills => {
                // extend the leaf's mapping; the multi-skill route then
                // rebuilds it as a decomposition with tightened operators
                let op = node
                    .domain
                    .operator(&report.action.operator)
                    .cloned()
                    .ok_or_else(|| LearnError::Unrecoverable("unknown operator".into()))?;
                let key = DecompositionKey::of(&op);
                let mut templates: Vec<SkillTemplate> = Vec::new();
                for call in &decision.prior_skills {
                    templates.push(
                        SkillTemplate::parse(call, &op)
                            .map_err(LearnError::Oracle)?,
                    );
                }
                if let Some(existing) = self.shared.cache.skill_templates.get(&key) {
                    templates.extend(existing.clone());
                }
                self.shared.cache.skill_templates.insert(key, templates);
                self.shared.force_decompose.insert(op.name.clone());
                Ok(ActionFlow::ReplanHere)
            }
            FixType::IncorrectInstantiation => {
                let op = node
                    .domain
                    .operator(&report.action.operator)
                    .cloned()
                    .ok_or_else(|| LearnError::Unrecoverable("unknown operator".into()))?;
                let key = DecompositionKey::of(&op);
                self.shared.cache.skill_templates.remove(&key);
                Ok(ActionFlow::ReplanHere)
            }
            FixType::MultipleSkills => {
                self.shared.force_decompose.insert(report.action.operator.clone());
                Ok(ActionFlow::ReplanHere)
            }
        }
    }

    /// Re-prompt the module that authored `op_name`, appending the failure
    /// summary, and parse the corrected operator out of the reply.
    fn reprompt_author(
        &mut self,
        op_name: &str,
        author: Option<&Author>,
        report: &FailureReport,
    ) -> Result<crate::symbolic::OperatorDef, LearnError> {
        let (role, mut ctx) = match author {
            Some(a) => (a.role, a.ctx.clone()),
            None => (
                OracleRole::Domain,
                PromptContext {
                    instruction: Some(self.spec.instruction.clone()),
                    skills: Some(self.env.skills().to_prompt_listing()),
                    objects: Some(self.render_objects()),
                    ..Default::default()
                },
            ),
        };
        ctx.failure_summary = Some(report.render_summary());
        let messages = build_prompt(role, &ctx)?;
        let reply = self.session.ask_parsed(role, messages)?;
        let OracleReply::DomainEdit(edit) = reply else {
            return Err(LearnError::Unrecoverable("repair reply malformed".into()));
        };
        let edit_op = edit
            .operators
            .iter()
            .find(|e| e.name == op_name)
            .or_else(|| edit.operators.first())
            .ok_or_else(|| LearnError::Unrecoverable("repair reply has no operator".into()))?;
        Ok(parse_operator_lenient(&edit_op.pddl)?)
    }

    // -- oracle requests ---------------------------------------------------------

    fn ask_translate(
        &mut self,
        node: &HierarchyNode,
        op: &crate::symbolic::OperatorDef,
    ) -> Result<Vec<SkillTemplate>, LearnError> {
        let ctx = PromptContext {
            skills: Some(self.env.skills().to_prompt_listing()),
            objects: Some(self.render_objects()),
            predicates: Some(self.render_predicates(&node.domain)),
            operator_block: Some(print_operator(op)),
            ..Default::default()
        };
        let messages = build_prompt(OracleRole::Translate, &ctx)?;
        let reply = self.session.ask_parsed(OracleRole::Translate, messages)?;
        let OracleReply::Translate(items) = reply else {
            return Err(LearnError::Unrecoverable("translate reply malformed".into()));
        };
        let mut templates = Vec::new();
        for item in items {
            templates.push(SkillTemplate::parse(&item, op).map_err(LearnError::Oracle)?);
        }
        Ok(templates)
    }

    fn ask_decompose(
        &mut self,
        node: &HierarchyNode,
        action: &Action,
        op: &crate::symbolic::OperatorDef,
        s_j: &SymbolicState,
        s_j1: &SymbolicState,
        suggested: &str,
    ) -> Result<DomainModel, LearnError> {
        let goal_diff = state_diff(s_j, s_j1);
        let goal = crate::symbolic::Goal::new(goal_diff.add.clone(), goal_diff.del.clone());
        let ctx = PromptContext {
            high_level_action: Some(format!("{}", action)),
            operator_block: Some(print_operator(op)),
            predicates: Some(self.render_predicates(&node.domain)),
            actions: Some(String::new()),
            types: Some(self.render_types(&node.domain)),
            objects: Some(self.render_objects()),
            init_state: Some(s_j.to_string()),
            goal_state: Some(goal.to_string()),
            skills: Some(self.env.skills().to_prompt_listing()),
            suggested_skills: Some(format!("{}\n", suggested)),
            ..Default::default()
        };
        let messages = build_prompt(OracleRole::Decompose, &ctx)?;
        let reply = self.session.ask_parsed(OracleRole::Decompose, messages)?;
        let OracleReply::DomainEdit(edit) = reply else {
            return Err(LearnError::Unrecoverable("decompose reply malformed".into()));
        };

        let mut subdomain = DomainModel::new(format!("{}-decomp", op.name));
        subdomain.types = node.domain.types.clone();
        for schema in node.domain.predicates.values() {
            subdomain.predicates.insert(schema.name.clone(), schema.clone());
        }
        apply_domain_edit(&mut subdomain, &edit)?;
        // record authorship for targeted repairs later
        for op_edit in &edit.operators {
            self.shared.authors.insert(
                op_edit.name.clone(),
                Author { role: OracleRole::Decompose, level: node.level + 1, ctx: ctx.clone() },
            );
        }
        Ok(subdomain)
    }
}

fn node_origin_key(_node: &HierarchyNode) -> Option<DecompositionKey> {
    None
}

fn render_template(t: &SkillTemplate) -> String {
    let args: Vec<String> = t
        .args
        .iter()
        .map(|a| match a {
            crate::oracle::SkillArg::Param(p) => format!("{}_param", p),
            crate::oracle::SkillArg::Literal(l) => format!("'{}'", l),
        })
        .collect();
    format!("{}({})", t.name, args.join(", "))
}

/// Build the labeling closure: renders the pseudo-label prompt (pose dump
/// plus every known state-based atom), asks the oracle, and converts the
/// truth assignments back into a symbolic state.
fn make_labeler<'a>(
    session: &'a mut OracleSession,
    schemas: &'a BTreeMap<String, PredicateSchema>,
    registered: &'a BTreeSet<String>,
    objects: &'a BTreeMap<String, String>,
) -> impl FnMut(Option<&SkillCall>, &WorldState) -> Result<SymbolicState, GroundingError> + 'a {
    move |_skill, world| {
        let WorldState::Continuous(continuous) = world else {
            return Err(GroundingError::OracleUnavailable(
                "pseudo-labels only apply to continuous states".into(),
            ));
        };
        let mut atoms_block = String::new();
        let mut predicates_block = String::new();
        let types = crate::symbolic::TypeHierarchy {
            parents: objects
                .values()
                .map(|ty| (ty.clone(), "object".to_string()))
                .collect(),
        };
        for name in registered {
            let Some(schema) = schemas.get(name) else { continue };
            predicates_block.push_str(&format!(
                "# Grounding {}: {}\n",
                schema.name, schema.description
            ));
            for atom in atom_universe(schema, objects, &types) {
                atoms_block.push_str(&atom.to_string());
                atoms_block.push('\n');
            }
        }
        let ctx = PromptContext {
            pose_dump: Some(continuous.to_prompt_dump()),
            predicates: Some(predicates_block),
            candidate_atoms: Some(atoms_block),
            ..Default::default()
        };
        let messages = build_prompt(OracleRole::PseudoLabel, &ctx)
            .map_err(|e| GroundingError::OracleUnavailable(e.to_string()))?;
        let reply = session
            .ask_parsed(OracleRole::PseudoLabel, messages)
            .map_err(|e| GroundingError::OracleUnavailable(e.to_string()))?;
        let OracleReply::Labels(pairs) = reply else {
            return Err(GroundingError::OracleUnavailable("labeler reply malformed".into()));
        };
        let mut state = SymbolicState::new();
        for (atom_text, value) in pairs {
            if !value {
                continue;
            }
            let inner = atom_text.trim_start_matches('(').trim_end_matches(')');
            let mut parts = inner.split_whitespace();
            let Some(pred) = parts.next() else { continue };
            state.insert(GroundAtom::new(pred, parts.map(|s| s.to_string()).collect()));
        }
        Ok(state)
    }
}

/// Ask the refinement oracle to repair a classifier; one re-ask on a parse
/// or validation failure, then the old program is retained upstream.
fn oracle_refine(
    session: &mut OracleSession,
    knowledge: &str,
    api: &str,
    program: &crate::grounding::ClassifierProgram,
    mismatches: &[crate::grounding::Mismatch],
) -> Result<crate::grounding::ClassifierProgram, GroundingError> {
    let mut report = String::new();
    for (i, m) in mismatches.iter().enumerate() {
        report.push_str(&format!("{}.\n", i + 1));
        report.push_str(&format!(
            "- Oracle predicates: {}\n",
            if m.labeled { m.atom.to_string() } else { format!("(not {})", m.atom) }
        ));
        report.push_str(&format!(
            "- Grounder predicates: {}\n",
            if m.predicted { m.atom.to_string() } else { format!("(not {})", m.atom) }
        ));
        report.push_str("- Referenced Predicate Evals:\n");
        for (sub, value) in &m.sub_results {
            report.push_str(&format!("    - {}: {}\n", sub, value));
        }
        if let WorldState::Continuous(c) = &m.world {
            report.push_str("- Variables:\n");
            for line in c.to_prompt_dump().lines() {
                report.push_str(&format!("    {}\n", line));
            }
        }
    }
    let ctx = PromptContext {
        domain_knowledge: Some(knowledge.to_string()),
        classifier_api: Some(api.to_string()),
        current_classifier: Some(program.source.clone()),
        mismatch_report: Some(report),
        ..Default::default()
    };
    let messages = build_prompt(OracleRole::ClassifierRefine, &ctx)
        .map_err(|e| GroundingError::UnparseableResponse(e.to_string()))?;

    let mut last_err = String::new();
    for attempt in 0..2 {
        let mut ask = messages.clone();
        if attempt > 0 {
            ask.push(Message::user(format!(
                "Your previous fix failed validation: {}. Respond again with a valid expression.",
                last_err
            )));
        }
        let reply = session
            .ask_parsed(OracleRole::ClassifierRefine, ask)
            .map_err(|e| GroundingError::UnparseableResponse(e.to_string()))?;
        let OracleReply::Classifier(source) = reply else {
            last_err = "reply was not a classifier".into();
            continue;
        };
        match crate::grounding::parse_classifier(&source, &crate::grounding::NoClassifiers) {
            Ok(mut candidate) => {
                if candidate.predicate != program.predicate {
                    last_err = format!(
                        "classifier names `{}`, expected `{}`",
                        candidate.predicate, program.predicate
                    );
                    continue;
                }
                candidate.source = source;
                return Ok(candidate);
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(GroundingError::UnparseableResponse(last_err))
}

fn side_effect_rewrite(
    session: &mut OracleSession,
    authors: &BTreeMap<String, Author>,
    current: &crate::symbolic::OperatorDef,
    report: &super::MisalignmentReport,
) -> Result<crate::symbolic::OperatorDef, HierarchyError> {
    let author = authors.get(&current.name);
    let (role, mut ctx) = match author {
        Some(a) => (a.role, a.ctx.clone()),
        None => (OracleRole::Decompose, PromptContext::default()),
    };
    let mut summary = format!(
        "Action: {}\nOperator:\n```pddl\n{}```\nExpected Change:\n",
        report.action,
        print_operator(current)
    );
    for a in &report.expected.add {
        summary.push_str(&format!("- {}: False -> True\n", a));
    }
    for a in &report.expected.del {
        summary.push_str(&format!("- {}: True -> False\n", a));
    }
    summary.push_str("Ground Truth Change:\n");
    for a in &report.observed.add {
        summary.push_str(&format!("- {}: False -> True\n", a));
    }
    for a in &report.observed.del {
        summary.push_str(&format!("- {}: True -> False\n", a));
    }
    summary.push_str(
        "The extra effects involve objects outside the action's parameters; \
         add the variables needed to cover them.\n",
    );
    ctx.failure_summary = Some(summary);

    for _attempt in 0..2 {
        let Ok(messages) = build_prompt(role, &ctx) else {
            return Err(HierarchyError::OracleRejection);
        };
        let Ok(reply) = session.ask_parsed(role, messages) else {
            return Err(HierarchyError::OracleRejection);
        };
        let OracleReply::DomainEdit(edit) = reply else { continue };
        let Some(op_edit) = edit
            .operators
            .iter()
            .find(|e| e.name == current.name)
            .or_else(|| edit.operators.first())
        else {
            continue;
        };
        if let Ok(op) = parse_operator(&op_edit.pddl, &DomainModel::new("check"))
            .or_else(|_| parse_operator_lenient(&op_edit.pddl))
        {
            // arity/typing sanity: parameters must cover the old ones
            if op.params.len() >= current.params.len() {
                return Ok(op);
            }
        }
    }
    Err(HierarchyError::OracleRejection)
}

/// Fold a parsed domain-edit reply into a domain: declared predicates are
/// added (kind from the `{state|other}` label), operators are parsed against
/// the enlarged predicate set, deletions are honored.
pub fn apply_domain_edit(
    domain: &mut DomainModel,
    edit: &crate::oracle::DomainEditReply,
) -> Result<(), PddlError> {
    for decl in &edit.predicates {
        let schema = parse_predicate_decl(&decl.decl, &decl.kind_label, &decl.description)?;
        for (_, ty) in &schema.params {
            if !domain.types.contains(ty) {
                domain.types.declare(ty.clone(), "object");
            }
        }
        domain.predicates.insert(schema.name.clone(), schema);
    }
    for op_edit in &edit.operators {
        match op_edit.mode {
            crate::oracle::EditMode::Delete => {
                domain.operators.remove(&op_edit.name);
            }
            _ => {
                let op = match parse_operator(&op_edit.pddl, domain) {
                    Ok(op) => op,
                    Err(PddlError::UnknownPredicate(_)) | Err(PddlError::UnknownType(_)) => {
                        let op = parse_operator_lenient(&op_edit.pddl)?;
                        // absorb inferred predicates so later ops resolve
                        for lit in op.precondition.iter() {
                            if let crate::symbolic::LiftedLiteral::Atom { atom, .. } = lit {
                                absorb_inferred(domain, atom, &op);
                            }
                        }
                        for atom in op.add_effects.iter().chain(op.del_effects.iter()) {
                            absorb_inferred(domain, atom, &op);
                        }
                        op
                    }
                    Err(e) => return Err(e),
                };
                for p in &op.params {
                    if !domain.types.contains(&p.ty) {
                        domain.types.declare(p.ty.clone(), "object");
                    }
                }
                domain.operators.insert(op.name.clone(), op);
            }
        }
    }
    Ok(())
}

fn absorb_inferred(
    domain: &mut DomainModel,
    atom: &crate::symbolic::LiftedAtom,
    op: &crate::symbolic::OperatorDef,
) {
    if domain.predicates.contains_key(&atom.predicate) {
        return;
    }
    let params: Vec<(String, String)> = atom
        .args
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let ty = match t {
                crate::symbolic::Term::Var(v) => op
                    .params
                    .iter()
                    .find(|p| &p.name == v)
                    .map(|p| p.ty.clone())
                    .unwrap_or_else(|| "object".to_string()),
                _ => "object".to_string(),
            };
            (format!("a{}", i), ty)
        })
        .collect();
    domain.predicates.insert(
        atom.predicate.clone(),
        PredicateSchema::new(atom.predicate.clone(), params, PredicateKind::StateBased),
    );
}

/// Parse `(name ?a - t ?b - t2)` plus a kind label into a schema.
pub fn parse_predicate_decl(
    decl: &str,
    kind_label: &str,
    description: &str,
) -> Result<PredicateSchema, PddlError> {
    let inner = decl
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or(PddlError::Syntax {
            line: 1,
            col: 1,
            expected: vec!["(name ?v - type ...)".into()],
            found: decl.to_string(),
        })?;
    let mut tokens = inner.split_whitespace();
    let name = tokens.next().ok_or(PddlError::Syntax {
        line: 1,
        col: 1,
        expected: vec!["predicate name".into()],
        found: decl.to_string(),
    })?;
    let rest: Vec<&str> = tokens.collect();
    let mut params = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        if rest[i] == "-" {
            let ty = rest.get(i + 1).copied().unwrap_or("object");
            for var in pending.drain(..) {
                params.push((var, ty.to_string()));
            }
            i += 2;
        } else {
            pending.push(rest[i].trim_start_matches('?').to_string());
            i += 1;
        }
    }
    for var in pending {
        params.push((var, "object".to_string()));
    }
    let mut schema =
        PredicateSchema::new(name, params, PredicateKind::from_label(kind_label));
    schema.description = description.to_string();
    Ok(schema)
}
