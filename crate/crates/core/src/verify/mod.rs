//! Motion verification of leaf actions against the environment and the
//! decision side of the global recovery module.
//!
//! Verification is three checks: the operator's preconditions hold in the
//! grounded environment state, the skill executes without an exception, and
//! the observed state change equals the operator's effects. Only state-based
//! predicates take part; state-independent predicates never reach a
//! classifier.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::envs::{Environment, SkillCall, SkillError, WorldState};
use crate::grounding::Transition;
use crate::oracle::{
    build_prompt, OracleError, OracleReply, OracleRole, OracleSession, PromptContext,
    RecoveryDecisionRaw,
};
use crate::symbolic::{state_diff, Action, DomainModel, EffectSet, SymbolicState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("recovery decision unparseable after retry: {0}")]
    UnparseableDecision(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Which verification check failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FailurePhase {
    PreconditionCheck,
    SkillException,
    EffectMismatch,
}

/// Summary of one motion-verification failure, rendered into recovery
/// prompts and logged as a JSON record.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureReport {
    pub action: Action,
    pub skill: SkillCall,
    pub phase: FailurePhase,
    /// Populated for effect mismatches only.
    pub expected: EffectSet,
    pub observed: EffectSet,
    pub missing_preconditions: Vec<String>,
    pub exception: Option<String>,
    /// Rendered decomposition chain from the root to the failing leaf.
    pub hierarchy_path: String,
    /// Grounded symbolic state before the attempt.
    pub state_before: SymbolicState,
    /// Canonical text of the operator under suspicion.
    pub operator_block: String,
}

impl FailureReport {
    /// The textual summary embedded in reasoner and repair prompts. Format
    /// is a stable contract: scripted oracles parse it back.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Action: {}", self.action);
        let _ = writeln!(out, "Executed Skill: {}", self.skill);
        let phase = match self.phase {
            FailurePhase::PreconditionCheck => "precondition-check",
            FailurePhase::SkillException => "skill-exception",
            FailurePhase::EffectMismatch => "effect-mismatch",
        };
        let _ = writeln!(out, "Phase: {}", phase);
        let _ = writeln!(out, "Operator:\n```pddl\n{}```", self.operator_block);
        match self.phase {
            FailurePhase::PreconditionCheck => {
                let _ = writeln!(out, "Unsatisfied Preconditions:");
                for m in &self.missing_preconditions {
                    let _ = writeln!(out, "- {}", m);
                }
            }
            FailurePhase::SkillException => {
                let _ = writeln!(
                    out,
                    "Skill Exception:\n{}",
                    self.exception.as_deref().unwrap_or("unknown")
                );
            }
            FailurePhase::EffectMismatch => {
                let _ = writeln!(out, "Expected Change:");
                out.push_str(&render_change(&self.expected));
                let _ = writeln!(out, "Ground Truth Change:");
                out.push_str(&render_change(&self.observed));
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "action": self.action.to_string(),
            "skill": self.skill.to_string(),
            "phase": self.phase,
            "expected": self.expected.to_string(),
            "observed": self.observed.to_string(),
            "missing_preconditions": self.missing_preconditions,
            "exception": self.exception,
            "hierarchy_path": self.hierarchy_path,
        })
    }
}

/// `- (atom): False -> True` lines for the add set, the reverse for deletes.
fn render_change(effects: &EffectSet) -> String {
    let mut out = String::new();
    for a in &effects.add {
        let _ = writeln!(out, "- {}: False -> True", a);
    }
    for a in &effects.del {
        let _ = writeln!(out, "- {}: True -> False", a);
    }
    if effects.is_empty() {
        let _ = writeln!(out, "- none");
    }
    out
}

/// Outcome of verifying one leaf action.
#[derive(Debug)]
pub enum VerifyOutcome {
    /// All three checks passed; the recorded transition joins the dataset.
    Verified(Transition),
    Failed(Box<FailureReport>),
}

/// Grounds the environment state into the learner's symbolic view over
/// state-based predicates: discrete worlds expose atoms directly (filtered
/// to the predicate set), continuous worlds go through the classifiers.
pub trait StateGrounder {
    fn ground(
        &self,
        world: &WorldState,
        predicates: &BTreeSet<String>,
    ) -> Result<SymbolicState, crate::grounding::GroundingError>;
}

/// Execute and verify one leaf action.
///
/// The checks run in order: (1) `pre(a)` over state-based atoms in the
/// grounded current state, (2) skill execution, (3) strict set equality of
/// the operator's effective change and the grounded state difference,
/// restricted to the node's state-based predicates. Failures are data, not
/// errors. A precondition failure consumes no environment interaction
/// because no skill ran.
#[allow(clippy::too_many_arguments)]
pub fn verify_leaf(
    action: &Action,
    skill: &SkillCall,
    env: &mut dyn Environment,
    grounder: &dyn StateGrounder,
    state_based: &BTreeSet<String>,
    domain: &DomainModel,
    hierarchy_path: &str,
) -> Result<VerifyOutcome, crate::grounding::GroundingError> {
    let op_block = domain
        .operator(&action.operator)
        .map(crate::symbolic::print_operator)
        .unwrap_or_default();
    let pre_world = env.observe();
    let state_before = grounder.ground(&pre_world, state_based)?;

    let report_base = |phase: FailurePhase| FailureReport {
        action: action.clone(),
        skill: skill.clone(),
        phase,
        expected: EffectSet::default(),
        observed: EffectSet::default(),
        missing_preconditions: Vec::new(),
        exception: None,
        hierarchy_path: hierarchy_path.to_string(),
        state_before: state_before.clone(),
        operator_block: op_block.clone(),
    };

    // (1) preconditions over state-based predicates only
    let missing = state_based_violations(domain, &state_before, action, state_based, env);
    if !missing.is_empty() {
        let mut report = report_base(FailurePhase::PreconditionCheck);
        report.missing_preconditions = missing;
        return Ok(VerifyOutcome::Failed(Box::new(report)));
    }

    // (2) execute the skill
    let post_world = match env.execute(skill) {
        Ok(world) => world,
        Err(SkillError::Failed { cause, .. }) => {
            let mut report = report_base(FailurePhase::SkillException);
            report.exception = Some(cause);
            return Ok(VerifyOutcome::Failed(Box::new(report)));
        }
        Err(SkillError::UnknownSkill(name)) => {
            let mut report = report_base(FailurePhase::SkillException);
            report.exception = Some(format!("unknown skill `{}`", name));
            return Ok(VerifyOutcome::Failed(Box::new(report)));
        }
    };
    let state_after = grounder.ground(&post_world, state_based)?;

    // (3) strict effect equality over state-based predicates
    let expected = expected_change(domain, &state_before, action, state_based);
    let observed = state_diff(&state_before, &state_after);
    if expected != observed {
        let mut report = report_base(FailurePhase::EffectMismatch);
        report.expected = expected;
        report.observed = observed;
        return Ok(VerifyOutcome::Failed(Box::new(report)));
    }

    Ok(VerifyOutcome::Verified(Transition::new(pre_world, skill.clone(), post_world)))
}

/// The action's effective change on `state`, restricted to state-based
/// predicates: grounded add effects not already true, grounded delete
/// effects currently true. Frame atoms never appear.
pub fn expected_change(
    domain: &DomainModel,
    state: &SymbolicState,
    action: &Action,
    state_based: &BTreeSet<String>,
) -> EffectSet {
    let next = crate::symbolic::apply_unchecked(state, action, domain);
    state_diff(state, &next).restricted_to(state_based)
}

/// Unsatisfied precondition literals whose predicates are state-based;
/// state-independent literals are skipped (they cannot be grounded).
fn state_based_violations(
    domain: &DomainModel,
    state: &SymbolicState,
    action: &Action,
    state_based: &BTreeSet<String>,
    env: &dyn Environment,
) -> Vec<String> {
    let Some(op) = domain.operator(&action.operator) else {
        return vec![format!("(unknown-operator {})", action.operator)];
    };
    let restricted = crate::symbolic::OperatorDef::new(
        op.name.clone(),
        op.params.clone(),
        op.precondition
            .iter()
            .filter(|lit| match lit {
                crate::symbolic::LiftedLiteral::Atom { atom, .. } => {
                    state_based.contains(&atom.predicate)
                }
                crate::symbolic::LiftedLiteral::Equality { .. } => true,
            })
            .cloned()
            .collect(),
        vec![],
        vec![],
    );
    let mut scratch = domain.clone();
    scratch.operators.insert(restricted.name.clone(), restricted);
    match crate::symbolic::apply(state, action, &scratch, env.objects()) {
        Ok(_) => vec![],
        Err(v) => v.missing,
    }
}

/// The four repair routes of the global recovery module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FixType {
    PddlFix,
    PriorSkills,
    IncorrectInstantiation,
    MultipleSkills,
}

impl FixType {
    pub fn parse(label: &str) -> Option<FixType> {
        match label.trim() {
            "pddl-fix" => Some(FixType::PddlFix),
            "prior-skills" => Some(FixType::PriorSkills),
            "incorrect-instantiation" => Some(FixType::IncorrectInstantiation),
            "multiple-skills" => Some(FixType::MultipleSkills),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FixType::PddlFix => "pddl-fix",
            FixType::PriorSkills => "prior-skills",
            FixType::IncorrectInstantiation => "incorrect-instantiation",
            FixType::MultipleSkills => "multiple-skills",
        }
    }
}

/// Validated recovery decision.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryDecision {
    pub fix: FixType,
    pub operators: Vec<String>,
    pub prior_skills: Vec<String>,
}

/// Ask the reasoner about a failure: one analysis exchange, then a decision
/// exchange whose JSON is validated. An invalid fix type or empty operator
/// list triggers exactly one re-ask.
pub fn decide_recovery(
    report: &FailureReport,
    history: &str,
    session: &mut OracleSession,
    domain_knowledge: &str,
) -> Result<RecoveryDecision, VerifyError> {
    let analysis_ctx = PromptContext {
        domain_knowledge: Some(domain_knowledge.to_string()),
        history: Some(if history.is_empty() { "(empty)".into() } else { history.to_string() }),
        high_level_action: Some(report.action.to_string()),
        state_before: Some(report.state_before.to_string()),
        decomposition_hierarchy: Some(if report.hierarchy_path.is_empty() {
            "(flat plan)".into()
        } else {
            report.hierarchy_path.clone()
        }),
        operator_block: Some(report.operator_block.clone()),
        executed_skill: Some(report.skill.to_string()),
        expected_change: Some(render_change(&report.expected)),
        observed_change: Some(render_change(&report.observed)),
        ..Default::default()
    };
    let messages = build_prompt(OracleRole::Reasoner, &analysis_ctx)?;
    let _analysis = session.ask(OracleRole::Reasoner, messages)?;

    let decision_ctx = PromptContext {
        high_level_action: Some(report.action.to_string()),
        decision_request: true,
        ..Default::default()
    };
    let messages = build_prompt(OracleRole::Reasoner, &decision_ctx)?;
    let mut last_err = String::new();
    for attempt in 0..2 {
        let mut ask = messages.clone();
        if attempt > 0 {
            ask.push(crate::oracle::Message::user(format!(
                "Your previous decision was invalid: {}. Use one of the four fix types and list at least one operator.",
                last_err
            )));
        }
        let response = session.ask(OracleRole::Reasoner, ask)?;
        match crate::oracle::parse_response(OracleRole::Reasoner, &response) {
            Ok(OracleReply::Reasoner(raw)) => match validate_decision(&raw) {
                Ok(decision) => return Ok(decision),
                Err(e) => last_err = e,
            },
            Ok(_) => last_err = "response was not a decision".to_string(),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(VerifyError::UnparseableDecision(last_err))
}

fn validate_decision(raw: &RecoveryDecisionRaw) -> Result<RecoveryDecision, String> {
    let fix = FixType::parse(&raw.type_of_fix)
        .ok_or_else(|| format!("unknown fix type `{}`", raw.type_of_fix))?;
    if raw.operators.is_empty() {
        return Err("operator list is empty".to_string());
    }
    Ok(RecoveryDecision {
        fix,
        operators: raw.operators.clone(),
        prior_skills: raw.skills.clone(),
    })
}

/// Binary guard used at every classifier call site: a state-independent
/// predicate must never be grounded.
pub fn assert_state_based(predicate: &str, state_based: &BTreeSet<String>) {
    debug_assert!(
        state_based.contains(predicate),
        "attempted to ground state-independent predicate `{}`",
        predicate
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{DiscreteEnv, SkillBinding};
    use crate::symbolic::{parse_domain, GroundAtom};

    struct DiscreteGrounder;

    impl StateGrounder for DiscreteGrounder {
        fn ground(
            &self,
            world: &WorldState,
            predicates: &BTreeSet<String>,
        ) -> Result<SymbolicState, crate::grounding::GroundingError> {
            Ok(world.as_discrete().cloned().unwrap_or_default().restricted_to(predicates))
        }
    }

    fn toy_env() -> (DiscreteEnv, DomainModel) {
        let hidden = parse_domain(
            "(define (domain toy)
               (:predicates (p) (q))
               (:action flip :parameters () :precondition (p) :effect (and (q) (not (p)))))",
        )
        .unwrap();
        let env = DiscreteEnv::new(
            hidden.clone(),
            Default::default(),
            SymbolicState::from_atoms([GroundAtom::new("p", vec![])]),
            vec![SkillBinding { skill: "flip".into(), operator: "flip".into(), exposed: vec![] }],
        );
        (env, hidden)
    }

    #[test]
    fn verified_when_model_matches_environment() {
        let (mut env, learner_domain) = toy_env();
        let state_based: BTreeSet<String> = ["p".to_string(), "q".to_string()].into();
        let outcome = verify_leaf(
            &Action::new("flip", vec![]),
            &SkillCall::new("flip", vec![]),
            &mut env,
            &DiscreteGrounder,
            &state_based,
            &learner_domain,
            "",
        )
        .unwrap();
        assert!(matches!(outcome, VerifyOutcome::Verified(_)));
        assert_eq!(env.interactions(), 1);
    }

    #[test]
    fn effect_mismatch_reports_both_sides() {
        let (mut env, _) = toy_env();
        // learner believes flip only adds q (forgot the delete)
        let learner_domain = parse_domain(
            "(define (domain toy)
               (:predicates (p) (q))
               (:action flip :parameters () :precondition (p) :effect (q)))",
        )
        .unwrap();
        let state_based: BTreeSet<String> = ["p".to_string(), "q".to_string()].into();
        let outcome = verify_leaf(
            &Action::new("flip", vec![]),
            &SkillCall::new("flip", vec![]),
            &mut env,
            &DiscreteGrounder,
            &state_based,
            &learner_domain,
            "",
        )
        .unwrap();
        let VerifyOutcome::Failed(report) = outcome else { panic!("expected failure") };
        assert_eq!(report.phase, FailurePhase::EffectMismatch);
        assert!(report.observed.del.contains(&GroundAtom::new("p", vec![])));
        assert!(!report.expected.del.contains(&GroundAtom::new("p", vec![])));
        let summary = report.render_summary();
        assert!(summary.contains("Expected Change:"));
        assert!(summary.contains("(p): True -> False"));
    }

    #[test]
    fn precondition_failure_consumes_no_interaction() {
        let (mut env, learner_domain) = toy_env();
        // make p false first by flipping once
        env.execute(&SkillCall::new("flip", vec![])).unwrap();
        let state_based: BTreeSet<String> = ["p".to_string(), "q".to_string()].into();
        let before = env.interactions();
        let outcome = verify_leaf(
            &Action::new("flip", vec![]),
            &SkillCall::new("flip", vec![]),
            &mut env,
            &DiscreteGrounder,
            &state_based,
            &learner_domain,
            "",
        )
        .unwrap();
        let VerifyOutcome::Failed(report) = outcome else { panic!() };
        assert_eq!(report.phase, FailurePhase::PreconditionCheck);
        assert_eq!(report.missing_preconditions, vec!["(p)".to_string()]);
        assert_eq!(env.interactions(), before, "no skill ran");
    }

    #[test]
    fn skill_exception_carries_text() {
        let (mut env, mut learner_domain) = toy_env();
        // an operator with no preconditions whose skill will still fail
        learner_domain.operators.get_mut("flip").unwrap().precondition.clear();
        env.execute(&SkillCall::new("flip", vec![])).unwrap(); // p now false
        let state_based: BTreeSet<String> = ["p".to_string(), "q".to_string()].into();
        let outcome = verify_leaf(
            &Action::new("flip", vec![]),
            &SkillCall::new("flip", vec![]),
            &mut env,
            &DiscreteGrounder,
            &state_based,
            &learner_domain,
            "",
        )
        .unwrap();
        let VerifyOutcome::Failed(report) = outcome else { panic!() };
        assert_eq!(report.phase, FailurePhase::SkillException);
        assert!(report.exception.as_deref().unwrap_or("").contains("no applicable"));
    }

    #[test]
    fn fix_type_round_trip() {
        for label in ["pddl-fix", "prior-skills", "incorrect-instantiation", "multiple-skills"] {
            assert_eq!(FixType::parse(label).unwrap().label(), label);
        }
        assert_eq!(FixType::parse("reboot"), None);
    }
}
