//! Task-sequence learning harness: loads an environment manifest, drives the
//! oracle-backed traversal task by task with per-task budget resets, judges
//! success against the hidden reference goal, and reports machine-readable
//! results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{
    DiscreteEnv, Environment, NoiseConfig, SkillBinding, TabletopEnv, TabletopScene,
};
use crate::grounding::{DedupConfig, Thresholds};
use crate::hierarchy::{
    apply_domain_edit, parse_predicate_decl, traverse, Budgets, HierarchyNode, LearnError,
    LearnStats, SharedLearnState, TaskSpec,
};
use crate::oracle::{
    build_prompt, load_transcript, OracleReply, OracleRole, OracleSession, PromptContext,
    ReplayOracle, ScriptedOracle, StateChangeValue, UsageStats,
};
use crate::symbolic::{
    goal_satisfied, parse_domain, parse_problem, print_operator, DomainModel, Goal, GroundAtom,
    PredicateKind, Problem, SymbolicState,
};

use super::ew::{ew_score, EWConfig, EWReport, EvalError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Pddl(#[from] crate::symbolic::PddlError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Grounding(#[from] crate::grounding::GroundingError),
    #[error("i/o: {0}")]
    Io(String),
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvManifest {
    Discrete {
        /// Hidden ground-truth domain file, relative to the manifest.
        hidden_domain: String,
        skills: Vec<SkillBinding>,
    },
    Tabletop {
        scene: TabletopScene,
        #[serde(default)]
        noise: Option<NoiseConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiInitEntry {
    /// `(name ?a - type ...)`
    pub decl: String,
    /// `state` or `other`.
    pub kind: String,
    #[serde(default)]
    pub description: String,
    /// Classifier source for state-based seed predicates.
    #[serde(default)]
    pub classifier: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskManifest {
    pub instruction: String,
    /// Problem file in the hidden domain's vocabulary: environment init plus
    /// the reference goal used to judge success.
    pub problem: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetsManifest {
    pub interactions: u32,
    pub replans: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EwManifest {
    pub walks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnManifest {
    pub name: String,
    pub env: EnvManifest,
    #[serde(default)]
    pub domain_knowledge: String,
    #[serde(default)]
    pub psi_init: Vec<PsiInitEntry>,
    pub tasks: Vec<TaskManifest>,
    #[serde(default)]
    pub budgets: Option<BudgetsManifest>,
    #[serde(default)]
    pub ew: Option<EwManifest>,
}

impl LearnManifest {
    pub fn load(path: &Path) -> Result<(LearnManifest, PathBuf), RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(e.to_string()))?;
        let manifest: LearnManifest =
            serde_json::from_str(&text).map_err(|e| RunError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((manifest, base))
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Serialize)]
pub struct TaskReport {
    pub instruction: String,
    pub success: bool,
    pub reference_goal: String,
    pub stats: LearnStats,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub name: String,
    pub tasks: Vec<TaskReport>,
    pub all_succeeded: bool,
    pub ew: Option<EWReport>,
    pub usage: UsageStats,
    pub learned_domain: String,
    /// Where this run's oracle exchanges were recorded, when requested.
    pub transcript: Option<String>,
}

/// Which oracle backend serves a learning run.
pub enum Backend {
    Scripted,
    Replay(PathBuf),
    Custom(Box<dyn crate::oracle::Oracle>),
}

/// Options beyond the manifest: backend, budget overrides, seeds, recording
/// and output paths.
pub struct RunOptions {
    pub backend: Backend,
    pub budgets: Option<Budgets>,
    pub seed: u64,
    pub record_transcript: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Learn over the manifest's task sequence: tasks share and refine one
/// domain model and decomposition cache; budgets reset per task. Success is
/// judged on the environment's ground truth against the reference goal.
pub fn run_learning(
    manifest: &LearnManifest,
    base_dir: &Path,
    options: RunOptions,
) -> Result<RunReport, RunError> {
    let backend: Box<dyn crate::oracle::Oracle> = match options.backend {
        Backend::Scripted => match &manifest.env {
            EnvManifest::Discrete { hidden_domain, .. } => {
                let text = std::fs::read_to_string(base_dir.join(hidden_domain))
                    .map_err(|e| RunError::Io(e.to_string()))?;
                Box::new(ScriptedOracle::logistics(parse_domain(&text)?))
            }
            EnvManifest::Tabletop { .. } => Box::new(ScriptedOracle::tabletop()),
        },
        Backend::Replay(path) => Box::new(ReplayOracle::new(load_transcript(&path)?)),
        Backend::Custom(oracle) => oracle,
    };
    let mut session = OracleSession::new(backend);
    if let Some(path) = &options.record_transcript {
        if path.exists() {
            std::fs::remove_file(path).map_err(|e| RunError::Io(e.to_string()))?;
        }
        session = session.recording_to(path.clone());
    }

    let hidden = match &manifest.env {
        EnvManifest::Discrete { hidden_domain, .. } => {
            let text = std::fs::read_to_string(base_dir.join(hidden_domain))
                .map_err(|e| RunError::Io(e.to_string()))?;
            Some(parse_domain(&text)?)
        }
        EnvManifest::Tabletop { .. } => None,
    };

    let mut shared = SharedLearnState::default();
    let mut learner_domain = DomainModel::new(manifest.name.clone());
    seed_psi_init(&manifest.psi_init, &mut learner_domain, &mut shared)?;

    let continuous = matches!(manifest.env, EnvManifest::Tabletop { .. });
    let budgets = options.budgets.unwrap_or_else(|| Budgets {
        interactions: manifest.budgets.as_ref().map(|b| b.interactions).unwrap_or(10),
        replans: manifest.budgets.as_ref().map(|b| b.replans).unwrap_or(20),
        ..Budgets::default()
    });

    let mut task_reports = Vec::new();
    let mut task_problems = Vec::new();

    for task in &manifest.tasks {
        let (mut env, reference_problem): (Box<dyn Environment>, Option<Problem>) =
            match &manifest.env {
                EnvManifest::Discrete { skills, .. } => {
                    let hidden = hidden.as_ref().expect("discrete env has a hidden domain");
                    let text = std::fs::read_to_string(base_dir.join(&task.problem))
                        .map_err(|e| RunError::Io(e.to_string()))?;
                    let problem = parse_problem(&text, hidden)?;
                    let env = DiscreteEnv::new(
                        hidden.clone(),
                        problem.objects.clone(),
                        problem.init.clone(),
                        skills.clone(),
                    );
                    (Box::new(env), Some(problem))
                }
                EnvManifest::Tabletop { scene, noise } => {
                    let env = TabletopEnv::new(scene.clone(), noise.unwrap_or(NoiseConfig {
                        sigma_pos: 0.0,
                        sigma_ang: 0.0,
                        seed: options.seed,
                    }));
                    let text = std::fs::read_to_string(base_dir.join(&task.problem)).ok();
                    let problem = match text {
                        Some(t) => Some(parse_reference_goal(&t)?),
                        None => None,
                    };
                    (Box::new(env), problem)
                }
            };

        // type tree for the learner: every roster type under object
        for ty in env.objects().values() {
            if !learner_domain.types.contains(ty) {
                learner_domain.types.declare(ty.clone(), "object");
            }
        }

        let spec = TaskSpec {
            instruction: task.instruction.clone(),
            domain_knowledge: manifest.domain_knowledge.clone(),
            budgets,
            thresholds: Thresholds::default(),
            seed: options.seed,
            continuous,
            dedup: DedupConfig::default(),
        };

        let result = run_single_task(
            &mut *env,
            &mut session,
            &mut shared,
            &mut learner_domain,
            &spec,
        );

        let reference_goal = reference_problem
            .as_ref()
            .map(|p| p.goal.to_string())
            .unwrap_or_else(|| "(and)".to_string());
        let success = match &reference_problem {
            Some(p) => goal_satisfied(&env.ground_truth_atoms(), &p.goal),
            None => false,
        };
        let (stats, error) = match result {
            Ok(learned) => {
                if let Some(dir) = &options.out_dir {
                    let task_dir = dir.join(format!("task-{}", task_reports.len()));
                    learned.root.save(&task_dir).map_err(|e| RunError::Io(e.to_string()))?;
                    write_jsonl(&task_dir.join("misalignments.jsonl"), &learned.misalignments)?;
                    write_jsonl(&task_dir.join("failures.jsonl"), &learned.failures)?;
                }
                (learned.stats, None)
            }
            Err(e) => (LearnStats::default(), Some(e.to_string())),
        };
        task_reports.push(TaskReport {
            instruction: task.instruction.clone(),
            success: success && error.is_none(),
            reference_goal,
            stats,
            error,
        });
        if let Some(p) = reference_problem {
            task_problems.push(p);
        }
    }

    // exploration-walk similarity against the hidden reference on the
    // bootstrapped task set
    let ew = match (&manifest.ew, &hidden) {
        (Some(cfg), Some(hidden)) if !task_problems.is_empty() => Some(ew_score(
            &learner_domain,
            hidden,
            &task_problems,
            &EWConfig { walks: cfg.walks, max_len: None, seed: cfg.seed },
        )?),
        _ => None,
    };

    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Io(e.to_string()))?;
        std::fs::write(
            dir.join("learned-domain.pddl"),
            crate::symbolic::print_domain(&learner_domain),
        )
        .map_err(|e| RunError::Io(e.to_string()))?;
        if continuous {
            shared.registry.save(&dir.join("classifiers"))?;
            std::fs::write(dir.join("dataset.jsonl"), shared.dataset.to_jsonl())
                .map_err(|e| RunError::Io(e.to_string()))?;
        }
        session
            .save_transcript(&dir.join("transcript.jsonl"))
            .map_err(|e| RunError::Io(e.to_string()))?;
    }

    let all_succeeded = task_reports.iter().all(|t| t.success);
    Ok(RunReport {
        name: manifest.name.clone(),
        tasks: task_reports,
        all_succeeded,
        ew,
        usage: session.usage().clone(),
        learned_domain: crate::symbolic::print_domain(&learner_domain),
        transcript: options.record_transcript.as_ref().map(|p| p.display().to_string()),
    })
}

fn write_jsonl(path: &Path, records: &[serde_json::Value]) -> Result<(), RunError> {
    if records.is_empty() {
        return Ok(());
    }
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| RunError::Io(e.to_string()))
}

/// One task: consult the domain oracle (initial proposal or refinement),
/// fold the edits into the shared learner domain, then traverse.
fn run_single_task(
    env: &mut dyn Environment,
    session: &mut OracleSession,
    shared: &mut SharedLearnState,
    learner_domain: &mut DomainModel,
    spec: &TaskSpec,
) -> Result<strata_learned::Learned, RunError> {
    // ground the initial state in the learner's current vocabulary
    let init_state = initial_symbolic_state(env, shared, learner_domain, spec)?;

    let domain_ctx = PromptContext {
        instruction: Some(spec.instruction.clone()),
        domain_knowledge: Some(spec.domain_knowledge.clone()),
        predicates: Some(render_predicates(learner_domain)),
        actions: Some(render_actions(learner_domain)),
        types: Some(render_types(learner_domain)),
        objects: Some(render_objects(env)),
        skills: Some(env.skills().to_prompt_listing()),
        init_state: Some(init_state.to_string()),
        ..Default::default()
    };
    let messages = build_prompt(OracleRole::Domain, &domain_ctx)?;
    let reply = session.ask_parsed(OracleRole::Domain, messages)?;
    let OracleReply::DomainEdit(edit) = reply else {
        return Err(RunError::Manifest("domain oracle reply malformed".into()));
    };
    apply_domain_edit(learner_domain, &edit)?;
    for op_edit in &edit.operators {
        shared.record_author_domain(&op_edit.name, domain_ctx.clone());
    }

    // goal accumulation from the oracle's goal-change lines
    let mut goal = Goal::default();
    for change in &edit.goal_changes {
        let atom = parse_atom_text(&change.atom)?;
        match change.value {
            StateChangeValue::True => {
                goal.pos.insert(atom);
            }
            StateChangeValue::False => {
                goal.neg.insert(atom);
            }
            StateChangeValue::Remove => {
                goal.pos.remove(&atom);
                goal.neg.remove(&atom);
            }
        }
    }
    // init adjustments (closed world: true inserts, false/remove drops)
    let mut init_state = init_state;
    for change in &edit.init_changes {
        let atom = parse_atom_text(&change.atom)?;
        match change.value {
            StateChangeValue::True => {
                init_state.insert(atom);
            }
            _ => {
                init_state.atoms.remove(&atom);
            }
        }
    }

    let mut problem = Problem::new(format!("{}-task", learner_domain.name), &learner_domain.name);
    problem.objects = env.objects().clone();
    problem.init = init_state;
    problem.goal = goal;

    let root = HierarchyNode::new(0, learner_domain.clone(), problem);
    let learned = traverse(root, env, session, spec, shared)?;
    // operators may have been repaired during the run; keep the shared
    // learner domain current for follow-up tasks
    *learner_domain = learned.root.domain.clone();
    Ok(strata_learned::Learned {
        root: learned.root,
        stats: learned.stats,
        misalignments: learned.misalignments,
        failures: learned.failures,
    })
}

mod strata_learned {
    pub struct Learned {
        pub root: super::HierarchyNode,
        pub stats: super::LearnStats,
        pub misalignments: Vec<serde_json::Value>,
        pub failures: Vec<serde_json::Value>,
    }
}

fn initial_symbolic_state(
    env: &mut dyn Environment,
    shared: &mut SharedLearnState,
    domain: &DomainModel,
    spec: &TaskSpec,
) -> Result<SymbolicState, RunError> {
    let world = env.observe();
    if !spec.continuous {
        return Ok(world
            .as_discrete()
            .cloned()
            .unwrap_or_default()
            .restricted_to(&domain.predicate_names()));
    }
    let mut universes = BTreeMap::new();
    let types = crate::symbolic::TypeHierarchy {
        parents: env
            .objects()
            .values()
            .map(|ty| (ty.clone(), "object".to_string()))
            .collect(),
    };
    for name in shared.registry.names() {
        if let Some(schema) = shared.schemas.get(name) {
            universes.insert(
                name.clone(),
                crate::grounding::atom_universe(schema, env.objects(), &types),
            );
        }
    }
    Ok(shared.registry.ground_state(&world, &universes)?)
}

fn seed_psi_init(
    entries: &[PsiInitEntry],
    domain: &mut DomainModel,
    shared: &mut SharedLearnState,
) -> Result<(), RunError> {
    for entry in entries {
        let schema = parse_predicate_decl(&entry.decl, &entry.kind, &entry.description)?;
        for (_, ty) in &schema.params {
            if !domain.types.contains(ty) {
                domain.types.declare(ty.clone(), "object");
            }
        }
        shared.schemas.insert(schema.name.clone(), schema.clone());
        domain.predicates.insert(schema.name.clone(), schema.clone());
        if let Some(source) = &entry.classifier {
            if schema.kind == PredicateKind::StateBased {
                shared.registry.register_source(source)?;
            }
        }
    }
    Ok(())
}

/// Tabletop reference files are plain goal s-expressions rather than full
/// problems, e.g. `(and (assembled lamp_bulb lamp_base) ...)`.
fn parse_reference_goal(text: &str) -> Result<Problem, RunError> {
    let mut problem = Problem::new("reference", "reference");
    let trimmed = text.trim();
    let inner = trimmed
        .strip_prefix("(and")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| RunError::Manifest("reference goal must be an (and ...) form".into()))?;
    let mut rest = inner.trim();
    let mut pos = Vec::new();
    while !rest.is_empty() {
        let Some(open) = rest.find('(') else { break };
        let Some(close) = rest[open..].find(')') else { break };
        let atom_text = &rest[open..open + close + 1];
        pos.push(parse_atom_text(atom_text)?);
        rest = &rest[open + close + 1..];
    }
    problem.goal = Goal::new(pos.into_iter().collect(), Default::default());
    Ok(problem)
}

fn parse_atom_text(text: &str) -> Result<GroundAtom, RunError> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| RunError::Manifest(format!("malformed atom `{}`", text)))?;
    let mut parts = inner.split_whitespace();
    let pred = parts
        .next()
        .ok_or_else(|| RunError::Manifest("empty atom".into()))?;
    Ok(GroundAtom::new(pred, parts.map(|s| s.to_string()).collect()))
}

fn render_objects(env: &dyn Environment) -> String {
    env.objects()
        .iter()
        .map(|(name, ty)| format!("{} - {}", name, ty))
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_types(domain: &DomainModel) -> String {
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

fn render_predicates(domain: &DomainModel) -> String {
    let mut out = String::new();
    for schema in domain.predicates.values() {
        let mut decl = format!("({}", schema.name);
        for (var, ty) in &schema.params {
            decl.push_str(&format!(" ?{} - {}", var, ty));
        }
        decl.push(')');
        out.push_str(&format!("- {}: {}. {}\n", decl, schema.kind.label(), schema.description));
    }
    if out.is_empty() {
        out.push_str("(none yet)\n");
    }
    out
}

fn render_actions(domain: &DomainModel) -> String {
    let mut out = String::new();
    for op in domain.operators.values() {
        out.push_str(&print_operator(op));
    }
    out
}
