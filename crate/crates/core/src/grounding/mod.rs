//! Predicate invention support: the classifier expression language,
//! pseudo-labeled transition datasets with similarity dedup, F1 evaluation,
//! robustness-aware hyperparameter optimization and refinement gating.

mod dataset;
mod dsl;
mod eval;
mod optimize;
mod score;

pub use dataset::{
    label_initial, pseudo_label, state_distance, DedupConfig, LabeledState, Labeler, Transition,
    TransitionDataset,
};
pub use dsl::{
    accessor_table, parse_classifier, BinOp, ClassifierLookup, ClassifierProgram, DslError, Expr,
    HyperAssignment, HyperParam, NoClassifiers, UnaryOp,
};
pub use eval::{eval_classifier, EvalError};
pub use optimize::{optimize_hypers, robustness, OptimizeOutcome, SearchSpace};
pub use score::{
    accept_refinement, atom_universe, f1_scores, refine_decision, F1Report, RefineDecision,
    Retained, Thresholds,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::WorldState;
use crate::symbolic::{GroundAtom, SymbolicState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundingError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no ground atom of `{0}` ever occurs true in the dataset")]
    NoRelevantAtoms(String),
    #[error("classifier `{0}` has no hyperparameters to optimize")]
    EmptySearchSpace(String),
    #[error("labeling oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("oracle produced no parseable classifier: {0}")]
    UnparseableResponse(String),
    #[error("classifier `{0}` is not registered")]
    NotRegistered(String),
    #[error("registry i/o: {0}")]
    Io(String),
}

/// All registered classifier programs plus their current hyperparameter
/// assignments. Programs may call previously registered programs only, so
/// the registry is acyclic by construction.
#[derive(Debug, Clone, Default)]
pub struct ClassifierRegistry {
    programs: BTreeMap<String, ClassifierProgram>,
    current: BTreeMap<String, HyperAssignment>,
    order: Vec<String>,
}

impl ClassifierLookup for ClassifierRegistry {
    fn lookup(&self, name: &str) -> Option<&ClassifierProgram> {
        self.programs.get(name)
    }

    fn current_assignment(&self, name: &str) -> Option<&HyperAssignment> {
        self.current.get(name)
    }
}

impl ClassifierRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse and register a new classifier from source. Its current
    /// assignment starts at the declared defaults.
    pub fn register_source(&mut self, source: &str) -> Result<&ClassifierProgram, GroundingError> {
        let program = parse_classifier(source, self)?;
        Ok(self.insert(program))
    }

    fn insert(&mut self, program: ClassifierProgram) -> &ClassifierProgram {
        let name = program.predicate.clone();
        self.current.insert(name.clone(), program.default_assignment());
        if !self.order.contains(&name) {
            self.order.push(name.clone());
        }
        self.programs.insert(name.clone(), program);
        &self.programs[&name]
    }

    /// Replace an existing program (refinement), resetting the current
    /// assignment to the new defaults.
    pub fn replace(&mut self, program: ClassifierProgram) -> Result<(), GroundingError> {
        if !self.programs.contains_key(&program.predicate) {
            return Err(GroundingError::NotRegistered(program.predicate));
        }
        self.insert(program);
        Ok(())
    }

    pub fn set_current(&mut self, name: &str, theta: HyperAssignment) -> Result<(), GroundingError> {
        let program =
            self.programs.get(name).ok_or_else(|| GroundingError::NotRegistered(name.into()))?;
        debug_assert!(theta.covers(program));
        self.current.insert(name.to_string(), theta);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.programs.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.order.iter()
    }

    pub fn get(&self, name: &str) -> Option<(&ClassifierProgram, &HyperAssignment)> {
        let p = self.programs.get(name)?;
        let c = self.current.get(name)?;
        Some((p, c))
    }

    /// Ground every predicate with a registered classifier on one state:
    /// the learner's symbolic view of the continuous world.
    pub fn ground_state(
        &self,
        world: &WorldState,
        universe: &BTreeMap<String, Vec<GroundAtom>>,
    ) -> Result<SymbolicState, GroundingError> {
        let mut state = SymbolicState::new();
        for (name, atoms) in universe {
            let Some((program, theta)) = self.get(name) else { continue };
            for atom in atoms {
                if eval_classifier(program, atom, world, theta, self)? {
                    state.insert(atom.clone());
                }
            }
        }
        Ok(state)
    }

    /// Persist as one DSL file per predicate plus a manifest carrying the
    /// registration order and current assignments.
    pub fn save(&self, dir: &Path) -> Result<(), GroundingError> {
        let io = |e: std::io::Error| GroundingError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        for (name, program) in &self.programs {
            std::fs::write(dir.join(format!("{}.clf", name)), &program.source).map_err(io)?;
        }
        let manifest = RegistryManifest {
            order: self.order.clone(),
            current: self.current.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| GroundingError::Io(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, GroundingError> {
        let io = |e: std::io::Error| GroundingError::Io(e.to_string());
        let manifest: RegistryManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.join("manifest.json")).map_err(io)?,
        )
        .map_err(|e| GroundingError::Io(e.to_string()))?;
        let mut registry = ClassifierRegistry::new();
        for name in &manifest.order {
            let source =
                std::fs::read_to_string(dir.join(format!("{}.clf", name))).map_err(io)?;
            registry.register_source(&source)?;
        }
        for (name, values) in manifest.current {
            registry.set_current(&name, HyperAssignment(values))?;
        }
        Ok(registry)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryManifest {
    order: Vec<String>,
    current: BTreeMap<String, BTreeMap<String, f64>>,
}

/// One sample where classifier and pseudo-label disagree, with enough
/// context to prompt a refinement.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub atom: GroundAtom,
    pub world: WorldState,
    pub predicted: bool,
    pub labeled: bool,
    /// Results of sub-classifiers referenced by the program, on this state.
    pub sub_results: Vec<(String, bool)>,
}

/// Up to `limit` disagreement samples between classifier and pseudo-labels.
pub fn collect_mismatches(
    program: &ClassifierProgram,
    theta: &HyperAssignment,
    data: &[(&WorldState, &SymbolicState)],
    universe: &[GroundAtom],
    registry: &ClassifierRegistry,
    limit: usize,
) -> Result<Vec<Mismatch>, GroundingError> {
    let mut out = Vec::new();
    let sub_names: Vec<String> = collect_sub_calls(&program.body, registry);
    'outer: for (world, labels) in data {
        if matches!(world, WorldState::Discrete(_)) {
            continue;
        }
        for atom in universe {
            let predicted = eval_classifier(program, atom, world, theta, registry)?;
            let labeled = labels.contains(atom);
            if predicted != labeled {
                let mut sub_results = Vec::new();
                for sub in &sub_names {
                    if let Some((sp, st)) = registry.get(sub) {
                        if sp.arity() <= atom.args.len() {
                            let sub_atom =
                                GroundAtom::new(sub.clone(), atom.args[..sp.arity()].to_vec());
                            if let Ok(v) = eval_classifier(sp, &sub_atom, world, st, registry) {
                                sub_results.push((sub_atom.to_string(), v));
                            }
                        }
                    }
                }
                out.push(Mismatch {
                    atom: atom.clone(),
                    world: (*world).clone(),
                    predicted,
                    labeled,
                    sub_results,
                });
                if out.len() >= limit {
                    break 'outer;
                }
            }
        }
    }
    Ok(out)
}

fn collect_sub_calls(expr: &Expr, registry: &ClassifierRegistry) -> Vec<String> {
    fn walk(expr: &Expr, registry: &ClassifierRegistry, out: &mut Vec<String>) {
        match expr {
            Expr::Call { name, args } => {
                if registry.contains(name) && !out.contains(name) {
                    out.push(name.clone());
                }
                for a in args {
                    walk(a, registry, out);
                }
            }
            Expr::Unary { expr, .. } => walk(expr, registry, out),
            Expr::Binary { left, right, .. } => {
                walk(left, registry, out);
                walk(right, registry, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(expr, registry, &mut out);
    out
}

/// Produces a candidate replacement program from refinement context.
/// Implementations prompt an oracle and parse the `# Fixed Code` section;
/// they re-ask once on a parse failure and report
/// [`GroundingError::UnparseableResponse`] after the second failure.
pub type Refiner<'a> =
    dyn FnMut(&ClassifierProgram, &[Mismatch]) -> Result<ClassifierProgram, GroundingError> + 'a;

/// Statistics from one refinement loop run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub rounds: u32,
    pub hyper_optimizations: u32,
    pub oracle_refinements: u32,
    pub rejected_refinements: u32,
    pub initial_f_min: f64,
    pub final_f_min: f64,
    pub final_f_avg: f64,
}

/// Iterate scoring, hyperparameter optimization and oracle refinement on one
/// classifier until its lowest per-atom F1 clears `thresholds.tau_hp`, the
/// oracle path is exhausted, or `max_rounds` passes have run. Retained
/// classifiers never score worse than their predecessors on the same data.
#[allow(clippy::too_many_arguments)]
pub fn refine_loop(
    registry: &mut ClassifierRegistry,
    name: &str,
    data: &[(&WorldState, &SymbolicState)],
    universe: &[GroundAtom],
    thresholds: Thresholds,
    seed: u64,
    max_rounds: u32,
    mut refiner: Option<&mut Refiner>,
) -> Result<RefineOutcome, GroundingError> {
    let mut outcome = RefineOutcome::default();
    let (mut program, mut theta) = registry
        .get(name)
        .map(|(p, t)| (p.clone(), t.clone()))
        .ok_or_else(|| GroundingError::NotRegistered(name.into()))?;

    let report = f1_scores(&program, &theta, data, universe, registry)?;
    outcome.initial_f_min = report.f_min;
    let mut f_min = report.f_min;
    let mut f_avg = report.f_avg;

    for round in 0..max_rounds {
        match refine_decision(f_min, thresholds) {
            RefineDecision::Keep => break,
            RefineDecision::OptimizeHypers => {
                if program.hypers.is_empty() {
                    break;
                }
                outcome.rounds = round + 1;
                outcome.hyper_optimizations += 1;
                // bounds re-center on the current assignment each round so
                // repeated passes can walk further than one decade
                let space = SearchSpace::around(&program, &theta, seed.wrapping_add(round as u64));
                let found = optimize_hypers(&program, data, universe, registry, &space)?;
                if found.best == theta {
                    break; // no progress available in this pool
                }
                theta = found.best;
                registry.set_current(name, theta.clone())?;
            }
            RefineDecision::OracleRefine => {
                let Some(refiner) = refiner.as_deref_mut() else { break };
                outcome.rounds = round + 1;
                let mismatches =
                    collect_mismatches(&program, &theta, data, universe, registry, 3)?;
                if mismatches.is_empty() {
                    break;
                }
                let candidate = match refiner(&program, &mismatches) {
                    Ok(c) => c,
                    Err(GroundingError::UnparseableResponse(_)) => {
                        outcome.rejected_refinements += 1;
                        break; // old program retained
                    }
                    Err(e) => return Err(e),
                };
                let cand_theta = candidate.default_assignment();
                match accept_refinement(
                    (&program, &theta),
                    (&candidate, &cand_theta),
                    data,
                    universe,
                    registry,
                )? {
                    Retained::New => {
                        outcome.oracle_refinements += 1;
                        program = candidate;
                        theta = cand_theta;
                        registry.replace(program.clone())?;
                        registry.set_current(name, theta.clone())?;
                    }
                    Retained::Old => {
                        outcome.rejected_refinements += 1;
                        break; // hallucination guard: keep the old program
                    }
                }
            }
        }
        let report = f1_scores(&program, &theta, data, universe, registry)?;
        f_min = report.f_min;
        f_avg = report.f_avg;
    }

    outcome.final_f_min = f_min;
    outcome.final_f_avg = f_avg;
    Ok(outcome)
}
