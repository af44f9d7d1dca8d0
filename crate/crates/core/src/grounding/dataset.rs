//! Recorded environment transitions with pseudo-labels and similarity dedup.
//!
//! Labels describe the transition's *next* state. New states are only sent
//! to the labeling oracle when no previously labeled transition with the
//! same skill call lies within `tau_sim`; near-duplicates copy the existing
//! label. The start state is always labeled directly.

use serde::{Deserialize, Serialize};

use crate::envs::{SkillCall, WorldState};
use crate::symbolic::SymbolicState;

use super::GroundingError;

/// One recorded environment transition `(x, skill, x')`.
///
/// `labels`, once set, are never rewritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub pre: WorldState,
    pub skill: SkillCall,
    pub post: WorldState,
    /// Pseudo-labels over state-based predicates for `post`.
    pub labels: Option<SymbolicState>,
}

impl Transition {
    pub fn new(pre: WorldState, skill: SkillCall, post: WorldState) -> Self {
        Transition { pre, skill, post, labels: None }
    }
}

/// A state paired with its pseudo-labels; used for classifier scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledState {
    pub world: WorldState,
    pub atoms: SymbolicState,
}

/// The growing dataset of labeled interactions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    /// The directly labeled start state, when available.
    pub initial: Option<LabeledState>,
    pub transitions: Vec<Transition>,
}

impl TransitionDataset {
    pub fn new() -> Self {
        TransitionDataset::default()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty() && self.initial.is_none()
    }

    /// All (state, labels) pairs: the start state plus every labeled
    /// transition's next state.
    pub fn labeled_states(&self) -> Vec<(&WorldState, &SymbolicState)> {
        let mut out = Vec::new();
        if let Some(init) = &self.initial {
            out.push((&init.world, &init.atoms));
        }
        for t in &self.transitions {
            if let Some(labels) = &t.labels {
                out.push((&t.post, labels));
            }
        }
        out
    }

    /// JSON-lines serialization, one transition per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(init) = &self.initial {
            out.push_str(&serde_json::json!({"initial": init}).to_string());
            out.push('\n');
        }
        for t in &self.transitions {
            out.push_str(&serde_json::to_string(t).expect("transition serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut dataset = TransitionDataset::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)?;
            if let Some(init) = value.get("initial") {
                dataset.initial = Some(serde_json::from_value(init.clone())?);
            } else {
                dataset.transitions.push(serde_json::from_value(value)?);
            }
        }
        Ok(dataset)
    }
}

/// Similarity threshold for the labeling dedup, in world-state metric units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    pub tau_sim: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { tau_sim: 0.01 }
    }
}

/// Distance between two world states: the maximum over objects of the
/// Euclidean position distance. Discrete states are distance 0 when equal
/// and infinite otherwise.
pub fn state_distance(a: &WorldState, b: &WorldState) -> f64 {
    match (a, b) {
        (WorldState::Discrete(x), WorldState::Discrete(y)) => {
            if x == y {
                0.0
            } else {
                f64::INFINITY
            }
        }
        (WorldState::Continuous(x), WorldState::Continuous(y)) => {
            let mut d: f64 = 0.0;
            for (name, pa) in &x.parts {
                let Some(pb) = y.parts.get(name) else {
                    return f64::INFINITY;
                };
                let dist = ((pa.center[0] - pb.center[0]).powi(2)
                    + (pa.center[1] - pb.center[1]).powi(2)
                    + (pa.center[2] - pb.center[2]).powi(2))
                .sqrt();
                d = d.max(dist);
            }
            if x.parts.len() != y.parts.len() {
                return f64::INFINITY;
            }
            let g = ((x.robot.gripper_center[0] - y.robot.gripper_center[0]).powi(2)
                + (x.robot.gripper_center[1] - y.robot.gripper_center[1]).powi(2)
                + (x.robot.gripper_center[2] - y.robot.gripper_center[2]).powi(2))
            .sqrt();
            d = d.max(g);
            d.max((x.table.surface_z - y.table.surface_z).abs())
        }
        _ => f64::INFINITY,
    }
}

/// The labeling oracle: given a skill call and the state it produced,
/// return the true atoms over state-based predicates.
pub type Labeler<'a> =
    dyn FnMut(Option<&SkillCall>, &WorldState) -> Result<SymbolicState, GroundingError> + 'a;

/// Label the start state directly (always one oracle call).
pub fn label_initial(
    dataset: &mut TransitionDataset,
    world: WorldState,
    labeler: &mut Labeler,
) -> Result<(), GroundingError> {
    let atoms = labeler(None, &world)?;
    dataset.initial = Some(LabeledState { world, atoms });
    Ok(())
}

/// Label a batch of transitions, deduplicating by skill-scoped state
/// similarity: a transition joins the class of the first labeled transition
/// with an identical skill call whose next state is within `tau_sim`, and
/// copies that label; otherwise the oracle is invoked once for the class.
/// Returns the number of oracle calls made.
pub fn pseudo_label(
    dataset: &mut TransitionDataset,
    batch: Vec<Transition>,
    labeler: &mut Labeler,
    cfg: &DedupConfig,
) -> Result<usize, GroundingError> {
    let mut calls = 0;
    for mut t in batch {
        if t.labels.is_some() {
            dataset.transitions.push(t);
            continue;
        }
        let existing = dataset
            .transitions
            .iter()
            .filter(|prev| prev.labels.is_some() && prev.skill == t.skill)
            .find(|prev| state_distance(&prev.post, &t.post) < cfg.tau_sim)
            .and_then(|prev| prev.labels.clone());
        match existing {
            Some(labels) => t.labels = Some(labels),
            None => {
                t.labels = Some(labeler(Some(&t.skill), &t.post)?);
                calls += 1;
            }
        }
        dataset.transitions.push(t);
    }
    Ok(calls)
}
