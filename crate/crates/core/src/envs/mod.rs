//! Deterministic environments: a common interface, discrete simulators that
//! interpret hidden ground-truth PDDL domains, and a kinematic tabletop
//! simulator with poses, gripper skills and injectable perception noise.

mod discrete;
mod tabletop;

pub use discrete::{DiscreteEnv, SkillBinding};
pub use tabletop::{angle_diff, geometric_atoms as tabletop_geometric_atoms, TabletopEnv, TabletopScene};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbolic::SymbolicState;

/// An executable low-level primitive with concrete arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SkillCall {
    pub name: String,
    pub args: Vec<String>,
}

impl SkillCall {
    pub fn new(name: impl Into<String>, args: Vec<String>) -> Self {
        SkillCall { name: name.into(), args }
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

/// A skill name with its parameter signature, as advertised to oracles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSignature {
    pub name: String,
    /// Parameter names, e.g. `["part"]` for `hover_above_part(part: str)`.
    pub params: Vec<String>,
}

/// The library Π of skills an environment accepts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub skills: Vec<SkillSignature>,
}

impl SkillLibrary {
    pub fn get(&self, name: &str) -> Option<&SkillSignature> {
        self.skills.iter().find(|s| s.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// The `def name(param: str, ...):` listing used in prompts.
    pub fn to_prompt_listing(&self) -> String {
        let mut out = String::new();
        for s in &self.skills {
            let args =
                s.params.iter().map(|p| format!("{}: str", p)).collect::<Vec<_>>().join(", ");
            out.push_str(&format!("- def {}({}):\n", s.name, args));
        }
        out
    }
}

/// 6D pose plus axis-aligned bounding box of one perceived part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// Center (x, y, z) in meters.
    pub center: [f64; 3],
    /// Orientation (roll, pitch, yaw) in radians.
    pub orientation: [f64; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

impl PoseRecord {
    pub fn top_z(&self) -> f64 {
        self.bbox_max[2]
    }

    pub fn bottom_z(&self) -> f64 {
        self.bbox_min[2]
    }

    fn translate(&mut self, d: [f64; 3]) {
        for i in 0..3 {
            self.center[i] += d[i];
            self.bbox_min[i] += d[i];
            self.bbox_max[i] += d[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub name: String,
    pub gripper_center: [f64; 3],
    pub gripper_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub name: String,
    pub surface_z: f64,
}

/// Continuous world state: per-object pose records plus robot and table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    pub parts: BTreeMap<String, PoseRecord>,
    pub robot: RobotRecord,
    pub table: TableRecord,
}

impl ContinuousState {
    /// Perceived center of any object: part center, gripper center, or the
    /// table's surface point.
    pub fn center_of(&self, object: &str) -> Option<[f64; 3]> {
        if let Some(p) = self.parts.get(object) {
            return Some(p.center);
        }
        if object == self.robot.name {
            return Some(self.robot.gripper_center);
        }
        if object == self.table.name {
            return Some([0.0, 0.0, self.table.surface_z]);
        }
        None
    }

    /// Textual scene dump in the perception format used in oracle prompts.
    pub fn to_prompt_dump(&self) -> String {
        let fmt3 = |v: &[f64; 3]| {
            format!("[{:.3}, {:.3}, {:.3}]", v[0], v[1], v[2])
        };
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.robot.name));
        out.push_str(&format!("- gripper_center: {}\n", fmt3(&self.robot.gripper_center)));
        out.push_str(&format!(
            "- gripper_closed: {}\n",
            if self.robot.gripper_closed { "True" } else { "False" }
        ));
        out.push_str(&format!("{}\n", self.table.name));
        out.push_str(&format!("- surface_z: {:.3}\n", self.table.surface_z));
        for (name, pose) in &self.parts {
            out.push_str(&format!("{}\n", name));
            out.push_str(&format!("- center: {}\n", fmt3(&pose.center)));
            out.push_str(&format!("- orientation: {}\n", fmt3(&pose.orientation)));
            out.push_str(&format!(
                "- bounding_box: [{:.3}, {:.3}, {:.3}, {:.3}, {:.3}, {:.3}]\n",
                pose.bbox_min[0],
                pose.bbox_min[1],
                pose.bbox_min[2],
                pose.bbox_max[0],
                pose.bbox_max[1],
                pose.bbox_max[2]
            ));
        }
        out
    }
}

/// Environment state as perceived by the learner. Discrete environments
/// expose their symbolic state directly; continuous ones expose poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldState {
    Discrete(SymbolicState),
    Continuous(ContinuousState),
}

impl WorldState {
    pub fn as_continuous(&self) -> Option<&ContinuousState> {
        match self {
            WorldState::Continuous(c) => Some(c),
            WorldState::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&SymbolicState> {
        match self {
            WorldState::Discrete(s) => Some(s),
            WorldState::Continuous(_) => None,
        }
    }
}

// SymbolicState serialization: atoms as display strings.
impl Serialize for SymbolicState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let strings: Vec<String> = self.iter().map(|a| a.to_string()).collect();
        strings.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymbolicState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let strings = Vec::<String>::deserialize(deserializer)?;
        let mut state = SymbolicState::new();
        for s in strings {
            let inner = s
                .trim()
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| serde::de::Error::custom(format!("malformed atom `{}`", s)))?;
            let mut parts = inner.split_whitespace();
            let pred = parts
                .next()
                .ok_or_else(|| serde::de::Error::custom("empty atom"))?;
            state.insert(crate::symbolic::GroundAtom::new(
                pred,
                parts.map(|p| p.to_string()).collect(),
            ));
        }
        Ok(state)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkillError {
    /// The skill ran and failed; this consumes an environment interaction.
    #[error("skill {skill} failed: {cause}")]
    Failed { skill: String, cause: String },
    /// The skill is not in the environment's library; no interaction consumed.
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
}

/// Per-channel observation noise, seeded and reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_pos: f64,
    pub sigma_ang: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma_pos: 0.005, sigma_ang: 0.02, seed: 0 }
    }
}

/// A deterministic, snapshot-capable environment.
///
/// `execute` is a pure function of (state snapshot, skill); `observe` adds
/// seeded perception noise in continuous environments. The interaction
/// counter advances for every executed skill including failed ones, but not
/// for unknown skills, and is never rewound by `restore`.
pub trait Environment {
    /// Object roster (name to type), fixed for the episode.
    fn objects(&self) -> &BTreeMap<String, String>;

    fn skills(&self) -> &SkillLibrary;

    /// Execute a skill, returning the observed next state.
    fn execute(&mut self, skill: &SkillCall) -> Result<WorldState, SkillError>;

    /// Observe the current state (with noise in continuous environments).
    fn observe(&mut self) -> WorldState;

    /// Exact symbolic state from the hidden ground-truth predicate table.
    /// Reserved for scripted labeling oracles and acceptance tests.
    fn ground_truth_atoms(&self) -> SymbolicState;

    /// Push a checkpoint and return its index.
    fn snapshot(&mut self) -> usize;

    /// Restore the checkpoint (the interaction counter is not rewound).
    fn restore(&mut self, index: usize);

    /// Number of skill executions so far (failed executions included).
    fn interactions(&self) -> u32;
}

/// Deterministic standard-normal draw via Box-Muller from a seeded stream.
pub(crate) fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
