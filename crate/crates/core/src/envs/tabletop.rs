//! Kinematic tabletop simulator: skills teleport or interpolate poses with
//! rule-based success conditions. There is no dynamics; a held part tracks
//! the gripper rigidly and released parts drop straight onto the table.
//!
//! The geometric rule constants below define both skill success envelopes
//! and the hidden ground-truth predicate table.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::symbolic::{GroundAtom, SymbolicState};

use super::{
    gaussian, ContinuousState, Environment, NoiseConfig, PoseRecord, SkillCall, SkillError,
    SkillLibrary, SkillSignature, WorldState,
};

/// Gripper must be this close in xy to grasp a part.
const GRASP_XY_TOL: f64 = 0.03;
/// Gripper height must be within this of the part's top to grasp it.
const GRASP_TOP_TOL: f64 = 0.05;
/// Hover height above a part's top surface.
const HOVER_CLEARANCE: f64 = 0.10;
/// Gripper settles this far below the part top when set around it.
const GRIP_DEPTH: f64 = 0.01;
/// Vertical travel of `move_linear_up`.
const LIFT_STEP: f64 = 0.15;
/// Approach clearance left above the fixed part after orientation alignment.
const ALIGN_CLEARANCE: f64 = 0.02;
/// Screwing tolerances: xy offset and vertical gap between the parts.
const SCREW_XY_TOL: f64 = 0.02;
const SCREW_GAP_TOL: f64 = 0.01;
/// Screwing engages the held part this far into the fixed part; strictly
/// inside the touching and alignment windows but outside their boundaries.
const SCREW_ENGAGE: f64 = 0.004;
/// Gripper retreat after releasing a screwed part; large enough to leave
/// every hover envelope.
const RELEASE_RISE: f64 = 0.20;

// Ground-truth predicate thresholds.
const GT_ON_TABLE_TOL: f64 = 0.005;
const GT_HOVER_XY_TOL: f64 = 0.02;
const GT_HOVER_Z_MIN: f64 = 0.03;
const GT_HOVER_Z_MAX: f64 = 0.15;
const GT_AROUND_XY_TOL: f64 = 0.05;
const GT_AROUND_Z_TOL: f64 = 0.05;
const GT_HOLD_XY_TOL: f64 = 0.03;
const GT_HOLD_Z_TOL: f64 = 0.05;
const GT_ALIGN_XY_TOL: f64 = 0.01;
const GT_ALIGN_ANG_TOL: f64 = 0.1;
const GT_ALIGN_GAP_MIN: f64 = -0.005;
const GT_ALIGN_GAP_MAX: f64 = 0.03;
const GT_TOUCH_GAP_TOL: f64 = 0.005;
const GT_TOUCH_XY_TOL: f64 = 0.02;
const GT_ASSEMBLED_XY_TOL: f64 = 0.012;
const GT_ASSEMBLED_GAP_MIN: f64 = -0.012;
const GT_ASSEMBLED_GAP_MAX: f64 = -0.002;

/// The hidden ground-truth predicate table, evaluated on poses alone.
/// Used by the environment's ground truth and by the scripted labeling
/// oracle, which reconstructs the state from the textual perception dump.
pub fn geometric_atoms(state: &ContinuousState) -> SymbolicState {
    let mut out = SymbolicState::new();
    let robot = &state.robot;
    let rname = robot.name.clone();
    let tname = state.table.name.clone();
    if robot.gripper_closed {
        out.insert(GroundAtom::new("gripper_closed", vec![rname.clone()]));
    }
    for (name, p) in &state.parts {
        if (p.bottom_z() - state.table.surface_z).abs() <= GT_ON_TABLE_TOL {
            out.insert(GroundAtom::new("on_table", vec![name.clone(), tname.clone()]));
        }
        if robot.gripper_closed
            && dist_xy(&robot.gripper_center, &p.center) <= GT_HOLD_XY_TOL
            && (robot.gripper_center[2] - p.center[2]).abs() <= GT_HOLD_Z_TOL
        {
            out.insert(GroundAtom::new("holding", vec![rname.clone(), name.clone()]));
        }
        let dz = robot.gripper_center[2] - p.top_z();
        if dist_xy(&robot.gripper_center, &p.center) <= GT_HOVER_XY_TOL
            && dz >= GT_HOVER_Z_MIN
            && dz <= GT_HOVER_Z_MAX
        {
            out.insert(GroundAtom::new("hovering_above", vec![rname.clone(), name.clone()]));
        }
        if !robot.gripper_closed
            && dist_xy(&robot.gripper_center, &p.center) <= GT_AROUND_XY_TOL
            && (robot.gripper_center[2] - p.top_z()).abs() <= GT_AROUND_Z_TOL
        {
            out.insert(GroundAtom::new("gripper_around", vec![rname.clone(), name.clone()]));
        }
    }
    let names: Vec<&String> = state.parts.keys().collect();
    for a in &names {
        for b in &names {
            if a == b {
                continue;
            }
            let pa = &state.parts[*a];
            let pb = &state.parts[*b];
            let gap = pa.bottom_z() - pb.top_z();
            let xy = dist_xy(&pa.center, &pb.center);
            if xy <= GT_ALIGN_XY_TOL
                && angle_diff(pa.orientation[0], pb.orientation[0]).abs() <= GT_ALIGN_ANG_TOL
                && angle_diff(pa.orientation[1], pb.orientation[1]).abs() <= GT_ALIGN_ANG_TOL
                && gap >= GT_ALIGN_GAP_MIN
                && gap <= GT_ALIGN_GAP_MAX
            {
                out.insert(GroundAtom::new("aligned", vec![(*a).clone(), (*b).clone()]));
            }
            if gap.abs() <= GT_TOUCH_GAP_TOL && xy <= GT_TOUCH_XY_TOL {
                out.insert(GroundAtom::new("touching", vec![(*a).clone(), (*b).clone()]));
            }
            if xy <= GT_ASSEMBLED_XY_TOL
                && gap >= GT_ASSEMBLED_GAP_MIN
                && gap <= GT_ASSEMBLED_GAP_MAX
            {
                out.insert(GroundAtom::new("assembled", vec![(*a).clone(), (*b).clone()]));
            }
        }
    }
    out
}

/// Minimal signed difference between two angles, wrapped to `[-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut d = (a - b) % two_pi;
    if d > std::f64::consts::PI {
        d -= two_pi;
    } else if d < -std::f64::consts::PI {
        d += two_pi;
    }
    d
}

fn dist_xy(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Initial scene description, loaded from an environment manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabletopScene {
    pub robot: super::RobotRecord,
    pub table: super::TableRecord,
    pub parts: BTreeMap<String, PoseRecord>,
}

#[derive(Debug, Clone, PartialEq)]
struct Snapshot {
    world: ContinuousState,
    held: Option<String>,
    assembled: BTreeSet<(String, String)>,
    obs_counter: u64,
}

#[derive(Debug, Clone)]
pub struct TabletopEnv {
    world: ContinuousState,
    held: Option<String>,
    assembled: BTreeSet<(String, String)>,
    objects: BTreeMap<String, String>,
    library: SkillLibrary,
    noise: NoiseConfig,
    obs_counter: u64,
    snapshots: Vec<Snapshot>,
    interactions: u32,
}

impl TabletopEnv {
    pub fn new(scene: TabletopScene, noise: NoiseConfig) -> Self {
        let mut objects = BTreeMap::new();
        objects.insert(scene.robot.name.clone(), "robot".to_string());
        objects.insert(scene.table.name.clone(), "table".to_string());
        for name in scene.parts.keys() {
            objects.insert(name.clone(), "part".to_string());
        }
        let library = SkillLibrary {
            skills: vec![
                SkillSignature { name: "hover_above_part".into(), params: vec!["part".into()] },
                SkillSignature {
                    name: "set_gripper_around_part".into(),
                    params: vec!["part".into()],
                },
                SkillSignature { name: "move_linear_up".into(), params: vec![] },
                SkillSignature { name: "open_gripper".into(), params: vec![] },
                SkillSignature { name: "close_gripper".into(), params: vec![] },
                SkillSignature {
                    name: "align_orientation_for_assembly".into(),
                    params: vec!["held_part".into(), "fixed_part".into()],
                },
                SkillSignature {
                    name: "screw_touching_parts_together".into(),
                    params: vec!["held_part".into(), "fixed_part".into()],
                },
                SkillSignature {
                    name: "move_linear_down_until_touching".into(),
                    params: vec!["held_part".into(), "fixed_part".into()],
                },
            ],
        };
        TabletopEnv {
            world: ContinuousState {
                parts: scene.parts,
                robot: scene.robot,
                table: scene.table,
            },
            held: None,
            assembled: BTreeSet::new(),
            objects,
            library,
            noise,
            obs_counter: 0,
            snapshots: Vec::new(),
            interactions: 0,
        }
    }

    pub fn held_part(&self) -> Option<&str> {
        self.held.as_deref()
    }

    pub fn assembled_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.assembled
    }

    fn part(&self, name: &str) -> Result<PoseRecord, SkillError> {
        self.world.parts.get(name).cloned().ok_or_else(|| SkillError::Failed {
            skill: String::new(),
            cause: format!("no such part `{}`", name),
        })
    }

    fn move_gripper_to(&mut self, target: [f64; 3]) {
        let delta = [
            target[0] - self.world.robot.gripper_center[0],
            target[1] - self.world.robot.gripper_center[1],
            target[2] - self.world.robot.gripper_center[2],
        ];
        self.world.robot.gripper_center = target;
        if let Some(held) = self.held.clone() {
            if let Some(p) = self.world.parts.get_mut(&held) {
                p.translate(delta);
            }
        }
    }

    fn run_skill(&mut self, skill: &SkillCall) -> Result<(), SkillError> {
        let fail = |cause: String| SkillError::Failed { skill: skill.to_string(), cause };
        let arg = |i: usize| -> Result<&str, SkillError> {
            skill.args.get(i).map(|s| s.as_str()).ok_or_else(|| SkillError::Failed {
                skill: skill.to_string(),
                cause: format!("missing argument {}", i),
            })
        };
        match skill.name.as_str() {
            "hover_above_part" => {
                let p = self.part(arg(0)?)?;
                self.move_gripper_to([p.center[0], p.center[1], p.top_z() + HOVER_CLEARANCE]);
                Ok(())
            }
            "set_gripper_around_part" => {
                let name = arg(0)?.to_string();
                let p = self.part(&name)?;
                if self.held.is_some() {
                    return Err(fail("gripper already holds a part".into()));
                }
                self.world.robot.gripper_closed = false;
                self.move_gripper_to([p.center[0], p.center[1], p.top_z() - GRIP_DEPTH]);
                Ok(())
            }
            "move_linear_up" => {
                let g = self.world.robot.gripper_center;
                self.move_gripper_to([g[0], g[1], g[2] + LIFT_STEP]);
                Ok(())
            }
            "open_gripper" => {
                self.world.robot.gripper_closed = false;
                if let Some(held) = self.held.take() {
                    // released part drops straight down onto the table
                    let surface = self.world.table.surface_z;
                    if let Some(p) = self.world.parts.get_mut(&held) {
                        let drop = surface - p.bottom_z();
                        p.translate([0.0, 0.0, drop]);
                    }
                }
                Ok(())
            }
            "close_gripper" => {
                self.world.robot.gripper_closed = true;
                let g = self.world.robot.gripper_center;
                let mut best: Option<(String, f64)> = None;
                for (name, p) in &self.world.parts {
                    // screwed parts are fastened and cannot be re-grasped
                    if self.assembled.iter().any(|(a, b)| a == name || b == name) {
                        continue;
                    }
                    let d = dist_xy(&g, &p.center);
                    if d < GRASP_XY_TOL && (g[2] - p.top_z()).abs() < GRASP_TOP_TOL {
                        let better = match &best {
                            Some((_, bd)) => d < *bd,
                            None => true,
                        };
                        if better {
                            best = Some((name.clone(), d));
                        }
                    }
                }
                // nothing within the jaws: the gripper just closes
                self.held = best.map(|(n, _)| n);
                Ok(())
            }
            "align_orientation_for_assembly" => {
                let held = arg(0)?.to_string();
                let fixed_name = arg(1)?.to_string();
                let fixed = self.part(&fixed_name)?;
                if self.held.as_deref() != Some(held.as_str()) {
                    return Err(fail(format!("not holding `{}`", held)));
                }
                let hp = self.part(&held)?;
                let target_bottom = fixed.top_z() + ALIGN_CLEARANCE;
                let delta = [
                    fixed.center[0] - hp.center[0],
                    fixed.center[1] - hp.center[1],
                    target_bottom - hp.bottom_z(),
                ];
                if let Some(p) = self.world.parts.get_mut(&held) {
                    p.translate(delta);
                    p.orientation[0] = fixed.orientation[0];
                    p.orientation[1] = fixed.orientation[1];
                }
                let g = self.world.robot.gripper_center;
                self.world.robot.gripper_center =
                    [g[0] + delta[0], g[1] + delta[1], g[2] + delta[2]];
                Ok(())
            }
            "move_linear_down_until_touching" => {
                let held = arg(0)?.to_string();
                let fixed_name = arg(1)?.to_string();
                let fixed = self.part(&fixed_name)?;
                if self.held.as_deref() != Some(held.as_str()) {
                    return Err(fail(format!("not holding `{}`", held)));
                }
                let hp = self.part(&held)?;
                let drop = fixed.top_z() - hp.bottom_z();
                if let Some(p) = self.world.parts.get_mut(&held) {
                    p.translate([0.0, 0.0, drop]);
                }
                let g = self.world.robot.gripper_center;
                self.world.robot.gripper_center = [g[0], g[1], g[2] + drop];
                Ok(())
            }
            "screw_touching_parts_together" => {
                let held = arg(0)?.to_string();
                let fixed_name = arg(1)?.to_string();
                let fixed = self.part(&fixed_name)?;
                if self.held.as_deref() != Some(held.as_str()) {
                    return Err(fail(format!("not holding `{}`", held)));
                }
                let hp = self.part(&held)?;
                if dist_xy(&hp.center, &fixed.center) > SCREW_XY_TOL
                    || (hp.bottom_z() - fixed.top_z()).abs() > SCREW_GAP_TOL
                {
                    return Err(fail("parts are not touching and aligned".into()));
                }
                // threads engage: the held part settles into the fixed one
                let settle = fixed.top_z() - SCREW_ENGAGE - hp.bottom_z();
                if let Some(p) = self.world.parts.get_mut(&held) {
                    p.translate([0.0, 0.0, settle]);
                }
                self.assembled.insert((held, fixed_name));
                self.held = None;
                self.world.robot.gripper_closed = false;
                let g = self.world.robot.gripper_center;
                self.world.robot.gripper_center = [g[0], g[1], g[2] + RELEASE_RISE];
                Ok(())
            }
            other => Err(SkillError::UnknownSkill(other.to_string())),
        }
    }

    fn noisy_observation(&mut self) -> ContinuousState {
        let mut obs = self.world.clone();
        if self.noise.sigma_pos == 0.0 && self.noise.sigma_ang == 0.0 {
            self.obs_counter += 1;
            return obs;
        }
        let stream = self.noise.seed ^ self.obs_counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        self.obs_counter += 1;
        for (_, pose) in obs.parts.iter_mut() {
            let shift = [
                gaussian(&mut rng) * self.noise.sigma_pos,
                gaussian(&mut rng) * self.noise.sigma_pos,
                gaussian(&mut rng) * self.noise.sigma_pos,
            ];
            pose.translate(shift);
            for o in pose.orientation.iter_mut() {
                *o += gaussian(&mut rng) * self.noise.sigma_ang;
            }
        }
        for c in obs.robot.gripper_center.iter_mut() {
            *c += gaussian(&mut rng) * self.noise.sigma_pos;
        }
        obs.table.surface_z += gaussian(&mut rng) * self.noise.sigma_pos;
        obs
    }

    /// Geometric rules plus authoritative `assembled` bookkeeping (monotone
    /// within an episode; no disassembly skill exists).
    fn gt_atoms(&self) -> SymbolicState {
        let mut state = geometric_atoms(&self.world);
        state.atoms.retain(|a| a.predicate != "assembled");
        for (a, b) in &self.assembled {
            state.insert(GroundAtom::new("assembled", vec![a.clone(), b.clone()]));
        }
        state
    }
}

impl Environment for TabletopEnv {
    fn objects(&self) -> &BTreeMap<String, String> {
        &self.objects
    }

    fn skills(&self) -> &SkillLibrary {
        &self.library
    }

    fn execute(&mut self, skill: &SkillCall) -> Result<WorldState, SkillError> {
        if !self.library.contains(&skill.name) {
            return Err(SkillError::UnknownSkill(skill.name.clone()));
        }
        self.interactions += 1;
        self.run_skill(skill)?;
        Ok(WorldState::Continuous(self.noisy_observation()))
    }

    fn observe(&mut self) -> WorldState {
        WorldState::Continuous(self.noisy_observation())
    }

    fn ground_truth_atoms(&self) -> SymbolicState {
        self.gt_atoms()
    }

    fn snapshot(&mut self) -> usize {
        self.snapshots.push(Snapshot {
            world: self.world.clone(),
            held: self.held.clone(),
            assembled: self.assembled.clone(),
            obs_counter: self.obs_counter,
        });
        self.snapshots.len() - 1
    }

    fn restore(&mut self, index: usize) {
        let snap = self.snapshots[index].clone();
        self.world = snap.world;
        self.held = snap.held;
        self.assembled = snap.assembled;
        self.obs_counter = snap.obs_counter;
        self.snapshots.truncate(index + 1);
    }

    fn interactions(&self) -> u32 {
        self.interactions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lamp_scene() -> TabletopScene {
        let part = |c: [f64; 3], o: [f64; 3], bmin: [f64; 3], bmax: [f64; 3]| PoseRecord {
            center: c,
            orientation: o,
            bbox_min: bmin,
            bbox_max: bmax,
        };
        TabletopScene {
            robot: super::super::RobotRecord {
                name: "arm".into(),
                gripper_center: [0.567, 0.055, 0.124],
                gripper_closed: false,
            },
            table: super::super::TableRecord { name: "table".into(), surface_z: -0.016 },
            parts: [
                (
                    "lamp_base".to_string(),
                    part(
                        [0.455, 0.052, 0.017],
                        [3.14, -0.0, -1.38],
                        [0.405, 0.002, -0.016],
                        [0.505, 0.101, 0.048],
                    ),
                ),
                (
                    "lamp_bulb".to_string(),
                    part(
                        [0.43, 0.179, 0.015],
                        [-3.14, 1.42, 0.04],
                        [0.37, 0.149, -0.016],
                        [0.49, 0.209, 0.045],
                    ),
                ),
                (
                    "lamp_hood".to_string(),
                    part(
                        [0.459, -0.11, 0.035],
                        [3.14, -0.0, 1.54],
                        [0.415, -0.154, -0.016],
                        [0.503, -0.066, 0.085],
                    ),
                ),
            ]
            .into(),
        }
    }

    fn quiet_env() -> TabletopEnv {
        TabletopEnv::new(
            lamp_scene(),
            NoiseConfig { sigma_pos: 0.0, sigma_ang: 0.0, seed: 0 },
        )
    }

    #[test]
    fn initial_scene_is_on_table() {
        let env = quiet_env();
        let atoms = env.ground_truth_atoms();
        for part in ["lamp_base", "lamp_bulb", "lamp_hood"] {
            assert!(
                atoms.contains(&GroundAtom::new("on_table", vec![part.into(), "table".into()])),
                "{} should start on the table: {}",
                part,
                atoms
            );
        }
    }

    #[test]
    fn grasp_sequence_holds_part() {
        let mut env = quiet_env();
        env.execute(&SkillCall::new("hover_above_part", vec!["lamp_bulb".into()])).unwrap();
        assert!(env.ground_truth_atoms().contains(&GroundAtom::new(
            "hovering_above",
            vec!["arm".into(), "lamp_bulb".into()]
        )));
        env.execute(&SkillCall::new("set_gripper_around_part", vec!["lamp_bulb".into()]))
            .unwrap();
        let atoms = env.ground_truth_atoms();
        assert!(atoms
            .contains(&GroundAtom::new("gripper_around", vec!["arm".into(), "lamp_bulb".into()])));
        assert!(!atoms.contains(&GroundAtom::new(
            "hovering_above",
            vec!["arm".into(), "lamp_bulb".into()]
        )));
        env.execute(&SkillCall::new("close_gripper", vec![])).unwrap();
        assert_eq!(env.held_part(), Some("lamp_bulb"));
        env.execute(&SkillCall::new("move_linear_up", vec![])).unwrap();
        let atoms = env.ground_truth_atoms();
        assert!(atoms
            .contains(&GroundAtom::new("holding", vec!["arm".into(), "lamp_bulb".into()])));
        assert!(!atoms.contains(&GroundAtom::new(
            "on_table",
            vec!["lamp_bulb".into(), "table".into()]
        )));
    }

    #[test]
    fn close_on_nothing_holds_nothing() {
        let mut env = quiet_env();
        env.execute(&SkillCall::new("close_gripper", vec![])).unwrap();
        assert_eq!(env.held_part(), None);
        assert!(env
            .ground_truth_atoms()
            .contains(&GroundAtom::new("gripper_closed", vec!["arm".into()])));
    }

    #[test]
    fn hover_absent_part_fails_and_counts() {
        let mut env = quiet_env();
        let err = env.execute(&SkillCall::new("hover_above_part", vec!["ghost".into()]));
        assert!(matches!(err, Err(SkillError::Failed { .. })));
        assert_eq!(env.interactions(), 1);
    }

    #[test]
    fn full_assembly_and_monotonicity() {
        let mut env = quiet_env();
        for (held, fixed) in [("lamp_bulb", "lamp_base"), ("lamp_hood", "lamp_base")] {
            env.execute(&SkillCall::new("hover_above_part", vec![held.into()])).unwrap();
            env.execute(&SkillCall::new("set_gripper_around_part", vec![held.into()])).unwrap();
            env.execute(&SkillCall::new("close_gripper", vec![])).unwrap();
            env.execute(&SkillCall::new("move_linear_up", vec![])).unwrap();
            env.execute(&SkillCall::new(
                "align_orientation_for_assembly",
                vec![held.into(), fixed.into()],
            ))
            .unwrap();
            let atoms = env.ground_truth_atoms();
            assert!(
                atoms.contains(&GroundAtom::new("aligned", vec![held.into(), fixed.into()])),
                "{} should be aligned with {}: {}",
                held,
                fixed,
                atoms
            );
            env.execute(&SkillCall::new(
                "move_linear_down_until_touching",
                vec![held.into(), fixed.into()],
            ))
            .unwrap();
            assert!(env
                .ground_truth_atoms()
                .contains(&GroundAtom::new("touching", vec![held.into(), fixed.into()])));
            env.execute(&SkillCall::new(
                "screw_touching_parts_together",
                vec![held.into(), fixed.into()],
            ))
            .unwrap();
            assert!(env
                .ground_truth_atoms()
                .contains(&GroundAtom::new("assembled", vec![held.into(), fixed.into()])));
        }
        // no spurious aligned atom between the two stacked movables
        let atoms = env.ground_truth_atoms();
        assert!(!atoms.contains(&GroundAtom::new(
            "aligned",
            vec!["lamp_hood".into(), "lamp_bulb".into()]
        )));
        assert_eq!(env.assembled_pairs().len(), 2);
    }

    #[test]
    fn observation_noise_is_seeded_and_restorable() {
        let scene = lamp_scene();
        let mut env = TabletopEnv::new(
            scene.clone(),
            NoiseConfig { sigma_pos: 0.01, sigma_ang: 0.02, seed: 42 },
        );
        let snap = env.snapshot();
        let a = env.observe();
        let b = env.observe();
        assert_ne!(a, b, "independent draws differ");
        env.restore(snap);
        let a2 = env.observe();
        let b2 = env.observe();
        assert_eq!(a, a2, "restored counter replays identical noise");
        assert_eq!(b, b2);
        // zero noise observes ground truth
        let mut quiet = quiet_env();
        match quiet.observe() {
            WorldState::Continuous(c) => assert_eq!(c, quiet.world),
            _ => unreachable!(),
        }
    }
}
