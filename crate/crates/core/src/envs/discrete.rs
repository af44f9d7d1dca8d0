//! Discrete simulators that interpret a hidden ground-truth PDDL domain.
//!
//! Skills mirror the hidden operators but may expose only a subset of the
//! operator's parameters (e.g. `load_truck(package, truck)` for a three-
//! parameter operator); the simulator resolves the elided parameters from
//! the current state, taking the lexicographically first satisfying binding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::symbolic::{apply, Action, DomainModel, SymbolicState};

use super::{Environment, SkillCall, SkillError, SkillLibrary, SkillSignature, WorldState};

/// Maps a skill to a hidden operator, listing which operator parameter
/// positions the skill's arguments fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillBinding {
    pub skill: String,
    pub operator: String,
    /// Operator parameter indices exposed as skill arguments, in order.
    pub exposed: Vec<usize>,
}

/// A deterministic environment whose dynamics are the hidden domain itself.
#[derive(Debug, Clone)]
pub struct DiscreteEnv {
    hidden: DomainModel,
    objects: BTreeMap<String, String>,
    state: SymbolicState,
    library: SkillLibrary,
    bindings: BTreeMap<String, SkillBinding>,
    snapshots: Vec<SymbolicState>,
    interactions: u32,
}

impl DiscreteEnv {
    pub fn new(
        hidden: DomainModel,
        objects: BTreeMap<String, String>,
        init: SymbolicState,
        bindings: Vec<SkillBinding>,
    ) -> Self {
        let mut library = SkillLibrary::default();
        let mut map = BTreeMap::new();
        for b in bindings {
            let op = hidden.operator(&b.operator).unwrap_or_else(|| {
                panic!("skill {} maps to unknown operator {}", b.skill, b.operator)
            });
            let params = b.exposed.iter().map(|&i| op.params[i].name.clone()).collect();
            library.skills.push(SkillSignature { name: b.skill.clone(), params });
            map.insert(b.skill.clone(), b);
        }
        DiscreteEnv {
            hidden,
            objects,
            state: init,
            library,
            bindings: map,
            snapshots: Vec::new(),
            interactions: 0,
        }
    }

    pub fn hidden_domain(&self) -> &DomainModel {
        &self.hidden
    }

    pub fn state(&self) -> &SymbolicState {
        &self.state
    }

    /// Find the lexicographically first full binding consistent with the
    /// skill arguments whose preconditions hold in the current state.
    fn resolve_action(&self, skill: &SkillCall, binding: &SkillBinding) -> Option<Action> {
        let op = self.hidden.operator(&binding.operator)?;
        if skill.args.len() != binding.exposed.len() {
            return None;
        }
        let mut fixed: Vec<Option<String>> = vec![None; op.params.len()];
        for (arg, &pos) in skill.args.iter().zip(&binding.exposed) {
            fixed[pos] = Some(arg.clone());
        }
        let candidates: Vec<Vec<String>> = op
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| match &fixed[i] {
                Some(obj) => vec![obj.clone()],
                None => self
                    .objects
                    .iter()
                    .filter(|(_, ty)| self.hidden.types.is_subtype(ty, &p.ty))
                    .map(|(name, _)| name.clone())
                    .collect(),
            })
            .collect();
        let mut binding_buf: Vec<String> = Vec::with_capacity(op.params.len());
        self.first_applicable(&op.name, &candidates, &mut binding_buf)
    }

    fn first_applicable(
        &self,
        op_name: &str,
        candidates: &[Vec<String>],
        binding: &mut Vec<String>,
    ) -> Option<Action> {
        if binding.len() == candidates.len() {
            let action = Action::new(op_name, binding.clone());
            return apply(&self.state, &action, &self.hidden, &self.objects)
                .ok()
                .map(|_| action);
        }
        for obj in &candidates[binding.len()] {
            binding.push(obj.clone());
            if let Some(a) = self.first_applicable(op_name, candidates, binding) {
                binding.pop();
                return Some(a);
            }
            binding.pop();
        }
        None
    }
}

impl Environment for DiscreteEnv {
    fn objects(&self) -> &BTreeMap<String, String> {
        &self.objects
    }

    fn skills(&self) -> &SkillLibrary {
        &self.library
    }

    fn execute(&mut self, skill: &SkillCall) -> Result<WorldState, SkillError> {
        let Some(binding) = self.bindings.get(&skill.name).cloned() else {
            return Err(SkillError::UnknownSkill(skill.name.clone()));
        };
        self.interactions += 1;
        match self.resolve_action(skill, &binding) {
            Some(action) => {
                self.state = apply(&self.state, &action, &self.hidden, &self.objects)
                    .expect("resolved action is applicable");
                Ok(WorldState::Discrete(self.state.clone()))
            }
            None => Err(SkillError::Failed {
                skill: skill.to_string(),
                cause: format!(
                    "no applicable instantiation of {} for arguments ({})",
                    binding.operator,
                    skill.args.join(", ")
                ),
            }),
        }
    }

    fn observe(&mut self) -> WorldState {
        WorldState::Discrete(self.state.clone())
    }

    fn ground_truth_atoms(&self) -> SymbolicState {
        self.state.clone()
    }

    fn snapshot(&mut self) -> usize {
        self.snapshots.push(self.state.clone());
        self.snapshots.len() - 1
    }

    fn restore(&mut self, index: usize) {
        self.state = self.snapshots[index].clone();
        self.snapshots.truncate(index + 1);
    }

    fn interactions(&self) -> u32 {
        self.interactions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_domain;

    fn mini_env() -> DiscreteEnv {
        let hidden = parse_domain(
            "(define (domain mini)
               (:requirements :strips :typing)
               (:types spot thing - object)
               (:predicates (at ?t - thing ?s - spot) (here ?s - spot))
               (:action move
                 :parameters (?t - thing ?from - spot ?to - spot)
                 :precondition (and (at ?t ?from))
                 :effect (and (at ?t ?to) (not (at ?t ?from)))))",
        )
        .unwrap();
        let objects: BTreeMap<String, String> = [
            ("ball".to_string(), "thing".to_string()),
            ("a".to_string(), "spot".to_string()),
            ("b".to_string(), "spot".to_string()),
        ]
        .into();
        let init = SymbolicState::from_atoms([crate::symbolic::GroundAtom::new(
            "at",
            vec!["ball".into(), "a".into()],
        )]);
        DiscreteEnv::new(
            hidden,
            objects,
            init,
            vec![SkillBinding {
                skill: "move".into(),
                operator: "move".into(),
                exposed: vec![0, 2],
            }],
        )
    }

    #[test]
    fn elided_parameters_resolve_from_state() {
        let mut env = mini_env();
        // skill move(ball, b) elides ?from; resolved to `a` from the state
        let out = env
            .execute(&SkillCall::new("move", vec!["ball".into(), "b".into()]))
            .unwrap();
        let state = out.as_discrete().unwrap();
        assert!(state.contains(&crate::symbolic::GroundAtom::new(
            "at",
            vec!["ball".into(), "b".into()]
        )));
        assert_eq!(env.interactions(), 1);
    }

    #[test]
    fn failed_skill_counts_unknown_does_not() {
        let mut env = mini_env();
        let err = env
            .execute(&SkillCall::new("move", vec!["ball".into(), "a".into()]))
            .unwrap_err();
        assert!(matches!(err, SkillError::Failed { .. }));
        assert_eq!(env.interactions(), 1);
        let err = env.execute(&SkillCall::new("teleport", vec![])).unwrap_err();
        assert!(matches!(err, SkillError::UnknownSkill(_)));
        assert_eq!(env.interactions(), 1);
    }

    #[test]
    fn snapshot_restores_state_but_not_counter() {
        let mut env = mini_env();
        let snap = env.snapshot();
        let before = env.state().clone();
        env.execute(&SkillCall::new("move", vec!["ball".into(), "b".into()])).unwrap();
        env.restore(snap);
        assert_eq!(env.state(), &before);
        assert_eq!(env.interactions(), 1);
        // restored trajectory is bit-identical
        let again = env
            .execute(&SkillCall::new("move", vec!["ball".into(), "b".into()]))
            .unwrap();
        let state = again.as_discrete().unwrap().clone();
        env.restore(snap);
        let again2 = env
            .execute(&SkillCall::new("move", vec!["ball".into(), "b".into()]))
            .unwrap();
        assert_eq!(again2.as_discrete().unwrap(), &state);
    }
}
