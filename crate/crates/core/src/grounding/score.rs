//! F1 scoring of classifiers against pseudo-labels and the refinement gates.

use std::collections::BTreeMap;

use crate::envs::WorldState;
use crate::symbolic::{GroundAtom, PredicateSchema, TypeHierarchy};

use super::dsl::{ClassifierLookup, ClassifierProgram, HyperAssignment};
use super::eval::eval_classifier;
use super::GroundingError;

/// Per-atom F1 plus the minimum and mean over scored atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub per_atom: BTreeMap<GroundAtom, f64>,
    pub f_min: f64,
    pub f_avg: f64,
}

/// Every type-compatible ground atom of `schema` over `objects`: the
/// candidate universe for scoring.
pub fn atom_universe(
    schema: &PredicateSchema,
    objects: &BTreeMap<String, String>,
    types: &TypeHierarchy,
) -> Vec<GroundAtom> {
    let candidates: Vec<Vec<&String>> = schema
        .params
        .iter()
        .map(|(_, ty)| {
            objects
                .iter()
                .filter(|(_, oty)| types.is_subtype(oty, ty))
                .map(|(name, _)| name)
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut buf: Vec<String> = Vec::new();
    fn rec(
        schema: &PredicateSchema,
        candidates: &[Vec<&String>],
        buf: &mut Vec<String>,
        out: &mut Vec<GroundAtom>,
    ) {
        if buf.len() == candidates.len() {
            out.push(GroundAtom::new(schema.name.clone(), buf.clone()));
            return;
        }
        for obj in &candidates[buf.len()] {
            buf.push((*obj).clone());
            rec(schema, candidates, buf, out);
            buf.pop();
        }
    }
    rec(schema, &candidates, &mut buf, &mut out);
    out
}

/// Score `program` under `theta` against the pseudo-labels in `data`,
/// one F1 per ground atom of the universe. Atoms that never occur true in
/// either predictions or labels (TP = FP = FN = 0) are skipped.
pub fn f1_scores(
    program: &ClassifierProgram,
    theta: &HyperAssignment,
    data: &[(&WorldState, &crate::symbolic::SymbolicState)],
    universe: &[GroundAtom],
    registry: &dyn ClassifierLookup,
) -> Result<F1Report, GroundingError> {
    let mut per_atom = BTreeMap::new();
    for atom in universe {
        let mut tp = 0u32;
        let mut fp = 0u32;
        let mut fneg = 0u32;
        let mut scored_any = false;
        for (world, labels) in data {
            if matches!(world, WorldState::Discrete(_)) {
                continue;
            }
            scored_any = true;
            let predicted = eval_classifier(program, atom, world, theta, registry)?;
            let actual = labels.contains(atom);
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        if !scored_any || (tp == 0 && fp == 0 && fneg == 0) {
            continue; // never occurs true
        }
        let f1 = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fneg as f64);
        per_atom.insert(atom.clone(), f1);
    }
    if per_atom.is_empty() {
        return Err(GroundingError::NoRelevantAtoms(program.predicate.clone()));
    }
    let f_min = per_atom.values().cloned().fold(f64::INFINITY, f64::min);
    let f_avg = per_atom.values().sum::<f64>() / per_atom.len() as f64;
    Ok(F1Report { per_atom, f_min, f_avg })
}

/// What to do about a classifier given its lowest per-atom F1 score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineDecision {
    Keep,
    OptimizeHypers,
    OracleRefine,
}

/// Refinement thresholds: scores below `tau_llm` suggest an error in the
/// classifier itself, scores below `tau_hp` suggest unsuitable
/// hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub tau_hp: f64,
    pub tau_llm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { tau_hp: 0.9, tau_llm: 0.6 }
    }
}

pub fn refine_decision(f_min: f64, thresholds: Thresholds) -> RefineDecision {
    if f_min < thresholds.tau_llm {
        RefineDecision::OracleRefine
    } else if f_min < thresholds.tau_hp {
        RefineDecision::OptimizeHypers
    } else {
        RefineDecision::Keep
    }
}

/// Which classifier survives a refinement round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retained {
    New,
    Old,
}

/// Keep the refined classifier only when it does not score worse than the
/// old one on the same data; ties keep the new one.
pub fn accept_refinement(
    old: (&ClassifierProgram, &HyperAssignment),
    new: (&ClassifierProgram, &HyperAssignment),
    data: &[(&WorldState, &crate::symbolic::SymbolicState)],
    universe: &[GroundAtom],
    registry: &dyn ClassifierLookup,
) -> Result<Retained, GroundingError> {
    let old_score = f1_scores(old.0, old.1, data, universe, registry)?.f_avg;
    let new_score = match f1_scores(new.0, new.1, data, universe, registry) {
        Ok(r) => r.f_avg,
        Err(GroundingError::NoRelevantAtoms(_)) => return Ok(Retained::Old),
        Err(e) => return Err(e),
    };
    if new_score >= old_score {
        Ok(Retained::New)
    } else {
        Ok(Retained::Old)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ContinuousState, PoseRecord, RobotRecord, TableRecord};
    use crate::grounding::dsl::{parse_classifier, NoClassifiers};
    use crate::symbolic::SymbolicState;

    fn world_with_gap(gap: f64) -> WorldState {
        WorldState::Continuous(ContinuousState {
            parts: [(
                "p".to_string(),
                PoseRecord {
                    center: [0.4, 0.0, gap + 0.03],
                    orientation: [0.0; 3],
                    bbox_min: [0.35, -0.05, gap],
                    bbox_max: [0.45, 0.05, gap + 0.06],
                },
            )]
            .into(),
            robot: RobotRecord {
                name: "arm".into(),
                gripper_center: [0.0; 3],
                gripper_closed: false,
            },
            table: TableRecord { name: "table".into(), surface_z: 0.0 },
        })
    }

    #[test]
    fn perfect_and_inverted_classifiers() {
        let on = parse_classifier(
            "on_table(p,t){z_tol=0.01} := bb_min_z(p) - surface_z(t) <= z_tol",
            &NoClassifiers,
        )
        .unwrap();
        let off = parse_classifier(
            "on_table(p,t){z_tol=0.01} := bb_min_z(p) - surface_z(t) > z_tol",
            &NoClassifiers,
        )
        .unwrap();
        let atom = GroundAtom::new("on_table", vec!["p".into(), "table".into()]);
        let w_on = world_with_gap(0.0);
        let w_off = world_with_gap(0.5);
        let lab_on = SymbolicState::from_atoms([atom.clone()]);
        let lab_off = SymbolicState::new();
        let data = vec![(&w_on, &lab_on), (&w_off, &lab_off)];
        let universe = vec![atom.clone()];
        let theta = on.default_assignment();
        let good = f1_scores(&on, &theta, &data, &universe, &NoClassifiers).unwrap();
        assert_eq!(good.f_avg, 1.0);
        assert_eq!(good.f_min, 1.0);
        let bad = f1_scores(&off, &theta, &data, &universe, &NoClassifiers).unwrap();
        assert_eq!(bad.f_avg, 0.0);
    }

    #[test]
    fn confusion_matrix_two_thirds() {
        // TP=1, FP=1, FN=0 on one atom -> F1 = 2/3
        let always = parse_classifier("here(p) := true", &NoClassifiers).unwrap();
        let atom = GroundAtom::new("here", vec!["p".into()]);
        let w1 = world_with_gap(0.0);
        let w2 = world_with_gap(0.5);
        let lab_yes = SymbolicState::from_atoms([atom.clone()]);
        let lab_no = SymbolicState::new();
        let data = vec![(&w1, &lab_yes), (&w2, &lab_no)];
        let universe = vec![atom.clone()];
        let theta = HyperAssignment::default();
        let r = f1_scores(&always, &theta, &data, &universe, &NoClassifiers).unwrap();
        assert!((r.per_atom[&atom] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn decision_thresholds() {
        let t = Thresholds::default();
        assert_eq!(refine_decision(0.95, t), RefineDecision::Keep);
        assert_eq!(refine_decision(0.75, t), RefineDecision::OptimizeHypers);
        assert_eq!(refine_decision(0.5, t), RefineDecision::OracleRefine);
        // boundary semantics: thresholds are strict lower bounds
        assert_eq!(refine_decision(0.9, t), RefineDecision::Keep);
        assert_eq!(refine_decision(0.6, t), RefineDecision::OptimizeHypers);
    }

    #[test]
    fn no_relevant_atoms() {
        let never = parse_classifier("ghostly(p) := false", &NoClassifiers).unwrap();
        let w = world_with_gap(0.0);
        let lab = SymbolicState::new();
        let data = vec![(&w, &lab)];
        let universe = vec![GroundAtom::new("ghostly", vec!["p".into()])];
        let theta = HyperAssignment::default();
        let err = f1_scores(&never, &theta, &data, &universe, &NoClassifiers).unwrap_err();
        assert!(matches!(err, GroundingError::NoRelevantAtoms(_)));
    }
}
