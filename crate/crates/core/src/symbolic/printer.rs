use std::fmt::Write;

use super::types::{DomainModel, OperatorDef, Problem};

/// Canonical two-space-indented domain text. Predicate declarations and
/// operators are emitted sorted by name so output is bit-stable and
/// `parse(print(d))` is structurally equal to `d`.
pub fn print_domain(domain: &DomainModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    let _ = writeln!(
        out,
        "  (:requirements :strips :typing :negative-preconditions :equality)"
    );
    if !domain.types.parents.is_empty() {
        let _ = writeln!(out, "  (:types");
        for (ty, parent) in &domain.types.parents {
            let _ = writeln!(out, "    {} - {}", ty, parent);
        }
        let _ = writeln!(out, "  )");
    }
    if !domain.predicates.is_empty() {
        let _ = writeln!(out, "  (:predicates");
        for schema in domain.predicates.values() {
            let mut line = format!("    ({}", schema.name);
            for (var, ty) in &schema.params {
                let _ = write!(line, " ?{} - {}", var, ty);
            }
            line.push(')');
            let _ = writeln!(out, "{}", line);
        }
        let _ = writeln!(out, "  )");
    }
    for op in domain.operators.values() {
        print_operator_into(&mut out, op);
    }
    out.push(')');
    out.push('\n');
    out
}

fn print_operator_into(out: &mut String, op: &OperatorDef) {
    let _ = writeln!(out, "  (:action {}", op.name);
    let mut params = String::new();
    for (i, p) in op.params.iter().enumerate() {
        if i > 0 {
            params.push(' ');
        }
        let _ = write!(params, "{}", p);
    }
    let _ = writeln!(out, "    :parameters ({})", params);
    if op.precondition.is_empty() {
        let _ = writeln!(out, "    :precondition ()");
    } else {
        let mut cond = String::from("(and");
        for lit in &op.precondition {
            let _ = write!(cond, " {}", lit);
        }
        cond.push(')');
        let _ = writeln!(out, "    :precondition {}", cond);
    }
    if op.add_effects.is_empty() && op.del_effects.is_empty() {
        let _ = writeln!(out, "    :effect ()");
    } else {
        let mut eff = String::from("(and");
        for atom in &op.add_effects {
            let _ = write!(eff, " {}", atom);
        }
        for atom in &op.del_effects {
            let _ = write!(eff, " (not {})", atom);
        }
        eff.push(')');
        let _ = writeln!(out, "    :effect {}", eff);
    }
    let _ = writeln!(out, "  )");
}

/// Canonical text of a single operator block.
pub fn print_operator(op: &OperatorDef) -> String {
    let mut out = String::new();
    print_operator_into(&mut out, op);
    out
}

/// Canonical two-space-indented problem text; objects, init atoms and goal
/// literals are emitted in sorted order.
pub fn print_problem(problem: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.name);
    let _ = writeln!(out, "  (:domain {})", problem.domain_name);
    if !problem.objects.is_empty() {
        let _ = writeln!(out, "  (:objects");
        for (obj, ty) in &problem.objects {
            let _ = writeln!(out, "    {} - {}", obj, ty);
        }
        let _ = writeln!(out, "  )");
    }
    let _ = writeln!(out, "  (:init");
    for atom in problem.init.iter() {
        let _ = writeln!(out, "    {}", atom);
    }
    let _ = writeln!(out, "  )");
    let _ = writeln!(out, "  (:goal {})", problem.goal);
    out.push(')');
    out.push('\n');
    out
}
