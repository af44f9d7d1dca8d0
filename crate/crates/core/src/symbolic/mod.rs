//! PDDL-subset data model, parser/printer and set algebra over symbolic states.
//!
//! The accepted fragment is STRIPS + `:typing` + `:negative-preconditions` +
//! `:equality`. Conditional effects and quantifiers are recognised but
//! rejected with [`PddlError::UnsupportedFeature`]. All values are immutable
//! after construction and safe to share across threads.

mod ops;
mod parser;
mod printer;
mod types;

pub use ops::{applicable, apply, apply_unchecked, goal_satisfied, state_diff, PreconditionViolation};
pub use parser::{
    parse_domain, parse_operator, parse_operator_lenient, parse_problem,
    parse_problem_with_warnings, PddlError,
};
pub use printer::{print_domain, print_operator, print_problem};
pub use types::{
    Action, DomainModel, EffectSet, Goal, GroundAtom, LiftedAtom, LiftedLiteral, OperatorDef,
    PredicateKind, PredicateSchema, Problem, SymbolicState, Term, TypeHierarchy, TypedParam,
};
