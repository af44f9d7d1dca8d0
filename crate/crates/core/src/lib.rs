//! Strata: hierarchical symbolic domain-model learning with simulated grounding.
//!
//! The crate is organised around the learning loop: an oracle proposes a
//! domain model, a planner produces candidate plans, plans are decomposed
//! level by level into executable skills, every leaf skill is verified
//! against a simulated environment through predicate classifiers, and
//! verification failures are converted into targeted repairs.
//!
//! - [`symbolic`]: PDDL-subset data model, parser/printer and state algebra
//! - [`planner`]: forward-search planner and plan validator
//! - [`hierarchy`]: recursive operator decomposition and level alignment
//! - [`grounding`]: classifier expression language, pseudo-labelled datasets,
//!   F1 scoring and hyperparameter search
//! - [`verify`]: motion verification and the global recovery module
//! - [`oracle`]: prompt building, response parsing, replay / scripted / live
//!   backends
//! - [`envs`]: deterministic discrete and continuous simulators
//! - [`eval`]: exploration-walk metric and the learning harness

pub mod envs;
pub mod eval;
pub mod grounding;
pub mod hierarchy;
pub mod oracle;
pub mod planner;
pub mod symbolic;
pub mod verify;
