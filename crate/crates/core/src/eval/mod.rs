//! Exploration-walk metric and the task-sequence learning harness.

mod ew;
mod learn;

pub use ew::{
    bootstrap_task_domain, canonical_name, canonicalize_domain, ew_score, harmonic_mean,
    sample_walk, walk_executable, EWConfig, EWReport, EvalError, TaskEW,
};
pub use learn::{
    run_learning, Backend, BudgetsManifest, EnvManifest, EwManifest, LearnManifest, PsiInitEntry,
    RunError, RunOptions, RunReport, TaskManifest, TaskReport,
};
