//! Command-line entry points: learning runs, exploration-walk scoring, plan
//! validation, classifier optimization and transcript replay.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use strata_core::envs::WorldState;
use strata_core::eval::{ew_score, run_learning, Backend, EWConfig, LearnManifest, RunOptions};
use strata_core::grounding::{optimize_hypers, ClassifierRegistry, SearchSpace, TransitionDataset};
use strata_core::hierarchy::Budgets;
use strata_core::planner::{validate_plan, Plan, Provenance, StepStatus};
use strata_core::symbolic::{parse_domain, parse_problem, GroundAtom};

#[derive(Parser)]
#[command(name = "strata", about = "Hierarchical domain-model learning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learning session over a task manifest.
    Learn {
        manifest: PathBuf,
        /// Oracle backend: replay, scripted or live.
        #[arg(long, default_value = "scripted")]
        oracle: String,
        /// Transcript file for the replay backend.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        budget_interactions: Option<u32>,
        #[arg(long)]
        budget_replans: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record every oracle exchange to this JSON-lines file.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Write the learned hierarchy, classifiers and dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the machine-readable run report here (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exploration-walk similarity between two domain files.
    Ew {
        learned: PathBuf,
        reference: PathBuf,
        /// Directory of task problem files (reference vocabulary).
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 500)]
        walks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Average the score over this many seeds.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
    /// Validate a plan file against a domain and problem (exit 0 when the
    /// plan is applicable and achieves the goal).
    Validate { domain: PathBuf, problem: PathBuf, plan: PathBuf },
    /// Classifier maintenance.
    Classify {
        #[command(subcommand)]
        command: ClassifyCommand,
    },
    /// Re-run a learning session offline from a recorded transcript.
    Replay {
        transcript: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClassifyCommand {
    /// Optimize every classifier's hyperparameters on a labeled dataset and
    /// update the registry manifest in place.
    Optimize {
        registry: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {:#}", err);
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Learn {
            manifest,
            oracle,
            transcript,
            budget_interactions,
            budget_replans,
            seed,
            record,
            out,
            report,
        } => {
            let backend = backend_from_flag(&oracle, transcript)?;
            let (manifest, base) = LearnManifest::load(&manifest)?;
            let budgets = match (budget_interactions, budget_replans) {
                (None, None) => None,
                (i, r) => Some(Budgets {
                    interactions: i
                        .or(manifest.budgets.as_ref().map(|b| b.interactions))
                        .unwrap_or(10),
                    replans: r.or(manifest.budgets.as_ref().map(|b| b.replans)).unwrap_or(20),
                    ..Budgets::default()
                }),
            };
            let run_report = run_learning(
                &manifest,
                &base,
                RunOptions { backend, budgets, seed, record_transcript: record, out_dir: out },
            )?;
            emit_report(&serde_json::to_value(&run_report)?, report.as_deref())?;
            Ok(if run_report.all_succeeded { 0 } else { 1 })
        }
        Command::Ew { learned, reference, tasks, walks, seed, repeats } => {
            let learned = parse_domain(&read(&learned)?)?;
            let reference_domain = parse_domain(&read(&reference)?)?;
            let mut problems = Vec::new();
            let mut entries: Vec<_> = std::fs::read_dir(&tasks)
                .with_context(|| format!("reading task dir {}", tasks.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "pddl"))
                .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().contains("domain")))
                .collect();
            entries.sort();
            for path in entries {
                problems.push(parse_problem(&read(&path)?, &reference_domain)?);
            }
            if problems.is_empty() {
                bail!("no task problems found in {}", tasks.display());
            }
            let mut aggregates = Vec::new();
            let mut last = None;
            for i in 0..repeats.max(1) {
                let cfg = EWConfig { walks, max_len: None, seed: seed + i };
                let ew = ew_score(&learned, &reference_domain, &problems, &cfg)?;
                aggregates.push(ew.aggregate);
                last = Some(ew);
            }
            let mean = aggregates.iter().sum::<f64>() / aggregates.len() as f64;
            let value = serde_json::json!({
                "aggregate": mean,
                "repeats": aggregates,
                "last_report": last,
            });
            emit_report(&value, None)?;
            Ok(0)
        }
        Command::Validate { domain, problem, plan } => {
            let domain = parse_domain(&read(&domain)?)?;
            let problem = parse_problem(&read(&problem)?, &domain)?;
            let plan = Plan::from_text(&read(&plan)?, Provenance::Search)?;
            let trace = validate_plan(&domain, &problem, &plan);
            for (i, step) in trace.steps.iter().enumerate() {
                match &step.status {
                    StepStatus::Ok => println!("step {}: ok {}", i + 1, step.action),
                    StepStatus::PreconditionFailure { missing } => {
                        println!("step {}: FAILED {} missing {:?}", i + 1, step.action, missing)
                    }
                }
            }
            println!(
                "plan {}, goal {}",
                if trace.is_valid() { "valid" } else { "invalid" },
                if trace.goal_achieved { "achieved" } else { "not achieved" }
            );
            Ok(if trace.is_valid() && trace.goal_achieved { 0 } else { 1 })
        }
        Command::Classify { command } => match command {
            ClassifyCommand::Optimize { registry, dataset, seed, samples } => {
                let mut reg = ClassifierRegistry::load(&registry)?;
                let data = TransitionDataset::from_jsonl(&read(&dataset)?)?;
                let states = data.labeled_states();
                let objects = collect_objects(&states);
                let names: Vec<String> = reg.names().cloned().collect();
                let mut summary = BTreeMap::new();
                for name in names {
                    let Some((program, _)) = reg.get(&name) else { continue };
                    if program.hypers.is_empty() {
                        continue;
                    }
                    let universe = universe_over(&name, program.arity(), &objects);
                    let mut space = SearchSpace::from_defaults(program, seed);
                    space.samples = samples;
                    match optimize_hypers(program, &states, &universe, &reg, &space) {
                        Ok(outcome) => {
                            summary.insert(
                                name.clone(),
                                serde_json::json!({
                                    "best": outcome.best.0,
                                    "f_avg": outcome.best_score,
                                }),
                            );
                            reg.set_current(&name, outcome.best)?;
                        }
                        Err(e) => {
                            summary.insert(
                                name.clone(),
                                serde_json::json!({"skipped": e.to_string()}),
                            );
                        }
                    }
                }
                reg.save(&registry)?;
                emit_report(&serde_json::json!({"optimized": summary}), None)?;
                Ok(0)
            }
        },
        Command::Replay { transcript, manifest, seed, report } => {
            let (manifest, base) = LearnManifest::load(&manifest)?;
            let run_report = run_learning(
                &manifest,
                &base,
                RunOptions {
                    backend: Backend::Replay(transcript),
                    budgets: None,
                    seed,
                    record_transcript: None,
                    out_dir: None,
                },
            )?;
            emit_report(&serde_json::to_value(&run_report)?, report.as_deref())?;
            Ok(if run_report.all_succeeded { 0 } else { 1 })
        }
    }
}

fn backend_from_flag(flag: &str, transcript: Option<PathBuf>) -> Result<Backend> {
    match flag {
        "scripted" => Ok(Backend::Scripted),
        "replay" => {
            let path = transcript.context("--oracle replay needs --transcript <file>")?;
            Ok(Backend::Replay(path))
        }
        "live" => live_backend(),
        other => bail!("unknown oracle backend `{}` (expected replay|scripted|live)", other),
    }
}

#[cfg(feature = "live-http")]
fn live_backend() -> Result<Backend> {
    use strata_core::oracle::{HttpTransport, LiveConfig, LiveOracle};
    let config = LiveConfig::from_env()?;
    Ok(Backend::Custom(Box::new(LiveOracle::new(config, HttpTransport))))
}

#[cfg(not(feature = "live-http"))]
fn live_backend() -> Result<Backend> {
    bail!("this build has no live transport; rebuild with --features live-http")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit_report(value: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{}", text),
    }
    Ok(())
}

fn collect_objects(
    states: &[(&WorldState, &strata_core::symbolic::SymbolicState)],
) -> Vec<String> {
    let mut out = std::collections::BTreeSet::new();
    for (world, _) in states {
        if let WorldState::Continuous(c) = world {
            out.extend(c.parts.keys().cloned());
            out.insert(c.robot.name.clone());
            out.insert(c.table.name.clone());
        }
    }
    out.into_iter().collect()
}

fn universe_over(predicate: &str, arity: usize, objects: &[String]) -> Vec<GroundAtom> {
    fn rec(
        predicate: &str,
        arity: usize,
        objects: &[String],
        buf: &mut Vec<String>,
        out: &mut Vec<GroundAtom>,
    ) {
        if buf.len() == arity {
            out.push(GroundAtom::new(predicate, buf.clone()));
            return;
        }
        for o in objects {
            buf.push(o.clone());
            rec(predicate, arity, objects, buf, out);
            buf.pop();
        }
    }
    let mut out = Vec::new();
    let mut buf = Vec::new();
    rec(predicate, arity, objects, &mut buf, &mut out);
    out
}
