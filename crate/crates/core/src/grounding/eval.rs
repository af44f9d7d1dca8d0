//! Classifier evaluation over continuous world states.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::envs::{angle_diff, ContinuousState, WorldState};
use crate::symbolic::GroundAtom;

use super::dsl::{
    accessor, BinOp, ClassifierLookup, ClassifierProgram, Expr, HyperAssignment, UnaryOp,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("object `{0}` not present in the world state")]
    MissingObject(String),
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("classifier `{0}` is not registered")]
    UnknownClassifier(String),
    #[error("atom arity mismatch for `{predicate}`: classifier takes {expected}, atom has {found}")]
    Arity { predicate: String, expected: usize, found: usize },
    #[error("classifiers evaluate continuous states only")]
    DiscreteState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    fn num(self) -> Result<f64, EvalError> {
        match self {
            Value::Num(n) => Ok(n),
            Value::Bool(_) => Err(EvalError::NumericDomain("expected number, got bool".into())),
        }
    }

    fn boolean(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Num(_) => Err(EvalError::NumericDomain("expected bool, got number".into())),
        }
    }
}

/// Evaluate `program` on `atom` in world state `world` under hyperparameters
/// `theta`. Pure: identical inputs always produce identical results.
/// Referenced sub-classifiers are evaluated with their own current
/// assignments from `registry`.
pub fn eval_classifier(
    program: &ClassifierProgram,
    atom: &GroundAtom,
    world: &WorldState,
    theta: &HyperAssignment,
    registry: &dyn ClassifierLookup,
) -> Result<bool, EvalError> {
    let continuous = match world {
        WorldState::Continuous(c) => c,
        WorldState::Discrete(_) => return Err(EvalError::DiscreteState),
    };
    if atom.args.len() != program.arity() {
        return Err(EvalError::Arity {
            predicate: program.predicate.clone(),
            expected: program.arity(),
            found: atom.args.len(),
        });
    }
    let env: BTreeMap<&str, &str> = program
        .params
        .iter()
        .map(|p| p.as_str())
        .zip(atom.args.iter().map(|a| a.as_str()))
        .collect();
    eval_expr(&program.body, &env, continuous, theta, registry)?.boolean()
}

fn object_name<'a>(
    expr: &'a Expr,
    env: &BTreeMap<&str, &'a str>,
) -> Result<&'a str, EvalError> {
    match expr {
        Expr::Param(p) => env
            .get(p.as_str())
            .copied()
            .ok_or_else(|| EvalError::MissingObject(p.clone())),
        _ => Err(EvalError::NumericDomain("expected an object reference".into())),
    }
}

fn eval_expr(
    expr: &Expr,
    env: &BTreeMap<&str, &str>,
    world: &ContinuousState,
    theta: &HyperAssignment,
    registry: &dyn ClassifierLookup,
) -> Result<Value, EvalError> {
    match expr {
        Expr::Num(n) => Ok(Value::Num(*n)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Param(p) => Err(EvalError::NumericDomain(format!(
            "object parameter `{}` used as a value",
            p
        ))),
        Expr::Hyper(h) => theta
            .get(h)
            .map(Value::Num)
            .ok_or_else(|| EvalError::NumericDomain(format!("hyperparameter `{}` unassigned", h))),
        Expr::Unary { op, expr } => {
            let v = eval_expr(expr, env, world, theta, registry)?;
            match op {
                UnaryOp::Neg => Ok(Value::Num(-v.num()?)),
                UnaryOp::Abs => Ok(Value::Num(v.num()?.abs())),
                UnaryOp::Not => Ok(Value::Bool(!v.boolean()?)),
            }
        }
        Expr::Binary { op, left, right } => {
            // short-circuit boolean ops
            match op {
                BinOp::And => {
                    let l = eval_expr(left, env, world, theta, registry)?.boolean()?;
                    if !l {
                        return Ok(Value::Bool(false));
                    }
                    return Ok(Value::Bool(
                        eval_expr(right, env, world, theta, registry)?.boolean()?,
                    ));
                }
                BinOp::Or => {
                    let l = eval_expr(left, env, world, theta, registry)?.boolean()?;
                    if l {
                        return Ok(Value::Bool(true));
                    }
                    return Ok(Value::Bool(
                        eval_expr(right, env, world, theta, registry)?.boolean()?,
                    ));
                }
                _ => {}
            }
            let l = eval_expr(left, env, world, theta, registry)?.num()?;
            let r = eval_expr(right, env, world, theta, registry)?.num()?;
            let v = match op {
                BinOp::Add => Value::Num(l + r),
                BinOp::Sub => Value::Num(l - r),
                BinOp::Mul => Value::Num(l * r),
                BinOp::Div => {
                    if r == 0.0 {
                        return Err(EvalError::NumericDomain("division by zero".into()));
                    }
                    Value::Num(l / r)
                }
                BinOp::Le => Value::Bool(l <= r),
                BinOp::Lt => Value::Bool(l < r),
                BinOp::Ge => Value::Bool(l >= r),
                BinOp::Gt => Value::Bool(l > r),
                BinOp::EqCmp => Value::Bool(l == r),
                BinOp::NeCmp => Value::Bool(l != r),
                BinOp::And | BinOp::Or => unreachable!(),
            };
            Ok(v)
        }
        Expr::Call { name, args } => {
            if accessor(name).is_some() {
                return eval_accessor(name, args, env, world, theta, registry);
            }
            let sub = registry
                .lookup(name)
                .ok_or_else(|| EvalError::UnknownClassifier(name.clone()))?;
            let sub_theta = registry
                .current_assignment(name)
                .cloned()
                .unwrap_or_else(|| sub.default_assignment());
            let mut bound = Vec::with_capacity(args.len());
            for a in args {
                bound.push(object_name(a, env)?.to_string());
            }
            let atom = GroundAtom::new(name.clone(), bound);
            eval_classifier(sub, &atom, &WorldState::Continuous(world.clone()), &sub_theta, registry)
                .map(Value::Bool)
        }
    }
}

fn eval_accessor(
    name: &str,
    args: &[Expr],
    env: &BTreeMap<&str, &str>,
    world: &ContinuousState,
    theta: &HyperAssignment,
    registry: &dyn ClassifierLookup,
) -> Result<Value, EvalError> {
    let part = |obj: &str| -> Result<crate::envs::PoseRecord, EvalError> {
        world
            .parts
            .get(obj)
            .cloned()
            .ok_or_else(|| EvalError::NumericDomain(format!("`{}` has no part pose", obj)))
    };
    let center = |obj: &str| -> Result<[f64; 3], EvalError> {
        world.center_of(obj).ok_or_else(|| EvalError::MissingObject(obj.to_string()))
    };
    let check_exists = |obj: &str| -> Result<(), EvalError> {
        if world.parts.contains_key(obj) || obj == world.robot.name || obj == world.table.name {
            Ok(())
        } else {
            Err(EvalError::MissingObject(obj.to_string()))
        }
    };
    match name {
        "pos_x" | "pos_y" | "pos_z" => {
            let obj = object_name(&args[0], env)?;
            check_exists(obj)?;
            let c = center(obj)?;
            let i = match name {
                "pos_x" => 0,
                "pos_y" => 1,
                _ => 2,
            };
            Ok(Value::Num(c[i]))
        }
        "roll" | "pitch" | "yaw" => {
            let obj = object_name(&args[0], env)?;
            check_exists(obj)?;
            let p = part(obj)?;
            let i = match name {
                "roll" => 0,
                "pitch" => 1,
                _ => 2,
            };
            Ok(Value::Num(p.orientation[i]))
        }
        "bb_min_x" | "bb_min_y" | "bb_min_z" | "bb_max_x" | "bb_max_y" | "bb_max_z" | "top_z"
        | "bottom_z" => {
            let obj = object_name(&args[0], env)?;
            check_exists(obj)?;
            let p = part(obj)?;
            let v = match name {
                "bb_min_x" => p.bbox_min[0],
                "bb_min_y" => p.bbox_min[1],
                "bb_min_z" | "bottom_z" => p.bbox_min[2],
                "bb_max_x" => p.bbox_max[0],
                "bb_max_y" => p.bbox_max[1],
                _ => p.bbox_max[2],
            };
            Ok(Value::Num(v))
        }
        "surface_z" => {
            let obj = object_name(&args[0], env)?;
            if obj != world.table.name {
                return Err(EvalError::NumericDomain(format!("`{}` is not the table", obj)));
            }
            Ok(Value::Num(world.table.surface_z))
        }
        "gripper_is_closed" => {
            let obj = object_name(&args[0], env)?;
            if obj != world.robot.name {
                return Err(EvalError::NumericDomain(format!("`{}` is not the robot", obj)));
            }
            Ok(Value::Bool(world.robot.gripper_closed))
        }
        "dist_xy" | "dist_xyz" => {
            let a = center(object_name(&args[0], env)?)?;
            let b = center(object_name(&args[1], env)?)?;
            let mut d = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            if name == "dist_xyz" {
                d += (a[2] - b[2]).powi(2);
            }
            Ok(Value::Num(d.sqrt()))
        }
        "angle_diff" => {
            let a = eval_expr(&args[0], env, world, theta, registry)?.num()?;
            let b = eval_expr(&args[1], env, world, theta, registry)?.num()?;
            Ok(Value::Num(angle_diff(a, b)))
        }
        "abs" => {
            let v = eval_expr(&args[0], env, world, theta, registry)?.num()?;
            Ok(Value::Num(v.abs()))
        }
        "min" | "max" => {
            let a = eval_expr(&args[0], env, world, theta, registry)?.num()?;
            let b = eval_expr(&args[1], env, world, theta, registry)?.num()?;
            Ok(Value::Num(if name == "min" { a.min(b) } else { a.max(b) }))
        }
        other => Err(EvalError::UnknownClassifier(other.to_string())),
    }
}
