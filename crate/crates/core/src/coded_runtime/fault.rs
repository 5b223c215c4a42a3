use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Change, Executor, Mutation, RuntimeError};
use crate::coded_core::{CodedValue, CycleDate};
use crate::rng::uniform_below;
use crate::sigtool::VarId;

/// Accidental fault classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultModel {
    /// One bit of a functional field flips.
    F1,
    /// One bit of a code field flips.
    F2,
    /// An operand is read from the wrong variable (address error).
    F3,
    /// A variable holds its value from an earlier cycle.
    F4,
    /// A stored compensation constant is wrong (tool or compilation fault).
    F5,
    /// Both fields of a variable are replaced by random values.
    F6,
}

impl FaultModel {
    pub const ALL: [FaultModel; 6] = [
        FaultModel::F1,
        FaultModel::F2,
        FaultModel::F3,
        FaultModel::F4,
        FaultModel::F5,
        FaultModel::F6,
    ];
}

impl fmt::Display for FaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for FaultModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultModel::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fault model `{s}` (expected F1..F6)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Random,
    Variable(VarId),
    /// For state faults, the instruction's destination.
    Instruction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    Random,
    BeforeInstruction(usize),
    AfterInstruction(usize),
    BeforeCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub model: FaultModel,
    pub target: Target,
    pub timing: Timing,
    /// Cycles between the stale value and the current cycle (F4 only).
    pub age: u64,
}

impl FaultSpec {
    pub fn new(model: FaultModel) -> Self {
        FaultSpec {
            model,
            target: Target::Random,
            timing: Timing::Random,
            age: 1,
        }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn with_timing(mut self, timing: Timing) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_age(mut self, age: u64) -> Self {
        self.age = age;
        self
    }
}

fn unresolvable(msg: impl Into<String>) -> RuntimeError {
    RuntimeError::UnresolvableTarget(msg.into())
}

fn pick<T: Copy, R: RngCore + ?Sized>(rng: &mut R, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[uniform_below(rng, items.len() as u64) as usize])
    }
}

/// Resolves `spec` against one cycle into a single concrete mutation.
pub fn inject_fault<R: RngCore + ?Sized>(
    exec: &Executor<'_>,
    inputs: &BTreeMap<String, i64>,
    date: CycleDate,
    spec: &FaultSpec,
    rng: &mut R,
) -> Result<Mutation, RuntimeError> {
    let ir = &exec.program().ir;
    let key = exec.key();
    let n = ir.instructions.len();

    let instruction = |rng: &mut R| -> Result<usize, RuntimeError> {
        match spec.target {
            Target::Instruction(i) if i < n => Ok(i),
            Target::Instruction(i) => Err(unresolvable(format!("no instruction {i}"))),
            Target::Random => {
                pick(rng, &(0..n).collect::<Vec<_>>()).ok_or_else(|| unresolvable("program has no instructions"))
            }
            Target::Variable(v) => ir
                .definition(v)
                .ok_or_else(|| unresolvable(format!("{v} is not defined by an instruction"))),
        }
    };

    match spec.model {
        FaultModel::F3 => {
            let pc = instruction(rng)?;
            let ins = &ir.instructions[pc];
            let operand = uniform_below(rng, ins.operands.len() as u64) as usize;
            let others: Vec<VarId> = ir
                .live_before(pc)
                .into_iter()
                .filter(|&v| v != ins.operands[operand])
                .collect();
            let with =
                pick(rng, &others).ok_or_else(|| unresolvable(format!("no substitute live at instruction {pc}")))?;
            Ok(Mutation::Operand {
                instruction: pc,
                operand,
                with,
            })
        }
        FaultModel::F5 => {
            let pc = instruction(rng)?;
            let values = exec.program().constants[pc].values();
            let index = uniform_below(rng, values.len() as u64) as usize;
            let r = uniform_below(rng, key.modulus() - 1);
            let value = if r >= values[index] { r + 1 } else { r };
            Ok(Mutation::Constant {
                instruction: pc,
                index,
                value,
            })
        }
        model => {
            let point = match spec.timing {
                Timing::Random => uniform_below(rng, n as u64 + 1) as usize,
                Timing::BeforeInstruction(i) if i < n => i,
                Timing::AfterInstruction(i) if i < n => i + 1,
                Timing::BeforeCheck => n,
                t => return Err(unresolvable(format!("timing {t:?} outside the program"))),
            };
            let live = ir.live_before(point);
            let var = match spec.target {
                Target::Random => {
                    pick(rng, &live).ok_or_else(|| unresolvable(format!("nothing live at point {point}")))?
                }
                Target::Variable(v) => v,
                Target::Instruction(i) if i < n => ir.instructions[i].dst,
                Target::Instruction(i) => return Err(unresolvable(format!("no instruction {i}"))),
            };
            if !live.contains(&var) {
                return Err(unresolvable(format!("{var} is not live at point {point}")));
            }
            let change = match model {
                FaultModel::F1 => Change::FlipFunctional(uniform_below(rng, 64) as u32),
                FaultModel::F2 => Change::FlipCode(uniform_below(rng, key.bit_width() as u64) as u32),
                FaultModel::F6 => Change::Replace(CodedValue::new(
                    rng.next_u64() as i64,
                    uniform_below(rng, key.modulus()),
                )),
                FaultModel::F4 => {
                    let cycle = date
                        .cycle()
                        .checked_sub(spec.age)
                        .filter(|_| spec.age > 0)
                        .ok_or_else(|| unresolvable(format!("no cycle {} before cycle {}", spec.age, date.cycle())))?;
                    let old = exec
                        .state_at(inputs, key.date(cycle), point)?
                        .and_then(|s| s.get(var))
                        .ok_or_else(|| unresolvable("earlier cycle halted before the target point"))?;
                    Change::Replace(old)
                }
                FaultModel::F3 | FaultModel::F5 => unreachable!(),
            };
            Ok(Mutation::State { point, var, change })
        }
    }
}
