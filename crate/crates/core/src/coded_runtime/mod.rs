//! Cyclic execution of a coded program with end-of-cycle checks, and the
//! fault-injection engine used to measure what those checks catch.
//!
//! Inputs and constants are encoded at the cycle date on entry; that
//! boundary is trusted. Faults act on the coded state afterwards.

mod campaign;
mod fault;

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coded_core::{
    check, encode, opel_add, opel_move, opel_mul, opel_sub, CodeKey, CodedValue, CycleDate, Verdict,
};
use crate::sigtool::{CodedProgram, FoldedConstants, InstructionConstants, Opcode, SignatureTable, VarId, VarKind};

pub use campaign::{run_campaign, CampaignConfig, InjectionReport, InputGenerator, ModelCounts, TrialOutcome};
pub use fault::{inject_fault, FaultModel, FaultSpec, Target, Timing};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("no value supplied for input `{0}`")]
    MissingInput(String),
    #[error("signature table does not belong to this program or key")]
    TableMismatch,
    #[error("fault target cannot be resolved: {0}")]
    UnresolvableTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CheckPolicy {
    /// Check declared outputs once, at cycle end.
    #[default]
    OutputsOnly,
    /// Additionally check each destination right after it is written.
    EveryInstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaltReason {
    FunctionalOverflow { instruction: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleVerdict {
    Accept,
    /// Variables whose check failed.
    Reject {
        failed: Vec<VarId>,
    },
    SafeHalt(HaltReason),
}

impl CycleVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, CycleVerdict::Accept)
    }
}

/// Result of a cycle. `outputs` is empty unless the verdict is `Accept`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleResult {
    pub outputs: BTreeMap<String, i64>,
    pub verdict: CycleVerdict,
}

/// Coded values of all variables at one point of a cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleState {
    pub values: Vec<Option<CodedValue>>,
    pub date: CycleDate,
    pub failed: Vec<VarId>,
}

impl CycleState {
    pub fn get(&self, id: VarId) -> Option<CodedValue> {
        self.values.get(id.index()).copied().flatten()
    }
}

/// What a fault does to a state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Change {
    FlipFunctional(u32),
    FlipCode(u32),
    Replace(CodedValue),
}

/// A fault resolved to one concrete mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// Applied to `var` just before instruction `point` runs; `point` equal
    /// to the instruction count means just before the end checks.
    State { point: usize, var: VarId, change: Change },
    /// Instruction reads `with` in place of its operand `operand`.
    Operand {
        instruction: usize,
        operand: usize,
        with: VarId,
    },
    /// The `index`-th stored constant of `instruction` holds `value`.
    Constant {
        instruction: usize,
        index: usize,
        value: u64,
    },
}

pub struct Executor<'a> {
    program: &'a CodedProgram,
    table: &'a SignatureTable,
    key: CodeKey,
    policy: CheckPolicy,
}

impl<'a> Executor<'a> {
    pub fn new(program: &'a CodedProgram, table: &'a SignatureTable, key: &CodeKey) -> Result<Self, RuntimeError> {
        if table.key() != key
            || table.len() != program.ir.vars.len()
            || program.constants.len() != program.ir.instructions.len()
        {
            return Err(RuntimeError::TableMismatch);
        }
        Ok(Executor {
            program,
            table,
            key: *key,
            policy: CheckPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: CheckPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn program(&self) -> &CodedProgram {
        self.program
    }

    pub fn key(&self) -> &CodeKey {
        &self.key
    }

    fn sig(&self, id: VarId) -> crate::coded_core::Signature {
        self.table.get(id).expect("table covers program")
    }

    /// Entry state: inputs and constants encoded at `date`.
    pub fn initial_state(&self, inputs: &BTreeMap<String, i64>, date: CycleDate) -> Result<CycleState, RuntimeError> {
        let ir = &self.program.ir;
        let mut values = vec![None; ir.vars.len()];
        for (i, v) in ir.vars.iter().enumerate() {
            let x = match v.kind {
                VarKind::Input => *inputs
                    .get(&v.name)
                    .ok_or_else(|| RuntimeError::MissingInput(v.name.clone()))?,
                VarKind::Const(c) => c,
                _ => continue,
            };
            values[i] = Some(encode(x, self.sig(VarId(i as u32)), date, &self.key));
        }
        Ok(CycleState {
            values,
            date,
            failed: Vec::new(),
        })
    }

    /// Runs the state up to (not including) instruction `stop`, returning
    /// the halt reason if an OPEL overflowed.
    #[allow(clippy::needless_range_loop)]
    fn advance(
        &self,
        state: &mut CycleState,
        start: usize,
        stop: usize,
        mutation: Option<&Mutation>,
        constants: &[InstructionConstants],
    ) -> Result<Option<CycleVerdict>, RuntimeError> {
        for pc in start..stop {
            if let Some(Mutation::State { point, var, change }) = mutation {
                if *point == pc {
                    apply_change(state, *var, *change)?;
                }
            }
            let ins = &self.program.ir.instructions[pc];
            let read = |k: usize| -> Result<CodedValue, RuntimeError> {
                let id = match mutation {
                    Some(Mutation::Operand {
                        instruction,
                        operand,
                        with,
                    }) if *instruction == pc && *operand == k => *with,
                    _ => ins.operands[k],
                };
                state.get(id).ok_or_else(|| {
                    RuntimeError::UnresolvableTarget(format!("variable {id} not live at instruction {pc}"))
                })
            };
            let folded = constants[pc].at_date(ins.opcode, state.date, &self.key);
            let result = match (ins.opcode, folded) {
                (Opcode::Move, FoldedConstants::Linear(k)) => Ok(opel_move(read(0)?, k, &self.key)),
                (Opcode::Add, FoldedConstants::Linear(k)) => opel_add(read(0)?, read(1)?, k, &self.key),
                (Opcode::Sub, FoldedConstants::Linear(k)) => opel_sub(read(0)?, read(1)?, k, &self.key),
                (Opcode::Mul, FoldedConstants::Product { t1, t2, kappa }) => {
                    opel_mul(read(0)?, read(1)?, t1, t2, kappa, &self.key)
                }
                _ => return Err(RuntimeError::TableMismatch),
            };
            let Ok(value) = result else {
                return Ok(Some(CycleVerdict::SafeHalt(HaltReason::FunctionalOverflow {
                    instruction: pc,
                })));
            };
            state.values[ins.dst.index()] = Some(value);
            if self.policy == CheckPolicy::EveryInstruction
                && check(value, self.sig(ins.dst), state.date, &self.key) == Verdict::Reject
            {
                state.failed.push(ins.dst);
                return Ok(Some(CycleVerdict::Reject {
                    failed: state.failed.clone(),
                }));
            }
        }
        Ok(None)
    }

    /// Fault-free state after executing the first `upto` instructions.
    pub fn state_at(
        &self,
        inputs: &BTreeMap<String, i64>,
        date: CycleDate,
        upto: usize,
    ) -> Result<Option<CycleState>, RuntimeError> {
        let mut state = self.initial_state(inputs, date)?;
        let n = upto.min(self.program.ir.instructions.len());
        Ok(match self.advance(&mut state, 0, n, None, &self.program.constants)? {
            None => Some(state),
            Some(_) => None,
        })
    }

    /// One cycle, optionally under a single mutation.
    pub fn execute(
        &self,
        inputs: &BTreeMap<String, i64>,
        date: CycleDate,
        mutation: Option<&Mutation>,
    ) -> Result<CycleResult, RuntimeError> {
        let ir = &self.program.ir;
        let n = ir.instructions.len();
        let constants: Cow<[InstructionConstants]> = match mutation {
            Some(&Mutation::Constant {
                instruction,
                index,
                value,
            }) => {
                let mut owned = self.program.constants.clone();
                let target = owned
                    .get_mut(instruction)
                    .ok_or_else(|| RuntimeError::UnresolvableTarget(format!("no instruction {instruction}")))?;
                if index >= target.values().len() {
                    return Err(RuntimeError::UnresolvableTarget(format!(
                        "instruction {instruction} has no constant {index}"
                    )));
                }
                *target = target.with_value(index, value);
                Cow::Owned(owned)
            }
            _ => Cow::Borrowed(&self.program.constants),
        };
        let mut state = self.initial_state(inputs, date)?;
        if let Some(verdict) = self.advance(&mut state, 0, n, mutation, &constants)? {
            return Ok(CycleResult {
                outputs: BTreeMap::new(),
                verdict,
            });
        }
        if let Some(Mutation::State { point, var, change }) = mutation {
            if *point == n {
                apply_change(&mut state, *var, *change)?;
            }
        }
        for &o in &ir.outputs {
            let v = state.get(o).expect("outputs are defined");
            if check(v, self.sig(o), date, &self.key) == Verdict::Reject && !state.failed.contains(&o) {
                state.failed.push(o);
            }
        }
        if !state.failed.is_empty() {
            return Ok(CycleResult {
                outputs: BTreeMap::new(),
                verdict: CycleVerdict::Reject { failed: state.failed },
            });
        }
        Ok(CycleResult {
            outputs: ir
                .outputs
                .iter()
                .map(|&o| (ir.var(o).name.clone(), state.get(o).unwrap().x))
                .collect(),
            verdict: CycleVerdict::Accept,
        })
    }
}

fn apply_change(state: &mut CycleState, var: VarId, change: Change) -> Result<(), RuntimeError> {
    let slot = state
        .values
        .get_mut(var.index())
        .and_then(Option::as_mut)
        .ok_or_else(|| RuntimeError::UnresolvableTarget(format!("variable {var} not live")))?;
    match change {
        Change::FlipFunctional(bit) => slot.x ^= 1i64 << bit,
        Change::FlipCode(bit) => slot.c ^= 1u64 << bit,
        Change::Replace(v) => *slot = v,
    }
    Ok(())
}

/// Executes one fault-free cycle at `date`.
pub fn run_cycle(
    program: &CodedProgram,
    table: &SignatureTable,
    inputs: &BTreeMap<String, i64>,
    date: CycleDate,
    key: &CodeKey,
) -> Result<CycleResult, RuntimeError> {
    Executor::new(program, table, key)?.execute(inputs, date, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigtool::{parse_program, predetermine, sign_source};

    fn inputs(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn signed(src: &str, a: u64, seed: u64) -> (SignatureTable, CodedProgram, CodeKey) {
        let key = CodeKey::new(a).unwrap();
        let (t, p) = sign_source(src, &key, seed).unwrap();
        (t, p, key)
    }

    #[test]
    fn product_example() {
        let src = "input a; input b; const k = 4; out = (a + b) * k; output out;";
        for seed in 0..10 {
            let (t, p, key) = signed(src, 13, seed);
            let r = run_cycle(&p, &t, &inputs(&[("a", 2), ("b", 3)]), key.date(5), &key).unwrap();
            assert_eq!(r.verdict, CycleVerdict::Accept);
            assert_eq!(r.outputs, inputs(&[("out", 20)]));
        }
    }

    #[test]
    fn empty_program_accepts() {
        let (t, p, key) = signed("", 251, 0);
        let r = run_cycle(&p, &t, &BTreeMap::new(), key.date(0), &key).unwrap();
        assert_eq!(
            r,
            CycleResult {
                outputs: BTreeMap::new(),
                verdict: CycleVerdict::Accept
            }
        );
    }

    #[test]
    fn stale_inputs_are_rejected() {
        let (t, p, key) = signed(crate::SAMPLE_PROGRAM, 13, 2);
        let exec = Executor::new(&p, &t, &key).unwrap();
        let ins = inputs(&[("a", 9), ("b", 4)]);
        let date = key.date(7);
        // Every value of the previous cycle substitutes its current one.
        let old = exec.state_at(&ins, key.date(6), usize::MAX).unwrap().unwrap();
        let sum = p.ir.lookup("sum").unwrap();
        let m = Mutation::State {
            point: p.ir.instructions.len(),
            var: sum,
            change: Change::Replace(old.get(sum).unwrap()),
        };
        let r = exec.execute(&ins, date, Some(&m)).unwrap();
        assert_eq!(r.verdict, CycleVerdict::Reject { failed: vec![sum] });
        assert!(r.outputs.is_empty());
    }

    #[test]
    fn missing_input_and_table_mismatch() {
        let (t, p, key) = signed(crate::SAMPLE_PROGRAM, 13, 2);
        assert_eq!(
            run_cycle(&p, &t, &inputs(&[("a", 1)]), key.date(0), &key),
            Err(RuntimeError::MissingInput("b".into()))
        );
        let other = CodeKey::new(17).unwrap();
        assert_eq!(
            run_cycle(&p, &t, &inputs(&[("a", 1), ("b", 2)]), other.date(0), &other),
            Err(RuntimeError::TableMismatch)
        );
    }

    #[test]
    fn overflow_halts_without_outputs() {
        let (t, p, key) = signed("input a; b = a * a; output b;", 251, 0);
        let r = run_cycle(&p, &t, &inputs(&[("a", i64::MAX)]), key.date(0), &key).unwrap();
        assert_eq!(
            r.verdict,
            CycleVerdict::SafeHalt(HaltReason::FunctionalOverflow { instruction: 0 })
        );
        assert!(r.outputs.is_empty());
    }

    #[test]
    fn every_instruction_policy_stops_at_first_bad_write() {
        let (t, p, key) = signed(crate::SAMPLE_PROGRAM, 251, 4);
        let exec = Executor::new(&p, &t, &key)
            .unwrap()
            .with_policy(CheckPolicy::EveryInstruction);
        let a = p.ir.lookup("a").unwrap();
        let m = Mutation::State {
            point: 0,
            var: a,
            change: Change::FlipFunctional(3),
        };
        let r = exec
            .execute(&inputs(&[("a", 1), ("b", 2)]), key.date(1), Some(&m))
            .unwrap();
        assert_eq!(
            r.verdict,
            CycleVerdict::Reject {
                failed: vec![p.ir.instructions[0].dst]
            }
        );
    }

    #[test]
    fn constant_mutation_is_detected() {
        let (t, p, key) = signed("input a; input b; s = a + b; output s;", 13, 1);
        let exec = Executor::new(&p, &t, &key).unwrap();
        let orig = p.constants[0].values()[0];
        let m = Mutation::Constant {
            instruction: 0,
            index: 0,
            value: (orig + 1) % 13,
        };
        let r = exec
            .execute(&inputs(&[("a", 3), ("b", 4)]), key.date(2), Some(&m))
            .unwrap();
        assert!(matches!(r.verdict, CycleVerdict::Reject { .. }));
    }

    #[test]
    fn substitution_with_equal_signature_goes_unnoticed() {
        let key = CodeKey::new(13).unwrap();
        let ir = parse_program("input a; input b; input c; s = a + b; output s;").unwrap();
        let sigs = [3, 8, 3, 1].map(|v| key.signature(v).unwrap()).to_vec();
        let table = SignatureTable::from_parts(key, 0, crate::sigtool::program_digest(&ir), sigs);
        let p = predetermine(&ir, &table, &key).unwrap();
        let exec = Executor::new(&p, &table, &key).unwrap();
        let ins = inputs(&[("a", 1), ("b", 2), ("c", 10)]);
        let m = Mutation::Operand {
            instruction: 0,
            operand: 0,
            with: ir.lookup("c").unwrap(),
        };
        let r = exec.execute(&ins, key.date(0), Some(&m)).unwrap();
        assert_eq!(r.verdict, CycleVerdict::Accept);
        assert_eq!(r.outputs["s"], 12);

        let m = Mutation::Operand {
            instruction: 0,
            operand: 0,
            with: ir.lookup("b").unwrap(),
        };
        assert!(!exec.execute(&ins, key.date(0), Some(&m)).unwrap().verdict.is_accept());
    }
}
