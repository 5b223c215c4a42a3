use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a variable in [`ProgramIR::vars`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Input,
    Const(i64),
    /// Assigned by a statement.
    Named,
    /// Introduced while flattening an expression.
    Temp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Move,
}

impl Opcode {
    pub fn arity(self) -> usize {
        match self {
            Opcode::Move => 1,
            _ => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Opcode::Add => 0,
            Opcode::Sub => 1,
            Opcode::Mul => 2,
            Opcode::Move => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Opcode::Add,
            1 => Opcode::Sub,
            2 => Opcode::Mul,
            3 => Opcode::Move,
            _ => return None,
        })
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::Move => "MOVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dst: VarId,
    /// `opcode.arity()` operands.
    pub operands: Vec<VarId>,
}

/// Straight-line cycle body in single-assignment form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProgramIR {
    pub vars: Vec<Variable>,
    pub instructions: Vec<Instruction>,
    pub outputs: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    MissingInput(String),
    Overflow { instruction: usize },
}

impl ProgramIR {
    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(|i| VarId(i as u32))
    }

    pub fn inputs(&self) -> impl Iterator<Item = VarId> + '_ {
        self.ids_where(|k| matches!(k, VarKind::Input))
    }

    pub fn constants(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.vars.iter().enumerate().filter_map(|(i, v)| match v.kind {
            VarKind::Const(value) => Some((VarId(i as u32), value)),
            _ => None,
        })
    }

    fn ids_where<'a>(&'a self, pred: impl Fn(&VarKind) -> bool + 'a) -> impl Iterator<Item = VarId> + 'a {
        self.vars
            .iter()
            .enumerate()
            .filter(move |(_, v)| pred(&v.kind))
            .map(|(i, _)| VarId(i as u32))
    }

    /// Instruction index that defines `id`, if any.
    pub fn definition(&self, id: VarId) -> Option<usize> {
        self.instructions.iter().position(|ins| ins.dst == id)
    }

    /// Variables holding a value before instruction `pc` runs (inputs,
    /// constants and destinations of earlier instructions).
    pub fn live_before(&self, pc: usize) -> Vec<VarId> {
        let mut ids: Vec<VarId> = self
            .ids_where(|k| matches!(k, VarKind::Input | VarKind::Const(_)))
            .collect();
        ids.extend(
            self.instructions[..pc.min(self.instructions.len())]
                .iter()
                .map(|i| i.dst),
        );
        ids
    }

    /// Plain 64-bit interpretation with no coding, used as the reference for
    /// coded execution.
    pub fn evaluate(&self, inputs: &BTreeMap<String, i64>) -> Result<BTreeMap<String, i64>, EvalError> {
        let mut vals: Vec<Option<i64>> = vec![None; self.vars.len()];
        for (i, v) in self.vars.iter().enumerate() {
            match v.kind {
                VarKind::Input => {
                    vals[i] = Some(
                        *inputs
                            .get(&v.name)
                            .ok_or_else(|| EvalError::MissingInput(v.name.clone()))?,
                    )
                }
                VarKind::Const(c) => vals[i] = Some(c),
                _ => {}
            }
        }
        for (pc, ins) in self.instructions.iter().enumerate() {
            let a = vals[ins.operands[0].index()].expect("use before definition");
            let r = match ins.opcode {
                Opcode::Move => Some(a),
                op => {
                    let b = vals[ins.operands[1].index()].expect("use before definition");
                    match op {
                        Opcode::Add => a.checked_add(b),
                        Opcode::Sub => a.checked_sub(b),
                        Opcode::Mul => a.checked_mul(b),
                        Opcode::Move => unreachable!(),
                    }
                }
            };
            vals[ins.dst.index()] = Some(r.ok_or(EvalError::Overflow { instruction: pc })?);
        }
        Ok(self
            .outputs
            .iter()
            .map(|&o| (self.var(o).name.clone(), vals[o.index()].expect("output defined")))
            .collect())
    }

    /// Canonical byte encoding; input to the program digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.vars.len() as u32).to_be_bytes());
        for v in &self.vars {
            match v.kind {
                VarKind::Input => out.push(0),
                VarKind::Const(c) => {
                    out.push(1);
                    out.extend(c.to_be_bytes());
                }
                VarKind::Named => out.push(2),
                VarKind::Temp => out.push(3),
            }
            out.extend((v.name.len() as u16).to_be_bytes());
            out.extend(v.name.as_bytes());
        }
        out.extend((self.instructions.len() as u32).to_be_bytes());
        for ins in &self.instructions {
            out.push(ins.opcode.code());
            out.extend(ins.dst.0.to_be_bytes());
            for op in &ins.operands {
                out.extend(op.0.to_be_bytes());
            }
        }
        out.extend((self.outputs.len() as u32).to_be_bytes());
        for o in &self.outputs {
            out.extend(o.0.to_be_bytes());
        }
        out
    }

    /// Checks the structural invariants the parser guarantees: operand
    /// arity, use after definition, single assignment, outputs defined.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.vars.len();
        let mut defined: Vec<bool> = self
            .vars
            .iter()
            .map(|v| matches!(v.kind, VarKind::Input | VarKind::Const(_)))
            .collect();
        for (pc, ins) in self.instructions.iter().enumerate() {
            if ins.operands.len() != ins.opcode.arity() {
                return Err(format!("instruction {pc}: wrong operand count"));
            }
            for op in &ins.operands {
                if op.index() >= n || !defined[op.index()] {
                    return Err(format!("instruction {pc}: operand {op} used before definition"));
                }
            }
            if ins.dst.index() >= n || defined[ins.dst.index()] {
                return Err(format!("instruction {pc}: destination {} redefined", ins.dst));
            }
            if !matches!(self.vars[ins.dst.index()].kind, VarKind::Named | VarKind::Temp) {
                return Err(format!("instruction {pc}: destination is an input or constant"));
            }
            defined[ins.dst.index()] = true;
        }
        for o in &self.outputs {
            if o.index() >= n || !defined[o.index()] {
                return Err(format!("output {o} never defined"));
            }
        }
        Ok(())
    }
}
