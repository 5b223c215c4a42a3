//! PROM image: `"VCPROM1"`, version, key, seed, program digest, then three
//! length-prefixed sections (canonical IR, signatures, constants). All
//! integers big-endian, no padding.
//!
//! Loading re-derives everything derivable: the digest from the IR, the
//! signatures from `(key, seed)` and the constants from the signatures. Any
//! disagreement is an error, so a corrupted image cannot load silently.

use thiserror::Error;

use super::ir::{Instruction, Opcode, ProgramIR, VarId, VarKind, Variable};
use super::{assign_signatures, predetermine, program_digest, CodedProgram, SignatureTable};
use crate::coded_core::{CodeKey, CodedError};
use crate::mac::{Digest, DIGEST_LEN};

pub const PROM_MAGIC: &[u8; 7] = b"VCPROM1";
pub const PROM_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromError {
    #[error("not a PROM image")]
    BadMagic,
    #[error("unsupported PROM version {0}")]
    VersionMismatch(u8),
    #[error("program digest does not match the embedded IR")]
    DigestMismatch,
    #[error("image truncated")]
    Truncated,
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("invalid key: {0}")]
    BadKey(CodedError),
    #[error("signature of variable {0} does not match the seed")]
    SignatureMismatch(u32),
    #[error("constants of instruction {0} do not match the signatures")]
    ConstantMismatch(usize),
}

fn section(out: &mut Vec<u8>, body: Vec<u8>) {
    out.extend((body.len() as u32).to_be_bytes());
    out.extend(body);
}

pub fn emit_prom(table: &SignatureTable, program: &CodedProgram) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(PROM_MAGIC);
    out.push(PROM_VERSION);
    out.extend(table.key().modulus().to_be_bytes());
    out.extend(table.seed().to_be_bytes());
    out.extend(table.program_digest().as_bytes());

    section(&mut out, program.ir.canonical_bytes());

    let mut sigs = Vec::new();
    sigs.extend((table.len() as u32).to_be_bytes());
    for s in table.signatures() {
        sigs.extend(s.value().to_be_bytes());
    }
    section(&mut out, sigs);

    let mut consts = Vec::new();
    consts.extend((program.constants.len() as u32).to_be_bytes());
    for c in &program.constants {
        let values = c.values();
        consts.push(values.len() as u8);
        for v in values {
            consts.extend(v.to_be_bytes());
        }
    }
    section(&mut out, consts);
    out
}

/// Cursor over one region. Running off the end is `Truncated` for the outer
/// image and `Malformed` inside a section, whose length was declared.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    in_section: bool,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], in_section: bool) -> Self {
        Reader {
            buf,
            pos: 0,
            in_section,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PromError> {
        if self.buf.len() - self.pos < n {
            return Err(if self.in_section {
                PromError::Malformed("section shorter than its contents".into())
            } else {
                PromError::Truncated
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PromError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PromError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PromError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PromError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn section(&mut self) -> Result<Reader<'a>, PromError> {
        let len = self.u32()? as usize;
        Ok(Reader::new(self.take(len)?, true))
    }

    fn finish(&self) -> Result<(), PromError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(PromError::Malformed("trailing bytes".into()))
        }
    }

    /// A count that cannot exceed the remaining bytes at `min_size` each.
    fn count(&mut self, min_size: usize) -> Result<usize, PromError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size) > self.buf.len() - self.pos {
            return Err(PromError::Malformed("count exceeds section".into()));
        }
        Ok(n)
    }
}

fn var_id(r: &mut Reader<'_>, nvars: usize) -> Result<VarId, PromError> {
    let id = r.u32()?;
    if id as usize >= nvars {
        return Err(PromError::Malformed(format!("variable id {id} out of range")));
    }
    Ok(VarId(id))
}

fn decode_ir(mut r: Reader<'_>) -> Result<ProgramIR, PromError> {
    let nvars = r.count(3)?;
    let mut vars = Vec::with_capacity(nvars);
    for _ in 0..nvars {
        let kind = match r.u8()? {
            0 => VarKind::Input,
            1 => VarKind::Const(r.u64()? as i64),
            2 => VarKind::Named,
            3 => VarKind::Temp,
            k => return Err(PromError::Malformed(format!("unknown variable kind {k}"))),
        };
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| PromError::Malformed("variable name is not UTF-8".into()))?
            .to_owned();
        vars.push(Variable { name, kind });
    }
    let nins = r.count(9)?;
    let mut instructions = Vec::with_capacity(nins);
    for _ in 0..nins {
        let code = r.u8()?;
        let opcode = Opcode::from_code(code).ok_or_else(|| PromError::Malformed(format!("unknown opcode {code}")))?;
        let dst = var_id(&mut r, nvars)?;
        let operands = (0..opcode.arity())
            .map(|_| var_id(&mut r, nvars))
            .collect::<Result<_, _>>()?;
        instructions.push(Instruction { opcode, dst, operands });
    }
    let nout = r.count(4)?;
    let outputs = (0..nout).map(|_| var_id(&mut r, nvars)).collect::<Result<_, _>>()?;
    r.finish()?;
    let ir = ProgramIR {
        vars,
        instructions,
        outputs,
    };
    ir.validate().map_err(PromError::Malformed)?;
    Ok(ir)
}

pub fn load_prom(bytes: &[u8]) -> Result<(SignatureTable, CodedProgram), PromError> {
    let mut r = Reader::new(bytes, false);
    if r.take(PROM_MAGIC.len()).map_err(|_| PromError::BadMagic)? != PROM_MAGIC {
        return Err(PromError::BadMagic);
    }
    let version = r.u8()?;
    if version != PROM_VERSION {
        return Err(PromError::VersionMismatch(version));
    }
    let key = CodeKey::new(r.u64()?).map_err(PromError::BadKey)?;
    let seed = r.u64()?;
    let digest = Digest(r.take(DIGEST_LEN)?.try_into().unwrap());

    let ir_section = r.section()?;
    let mut sig_section = r.section()?;
    let mut const_section = r.section()?;
    r.finish()?;

    let ir = decode_ir(ir_section)?;
    if program_digest(&ir) != digest {
        return Err(PromError::DigestMismatch);
    }

    let nsigs = sig_section.count(8)?;
    if nsigs != ir.vars.len() {
        return Err(PromError::Malformed(
            "signature count differs from variable count".into(),
        ));
    }
    let expected = assign_signatures(&ir, &key, seed);
    for (i, want) in expected.signatures().iter().enumerate() {
        if sig_section.u64()? != want.value() {
            return Err(PromError::SignatureMismatch(i as u32));
        }
    }
    sig_section.finish()?;

    let nconst = const_section.count(1)?;
    if nconst != ir.instructions.len() {
        return Err(PromError::Malformed(
            "constant count differs from instruction count".into(),
        ));
    }
    let program = predetermine(&ir, &expected, &key).expect("table derived from the same IR and key");
    for (i, want) in program.constants.iter().enumerate() {
        let n = const_section.u8()? as usize;
        let values = (0..n).map(|_| const_section.u64()).collect::<Result<Vec<_>, _>>()?;
        if values != want.values() {
            return Err(PromError::ConstantMismatch(i));
        }
    }
    const_section.finish()?;
    Ok((expected, program))
}
