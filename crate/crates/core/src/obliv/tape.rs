//! Recorded, data-independent operation sequences.
//!
//! A [`TapeBuilder`] implements [`Arith`] without ever seeing a value, so the
//! tape it produces is a function of the code path and its public parameters
//! alone. Tapes are SSA: every slot is written exactly once, by an input, a
//! public constant, or an op.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::arith::Arith;
use super::format::{NumericFormat, Word};

pub type SlotId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum OpKind {
    Add = 1,
    Sub = 2,
    Mul = 3,
    Div = 4,
    Sqrt = 5,
    Neg = 6,
    Abs = 7,
    Lt = 8,
    Select = 9,
    SelectBit = 10,
}

impl OpKind {
    pub const ALL: [OpKind; 10] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Sqrt,
        OpKind::Neg,
        OpKind::Abs,
        OpKind::Lt,
        OpKind::Select,
        OpKind::SelectBit,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| *k as u8 == v)
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn arity(self) -> usize {
        match self {
            OpKind::Sqrt | OpKind::Neg | OpKind::Abs => 1,
            OpKind::Select | OpKind::SelectBit => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Sqrt => "sqrt",
            OpKind::Neg => "neg",
            OpKind::Abs => "abs",
            OpKind::Lt => "cmp_lt",
            OpKind::Select => "select",
            OpKind::SelectBit => "select_bit",
        }
    }

    /// Kinds of the operands, in order.
    pub fn operand_kinds(self) -> &'static [SlotKind] {
        use SlotKind::*;
        match self {
            OpKind::Sqrt | OpKind::Neg | OpKind::Abs => &[Word],
            OpKind::Select => &[Bit, Word, Word],
            OpKind::SelectBit => &[Bit, Bit, Bit],
            _ => &[Word, Word],
        }
    }

    pub fn output_kind(self) -> SlotKind {
        match self {
            OpKind::Lt | OpKind::SelectBit => SlotKind::Bit,
            _ => SlotKind::Word,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Word,
    Bit,
}

/// Handle to a word-valued tape slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SecretRef {
    pub id: SlotId,
    pub format: NumericFormat,
}

/// Handle to a boolean tape slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SecretBit {
    pub id: SlotId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Op {
    pub kind: OpKind,
    pub args: [SlotId; 3],
    pub out: SlotId,
}

impl Op {
    pub fn operands(&self) -> &[SlotId] {
        &self.args[..self.kind.arity()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Constant {
    pub slot: SlotId,
    pub kind: SlotKind,
    pub value: Word,
}

#[derive(Debug, Error, PartialEq)]
pub enum TapeError {
    #[error("tape stream truncated")]
    Truncated,
    #[error("not a tape stream")]
    BadMagic,
    #[error("unsupported tape version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown numeric format tag {0}")]
    BadFormat(u8),
    #[error("unknown op kind {0}")]
    UnknownOp(u8),
    #[error("slot {0} out of range or undefined at use")]
    InvalidSlot(SlotId),
    #[error("slot {0} written twice")]
    Redefined(SlotId),
    #[error("slot {0} has the wrong kind for its use")]
    KindMismatch(SlotId),
    #[error("{0} trailing bytes after tape")]
    TrailingBytes(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tape {
    format: NumericFormat,
    slot_kinds: Vec<SlotKind>,
    constants: Vec<Constant>,
    inputs: Vec<SlotId>,
    ops: Vec<Op>,
    outputs: Vec<SlotId>,
}

/// Static op counts by kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpHistogram {
    counts: BTreeMap<OpKind, u64>,
}

impl OpHistogram {
    pub fn get(&self, kind: OpKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpKind, u64)> + '_ {
        OpKind::ALL.into_iter().map(|k| (k, self.get(k)))
    }

    /// The op kind with the highest count (ties broken by kind order).
    pub fn dominant(&self) -> Option<OpKind> {
        self.iter()
            .filter(|(_, c)| *c > 0)
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
    }
}

const MAGIC: &[u8; 4] = b"SNLT";
pub const TAPE_VERSION: u8 = 1;

impl Tape {
    pub fn format(&self) -> NumericFormat {
        self.format
    }
    pub fn ops(&self) -> &[Op] {
        &self.ops
    }
    pub fn inputs(&self) -> &[SlotId] {
        &self.inputs
    }
    pub fn outputs(&self) -> &[SlotId] {
        &self.outputs
    }
    pub fn constants(&self) -> &[Constant] {
        &self.constants
    }
    pub fn num_slots(&self) -> usize {
        self.slot_kinds.len()
    }
    pub fn slot_kind(&self, id: SlotId) -> SlotKind {
        self.slot_kinds[id as usize]
    }
    pub fn len(&self) -> usize {
        self.ops.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn histogram(&self) -> OpHistogram {
        let mut h = OpHistogram::default();
        for op in &self.ops {
            *h.counts.entry(op.kind).or_insert(0) += 1;
        }
        h
    }

    /// Versioned binary encoding: op kind as one byte, every slot id as a
    /// 4-byte little-endian integer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.ops.len() * 13);
        out.extend_from_slice(MAGIC);
        out.push(TAPE_VERSION);
        let (tag, frac) = self.format.tag();
        out.push(tag);
        out.push(frac);
        put_u32(&mut out, self.slot_kinds.len() as u32);
        put_u32(&mut out, self.constants.len() as u32);
        for c in &self.constants {
            put_u32(&mut out, c.slot);
            out.push(match c.kind {
                SlotKind::Word => 0,
                SlotKind::Bit => 1,
            });
            out.extend_from_slice(&c.value.to_le_bytes());
        }
        put_u32(&mut out, self.inputs.len() as u32);
        for s in &self.inputs {
            put_u32(&mut out, *s);
        }
        put_u32(&mut out, self.ops.len() as u32);
        for op in &self.ops {
            out.push(op.kind as u8);
            for a in op.operands() {
                put_u32(&mut out, *a);
            }
            put_u32(&mut out, op.out);
        }
        put_u32(&mut out, self.outputs.len() as u32);
        for s in &self.outputs {
            put_u32(&mut out, *s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TapeError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(TapeError::BadMagic);
        }
        let version = r.u8()?;
        if version != TAPE_VERSION {
            return Err(TapeError::UnsupportedVersion(version));
        }
        let tag = r.u8()?;
        let frac = r.u8()?;
        let format = NumericFormat::from_tag(tag, frac).ok_or(TapeError::BadFormat(tag))?;
        format.validate().map_err(|_| TapeError::BadFormat(tag))?;
        let num_slots = r.u32()? as usize;
        if num_slots > bytes.len() * 8 {
            return Err(TapeError::Truncated);
        }
        let mut defined: Vec<Option<SlotKind>> = vec![None; num_slots];
        fn define(
            defined: &mut [Option<SlotKind>],
            slot: SlotId,
            kind: SlotKind,
        ) -> Result<(), TapeError> {
            let entry = defined
                .get_mut(slot as usize)
                .ok_or(TapeError::InvalidSlot(slot))?;
            if entry.is_some() {
                return Err(TapeError::Redefined(slot));
            }
            *entry = Some(kind);
            Ok(())
        }

        let n_const = r.u32()? as usize;
        let mut constants = Vec::with_capacity(n_const.min(bytes.len()));
        for _ in 0..n_const {
            let slot = r.u32()?;
            let kind = match r.u8()? {
                0 => SlotKind::Word,
                1 => SlotKind::Bit,
                _ => return Err(TapeError::KindMismatch(slot)),
            };
            let value = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            define(&mut defined, slot, kind)?;
            constants.push(Constant { slot, kind, value });
        }
        let n_in = r.u32()? as usize;
        let mut inputs = Vec::with_capacity(n_in.min(bytes.len()));
        for _ in 0..n_in {
            let s = r.u32()?;
            define(&mut defined, s, SlotKind::Word)?;
            inputs.push(s);
        }
        let n_ops = r.u32()? as usize;
        let mut ops = Vec::with_capacity(n_ops.min(bytes.len()));
        for _ in 0..n_ops {
            let code = r.u8()?;
            let kind = OpKind::from_u8(code).ok_or(TapeError::UnknownOp(code))?;
            let mut args = [0u32; 3];
            for (i, want) in kind.operand_kinds().iter().enumerate() {
                let a = r.u32()?;
                match defined.get(a as usize) {
                    Some(Some(k)) if k == want => {}
                    Some(Some(_)) => return Err(TapeError::KindMismatch(a)),
                    _ => return Err(TapeError::InvalidSlot(a)),
                }
                args[i] = a;
            }
            let out = r.u32()?;
            define(&mut defined, out, kind.output_kind())?;
            ops.push(Op { kind, args, out });
        }
        let n_out = r.u32()? as usize;
        let mut outputs = Vec::with_capacity(n_out.min(bytes.len()));
        for _ in 0..n_out {
            let s = r.u32()?;
            if !matches!(defined.get(s as usize), Some(Some(_))) {
                return Err(TapeError::InvalidSlot(s));
            }
            outputs.push(s);
        }
        if r.pos != bytes.len() {
            return Err(TapeError::TrailingBytes(bytes.len() - r.pos));
        }
        let slot_kinds = defined
            .into_iter()
            .enumerate()
            .map(|(i, k)| k.ok_or(TapeError::InvalidSlot(i as SlotId)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tape {
            format,
            slot_kinds,
            constants,
            inputs,
            ops,
            outputs,
        })
    }

    /// SHA-256 of the serialized tape. Two tapes with equal hashes have the
    /// same ops, wiring and public constants.
    pub fn structure_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Like [`structure_hash`](Self::structure_hash) but ignoring the values
    /// of public constants: equal shape hashes mean equal op sequences and
    /// wiring, hence equal circuits up to public inputs.
    pub fn shape_hash(&self) -> [u8; 32] {
        let mut blank = self.clone();
        for c in &mut blank.constants {
            c.value = 0;
        }
        blank.structure_hash()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TapeError> {
        let end = self.pos.checked_add(n).ok_or(TapeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(TapeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, TapeError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, TapeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Records operations into a [`Tape`]. Single writer; public constants are
/// deduplicated by value.
pub struct TapeBuilder {
    tape: Tape,
    const_slots: HashMap<(bool, Word), SlotId>,
}

impl TapeBuilder {
    pub fn new(format: NumericFormat) -> Self {
        TapeBuilder {
            tape: Tape {
                format,
                slot_kinds: Vec::new(),
                constants: Vec::new(),
                inputs: Vec::new(),
                ops: Vec::new(),
                outputs: Vec::new(),
            },
            const_slots: HashMap::new(),
        }
    }

    pub fn format(&self) -> NumericFormat {
        self.tape.format
    }

    fn alloc(&mut self, kind: SlotKind) -> SlotId {
        let id = self.tape.slot_kinds.len() as SlotId;
        self.tape.slot_kinds.push(kind);
        id
    }

    /// Allocates a secret input slot.
    pub fn input(&mut self) -> SecretRef {
        let id = self.alloc(SlotKind::Word);
        self.tape.inputs.push(id);
        self.word(id)
    }

    pub fn inputs(&mut self, n: usize) -> Vec<SecretRef> {
        (0..n).map(|_| self.input()).collect()
    }

    pub fn output(&mut self, r: SecretRef) {
        self.tape.outputs.push(r.id);
    }

    pub fn output_bit(&mut self, b: SecretBit) {
        self.tape.outputs.push(b.id);
    }

    pub fn len(&self) -> usize {
        self.tape.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tape.ops.is_empty()
    }

    pub fn finish(self) -> Tape {
        self.tape
    }

    fn word(&self, id: SlotId) -> SecretRef {
        SecretRef {
            id,
            format: self.tape.format,
        }
    }

    fn constant(&mut self, kind: SlotKind, value: Word) -> SlotId {
        let key = (kind == SlotKind::Bit, value);
        if let Some(&s) = self.const_slots.get(&key) {
            return s;
        }
        let slot = self.alloc(kind);
        self.tape.constants.push(Constant { slot, kind, value });
        self.const_slots.insert(key, slot);
        slot
    }

    fn push(&mut self, kind: OpKind, operands: &[SlotId]) -> SlotId {
        let out = self.alloc(kind.output_kind());
        let mut args = [0; 3];
        args[..operands.len()].copy_from_slice(operands);
        self.tape.ops.push(Op { kind, args, out });
        out
    }

    fn check(&self, a: SecretRef) -> SlotId {
        debug_assert_eq!(a.format, self.tape.format, "formats never mix within a tape");
        a.id
    }

    fn binary(&mut self, kind: OpKind, a: SecretRef, b: SecretRef) -> SecretRef {
        let (a, b) = (self.check(a), self.check(b));
        let id = self.push(kind, &[a, b]);
        self.word(id)
    }

    fn unary(&mut self, kind: OpKind, a: SecretRef) -> SecretRef {
        let a = self.check(a);
        let id = self.push(kind, &[a]);
        self.word(id)
    }
}

impl Arith for TapeBuilder {
    type Num = SecretRef;
    type Bit = SecretBit;

    fn num(&mut self, value: f64) -> SecretRef {
        let word = self.tape.format.encode_saturating(value);
        let id = self.constant(SlotKind::Word, word);
        self.word(id)
    }

    fn param(&mut self, value: f64) -> SecretRef {
        let word = self.tape.format.encode_saturating(value);
        let id = self.alloc(SlotKind::Word);
        self.tape.constants.push(Constant {
            slot: id,
            kind: SlotKind::Word,
            value: word,
        });
        self.word(id)
    }

    fn bit(&mut self, value: bool) -> SecretBit {
        SecretBit {
            id: self.constant(SlotKind::Bit, value as Word),
        }
    }

    fn add(&mut self, a: SecretRef, b: SecretRef) -> SecretRef {
        self.binary(OpKind::Add, a, b)
    }
    fn sub(&mut self, a: SecretRef, b: SecretRef) -> SecretRef {
        self.binary(OpKind::Sub, a, b)
    }
    fn mul(&mut self, a: SecretRef, b: SecretRef) -> SecretRef {
        self.binary(OpKind::Mul, a, b)
    }
    fn div(&mut self, a: SecretRef, b: SecretRef) -> SecretRef {
        self.binary(OpKind::Div, a, b)
    }
    fn sqrt(&mut self, a: SecretRef) -> SecretRef {
        self.unary(OpKind::Sqrt, a)
    }
    fn neg(&mut self, a: SecretRef) -> SecretRef {
        self.unary(OpKind::Neg, a)
    }
    fn abs(&mut self, a: SecretRef) -> SecretRef {
        self.unary(OpKind::Abs, a)
    }
    fn lt(&mut self, a: SecretRef, b: SecretRef) -> SecretBit {
        let (a, b) = (self.check(a), self.check(b));
        SecretBit {
            id: self.push(OpKind::Lt, &[a, b]),
        }
    }
    fn select(&mut self, cond: SecretBit, a: SecretRef, b: SecretRef) -> SecretRef {
        let (a, b) = (self.check(a), self.check(b));
        let id = self.push(OpKind::Select, &[cond.id, a, b]);
        self.word(id)
    }
    fn select_bit(&mut self, cond: SecretBit, a: SecretBit, b: SecretBit) -> SecretBit {
        SecretBit {
            id: self.push(OpKind::SelectBit, &[cond.id, a.id, b.id]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(format: NumericFormat) -> Tape {
        let mut b = TapeBuilder::new(format);
        let x = b.input();
        let y = b.input();
        let s = b.add(x, y);
        let half = b.num(0.5);
        let p = b.mul(s, half);
        let r = b.sqrt(p);
        let c = b.lt(x, y);
        let m = b.select(c, r, x);
        let nc = b.not(c);
        b.output(m);
        b.output_bit(nc);
        b.finish()
    }

    #[test]
    fn serialization_round_trip() {
        for fmt in [NumericFormat::Float32, NumericFormat::fixed64()] {
            let t = sample(fmt);
            let bytes = t.to_bytes();
            assert_eq!(Tape::from_bytes(&bytes).unwrap(), t);
            assert_eq!(Tape::from_bytes(&bytes[..bytes.len() - 1]), Err(TapeError::Truncated));
        }
    }

    #[test]
    fn rejects_malformed_streams() {
        let t = sample(NumericFormat::Float32);
        let mut bytes = t.to_bytes();
        assert_eq!(Tape::from_bytes(b"nope"), Err(TapeError::BadMagic));
        bytes[4] = 9;
        assert_eq!(Tape::from_bytes(&bytes), Err(TapeError::UnsupportedVersion(9)));
        let mut extra = t.to_bytes();
        extra.push(0);
        assert_eq!(Tape::from_bytes(&extra), Err(TapeError::TrailingBytes(1)));
    }

    #[test]
    fn constants_are_deduplicated() {
        let mut b = TapeBuilder::new(NumericFormat::Float32);
        let a = b.num(1.0);
        let c = b.num(1.0);
        assert_eq!(a, c);
        assert_eq!(b.finish().constants().len(), 1);
    }

    #[test]
    fn histogram_counts_by_kind() {
        let t = sample(NumericFormat::Float32);
        let h = t.histogram();
        assert_eq!(h.get(OpKind::Add), 1);
        assert_eq!(h.get(OpKind::Mul), 1);
        assert_eq!(h.get(OpKind::SelectBit), 1);
        assert_eq!(h.get(OpKind::Div), 0);
        assert_eq!(h.total(), t.len() as u64);
        assert_eq!(TapeBuilder::new(NumericFormat::Float32).finish().histogram().total(), 0);
    }
}
