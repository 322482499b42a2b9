//! Cleartext interpreter for tapes, with static gate-cost accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::format::{f32_ops, fixed_ops, FormatError, NumericFormat, Word};
use super::tape::{OpKind, SlotKind, Tape};

/// Security parameter in bits; also the wire-label width.
pub const KAPPA: usize = 128;

/// Bytes of garbled table per AND gate (two half-gate ciphertexts).
pub const AND_TABLE_BYTES: u64 = 2 * (KAPPA as u64) / 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCost {
    pub and: u64,
    pub xor: u64,
}

impl GateCost {
    pub fn total(&self) -> u64 {
        self.and + self.xor
    }
}

impl std::ops::Add for GateCost {
    type Output = GateCost;
    fn add(self, o: GateCost) -> GateCost {
        GateCost {
            and: self.and + o.and,
            xor: self.xor + o.xor,
        }
    }
}

impl std::ops::Mul<u64> for GateCost {
    type Output = GateCost;
    fn mul(self, k: u64) -> GateCost {
        GateCost {
            and: self.and * k,
            xor: self.xor * k,
        }
    }
}

/// Per-op circuit sizes for one numeric format. Produced by measuring the
/// boolean circuits that actually implement each op, so predicted and
/// garbled costs agree exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub format: NumericFormat,
    /// Fixed cost paid once per tape (e.g. initializing the overflow flag).
    pub prelude: GateCost,
    pub ops: BTreeMap<OpKind, GateCost>,
}

impl CostTable {
    /// A table that charges nothing, for callers that only need values.
    pub fn zero(format: NumericFormat) -> Self {
        CostTable {
            format,
            prelude: GateCost::default(),
            ops: BTreeMap::new(),
        }
    }

    pub fn cost(&self, kind: OpKind) -> GateCost {
        self.ops.get(&kind).copied().unwrap_or_default()
    }

    /// Static cost of a tape; empty tapes cost nothing.
    pub fn tape_cost(&self, tape: &Tape) -> CostReport {
        if tape.is_empty() {
            return CostReport::default();
        }
        let mut gates = self.prelude;
        for (kind, count) in tape.histogram().iter() {
            gates = gates + self.cost(kind) * count;
        }
        CostReport::from_gates(gates, 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub and_gates: u64,
    pub xor_gates: u64,
    /// Garbled-table bytes from generator to evaluator (framing excluded).
    pub bytes_tx: u64,
    pub rounds: u64,
}

impl CostReport {
    pub fn from_gates(g: GateCost, rounds: u64) -> Self {
        CostReport {
            and_gates: g.and,
            xor_gates: g.xor,
            bytes_tx: g.and * AND_TABLE_BYTES,
            rounds,
        }
    }

    pub fn gates(&self) -> u64 {
        self.and_gates + self.xor_gates
    }
}

impl std::ops::Add for CostReport {
    type Output = CostReport;
    fn add(self, o: CostReport) -> CostReport {
        CostReport {
            and_gates: self.and_gates + o.and_gates,
            xor_gates: self.xor_gates + o.xor_gates,
            bytes_tx: self.bytes_tx + o.bytes_tx,
            rounds: self.rounds + o.rounds,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("tape expects {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("cost table is for {table:?}, tape is {tape:?}")]
    FormatMismatch {
        table: NumericFormat,
        tape: NumericFormat,
    },
}

/// Encodes a plaintext value as an input word.
pub fn lift(value: f64, format: NumericFormat) -> Result<Word, FormatError> {
    format.encode(value)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub outputs: Vec<Word>,
    /// Sticky fixed-point overflow flag; always false for float32.
    pub overflow: bool,
    pub cost: CostReport,
}

impl Execution {
    pub fn decoded(&self, format: NumericFormat) -> Vec<f64> {
        self.outputs.iter().map(|w| format.decode(*w)).collect()
    }
}

/// Evaluates one op on words. Returns the result and whether it overflowed.
pub fn eval_op(format: NumericFormat, kind: OpKind, args: &[Word]) -> (Word, bool) {
    let a = args[0];
    let b = args.get(1).copied().unwrap_or(0);
    match kind {
        OpKind::Select | OpKind::SelectBit => {
            return (if a & 1 == 1 { args[1] } else { args[2] }, false);
        }
        _ => {}
    }
    match format {
        NumericFormat::Float32 => {
            let (x, y) = (a as u32, b as u32);
            let r = match kind {
                OpKind::Add => f32_ops::add(x, y),
                OpKind::Sub => f32_ops::sub(x, y),
                OpKind::Mul => f32_ops::mul(x, y),
                OpKind::Div => f32_ops::div(x, y),
                OpKind::Sqrt => f32_ops::sqrt(x),
                OpKind::Neg => f32_ops::neg(x),
                OpKind::Abs => f32_ops::abs(x),
                OpKind::Lt => f32_ops::lt(x, y) as u32,
                OpKind::Select | OpKind::SelectBit => unreachable!(),
            };
            (r as Word, false)
        }
        NumericFormat::Fixed64 { frac_bits } => {
            let (x, y) = (a as i64, b as i64);
            let (r, ovf) = match kind {
                OpKind::Add => fixed_ops::add(x, y),
                OpKind::Sub => fixed_ops::sub(x, y),
                OpKind::Mul => fixed_ops::mul(x, y, frac_bits),
                OpKind::Div => fixed_ops::div(x, y, frac_bits),
                OpKind::Sqrt => fixed_ops::sqrt(x, frac_bits),
                OpKind::Neg => fixed_ops::neg(x),
                OpKind::Abs => fixed_ops::abs(x),
                OpKind::Lt => (fixed_ops::lt(x, y) as i64, false),
                OpKind::Select | OpKind::SelectBit => unreachable!(),
            };
            (r as Word, ovf)
        }
    }
}

/// Runs a tape on plaintext words and charges the static gate table.
pub fn run_cleartext(
    tape: &Tape,
    inputs: &[Word],
    table: &CostTable,
) -> Result<Execution, ExecError> {
    if table.format != tape.format() {
        return Err(ExecError::FormatMismatch {
            table: table.format,
            tape: tape.format(),
        });
    }
    if inputs.len() != tape.inputs().len() {
        return Err(ExecError::ArityMismatch {
            expected: tape.inputs().len(),
            got: inputs.len(),
        });
    }
    let format = tape.format();
    let mask = match format {
        NumericFormat::Float32 => u32::MAX as Word,
        NumericFormat::Fixed64 { .. } => Word::MAX,
    };
    let mut slots = vec![0 as Word; tape.num_slots()];
    for c in tape.constants() {
        slots[c.slot as usize] = c.value;
    }
    for (slot, v) in tape.inputs().iter().zip(inputs) {
        slots[*slot as usize] = v & mask;
    }
    let mut overflow = false;
    let mut args = [0 as Word; 3];
    for op in tape.ops() {
        for (i, a) in op.operands().iter().enumerate() {
            args[i] = slots[*a as usize];
        }
        let (r, ovf) = eval_op(format, op.kind, &args[..op.kind.arity()]);
        overflow |= ovf;
        slots[op.out as usize] = r;
    }
    let outputs = tape
        .outputs()
        .iter()
        .map(|s| match tape.slot_kind(*s) {
            SlotKind::Word => slots[*s as usize],
            SlotKind::Bit => slots[*s as usize] & 1,
        })
        .collect();
    Ok(Execution {
        outputs,
        overflow,
        cost: table.tape_cost(tape),
    })
}
