//! Tape compilation: one boolean template per op kind, wired per op at
//! garbling time, and the gate-cost table measured from those templates.

use std::collections::BTreeMap;

use snail_core::obliv::{CostTable, GateCost, NumericFormat, OpKind, SlotKind, Tape};
use thiserror::Error;

use crate::circuit::{Bits, BoolCircuit, Builder, Wire};
use crate::{fixed, float};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("unsupported numeric format {0:?}")]
    UnsupportedFormat(NumericFormat),
}

/// Circuit for one op kind. Input groups are the operands in order, then
/// the incoming overflow flag if `tracks_overflow`. Outputs are the result
/// bits, then the outgoing overflow flag if `tracks_overflow`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCircuit {
    pub kind: OpKind,
    pub circuit: BoolCircuit,
    pub tracks_overflow: bool,
}

fn slot_width(format: NumericFormat, kind: SlotKind) -> usize {
    match kind {
        SlotKind::Word => format.width(),
        SlotKind::Bit => 1,
    }
}

/// Builds the template for `kind` in `format`.
pub fn op_circuit(format: NumericFormat, kind: OpKind) -> Result<OpCircuit, CompileError> {
    format
        .validate()
        .map_err(|_| CompileError::UnsupportedFormat(format))?;
    let mut b = Builder::new();
    let args: Vec<Bits> = kind
        .operand_kinds()
        .iter()
        .map(|k| b.input_group(slot_width(format, *k)))
        .collect();
    let tracks_overflow = matches!(format, NumericFormat::Fixed64 { .. })
        && !matches!(kind, OpKind::Lt | OpKind::Select | OpKind::SelectBit);
    let sticky_in = if tracks_overflow {
        Some(b.input_group(1)[0])
    } else {
        None
    };
    let (mut out, ovf): (Bits, Option<Wire>) = match kind {
        OpKind::Select | OpKind::SelectBit => (b.mux_bits(args[0][0], &args[1], &args[2]), None),
        _ => match format {
            NumericFormat::Float32 => {
                let r = match kind {
                    OpKind::Add => float::add(&mut b, &args[0], &args[1]),
                    OpKind::Sub => float::sub(&mut b, &args[0], &args[1]),
                    OpKind::Mul => float::mul(&mut b, &args[0], &args[1]),
                    OpKind::Div => float::div(&mut b, &args[0], &args[1]),
                    OpKind::Sqrt => float::sqrt(&mut b, &args[0]),
                    OpKind::Neg => float::neg(&mut b, &args[0]),
                    OpKind::Abs => float::abs(&mut b, &args[0]),
                    OpKind::Lt => vec![float::lt(&mut b, &args[0], &args[1])],
                    OpKind::Select | OpKind::SelectBit => unreachable!(),
                };
                (r, None)
            }
            NumericFormat::Fixed64 { frac_bits } => {
                if kind == OpKind::Lt {
                    (vec![fixed::lt(&mut b, &args[0], &args[1])], None)
                } else {
                    let (r, o) = match kind {
                        OpKind::Add => fixed::add(&mut b, &args[0], &args[1]),
                        OpKind::Sub => fixed::sub(&mut b, &args[0], &args[1]),
                        OpKind::Mul => fixed::mul(&mut b, &args[0], &args[1], frac_bits),
                        OpKind::Div => fixed::div(&mut b, &args[0], &args[1], frac_bits),
                        OpKind::Sqrt => fixed::sqrt(&mut b, &args[0], frac_bits),
                        OpKind::Neg => fixed::neg(&mut b, &args[0]),
                        OpKind::Abs => fixed::abs(&mut b, &args[0]),
                        _ => unreachable!(),
                    };
                    (r, Some(o))
                }
            }
        },
    };
    if let (Some(s), Some(o)) = (sticky_in, ovf) {
        out.push(b.or(s, o));
    }
    Ok(OpCircuit {
        kind,
        circuit: b.finish(out),
        tracks_overflow,
    })
}

/// A tape together with the templates needed to garble it.
#[derive(Clone, Debug)]
pub struct CompiledTape {
    tape: Tape,
    templates: BTreeMap<OpKind, OpCircuit>,
}

impl CompiledTape {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn format(&self) -> NumericFormat {
        self.tape.format()
    }

    pub fn template(&self, kind: OpKind) -> &OpCircuit {
        &self.templates[&kind]
    }

    pub fn slot_width(&self, slot: u32) -> usize {
        slot_width(self.format(), self.tape.slot_kind(slot))
    }

    /// Whether a sticky overflow bit is threaded through the ops.
    pub fn tracks_overflow(&self) -> bool {
        matches!(self.format(), NumericFormat::Fixed64 { .. })
    }

    /// Total AND gates, hence garbled-table bytes / 32.
    pub fn and_gates(&self) -> u64 {
        self.tape
            .ops()
            .iter()
            .map(|op| self.templates[&op.kind].circuit.counts().and)
            .sum()
    }

    pub fn gates(&self) -> GateCost {
        let mut g = GateCost::default();
        for op in self.tape.ops() {
            let c = self.templates[&op.kind].circuit.counts();
            g = g + GateCost { and: c.and, xor: c.xor };
        }
        g
    }
}

/// Prepares a tape for garbling.
pub fn compile(tape: &Tape) -> Result<CompiledTape, CompileError> {
    let mut templates = BTreeMap::new();
    for (kind, _) in tape.histogram().iter() {
        templates.insert(kind, op_circuit(tape.format(), kind)?);
    }
    Ok(CompiledTape {
        tape: tape.clone(),
        templates,
    })
}

/// Per-op gate costs measured on the templates. The sticky overflow flag
/// starts as the constant-false wire, so the prelude is free.
pub fn cost_table(format: NumericFormat) -> Result<CostTable, CompileError> {
    let mut ops = BTreeMap::new();
    for kind in OpKind::ALL {
        let c = op_circuit(format, kind)?.circuit.counts();
        ops.insert(kind, GateCost { and: c.and, xor: c.xor });
    }
    Ok(CostTable {
        format,
        prelude: GateCost::default(),
        ops,
    })
}
