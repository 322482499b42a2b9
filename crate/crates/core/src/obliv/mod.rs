//! Data-oblivious execution: numeric formats, the arithmetic interface,
//! operation tapes and the cleartext interpreter.

pub mod arith;
pub mod exec;
pub mod format;
pub mod tape;

pub use arith::{poly_sin_cos, Arith, Plain, PlainF32, PlainF64, PlainWord};
pub use exec::{
    eval_op, lift, run_cleartext, CostReport, CostTable, ExecError, Execution, GateCost,
    AND_TABLE_BYTES, KAPPA,
};
pub use format::{f32_ops, fixed_ops, FormatError, NumericFormat, Word, CANONICAL_NAN};
pub use tape::{
    Constant, Op, OpHistogram, OpKind, SecretBit, SecretRef, SlotId, SlotKind, Tape, TapeBuilder,
    TapeError,
};
