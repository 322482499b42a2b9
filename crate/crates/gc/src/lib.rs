//! Semi-honest two-party garbled circuits for oblivious tapes: softfloat and
//! fixed-point circuit compilation, free-XOR half-gates garbling, base
//! oblivious transfer, and the wire framing used between parties.

use thiserror::Error;

pub mod circuit;
pub mod compile;
pub mod fixed;
pub mod float;
pub mod frame;
pub mod garble;
pub mod label;
pub mod ot;

pub use compile::{compile, CompileError, CompiledTape};
pub use label::{GarbleSeed, Label};

#[derive(Debug, Error)]
pub enum GcError {
    #[error("garbled table stream ended early")]
    Truncated,
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("malformed stream: {0}")]
    Malformed(String),
    #[error("invalid group element")]
    InvalidPoint,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
