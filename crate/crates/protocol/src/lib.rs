//! Three-party offload of pose estimation: a client with secret inputs, a
//! garbling generator and an evaluating server. Sessions pin the circuit
//! shape and run one solver iteration per invocation, so the servers see
//! only a count of identical-looking invocations.

use snail_core::obliv::TapeError;
use snail_core::solver::SolverError;
use snail_gc::frame::{expect_frame, write_frame, GcMsg};
use snail_gc::{CompileError, CompiledTape, GcError};
use thiserror::Error;

pub mod accounting;
pub mod client;
pub mod link;
pub mod msg;
pub mod plan;
pub mod server;

pub use accounting::{
    client_encode_naive, client_encode_seeded, privacy_bound, CommReport, PrivacyBound, KAPPA_BITS,
};
pub use client::{Client, SessionSummary};
pub use msg::{Encoding, Mode, MsgType, PoseInput, Program, Role, SessionParams};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gc(#[from] GcError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("expected {expected:?}, got {got:?}")]
    Unexpected { expected: MsgType, got: MsgType },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("bad session parameters: {0}")]
    Params(String),
    #[error("expected {expected} inputs, got {got}")]
    InputSize { expected: usize, got: usize },
    #[error("seed material does not match its delta")]
    SeedMismatch,
    #[error("generator and evaluator disagree on the circuit")]
    CircuitMismatch,
    #[error("timed out waiting for {0}")]
    Timeout(String),
}

/// Wraps a garbled-stream frame for a GC_STREAM payload.
pub(crate) fn gc_wrap(ty: GcMsg, payload: &[u8]) -> Vec<u8> {
    let mut v = Vec::with_capacity(payload.len() + snail_gc::frame::HEADER_BYTES);
    write_frame(&mut v, ty as u8, payload).expect("vec write");
    v
}

pub(crate) fn gc_unwrap(wrapped: &[u8], ty: GcMsg) -> Result<Vec<u8>, ProtocolError> {
    let mut s = wrapped;
    let p = expect_frame(&mut s, ty as u8)?;
    if !s.is_empty() {
        return Err(ProtocolError::Malformed("trailing bytes after garbled-stream frame".into()));
    }
    Ok(p)
}

/// What the generator announces before streaming tables; the evaluator
/// checks it against its own compilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CircuitMeta {
    pub structure_hash: [u8; 32],
    pub and_gates: u64,
    pub input_bits: u32,
    pub output_bits: u32,
}

impl CircuitMeta {
    pub fn of(ct: &CompiledTape) -> Self {
        let outputs: usize = ct.tape().outputs().iter().map(|s| ct.slot_width(*s)).sum();
        CircuitMeta {
            structure_hash: ct.tape().structure_hash(),
            and_gates: ct.and_gates(),
            input_bits: snail_gc::garble::tape_input_bits(ct) as u32,
            output_bits: (outputs + ct.tracks_overflow() as usize) as u32,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut v = self.structure_hash.to_vec();
        v.extend_from_slice(&self.and_gates.to_le_bytes());
        v.extend_from_slice(&self.input_bits.to_le_bytes());
        v.extend_from_slice(&self.output_bits.to_le_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() != 48 {
            return Err(ProtocolError::Malformed("circuit meta".into()));
        }
        Ok(CircuitMeta {
            structure_hash: b[..32].try_into().expect("32 bytes"),
            and_gates: u64::from_le_bytes(b[32..40].try_into().expect("8 bytes")),
            input_bits: u32::from_le_bytes(b[40..44].try_into().expect("4 bytes")),
            output_bits: u32::from_le_bytes(b[44..].try_into().expect("4 bytes")),
        })
    }
}
