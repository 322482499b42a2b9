//! Session message types and control payloads.

use serde::{Deserialize, Serialize};
use snail_core::geometry::Intrinsics;
use snail_core::solver::SolverConfig;

use crate::ProtocolError;

pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Params = 2,
    SeedMaterial = 3,
    /// Carries one garbled-stream frame as payload.
    GcStream = 4,
    InputLabels = 5,
    OtMsg = 6,
    OutputLabels = 7,
    StepDone = 8,
    Bye = 9,
    /// Client asks both servers to run one more invocation.
    StepBegin = 10,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MsgType::*;
        Some(match v {
            1 => Hello,
            2 => Params,
            3 => SeedMaterial,
            4 => GcStream,
            5 => InputLabels,
            6 => OtMsg,
            7 => OutputLabels,
            8 => StepDone,
            9 => Bye,
            10 => StepBegin,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Client,
    Generator,
    Evaluator,
    /// Holder of the map in the split setting; co-located with the evaluator.
    MapOwner,
}

impl Role {
    fn to_u8(self) -> u8 {
        match self {
            Role::Client => 0,
            Role::Generator => 1,
            Role::Evaluator => 2,
            Role::MapOwner => 3,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Role::Client,
            1 => Role::Generator,
            2 => Role::Evaluator,
            3 => Role::MapOwner,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub role: Role,
    pub session_id: u64,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = vec![PROTOCOL_VERSION, self.role.to_u8()];
        v.extend_from_slice(&self.session_id.to_le_bytes());
        v
    }

    pub fn decode(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() != 10 {
            return Err(ProtocolError::Malformed("hello".into()));
        }
        if b[0] != PROTOCOL_VERSION {
            return Err(ProtocolError::Malformed(format!("protocol version {}", b[0])));
        }
        let role = Role::from_u8(b[1]).ok_or_else(|| ProtocolError::Malformed("role".into()))?;
        Ok(Hello {
            role,
            session_id: u64::from_le_bytes(b[2..].try_into().expect("8 bytes")),
        })
    }
}

/// Who holds the correspondences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// The client holds image and map points and offloads everything.
    Offload,
    /// The evaluator's side holds the map points and feeds them in by OT.
    Split,
}

/// How the client's input labels are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    /// The generator sends both labels per client input bit.
    Naive,
    /// The generator sends its seed material; the client derives labels.
    /// Only valid in the offload setting.
    Seeded,
}

/// Whether the starting pose of each invocation is secret or sent in the
/// clear to the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseInput {
    Secret,
    Public,
}

/// What the servers compute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Program {
    /// One solver iteration over `n` correspondences.
    SilStep {
        n: usize,
        intrinsics: Intrinsics,
        solver: SolverConfig,
    },
    /// An arbitrary public tape in its binary serialization. In the split
    /// setting, inputs `evaluator_inputs.0 .. evaluator_inputs.0 + evaluator_inputs.1`
    /// belong to the evaluator side.
    Tape {
        bytes: Vec<u8>,
        evaluator_inputs: (usize, usize),
    },
}

/// Parameters pinned for the lifetime of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub program: Program,
    pub mode: Mode,
    pub encoding: Encoding,
    pub pose: PoseInput,
    /// Where the generator reaches the evaluator.
    pub evaluator_addr: String,
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.mode == Mode::Split && self.encoding == Encoding::Seeded {
            return Err(ProtocolError::Params(
                "seeded encoding is unavailable in the split setting".into(),
            ));
        }
        if self.pose == PoseInput::Public && !matches!(self.program, Program::SilStep { .. }) {
            return Err(ProtocolError::Params("public pose needs a SIL program".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("params serialize")
    }

    pub fn decode(b: &[u8]) -> Result<Self, ProtocolError> {
        serde_json::from_slice(b).map_err(|e| ProtocolError::Malformed(format!("params: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_round_trip() {
        let h = Hello {
            role: Role::Generator,
            session_id: 0xdead_beef_1234,
        };
        assert_eq!(Hello::decode(&h.encode()).unwrap(), h);
        assert!(Hello::decode(&[9, 0, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn message_types_round_trip() {
        for v in 1..=10u8 {
            assert_eq!(MsgType::from_u8(v).unwrap() as u8, v);
        }
        assert!(MsgType::from_u8(0).is_none());
    }

    #[test]
    fn split_rejects_seeded() {
        let p = SessionParams {
            program: Program::Tape {
                bytes: vec![],
                evaluator_inputs: (0, 0),
            },
            mode: Mode::Split,
            encoding: Encoding::Seeded,
            pose: PoseInput::Secret,
            evaluator_addr: String::new(),
        };
        assert!(p.validate().is_err());
        assert_eq!(SessionParams::decode(&p.encode()).unwrap(), p);
    }
}
