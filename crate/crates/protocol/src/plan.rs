//! Which tape the session evaluates and which party supplies each input.

use snail_core::geometry::{CorrespondenceSet, Pose};
use snail_core::obliv::{NumericFormat, Tape, Word};
use snail_core::solver::{build_iteration_tape, tape_input_count, StepResult};
use snail_gc::{compile, CompiledTape};

use crate::msg::{Mode, PoseInput, Program, SessionParams};
use crate::ProtocolError;

/// The compiled program plus the input partition, derived identically by
/// all three parties from the session parameters.
#[derive(Clone, Debug)]
pub struct Plan {
    pub ct: CompiledTape,
    /// Tape input indices, in tape order, per supplier.
    pub client_inputs: Vec<usize>,
    pub evaluator_inputs: Vec<usize>,
    pub generator_inputs: Vec<usize>,
    sil_n: Option<usize>,
}

impl Plan {
    pub fn new(params: &SessionParams) -> Result<Plan, ProtocolError> {
        params.validate()?;
        let (tape, evaluator, generator, sil_n) = match &params.program {
            Program::SilStep {
                n,
                intrinsics,
                solver,
            } => {
                let tape = build_iteration_tape(*n, intrinsics, solver)?;
                let evaluator: Vec<usize> = match params.mode {
                    Mode::Offload => vec![],
                    Mode::Split => (2 * n..5 * n).collect(),
                };
                let generator: Vec<usize> = match params.pose {
                    PoseInput::Secret => vec![],
                    PoseInput::Public => (5 * n..5 * n + 6).collect(),
                };
                (tape, evaluator, generator, Some(*n))
            }
            Program::Tape {
                bytes,
                evaluator_inputs,
            } => {
                let tape = Tape::from_bytes(bytes)?;
                let (start, len) = *evaluator_inputs;
                if start + len > tape.inputs().len() {
                    return Err(ProtocolError::Params("evaluator input range out of bounds".into()));
                }
                let evaluator = match params.mode {
                    Mode::Offload => vec![],
                    Mode::Split => (start..start + len).collect(),
                };
                (tape, evaluator, vec![], None)
            }
        };
        let total = tape.inputs().len();
        let client = (0..total)
            .filter(|k| !evaluator.contains(k) && !generator.contains(k))
            .collect();
        Ok(Plan {
            ct: compile(&tape)?,
            client_inputs: client,
            evaluator_inputs: evaluator,
            generator_inputs: generator,
            sil_n,
        })
    }

    pub fn format(&self) -> NumericFormat {
        self.ct.format()
    }

    fn bits(&self, inputs: &[usize]) -> usize {
        inputs
            .iter()
            .map(|k| self.ct.slot_width(self.ct.tape().inputs()[*k]))
            .sum()
    }

    pub fn client_input_bits(&self) -> usize {
        self.bits(&self.client_inputs)
    }

    pub fn evaluator_input_bits(&self) -> usize {
        self.bits(&self.evaluator_inputs)
    }

    /// Client-held words of one SIL invocation, in plan order.
    pub fn sil_client_words(&self, corr: &CorrespondenceSet, x: &Pose) -> Result<Vec<Word>, ProtocolError> {
        let n = self.sil_n.ok_or_else(|| ProtocolError::Params("not a SIL session".into()))?;
        if corr.len() != n {
            return Err(ProtocolError::InputSize {
                expected: n,
                got: corr.len(),
            });
        }
        let all = snail_core::solver::tape_inputs(corr, x, self.format())?;
        debug_assert_eq!(all.len(), tape_input_count(n));
        Ok(self.client_inputs.iter().map(|k| all[*k]).collect())
    }

    /// Public pose words for the generator, empty when the pose is secret.
    pub fn sil_public_pose(&self, x: &Pose) -> Result<Vec<Word>, ProtocolError> {
        if self.generator_inputs.is_empty() {
            return Ok(vec![]);
        }
        x.to_array()
            .iter()
            .map(|v| self.format().encode(*v).map_err(|e| ProtocolError::Params(e.to_string())))
            .collect()
    }

    /// Map words the evaluator side contributes for a SIL session.
    pub fn sil_map_words(&self, map: &[[f64; 3]]) -> Result<Vec<Word>, ProtocolError> {
        let flat: Vec<f64> = map.iter().flatten().copied().collect();
        self.encode_evaluator_values(&flat)
    }

    pub fn encode_evaluator_values(&self, values: &[f64]) -> Result<Vec<Word>, ProtocolError> {
        if values.len() != self.evaluator_inputs.len() {
            return Err(ProtocolError::InputSize {
                expected: self.evaluator_inputs.len(),
                got: values.len(),
            });
        }
        values
            .iter()
            .map(|v| self.format().encode(*v).map_err(|e| ProtocolError::Params(e.to_string())))
            .collect()
    }

    /// Decodes SIL outputs (pose then squared error).
    pub fn sil_result(&self, words: &[Word], overflow: bool) -> StepResult {
        let f = self.format();
        let v: Vec<f64> = words.iter().map(|w| f.decode(*w)).collect();
        StepResult {
            pose: Pose::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]),
            squared_error: v[6],
            overflow,
        }
    }
}

pub fn encode_words(words: &[Word]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn decode_words(b: &[u8]) -> Result<Vec<Word>, ProtocolError> {
    if !b.len().is_multiple_of(8) {
        return Err(ProtocolError::Malformed("word payload".into()));
    }
    Ok(b.chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
