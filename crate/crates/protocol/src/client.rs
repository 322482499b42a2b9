//! The client role: owns the secret inputs, drives invocations, decodes
//! outputs, and keeps the session's communication ledger.

use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use snail_core::geometry::{CorrespondenceSet, Pose};
use snail_core::obliv::Word;
use snail_core::solver::{client_converged, StepResult};
use snail_gc::frame::{decode_labels, encode_labels, unpack_bits, GcMsg};
use snail_gc::garble::{decode_tape, input_active_labels, input_bits, DecodeMap};
use snail_gc::label::Label;
use snail_gc::GarbleSeed;

use crate::accounting::CommReport;
use crate::link::{FrameLog, Link, RoundClock};
use crate::msg::{Encoding, Hello, MsgType, Role, SessionParams};
use crate::plan::{encode_words, Plan};
use crate::{gc_unwrap, ProtocolError};

/// Per-invocation label payload the client handled, for checking the
/// accounting against what actually crossed the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPayload {
    /// Seed material or label pairs received from the generator.
    pub received_bits: u64,
    /// Labels forwarded to the evaluator.
    pub sent_bits: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: u64,
    pub setup: CommReport,
    pub steps: Vec<CommReport>,
    pub teardown: CommReport,
    /// Counters of the client's two connections over the whole session.
    pub measured_client_tx_bits: u64,
    pub measured_client_rx_bits: u64,
}

impl SessionSummary {
    pub fn total(&self) -> CommReport {
        self.setup + self.steps.iter().copied().sum::<CommReport>() + self.teardown
    }
}

pub struct Client {
    id: u64,
    params: SessionParams,
    plan: Plan,
    gen: Link,
    eval: Link,
    clock: Arc<RoundClock>,
    setup: CommReport,
    steps: Vec<CommReport>,
    last_payload: LabelPayload,
}

#[derive(Clone, Copy)]
struct Counters {
    tx: u64,
    rx: u64,
    rounds: u64,
}

impl Client {
    /// Opens a session with both servers. `params.evaluator_addr` is
    /// overwritten with `evaluator`.
    pub fn connect(
        generator: &str,
        evaluator: &str,
        mut params: SessionParams,
        latency: Duration,
    ) -> Result<Client, ProtocolError> {
        params.evaluator_addr = evaluator.to_string();
        let plan = Plan::new(&params)?;
        let clock = RoundClock::new(latency);
        let log: FrameLog = Default::default();
        let gen = Link::new(TcpStream::connect(generator)?, Role::Generator, log.clone())?.with_clock(clock.clone());
        let eval = Link::new(TcpStream::connect(evaluator)?, Role::Evaluator, log)?.with_clock(clock.clone());
        let id: u64 = rand::thread_rng().gen();
        let mut c = Client {
            id,
            params,
            plan,
            gen,
            eval,
            clock,
            setup: CommReport::default(),
            steps: Vec::new(),
            last_payload: LabelPayload::default(),
        };
        let start = c.counters();
        let hello = Hello {
            role: Role::Client,
            session_id: id,
        }
        .encode();
        let p = c.params.encode();
        c.eval.send(MsgType::Hello, &hello)?;
        c.eval.send(MsgType::Params, &p)?;
        c.gen.send(MsgType::Hello, &hello)?;
        c.gen.send(MsgType::Params, &p)?;
        c.setup = c.report_since(start, 0);
        Ok(c)
    }

    pub fn session_id(&self) -> u64 {
        self.id
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    /// Invocations so far, the counter `o`.
    pub fn invocations(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn steps(&self) -> &[CommReport] {
        &self.steps
    }

    pub fn last_label_payload(&self) -> LabelPayload {
        self.last_payload
    }

    fn counters(&self) -> Counters {
        Counters {
            tx: self.gen.tx_bytes() + self.eval.tx_bytes(),
            rx: self.gen.rx_bytes() + self.eval.rx_bytes(),
            rounds: self.clock.rounds(),
        }
    }

    fn report_since(&self, start: Counters, server_only_bytes: u64) -> CommReport {
        let now = self.counters();
        let rx = now.rx - start.rx;
        CommReport {
            client_tx_bits: 8 * (now.tx - start.tx),
            client_rx_bits: 8 * rx,
            server_tx_bits: 8 * (rx + server_only_bytes),
            rounds: now.rounds - start.rounds,
        }
    }

    /// One invocation on raw words: `client_words` for the plan's client
    /// inputs, `generator_words` for inputs revealed to the generator.
    pub fn invoke(
        &mut self,
        client_words: &[Word],
        generator_words: &[Word],
    ) -> Result<(Vec<Word>, bool, CommReport), ProtocolError> {
        if client_words.len() != self.plan.client_inputs.len() {
            return Err(ProtocolError::InputSize {
                expected: self.plan.client_inputs.len(),
                got: client_words.len(),
            });
        }
        let start = self.counters();
        self.gen.send(MsgType::StepBegin, &encode_words(generator_words))?;
        self.eval.send(MsgType::StepBegin, &[])?;
        let ct = &self.plan.ct;
        let (labels, received_bits) = match self.params.encoding {
            Encoding::Seeded => {
                let m = self.gen.expect(MsgType::SeedMaterial)?;
                if m.len() != 32 {
                    return Err(ProtocolError::Malformed("seed material".into()));
                }
                let seed = GarbleSeed::new(m[..16].try_into().expect("16 bytes"));
                if seed.delta() != Label::from_bytes(m[16..].try_into().expect("16 bytes")) {
                    return Err(ProtocolError::SeedMismatch);
                }
                let labels: Vec<Label> = self
                    .plan
                    .client_inputs
                    .iter()
                    .zip(client_words)
                    .flat_map(|(k, w)| input_active_labels(ct, &seed, *k, *w))
                    .collect();
                (labels, 8 * m.len() as u64)
            }
            Encoding::Naive => {
                let flat = decode_labels(&gc_unwrap(&self.gen.expect(MsgType::GcStream)?, GcMsg::InputLabels)?)?;
                let bits: Vec<bool> = self
                    .plan
                    .client_inputs
                    .iter()
                    .zip(client_words)
                    .flat_map(|(k, w)| input_bits(ct, *k, *w))
                    .collect();
                if flat.len() != 2 * bits.len() {
                    return Err(ProtocolError::InputSize {
                        expected: 2 * bits.len(),
                        got: flat.len(),
                    });
                }
                let pairs: Vec<[Label; 2]> = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                let (labels, _) = crate::accounting::client_encode_naive(&bits, &pairs)?;
                (labels, 128 * flat.len() as u64)
            }
        };
        let payload = encode_labels(&labels);
        self.eval.send(MsgType::InputLabels, &payload)?;
        self.last_payload = LabelPayload {
            received_bits,
            sent_bits: 8 * payload.len() as u64,
        };
        let map = unpack_bits(&gc_unwrap(&self.gen.expect(MsgType::GcStream)?, GcMsg::DecodeMap)?)?;
        let out = decode_labels(&self.eval.expect(MsgType::OutputLabels)?)?;
        let stats = self.eval.expect(MsgType::StepDone)?;
        if stats.len() != 16 {
            return Err(ProtocolError::Malformed("step statistics".into()));
        }
        let g_to_e = u64::from_le_bytes(stats[..8].try_into().expect("8 bytes"));
        let e_to_g = u64::from_le_bytes(stats[8..].try_into().expect("8 bytes"));
        let (words, overflow) = decode_tape(ct, &out, &DecodeMap(map))?;
        self.gen.send(MsgType::StepDone, &[])?;
        self.eval.send(MsgType::StepDone, &[])?;
        let report = self.report_since(start, g_to_e + e_to_g);
        self.steps.push(report);
        Ok((words, overflow, report))
    }

    /// One SIL iteration from `x`.
    pub fn sil_step(&mut self, corr: &CorrespondenceSet, x: &Pose) -> Result<(StepResult, CommReport), ProtocolError> {
        let words = self.plan.sil_client_words(corr, x)?;
        let pose = self.plan.sil_public_pose(x)?;
        let (out, overflow, report) = self.invoke(&words, &pose)?;
        Ok((self.plan.sil_result(&out, overflow), report))
    }

    /// Steps from `x0` until the client-side threshold test passes or the
    /// solver's `max_outer` steps ran.
    pub fn localize(
        &mut self,
        corr: &CorrespondenceSet,
        x0: &Pose,
    ) -> Result<(Vec<StepResult>, CommReport), ProtocolError> {
        let cfg = match &self.params.program {
            crate::msg::Program::SilStep { solver, .. } => *solver,
            _ => return Err(ProtocolError::Params("not a SIL session".into())),
        };
        let mut x = *x0;
        let mut steps = Vec::new();
        let mut total = CommReport::default();
        for _ in 0..cfg.max_outer {
            let (s, r) = self.sil_step(corr, &x)?;
            total += r;
            steps.push(s);
            x = s.pose;
            if client_converged(&s, &cfg) {
                break;
            }
        }
        Ok((steps, total))
    }

    /// Ends the session.
    pub fn close(mut self) -> Result<SessionSummary, ProtocolError> {
        let start = self.counters();
        self.gen.send(MsgType::Bye, &[])?;
        self.eval.send(MsgType::Bye, &[])?;
        let teardown = self.report_since(start, 0);
        let end = self.counters();
        Ok(SessionSummary {
            session_id: self.id,
            setup: self.setup,
            steps: self.steps,
            teardown,
            measured_client_tx_bits: 8 * end.tx,
            measured_client_rx_bits: 8 * end.rx,
        })
    }
}
