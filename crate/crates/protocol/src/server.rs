//! Generator and evaluator servers. Every client connection starts a
//! session; the generator dials the evaluator named in the session
//! parameters, and the evaluator pairs the two connections by session id.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use snail_core::obliv::Word;
use snail_gc::frame::{decode_labels, encode_labels, pack_bits, ChunkFraming, ChunkReader, ChunkWriter, GcMsg};
use snail_gc::garble::{
    constant_labels, evaluate_tape, garble_tape, input_active_labels, input_bits, input_zero_labels,
};
use snail_gc::label::Label;
use snail_gc::ot::{decode_points, encode_points, OtReceiver, OtSender};
use snail_gc::GarbleSeed;

use crate::link::{Dir, FrameLog, FrameMeta, Link};
use crate::msg::{Encoding, Hello, MsgType, Role, SessionParams};
use crate::plan::{decode_words, Plan};
use crate::{gc_unwrap, gc_wrap, CircuitMeta, ProtocolError};

/// Garbled tables travel as GC_STREAM frames wrapping TABLE_CHUNK frames.
pub const TABLE_FRAMING: ChunkFraming = ChunkFraming {
    outer: Some(MsgType::GcStream as u8),
};

/// How long the evaluator waits for the generator half of a session.
const PAIRING_TIMEOUT: Duration = Duration::from_secs(60);

/// Frames one server saw during one invocation (or during session setup
/// and teardown, with `index` `None`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationTranscript {
    pub session_id: u64,
    pub role: Role,
    pub index: Option<u64>,
    pub frames: Vec<FrameMeta>,
}

pub type TranscriptStore = Arc<Mutex<Vec<InvocationTranscript>>>;

#[derive(Clone, Debug, Default)]
pub struct ServerConfig {
    /// Evaluator side in the split setting: the values of the evaluator's
    /// tape inputs (for SIL, the flattened map points).
    pub evaluator_values: Option<Vec<f64>>,
    pub transcripts: TranscriptStore,
}

/// Generator halves waiting for their client session on the evaluator.
#[derive(Default)]
struct Pairing {
    pending: Mutex<HashMap<u64, Link>>,
    arrived: Condvar,
}

impl Pairing {
    fn offer(&self, id: u64, link: Link) {
        self.pending.lock().expect("pairing lock").insert(id, link);
        self.arrived.notify_all();
    }

    fn take(&self, id: u64) -> Result<Link, ProtocolError> {
        let guard = self.pending.lock().expect("pairing lock");
        let (mut guard, timeout) = self
            .arrived
            .wait_timeout_while(guard, PAIRING_TIMEOUT, |m| !m.contains_key(&id))
            .expect("pairing lock");
        if timeout.timed_out() {
            return Err(ProtocolError::Timeout(format!("generator for session {id}")));
        }
        Ok(guard.remove(&id).expect("present"))
    }
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    pub transcripts: TranscriptStore,
}

/// Binds `addr` and serves `role` on a background thread.
pub fn spawn(role: Role, addr: &str, cfg: ServerConfig) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let handle = ServerHandle {
        addr: listener.local_addr()?,
        transcripts: cfg.transcripts.clone(),
    };
    thread::spawn(move || serve(role, listener, cfg));
    Ok(handle)
}

/// Accept loop; one thread per connection.
pub fn serve(role: Role, listener: TcpListener, cfg: ServerConfig) -> io::Result<()> {
    let pairing = Arc::new(Pairing::default());
    let cfg = Arc::new(cfg);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(_) => continue,
        };
        let (pairing, cfg) = (pairing.clone(), cfg.clone());
        thread::spawn(move || {
            if let Err(e) = handle(role, stream, &pairing, &cfg) {
                eprintln!("{role:?}: session ended with error: {e}");
            }
        });
    }
    Ok(())
}

fn handle(role: Role, stream: TcpStream, pairing: &Pairing, cfg: &ServerConfig) -> Result<(), ProtocolError> {
    let log: FrameLog = Default::default();
    let mut link = Link::new(stream, Role::Client, log.clone())?;
    let hello = Hello::decode(&link.expect(MsgType::Hello)?)?;
    match (role, hello.role) {
        (Role::Evaluator, Role::Generator) => {
            link.set_peer(Role::Generator);
            pairing.offer(hello.session_id, link);
            Ok(())
        }
        (_, Role::Client) => {
            let params = SessionParams::decode(&link.expect(MsgType::Params)?)?;
            let plan = Plan::new(&params)?;
            let mut s = Session {
                id: hello.session_id,
                role,
                log,
                store: cfg.transcripts.clone(),
                rng: StdRng::from_entropy(),
            };
            match role {
                Role::Generator => s.run_generator(link, &params, &plan),
                Role::Evaluator => {
                    let mut gen = pairing.take(hello.session_id)?;
                    gen.set_log(s.log.clone());
                    let values = match &cfg.evaluator_values {
                        Some(v) if !plan.evaluator_inputs.is_empty() => plan.encode_evaluator_values(v)?,
                        None if !plan.evaluator_inputs.is_empty() => {
                            return Err(ProtocolError::Params("evaluator holds no input values".into()))
                        }
                        _ => vec![],
                    };
                    s.run_evaluator(link, gen, &plan, &values)
                }
                _ => Err(ProtocolError::Params(format!("cannot serve as {role:?}"))),
            }
        }
        (_, other) => Err(ProtocolError::Params(format!("unexpected peer {other:?}"))),
    }
}

struct Session {
    id: u64,
    role: Role,
    log: FrameLog,
    store: TranscriptStore,
    rng: StdRng,
}

impl Session {
    fn flush_log(&self, index: Option<u64>) {
        let frames = std::mem::take(&mut *self.log.lock().expect("log lock"));
        self.store.lock().expect("store lock").push(InvocationTranscript {
            session_id: self.id,
            role: self.role,
            index,
            frames,
        });
    }

    /// Waits for STEP_BEGIN or BYE; returns the STEP_BEGIN payload.
    fn next_step(&self, client: &mut Link) -> Result<Option<Vec<u8>>, ProtocolError> {
        match client.recv()? {
            (MsgType::StepBegin, p) => Ok(Some(p)),
            (MsgType::Bye, _) => Ok(None),
            (got, _) => Err(ProtocolError::Unexpected {
                expected: MsgType::StepBegin,
                got,
            }),
        }
    }

    fn run_generator(&mut self, mut client: Link, params: &SessionParams, plan: &Plan) -> Result<(), ProtocolError> {
        let stream = TcpStream::connect(&params.evaluator_addr)?;
        let mut eval = Link::new(stream, Role::Evaluator, self.log.clone())?;
        eval.send(
            MsgType::Hello,
            &Hello {
                role: Role::Generator,
                session_id: self.id,
            }
            .encode(),
        )?;
        self.flush_log(None);
        let mut index = 0;
        while let Some(begin) = self.next_step(&mut client)? {
            let pose = decode_words(&begin)?;
            if pose.len() != plan.generator_inputs.len() {
                return Err(ProtocolError::InputSize {
                    expected: plan.generator_inputs.len(),
                    got: pose.len(),
                });
            }
            self.generate_once(&mut client, &mut eval, params, plan, &pose)?;
            client.expect(MsgType::StepDone)?;
            self.flush_log(Some(index));
            index += 1;
        }
        self.flush_log(None);
        Ok(())
    }

    fn generate_once(
        &mut self,
        client: &mut Link,
        eval: &mut Link,
        params: &SessionParams,
        plan: &Plan,
        generator_words: &[Word],
    ) -> Result<(), ProtocolError> {
        let ct = &plan.ct;
        let seed = GarbleSeed::random(&mut self.rng);
        let delta = seed.delta();
        let pairs = |ks: &[usize]| -> Vec<[Label; 2]> {
            ks.iter()
                .flat_map(|k| input_zero_labels(ct, &seed, *k))
                .map(|z| [z, z ^ delta])
                .collect()
        };
        match params.encoding {
            Encoding::Seeded => {
                let mut m = seed.seed().to_vec();
                m.extend_from_slice(&delta.to_bytes());
                client.send(MsgType::SeedMaterial, &m)?;
            }
            Encoding::Naive => {
                let flat: Vec<Label> = pairs(&plan.client_inputs).into_iter().flatten().collect();
                client.send(MsgType::GcStream, &gc_wrap(GcMsg::InputLabels, &encode_labels(&flat)))?;
            }
        }
        if !plan.evaluator_inputs.is_empty() {
            let sender = OtSender::new(&mut self.rng);
            eval.send(MsgType::OtMsg, &sender.setup_message())?;
            let points = decode_points(&eval.expect(MsgType::OtMsg)?)?;
            let masked = sender.send(&points, &pairs(&plan.evaluator_inputs))?;
            let flat: Vec<Label> = masked.into_iter().flatten().collect();
            eval.send(MsgType::OtMsg, &encode_labels(&flat))?;
        }
        eval.send(MsgType::GcStream, &gc_wrap(GcMsg::CircuitMeta, &CircuitMeta::of(ct).encode()))?;
        let mut labels = constant_labels(ct, &seed);
        for (k, w) in plan.generator_inputs.iter().zip(generator_words) {
            labels.extend(input_active_labels(ct, &seed, *k, *w));
        }
        eval.send(MsgType::GcStream, &gc_wrap(GcMsg::InputLabels, &encode_labels(&labels)))?;
        let before = eval.tx_bytes();
        let mut w = ChunkWriter::new(eval, TABLE_FRAMING);
        let map = garble_tape(ct, &seed, &mut w)?;
        w.finish()?;
        let streamed = eval.tx_bytes() - before;
        if streamed > 0 {
            eval.record(Dir::Sent, MsgType::GcStream, streamed);
        }
        client.send(MsgType::GcStream, &gc_wrap(GcMsg::DecodeMap, &pack_bits(&map.0)))?;
        Ok(())
    }

    fn run_evaluator(&mut self, mut client: Link, mut gen: Link, plan: &Plan, values: &[Word]) -> Result<(), ProtocolError> {
        self.flush_log(None);
        let mut index = 0;
        while self.next_step(&mut client)?.is_some() {
            let (g_rx, g_tx) = (gen.rx_bytes(), gen.tx_bytes());
            self.evaluate_once(&mut client, &mut gen, plan, values)?;
            let mut stats = (gen.rx_bytes() - g_rx).to_le_bytes().to_vec();
            stats.extend_from_slice(&(gen.tx_bytes() - g_tx).to_le_bytes());
            client.send(MsgType::StepDone, &stats)?;
            client.expect(MsgType::StepDone)?;
            self.flush_log(Some(index));
            index += 1;
        }
        self.flush_log(None);
        Ok(())
    }

    fn evaluate_once(&mut self, client: &mut Link, gen: &mut Link, plan: &Plan, values: &[Word]) -> Result<(), ProtocolError> {
        let ct = &plan.ct;
        let mut own = Vec::new();
        if !plan.evaluator_inputs.is_empty() {
            let setup: [u8; 32] = gen
                .expect(MsgType::OtMsg)?
                .try_into()
                .map_err(|_| ProtocolError::Malformed("OT setup".into()))?;
            let bits: Vec<bool> = plan
                .evaluator_inputs
                .iter()
                .zip(values)
                .flat_map(|(k, v)| input_bits(ct, *k, *v))
                .collect();
            let (receiver, points) = OtReceiver::new(&mut self.rng, &setup, &bits)?;
            gen.send(MsgType::OtMsg, &encode_points(&points))?;
            let masked = decode_labels(&gen.expect(MsgType::OtMsg)?)?;
            if masked.len() != 2 * bits.len() {
                return Err(ProtocolError::Malformed("OT reply".into()));
            }
            let pairs: Vec<[Label; 2]> = masked.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            own = receiver.receive(&pairs)?;
        }
        let meta = CircuitMeta::decode(&gc_unwrap(&gen.expect(MsgType::GcStream)?, GcMsg::CircuitMeta)?)?;
        if meta != CircuitMeta::of(ct) {
            return Err(ProtocolError::CircuitMismatch);
        }
        let gen_labels = decode_labels(&gc_unwrap(&gen.expect(MsgType::GcStream)?, GcMsg::InputLabels)?)?;
        let client_labels = decode_labels(&client.expect(MsgType::InputLabels)?)?;
        let width = |k: &usize| ct.slot_width(ct.tape().inputs()[*k]);
        let const_count = gen_labels.len()
            - plan.generator_inputs.iter().map(width).sum::<usize>();
        let (consts, mut from_gen) = (&gen_labels[..const_count], gen_labels[const_count..].iter());
        let mut from_client = client_labels.iter();
        let mut from_self = own.iter();
        let mut inputs = Vec::with_capacity(snail_gc::garble::tape_input_bits(ct));
        for k in 0..ct.tape().inputs().len() {
            let src: &mut dyn Iterator<Item = &Label> = if plan.evaluator_inputs.contains(&k) {
                &mut from_self
            } else if plan.generator_inputs.contains(&k) {
                &mut from_gen
            } else {
                &mut from_client
            };
            for _ in 0..width(&k) {
                inputs.push(*src.next().ok_or(ProtocolError::InputSize {
                    expected: snail_gc::garble::tape_input_bits(ct),
                    got: inputs.len(),
                })?);
            }
        }
        if from_client.next().is_some() || from_gen.next().is_some() {
            return Err(ProtocolError::Malformed("surplus input labels".into()));
        }
        let before = gen.rx_bytes();
        let mut reader = ChunkReader::new(gen, TABLE_FRAMING);
        let out = evaluate_tape(ct, consts, &inputs, &mut reader)?;
        if !reader.is_drained() {
            return Err(ProtocolError::Malformed("surplus garbled tables".into()));
        }
        let streamed = gen.rx_bytes() - before;
        if streamed > 0 {
            gen.record(Dir::Received, MsgType::GcStream, streamed);
        }
        client.send(MsgType::OutputLabels, &encode_labels(&out))?;
        Ok(())
    }
}
