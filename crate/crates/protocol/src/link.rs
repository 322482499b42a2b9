//! A framed TCP connection that counts bytes, records frame metadata, and
//! optionally injects latency each time its owner turns from sending to
//! waiting.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use snail_gc::frame::{read_frame, write_frame};

use crate::msg::{MsgType, Role};
use crate::ProtocolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    Sent,
    Received,
}

/// What a party can observe about one frame without reading its content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameMeta {
    pub peer: Role,
    pub dir: Dir,
    pub ty: u8,
    /// Bytes on the wire, headers included.
    pub bytes: u64,
}

/// Frame log shared by all links of one party in one session.
pub type FrameLog = Arc<Mutex<Vec<FrameMeta>>>;

/// Counts rounds for one party across all its links: a round is the first
/// read after one or more writes. Each round sleeps `latency`.
#[derive(Debug)]
pub struct RoundClock {
    latency: Duration,
    state: Mutex<(bool, u64)>,
}

impl RoundClock {
    pub fn new(latency: Duration) -> Arc<Self> {
        Arc::new(RoundClock {
            latency,
            state: Mutex::new((true, 0)),
        })
    }

    pub fn rounds(&self) -> u64 {
        self.state.lock().expect("clock lock").1
    }

    fn wrote(&self) {
        self.state.lock().expect("clock lock").0 = true;
    }

    fn before_read(&self) {
        let wait = {
            let mut s = self.state.lock().expect("clock lock");
            let w = s.0;
            if w {
                s.0 = false;
                s.1 += 1;
            }
            w
        };
        if wait && !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
    }
}

pub struct Link {
    peer: Role,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    tx: u64,
    rx: u64,
    log: FrameLog,
    clock: Option<Arc<RoundClock>>,
}

impl Link {
    pub fn new(stream: TcpStream, peer: Role, log: FrameLog) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let r = stream.try_clone()?;
        Ok(Link {
            peer,
            reader: BufReader::with_capacity(1 << 16, r),
            writer: BufWriter::with_capacity(1 << 16, stream),
            tx: 0,
            rx: 0,
            log,
            clock: None,
        })
    }

    pub fn with_clock(mut self, clock: Arc<RoundClock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn peer(&self) -> Role {
        self.peer
    }

    /// Re-targets the frame log, e.g. when a connection is handed to the
    /// session it belongs to.
    pub fn set_log(&mut self, log: FrameLog) {
        self.log = log;
    }

    pub fn set_peer(&mut self, peer: Role) {
        self.peer = peer;
    }

    pub fn tx_bytes(&self) -> u64 {
        self.tx
    }

    pub fn rx_bytes(&self) -> u64 {
        self.rx
    }

    /// Logs a frame sequence moved through the raw `Read`/`Write` impls as
    /// one entry.
    pub fn record(&self, dir: Dir, ty: MsgType, bytes: u64) {
        self.log.lock().expect("log lock").push(FrameMeta {
            peer: self.peer,
            dir,
            ty: ty as u8,
            bytes,
        });
    }

    pub fn send(&mut self, ty: MsgType, payload: &[u8]) -> Result<(), ProtocolError> {
        write_frame(self, ty as u8, payload)?;
        self.flush()?;
        self.record(Dir::Sent, ty, (payload.len() + snail_gc::frame::HEADER_BYTES) as u64);
        Ok(())
    }

    pub fn recv(&mut self) -> Result<(MsgType, Vec<u8>), ProtocolError> {
        let (ty, payload) = read_frame(self)?;
        let t = MsgType::from_u8(ty).ok_or_else(|| ProtocolError::Malformed(format!("message type {ty}")))?;
        self.record(Dir::Received, t, (payload.len() + snail_gc::frame::HEADER_BYTES) as u64);
        Ok((t, payload))
    }

    pub fn expect(&mut self, ty: MsgType) -> Result<Vec<u8>, ProtocolError> {
        let (got, payload) = self.recv()?;
        if got != ty {
            return Err(ProtocolError::Unexpected { expected: ty, got });
        }
        Ok(payload)
    }
}

impl Write for Link {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.writer.write(buf)?;
        self.tx += n as u64;
        if let Some(c) = &self.clock {
            c.wrote();
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

impl Read for Link {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        // Never block on the peer with our own bytes still buffered.
        self.writer.flush()?;
        if let Some(c) = &self.clock {
            c.before_read();
        }
        let n = self.reader.read(buf)?;
        self.rx += n as u64;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn pair() -> (Link, Link, FrameLog) {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let a = TcpStream::connect(l.local_addr().unwrap()).unwrap();
        let (b, _) = l.accept().unwrap();
        let log: FrameLog = Default::default();
        (
            Link::new(a, Role::Generator, log.clone()).unwrap(),
            Link::new(b, Role::Client, Default::default()).unwrap(),
            log,
        )
    }

    #[test]
    fn frames_are_counted_and_logged() {
        let (mut a, mut b, log) = pair();
        a.send(MsgType::Hello, b"abc").unwrap();
        assert_eq!(b.expect(MsgType::Hello).unwrap(), b"abc");
        assert_eq!((a.tx_bytes(), b.rx_bytes()), (8, 8));
        b.send(MsgType::Bye, &[]).unwrap();
        assert!(matches!(
            a.expect(MsgType::StepDone),
            Err(ProtocolError::Unexpected { .. })
        ));
        let log = log.lock().unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].dir, Dir::Sent);
        assert_eq!(log[1].ty, MsgType::Bye as u8);
    }

    #[test]
    fn rounds_count_turns_from_sending_to_waiting() {
        let (a, mut b, _) = pair();
        let clock = RoundClock::new(Duration::from_millis(5));
        let mut a = a.with_clock(clock.clone());
        let t = std::time::Instant::now();
        for _ in 0..4 {
            a.send(MsgType::StepBegin, &[]).unwrap();
            a.send(MsgType::StepBegin, &[]).unwrap();
            b.expect(MsgType::StepBegin).unwrap();
            b.expect(MsgType::StepBegin).unwrap();
            b.send(MsgType::StepDone, &[1]).unwrap();
            b.send(MsgType::StepDone, &[1]).unwrap();
            a.expect(MsgType::StepDone).unwrap();
            a.expect(MsgType::StepDone).unwrap();
        }
        assert_eq!(clock.rounds(), 4);
        assert!(t.elapsed() >= Duration::from_millis(20));
    }
}
