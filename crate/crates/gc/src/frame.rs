//! Length-prefixed framing: `[u32 LE payload length][type byte][payload]`.
//! The garbled stream uses its own message types; the session protocol
//! nests those frames inside its own.

use std::io::{self, Read, Write};

use crate::label::Label;
use crate::GcError;

/// Bytes of header in front of every payload.
pub const HEADER_BYTES: usize = 5;
/// Upper bound on a single payload; anything larger is treated as corrupt.
pub const MAX_PAYLOAD: usize = 64 << 20;
/// Garbled-table bytes per TABLE_CHUNK frame (the last one may be shorter).
pub const TABLE_CHUNK_BYTES: usize = 1 << 20;

/// Message types of the garbled stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GcMsg {
    CircuitMeta = 1,
    TableChunk = 2,
    InputLabels = 3,
    OutputLabels = 4,
    DecodeMap = 5,
}

impl GcMsg {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => GcMsg::CircuitMeta,
            2 => GcMsg::TableChunk,
            3 => GcMsg::InputLabels,
            4 => GcMsg::OutputLabels,
            5 => GcMsg::DecodeMap,
            _ => return None,
        })
    }
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, ty: u8, payload: &[u8]) -> io::Result<()> {
    assert!(payload.len() <= MAX_PAYLOAD, "frame payload too large");
    let mut header = [0u8; HEADER_BYTES];
    header[..4].copy_from_slice(&(payload.len() as u32).to_le_bytes());
    header[4] = ty;
    w.write_all(&header)?;
    w.write_all(payload)
}

/// Reads one frame. A clean end of stream before the header is reported as
/// [`GcError::Truncated`] like any other short read.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<(u8, Vec<u8>), GcError> {
    let mut header = [0u8; HEADER_BYTES];
    read_exact(r, &mut header)?;
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(GcError::Malformed(format!("frame length {len}")));
    }
    let mut payload = vec![0u8; len];
    read_exact(r, &mut payload)?;
    Ok((header[4], payload))
}

/// Reads one frame and checks its type.
pub fn expect_frame<R: Read + ?Sized>(r: &mut R, ty: u8) -> Result<Vec<u8>, GcError> {
    let (got, payload) = read_frame(r)?;
    if got != ty {
        return Err(GcError::Malformed(format!("expected frame type {ty}, got {got}")));
    }
    Ok(payload)
}

fn read_exact<R: Read + ?Sized>(r: &mut R, buf: &mut [u8]) -> Result<(), GcError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => GcError::Truncated,
        _ => GcError::Io(e),
    })
}

pub fn encode_labels(labels: &[Label]) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * Label::BYTES);
    for l in labels {
        out.extend_from_slice(&l.to_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<Label>, GcError> {
    if !bytes.len().is_multiple_of(Label::BYTES) {
        return Err(GcError::Malformed(format!("label payload of {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(Label::BYTES)
        .map(|c| Label::from_bytes(c.try_into().expect("16 bytes")))
        .collect())
}

/// Bit count (u32 LE) followed by the bits packed LSB first.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = (bits.len() as u32).to_le_bytes().to_vec();
    out.resize(4 + bits.len().div_ceil(8), 0);
    for (i, b) in bits.iter().enumerate() {
        out[4 + i / 8] |= (*b as u8) << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8]) -> Result<Vec<bool>, GcError> {
    let bad = || GcError::Malformed("bit vector".into());
    let n = u32::from_le_bytes(bytes.get(..4).ok_or_else(bad)?.try_into().expect("4 bytes")) as usize;
    if bytes.len() != 4 + n.div_ceil(8) {
        return Err(bad());
    }
    Ok((0..n).map(|i| (bytes[4 + i / 8] >> (i % 8)) & 1 == 1).collect())
}

/// Frame types a [`ChunkWriter`] emits: the table-chunk type and, optionally,
/// an outer type each chunk frame is wrapped in.
#[derive(Clone, Copy, Debug)]
pub struct ChunkFraming {
    pub outer: Option<u8>,
}

impl ChunkFraming {
    pub const BARE: ChunkFraming = ChunkFraming { outer: None };

    /// Framing bytes added around `table_bytes` of garbled tables.
    pub fn overhead(&self, table_bytes: u64) -> u64 {
        let chunks = table_bytes.div_ceil(TABLE_CHUNK_BYTES as u64);
        let per = HEADER_BYTES as u64 * if self.outer.is_some() { 2 } else { 1 };
        chunks * per
    }

    fn emit<W: Write + ?Sized>(&self, w: &mut W, chunk: &[u8]) -> io::Result<()> {
        match self.outer {
            None => write_frame(w, GcMsg::TableChunk as u8, chunk),
            Some(outer) => {
                let mut header = [0u8; HEADER_BYTES];
                header[..4].copy_from_slice(&((chunk.len() + HEADER_BYTES) as u32).to_le_bytes());
                header[4] = outer;
                w.write_all(&header)?;
                write_frame(w, GcMsg::TableChunk as u8, chunk)
            }
        }
    }
}

/// Cuts a byte stream of garbled tables into TABLE_CHUNK frames.
pub struct ChunkWriter<'a, W: Write + ?Sized> {
    inner: &'a mut W,
    framing: ChunkFraming,
    buf: Vec<u8>,
}

impl<'a, W: Write + ?Sized> ChunkWriter<'a, W> {
    pub fn new(inner: &'a mut W, framing: ChunkFraming) -> Self {
        ChunkWriter {
            inner,
            framing,
            buf: Vec::with_capacity(TABLE_CHUNK_BYTES),
        }
    }

    /// Emits the final partial chunk and flushes.
    pub fn finish(mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            self.framing.emit(self.inner, &self.buf)?;
            self.buf.clear();
        }
        self.inner.flush()
    }
}

impl<W: Write + ?Sized> Write for ChunkWriter<'_, W> {
    fn write(&mut self, mut data: &[u8]) -> io::Result<usize> {
        let n = data.len();
        while !data.is_empty() {
            let take = (TABLE_CHUNK_BYTES - self.buf.len()).min(data.len());
            self.buf.extend_from_slice(&data[..take]);
            data = &data[take..];
            if self.buf.len() == TABLE_CHUNK_BYTES {
                self.framing.emit(self.inner, &self.buf)?;
                self.buf.clear();
            }
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Reads garbled tables back out of TABLE_CHUNK frames.
pub struct ChunkReader<'a, R: Read + ?Sized> {
    inner: &'a mut R,
    framing: ChunkFraming,
    buf: Vec<u8>,
    pos: usize,
}

impl<'a, R: Read + ?Sized> ChunkReader<'a, R> {
    pub fn new(inner: &'a mut R, framing: ChunkFraming) -> Self {
        ChunkReader {
            inner,
            framing,
            buf: Vec::new(),
            pos: 0,
        }
    }

    /// True when every byte of every chunk read so far was consumed.
    pub fn is_drained(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn refill(&mut self) -> Result<(), GcError> {
        let payload = match self.framing.outer {
            None => expect_frame(self.inner, GcMsg::TableChunk as u8)?,
            Some(outer) => {
                let wrapped = expect_frame(self.inner, outer)?;
                let mut slice = wrapped.as_slice();
                let inner = expect_frame(&mut slice, GcMsg::TableChunk as u8)?;
                if !slice.is_empty() {
                    return Err(GcError::Malformed("trailing bytes in chunk".into()));
                }
                inner
            }
        };
        if payload.is_empty() {
            return Err(GcError::Malformed("empty table chunk".into()));
        }
        self.buf = payload;
        self.pos = 0;
        Ok(())
    }
}

impl<R: Read + ?Sized> Read for ChunkReader<'_, R> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        if self.pos == self.buf.len() {
            self.refill().map_err(|e| match e {
                GcError::Io(e) => e,
                GcError::Truncated => io::ErrorKind::UnexpectedEof.into(),
                other => io::Error::new(io::ErrorKind::InvalidData, other.to_string()),
            })?;
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}
