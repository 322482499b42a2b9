//! Batched base oblivious transfer of labels, the Chou–Orlandi
//! Diffie–Hellman construction over the Ristretto group.
//!
//! The sender publishes `A = aG`. For choice `c` the receiver sends
//! `B = bG + c·A` and derives `k = H(bA)`; the sender derives
//! `k0 = H(aB)` and `k1 = H(a(B − A))` and returns both messages masked.
//! `B` is a uniformly random group element whatever `c` is.

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::label::Label;
use crate::GcError;

/// Compressed group element on the wire.
pub type Point = [u8; 32];

fn decompress(p: &Point) -> Result<RistrettoPoint, GcError> {
    CompressedRistretto(*p)
        .decompress()
        .ok_or(GcError::InvalidPoint)
}

fn kdf(index: u64, a: &Point, b: &Point, shared: &RistrettoPoint) -> Label {
    let mut h = Sha256::new();
    h.update(b"snail ot");
    h.update(index.to_le_bytes());
    h.update(a);
    h.update(b);
    h.update(shared.compress().as_bytes());
    let d = h.finalize();
    Label::from_bytes(d[..16].try_into().expect("16 bytes"))
}

pub struct OtSender {
    a: Scalar,
    big_a: RistrettoPoint,
    setup: Point,
}

impl OtSender {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let a = Scalar::random(rng);
        let big_a = &a * RISTRETTO_BASEPOINT_TABLE;
        OtSender {
            a,
            big_a,
            setup: big_a.compress().to_bytes(),
        }
    }

    /// The sender's first message, `A`.
    pub fn setup_message(&self) -> Point {
        self.setup
    }

    /// Masks each `(m0, m1)` pair with keys derived from the receiver's
    /// points.
    pub fn send(&self, choices: &[Point], pairs: &[[Label; 2]]) -> Result<Vec<[Label; 2]>, GcError> {
        if choices.len() != pairs.len() {
            return Err(GcError::LabelCount {
                expected: pairs.len(),
                got: choices.len(),
            });
        }
        choices
            .iter()
            .zip(pairs)
            .enumerate()
            .map(|(i, (bp, m))| {
                let b = decompress(bp)?;
                let k0 = kdf(i as u64, &self.setup, bp, &(self.a * b));
                let k1 = kdf(i as u64, &self.setup, bp, &(self.a * (b - self.big_a)));
                Ok([m[0] ^ k0, m[1] ^ k1])
            })
            .collect()
    }
}

pub struct OtReceiver {
    choices: Vec<bool>,
    keys: Vec<Label>,
}

impl OtReceiver {
    /// Answers the sender's setup for each choice bit; returns the receiver
    /// state and the points to send.
    pub fn new<R: RngCore + CryptoRng>(
        rng: &mut R,
        setup: &Point,
        choices: &[bool],
    ) -> Result<(Self, Vec<Point>), GcError> {
        let big_a = decompress(setup)?;
        let mut keys = Vec::with_capacity(choices.len());
        let mut msgs = Vec::with_capacity(choices.len());
        for (i, c) in choices.iter().enumerate() {
            let b = Scalar::random(rng);
            let bg = &b * RISTRETTO_BASEPOINT_TABLE;
            let p = if *c { bg + big_a } else { bg };
            let pb = p.compress().to_bytes();
            keys.push(kdf(i as u64, setup, &pb, &(b * big_a)));
            msgs.push(pb);
        }
        Ok((
            OtReceiver {
                choices: choices.to_vec(),
                keys,
            },
            msgs,
        ))
    }

    pub fn receive(&self, masked: &[[Label; 2]]) -> Result<Vec<Label>, GcError> {
        if masked.len() != self.keys.len() {
            return Err(GcError::LabelCount {
                expected: self.keys.len(),
                got: masked.len(),
            });
        }
        Ok(masked
            .iter()
            .zip(&self.keys)
            .zip(&self.choices)
            .map(|((m, k), c)| m[*c as usize] ^ *k)
            .collect())
    }
}

pub fn encode_points(points: &[Point]) -> Vec<u8> {
    points.concat()
}

pub fn decode_points(bytes: &[u8]) -> Result<Vec<Point>, GcError> {
    if !bytes.len().is_multiple_of(32) {
        return Err(GcError::Malformed(format!("point payload of {} bytes", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(32)
        .map(|c| c.try_into().expect("32 bytes"))
        .collect())
}
