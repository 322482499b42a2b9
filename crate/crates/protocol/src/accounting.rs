//! Communication accounting and the stream-length privacy bound.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use snail_gc::label::Label;

use crate::ProtocolError;

/// Label length κ in bits.
pub const KAPPA_BITS: u64 = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommReport {
    pub client_tx_bits: u64,
    pub client_rx_bits: u64,
    /// Everything the two servers send, to each other and to the client.
    pub server_tx_bits: u64,
    /// Times the client blocked waiting for a server after sending.
    pub rounds: u64,
}

impl CommReport {
    pub fn client_total_bits(&self) -> u64 {
        self.client_tx_bits + self.client_rx_bits
    }
}

impl Add for CommReport {
    type Output = CommReport;
    fn add(self, o: CommReport) -> CommReport {
        CommReport {
            client_tx_bits: self.client_tx_bits + o.client_tx_bits,
            client_rx_bits: self.client_rx_bits + o.client_rx_bits,
            server_tx_bits: self.server_tx_bits + o.server_tx_bits,
            rounds: self.rounds + o.rounds,
        }
    }
}

impl AddAssign for CommReport {
    fn add_assign(&mut self, o: CommReport) {
        *self = *self + o;
    }
}

impl std::iter::Sum for CommReport {
    fn sum<I: Iterator<Item = CommReport>>(iter: I) -> Self {
        iter.fold(CommReport::default(), Add::add)
    }
}

/// Naive input encoding: the generator sends both labels of every input
/// bit to the client, which forwards the one matching its bit.
/// Counts label payload only.
pub fn client_encode_naive(
    bits: &[bool],
    pairs: &[[Label; 2]],
) -> Result<(Vec<Label>, CommReport), ProtocolError> {
    if bits.len() != pairs.len() {
        return Err(ProtocolError::InputSize {
            expected: pairs.len(),
            got: bits.len(),
        });
    }
    let labels = bits.iter().zip(pairs).map(|(b, p)| p[*b as usize]).collect();
    Ok((labels, naive_report(bits.len() as u64)))
}

pub fn naive_report(input_bits: u64) -> CommReport {
    CommReport {
        client_tx_bits: KAPPA_BITS * input_bits,
        client_rx_bits: 2 * KAPPA_BITS * input_bits,
        server_tx_bits: 2 * KAPPA_BITS * input_bits,
        rounds: if input_bits == 0 { 0 } else { 1 },
    }
}

/// Seeded input encoding: the client receives the 2κ-bit seed material and
/// derives its active labels itself, with the same derivation the
/// generator garbles with. Counts label and seed payload only.
pub fn client_encode_seeded(
    bits: &[bool],
    zero_labels: impl Fn(usize) -> Label,
    delta: Label,
) -> (Vec<Label>, CommReport) {
    let labels = bits
        .iter()
        .enumerate()
        .map(|(i, b)| zero_labels(i).xor_if(*b, delta))
        .collect();
    (labels, seeded_report(bits.len() as u64))
}

pub fn seeded_report(input_bits: u64) -> CommReport {
    CommReport {
        client_tx_bits: KAPPA_BITS * input_bits,
        client_rx_bits: 2 * KAPPA_BITS,
        server_tx_bits: 2 * KAPPA_BITS,
        rounds: 1,
    }
}

/// Probability bound for an adversarial server guessing which invocations
/// belong to one image, given `o` observed invocations and a public bound
/// `c` on iterations per image. Only the combinatorial term is computed;
/// the negligible cryptographic term is left out, so `bound` is a lower
/// bound on the attacker's uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBound {
    pub o: u64,
    pub c: u64,
    /// `None` when `o ≤ c`: the stream is too short for the argument.
    pub bound: Option<f64>,
}

impl PrivacyBound {
    pub fn insufficient_stream(&self) -> bool {
        self.bound.is_none()
    }
}

/// `1 / (o − o/c)` for `o > c`.
pub fn privacy_bound(o: u64, c: u64) -> Result<PrivacyBound, ProtocolError> {
    if c < 2 {
        return Err(ProtocolError::Params(format!("stream bound c must be at least 2, got {c}")));
    }
    let bound = if o > c {
        let (o, c) = (o as f64, c as f64);
        Some(1.0 / (o - o / c))
    } else {
        None
    };
    Ok(PrivacyBound { o, c, bound })
}
