//! Wire labels, the seed-derived label PRF, and the fixed-key hash.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

/// A 128-bit wire label. Its least significant bit is the permute bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label(pub u128);

impl Label {
    pub const BYTES: usize = 16;

    pub fn lsb(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(b: [u8; 16]) -> Self {
        Label(u128::from_le_bytes(b))
    }

    /// `self` when `bit` is false, `self ⊕ other` otherwise.
    #[inline]
    pub fn xor_if(self, bit: bool, other: Label) -> Label {
        Label(self.0 ^ ((bit as u128).wrapping_neg() & other.0))
    }
}

impl std::ops::BitXor for Label {
    type Output = Label;
    #[inline]
    fn bitxor(self, o: Label) -> Label {
        Label(self.0 ^ o.0)
    }
}

impl std::ops::BitXorAssign for Label {
    #[inline]
    fn bitxor_assign(&mut self, o: Label) {
        self.0 ^= o.0;
    }
}

/// Label families derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// The global free-XOR offset.
    Delta = 0,
    /// Client-held tape inputs.
    Input = 1,
    /// The two constant wires followed by the tape's public constants.
    Constant = 2,
}

/// The generator's secret: a 128-bit seed and the free-XOR offset Δ (lsb 1)
/// derived from it. Whoever holds the seed can compute every input label.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GarbleSeed {
    seed: [u8; 16],
    delta: Label,
}

impl std::fmt::Debug for GarbleSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GarbleSeed(..)")
    }
}

impl GarbleSeed {
    pub fn new(seed: [u8; 16]) -> Self {
        let prf = Prf::new(&seed);
        let delta = Label(prf.eval(Domain::Delta, 0).0 | 1);
        GarbleSeed { seed, delta }
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 16];
        rng.fill_bytes(&mut seed);
        Self::new(seed)
    }

    pub fn seed(&self) -> [u8; 16] {
        self.seed
    }

    pub fn delta(&self) -> Label {
        self.delta
    }

    pub fn labels(&self) -> LabelSource {
        LabelSource {
            prf: Prf::new(&self.seed),
            delta: self.delta,
        }
    }
}

/// AES-128 keyed with the seed, applied to (domain, index) blocks.
#[derive(Clone)]
struct Prf(Aes128);

impl Prf {
    fn new(seed: &[u8; 16]) -> Self {
        Prf(Aes128::new(GenericArray::from_slice(seed)))
    }

    fn eval(&self, domain: Domain, index: u64) -> Label {
        let x = ((domain as u128) << 64) | index as u128;
        let mut block = GenericArray::from(x.to_le_bytes());
        self.0.encrypt_block(&mut block);
        Label(u128::from_le_bytes(block.into()))
    }
}

/// Computes zero-labels and active labels from a seed.
#[derive(Clone)]
pub struct LabelSource {
    prf: Prf,
    delta: Label,
}

impl LabelSource {
    pub fn delta(&self) -> Label {
        self.delta
    }

    pub fn zero(&self, domain: Domain, index: u64) -> Label {
        self.prf.eval(domain, index)
    }

    pub fn active(&self, domain: Domain, index: u64, bit: bool) -> Label {
        self.zero(domain, index).xor_if(bit, self.delta)
    }

    /// Active labels for the low `width` bits of `value`, at consecutive
    /// indices starting from `base`.
    pub fn encode(&self, domain: Domain, base: u64, value: u64, width: usize) -> Vec<Label> {
        (0..width)
            .map(|i| self.active(domain, base + i as u64, (value >> i) & 1 == 1))
            .collect()
    }
}

/// Key of the fixed-key permutation. Public by design; any fixed value works.
const FIXED_KEY: [u8; 16] = *b"snail fixed key!";

/// Tweakable correlation-robust hash `H(x, t) = π(σ(x) ⊕ t) ⊕ σ(x) ⊕ t`
/// built from fixed-key AES, with `σ(xL ‖ xR) = (xL ⊕ xR) ‖ xL`.
#[derive(Clone)]
pub struct FixedKeyHash(Aes128);

impl Default for FixedKeyHash {
    fn default() -> Self {
        Self::new()
    }
}

/// Tweak for half `half` (0 or 1) of AND gate number `gate`.
#[inline]
pub fn tweak(gate: u64, half: u64) -> u128 {
    ((half as u128) << 64) | gate as u128
}

#[inline]
fn sigma(x: u128) -> u128 {
    let hi = x >> 64;
    let lo = x & u64::MAX as u128;
    ((hi ^ lo) << 64) | hi
}

impl FixedKeyHash {
    pub fn new() -> Self {
        FixedKeyHash(Aes128::new(GenericArray::from_slice(&FIXED_KEY)))
    }

    pub fn hash<const N: usize>(&self, xs: [(Label, u128); N]) -> [Label; N] {
        let pre: [u128; N] = xs.map(|(x, t)| sigma(x.0) ^ t);
        let mut blocks = pre.map(|p| GenericArray::from(p.to_le_bytes()));
        self.0.encrypt_blocks(&mut blocks);
        let mut out = [Label(0); N];
        for i in 0..N {
            let c = u128::from_le_bytes(blocks[i].into());
            out[i] = Label(c ^ pre[i]);
        }
        out
    }
}
