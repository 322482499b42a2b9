//! Numeric formats and their word-level semantics.
//!
//! Every backend (host plaintext, cleartext tape interpreter, boolean circuits)
//! must agree bit-for-bit with the functions in [`f32_ops`] and [`fixed_ops`].
//! Values travel between backends as raw 64-bit words: float32 bit patterns in
//! the low half, or the two's-complement fixed-point integer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only NaN bit pattern produced by arithmetic on float32 words.
pub const CANONICAL_NAN: u32 = 0x7FC0_0000;

/// Raw storage for one secret scalar.
pub type Word = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("format overflow at input")]
    Overflow,
    #[error("fixed-point fraction bits {0} outside [8, 48]")]
    InvalidFracBits(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
#[derive(Default)]
pub enum NumericFormat {
    #[default]
    Float32,
    Fixed64 { frac_bits: u8 },
}


impl NumericFormat {
    pub const DEFAULT_FRAC_BITS: u8 = 24;

    pub fn fixed64() -> Self {
        NumericFormat::Fixed64 {
            frac_bits: Self::DEFAULT_FRAC_BITS,
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        match *self {
            NumericFormat::Float32 => Ok(()),
            NumericFormat::Fixed64 { frac_bits } if (8..=48).contains(&frac_bits) => Ok(()),
            NumericFormat::Fixed64 { frac_bits } => Err(FormatError::InvalidFracBits(frac_bits)),
        }
    }

    /// Bits per scalar on the wire.
    pub fn width(&self) -> usize {
        match self {
            NumericFormat::Float32 => 32,
            NumericFormat::Fixed64 { .. } => 64,
        }
    }

    /// Stable one-byte tag used by the tape serialization.
    pub fn tag(&self) -> (u8, u8) {
        match *self {
            NumericFormat::Float32 => (0, 0),
            NumericFormat::Fixed64 { frac_bits } => (1, frac_bits),
        }
    }

    pub fn from_tag(tag: u8, frac_bits: u8) -> Option<Self> {
        match tag {
            0 => Some(NumericFormat::Float32),
            1 => Some(NumericFormat::Fixed64 { frac_bits }),
            _ => None,
        }
    }

    /// Encodes a plaintext value, rejecting values the format cannot hold.
    pub fn encode(&self, value: f64) -> Result<Word, FormatError> {
        if !value.is_finite() {
            return Err(FormatError::Overflow);
        }
        match *self {
            NumericFormat::Float32 => {
                let v = value as f32;
                if v.is_infinite() {
                    return Err(FormatError::Overflow);
                }
                Ok(v.to_bits() as Word)
            }
            NumericFormat::Fixed64 { frac_bits } => {
                self.validate()?;
                let limit = 2f64.powi(63 - frac_bits as i32);
                if value.abs() >= limit {
                    return Err(FormatError::Overflow);
                }
                let scaled = (value * 2f64.powi(frac_bits as i32)).round();
                if scaled.abs() >= 2f64.powi(63) {
                    return Err(FormatError::Overflow);
                }
                Ok(scaled as i64 as Word)
            }
        }
    }

    /// Like [`encode`](Self::encode) but clamps out-of-range values. Used for
    /// public constants baked into tapes, where the value set is fixed by code.
    pub fn encode_saturating(&self, value: f64) -> Word {
        match *self {
            NumericFormat::Float32 => (value as f32).to_bits() as Word,
            NumericFormat::Fixed64 { frac_bits } => {
                let scaled = (value * 2f64.powi(frac_bits as i32)).round();
                (scaled as i64) as Word
            }
        }
    }

    pub fn decode(&self, word: Word) -> f64 {
        match *self {
            NumericFormat::Float32 => f32::from_bits(word as u32) as f64,
            NumericFormat::Fixed64 { frac_bits } => {
                (word as i64) as f64 / 2f64.powi(frac_bits as i32)
            }
        }
    }
}

/// IEEE-754 binary32 with round-to-nearest-even; arithmetic NaN results are
/// canonicalised to [`CANONICAL_NAN`]. `neg` and `abs` are sign-bit operations
/// and leave NaN payloads alone, exactly as on host hardware.
pub mod f32_ops {
    use super::CANONICAL_NAN;

    #[inline]
    fn canon(x: f32) -> u32 {
        if x.is_nan() {
            CANONICAL_NAN
        } else {
            x.to_bits()
        }
    }

    #[inline]
    fn f(x: u32) -> f32 {
        f32::from_bits(x)
    }

    pub fn add(a: u32, b: u32) -> u32 {
        canon(f(a) + f(b))
    }

    pub fn sub(a: u32, b: u32) -> u32 {
        canon(f(a) - f(b))
    }

    pub fn mul(a: u32, b: u32) -> u32 {
        canon(f(a) * f(b))
    }

    pub fn div(a: u32, b: u32) -> u32 {
        canon(f(a) / f(b))
    }

    pub fn sqrt(a: u32) -> u32 {
        canon(f(a).sqrt())
    }

    pub fn neg(a: u32) -> u32 {
        a ^ 0x8000_0000
    }

    pub fn abs(a: u32) -> u32 {
        a & 0x7FFF_FFFF
    }

    /// Total order variant of `<`: NaN sorts after every number.
    pub fn lt(a: u32, b: u32) -> bool {
        let (x, y) = (f(a), f(b));
        if x.is_nan() {
            false
        } else if y.is_nan() {
            true
        } else {
            x < y
        }
    }
}

/// Two's-complement 64-bit fixed point. Products and quotients truncate
/// toward zero. Each operation reports whether it overflowed; the result word
/// in that case is still fully specified so circuits can reproduce it.
pub mod fixed_ops {
    pub fn add(a: i64, b: i64) -> (i64, bool) {
        a.overflowing_add(b)
    }

    pub fn sub(a: i64, b: i64) -> (i64, bool) {
        a.overflowing_sub(b)
    }

    fn apply_sign(magnitude: u64, negative: bool) -> i64 {
        if negative {
            magnitude.wrapping_neg() as i64
        } else {
            magnitude as i64
        }
    }

    pub fn mul(a: i64, b: i64, frac_bits: u8) -> (i64, bool) {
        let product = a.unsigned_abs() as u128 * b.unsigned_abs() as u128;
        let q = product >> frac_bits;
        let overflow = q >= 1u128 << 63;
        (apply_sign(q as u64, (a < 0) ^ (b < 0)), overflow)
    }

    /// Restoring division semantics: a zero divisor yields an all-ones
    /// quotient, which always trips the overflow flag.
    pub fn div(a: i64, b: i64, frac_bits: u8) -> (i64, bool) {
        let dividend = (a.unsigned_abs() as u128) << frac_bits;
        let divisor = b.unsigned_abs() as u128;
        let q = if divisor == 0 {
            (1u128 << (64 + frac_bits as u32)) - 1
        } else {
            dividend / divisor
        };
        let overflow = q >= 1u128 << 63;
        (apply_sign(q as u64, (a < 0) ^ (b < 0)), overflow)
    }

    /// Negative radicands flag overflow and produce zero.
    pub fn sqrt(a: i64, frac_bits: u8) -> (i64, bool) {
        if a < 0 {
            return (0, true);
        }
        (isqrt((a as u128) << frac_bits) as i64, false)
    }

    pub fn neg(a: i64) -> (i64, bool) {
        a.overflowing_neg()
    }

    pub fn abs(a: i64) -> (i64, bool) {
        a.overflowing_abs()
    }

    pub fn lt(a: i64, b: i64) -> bool {
        a < b
    }

    /// Floor square root, bit by bit.
    pub fn isqrt(x: u128) -> u128 {
        let mut rem = x;
        let mut root = 0u128;
        let mut bit = 1u128 << 126;
        while bit > x {
            bit >>= 2;
        }
        while bit != 0 {
            if rem >= root + bit {
                rem -= root + bit;
                root = (root >> 1) + bit;
            } else {
                root >>= 1;
            }
            bit >>= 2;
        }
        root
    }
}
