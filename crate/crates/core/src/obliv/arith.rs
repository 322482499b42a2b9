//! The arithmetic interface every solver routine is written against.
//!
//! Algorithms never see concrete values through this trait unless the backend
//! is a plaintext one, and they never branch on `Num`/`Bit` values: the only
//! data-dependent choice available is [`Arith::select`]. Running the same
//! routine on [`PlainF32`] and on a [`TapeBuilder`](super::TapeBuilder) therefore
//! performs the identical sequence of word operations.

use std::fmt::Debug;

use super::exec::eval_op;
use super::format::{f32_ops, FormatError, NumericFormat, Word};
use super::tape::OpKind;

pub trait Arith {
    type Num: Copy + Debug;
    type Bit: Copy + Debug;

    /// A public constant fixed by the code.
    fn num(&mut self, value: f64) -> Self::Num;
    /// A public parameter supplied by the caller (intrinsics, damping,
    /// thresholds). Recorders give each one its own slot so the tape's shape
    /// does not depend on which parameter values happen to coincide.
    fn param(&mut self, value: f64) -> Self::Num {
        self.num(value)
    }
    fn bit(&mut self, value: bool) -> Self::Bit;

    fn add(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn sub(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn mul(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn div(&mut self, a: Self::Num, b: Self::Num) -> Self::Num;
    fn sqrt(&mut self, a: Self::Num) -> Self::Num;
    fn neg(&mut self, a: Self::Num) -> Self::Num;
    fn abs(&mut self, a: Self::Num) -> Self::Num;
    /// `a < b`, with NaN ordered after every number.
    fn lt(&mut self, a: Self::Num, b: Self::Num) -> Self::Bit;
    /// `cond ? a : b`
    fn select(&mut self, cond: Self::Bit, a: Self::Num, b: Self::Num) -> Self::Num;
    fn select_bit(&mut self, cond: Self::Bit, a: Self::Bit, b: Self::Bit) -> Self::Bit;

    fn le(&mut self, a: Self::Num, b: Self::Num) -> Self::Bit {
        let gt = self.lt(b, a);
        self.not(gt)
    }

    fn not(&mut self, c: Self::Bit) -> Self::Bit {
        let t = self.bit(true);
        let f = self.bit(false);
        self.select_bit(c, f, t)
    }

    fn or(&mut self, a: Self::Bit, b: Self::Bit) -> Self::Bit {
        let t = self.bit(true);
        self.select_bit(a, t, b)
    }

    fn and(&mut self, a: Self::Bit, b: Self::Bit) -> Self::Bit {
        let f = self.bit(false);
        self.select_bit(a, b, f)
    }

    fn max(&mut self, a: Self::Num, b: Self::Num) -> Self::Num {
        let c = self.lt(a, b);
        self.select(c, b, a)
    }

    /// Left-to-right sum; the order is part of the contract.
    fn sum(&mut self, terms: &[Self::Num]) -> Self::Num {
        match terms.split_first() {
            None => self.num(0.0),
            Some((first, rest)) => rest.iter().fold(*first, |acc, t| self.add(acc, *t)),
        }
    }

    fn dot(&mut self, xs: &[Self::Num], ys: &[Self::Num]) -> Self::Num {
        debug_assert_eq!(xs.len(), ys.len());
        let products: Vec<_> = xs.iter().zip(ys).map(|(x, y)| self.mul(*x, *y)).collect();
        self.sum(&products)
    }

    /// Sine and cosine from primitive operations only: Taylor polynomials on
    /// `x / 4` followed by two double-angle steps. Accurate to a few ulps of
    /// float32 for |x| ≤ 2π.
    fn sin_cos(&mut self, x: Self::Num) -> (Self::Num, Self::Num) {
        poly_sin_cos(self, x)
    }
}

const SIN_COEFFS: [f64; 7] = [
    1.0,
    -1.0 / 6.0,
    1.0 / 120.0,
    -1.0 / 5040.0,
    1.0 / 362_880.0,
    -1.0 / 39_916_800.0,
    1.0 / 6_227_020_800.0,
];

const COS_COEFFS: [f64; 8] = [
    1.0,
    -1.0 / 2.0,
    1.0 / 24.0,
    -1.0 / 720.0,
    1.0 / 40_320.0,
    -1.0 / 3_628_800.0,
    1.0 / 479_001_600.0,
    -1.0 / 87_178_291_200.0,
];

fn horner<A: Arith + ?Sized>(ctx: &mut A, coeffs: &[f64], y2: A::Num) -> A::Num {
    let mut acc = ctx.num(*coeffs.last().expect("non-empty coefficients"));
    for c in coeffs.iter().rev().skip(1) {
        let m = ctx.mul(acc, y2);
        let k = ctx.num(*c);
        acc = ctx.add(m, k);
    }
    acc
}

pub fn poly_sin_cos<A: Arith + ?Sized>(ctx: &mut A, x: A::Num) -> (A::Num, A::Num) {
    let quarter = ctx.num(0.25);
    let y = ctx.mul(x, quarter);
    let y2 = ctx.mul(y, y);
    let s_poly = horner(ctx, &SIN_COEFFS, y2);
    let mut s = ctx.mul(y, s_poly);
    let mut c = horner(ctx, &COS_COEFFS, y2);
    let two = ctx.num(2.0);
    let one = ctx.num(1.0);
    for _ in 0..2 {
        let sc = ctx.mul(s, c);
        let s_next = ctx.mul(two, sc);
        let ss = ctx.mul(s, s);
        let twoss = ctx.mul(two, ss);
        let c_next = ctx.sub(one, twoss);
        s = s_next;
        c = c_next;
    }
    (s, c)
}

/// Host float32 with the exact word semantics of the tape backends.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlainF32;

impl Arith for PlainF32 {
    type Num = f32;
    type Bit = bool;

    fn num(&mut self, value: f64) -> f32 {
        value as f32
    }
    fn bit(&mut self, value: bool) -> bool {
        value
    }
    fn add(&mut self, a: f32, b: f32) -> f32 {
        f32::from_bits(f32_ops::add(a.to_bits(), b.to_bits()))
    }
    fn sub(&mut self, a: f32, b: f32) -> f32 {
        f32::from_bits(f32_ops::sub(a.to_bits(), b.to_bits()))
    }
    fn mul(&mut self, a: f32, b: f32) -> f32 {
        f32::from_bits(f32_ops::mul(a.to_bits(), b.to_bits()))
    }
    fn div(&mut self, a: f32, b: f32) -> f32 {
        f32::from_bits(f32_ops::div(a.to_bits(), b.to_bits()))
    }
    fn sqrt(&mut self, a: f32) -> f32 {
        f32::from_bits(f32_ops::sqrt(a.to_bits()))
    }
    fn neg(&mut self, a: f32) -> f32 {
        f32::from_bits(f32_ops::neg(a.to_bits()))
    }
    fn abs(&mut self, a: f32) -> f32 {
        f32::from_bits(f32_ops::abs(a.to_bits()))
    }
    fn lt(&mut self, a: f32, b: f32) -> bool {
        f32_ops::lt(a.to_bits(), b.to_bits())
    }
    fn select(&mut self, cond: bool, a: f32, b: f32) -> f32 {
        if cond {
            a
        } else {
            b
        }
    }
    fn select_bit(&mut self, cond: bool, a: bool, b: bool) -> bool {
        if cond {
            a
        } else {
            b
        }
    }
}

/// Host float64; the reference precision for plaintext oracles.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlainF64;

impl Arith for PlainF64 {
    type Num = f64;
    type Bit = bool;

    fn num(&mut self, value: f64) -> f64 {
        value
    }
    fn bit(&mut self, value: bool) -> bool {
        value
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn abs(&mut self, a: f64) -> f64 {
        a.abs()
    }
    fn lt(&mut self, a: f64, b: f64) -> bool {
        if a.is_nan() {
            false
        } else if b.is_nan() {
            true
        } else {
            a < b
        }
    }
    fn select(&mut self, cond: bool, a: f64, b: f64) -> f64 {
        if cond {
            a
        } else {
            b
        }
    }
    fn select_bit(&mut self, cond: bool, a: bool, b: bool) -> bool {
        if cond {
            a
        } else {
            b
        }
    }
    fn sin_cos(&mut self, x: f64) -> (f64, f64) {
        x.sin_cos()
    }
}

/// A host backend that can ingest and report plaintext values.
pub trait Plain: Arith {
    fn lift(&mut self, value: f64) -> Result<Self::Num, FormatError>;
    fn lower(&self, value: Self::Num) -> f64;
    /// Sticky overflow flag, for formats that have one.
    fn overflowed(&self) -> bool {
        false
    }
}

impl Plain for PlainF32 {
    fn lift(&mut self, value: f64) -> Result<f32, FormatError> {
        NumericFormat::Float32
            .encode(value)
            .map(|w| f32::from_bits(w as u32))
    }
    fn lower(&self, value: f32) -> f64 {
        value as f64
    }
}

impl Plain for PlainF64 {
    fn lift(&mut self, value: f64) -> Result<f64, FormatError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(FormatError::Overflow)
        }
    }
    fn lower(&self, value: f64) -> f64 {
        value
    }
}

/// Raw words of any [`NumericFormat`], evaluated with the same per-op
/// semantics as the tape interpreter, including the sticky overflow flag.
#[derive(Clone, Copy, Debug)]
pub struct PlainWord {
    format: NumericFormat,
    overflow: bool,
}

impl PlainWord {
    pub fn new(format: NumericFormat) -> Self {
        PlainWord {
            format,
            overflow: false,
        }
    }

    fn op(&mut self, kind: OpKind, args: &[Word]) -> Word {
        let (r, ovf) = eval_op(self.format, kind, args);
        self.overflow |= ovf;
        r
    }
}

impl Arith for PlainWord {
    type Num = Word;
    type Bit = bool;

    fn num(&mut self, value: f64) -> Word {
        self.format.encode_saturating(value)
    }
    fn bit(&mut self, value: bool) -> bool {
        value
    }
    fn add(&mut self, a: Word, b: Word) -> Word {
        self.op(OpKind::Add, &[a, b])
    }
    fn sub(&mut self, a: Word, b: Word) -> Word {
        self.op(OpKind::Sub, &[a, b])
    }
    fn mul(&mut self, a: Word, b: Word) -> Word {
        self.op(OpKind::Mul, &[a, b])
    }
    fn div(&mut self, a: Word, b: Word) -> Word {
        self.op(OpKind::Div, &[a, b])
    }
    fn sqrt(&mut self, a: Word) -> Word {
        self.op(OpKind::Sqrt, &[a])
    }
    fn neg(&mut self, a: Word) -> Word {
        self.op(OpKind::Neg, &[a])
    }
    fn abs(&mut self, a: Word) -> Word {
        self.op(OpKind::Abs, &[a])
    }
    fn lt(&mut self, a: Word, b: Word) -> bool {
        self.op(OpKind::Lt, &[a, b]) == 1
    }
    fn select(&mut self, cond: bool, a: Word, b: Word) -> Word {
        if cond {
            a
        } else {
            b
        }
    }
    fn select_bit(&mut self, cond: bool, a: bool, b: bool) -> bool {
        if cond {
            a
        } else {
            b
        }
    }
}

impl Plain for PlainWord {
    fn lift(&mut self, value: f64) -> Result<Word, FormatError> {
        self.format.encode(value)
    }
    fn lower(&self, value: Word) -> f64 {
        self.format.decode(value)
    }
    fn overflowed(&self) -> bool {
        self.overflow
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_sin_cos_tracks_host() {
        let mut ctx = PlainF64;
        for i in -400..=400 {
            let x = i as f64 * std::f64::consts::PI / 400.0;
            let (s, c) = poly_sin_cos(&mut ctx, x);
            assert!((s - x.sin()).abs() < 1e-12, "sin {x}");
            assert!((c - x.cos()).abs() < 1e-12, "cos {x}");
        }
        let mut ctx = PlainF32;
        for i in -100..=100 {
            let x = i as f32 * 0.0628;
            let (s, c) = ctx.sin_cos(x);
            assert!((s as f64 - (x as f64).sin()).abs() < 2e-6);
            assert!((c as f64 - (x as f64).cos()).abs() < 2e-6);
        }
    }

    #[test]
    fn derived_boolean_helpers() {
        let mut ctx = PlainF32;
        assert!(ctx.le(1.0, 1.0));
        assert!(!ctx.le(2.0, 1.0));
        assert!(ctx.or(false, true));
        assert!(!ctx.and(true, false));
        assert_eq!(ctx.max(3.0, -1.0), 3.0);
        assert_eq!(ctx.sum(&[]), 0.0);
    }

    #[test]
    fn word_backend_matches_f32_backend() {
        let mut w = PlainWord::new(NumericFormat::Float32);
        let mut f = PlainF32;
        let (x, y) = (1.25f32, -3.5f32);
        let wx = x.to_bits() as Word;
        let wy = y.to_bits() as Word;
        assert_eq!(w.div(wx, wy) as u32, f.div(x, y).to_bits());
        let (ws, wc) = w.sin_cos(wx);
        let (fs, fc) = f.sin_cos(x);
        assert_eq!((ws as u32, wc as u32), (fs.to_bits(), fc.to_bits()));
        assert!(!w.overflowed());
        let mut fx = PlainWord::new(NumericFormat::fixed64());
        let big = fx.lift(2f64.powi(20)).unwrap();
        fx.mul(big, big);
        assert!(fx.overflowed());
    }
}
