//! IEEE-754 binary32 circuits: round-to-nearest-even, gradual underflow,
//! infinities, and a single canonical NaN, bit-exact with host arithmetic.

use snail_core::obliv::CANONICAL_NAN;

use crate::circuit::{Bits, Builder, Wire};

/// Width of signed exponent arithmetic inside the circuits.
const EXP_BITS: usize = 10;
const INF_BITS: u128 = 0x7F80_0000;

struct Unpacked {
    sign: Wire,
    /// Biased exponent with 0 promoted to 1 (subnormals share exponent 1).
    exp_eff: Bits,
    /// 24-bit significand including the hidden bit.
    mant: Bits,
    is_nan: Wire,
    is_inf: Wire,
    is_zero: Wire,
}

fn unpack(b: &mut Builder, x: &[Wire]) -> Unpacked {
    let frac = &x[0..23];
    let exp = &x[23..31];
    let exp_any = b.or_reduce(exp);
    let exp_zero = b.not(exp_any);
    let exp_ones = b.and_reduce(exp);
    let frac_any = b.or_reduce(frac);
    let frac_zero = b.not(frac_any);
    let mut exp_eff = exp.to_vec();
    exp_eff[0] = b.or(exp[0], exp_zero);
    let mut mant = frac.to_vec();
    mant.push(exp_any);
    Unpacked {
        sign: x[31],
        exp_eff,
        mant,
        is_nan: b.and(exp_ones, frac_any),
        is_inf: b.and(exp_ones, frac_zero),
        is_zero: b.and(exp_zero, frac_zero),
    }
}

fn widen(b: &Builder, v: &[Wire]) -> Bits {
    let mut out = v.to_vec();
    out.resize(EXP_BITS, b.constant(false));
    out
}

fn sconst(b: &Builder, v: i64) -> Bits {
    b.constant_bits((v as u128) & ((1 << EXP_BITS) - 1), EXP_BITS)
}

fn ssub(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Bits {
    b.sub(x, y).0
}

/// Replaces `x` by the constant `c` where `s` is set.
fn mux_const(b: &mut Builder, s: Wire, c: u128, x: &[Wire]) -> Bits {
    let k = b.constant_bits(c, x.len());
    b.mux_bits(s, &k, x)
}

/// Rounds and packs. `e` is the signed biased exponent of a value whose
/// leading one sits at bit 26 of `m` (bits 2, 1, 0 are guard, round,
/// sticky). A non-positive `e` produces a subnormal.
fn round_pack(
    b: &mut Builder,
    sign: Wire,
    e: &[Wire],
    m: &[Wire],
    may_underflow: bool,
    may_overflow: bool,
) -> Bits {
    debug_assert_eq!(m.len(), 27);
    let (exp_field, m) = if may_underflow {
        let nonzero = b.or_reduce(e);
        let neg = e[EXP_BITS - 1];
        let not_neg = b.not(neg);
        let positive = b.and(nonzero, not_neg);
        let one = sconst(b, 1);
        let amount = ssub(b, &one, e);
        let shifted = b.shr(m, &amount[..5], true);
        let far = b.or_reduce(&amount[5..]);
        let all = b.or_reduce(m);
        let mut flushed = vec![Wire::ZERO; 27];
        flushed[0] = all;
        let shifted = b.mux_bits(far, &flushed, &shifted);
        let m = b.mux_bits(positive, m, &shifted);
        let field = b.and_all(&e[..8], positive);
        (field, m)
    } else {
        (e[..8].to_vec(), m.to_vec())
    };
    let mut packed: Bits = m[3..26].to_vec();
    packed.extend_from_slice(&exp_field);
    let tail = b.or(m[1], m[0]);
    let tail = b.or(tail, m[3]);
    let round_up = b.and(m[2], tail);
    let mut packed = b.increment(&packed, round_up);
    if may_overflow {
        let top = b.and_reduce(&e[..8]);
        let big = b.or(e[8], top);
        let not_neg = b.not(e[EXP_BITS - 1]);
        let overflow = b.and(big, not_neg);
        packed = mux_const(b, overflow, INF_BITS, &packed);
    }
    packed.push(sign);
    packed
}

/// Final special-case selection shared by the arithmetic ops.
fn finish(b: &mut Builder, nan: Wire, value: Bits) -> Bits {
    mux_const(b, nan, CANONICAL_NAN as u128, &value)
}

pub fn add(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Bits {
    let ux = unpack(b, x);
    let uy = unpack(b, y);
    let both_inf = b.and(ux.is_inf, uy.is_inf);
    let opposite = b.xor(ux.sign, uy.sign);
    let inf_minus_inf = b.and(both_inf, opposite);
    let nan = b.or(ux.is_nan, uy.is_nan);
    let nan = b.or(nan, inf_minus_inf);

    // Order by magnitude so that |big| ≥ |small|.
    let swap = b.lt(&x[..31], &y[..31]);
    let diff = b.xor_bits(x, y);
    let d = b.and_all(&diff, swap);
    let big = b.xor_bits(x, &d);
    let small = b.xor_bits(y, &d);
    let ub = unpack(b, &big);
    let us = unpack(b, &small);
    let sub = b.xor(ub.sign, us.sign);

    let (shift, _) = b.sub(&ub.exp_eff, &us.exp_eff);
    let mut mb = vec![Wire::ZERO; 3];
    mb.extend_from_slice(&ub.mant);
    let mut ms = vec![Wire::ZERO; 3];
    ms.extend_from_slice(&us.mant);
    let aligned = b.shr(&ms, &shift[..5], true);
    let far = b.or_reduce(&shift[5..]);
    let all = b.or_reduce(&ms);
    let mut flushed = vec![Wire::ZERO; 27];
    flushed[0] = all;
    let aligned = b.mux_bits(far, &flushed, &aligned);

    let addend = b.xor_all(&aligned, sub);
    let (r, carry, _) = b.add_full(&mb, &addend, sub);
    let not_sub = b.not(sub);
    let top = b.and(carry, not_sub);
    let mut r28 = r.clone();
    r28.push(top);
    let exact_zero = b.is_zero(&r28);

    // Carry out: shift right by one keeping the sticky bit.
    let mut right: Bits = r28[1..28].to_vec();
    right[0] = b.or(r28[1], r28[0]);
    let e_big = widen(b, &ub.exp_eff);
    let one = sconst(b, 1);
    let e_right = b.add(&e_big, &one);
    // Otherwise normalize left; a non-positive exponent is re-shifted by
    // round_pack, which is exact because only zeros were shifted in.
    let (left, lz) = b.normalize(&r);
    let lz = widen(b, &lz);
    let e_left = ssub(b, &e_big, &lz);
    let m = b.mux_bits(top, &right, &left);
    let e = b.mux_bits(top, &e_right, &e_left);
    let packed = round_pack(b, ub.sign, &e, &m, true, true);

    let zero_sign = b.and(ub.sign, us.sign);
    let mut zero = vec![Wire::ZERO; 31];
    zero.push(zero_sign);
    let value = b.mux_bits(exact_zero, &zero, &packed);
    let value = b.mux_bits(ub.is_inf, &big, &value);
    finish(b, nan, value)
}

pub fn sub(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Bits {
    let mut ny = y.to_vec();
    ny[31] = b.not(y[31]);
    add(b, x, &ny)
}

fn signed_special(b: &mut Builder, sign: Wire, magnitude: u128) -> Bits {
    let mut v = b.constant_bits(magnitude, 31);
    v.push(sign);
    v
}

pub fn mul(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Bits {
    let ux = unpack(b, x);
    let uy = unpack(b, y);
    let sign = b.xor(ux.sign, uy.sign);
    let nan = b.or(ux.is_nan, uy.is_nan);
    let t = b.and(ux.is_inf, uy.is_zero);
    let nan = b.or(nan, t);
    let t = b.and(uy.is_inf, ux.is_zero);
    let nan = b.or(nan, t);
    let inf = b.or(ux.is_inf, uy.is_inf);
    let zero = b.or(ux.is_zero, uy.is_zero);

    let p = b.mul(&ux.mant, &uy.mant);
    let (pn, lz) = b.normalize(&p);
    let ex = widen(b, &ux.exp_eff);
    let ey = widen(b, &uy.exp_eff);
    let e = b.add(&ex, &ey);
    let bias = sconst(b, 126);
    let e = ssub(b, &e, &bias);
    let lz = widen(b, &lz);
    let e = ssub(b, &e, &lz);
    let mut m: Bits = vec![b.or_reduce(&pn[..22])];
    m.extend_from_slice(&pn[22..48]);
    let packed = round_pack(b, sign, &e, &m, true, true);

    let zero_v = signed_special(b, sign, 0);
    let inf_v = signed_special(b, sign, INF_BITS);
    let value = b.mux_bits(zero, &zero_v, &packed);
    let value = b.mux_bits(inf, &inf_v, &value);
    finish(b, nan, value)
}

pub fn div(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Bits {
    let ux = unpack(b, x);
    let uy = unpack(b, y);
    let sign = b.xor(ux.sign, uy.sign);
    let nan = b.or(ux.is_nan, uy.is_nan);
    let t = b.and(ux.is_zero, uy.is_zero);
    let nan = b.or(nan, t);
    let t = b.and(ux.is_inf, uy.is_inf);
    let nan = b.or(nan, t);
    let inf = b.or(ux.is_inf, uy.is_zero);
    let zero = b.or(ux.is_zero, uy.is_inf);

    let (na, lza) = b.normalize(&ux.mant);
    let (nb, lzb) = b.normalize(&uy.mant);
    // Restoring division: q = floor(na · 2^27 / nb), 28 bits.
    let mut rem: Bits = na.clone();
    rem.push(Wire::ZERO);
    let mut q = [Wire::ZERO; 28];
    for step in 0..28 {
        let (d, ge) = b.sub(&rem, &nb);
        rem = b.mux_bits(ge, &d, &rem);
        q[27 - step] = ge;
        if step < 27 {
            rem.pop();
            rem.insert(0, Wire::ZERO);
        }
    }
    let rem_nz = b.or_reduce(&rem);
    let mut hi: Bits = q[1..28].to_vec();
    let s = b.or(q[1], q[0]);
    hi[0] = b.or(s, rem_nz);
    let mut lo: Bits = q[0..27].to_vec();
    lo[0] = b.or(q[0], rem_nz);
    let m = b.mux_bits(q[27], &hi, &lo);

    let ea = widen(b, &ux.exp_eff);
    let lza = widen(b, &lza);
    let ea = ssub(b, &ea, &lza);
    let eb = widen(b, &uy.exp_eff);
    let lzb = widen(b, &lzb);
    let eb = ssub(b, &eb, &lzb);
    let e = ssub(b, &ea, &eb);
    let c127 = sconst(b, 127);
    let e = b.add(&e, &c127);
    let dec = b.not(q[27]);
    let e = ssub(b, &e, &[dec]);
    let packed = round_pack(b, sign, &e, &m, true, true);

    let zero_v = signed_special(b, sign, 0);
    let inf_v = signed_special(b, sign, INF_BITS);
    let value = b.mux_bits(zero, &zero_v, &packed);
    let value = b.mux_bits(inf, &inf_v, &value);
    finish(b, nan, value)
}

/// Digit-by-digit integer square root of an even-width value. Returns the
/// floor root (half the width) and the final remainder.
pub fn isqrt(b: &mut Builder, x: &[Wire]) -> (Bits, Bits) {
    assert!(x.len().is_multiple_of(2));
    let digits = x.len() / 2;
    let mut root: Bits = Vec::new();
    let mut rem: Bits = Vec::new();
    for j in 0..digits {
        let i = digits - 1 - j;
        // rem ← rem·4 + next two bits; fits j + 3 bits.
        let mut r = vec![x[2 * i], x[2 * i + 1]];
        r.extend_from_slice(&rem);
        r.resize(j + 3, Wire::ZERO);
        // trial = root·4 + 1
        let mut trial = vec![Wire::ONE, Wire::ZERO];
        trial.extend_from_slice(&root);
        let (d, ge) = b.sub(&r, &trial);
        let mut next = b.mux_bits(ge, &d, &r);
        next.truncate(j + 2);
        rem = next;
        root.insert(0, ge);
    }
    (root, rem)
}

pub fn sqrt(b: &mut Builder, x: &[Wire]) -> Bits {
    let ux = unpack(b, x);
    let not_zero = b.not(ux.is_zero);
    let negative = b.and(ux.sign, not_zero);
    let nan = b.or(ux.is_nan, negative);
    let passthrough = b.or(ux.is_zero, ux.is_inf);

    let (mn, lz) = b.normalize(&ux.mant);
    let e = widen(b, &ux.exp_eff);
    let lz = widen(b, &lz);
    let e = ssub(b, &e, &lz);
    let bias = sconst(b, 127);
    let k = ssub(b, &e, &bias);
    let odd = k[0];
    let mut m2 = mn.clone();
    m2.push(Wire::ZERO);
    let mut doubled = vec![Wire::ZERO];
    doubled.extend_from_slice(&mn);
    let m2 = b.mux_bits(odd, &doubled, &m2);
    let mut radicand = vec![Wire::ZERO; 29];
    radicand.extend_from_slice(&m2);
    let (root, rem) = isqrt(b, &radicand);
    let rem_nz = b.or_reduce(&rem);
    let mut m = root;
    m[0] = b.or(m[0], rem_nz);
    // floor(k / 2) + 127
    let mut half: Bits = k[1..].to_vec();
    half.push(k[EXP_BITS - 1]);
    let e = b.add(&half, &bias);
    let packed = round_pack(b, Wire::ZERO, &e, &m, false, false);

    let value = b.mux_bits(passthrough, x, &packed);
    finish(b, nan, value)
}

pub fn neg(b: &mut Builder, x: &[Wire]) -> Bits {
    let mut out = x.to_vec();
    out[31] = b.not(x[31]);
    out
}

pub fn abs(_b: &mut Builder, x: &[Wire]) -> Bits {
    let mut out = x.to_vec();
    out[31] = Wire::ZERO;
    out
}

/// `x < y` with NaN ordered after every number.
pub fn lt(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Wire {
    let ux = unpack(b, x);
    let uy = unpack(b, y);
    let x_below = b.lt(&x[..31], &y[..31]);
    let y_below = b.lt(&y[..31], &x[..31]);
    let both_zero = b.and(ux.is_zero, uy.is_zero);
    let not_both_zero = b.not(both_zero);
    let neg_case = b.mux(uy.sign, y_below, not_both_zero);
    let pos_case = b.mux(uy.sign, Wire::ZERO, x_below);
    let ordered = b.mux(ux.sign, neg_case, pos_case);
    let r = b.or(uy.is_nan, ordered);
    let not_nan = b.not(ux.is_nan);
    b.and(not_nan, r)
}
