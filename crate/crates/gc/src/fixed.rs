//! Two's-complement 64-bit fixed-point circuits. Every arithmetic op also
//! returns its overflow bit, matching the cleartext semantics exactly.

use crate::circuit::{Bits, Builder, Wire};
use crate::float::isqrt;

const W: usize = 64;

pub fn add(b: &mut Builder, x: &[Wire], y: &[Wire]) -> (Bits, Wire) {
    let (s, carry, into_top) = b.add_full(x, y, Wire::ZERO);
    let ovf = b.xor(carry, into_top);
    (s, ovf)
}

pub fn sub(b: &mut Builder, x: &[Wire], y: &[Wire]) -> (Bits, Wire) {
    let ny: Bits = y.iter().map(|w| b.not(*w)).collect();
    let (s, carry, into_top) = b.add_full(x, &ny, Wire::ONE);
    let ovf = b.xor(carry, into_top);
    (s, ovf)
}

pub fn neg(b: &mut Builder, x: &[Wire]) -> (Bits, Wire) {
    let r = b.cond_negate(x, Wire::ONE);
    let ovf = b.and(x[W - 1], r[W - 1]);
    (r, ovf)
}

pub fn abs(b: &mut Builder, x: &[Wire]) -> (Bits, Wire) {
    let r = b.cond_negate(x, x[W - 1]);
    let ovf = b.and(x[W - 1], r[W - 1]);
    (r, ovf)
}

/// Magnitudes of both operands and the sign of the result.
fn magnitudes(b: &mut Builder, x: &[Wire], y: &[Wire]) -> (Bits, Bits, Wire) {
    let mx = b.cond_negate(x, x[W - 1]);
    let my = b.cond_negate(y, y[W - 1]);
    let sign = b.xor(x[W - 1], y[W - 1]);
    (mx, my, sign)
}

/// Applies the sign to the low 64 bits of `q` and flags `q ≥ 2^63`.
fn signed_result(b: &mut Builder, q: &[Wire], sign: Wire) -> (Bits, Wire) {
    let ovf = b.or_reduce(&q[W - 1..]);
    let r = b.cond_negate(&q[..W], sign);
    (r, ovf)
}

pub fn mul(b: &mut Builder, x: &[Wire], y: &[Wire], frac_bits: u8) -> (Bits, Wire) {
    let (mx, my, sign) = magnitudes(b, x, y);
    let p = b.mul(&mx, &my);
    signed_result(b, &p[frac_bits as usize..], sign)
}

/// Restoring division. A zero divisor never borrows, so the quotient comes
/// out all ones, as in the cleartext definition.
pub fn div(b: &mut Builder, x: &[Wire], y: &[Wire], frac_bits: u8) -> (Bits, Wire) {
    let (mx, my, sign) = magnitudes(b, x, y);
    let mut dividend = vec![Wire::ZERO; frac_bits as usize];
    dividend.extend_from_slice(&mx);
    let n = dividend.len();
    // The remainder stays below the divisor, so W + 1 bits hold it after
    // each shift.
    let mut rem = vec![Wire::ZERO; W + 1];
    let mut q = vec![Wire::ZERO; n];
    for i in (0..n).rev() {
        rem.pop();
        rem.insert(0, dividend[i]);
        let (d, ge) = b.sub(&rem, &my);
        rem = b.mux_bits(ge, &d, &rem);
        q[i] = ge;
    }
    signed_result(b, &q, sign)
}

/// Negative radicands give zero with the overflow bit set.
pub fn sqrt(b: &mut Builder, x: &[Wire], frac_bits: u8) -> (Bits, Wire) {
    let negative = x[W - 1];
    let mut radicand = vec![Wire::ZERO; frac_bits as usize];
    radicand.extend_from_slice(&x[..W - 1]);
    if radicand.len() % 2 == 1 {
        radicand.push(Wire::ZERO);
    }
    let (root, _) = isqrt(b, &radicand);
    let keep = b.not(negative);
    let mut r = b.and_all(&root, keep);
    r.resize(W, Wire::ZERO);
    (r, negative)
}

/// Signed `x < y`.
pub fn lt(b: &mut Builder, x: &[Wire], y: &[Wire]) -> Wire {
    let mut fx = x.to_vec();
    let mut fy = y.to_vec();
    fx[W - 1] = b.not(x[W - 1]);
    fy[W - 1] = b.not(y[W - 1]);
    b.lt(&fx, &fy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::BoolCircuit;
    use snail_core::obliv::fixed_ops;

    type Op = fn(&mut Builder, &[Wire], &[Wire]) -> (Bits, Wire);

    fn circuit(f: impl Fn(&mut Builder, &[Wire], &[Wire]) -> (Bits, Wire)) -> BoolCircuit {
        let mut b = Builder::new();
        let x = b.input_group(64);
        let y = b.input_group(64);
        let (mut out, ovf) = f(&mut b, &x, &y);
        out.push(ovf);
        b.finish(out)
    }

    fn run(c: &BoolCircuit, xs: &[i64], ys: &[i64]) -> Vec<(i64, bool)> {
        let mut inputs = vec![0u64; 128];
        for (lane, (x, y)) in xs.iter().zip(ys).enumerate() {
            for bit in 0..64 {
                inputs[bit] |= (((*x as u64) >> bit) & 1) << lane;
                inputs[64 + bit] |= (((*y as u64) >> bit) & 1) << lane;
            }
        }
        let out = c.eval_sliced(&inputs);
        (0..xs.len())
            .map(|lane| {
                let v = out[..64]
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (bit, w)| acc | (((w >> lane) & 1) << bit));
                (v as i64, (out[64] >> lane) & 1 == 1)
            })
            .collect()
    }

    fn operands(seed: u64) -> Vec<(i64, i64)> {
        let edge = [0i64, 1, -1, 2, i64::MAX, i64::MIN, i64::MIN + 1, 1 << 24, -(1 << 24), 3 << 23, 12345678];
        let mut v = Vec::new();
        for x in edge {
            for y in edge {
                v.push((x, y));
            }
        }
        let mut s = seed;
        for i in 0..6000 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = s as i64;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let bv = s as i64;
            // Mix full-width values with pixel-scale ones.
            let shift = (i % 5) as u32 * 10;
            v.push((a >> shift, bv >> (40 - shift.min(40))));
        }
        v
    }

    fn check(c: &BoolCircuit, oracle: impl Fn(i64, i64) -> (i64, bool), seed: u64, name: &str) {
        for chunk in operands(seed).chunks(64) {
            let xs: Vec<i64> = chunk.iter().map(|p| p.0).collect();
            let ys: Vec<i64> = chunk.iter().map(|p| p.1).collect();
            for ((x, y), got) in chunk.iter().zip(run(c, &xs, &ys)) {
                assert_eq!(got, oracle(*x, *y), "{name}({x}, {y})");
            }
        }
    }

    #[test]
    fn add_sub_match() {
        check(&circuit(add as Op), fixed_ops::add, 1, "add");
        check(&circuit(sub as Op), fixed_ops::sub, 2, "sub");
    }

    #[test]
    fn neg_abs_match() {
        check(&circuit(|b, x, _| neg(b, x)), |x, _| fixed_ops::neg(x), 3, "neg");
        check(&circuit(|b, x, _| abs(b, x)), |x, _| fixed_ops::abs(x), 4, "abs");
    }

    #[test]
    fn mul_div_sqrt_match() {
        for frac in [8u8, 24, 48] {
            check(&circuit(|b, x, y| mul(b, x, y, frac)), |x, y| fixed_ops::mul(x, y, frac), 5, "mul");
            check(&circuit(|b, x, y| div(b, x, y, frac)), |x, y| fixed_ops::div(x, y, frac), 6, "div");
            check(&circuit(|b, x, _| sqrt(b, x, frac)), |x, _| fixed_ops::sqrt(x, frac), 7, "sqrt");
        }
    }

    #[test]
    fn lt_matches() {
        let c = {
            let mut b = Builder::new();
            let x = b.input_group(64);
            let y = b.input_group(64);
            let out = lt(&mut b, &x, &y);
            b.finish(vec![out, Wire::ZERO])
        };
        let mut inputs = vec![0u64; 128];
        let pairs = operands(8);
        for chunk in pairs.chunks(64) {
            inputs.iter_mut().for_each(|w| *w = 0);
            for (lane, (x, y)) in chunk.iter().enumerate() {
                for bit in 0..64 {
                    inputs[bit] |= (((*x as u64) >> bit) & 1) << lane;
                    inputs[64 + bit] |= (((*y as u64) >> bit) & 1) << lane;
                }
            }
            let out = c.eval_sliced(&inputs);
            for (lane, (x, y)) in chunk.iter().enumerate() {
                assert_eq!((out[0] >> lane) & 1 == 1, fixed_ops::lt(*x, *y), "{x} < {y}");
            }
        }
    }
}
