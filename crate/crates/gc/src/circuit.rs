//! Boolean circuits over AND/XOR/NOT and a folding builder.

use serde::{Deserialize, Serialize};

/// Dense wire id. Wires 0 and 1 are the constant false and true wires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wire(pub u32);

impl Wire {
    pub const ZERO: Wire = Wire(0);
    pub const ONE: Wire = Wire(1);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_const(self) -> bool {
        self.0 < 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    And,
    Xor,
    /// XOR with the constant-true wire; `b` is always [`Wire::ONE`].
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub a: Wire,
    pub b: Wire,
    pub out: Wire,
}

/// A topologically ordered circuit. Input wires come in groups (one per
/// party or per tape operand) and are numbered right after the constants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolCircuit {
    num_wires: u32,
    gates: Vec<Gate>,
    input_groups: Vec<Vec<Wire>>,
    outputs: Vec<Wire>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub and: u64,
    /// XOR plus NOT gates, both free under free-XOR.
    pub xor: u64,
}

impl GateCounts {
    pub fn total(&self) -> u64 {
        self.and + self.xor
    }
}

impl BoolCircuit {
    pub fn num_wires(&self) -> usize {
        self.num_wires as usize
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn input_groups(&self) -> &[Vec<Wire>] {
        &self.input_groups
    }

    pub fn inputs(&self) -> impl Iterator<Item = Wire> + '_ {
        self.input_groups.iter().flatten().copied()
    }

    pub fn num_inputs(&self) -> usize {
        self.input_groups.iter().map(Vec::len).sum()
    }

    pub fn outputs(&self) -> &[Wire] {
        &self.outputs
    }

    pub fn counts(&self) -> GateCounts {
        let and = self.gates.iter().filter(|g| g.kind == GateKind::And).count() as u64;
        GateCounts {
            and,
            xor: self.gates.len() as u64 - and,
        }
    }

    /// Plain evaluation on 64 independent input vectors at once: bit `l` of
    /// every word belongs to lane `l`.
    pub fn eval_sliced(&self, inputs: &[u64]) -> Vec<u64> {
        assert_eq!(inputs.len(), self.num_inputs(), "input count");
        let mut w = vec![0u64; self.num_wires()];
        w[1] = u64::MAX;
        for (wire, v) in self.inputs().zip(inputs) {
            w[wire.index()] = *v;
        }
        for g in &self.gates {
            let a = w[g.a.index()];
            w[g.out.index()] = match g.kind {
                GateKind::And => a & w[g.b.index()],
                GateKind::Xor => a ^ w[g.b.index()],
                GateKind::Not => !a,
            };
        }
        self.outputs.iter().map(|o| w[o.index()]).collect()
    }

    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        let sliced: Vec<u64> = inputs.iter().map(|b| if *b { 1 } else { 0 }).collect();
        self.eval_sliced(&sliced)
            .into_iter()
            .map(|v| v & 1 == 1)
            .collect()
    }
}

/// Little-endian bit vector of wires.
pub type Bits = Vec<Wire>;

/// Circuit builder with local constant folding. Folding depends only on
/// which wires are the constants, never on values, so a given construction
/// always yields the same gate list.
#[derive(Debug)]
pub struct Builder {
    next: u32,
    gates: Vec<Gate>,
    input_groups: Vec<Vec<Wire>>,
}

impl Default for Builder {
    fn default() -> Self {
        Self::new()
    }
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            next: 2,
            gates: Vec::new(),
            input_groups: Vec::new(),
        }
    }

    fn fresh(&mut self) -> Wire {
        let w = Wire(self.next);
        self.next += 1;
        w
    }

    pub fn input_group(&mut self, width: usize) -> Bits {
        let group: Bits = (0..width).map(|_| self.fresh()).collect();
        self.input_groups.push(group.clone());
        group
    }

    pub fn finish(self, outputs: Bits) -> BoolCircuit {
        BoolCircuit {
            num_wires: self.next,
            gates: self.gates,
            input_groups: self.input_groups,
            outputs,
        }
    }

    fn emit(&mut self, kind: GateKind, a: Wire, b: Wire) -> Wire {
        let out = self.fresh();
        self.gates.push(Gate { kind, a, b, out });
        out
    }

    pub fn constant(&self, v: bool) -> Wire {
        if v {
            Wire::ONE
        } else {
            Wire::ZERO
        }
    }

    pub fn constant_bits(&self, value: u128, width: usize) -> Bits {
        (0..width).map(|i| self.constant((value >> i) & 1 == 1)).collect()
    }

    pub fn not(&mut self, a: Wire) -> Wire {
        match a {
            Wire::ZERO => Wire::ONE,
            Wire::ONE => Wire::ZERO,
            _ => self.emit(GateKind::Not, a, Wire::ONE),
        }
    }

    pub fn xor(&mut self, a: Wire, b: Wire) -> Wire {
        if a == b {
            Wire::ZERO
        } else if a == Wire::ZERO {
            b
        } else if b == Wire::ZERO {
            a
        } else if a == Wire::ONE {
            self.not(b)
        } else if b == Wire::ONE {
            self.not(a)
        } else {
            self.emit(GateKind::Xor, a, b)
        }
    }

    pub fn and(&mut self, a: Wire, b: Wire) -> Wire {
        if a == Wire::ZERO || b == Wire::ZERO {
            Wire::ZERO
        } else if a == Wire::ONE || a == b {
            b
        } else if b == Wire::ONE {
            a
        } else {
            self.emit(GateKind::And, a, b)
        }
    }

    pub fn or(&mut self, a: Wire, b: Wire) -> Wire {
        if a == Wire::ONE || b == Wire::ONE {
            return Wire::ONE;
        }
        let x = self.xor(a, b);
        let y = self.and(a, b);
        self.xor(x, y)
    }

    /// `s ? t : f` with one AND.
    pub fn mux(&mut self, s: Wire, t: Wire, f: Wire) -> Wire {
        let d = self.xor(t, f);
        let m = self.and(s, d);
        self.xor(f, m)
    }

    pub fn mux_bits(&mut self, s: Wire, t: &[Wire], f: &[Wire]) -> Bits {
        assert_eq!(t.len(), f.len());
        t.iter().zip(f).map(|(t, f)| self.mux(s, *t, *f)).collect()
    }

    pub fn xor_bits(&mut self, a: &[Wire], b: &[Wire]) -> Bits {
        a.iter().zip(b).map(|(a, b)| self.xor(*a, *b)).collect()
    }

    /// XOR every bit with `s`.
    pub fn xor_all(&mut self, a: &[Wire], s: Wire) -> Bits {
        a.iter().map(|a| self.xor(*a, s)).collect()
    }

    pub fn and_all(&mut self, a: &[Wire], s: Wire) -> Bits {
        a.iter().map(|a| self.and(*a, s)).collect()
    }

    pub fn or_reduce(&mut self, a: &[Wire]) -> Wire {
        match a.len() {
            0 => Wire::ZERO,
            1 => a[0],
            n => {
                let l = self.or_reduce(&a[..n / 2]);
                let r = self.or_reduce(&a[n / 2..]);
                self.or(l, r)
            }
        }
    }

    pub fn and_reduce(&mut self, a: &[Wire]) -> Wire {
        match a.len() {
            0 => Wire::ONE,
            1 => a[0],
            n => {
                let l = self.and_reduce(&a[..n / 2]);
                let r = self.and_reduce(&a[n / 2..]);
                self.and(l, r)
            }
        }
    }

    pub fn is_zero(&mut self, a: &[Wire]) -> Wire {
        let any = self.or_reduce(a);
        self.not(any)
    }

    /// Ripple-carry `a + b + cin` over `a.len()` bits (`b` is zero-extended
    /// or truncated). Returns the sum, the carry out, and the carry into the
    /// top bit (for signed overflow).
    pub fn add_full(&mut self, a: &[Wire], b: &[Wire], cin: Wire) -> (Bits, Wire, Wire) {
        let mut c = cin;
        let mut into_top = cin;
        let mut sum = Vec::with_capacity(a.len());
        for (i, x) in a.iter().enumerate() {
            let y = b.get(i).copied().unwrap_or(Wire::ZERO);
            into_top = c;
            let t1 = self.xor(*x, c);
            let t2 = self.xor(y, c);
            sum.push(self.xor(*x, t2));
            let g = self.and(t1, t2);
            c = self.xor(c, g);
        }
        (sum, c, into_top)
    }

    pub fn add(&mut self, a: &[Wire], b: &[Wire]) -> Bits {
        self.add_full(a, b, Wire::ZERO).0
    }

    /// `a − b` over `a.len()` bits and the no-borrow flag (`a ≥ b` unsigned).
    pub fn sub(&mut self, a: &[Wire], b: &[Wire]) -> (Bits, Wire) {
        let nb: Bits = (0..a.len())
            .map(|i| {
                let y = b.get(i).copied().unwrap_or(Wire::ZERO);
                self.not(y)
            })
            .collect();
        let (d, c, _) = self.add_full(a, &nb, Wire::ONE);
        (d, c)
    }

    /// Unsigned `a ≥ b`, carry chain only. Operands are zero-extended to the
    /// longer width.
    pub fn ge(&mut self, a: &[Wire], b: &[Wire]) -> Wire {
        let n = a.len().max(b.len());
        let mut c = Wire::ONE;
        for i in 0..n {
            let x = a.get(i).copied().unwrap_or(Wire::ZERO);
            let y = b.get(i).copied().unwrap_or(Wire::ZERO);
            let y = self.not(y);
            let t1 = self.xor(x, c);
            let t2 = self.xor(y, c);
            let g = self.and(t1, t2);
            c = self.xor(c, g);
        }
        c
    }

    pub fn lt(&mut self, a: &[Wire], b: &[Wire]) -> Wire {
        let ge = self.ge(a, b);
        self.not(ge)
    }

    /// `a + 1` when `inc` is set.
    pub fn increment(&mut self, a: &[Wire], inc: Wire) -> Bits {
        let mut c = inc;
        a.iter()
            .map(|x| {
                let s = self.xor(*x, c);
                c = self.and(*x, c);
                s
            })
            .collect()
    }

    /// Two's-complement negation when `neg` is set.
    pub fn cond_negate(&mut self, a: &[Wire], neg: Wire) -> Bits {
        let flipped = self.xor_all(a, neg);
        self.increment(&flipped, neg)
    }

    /// Logical right shift by a secret amount. Shifted-out bits are ORed into
    /// bit 0 when `sticky` is set. Amount bits beyond the width's range
    /// flush everything out.
    pub fn shr(&mut self, a: &[Wire], amount: &[Wire], sticky: bool) -> Bits {
        let n = a.len();
        let mut v: Bits = a.to_vec();
        for (k, s) in amount.iter().enumerate() {
            let dist = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
            let mut shifted: Bits = (0..n)
                .map(|i| {
                    i.checked_add(dist)
                        .and_then(|j| v.get(j).copied())
                        .unwrap_or(Wire::ZERO)
                })
                .collect();
            if sticky {
                let lost = self.or_reduce(&v[..dist.min(n)]);
                shifted[0] = self.or(shifted[0], lost);
            }
            v = self.mux_bits(*s, &shifted, &v);
        }
        v
    }

    /// Left shift by a secret amount; bits shifted past the top are dropped.
    pub fn shl(&mut self, a: &[Wire], amount: &[Wire]) -> Bits {
        let n = a.len();
        let mut v: Bits = a.to_vec();
        for (k, s) in amount.iter().enumerate() {
            let dist = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
            let shifted: Bits = (0..n)
                .map(|i| {
                    i.checked_sub(dist)
                        .map(|j| v[j])
                        .unwrap_or(Wire::ZERO)
                })
                .collect();
            v = self.mux_bits(*s, &shifted, &v);
        }
        v
    }

    /// Shifts `a` left until its top bit is set (or it is all zero). Returns
    /// the shifted value and the shift amount in `ceil(log2(len))` bits.
    pub fn normalize(&mut self, a: &[Wire]) -> (Bits, Bits) {
        let n = a.len();
        let stages = usize::BITS - (n.max(2) - 1).leading_zeros();
        let mut v: Bits = a.to_vec();
        let mut count = vec![Wire::ZERO; stages as usize];
        for k in (0..stages).rev() {
            let dist = 1usize << k;
            if dist >= n {
                // Covered by the smaller stages on a shorter window; only an
                // all-zero prefix of full width can reach here.
                let top = self.or_reduce(&v);
                let s = self.not(top);
                count[k as usize] = s;
                continue;
            }
            let top = self.or_reduce(&v[n - dist..]);
            let s = self.not(top);
            let shifted: Bits = (0..n)
                .map(|i| if i >= dist { v[i - dist] } else { Wire::ZERO })
                .collect();
            v = self.mux_bits(s, &shifted, &v);
            count[k as usize] = s;
        }
        (v, count)
    }

    /// Unsigned product, `a.len() + b.len()` bits, by shift-and-add.
    pub fn mul(&mut self, a: &[Wire], b: &[Wire]) -> Bits {
        let width = a.len() + b.len();
        let mut acc: Bits = vec![Wire::ZERO; width];
        for (i, bi) in b.iter().enumerate() {
            let row = self.and_all(a, *bi);
            let hi = (i + a.len() + 1).min(width);
            let (sum, carry, _) = self.add_full(&acc[i..i + a.len()], &row, Wire::ZERO);
            acc[i..i + a.len()].copy_from_slice(&sum);
            if i + a.len() < width {
                // Propagate the carry into the untouched upper bits.
                let upper = self.increment(&acc[i + a.len()..hi], carry);
                acc[i + a.len()..hi].copy_from_slice(&upper);
            }
        }
        acc
    }
}

/// Packs the low `width` bits of `value` as booleans, little-endian.
pub fn to_bits(value: u128, width: usize) -> Vec<bool> {
    (0..width).map(|i| (value >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (i, b)| acc | ((*b as u128) << i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_u(c: &BoolCircuit, args: &[(u128, usize)]) -> u128 {
        let mut bits = Vec::new();
        for (v, w) in args {
            bits.extend(to_bits(*v, *w));
        }
        from_bits(&c.eval(&bits))
    }

    #[test]
    fn folding_removes_constant_gates() {
        let mut b = Builder::new();
        let x = b.input_group(1)[0];
        assert_eq!(b.and(x, Wire::ZERO), Wire::ZERO);
        assert_eq!(b.and(x, Wire::ONE), x);
        assert_eq!(b.xor(x, x), Wire::ZERO);
        assert_eq!(b.or(x, Wire::ONE), Wire::ONE);
        let c = b.finish(vec![]);
        assert!(c.gates().is_empty());
    }

    #[test]
    fn not_is_xor_with_true() {
        let mut b = Builder::new();
        let x = b.input_group(1)[0];
        let n = b.not(x);
        let c = b.finish(vec![n]);
        assert_eq!(c.gates()[0].b, Wire::ONE);
        assert_eq!(c.counts(), GateCounts { and: 0, xor: 1 });
        assert_eq!(c.eval(&[true]), vec![false]);
        assert_eq!(c.eval(&[false]), vec![true]);
    }

    #[test]
    fn shifts_and_normalize() {
        let mut b = Builder::new();
        let x = b.input_group(12);
        let s = b.input_group(4);
        let r = b.shr(&x, &s, true);
        let l = b.shl(&x, &s);
        let (n, cnt) = b.normalize(&x);
        let mut out = r;
        out.extend(l);
        out.extend(n);
        out.extend(cnt);
        let c = b.finish(out);
        for v in [0u128, 1, 0x800, 0x5A5, 0xFFF, 0x010] {
            for sh in 0..16u128 {
                let o = eval_u(&c, &[(v, 12), (sh, 4)]);
                let r = o & 0xFFF;
                let l = (o >> 12) & 0xFFF;
                let n = (o >> 24) & 0xFFF;
                let cnt = o >> 36;
                let mut want_r = if sh >= 12 { 0 } else { v >> sh };
                if v & ((1 << sh.min(12)) - 1) != 0 {
                    want_r |= 1;
                }
                assert_eq!(r, want_r, "shr {v:#x} {sh}");
                assert_eq!(l, (v << sh) & 0xFFF, "shl {v:#x} {sh}");
                let lz = if v == 0 { 15 } else { (v as u16).leading_zeros() as u128 - 4 };
                if v != 0 {
                    assert_eq!(cnt, lz, "count {v:#x}");
                    assert_eq!(n, (v << lz) & 0xFFF);
                }
            }
        }
    }

    #[test]
    fn multiplier_and_compare() {
        let mut b = Builder::new();
        let x = b.input_group(6);
        let y = b.input_group(5);
        let mut out = b.mul(&x, &y);
        out.push(b.ge(&x, &y));
        let c = b.finish(out);
        for xv in 0..64u128 {
            for yv in 0..32u128 {
                let o = eval_u(&c, &[(xv, 6), (yv, 5)]);
                assert_eq!(o & 0x7FF, xv * yv);
                assert_eq!(o >> 11 == 1, xv >= yv);
            }
        }
    }
}
