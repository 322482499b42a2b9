//! Free-XOR half-gates garbling and evaluation, for single circuits and for
//! whole tapes streamed op by op.

use std::io::{Read, Write};

use snail_core::obliv::{SlotKind, Word};

use crate::circuit::{BoolCircuit, GateKind};
use crate::compile::CompiledTape;
use crate::label::{tweak, Domain, FixedKeyHash, GarbleSeed, Label, LabelSource};
use crate::GcError;

/// Garbled-table bytes per AND gate: two κ-bit ciphertexts.
pub const AND_BYTES: usize = 2 * Label::BYTES;

/// Holds Δ and the running AND-gate counter that feeds the hash tweaks.
pub struct Garbler {
    delta: Label,
    hash: FixedKeyHash,
    gate: u64,
    wires: Vec<Label>,
}

impl Garbler {
    pub fn new(delta: Label) -> Self {
        assert!(delta.lsb(), "delta must have its permute bit set");
        Garbler {
            delta,
            hash: FixedKeyHash::new(),
            gate: 0,
            wires: Vec::new(),
        }
    }

    /// AND gates garbled so far.
    pub fn and_gates(&self) -> u64 {
        self.gate
    }

    /// Garbles one instance of `c`. `consts` and `inputs` are zero-labels;
    /// returns the output zero-labels and appends the tables to `tables`.
    pub fn garble(
        &mut self,
        c: &BoolCircuit,
        consts: [Label; 2],
        inputs: &[Label],
        tables: &mut Vec<u8>,
    ) -> Vec<Label> {
        assert_eq!(inputs.len(), c.num_inputs(), "input label count");
        let delta = self.delta;
        let w = &mut self.wires;
        w.clear();
        w.resize(c.num_wires(), Label(0));
        w[0] = consts[0];
        w[1] = consts[1];
        for (wire, l) in c.inputs().zip(inputs) {
            w[wire.index()] = *l;
        }
        for g in c.gates() {
            let a0 = w[g.a.index()];
            w[g.out.index()] = match g.kind {
                GateKind::Xor => a0 ^ w[g.b.index()],
                GateKind::Not => a0 ^ w[1],
                GateKind::And => {
                    let b0 = w[g.b.index()];
                    let (pa, pb) = (a0.lsb(), b0.lsb());
                    let (j0, j1) = (tweak(self.gate, 0), tweak(self.gate, 1));
                    self.gate += 1;
                    let [ha0, ha1, hb0, hb1] =
                        self.hash
                            .hash([(a0, j0), (a0 ^ delta, j0), (b0, j1), (b0 ^ delta, j1)]);
                    let tg = (ha0 ^ ha1).xor_if(pb, delta);
                    let wg0 = ha0.xor_if(pa, tg);
                    let te = hb0 ^ hb1 ^ a0;
                    let we0 = hb0.xor_if(pb, te ^ a0);
                    tables.extend_from_slice(&tg.to_bytes());
                    tables.extend_from_slice(&te.to_bytes());
                    wg0 ^ we0
                }
            };
        }
        c.outputs().iter().map(|o| w[o.index()]).collect()
    }
}

/// Evaluator counterpart of [`Garbler`]; keeps the same gate counter.
pub struct Evaluator {
    hash: FixedKeyHash,
    gate: u64,
    wires: Vec<Label>,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self::new()
    }
}

impl Evaluator {
    pub fn new() -> Self {
        Evaluator {
            hash: FixedKeyHash::new(),
            gate: 0,
            wires: Vec::new(),
        }
    }

    pub fn and_gates(&self) -> u64 {
        self.gate
    }

    /// Evaluates one instance of `c` on active labels, consuming exactly
    /// [`AND_BYTES`] per AND gate from `tables`.
    pub fn evaluate(
        &mut self,
        c: &BoolCircuit,
        consts: [Label; 2],
        inputs: &[Label],
        tables: &[u8],
    ) -> Result<Vec<Label>, GcError> {
        if inputs.len() != c.num_inputs() {
            return Err(GcError::LabelCount {
                expected: c.num_inputs(),
                got: inputs.len(),
            });
        }
        let needed = c.counts().and as usize * AND_BYTES;
        if tables.len() != needed {
            return Err(GcError::Truncated);
        }
        let w = &mut self.wires;
        w.clear();
        w.resize(c.num_wires(), Label(0));
        w[0] = consts[0];
        w[1] = consts[1];
        for (wire, l) in c.inputs().zip(inputs) {
            w[wire.index()] = *l;
        }
        let mut pos = 0;
        let mut block = || {
            let mut b = [0u8; 16];
            b.copy_from_slice(&tables[pos..pos + 16]);
            pos += 16;
            Label::from_bytes(b)
        };
        for g in c.gates() {
            let a = w[g.a.index()];
            w[g.out.index()] = match g.kind {
                GateKind::Xor => a ^ w[g.b.index()],
                GateKind::Not => a ^ w[1],
                GateKind::And => {
                    let b = w[g.b.index()];
                    let tg = block();
                    let te = block();
                    let (j0, j1) = (tweak(self.gate, 0), tweak(self.gate, 1));
                    self.gate += 1;
                    let [ha, hb] = self.hash.hash([(a, j0), (b, j1)]);
                    let wg = ha.xor_if(a.lsb(), tg);
                    let we = hb.xor_if(b.lsb(), te ^ a);
                    wg ^ we
                }
            };
        }
        Ok(c.outputs().iter().map(|o| w[o.index()]).collect())
    }
}

/// Zero-labels of the two constant wires.
fn const_zero_labels(src: &LabelSource) -> [Label; 2] {
    [src.zero(Domain::Constant, 0), src.zero(Domain::Constant, 1)]
}

/// Active labels of the two constant wires (false, true).
pub fn const_active_labels(seed: &GarbleSeed) -> [Label; 2] {
    let src = seed.labels();
    [
        src.active(Domain::Constant, 0, false),
        src.active(Domain::Constant, 1, true),
    ]
}

/// A garbled standalone circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledCircuit {
    pub tables: Vec<u8>,
    /// Permute bit of each output zero-label.
    pub decode: Vec<bool>,
    /// Active labels of the constant wires, for the evaluator.
    pub constants: [Label; 2],
}

/// Garbles `c` with input `i` labelled from the seed's input domain at
/// index `i`.
pub fn garble(c: &BoolCircuit, seed: &GarbleSeed) -> GarbledCircuit {
    let src = seed.labels();
    let inputs: Vec<Label> = (0..c.num_inputs() as u64)
        .map(|i| src.zero(Domain::Input, i))
        .collect();
    let mut g = Garbler::new(seed.delta());
    let mut tables = Vec::with_capacity(c.counts().and as usize * AND_BYTES);
    let outs = g.garble(c, const_zero_labels(&src), &inputs, &mut tables);
    GarbledCircuit {
        tables,
        decode: outs.iter().map(|l| l.lsb()).collect(),
        constants: const_active_labels(seed),
    }
}

/// Active labels for a standalone circuit's input bits.
pub fn encode_inputs(seed: &GarbleSeed, bits: &[bool]) -> Vec<Label> {
    let src = seed.labels();
    bits.iter()
        .enumerate()
        .map(|(i, b)| src.active(Domain::Input, i as u64, *b))
        .collect()
}

pub fn evaluate(
    c: &BoolCircuit,
    g: &GarbledCircuit,
    inputs: &[Label],
) -> Result<Vec<Label>, GcError> {
    Evaluator::new().evaluate(c, g.constants, inputs, &g.tables)
}

pub fn decode(outputs: &[Label], decode: &[bool]) -> Vec<bool> {
    outputs
        .iter()
        .zip(decode)
        .map(|(l, d)| l.lsb() ^ d)
        .collect()
}

/// Bit offsets of every tape slot inside one flat label vector.
struct SlotLayout {
    offset: Vec<usize>,
    width: Vec<usize>,
    total: usize,
}

impl SlotLayout {
    fn new(ct: &CompiledTape) -> Self {
        let n = ct.tape().num_slots();
        let mut offset = Vec::with_capacity(n);
        let mut width = Vec::with_capacity(n);
        let mut total = 0;
        for s in 0..n as u32 {
            let w = ct.slot_width(s);
            offset.push(total);
            width.push(w);
            total += w;
        }
        SlotLayout { offset, width, total }
    }

    fn range(&self, slot: u32) -> std::ops::Range<usize> {
        let o = self.offset[slot as usize];
        o..o + self.width[slot as usize]
    }
}

/// Label index of bit `bit` of tape input `k`.
fn input_index(k: usize, bit: usize) -> u64 {
    (k * 64 + bit) as u64
}

/// Label index of bit `bit` of tape constant `k` (after the two constant
/// wires).
fn constant_index(k: usize, bit: usize) -> u64 {
    (2 + k * 64 + bit) as u64
}

fn output_bits(ct: &CompiledTape) -> usize {
    let words: usize = ct.tape().outputs().iter().map(|s| ct.slot_width(*s)).sum();
    words + ct.tracks_overflow() as usize
}

/// Output decode information for a garbled tape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeMap(pub Vec<bool>);

/// Flushes the table buffer to the sink past this many bytes.
const FLUSH_BYTES: usize = 1 << 20;

/// Garbles a compiled tape, streaming tables to `sink` in op order, and
/// returns the output decode map.
pub fn garble_tape<W: Write>(
    ct: &CompiledTape,
    seed: &GarbleSeed,
    sink: &mut W,
) -> Result<DecodeMap, GcError> {
    let src = seed.labels();
    let consts = const_zero_labels(&src);
    let layout = SlotLayout::new(ct);
    let mut labels = vec![Label(0); layout.total];
    for (k, slot) in ct.tape().inputs().iter().enumerate() {
        for (bit, i) in layout.range(*slot).enumerate() {
            labels[i] = src.zero(Domain::Input, input_index(k, bit));
        }
    }
    for (k, c) in ct.tape().constants().iter().enumerate() {
        for (bit, i) in layout.range(c.slot).enumerate() {
            labels[i] = src.zero(Domain::Constant, constant_index(k, bit));
        }
    }
    let mut sticky = consts[0];
    let mut g = Garbler::new(seed.delta());
    let mut buf = Vec::with_capacity(FLUSH_BYTES + (1 << 16));
    let mut ins = Vec::new();
    for op in ct.tape().ops() {
        let t = ct.template(op.kind);
        ins.clear();
        for a in op.operands() {
            ins.extend_from_slice(&labels[layout.range(*a)]);
        }
        if t.tracks_overflow {
            ins.push(sticky);
        }
        let outs = g.garble(&t.circuit, consts, &ins, &mut buf);
        let r = layout.range(op.out);
        let width = r.len();
        labels[r].copy_from_slice(&outs[..width]);
        if t.tracks_overflow {
            sticky = outs[width];
        }
        if buf.len() >= FLUSH_BYTES {
            sink.write_all(&buf)?;
            buf.clear();
        }
    }
    sink.write_all(&buf)?;
    let mut map = Vec::with_capacity(output_bits(ct));
    for s in ct.tape().outputs() {
        map.extend(labels[layout.range(*s)].iter().map(|l| l.lsb()));
    }
    if ct.tracks_overflow() {
        map.push(sticky.lsb());
    }
    Ok(DecodeMap(map))
}

/// Generator-side active labels the evaluator needs besides client inputs:
/// the two constant wires, then every bit of every tape constant.
pub fn constant_labels(ct: &CompiledTape, seed: &GarbleSeed) -> Vec<Label> {
    let src = seed.labels();
    let mut out = const_active_labels(seed).to_vec();
    for (k, c) in ct.tape().constants().iter().enumerate() {
        let width = ct.slot_width(c.slot);
        for bit in 0..width {
            out.push(src.active(Domain::Constant, constant_index(k, bit), (c.value >> bit) & 1 == 1));
        }
    }
    out
}

/// Active labels for the tape inputs, computable by anyone holding the seed.
pub fn encode_tape_inputs(
    ct: &CompiledTape,
    seed: &GarbleSeed,
    inputs: &[Word],
) -> Result<Vec<Label>, GcError> {
    let expected = ct.tape().inputs().len();
    if inputs.len() != expected {
        return Err(GcError::LabelCount {
            expected,
            got: inputs.len(),
        });
    }
    let src = seed.labels();
    let mut out = Vec::new();
    for (k, (slot, v)) in ct.tape().inputs().iter().zip(inputs).enumerate() {
        let width = ct.slot_width(*slot);
        for bit in 0..width {
            out.push(src.active(Domain::Input, input_index(k, bit), (v >> bit) & 1 == 1));
        }
    }
    Ok(out)
}

/// Zero-labels of every bit of tape input `k`.
pub fn input_zero_labels(ct: &CompiledTape, seed: &GarbleSeed, k: usize) -> Vec<Label> {
    let src = seed.labels();
    let width = ct.slot_width(ct.tape().inputs()[k]);
    (0..width).map(|bit| src.zero(Domain::Input, input_index(k, bit))).collect()
}

/// Active labels of tape input `k` holding `value`.
pub fn input_active_labels(ct: &CompiledTape, seed: &GarbleSeed, k: usize, value: Word) -> Vec<Label> {
    let delta = seed.delta();
    input_zero_labels(ct, seed, k)
        .into_iter()
        .enumerate()
        .map(|(bit, l)| l.xor_if((value >> bit) & 1 == 1, delta))
        .collect()
}

/// Bits of tape input `k`, least significant first.
pub fn input_bits(ct: &CompiledTape, k: usize, value: Word) -> Vec<bool> {
    let width = ct.slot_width(ct.tape().inputs()[k]);
    (0..width).map(|bit| (value >> bit) & 1 == 1).collect()
}

/// Number of input labels [`evaluate_tape`] expects.
pub fn tape_input_bits(ct: &CompiledTape) -> usize {
    ct.tape().inputs().iter().map(|s| ct.slot_width(*s)).sum()
}

/// Evaluates a garbled tape, pulling tables from `source` op by op.
pub fn evaluate_tape<R: Read>(
    ct: &CompiledTape,
    constants: &[Label],
    inputs: &[Label],
    source: &mut R,
) -> Result<Vec<Label>, GcError> {
    let layout = SlotLayout::new(ct);
    let const_bits: usize = ct.tape().constants().iter().map(|c| ct.slot_width(c.slot)).sum();
    if constants.len() != 2 + const_bits {
        return Err(GcError::LabelCount {
            expected: 2 + const_bits,
            got: constants.len(),
        });
    }
    let expected = tape_input_bits(ct);
    if inputs.len() != expected {
        return Err(GcError::LabelCount {
            expected,
            got: inputs.len(),
        });
    }
    let consts = [constants[0], constants[1]];
    let mut labels = vec![Label(0); layout.total];
    let mut it = inputs.iter();
    for slot in ct.tape().inputs() {
        for i in layout.range(*slot) {
            labels[i] = *it.next().expect("checked length");
        }
    }
    let mut it = constants[2..].iter();
    for c in ct.tape().constants() {
        for i in layout.range(c.slot) {
            labels[i] = *it.next().expect("checked length");
        }
    }
    let mut sticky = consts[0];
    let mut e = Evaluator::new();
    let mut buf = Vec::new();
    let mut ins = Vec::new();
    for op in ct.tape().ops() {
        let t = ct.template(op.kind);
        ins.clear();
        for a in op.operands() {
            ins.extend_from_slice(&labels[layout.range(*a)]);
        }
        if t.tracks_overflow {
            ins.push(sticky);
        }
        buf.resize(t.circuit.counts().and as usize * AND_BYTES, 0);
        source.read_exact(&mut buf).map_err(|err| match err.kind() {
            std::io::ErrorKind::UnexpectedEof => GcError::Truncated,
            _ => GcError::Io(err),
        })?;
        let outs = e.evaluate(&t.circuit, consts, &ins, &buf)?;
        let r = layout.range(op.out);
        let width = r.len();
        labels[r].copy_from_slice(&outs[..width]);
        if t.tracks_overflow {
            sticky = outs[width];
        }
    }
    let mut out = Vec::with_capacity(output_bits(ct));
    for s in ct.tape().outputs() {
        out.extend_from_slice(&labels[layout.range(*s)]);
    }
    if ct.tracks_overflow() {
        out.push(sticky);
    }
    Ok(out)
}

/// Decodes evaluated tape outputs into words and the overflow flag.
pub fn decode_tape(
    ct: &CompiledTape,
    outputs: &[Label],
    map: &DecodeMap,
) -> Result<(Vec<Word>, bool), GcError> {
    if outputs.len() != map.0.len() || outputs.len() != output_bits(ct) {
        return Err(GcError::LabelCount {
            expected: output_bits(ct),
            got: outputs.len(),
        });
    }
    let bits = decode(outputs, &map.0);
    let mut words = Vec::new();
    let mut pos = 0;
    for s in ct.tape().outputs() {
        let w = ct.slot_width(*s);
        let v = bits[pos..pos + w]
            .iter()
            .enumerate()
            .fold(0 as Word, |acc, (i, b)| acc | ((*b as Word) << i));
        debug_assert!(ct.tape().slot_kind(*s) == SlotKind::Word || v <= 1);
        words.push(v);
        pos += w;
    }
    let overflow = ct.tracks_overflow() && bits[pos];
    Ok((words, overflow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{from_bits, to_bits, Builder};
    use crate::compile::compile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use snail_core::obliv::{run_cleartext, Arith, CostTable, NumericFormat, TapeBuilder};

    fn adder(width: usize) -> BoolCircuit {
        let mut b = Builder::new();
        let x = b.input_group(width);
        let y = b.input_group(width);
        let (mut s, c, _) = b.add_full(&x, &y, crate::circuit::Wire::ZERO);
        s.push(c);
        b.finish(s)
    }

    #[test]
    fn adder_round_trip() {
        let c = adder(8);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let seed = GarbleSeed::random(&mut rng);
            let g = garble(&c, &seed);
            assert_eq!(g.tables.len(), c.counts().and as usize * AND_BYTES);
            let (x, y): (u8, u8) = (rng.gen(), rng.gen());
            let mut bits = to_bits(x as u128, 8);
            bits.extend(to_bits(y as u128, 8));
            let out = evaluate(&c, &g, &encode_inputs(&seed, &bits)).unwrap();
            assert_eq!(from_bits(&decode(&out, &g.decode)), x as u128 + y as u128);
        }
    }

    #[test]
    fn same_seed_same_tables() {
        let c = adder(16);
        let seed = GarbleSeed::new([3; 16]);
        assert_eq!(garble(&c, &seed), garble(&c, &seed));
        assert_ne!(garble(&c, &seed).tables, garble(&c, &GarbleSeed::new([4; 16])).tables);
    }

    #[test]
    fn constant_and_empty_circuits() {
        let seed = GarbleSeed::new([9; 16]);
        let b = Builder::new();
        let c = b.finish(vec![crate::circuit::Wire::ONE, crate::circuit::Wire::ZERO]);
        let g = garble(&c, &seed);
        assert!(g.tables.is_empty());
        let out = evaluate(&c, &g, &[]).unwrap();
        assert_eq!(decode(&out, &g.decode), vec![true, false]);
        let empty = Builder::new().finish(vec![]);
        let g = garble(&empty, &seed);
        assert!(evaluate(&empty, &g, &[]).unwrap().is_empty());
    }

    #[test]
    fn short_tables_are_rejected() {
        let c = adder(4);
        let seed = GarbleSeed::new([1; 16]);
        let mut g = garble(&c, &seed);
        g.tables.pop();
        let inputs = encode_inputs(&seed, &[false; 8]);
        assert!(matches!(evaluate(&c, &g, &inputs), Err(GcError::Truncated)));
    }

    #[test]
    fn tape_round_trip_matches_cleartext() {
        for fmt in [NumericFormat::Float32, NumericFormat::fixed64()] {
            let mut b = TapeBuilder::new(fmt);
            let x = b.input();
            let y = b.input();
            let two = b.num(2.0);
            let p = b.mul(x, y);
            let q = b.div(p, two);
            let r = b.sqrt(q);
            let c = b.lt(x, y);
            let m = b.select(c, r, x);
            b.output(m);
            b.output_bit(c);
            let tape = b.finish();
            let ct = compile(&tape).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(5);
            for _ in 0..20 {
                let vals = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
                let words: Vec<Word> = vals.iter().map(|v| fmt.encode(*v).unwrap()).collect();
                let want = run_cleartext(&tape, &words, &CostTable::zero(fmt)).unwrap();
                let seed = GarbleSeed::random(&mut rng);
                let mut stream = Vec::new();
                let map = garble_tape(&ct, &seed, &mut stream).unwrap();
                assert_eq!(stream.len() as u64, ct.and_gates() * AND_BYTES as u64);
                let consts = constant_labels(&ct, &seed);
                let inputs = encode_tape_inputs(&ct, &seed, &words).unwrap();
                let out = evaluate_tape(&ct, &consts, &inputs, &mut stream.as_slice()).unwrap();
                let (got, ovf) = decode_tape(&ct, &out, &map).unwrap();
                assert_eq!(got, want.outputs);
                assert_eq!(ovf, want.overflow);
            }
        }
    }

    #[test]
    fn per_input_labels_agree_with_bulk_encoding() {
        let mut b = TapeBuilder::new(NumericFormat::Float32);
        let x = b.input();
        let y = b.input();
        let s = b.add(x, y);
        b.output(s);
        let ct = compile(&b.finish()).unwrap();
        let seed = GarbleSeed::new([8; 16]);
        let words = [0x4040_0000, 0xbf80_0000];
        let mut parts = input_active_labels(&ct, &seed, 0, words[0]);
        parts.extend(input_active_labels(&ct, &seed, 1, words[1]));
        assert_eq!(parts, encode_tape_inputs(&ct, &seed, &words).unwrap());
        let zero = input_zero_labels(&ct, &seed, 1);
        for (bit, (z, a)) in zero.iter().zip(&parts[32..]).enumerate() {
            let on = input_bits(&ct, 1, words[1])[bit];
            assert_eq!(*a, z.xor_if(on, seed.delta()));
        }
    }
}
