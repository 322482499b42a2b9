use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use snail_core::obliv::{eval_op, NumericFormat, OpKind, SlotKind, Word};
use snail_gc::circuit::{from_bits, to_bits, BoolCircuit, Builder, Wire};
use snail_gc::compile::{op_circuit, OpCircuit};
use snail_gc::frame::{ChunkFraming, ChunkReader, ChunkWriter};
use snail_gc::garble::{
    constant_labels, decode, decode_tape, encode_inputs, encode_tape_inputs, evaluate,
    evaluate_tape, garble, garble_tape, AND_BYTES,
};
use snail_gc::{compile, GarbleSeed};

/// Operand words biased toward the awkward corners of each format.
fn operand(rng: &mut ChaCha20Rng, format: NumericFormat, kind: SlotKind) -> Word {
    if kind == SlotKind::Bit {
        return rng.gen::<bool>() as Word;
    }
    match format {
        NumericFormat::Float32 => {
            let special = [0u32, 0x8000_0000, 0x7f80_0000, 0xff80_0000, 0x7fc0_0000, 1, 0x0080_0000, 0x7f7f_ffff];
            match rng.gen_range(0..10) {
                0 => special[rng.gen_range(0..special.len())] as Word,
                1 => (rng.gen::<u32>() & 0x807f_ffff) as Word,
                2..=5 => (rng.gen_range(-1e4f32..1e4)).to_bits() as Word,
                _ => rng.gen::<u32>() as Word,
            }
        }
        NumericFormat::Fixed64 { .. } => match rng.gen_range(0..4) {
            0 => rng.gen::<u64>(),
            1 => (rng.gen::<i64>() >> 20) as u64,
            _ => (rng.gen_range(-(1i64 << 40)..(1i64 << 40))) as u64,
        },
    }
}

fn run_op(
    c: &OpCircuit,
    format: NumericFormat,
    seed: &GarbleSeed,
    args: &[Word],
    sticky: bool,
) -> (Word, bool) {
    let mut bits = Vec::new();
    for (a, k) in args.iter().zip(c.kind.operand_kinds()) {
        let w = if *k == SlotKind::Bit { 1 } else { format.width() };
        bits.extend(to_bits(*a as u128, w));
    }
    if c.tracks_overflow {
        bits.push(sticky);
    }
    let g = garble(&c.circuit, seed);
    let out = decode(&evaluate(&c.circuit, &g, &encode_inputs(seed, &bits)).unwrap(), &g.decode);
    let width = if c.kind.output_kind() == SlotKind::Bit { 1 } else { format.width() };
    let flag = if c.tracks_overflow { out[width] } else { false };
    (from_bits(&out[..width]) as Word, flag)
}

fn per_op_round_trips(format: NumericFormat, total: usize, seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let circuits: Vec<OpCircuit> = OpKind::ALL.iter().map(|k| op_circuit(format, *k).unwrap()).collect();
    for i in 0..total {
        let c = &circuits[i % circuits.len()];
        let args: Vec<Word> = c.kind.operand_kinds().iter().map(|k| operand(&mut rng, format, *k)).collect();
        let sticky = rng.gen_bool(0.1);
        let gs = GarbleSeed::random(&mut rng);
        let (got, ovf) = run_op(c, format, &gs, &args, sticky);
        let (want, want_ovf) = eval_op(format, c.kind, &args);
        assert_eq!(got, want, "{:?} {:?} on {:x?}", format, c.kind, args);
        if c.tracks_overflow {
            assert_eq!(ovf, sticky || want_ovf, "{:?} overflow on {:x?}", c.kind, args);
        }
    }
}

#[test]
fn float32_ops_round_trip_ten_thousand_times() {
    per_op_round_trips(NumericFormat::Float32, 10_000, 1);
}

#[test]
fn fixed64_ops_round_trip_ten_thousand_times() {
    per_op_round_trips(NumericFormat::fixed64(), 10_000, 2);
}

fn adder8() -> BoolCircuit {
    let mut b = Builder::new();
    let x = b.input_group(8);
    let y = b.input_group(8);
    let (mut s, c, _) = b.add_full(&x, &y, Wire::ZERO);
    s.push(c);
    b.finish(s)
}

#[test]
fn eight_bit_adder_is_exhaustively_correct() {
    let c = adder8();
    let seed = GarbleSeed::new([0x5a; 16]);
    let g = garble(&c, &seed);
    for x in 0..=255u128 {
        for y in 0..=255u128 {
            let mut bits = to_bits(x, 8);
            bits.extend(to_bits(y, 8));
            let out = evaluate(&c, &g, &encode_inputs(&seed, &bits)).unwrap();
            assert_eq!(from_bits(&decode(&out, &g.decode)), x + y);
        }
    }
}

#[test]
fn xor_only_circuits_cost_nothing() {
    let mut b = Builder::new();
    let x = b.input_group(32);
    let y = b.input_group(32);
    let z = b.xor_bits(&x, &y);
    let nz: Vec<Wire> = z.iter().map(|w| b.not(*w)).collect();
    let c = b.finish(nz);
    assert_eq!(c.counts().and, 0);
    assert!(garble(&c, &GarbleSeed::new([1; 16])).tables.is_empty());
}

/// A small mixed tape in either format.
fn small_tape(format: NumericFormat) -> snail_core::obliv::Tape {
    use snail_core::obliv::{Arith, TapeBuilder};
    let mut b = TapeBuilder::new(format);
    let x = b.input();
    let y = b.input();
    let s = b.add(x, y);
    let p = b.mul(s, x);
    let h = b.num(0.5);
    let q = b.mul(p, h);
    let c = b.lt(q, y);
    let r = b.select(c, q, y);
    b.output(r);
    b.output_bit(c);
    b.finish()
}

#[test]
fn stream_size_is_thirty_two_bytes_per_and_plus_framing() {
    for format in [NumericFormat::Float32, NumericFormat::fixed64()] {
        let ct = compile(&small_tape(format)).unwrap();
        let seed = GarbleSeed::new([2; 16]);
        let mut wire = Vec::new();
        let mut w = ChunkWriter::new(&mut wire, ChunkFraming::BARE);
        garble_tape(&ct, &seed, &mut w).unwrap();
        w.finish().unwrap();
        let tables = ct.and_gates() * AND_BYTES as u64;
        assert_eq!(wire.len() as u64, tables + ChunkFraming::BARE.overhead(tables));
    }
}

#[test]
fn garbling_is_deterministic_in_the_seed() {
    let ct = compile(&small_tape(NumericFormat::Float32)).unwrap();
    let run = |s: [u8; 16]| {
        let mut v = Vec::new();
        let map = garble_tape(&ct, &GarbleSeed::new(s), &mut v).unwrap();
        (v, map)
    };
    assert_eq!(run([3; 16]), run([3; 16]));
    let (a, _) = run([3; 16]);
    let (b, _) = run([4; 16]);
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
}

#[test]
fn chunked_tape_round_trip_matches_cleartext() {
    use snail_core::obliv::{run_cleartext, CostTable};
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for format in [NumericFormat::Float32, NumericFormat::fixed64()] {
        let tape = small_tape(format);
        let ct = compile(&tape).unwrap();
        for _ in 0..25 {
            let inputs: Vec<Word> = (0..2).map(|_| format.encode(rng.gen_range(-1e3..1e3)).unwrap()).collect();
            let seed = GarbleSeed::random(&mut rng);
            let mut wire = Vec::new();
            let mut w = ChunkWriter::new(&mut wire, ChunkFraming::BARE);
            let map = garble_tape(&ct, &seed, &mut w).unwrap();
            w.finish().unwrap();
            let mut src = wire.as_slice();
            let mut r = ChunkReader::new(&mut src, ChunkFraming::BARE);
            let labels = encode_tape_inputs(&ct, &seed, &inputs).unwrap();
            let out = evaluate_tape(&ct, &constant_labels(&ct, &seed), &labels, &mut r).unwrap();
            assert!(r.is_drained() && src.is_empty());
            let (words, ovf) = decode_tape(&ct, &out, &map).unwrap();
            let want = run_cleartext(&tape, &inputs, &CostTable::zero(format)).unwrap();
            assert_eq!(words, want.outputs);
            assert_eq!(ovf, want.overflow);
        }
    }
}

#[test]
fn truncated_stream_aborts() {
    let ct = compile(&small_tape(NumericFormat::Float32)).unwrap();
    let seed = GarbleSeed::new([5; 16]);
    let mut wire = Vec::new();
    garble_tape(&ct, &seed, &mut wire).unwrap();
    wire.truncate(wire.len() - 1);
    let labels = encode_tape_inputs(&ct, &seed, &[0, 0]).unwrap();
    let r = evaluate_tape(&ct, &constant_labels(&ct, &seed), &labels, &mut wire.as_slice());
    assert!(matches!(r, Err(snail_gc::GcError::Truncated)));
}

/// Evaluator-visible output labels of a fixed circuit and fixed inputs,
/// across fresh seeds, should look like uniform 128-bit strings.
#[test]
fn evaluator_labels_look_uniform() {
    let c = adder8();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let runs = 10_000;
    let mut ones = [0u32; 128];
    let mut bytes = [0u32; 256];
    let mut bits = to_bits(200, 8);
    bits.extend(to_bits(100, 8));
    for _ in 0..runs {
        let seed = GarbleSeed::random(&mut rng);
        let g = garble(&c, &seed);
        let l = evaluate(&c, &g, &encode_inputs(&seed, &bits)).unwrap()[8];
        for (i, o) in ones.iter_mut().enumerate() {
            *o += ((l.0 >> i) & 1) as u32;
        }
        for b in l.to_bytes() {
            bytes[b as usize] += 1;
        }
    }
    // Each bit position is Binomial(10^4, 1/2): σ = 50; allow 5σ.
    for (i, o) in ones.iter().enumerate() {
        assert!((*o as i64 - 5000).abs() < 250, "bit {i}: {o}");
    }
    // Byte histogram over 160,000 bytes, chi-square with 255 dof; the
    // 0.9999 quantile is about 347.
    let expected = runs as f64 * 16.0 / 256.0;
    let chi2: f64 = bytes.iter().map(|b| (*b as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 347.0, "chi2 {chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn subnormal_range_mul_div_match(a in 0u32..0x0100_0000, b in 0u32..0x4000_0000, sa: bool, sb: bool, seed: [u8; 16]) {
        let a = a | ((sa as u32) << 31);
        let b = b | ((sb as u32) << 31);
        let gs = GarbleSeed::new(seed);
        for kind in [OpKind::Mul, OpKind::Div] {
            let c = op_circuit(NumericFormat::Float32, kind).unwrap();
            let args = [a as Word, b as Word];
            let (got, _) = run_op(&c, NumericFormat::Float32, &gs, &args, false);
            let (want, _) = eval_op(NumericFormat::Float32, kind, &args);
            prop_assert_eq!(got, want, "{:?} {:x} {:x}", kind, a, b);
        }
    }
}
