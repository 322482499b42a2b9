//! Accounting-based benchmark table: gates, bytes and rounds per
//! localization for each algorithm, point count, format and setting.
//!
//! Gate counts come from the calibrated per-op circuit sizes, so every row
//! is deterministic for a fixed seed. Iteration counts are measured by
//! running the plaintext loop on seeded scenes; runs that fail to converge
//! are counted in [`BenchOutcome::failures`] instead of being dropped.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use snail_core::obliv::{CostTable, NumericFormat, AND_TABLE_BYTES};
use snail_core::solver::{
    build_iteration_tape, build_oblivious_tape, plaintext_localize, tape_input_count, Algorithm,
    SolverConfig,
};
use snail_protocol::accounting::{naive_report, seeded_report, KAPPA_BITS};

use crate::scene::gen_scene;
use crate::{median, HarnessError};

/// Client round trips per invocation: one to the generator for seed
/// material or labels, one to the evaluator for the output labels.
pub const CLIENT_ROUNDS_PER_INVOCATION: u64 = 2;
/// Bytes of one Ristretto point in the base OT.
pub const OT_POINT_BYTES: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LmSil,
    LmDo,
    GnSil,
    GnDo,
}

impl Method {
    pub fn algorithm(self) -> Algorithm {
        match self {
            Method::LmSil | Method::LmDo => Algorithm::LM,
            Method::GnSil | Method::GnDo => Algorithm::GN,
        }
    }

    pub fn oblivious(self) -> bool {
        matches!(self, Method::LmDo | Method::GnDo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Float32,
    Fixed64,
}

impl FormatName {
    pub fn format(self) -> NumericFormat {
        match self {
            FormatName::Float32 => NumericFormat::Float32,
            FormatName::Fixed64 => NumericFormat::fixed64(),
        }
    }
}

/// Offload: the client holds every input and uses seeded encoding.
/// Split: the evaluator holds the map points and gets their labels by OT;
/// the client uses naive encoding for the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Offload,
    Split,
}

fn default_samples() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub algorithm: Method,
    pub n: usize,
    pub format: FormatName,
    pub mode: Setting,
    /// Scenes used to measure iterations to converge.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

/// One CSV row; the field order is the column order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: Method,
    pub n: usize,
    pub format: FormatName,
    pub mode: Setting,
    pub and_gates: u64,
    pub xor_gates: u64,
    pub bytes: u64,
    pub rounds: u64,
    /// Median iterations to converge over the converged sample runs.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOutcome {
    pub row: BenchRow,
    /// Gates of a single invocation (one iteration for SIL, the whole
    /// bounded loop for DO).
    pub invocation_gates: u64,
    pub invocations: u64,
    pub failures: usize,
    pub samples: usize,
}

/// Caches calibrated cost tables by format.
#[derive(Default)]
pub struct CostTables(BTreeMap<(u8, u8), CostTable>);

impl CostTables {
    pub fn get(&mut self, format: NumericFormat) -> Result<&CostTable, HarnessError> {
        let key = format.tag();
        if let std::collections::btree_map::Entry::Vacant(e) = self.0.entry(key) {
            e.insert(snail_gc::compile::cost_table(format)?);
        }
        Ok(&self.0[&key])
    }
}

/// Runs every configuration in order.
pub fn bench(configs: &[BenchConfig]) -> Result<Vec<BenchOutcome>, HarnessError> {
    let mut tables = CostTables::default();
    configs.iter().map(|c| bench_row(c, &mut tables)).collect()
}

pub fn solver_config(method: Method, format: FormatName) -> SolverConfig {
    SolverConfig {
        algorithm: method.algorithm(),
        format: format.format(),
        ..SolverConfig::default()
    }
}

pub fn bench_row(c: &BenchConfig, tables: &mut CostTables) -> Result<BenchOutcome, HarnessError> {
    if c.samples == 0 {
        return Err(HarnessError::Config("samples must be at least 1".into()));
    }
    let format = c.format.format();
    let sil_cfg = solver_config(c.algorithm, c.format);
    let k = crate::scene::standard_intrinsics();
    let tape = if c.algorithm.oblivious() {
        build_oblivious_tape(c.n, &k, &sil_cfg.oblivious_baseline())?
    } else {
        build_iteration_tape(c.n, &k, &sil_cfg)?
    };
    let cost = tables.get(format)?.tape_cost(&tape);

    let mut iterations = Vec::with_capacity(c.samples);
    let mut failures = 0;
    for i in 0..c.samples {
        let scene = gen_scene(c.n, c.noise_sigma, c.rng_seed.wrapping_add(i as u64))?;
        match plaintext_localize(&scene.correspondences, &k, &scene.initial_guess(), &sil_cfg) {
            Ok(loc) if loc.converged => iterations.push(loc.iterations),
            _ => failures += 1,
        }
    }
    let iters = median(&iterations).unwrap_or(sil_cfg.max_outer);
    let invocations = if c.algorithm.oblivious() { 1 } else { iters as u64 };

    let per_invocation_bytes = cost.and_gates * AND_TABLE_BYTES + label_bytes(c.n, format, c.mode);
    Ok(BenchOutcome {
        row: BenchRow {
            algorithm: c.algorithm,
            n: c.n,
            format: c.format,
            mode: c.mode,
            and_gates: cost.and_gates * invocations,
            xor_gates: cost.xor_gates * invocations,
            bytes: per_invocation_bytes * invocations,
            rounds: CLIENT_ROUNDS_PER_INVOCATION * invocations,
            iterations: iters,
        },
        invocation_gates: cost.gates(),
        invocations,
        failures,
        samples: c.samples,
    })
}

/// Label traffic of one invocation, framing excluded: input encoding for
/// the client, base OT for the evaluator's inputs in the split setting, and
/// the output labels plus decode bits.
pub fn label_bytes(n: usize, format: NumericFormat, mode: Setting) -> u64 {
    let w = format.width() as u64;
    let label = KAPPA_BITS / 8;
    let outputs = 7 * w;
    let out = outputs * label + outputs.div_ceil(8);
    match mode {
        Setting::Offload => {
            let bits = tape_input_count(n) as u64 * w;
            seeded_report(bits).client_total_bits() / 8 + out
        }
        Setting::Split => {
            let client_bits = (2 * n as u64 + 6) * w;
            let eval_bits = 3 * n as u64 * w;
            let ot = OT_POINT_BYTES + eval_bits * (OT_POINT_BYTES + 2 * label);
            naive_report(client_bits).client_total_bits() / 8 + ot + out
        }
    }
}

/// Writes the rows as CSV with a header.
pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "algorithm", "n", "format", "mode", "and_gates", "xor_gates", "bytes", "rounds", "iterations",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(algorithm: Method, n: usize) -> BenchConfig {
        BenchConfig {
            algorithm,
            n,
            format: FormatName::Float32,
            mode: Setting::Offload,
            samples: 5,
            noise_sigma: 0.0,
            rng_seed: 1,
        }
    }

    #[test]
    fn empty_config_empty_table() {
        assert!(bench(&[]).unwrap().is_empty());
        let mut out = Vec::new();
        write_csv(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "algorithm,n,format,mode,and_gates,xor_gates,bytes,rounds,iterations\n"
        );
    }

    #[test]
    fn header_and_values() {
        let rows: Vec<_> = bench(&[cfg(Method::LmSil, 6)]).unwrap().into_iter().map(|o| o.row).collect();
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "algorithm,n,format,mode,and_gates,xor_gates,bytes,rounds,iterations");
        assert!(lines.next().unwrap().starts_with("lm-sil,6,float32,offload,"));
    }

    #[test]
    fn config_json_defaults() {
        let c: BenchConfig =
            serde_json::from_str(r#"{"algorithm":"gn-do","n":8,"format":"fixed64","mode":"split"}"#).unwrap();
        assert_eq!(c.samples, 20);
        assert_eq!(c.algorithm, Method::GnDo);
        assert_eq!(c.format.format(), NumericFormat::fixed64());
    }

    #[test]
    fn offload_labels_follow_seeded_accounting() {
        // 36 inputs of 32 bits: κ per bit sent, 2κ seed bits received,
        // then 7 output words of labels and decode bits.
        let want = (128 * 36 * 32 + 256) / 8 + 7 * 32 * 16 + 28;
        assert_eq!(label_bytes(6, NumericFormat::Float32, Setting::Offload), want);
    }
}
