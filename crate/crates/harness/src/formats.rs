//! Float32 against Fixed64: per-op circuit sizes and end-to-end
//! convergence on the standard scene battery.

use serde::{Deserialize, Serialize};

use snail_core::obliv::{GateCost, NumericFormat, OpKind};
use snail_core::solver::{plaintext_localize, SolverConfig};

use crate::scene::gen_scene;
use crate::HarnessError;

pub const MIN_SAMPLES: usize = 100;
/// A run converges when the solver stops on its threshold without overflow
/// and lands within these errors of the ground truth.
pub const TRANSLATION_TOL: f64 = 1e-2;
pub const ROTATION_TOL: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatRow {
    pub format: String,
    pub add_and: u64,
    pub add_xor: u64,
    pub mul_and: u64,
    pub mul_xor: u64,
    pub converged: usize,
    pub overflowed: usize,
    pub samples: usize,
    pub convergence_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatStudy {
    pub float32: FormatRow,
    pub fixed64: FormatRow,
}

impl FormatStudy {
    /// `1 − rate(Fixed64) / rate(Float32)`.
    pub fn relative_degradation(&self) -> f64 {
        if self.float32.convergence_rate == 0.0 {
            return 0.0;
        }
        1.0 - self.fixed64.convergence_rate / self.float32.convergence_rate
    }
}

/// Scene `i` of the battery: 6, 8 or 12 noise-free points.
pub fn battery_scene(i: usize, seed: u64) -> Result<crate::SyntheticScene, HarnessError> {
    gen_scene([6, 8, 12][i % 3], 0.0, seed.wrapping_add(i as u64))
}

fn row(format: NumericFormat, samples: usize, seed: u64) -> Result<FormatRow, HarnessError> {
    let table = snail_gc::compile::cost_table(format)?;
    let (add, mul): (GateCost, GateCost) = (table.cost(OpKind::Add), table.cost(OpKind::Mul));
    let cfg = SolverConfig {
        format,
        ..SolverConfig::default()
    };
    let mut converged = 0;
    let mut overflowed = 0;
    for i in 0..samples {
        let s = battery_scene(i, seed)?;
        let Ok(loc) = plaintext_localize(&s.correspondences, &s.intrinsics, &s.initial_guess(), &cfg) else {
            continue;
        };
        if loc.steps.iter().any(|st| st.overflow) {
            overflowed += 1;
        }
        if loc.converged
            && loc.pose.translation_error(&s.ground_truth) < TRANSLATION_TOL
            && loc.pose.rotation_error(&s.ground_truth) < ROTATION_TOL
        {
            converged += 1;
        }
    }
    Ok(FormatRow {
        format: match format {
            NumericFormat::Float32 => "float32".into(),
            NumericFormat::Fixed64 { frac_bits } => format!("fixed64.{frac_bits}"),
        },
        add_and: add.and,
        add_xor: add.xor,
        mul_and: mul.and,
        mul_xor: mul.xor,
        converged,
        overflowed,
        samples,
        convergence_rate: converged as f64 / samples as f64,
    })
}

pub fn fixed_vs_float(samples: usize, seed: u64) -> Result<FormatStudy, HarnessError> {
    if samples < MIN_SAMPLES {
        return Err(HarnessError::Config(format!("format study needs at least {MIN_SAMPLES} samples")));
    }
    Ok(FormatStudy {
        float32: row(NumericFormat::Float32, samples, seed)?,
        fixed64: row(NumericFormat::fixed64(), samples, seed)?,
    })
}
