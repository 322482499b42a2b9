//! How many QR sweeps the fixed-iteration SVD needs on the normal-equation
//! matrices that LM localization actually produces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use snail_core::geometry::numeric_jacobian_in;
use snail_core::linalg::{
    band_converged, dk_qr_sweep, dk_shifted_sweep, has_degenerate_pair, householder_bidiagonalize,
    BidiagonalForm, SecretMatrix,
};
use snail_core::obliv::{Arith, PlainF32};
use snail_core::solver::{lm_system_in, plaintext_localize, SolverConfig};

use crate::scene::gen_scene;
use crate::HarnessError;

pub const MIN_SWEEPS: usize = 6;
pub const MAX_SWEEPS: usize = 30;
/// Band test: `max |superdiag| < BAND_REL · σ_max`.
pub const BAND_REL: f64 = 1e-5;
/// Element-wise relative tolerance against the float64 oracle.
pub const SIGMA_REL: f64 = 1e-4;
/// Absolute tolerance of the near-degenerate detector.
pub const DEGENERATE_TOL: f64 = 1e-5;
pub const MIN_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweeps: usize,
    /// Fraction meeting the band test with the shifted sweep.
    pub shifted_rate: f64,
    /// Same with the zero-shift sweep, for comparison.
    pub zero_shift_rate: f64,
    /// Fraction whose shifted-sweep singular values all match the oracle.
    pub sigma_match_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepStudy {
    pub samples: usize,
    pub scenes: usize,
    /// Matrices showing the near-degenerate pattern after bidiagonalization.
    pub degenerate: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepStudy {
    pub fn row(&self, sweeps: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.sweeps == sweeps)
    }
}

/// Float32 LM system matrices `JᵀJ + λ·diag(JᵀJ)`, one per iteration of
/// plaintext solves on seeded scenes (6, 8 and 12 points, alternating
/// noise-free and 0.5 px noise), until `samples` are collected.
pub fn lm_system_matrices(samples: usize, seed: u64) -> Result<(Vec<SecretMatrix<f32>>, usize), HarnessError> {
    let cfg = SolverConfig::default();
    let mut out = Vec::with_capacity(samples);
    let mut scenes = 0;
    while out.len() < samples {
        let i = scenes as u64;
        let n = [6, 8, 12][scenes % 3];
        let noise = if scenes % 2 == 0 { 0.0 } else { 0.5 };
        scenes += 1;
        let scene = gen_scene(n, noise, seed.wrapping_add(i))?;
        let x0 = scene.initial_guess();
        let loc = match plaintext_localize(&scene.correspondences, &scene.intrinsics, &x0, &cfg) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let mut ctx = PlainF32;
        let image: Vec<[f32; 2]> = scene
            .correspondences
            .image_points()
            .iter()
            .map(|p| [p[0] as f32, p[1] as f32])
            .collect();
        let map: Vec<[f32; 3]> = scene
            .correspondences
            .map_points()
            .iter()
            .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
            .collect();
        let starts = std::iter::once(x0).chain(loc.steps.iter().map(|s| s.pose));
        for pose in starts.take(loc.steps.len()) {
            let p = pose.to_array().map(|v| ctx.num(v));
            let (jac, res) = numeric_jacobian_in(&mut ctx, &scene.intrinsics, &p, &image, &map, cfg.epsilon);
            let j = SecretMatrix::from_vec(2 * n, 6, jac)?;
            let (a, _) = lm_system_in(&mut ctx, &j, &res, cfg.lambda)?;
            if a.elems().iter().all(|v| v.is_finite()) {
                out.push(a);
            }
            if out.len() == samples {
                break;
            }
        }
    }
    Ok((out, scenes))
}

fn widen(b: &BidiagonalForm<f32>) -> (Vec<f64>, Vec<f64>) {
    (
        b.diag.iter().map(|v| *v as f64).collect(),
        b.superdiag.iter().map(|v| *v as f64).collect(),
    )
}

fn oracle_sigma(a: &SecretMatrix<f32>) -> Vec<f64> {
    let m = DMatrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) as f64);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| x.total_cmp(y));
    s
}

fn sigma_matches(diag: &[f64], oracle: &[f64]) -> bool {
    let mut s: Vec<f64> = diag.iter().map(|d| d.abs()).collect();
    s.sort_by(|x, y| x.total_cmp(y));
    let top = oracle.last().copied().unwrap_or(0.0);
    s.iter().zip(oracle).all(|(x, o)| {
        let scale = if *o > 0.0 { *o } else { top };
        (x - o).abs() <= SIGMA_REL * scale
    })
}

/// Convergence rates for every sweep count in `[MIN_SWEEPS, MAX_SWEEPS]`.
pub fn sweep_study(samples: usize, seed: u64) -> Result<SweepStudy, HarnessError> {
    if samples < MIN_SAMPLES {
        return Err(HarnessError::Config(format!("sweep study needs at least {MIN_SAMPLES} samples")));
    }
    let (matrices, scenes) = lm_system_matrices(samples, seed)?;
    let span = MAX_SWEEPS - MIN_SWEEPS + 1;
    let mut shifted = vec![0usize; span];
    let mut zero = vec![0usize; span];
    let mut matched = vec![0usize; span];
    let mut degenerate = 0;
    let mut ctx = PlainF32;
    for a in &matrices {
        let oracle = oracle_sigma(a);
        let b = householder_bidiagonalize(&mut ctx, a)?;
        let (d, e) = widen(&b);
        if has_degenerate_pair(&d, &e, DEGENERATE_TOL) {
            degenerate += 1;
        }
        let mut bs = b.clone();
        let mut bz = b;
        for s in 1..=MAX_SWEEPS {
            dk_shifted_sweep(&mut ctx, &mut bs);
            dk_qr_sweep(&mut ctx, &mut bz);
            if s < MIN_SWEEPS {
                continue;
            }
            let i = s - MIN_SWEEPS;
            let (d, e) = widen(&bs);
            shifted[i] += band_converged(&d, &e, BAND_REL) as usize;
            matched[i] += sigma_matches(&d, &oracle) as usize;
            let (d, e) = widen(&bz);
            zero[i] += band_converged(&d, &e, BAND_REL) as usize;
        }
    }
    let total = matrices.len() as f64;
    let rows = (0..span)
        .map(|i| SweepRow {
            sweeps: MIN_SWEEPS + i,
            shifted_rate: shifted[i] as f64 / total,
            zero_shift_rate: zero[i] as f64 / total,
            sigma_match_rate: matched[i] as f64 / total,
        })
        .collect();
    Ok(SweepStudy {
        samples: matrices.len(),
        scenes,
        degenerate,
        rows,
    })
}
