//! Experiments around the localization stack: synthetic scenes, gate and
//! byte benchmarks, the SVD sweep and number-format studies, and a
//! visual-servoing simulator that drives streamed single-iteration
//! localization.

pub mod bench;
pub mod formats;
pub mod scene;
pub mod sim;
pub mod sweeps;

use thiserror::Error;

pub use bench::{bench, BenchConfig, BenchOutcome, BenchRow, Method, Setting};
pub use formats::{fixed_vs_float, FormatStudy};
pub use scene::{gen_scene, standard_intrinsics, SyntheticScene};
pub use sim::{snail_sim, SimConfig, TrajectoryRun};
pub use sweeps::{sweep_study, SweepStudy};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] snail_core::geometry::GeometryError),
    #[error(transparent)]
    Solver(#[from] snail_core::solver::SolverError),
    #[error(transparent)]
    Linalg(#[from] snail_core::linalg::LinalgError),
    #[error(transparent)]
    Compile(#[from] snail_gc::CompileError),
    #[error(transparent)]
    Protocol(#[from] snail_protocol::ProtocolError),
    #[error("localization diverged at frame {frame}: {reason}")]
    Diverged { frame: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Median of a non-empty slice; the lower middle element for even lengths
/// so that results stay integral.
pub fn median(values: &[usize]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}
