//! Pose refinement by Gauss–Newton or Levenberg–Marquardt, in three
//! execution modes sharing one iteration body:
//!
//! * plaintext: a data-dependent loop on host arithmetic, the reference;
//! * data-oblivious: a fixed number of iterations on one tape, with later
//!   updates frozen by select once the error threshold is met;
//! * single step: one iteration per tape, the caller decides when to stop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    numeric_jacobian_in, squared_error_in, CorrespondenceSet, GeometryError, Intrinsics, Pose,
    DEFAULT_EPSILON,
};
use crate::linalg::{
    matmul, matvec_transposed, svd_apply_pinv, svd_fixed, LinalgError, SecretMatrix,
    DEFAULT_PINV_TAU,
};
use crate::obliv::{
    run_cleartext, Arith, CostReport, CostTable, ExecError, FormatError, NumericFormat, Plain,
    PlainF32, PlainF64, PlainWord, Tape, TapeBuilder, Word,
};

/// Outer iteration bound of the data-oblivious baseline.
pub const DO_MAX_OUTER: usize = 20;
/// SVD sweeps of the data-oblivious baseline.
pub const DO_SVD_SWEEPS: usize = 30;
/// SVD sweeps of a single-iteration step.
pub const SIL_SVD_SWEEPS: usize = 12;
/// The plaintext reference gives up once the error exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
pub const MIN_POINTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    GN,
    LM,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("diverged")]
    Diverged { iteration: usize },
    #[error("rank deficient")]
    RankDeficient { iteration: usize },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("solver needs at least {MIN_POINTS} correspondences, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("tape was built for {expected} correspondences, got {got}")]
    TapeSize { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Fletcher damping, LM only.
    pub lambda: f64,
    /// Converged once the squared reprojection error is at most this.
    pub convergence_c: f64,
    pub epsilon: f64,
    pub max_outer: usize,
    pub svd_sweeps: usize,
    pub format: NumericFormat,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::LM,
            lambda: 1e-3,
            convergence_c: 1e-4,
            epsilon: DEFAULT_EPSILON,
            max_outer: DO_MAX_OUTER,
            svd_sweeps: SIL_SVD_SWEEPS,
            format: NumericFormat::Float32,
        }
    }
}

impl SolverConfig {
    /// The data-oblivious baseline bounds: 20 iterations of 30 sweeps.
    pub fn oblivious_baseline(self) -> Self {
        SolverConfig {
            max_outer: DO_MAX_OUTER,
            svd_sweeps: DO_SVD_SWEEPS,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if self.algorithm == Algorithm::LM && !(self.lambda > 0.0) {
            return bad("lambda must be positive for LM");
        }
        if !(self.convergence_c > 0.0) {
            return bad("convergence_c must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        if self.svd_sweeps == 0 {
            return bad("svd_sweeps must be at least 1");
        }
        self.format
            .validate()
            .map_err(|e| SolverError::InvalidConfig(e.to_string()))
    }
}

/// Outcome of one iteration as seen by the client.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub pose: Pose,
    /// Squared reprojection error at the pose the step started from.
    pub squared_error: f64,
    pub overflow: bool,
}

/// Inclusive threshold test; an overflowed step never counts as converged.
pub fn client_converged(step: &StepResult, cfg: &SolverConfig) -> bool {
    !step.overflow && step.squared_error <= cfg.convergence_c
}

/// Values produced by one iteration body on any backend.
pub struct IterationValues<N> {
    pub pose: [N; 6],
    pub squared_error: N,
    pub sigma: Vec<N>,
}

/// The damped normal equations of one LM iteration:
/// A square system and its right-hand side.
pub type LinearSystem<N> = (SecretMatrix<N>, Vec<N>);

/// `(JᵀJ + λ·diag(JᵀJ))·dx = Jᵀr`, returned as the matrix and right-hand side.
pub fn lm_system_in<A: Arith>(
    ctx: &mut A,
    j: &SecretMatrix<A::Num>,
    res: &[A::Num],
    lambda: f64,
) -> Result<LinearSystem<A::Num>, SolverError> {
    let jt = j.transpose();
    let mut a = matmul(ctx, &jt, j)?;
    let b = matvec_transposed(ctx, j, res)?;
    let lambda = ctx.param(lambda);
    for i in 0..a.cols() {
        let d = a.get(i, i);
        let damp = ctx.mul(lambda, d);
        let v = ctx.add(d, damp);
        a.set(i, i, v);
    }
    Ok((a, b))
}

/// One GN or LM iteration: projection, Jacobian, residuals, normal equations
/// (LM) or pseudo-inverse (GN), and the pose update `x ← x − dx`.
pub fn iteration_in<A: Arith>(
    ctx: &mut A,
    k: &Intrinsics,
    image: &[[A::Num; 2]],
    map: &[[A::Num; 3]],
    pose: &[A::Num; 6],
    cfg: &SolverConfig,
) -> Result<IterationValues<A::Num>, SolverError> {
    let n = image.len();
    let (jac, res) = numeric_jacobian_in(ctx, k, pose, image, map, cfg.epsilon);
    let squared_error = squared_error_in(ctx, &res);
    let j = SecretMatrix::from_vec(2 * n, 6, jac)?;
    let (dx, sigma) = match cfg.algorithm {
        Algorithm::GN => {
            let svd = svd_fixed(ctx, &j, cfg.svd_sweeps)?;
            let dx = svd_apply_pinv(ctx, &svd, &res, DEFAULT_PINV_TAU)?;
            (dx, svd.sigma)
        }
        Algorithm::LM => {
            let (a, b) = lm_system_in(ctx, &j, &res, cfg.lambda)?;
            let svd = svd_fixed(ctx, &a, cfg.svd_sweeps)?;
            let dx = svd_apply_pinv(ctx, &svd, &b, DEFAULT_PINV_TAU)?;
            (dx, svd.sigma)
        }
    };
    let mut next = *pose;
    for (p, d) in next.iter_mut().zip(&dx) {
        *p = ctx.sub(*p, *d);
    }
    Ok(IterationValues {
        pose: next,
        squared_error,
        sigma,
    })
}

fn check_points(corr: &CorrespondenceSet) -> Result<(), SolverError> {
    if corr.len() < MIN_POINTS {
        return Err(SolverError::TooFewPoints(corr.len()));
    }
    Ok(())
}

struct Lifted<N> {
    image: Vec<[N; 2]>,
    map: Vec<[N; 3]>,
}

fn lift_points<P: Plain>(ctx: &mut P, corr: &CorrespondenceSet) -> Result<Lifted<P::Num>, SolverError> {
    let mut image = Vec::with_capacity(corr.len());
    for p in corr.image_points() {
        image.push([ctx.lift(p[0])?, ctx.lift(p[1])?]);
    }
    let mut map = Vec::with_capacity(corr.len());
    for p in corr.map_points() {
        map.push([ctx.lift(p[0])?, ctx.lift(p[1])?, ctx.lift(p[2])?]);
    }
    Ok(Lifted { image, map })
}

fn lift_pose<P: Plain>(ctx: &mut P, pose: &Pose) -> Result<[P::Num; 6], SolverError> {
    let a = pose.to_array();
    let mut out = [ctx.num(0.0); 6];
    for (o, v) in out.iter_mut().zip(a) {
        *o = ctx.lift(v)?;
    }
    Ok(out)
}

fn lower_pose<P: Plain>(ctx: &P, pose: &[P::Num; 6]) -> Pose {
    let mut a = [0.0; 6];
    for (o, v) in a.iter_mut().zip(pose) {
        *o = ctx.lower(*v);
    }
    Pose::from_array(a)
}

/// Result of the plaintext reference loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    pub pose: Pose,
    pub iterations: usize,
    pub converged: bool,
    /// Every step in order; `steps.last()` holds the returned pose.
    pub steps: Vec<StepResult>,
}

/// Iterates until the squared error at the current pose is at most
/// `convergence_c` (that iteration's update is still applied, then the loop
/// stops) or `max_outer` iterations have run.
pub fn plaintext_localize(
    corr: &CorrespondenceSet,
    k: &Intrinsics,
    x0: &Pose,
    cfg: &SolverConfig,
) -> Result<Localization, SolverError> {
    match cfg.format {
        NumericFormat::Float32 => localize_with(&mut PlainF32, corr, k, x0, cfg),
        NumericFormat::Fixed64 { .. } => {
            localize_with(&mut PlainWord::new(cfg.format), corr, k, x0, cfg)
        }
    }
}

/// The reference loop in host double precision, whatever `cfg.format` says.
pub fn plaintext_localize_f64(
    corr: &CorrespondenceSet,
    k: &Intrinsics,
    x0: &Pose,
    cfg: &SolverConfig,
) -> Result<Localization, SolverError> {
    localize_with(&mut PlainF64, corr, k, x0, cfg)
}

/// The reference loop on an arbitrary host backend.
pub fn localize_with<P: Plain>(
    ctx: &mut P,
    corr: &CorrespondenceSet,
    k: &Intrinsics,
    x0: &Pose,
    cfg: &SolverConfig,
) -> Result<Localization, SolverError> {
    cfg.validate()?;
    check_points(corr)?;
    let pts = lift_points(ctx, corr)?;
    let mut pose = lift_pose(ctx, x0)?;
    let mut steps = Vec::new();
    for iteration in 1..=cfg.max_outer {
        let out = iteration_in(ctx, k, &pts.image, &pts.map, &pose, cfg)?;
        let err = ctx.lower(out.squared_error);
        if !(err <= DIVERGENCE_THRESHOLD) && !ctx.overflowed() {
            return Err(SolverError::Diverged { iteration });
        }
        if cfg.algorithm == Algorithm::GN {
            let sig: Vec<f64> = out.sigma.iter().map(|s| ctx.lower(*s)).collect();
            let max = sig.iter().cloned().fold(0.0, f64::max);
            if sig.iter().any(|s| !(*s >= DEFAULT_PINV_TAU * max)) {
                return Err(SolverError::RankDeficient { iteration });
            }
        }
        pose = out.pose;
        let step = StepResult {
            pose: lower_pose(ctx, &pose),
            squared_error: err,
            overflow: ctx.overflowed(),
        };
        steps.push(step);
        if client_converged(&step, cfg) {
            return Ok(Localization {
                pose: step.pose,
                iterations: iteration,
                converged: true,
                steps,
            });
        }
    }
    let last = *steps.last().expect("max_outer >= 1");
    Ok(Localization {
        pose: last.pose,
        iterations: cfg.max_outer,
        converged: false,
        steps,
    })
}

/// Tape input layout: image points (2n), map points (3n), pose (6).
pub fn tape_inputs(corr: &CorrespondenceSet, pose: &Pose, format: NumericFormat) -> Result<Vec<Word>, SolverError> {
    let mut values = corr.flatten();
    values.extend(pose.to_array());
    values
        .into_iter()
        .map(|v| format.encode(v).map_err(SolverError::from))
        .collect()
}

/// Number of tape inputs for `n` correspondences.
pub fn tape_input_count(n: usize) -> usize {
    5 * n + 6
}

fn tape_prologue(
    b: &mut TapeBuilder,
    n: usize,
) -> (
    Vec<[crate::obliv::SecretRef; 2]>,
    Vec<[crate::obliv::SecretRef; 3]>,
    [crate::obliv::SecretRef; 6],
) {
    let flat = b.inputs(tape_input_count(n));
    let image = (0..n).map(|i| [flat[2 * i], flat[2 * i + 1]]).collect();
    let map = (0..n)
        .map(|i| {
            let o = 2 * n + 3 * i;
            [flat[o], flat[o + 1], flat[o + 2]]
        })
        .collect();
    let mut pose = [flat[0]; 6];
    pose.copy_from_slice(&flat[5 * n..5 * n + 6]);
    (image, map, pose)
}

/// One iteration as a tape. Outputs: updated pose (6) then the squared error
/// at the input pose. The op sequence depends only on `n`, the algorithm,
/// the format and the sweep count; intrinsics, λ, ε enter as public
/// constants.
pub fn build_iteration_tape(
    n: usize,
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> Result<Tape, SolverError> {
    cfg.validate()?;
    if n < MIN_POINTS {
        return Err(SolverError::TooFewPoints(n));
    }
    let mut b = TapeBuilder::new(cfg.format);
    let (image, map, pose) = tape_prologue(&mut b, n);
    let out = iteration_in(&mut b, k, &image, &map, &pose, cfg)?;
    for p in out.pose {
        b.output(p);
    }
    b.output(out.squared_error);
    Ok(b.finish())
}

/// `cfg.max_outer` chained iterations on one tape. After the first iteration
/// whose starting error is within the threshold, the pose is frozen by
/// select. Outputs: pose (6) then the error of the last applied iteration.
pub fn build_oblivious_tape(
    n: usize,
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> Result<Tape, SolverError> {
    cfg.validate()?;
    if n < MIN_POINTS {
        return Err(SolverError::TooFewPoints(n));
    }
    let mut b = TapeBuilder::new(cfg.format);
    let (image, map, mut pose) = tape_prologue(&mut b, n);
    let c = b.param(cfg.convergence_c);
    let mut done = b.bit(false);
    let mut err = b.num(0.0);
    for _ in 0..cfg.max_outer {
        let out = iteration_in(&mut b, k, &image, &map, &pose, cfg)?;
        for (p, q) in pose.iter_mut().zip(out.pose) {
            *p = b.select(done, *p, q);
        }
        err = b.select(done, err, out.squared_error);
        let now = b.le(out.squared_error, c);
        done = b.or(done, now);
    }
    for p in pose {
        b.output(p);
    }
    b.output(err);
    Ok(b.finish())
}

fn decode_step(
    tape: &Tape,
    inputs: &[Word],
    table: &CostTable,
) -> Result<(StepResult, CostReport), SolverError> {
    let run = run_cleartext(tape, inputs, table)?;
    let v = run.decoded(tape.format());
    let step = StepResult {
        pose: Pose::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]),
        squared_error: v[6],
        overflow: run.overflow,
    };
    Ok((step, run.cost))
}

/// Compiled single-iteration tape for a fixed point count.
#[derive(Clone, Debug)]
pub struct SilStepper {
    n: usize,
    cfg: SolverConfig,
    tape: Tape,
}

impl SilStepper {
    pub fn new(n: usize, k: &Intrinsics, cfg: &SolverConfig) -> Result<Self, SolverError> {
        Ok(SilStepper {
            n,
            cfg: *cfg,
            tape: build_iteration_tape(n, k, cfg)?,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// One iteration from `x` on the cleartext backend.
    pub fn step(
        &self,
        corr: &CorrespondenceSet,
        x: &Pose,
        table: &CostTable,
    ) -> Result<(StepResult, CostReport), SolverError> {
        if corr.len() != self.n {
            return Err(SolverError::TapeSize {
                expected: self.n,
                got: corr.len(),
            });
        }
        let inputs = tape_inputs(corr, x, self.cfg.format)?;
        decode_step(&self.tape, &inputs, table)
    }

    /// Steps until the client-side test passes or `max_outer` steps ran.
    pub fn chain(
        &self,
        corr: &CorrespondenceSet,
        x0: &Pose,
        table: &CostTable,
    ) -> Result<(Vec<StepResult>, CostReport), SolverError> {
        let mut x = *x0;
        let mut steps = Vec::new();
        let mut cost = CostReport::default();
        for _ in 0..self.cfg.max_outer {
            let (step, c) = self.step(corr, &x, table)?;
            cost = cost + c;
            steps.push(step);
            x = step.pose;
            if client_converged(&step, &self.cfg) {
                break;
            }
        }
        Ok((steps, cost))
    }
}

/// Convenience wrapper: build the single-iteration tape and run it once.
pub fn sil_step(
    corr: &CorrespondenceSet,
    k: &Intrinsics,
    x: &Pose,
    cfg: &SolverConfig,
    table: &CostTable,
) -> Result<(StepResult, CostReport), SolverError> {
    SilStepper::new(corr.len(), k, cfg)?.step(corr, x, table)
}

/// Compiled data-oblivious tape for a fixed point count.
#[derive(Clone, Debug)]
pub struct ObliviousSolver {
    n: usize,
    cfg: SolverConfig,
    tape: Tape,
}

impl ObliviousSolver {
    pub fn new(n: usize, k: &Intrinsics, cfg: &SolverConfig) -> Result<Self, SolverError> {
        Ok(ObliviousSolver {
            n,
            cfg: *cfg,
            tape: build_oblivious_tape(n, k, cfg)?,
        })
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn run(
        &self,
        corr: &CorrespondenceSet,
        x0: &Pose,
        table: &CostTable,
    ) -> Result<(StepResult, CostReport), SolverError> {
        if corr.len() != self.n {
            return Err(SolverError::TapeSize {
                expected: self.n,
                got: corr.len(),
            });
        }
        let inputs = tape_inputs(corr, x0, self.cfg.format)?;
        decode_step(&self.tape, &inputs, table)
    }
}

/// Data-oblivious localization with the configured bounds (use
/// [`SolverConfig::oblivious_baseline`] for the 20×30 baseline).
pub fn do_localize(
    corr: &CorrespondenceSet,
    k: &Intrinsics,
    x0: &Pose,
    cfg: &SolverConfig,
    table: &CostTable,
) -> Result<(StepResult, CostReport), SolverError> {
    ObliviousSolver::new(corr.len(), k, cfg)?.run(corr, x0, table)
}
