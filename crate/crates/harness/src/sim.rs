//! Position-based visual servoing toward a target pose, localizing every
//! frame through streamed single-iteration steps (or the bounded
//! data-oblivious loop, for comparison).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use snail_core::geometry::{project, CorrespondenceSet, Pose};
use snail_core::obliv::CostReport;
use snail_core::solver::{
    build_iteration_tape, client_converged, tape_input_count, ObliviousSolver, SilStepper, SolverConfig,
    DO_MAX_OUTER, DO_SVD_SWEEPS,
};
use snail_protocol::accounting::{privacy_bound, seeded_report, CommReport, PrivacyBound};

use crate::bench::CLIENT_ROUNDS_PER_INVOCATION;
use crate::scene::{camera_to_world, standard_intrinsics, SyntheticScene, IMAGE_SIZE};
use crate::{median, HarnessError};

/// Public bound on iterations per image used for the privacy bound.
pub const STREAM_BOUND_C: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Sil,
    Do,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub start: Pose,
    pub target: Pose,
    /// Frame cap.
    pub frames: usize,
    /// Markers observed per frame.
    pub n: usize,
    pub pixel_noise_sigma: f64,
    /// Proportional gain on the estimated pose error.
    pub gain: f64,
    /// Largest translation (and rotation, in radians) per movement step.
    pub max_step: f64,
    /// Stop once the estimate is within this of the target (translation
    /// plus rotation error).
    pub stop_threshold: f64,
    /// Offset of the first frame's starting guess from the true start.
    pub initial_offset: f64,
    pub mode: SimMode,
    pub solver: SolverConfig,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(start: Pose, target: Pose) -> Self {
        SimConfig {
            start,
            target,
            frames: 50,
            n: 8,
            pixel_noise_sigma: 0.0,
            gain: 1.0,
            max_step: 0.1,
            stop_threshold: 0.02,
            initial_offset: 0.05,
            mode: SimMode::Sil,
            solver: SolverConfig::default(),
            rng_seed: 0,
        }
    }

    /// Convergence threshold for noisy frames: the expected squared error
    /// at the true pose is `2n·σ²`, so stopping at `1e-4` would never
    /// trigger; allow three times that on top of the noise-free threshold.
    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.pixel_noise_sigma = sigma;
        self.solver.convergence_c = SolverConfig::default().convergence_c + 3.0 * 2.0 * self.n as f64 * sigma * sigma;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scene: SyntheticScene,
    /// Starting guess handed to the first invocation of this frame.
    pub prior: Pose,
    pub estimate: Pose,
    pub invocations: usize,
    pub converged: bool,
    pub cost: CostReport,
    pub comm: CommReport,
    /// True pose against the target, translation plus rotation error.
    pub error_to_target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRun {
    pub frames: Vec<FrameRecord>,
    pub movements: usize,
    pub reached: bool,
    pub total_invocations: u64,
    pub privacy: Option<PrivacyBound>,
    /// Gates of one SIL invocation (12 sweeps by default).
    pub sil_invocation_gates: u64,
    /// Gates of one iteration with the baseline's 30 sweeps.
    pub baseline_iteration_gates: u64,
    /// Gates of one full data-oblivious localization.
    pub do_frame_gates: u64,
}

impl TrajectoryRun {
    /// Median invocations over frames after the first.
    pub fn median_invocations_after_first(&self) -> Option<usize> {
        let v: Vec<usize> = self.frames.iter().skip(1).map(|f| f.invocations).collect();
        median(&v)
    }

    /// DO gates per frame over SIL gates per frame at the median
    /// invocation count.
    pub fn gate_ratio(&self) -> Option<f64> {
        let k = self.median_invocations_after_first()?;
        Some(self.do_frame_gates as f64 / (k as f64 * self.sil_invocation_gates as f64))
    }

    /// `(20·S30) / (k·S12)`.
    pub fn gate_ratio_bound(&self) -> Option<f64> {
        let k = self.median_invocations_after_first()?;
        Some(
            (DO_MAX_OUTER as f64 * self.baseline_iteration_gates as f64)
                / (k as f64 * self.sil_invocation_gates as f64),
        )
    }

    /// Whether the true error never grows across any `window` consecutive
    /// frames (end of window against its start).
    pub fn progress_monotone(&self, window: usize) -> bool {
        let e: Vec<f64> = self.frames.iter().map(|f| f.error_to_target).collect();
        e.windows(window.max(2)).all(|w| w[w.len() - 1] <= w[0] + 1e-9)
    }
}

fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    a.translation_error(b) + a.rotation_error(b)
}

/// Markers spread over the frusta of poses interpolated between start and
/// target, so some are in view along the whole straight path.
fn marker_field(cfg: &SimConfig, rng: &mut ChaCha20Rng) -> Vec<[f64; 3]> {
    let k = standard_intrinsics();
    let (s, t) = (cfg.start.to_array(), cfg.target.to_array());
    let stations = 16;
    let mut out = Vec::new();
    for i in 0..=stations {
        let f = i as f64 / stations as f64;
        let mut a = [0.0; 6];
        for j in 0..6 {
            a[j] = s[j] + f * (t[j] - s[j]);
        }
        let pose = Pose::from_array(a);
        for _ in 0..(4 * cfg.n) {
            let z = rng.gen_range(3.0..12.0);
            let u = rng.gen_range(0.0..IMAGE_SIZE.0);
            let v = rng.gen_range(0.0..IMAGE_SIZE.1);
            out.push(camera_to_world(&pose, [(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z]));
        }
    }
    out
}

fn render(
    truth: &Pose,
    markers: &[[f64; 3]],
    cfg: &SimConfig,
    frame: usize,
    rng: &mut ChaCha20Rng,
) -> Result<SyntheticScene, HarnessError> {
    let k = standard_intrinsics();
    let mut visible: Vec<([f64; 2], [f64; 3])> = markers
        .iter()
        .filter_map(|m| {
            let q = project(truth, &k, m).ok()?;
            let inside = (0.0..IMAGE_SIZE.0).contains(&q[0]) && (0.0..IMAGE_SIZE.1).contains(&q[1]);
            inside.then_some((q, *m))
        })
        .collect();
    if visible.len() < cfg.n {
        return Err(HarnessError::Diverged {
            frame,
            reason: format!("{} markers in view, {} needed", visible.len(), cfg.n),
        });
    }
    visible.shuffle(rng);
    visible.truncate(cfg.n);
    let noise = Normal::new(0.0, cfg.pixel_noise_sigma).map_err(|e| HarnessError::Config(e.to_string()))?;
    let (image, map) = visible
        .into_iter()
        .map(|(q, m)| ([q[0] + noise.sample(rng), q[1] + noise.sample(rng)], m))
        .unzip();
    Ok(SyntheticScene {
        ground_truth: *truth,
        intrinsics: k,
        correspondences: CorrespondenceSet::new(image, map)?,
        pixel_noise_sigma: cfg.pixel_noise_sigma,
        rng_seed: cfg.rng_seed.wrapping_add(frame as u64),
    })
}

/// Proportional step toward the target, translation and rotation parts
/// each clamped to `max_step` in Euclidean norm.
fn servo_step(estimate: &Pose, cfg: &SimConfig) -> [f64; 6] {
    let (e, t) = (estimate.to_array(), cfg.target.to_array());
    let mut d = [0.0; 6];
    for j in 0..6 {
        d[j] = cfg.gain * (t[j] - e[j]);
    }
    for part in [0..3, 3..6] {
        let norm = d[part.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > cfg.max_step {
            for v in &mut d[part] {
                *v *= cfg.max_step / norm;
            }
        }
    }
    d
}

fn add(p: &Pose, d: &[f64; 6]) -> Pose {
    let mut a = p.to_array();
    for (x, y) in a.iter_mut().zip(d) {
        *x += y;
    }
    Pose::from_array(a)
}

/// Runs the servo loop. Each frame localizes from the previous estimate
/// moved by the commanded step (the client knows its own command), then
/// moves the true pose by that step.
pub fn snail_sim(cfg: &SimConfig) -> Result<TrajectoryRun, HarnessError> {
    if cfg.frames == 0 || cfg.n < snail_core::solver::MIN_POINTS {
        return Err(HarnessError::Config("need at least one frame and six markers".into()));
    }
    if !(cfg.max_step > 0.0 && cfg.max_step <= 0.1) {
        return Err(HarnessError::Config("max_step must be in (0, 0.1]".into()));
    }
    let k = standard_intrinsics();
    let solver = cfg.solver;
    let table = snail_gc::compile::cost_table(solver.format)?;
    let stepper = SilStepper::new(cfg.n, &k, &solver)?;
    let baseline = solver.oblivious_baseline();
    let oblivious = ObliviousSolver::new(cfg.n, &k, &baseline)?;
    let s30 = build_iteration_tape(
        cfg.n,
        &k,
        &SolverConfig {
            svd_sweeps: DO_SVD_SWEEPS,
            ..solver
        },
    )?;
    let sil_gates = table.tape_cost(stepper.tape()).gates();
    let s30_gates = table.tape_cost(&s30).gates();
    let do_gates = table.tape_cost(oblivious.tape()).gates();
    let input_bits = (tape_input_count(cfg.n) * solver.format.width()) as u64;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
    let markers = marker_field(cfg, &mut rng);
    let mut truth = cfg.start;
    let mut prior = {
        let mut a = truth.to_array();
        for v in a.iter_mut() {
            *v += rng.gen_range(-cfg.initial_offset..=cfg.initial_offset);
        }
        Pose::from_array(a)
    };
    let mut frames = Vec::new();
    let mut movements = 0;
    let mut reached = false;
    let mut total = 0u64;
    for frame in 0..cfg.frames {
        let scene = render(&truth, &markers, cfg, frame, &mut rng)?;
        let (estimate, invocations, converged, cost) = match cfg.mode {
            SimMode::Sil => {
                let (steps, cost) = stepper.chain(&scene.correspondences, &prior, &table)?;
                let last = *steps.last().expect("max_outer >= 1");
                (last.pose, steps.len(), client_converged(&last, &solver), cost)
            }
            SimMode::Do => {
                let (step, cost) = oblivious.run(&scene.correspondences, &prior, &table)?;
                (step.pose, 1, client_converged(&step, &baseline), cost)
            }
        };
        if !estimate.is_finite() {
            return Err(HarnessError::Diverged {
                frame,
                reason: "non-finite pose estimate".into(),
            });
        }
        let per = CommReport {
            rounds: CLIENT_ROUNDS_PER_INVOCATION,
            ..seeded_report(input_bits)
        };
        let comm = (0..invocations).map(|_| per).sum();
        total += invocations as u64;
        let error_to_target = pose_distance(&truth, &cfg.target);
        frames.push(FrameRecord {
            scene,
            prior,
            estimate,
            invocations,
            converged,
            cost,
            comm,
            error_to_target,
        });
        if pose_distance(&estimate, &cfg.target) < cfg.stop_threshold {
            reached = true;
            break;
        }
        if frame + 1 == cfg.frames {
            break;
        }
        let d = servo_step(&estimate, cfg);
        truth = add(&truth, &d);
        prior = add(&estimate, &d);
        movements += 1;
    }
    Ok(TrajectoryRun {
        frames,
        movements,
        reached,
        total_invocations: total,
        privacy: privacy_bound(total, STREAM_BOUND_C).ok(),
        sil_invocation_gates: sil_gates,
        baseline_iteration_gates: s30_gates,
        do_frame_gates: do_gates,
    })
}
