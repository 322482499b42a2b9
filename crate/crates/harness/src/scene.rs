//! Deterministic synthetic scenes and the CSV reader for external 2D-3D
//! matches.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use snail_core::geometry::{project, rotation_matrix, CorrespondenceSet, Intrinsics, Pose};

use crate::HarnessError;

/// Depth range of generated map points, in scene units.
pub const DEPTH_RANGE: (f64, f64) = (2.0, 10.0);
/// Image size matching [`standard_intrinsics`].
pub const IMAGE_SIZE: (f64, f64) = (640.0, 480.0);
/// Mixed into the scene seed for the starting-guess stream.
const GUESS_STREAM: u64 = 0x6775_6573_7300_0001;
/// Per-component offset of the starting guess from the ground truth.
pub const START_OFFSET: f64 = 0.1;

/// 640×480 pinhole camera with a 500 px focal length.
pub fn standard_intrinsics() -> Intrinsics {
    Intrinsics::new(500.0, 500.0, 320.0, 240.0).expect("positive focal length")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub ground_truth: Pose,
    pub intrinsics: Intrinsics,
    pub correspondences: CorrespondenceSet,
    pub pixel_noise_sigma: f64,
    pub rng_seed: u64,
}

impl SyntheticScene {
    /// Starting guess: every pose component offset by a seeded uniform draw
    /// in `±START_OFFSET`. Drawn from its own stream so it does not depend
    /// on how many points the scene has.
    pub fn initial_guess(&self) -> Pose {
        let mut rng = ChaCha20Rng::seed_from_u64(self.rng_seed ^ GUESS_STREAM);
        let mut a = self.ground_truth.to_array();
        for v in a.iter_mut() {
            *v += rng.gen_range(-START_OFFSET..START_OFFSET);
        }
        Pose::from_array(a)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Random ground truth (angles within ±0.3 rad, translation within ±0.5)
/// and `n` map points drawn uniformly over the image and the depth range,
/// then back-projected. Image points are the exact projections plus
/// Gaussian pixel noise.
pub fn gen_scene(n: usize, noise_sigma: f64, rng_seed: u64) -> Result<SyntheticScene, HarnessError> {
    if n < snail_core::solver::MIN_POINTS {
        return Err(HarnessError::Config(format!("a scene needs at least 6 points, got {n}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(HarnessError::Config("noise sigma must be non-negative".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut a = [0.0; 6];
    for (i, v) in a.iter_mut().enumerate() {
        let r = if i < 3 { 0.3 } else { 0.5 };
        *v = rng.gen_range(-r..r);
    }
    let truth = Pose::from_array(a);
    let k = standard_intrinsics();
    let noise = Normal::new(0.0, noise_sigma).expect("finite sigma");
    let mut image = Vec::with_capacity(n);
    let mut map = Vec::with_capacity(n);
    while map.len() < n {
        let z = rng.gen_range(DEPTH_RANGE.0..DEPTH_RANGE.1);
        let u = rng.gen_range(0.0..IMAGE_SIZE.0);
        let v = rng.gen_range(0.0..IMAGE_SIZE.1);
        let cam = [(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z];
        let m = camera_to_world(&truth, cam);
        let q = project(&truth, &k, &m)?;
        image.push([q[0] + noise.sample(&mut rng), q[1] + noise.sample(&mut rng)]);
        map.push(m);
    }
    Ok(SyntheticScene {
        ground_truth: truth,
        intrinsics: k,
        correspondences: CorrespondenceSet::new(image, map)?,
        pixel_noise_sigma: noise_sigma,
        rng_seed,
    })
}

/// `Rᵀ·(cam − t)`: inverse of the pose's world-to-camera map.
pub fn camera_to_world(pose: &Pose, cam: [f64; 3]) -> [f64; 3] {
    let r = rotation_matrix(pose);
    let d = [cam[0] - pose.tx, cam[1] - pose.ty, cam[2] - pose.tz];
    let mut m = [0.0; 3];
    for (i, out) in m.iter_mut().enumerate() {
        *out = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
    }
    m
}

/// One row of a matches file: pixel `(u, v)` and map point `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Reads a headed CSV with columns `u,v,x,y,z`.
pub fn read_matches<R: Read>(reader: R) -> Result<CorrespondenceSet, HarnessError> {
    let mut image = Vec::new();
    let mut map = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: MatchRow = row?;
        image.push([r.u, r.v]);
        map.push([r.x, r.y, r.z]);
    }
    Ok(CorrespondenceSet::new(image, map)?)
}

pub fn read_matches_file(path: &Path) -> Result<CorrespondenceSet, HarnessError> {
    read_matches(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        assert_eq!(gen_scene(8, 0.5, 7).unwrap(), gen_scene(8, 0.5, 7).unwrap());
        assert_ne!(gen_scene(8, 0.5, 7).unwrap(), gen_scene(8, 0.5, 8).unwrap());
    }

    #[test]
    fn points_in_front_and_in_frame() {
        for seed in 0..50 {
            let s = gen_scene(12, 0.0, seed).unwrap();
            let r = rotation_matrix(&s.ground_truth);
            let t = s.ground_truth.to_array();
            for (m, q) in s.correspondences.map_points().iter().zip(s.correspondences.image_points()) {
                let z: f64 = (0..3).map(|j| r[2][j] * m[j]).sum::<f64>() + t[5];
                assert!(z > DEPTH_RANGE.0 - 1e-9 && z < DEPTH_RANGE.1 + 1e-9);
                assert!(q[0] >= -1e-6 && q[0] <= IMAGE_SIZE.0 + 1e-6);
                assert!(q[1] >= -1e-6 && q[1] <= IMAGE_SIZE.1 + 1e-6);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = gen_scene(6, 0.25, 3).unwrap();
        assert_eq!(SyntheticScene::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn matches_csv() {
        let data = "u,v,x,y,z\n1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n";
        let c = read_matches(data.as_bytes()).unwrap();
        assert_eq!(c.image_points()[1], [6.0, 7.0]);
        assert_eq!(c.map_points()[2], [13.0, 14.0, 15.0]);
        assert!(read_matches("u,v,x\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(gen_scene(5, 0.0, 0).is_err());
    }
}
