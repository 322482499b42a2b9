//! Pinhole camera geometry: poses, projection, reprojection residuals and
//! forward-difference Jacobians.
//!
//! The `*_in` functions are generic over [`Arith`] and are what the solver
//! records onto tapes; the plain functions run them on host `f64` and add the
//! input checks that oblivious code cannot perform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obliv::{Arith, PlainF64};

/// Default forward-difference step for Jacobians.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point behind camera")]
    BehindCamera { index: usize },
    #[error("image and map point counts differ ({image} vs {map})")]
    LengthMismatch { image: usize, map: usize },
    #[error("at least {min} correspondences required, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("focal lengths must be positive")]
    BadIntrinsics,
    #[error("pose components must be finite")]
    NonFinitePose,
    #[error("jacobian step must be positive")]
    BadEpsilon,
}

/// Camera pose: Euler angles (radians) and translation. `R = Rz·Ry·Rx`; a map
/// point `M` lands at `R·M + t` in camera coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Pose {
    pub const DOF: usize = 6;

    pub fn new(rx: f64, ry: f64, rz: f64, tx: f64, ty: f64, tz: f64) -> Self {
        Pose {
            rx,
            ry,
            rz,
            tx,
            ty,
            tz,
        }
    }

    /// Components in the order (rx, ry, rz, tx, ty, tz).
    pub fn to_array(&self) -> [f64; 6] {
        [self.rx, self.ry, self.rz, self.tx, self.ty, self.tz]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Pose::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn perturbed(&self, dof: usize, step: f64) -> Pose {
        let mut a = self.to_array();
        a[dof] += step;
        Pose::from_array(a)
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        let d = [self.tx - other.tx, self.ty - other.ty, self.tz - other.tz];
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Angle of the relative rotation between two poses, in radians.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        let a = rotation_matrix(self);
        let b = rotation_matrix(other);
        let mut trace = 0.0;
        for i in 0..3 {
            for k in 0..3 {
                trace += a[k][i] * b[k][i];
            }
        }
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::BadIntrinsics);
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    image_points: Vec<[f64; 2]>,
    map_points: Vec<[f64; 3]>,
}

impl CorrespondenceSet {
    pub const MIN_POINTS: usize = 3;

    pub fn new(
        image_points: Vec<[f64; 2]>,
        map_points: Vec<[f64; 3]>,
    ) -> Result<Self, GeometryError> {
        if image_points.len() != map_points.len() {
            return Err(GeometryError::LengthMismatch {
                image: image_points.len(),
                map: map_points.len(),
            });
        }
        if image_points.len() < Self::MIN_POINTS {
            return Err(GeometryError::TooFewPoints {
                min: Self::MIN_POINTS,
                got: image_points.len(),
            });
        }
        Ok(CorrespondenceSet {
            image_points,
            map_points,
        })
    }

    pub fn len(&self) -> usize {
        self.image_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_points.is_empty()
    }

    pub fn image_points(&self) -> &[[f64; 2]] {
        &self.image_points
    }

    pub fn map_points(&self) -> &[[f64; 3]] {
        &self.map_points
    }

    /// Flattened secret inputs: image coordinates (2n) then map coordinates (3n).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 5);
        out.extend(self.image_points.iter().flatten());
        out.extend(self.map_points.iter().flatten());
        out
    }
}

/// Interleaved reprojection residuals `(dx_0, dy_0, dx_1, ...)`, projected
/// minus measured.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals(pub Vec<f64>);

impl Residuals {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `R = Rz(a[2])·Ry(a[1])·Rx(a[0])` from primitive operations.
pub fn rotation_matrix_in<A: Arith>(ctx: &mut A, angles: [A::Num; 3]) -> [[A::Num; 3]; 3] {
    let (sx, cx) = ctx.sin_cos(angles[0]);
    let (sy, cy) = ctx.sin_cos(angles[1]);
    let (sz, cz) = ctx.sin_cos(angles[2]);
    let sysx = ctx.mul(sy, sx);
    let sycx = ctx.mul(sy, cx);

    let r00 = ctx.mul(cz, cy);
    let a = ctx.mul(cz, sysx);
    let b = ctx.mul(sz, cx);
    let r01 = ctx.sub(a, b);
    let a = ctx.mul(cz, sycx);
    let b = ctx.mul(sz, sx);
    let r02 = ctx.add(a, b);

    let r10 = ctx.mul(sz, cy);
    let a = ctx.mul(sz, sysx);
    let b = ctx.mul(cz, cx);
    let r11 = ctx.add(a, b);
    let a = ctx.mul(sz, sycx);
    let b = ctx.mul(cz, sx);
    let r12 = ctx.sub(a, b);

    let r20 = ctx.neg(sy);
    let r21 = ctx.mul(cy, sx);
    let r22 = ctx.mul(cy, cx);
    [[r00, r01, r02], [r10, r11, r12], [r20, r21, r22]]
}

/// Projects every map point under `pose`; returns `(u, v)` per point. No
/// depth check: callers guarantee positive depth.
pub fn project_all_in<A: Arith>(
    ctx: &mut A,
    k: &Intrinsics,
    pose: &[A::Num; 6],
    map: &[[A::Num; 3]],
) -> Vec<[A::Num; 2]> {
    let r = rotation_matrix_in(ctx, [pose[0], pose[1], pose[2]]);
    let fx = ctx.param(k.fx);
    let fy = ctx.param(k.fy);
    let cx = ctx.param(k.cx);
    let cy = ctx.param(k.cy);
    map.iter()
        .map(|m| {
            let mut cam = [m[0]; 3];
            for (row, out) in r.iter().zip(cam.iter_mut()) {
                let dot = ctx.dot(row, m);
                *out = dot;
            }
            for (i, out) in cam.iter_mut().enumerate() {
                *out = ctx.add(*out, pose[3 + i]);
            }
            let xn = ctx.div(cam[0], cam[2]);
            let yn = ctx.div(cam[1], cam[2]);
            let u = ctx.mul(fx, xn);
            let u = ctx.add(u, cx);
            let v = ctx.mul(fy, yn);
            let v = ctx.add(v, cy);
            [u, v]
        })
        .collect()
}

/// Interleaved `projected − measured` residuals.
pub fn residuals_in<A: Arith>(
    ctx: &mut A,
    k: &Intrinsics,
    pose: &[A::Num; 6],
    image: &[[A::Num; 2]],
    map: &[[A::Num; 3]],
) -> Vec<A::Num> {
    let q = project_all_in(ctx, k, pose, map);
    let mut out = Vec::with_capacity(2 * q.len());
    for (qi, ii) in q.iter().zip(image) {
        out.push(ctx.sub(qi[0], ii[0]));
        out.push(ctx.sub(qi[1], ii[1]));
    }
    out
}

pub fn squared_error_in<A: Arith>(ctx: &mut A, res: &[A::Num]) -> A::Num {
    ctx.dot(res, res)
}

/// Forward-difference Jacobian, row-major `2n × 6`, plus the base residuals.
/// Every perturbed pose is projected in full.
pub fn numeric_jacobian_in<A: Arith>(
    ctx: &mut A,
    k: &Intrinsics,
    pose: &[A::Num; 6],
    image: &[[A::Num; 2]],
    map: &[[A::Num; 3]],
    epsilon: f64,
) -> (Vec<A::Num>, Vec<A::Num>) {
    let base = residuals_in(ctx, k, pose, image, map);
    let eps = ctx.param(epsilon);
    let rows = base.len();
    let mut jac = vec![base[0]; rows * 6];
    for d in 0..6 {
        let mut p = *pose;
        p[d] = ctx.add(p[d], eps);
        let r = residuals_in(ctx, k, &p, image, map);
        for i in 0..rows {
            let diff = ctx.sub(r[i], base[i]);
            jac[i * 6 + d] = ctx.div(diff, eps);
        }
    }
    (jac, base)
}

pub fn rotation_matrix(pose: &Pose) -> [[f64; 3]; 3] {
    rotation_matrix_in(&mut PlainF64, [pose.rx, pose.ry, pose.rz])
}

fn camera_point(pose: &Pose, m: &[f64; 3]) -> [f64; 3] {
    let r = rotation_matrix(pose);
    let t = [pose.tx, pose.ty, pose.tz];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = r[i][0] * m[0] + r[i][1] * m[1] + r[i][2] * m[2] + t[i];
    }
    out
}

pub fn project(pose: &Pose, k: &Intrinsics, map_point: &[f64; 3]) -> Result<[f64; 2], GeometryError> {
    if camera_point(pose, map_point)[2] <= 0.0 {
        return Err(GeometryError::BehindCamera { index: 0 });
    }
    let pose_arr = pose.to_array();
    Ok(project_all_in(&mut PlainF64, k, &pose_arr, std::slice::from_ref(map_point))[0])
}

fn check_depths(pose: &Pose, corr: &CorrespondenceSet) -> Result<(), GeometryError> {
    if !pose.is_finite() {
        return Err(GeometryError::NonFinitePose);
    }
    for (index, m) in corr.map_points().iter().enumerate() {
        if camera_point(pose, m)[2] <= 0.0 {
            return Err(GeometryError::BehindCamera { index });
        }
    }
    Ok(())
}

pub fn residuals(
    pose: &Pose,
    k: &Intrinsics,
    corr: &CorrespondenceSet,
) -> Result<Residuals, GeometryError> {
    check_depths(pose, corr)?;
    Ok(Residuals(residuals_in(
        &mut PlainF64,
        k,
        &pose.to_array(),
        corr.image_points(),
        corr.map_points(),
    )))
}

pub fn squared_error(res: &Residuals) -> f64 {
    squared_error_in(&mut PlainF64, &res.0)
}

/// Row-major `2n × 6` forward-difference Jacobian in pose order
/// (rx, ry, rz, tx, ty, tz).
pub fn numeric_jacobian(
    pose: &Pose,
    k: &Intrinsics,
    corr: &CorrespondenceSet,
    epsilon: f64,
) -> Result<Vec<f64>, GeometryError> {
    if !(epsilon > 0.0) {
        return Err(GeometryError::BadEpsilon);
    }
    check_depths(pose, corr)?;
    for d in 0..6 {
        check_depths(&pose.perturbed(d, epsilon), corr)?;
    }
    let (jac, _) = numeric_jacobian_in(
        &mut PlainF64,
        k,
        &pose.to_array(),
        corr.image_points(),
        corr.map_points(),
        epsilon,
    );
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Matrix4, Rotation3, Vector4};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn k_std() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    /// Independent rotation: nalgebra's Euler angles use the same
    /// roll/pitch/yaw composition `Rz·Ry·Rx`.
    fn oracle_rotation(p: &Pose) -> Matrix3<f64> {
        *Rotation3::from_euler_angles(p.rx, p.ry, p.rz).matrix()
    }

    fn oracle_project(p: &Pose, k: &Intrinsics, m: &[f64; 3]) -> [f64; 2] {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&oracle_rotation(p));
        h[(0, 3)] = p.tx;
        h[(1, 3)] = p.ty;
        h[(2, 3)] = p.tz;
        let c = h * Vector4::new(m[0], m[1], m[2], 1.0);
        [k.fx * c[0] / c[2] + k.cx, k.fy * c[1] / c[2] + k.cy]
    }

    #[test]
    fn identity_and_quarter_turn() {
        let r = rotation_matrix(&Pose::default());
        assert_eq!(r, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let r = rotation_matrix(&Pose::new(FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0));
        let v = [r[0][1], r[1][1], r[2][1]];
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let k1 = Intrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(project(&Pose::default(), &k1, &[0.0, 0.0, 1.0]).unwrap(), [0.0, 0.0]);
        let k = Intrinsics::new(100.0, 100.0, 320.0, 240.0).unwrap();
        assert_eq!(project(&Pose::default(), &k, &[1.0, 2.0, 2.0]).unwrap(), [370.0, 340.0]);
        assert_eq!(
            project(&Pose::default(), &k, &[0.0, 0.0, -1.0]),
            Err(GeometryError::BehindCamera { index: 0 })
        );
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn residual_sign_and_error() {
        let k = k_std();
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 5.0);
        let maps = vec![[0.1, 0.2, 0.0], [-0.3, 0.1, 1.0], [0.2, -0.4, 2.0]];
        let mut imgs: Vec<[f64; 2]> = maps.iter().map(|m| project(&pose, &k, m).unwrap()).collect();
        let corr = CorrespondenceSet::new(imgs.clone(), maps.clone()).unwrap();
        assert!(residuals(&pose, &k, &corr).unwrap().values().iter().all(|v| *v == 0.0));
        imgs[0][0] += 1.0;
        let corr = CorrespondenceSet::new(imgs, maps).unwrap();
        let r = residuals(&pose, &k, &corr).unwrap();
        assert_eq!(&r.values()[..2], &[-1.0, 0.0]);
        assert_eq!(squared_error(&Residuals(vec![3.0, 4.0])), 25.0);
        assert_eq!(squared_error(&Residuals(vec![])), 0.0);
    }

    #[test]
    fn correspondence_validation() {
        assert!(matches!(
            CorrespondenceSet::new(vec![[0.0; 2]; 3], vec![[0.0; 3]; 4]),
            Err(GeometryError::LengthMismatch { .. })
        ));
        assert!(matches!(
            CorrespondenceSet::new(vec![[0.0; 2]; 2], vec![[0.0; 3]; 2]),
            Err(GeometryError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn translation_columns_match_pinhole_derivative() {
        let k = k_std();
        let pose = Pose::default();
        let maps = vec![[0.0, 0.0, 4.0], [0.5, 0.0, 4.0], [0.0, 0.5, 4.0]];
        let imgs = maps.iter().map(|m| project(&pose, &k, m).unwrap()).collect();
        let corr = CorrespondenceSet::new(imgs, maps).unwrap();
        let j = numeric_jacobian(&pose, &k, &corr, DEFAULT_EPSILON).unwrap();
        // du/dtx = fx / z at the optical axis point.
        let expect = k.fx / 4.0;
        assert!((j[3] - expect).abs() / expect < 1e-3);
        // v does not depend on tx for a point on the axis.
        assert!(j[6 + 3].abs() < 1e-6);
        assert_eq!(numeric_jacobian(&pose, &k, &corr, 0.0), Err(GeometryError::BadEpsilon));
    }

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (
            -3.1f64..3.1,
            -1.5f64..1.5,
            -3.1f64..3.1,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_map(|(a, b, c, d, e, f)| Pose::new(a, b, c, d, e, f))
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal_and_matches_oracle(p in pose_strategy()) {
            let r = rotation_matrix(&p);
            let o = oracle_rotation(&p);
            let m = Matrix3::from_fn(|i, j| r[i][j]);
            prop_assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            prop_assert!((m - o).amax() < 1e-12);
        }

        #[test]
        fn float32_rotation_is_orthonormal(p in pose_strategy()) {
            let mut ctx = crate::obliv::PlainF32;
            let r = rotation_matrix_in(&mut ctx, [p.rx as f32, p.ry as f32, p.rz as f32]);
            let m = Matrix3::from_fn(|i, j| r[i][j] as f64);
            prop_assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-5);
        }

        #[test]
        fn projection_matches_homogeneous_oracle(
            p in pose_strategy(),
            m in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        ) {
            let k = k_std();
            let shifted = Pose { tz: p.tz + 8.0, ..p };
            let m = [m.0, m.1, m.2];
            let got = project(&shifted, &k, &m).unwrap();
            let want = oracle_project(&shifted, &k, &m);
            for i in 0..2 {
                prop_assert!((got[i] - want[i]).abs() <= 1e-5 * want[i].abs().max(1.0));
            }
        }

        #[test]
        fn squared_error_matches_loop(v in prop::collection::vec(-100.0f64..100.0, 0..40)) {
            let mut naive = 0.0;
            for x in &v {
                naive += x * x;
            }
            prop_assert_eq!(squared_error(&Residuals(v)), naive);
        }

        #[test]
        fn forward_jacobian_matches_central_difference(
            p in pose_strategy(),
            pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 6..20),
        ) {
            let k = k_std();
            let pose = Pose { tz: p.tz + 8.0, ..p };
            let maps: Vec<[f64; 3]> = pts.iter().map(|t| [t.0, t.1, t.2]).collect();
            let imgs = maps.iter().map(|m| project(&pose, &k, m).unwrap()).collect();
            let corr = CorrespondenceSet::new(imgs, maps).unwrap();
            let j = numeric_jacobian(&pose, &k, &corr, DEFAULT_EPSILON).unwrap();
            let h = 1e-5;
            let h2 = 1e-3;
            for d in 0..6 {
                let plus = residuals(&pose.perturbed(d, h), &k, &corr).unwrap();
                let minus = residuals(&pose.perturbed(d, -h), &k, &corr).unwrap();
                let wide_plus = residuals(&pose.perturbed(d, h2), &k, &corr).unwrap();
                let wide_minus = residuals(&pose.perturbed(d, -h2), &k, &corr).unwrap();
                let base = residuals(&pose, &k, &corr).unwrap();
                for i in 0..plus.0.len() {
                    let c = (plus.0[i] - minus.0[i]) / (2.0 * h);
                    let f = j[i * 6 + d];
                    // Forward differences carry an eps/2 * r'' truncation term
                    // that no step size removes near zero crossings of r'.
                    let curvature =
                        (wide_plus.0[i] - 2.0 * base.0[i] + wide_minus.0[i]) / (h2 * h2);
                    let truncation = 0.5 * DEFAULT_EPSILON * curvature.abs();
                    if c.abs() > 1e-3 {
                        prop_assert!(
                            (f - c).abs() < 5e-3 * c.abs() + 1.5 * truncation,
                            "d={} i={} f={} c={}", d, i, f, c
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn forward_jacobian_relative_accuracy_on_scene_like_data() {
        // Camera looking at a frustum of points at depth 2..10 under modest
        // rotation, the regime the solver runs in.
        let k = k_std();
        let pose = Pose::new(0.05, -0.08, 0.1, 0.2, -0.1, 0.3);
        let mut maps = Vec::new();
        for i in 0..24 {
            let z = 2.0 + (i as f64 * 0.37) % 8.0;
            let x = ((i as f64 * 1.7).sin()) * 0.5 * z;
            let y = ((i as f64 * 2.3).cos()) * 0.4 * z;
            maps.push([x, y, z]);
        }
        let imgs = maps.iter().map(|m| project(&pose, &k, m).unwrap()).collect();
        let corr = CorrespondenceSet::new(imgs, maps).unwrap();
        let j = numeric_jacobian(&pose, &k, &corr, DEFAULT_EPSILON).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        for d in 0..6 {
            let plus = residuals(&pose.perturbed(d, h), &k, &corr).unwrap();
            let minus = residuals(&pose.perturbed(d, -h), &k, &corr).unwrap();
            for i in 0..plus.0.len() {
                let c = (plus.0[i] - minus.0[i]) / (2.0 * h);
                if c.abs() > 1.0 {
                    worst = worst.max((j[i * 6 + d] - c).abs() / c.abs());
                    checked += 1;
                }
            }
        }
        assert!(checked > 200);
        assert!(worst < 5e-3, "worst relative error {worst}");
    }

    #[test]
    fn rotation_error_is_zero_for_equal_poses() {
        let p = Pose::new(0.3, -0.2, 1.0, 0.0, 0.0, 0.0);
        assert!(p.rotation_error(&p) < 1e-7);
        let q = Pose { rz: p.rz + 0.01, ..p };
        assert!((p.rotation_error(&q) - 0.01).abs() < 1e-6);
    }
}
