//! Rigid-body geometry on SE(3).
//!
//! A [`Pose`] stores a unit quaternion with non-negative scalar part and a
//! translation in meters. `a.compose(&b)` is the motion composition `a ⊕ b`
//! (apply `b`, then `a`), and [`relative`] is its left inverse:
//! `b ⊕ relative(a, b) = a`.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular-value ratio below which a point set counts as collinear.
pub const COLLINEAR_RATIO: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-6;

/// Element of SE(3).
#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

/// Tangent vector of SE(3): rotation vector (radians) and translational
/// part (meters) of the matrix logarithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Pose::new(rotation, Vector3::zeros())
    }

    /// Rotation by `angle` radians about the line through `point` along `axis`.
    pub fn about_axis(axis: &Unit<Vector3<f64>>, point: &Vector3<f64>, angle: f64) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(axis, angle);
        Pose::new(rotation, point - rotation * point)
    }

    /// Builds a pose from raw quaternion components, renormalizing them.
    pub fn from_components(q: [f64; 4], t: [f64; 3]) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Pose::new(q, Vector3::from(t))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ⊕ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Geodesic rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Translation distance and geodesic angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let rel = relative(self, other);
        (
            (self.translation - other.translation).norm(),
            rel.angle(),
        )
    }

    pub fn exp(twist: &Twist) -> Pose {
        let omega = twist.rotation;
        let theta = omega.norm();
        let w = skew(&omega);
        let (a, b) = if theta < SMALL_ANGLE {
            (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
        } else {
            let t2 = theta * theta;
            ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        let v = Matrix3::identity() + w * a + w * w * b;
        Pose::new(
            UnitQuaternion::from_scaled_axis(omega),
            v * twist.translation,
        )
    }

    pub fn log(&self) -> Twist {
        let omega = rotation_vector(&self.rotation);
        let theta = omega.norm();
        let w = skew(&omega);
        let c = if theta < SMALL_ANGLE {
            1.0 / 12.0 + theta * theta / 720.0
        } else {
            // Half-angle form; 1 − cos θ cancels badly for small θ.
            let half = theta / 2.0;
            (1.0 - half / half.tan()) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * c;
        Twist {
            rotation: omega,
            translation: v_inv * self.translation,
        }
    }

    /// Quaternion components `[w, x, y, z]`.
    pub fn quaternion_components(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// `a ⊖ b`: the pose of `a` expressed in the frame of `b`.
pub fn relative(a: &Pose, b: &Pose) -> Pose {
    b.inverse().compose(a)
}

/// Geodesic angle of a unit quaternion, in `[0, π]`.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    let v = q.imag().norm();
    2.0 * v.atan2(q.w.abs())
}

/// Rotation vector (axis times angle) with angle in `[0, π]`.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let v = q.imag();
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(q.w);
    v * (angle / s)
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.quaternion_components();
        let t = self.translation;
        write!(
            f,
            "Pose(q=[{w:.6}, {x:.6}, {y:.6}, {z:.6}], t=[{:.6}, {:.6}, {:.6}])",
            t.x, t.y, t.z
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    tx: f64,
    ty: f64,
    tz: f64,
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let [qw, qx, qy, qz] = self.quaternion_components();
        let t = self.translation;
        PoseRecord {
            qw,
            qx,
            qy,
            qz,
            tx: t.x,
            ty: t.y,
            tz: t.z,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PoseRecord::deserialize(d)?;
        Pose::from_exact_components([r.qw, r.qx, r.qy, r.qz], [r.tx, r.ty, r.tz])
            .map_err(serde::de::Error::custom)
    }
}

impl Pose {
    /// Rebuilds a pose from stored components without renormalizing, so that
    /// serialized poses round-trip bit for bit.
    pub fn from_exact_components(q: [f64; 4], t: [f64; 3]) -> std::result::Result<Pose, String> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !(norm - 1.0).abs().le(&1e-9) {
            return Err(format!("quaternion norm {norm} is not 1"));
        }
        if t.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite pose component".into());
        }
        Ok(Pose::new(UnitQuaternion::new_unchecked(quat), Vector3::from(t)))
    }
}

/// Chordal mean of a set of rotations: the dominant eigenvector of the
/// quaternion outer-product sum, returned with non-negative scalar part.
pub fn mean_rotation(rotations: &[UnitQuaternion<f64>]) -> Result<UnitQuaternion<f64>> {
    if rotations.is_empty() {
        return Err(Error::EmptyInput("mean_rotation needs at least one rotation"));
    }
    let mut m = Matrix4::zeros();
    for q in rotations {
        let v = q.coords;
        m += v * v.transpose();
    }
    let eig = m.symmetric_eigen();
    let (best, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| if l > acc.1 { (i, l) } else { acc });
    let v: Vector4<f64> = eig.eigenvectors.column(best).into_owned();
    // nalgebra stores quaternion coords as [i, j, k, w].
    let q = Quaternion::new(v[3], v[0], v[1], v[2]);
    Ok(canonical(UnitQuaternion::from_quaternion(q)))
}

/// Weighted least-squares rigid alignment: the pose minimizing
/// `Σ wᵢ ‖dstᵢ − (R·srcᵢ + t)‖²` with `det R = +1`.
pub fn align_point_sets(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: &[f64],
) -> Result<Pose> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::DegenerateGeometry(format!(
            "mismatched lengths: {} source, {} target, {} weights",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    let active = weights.iter().filter(|&&w| w > 0.0).count();
    if active < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{active} weighted correspondences, need at least 3"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::DegenerateGeometry("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    let mut cs = Vector3::zeros();
    let mut cd = Vector3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        cs += s * *w;
        cd += d * *w;
    }
    cs /= total;
    cd /= total;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        let a = s - cs;
        let b = d - cd;
        cross += a * b.transpose() * *w;
        scatter += a * a.transpose() * *w;
    }

    let mut spread = scatter.symmetric_eigen().eigenvalues;
    spread
        .as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let s1 = spread[0].max(0.0).sqrt();
    let s2 = spread[1].max(0.0).sqrt();
    if s1 == 0.0 || s2 / s1 < COLLINEAR_RATIO {
        return Err(Error::DegenerateGeometry("source points are collinear".into()));
    }

    // Horn: the optimal quaternion is the top eigenvector of N. The SVD of
    // the cross-covariance lost 1e-8 on nearly collinear triangles.
    let h = |i: usize, j: usize| cross[(i, j)];
    let (sxx, sxy, sxz) = (h(0, 0), h(0, 1), h(0, 2));
    let (syx, syy, syz) = (h(1, 0), h(1, 1), h(1, 2));
    let (szx, szy, szz) = (h(2, 0), h(2, 1), h(2, 2));
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, syy - sxx - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, szz - sxx - syy,
    );
    let eig = n.symmetric_eigen();
    let q = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let rotation = canonical(UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])));
    let translation = cd - rotation * cs;
    Ok(Pose::new(rotation, translation))
}

/// Weighted residual `Σ wᵢ ‖dstᵢ − pose(srcᵢ)‖²`.
pub fn alignment_cost(pose: &Pose, src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: &[f64]) -> f64 {
    src.iter()
        .zip(dst)
        .zip(weights)
        .map(|((s, d), w)| w * (d - pose.transform_point(s)).norm_squared())
        .sum()
}
