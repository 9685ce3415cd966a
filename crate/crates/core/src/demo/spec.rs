use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::joints::JointKind;

/// Planar parallelogram `origin + a·edge_u + b·edge_v`, `a, b ∈ [0, 1]`,
/// in the object's rest frame. Its normal is `edge_u × edge_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub origin: [f64; 3],
    pub edge_u: [f64; 3],
    pub edge_v: [f64; 3],
}

impl Face {
    pub fn new(origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3]) -> Self {
        Face {
            origin,
            edge_u,
            edge_v,
        }
    }

    pub(crate) fn cross(&self) -> Vector3<f64> {
        Vector3::from(self.edge_u).cross(&Vector3::from(self.edge_v))
    }

    pub fn area(&self) -> f64 {
        self.cross().norm()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.cross().normalize()
    }

    pub fn point(&self, a: f64, b: f64) -> Vector3<f64> {
        Vector3::from(self.origin) + Vector3::from(self.edge_u) * a + Vector3::from(self.edge_v) * b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub name: String,
    pub faces: Vec<Face>,
}

/// Configuration q as a function of normalized time `s ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum MotionProfile {
    Ramp { from: f64, to: f64 },
    Smoothstep { from: f64, to: f64 },
    Sinusoid { center: f64, amplitude: f64, cycles: f64 },
    /// Holds `from` for the first `hold` fraction of the demonstration, then
    /// ramps linearly to `to`.
    HoldThenMove { from: f64, to: f64, hold: f64 },
}

impl MotionProfile {
    pub fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match *self {
            MotionProfile::Ramp { from, to } => from + (to - from) * s,
            MotionProfile::Smoothstep { from, to } => from + (to - from) * s * s * (3.0 - 2.0 * s),
            MotionProfile::Sinusoid {
                center,
                amplitude,
                cycles,
            } => center + amplitude * (std::f64::consts::TAU * cycles * s).sin(),
            MotionProfile::HoldThenMove { from, to, hold } => {
                if s <= hold || hold >= 1.0 {
                    from
                } else {
                    from + (to - from) * (s - hold) / (1.0 - hold)
                }
            }
        }
    }

    /// Smallest and largest value reached over the demonstration.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            MotionProfile::Ramp { from, to }
            | MotionProfile::Smoothstep { from, to }
            | MotionProfile::HoldThenMove { from, to, .. } => (from.min(to), from.max(to)),
            MotionProfile::Sinusoid {
                center,
                amplitude,
                cycles,
            } => {
                if cycles >= 0.25 {
                    (center - amplitude.abs(), center + amplitude.abs())
                } else {
                    let end = self.value(1.0);
                    (center.min(end), center.max(end))
                }
            }
        }
    }
}

/// A joint of the generating object. `axis` and `origin` are given in the
/// parent's body frame; the child's body frame coincides with the parent's
/// at q = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub parent: usize,
    pub child: usize,
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub origin: [f64; 3],
    pub motion: MotionProfile,
}

impl JointSpec {
    /// Pose of the child in the parent's body frame at configuration `q`.
    pub fn transform(&self, q: f64) -> Pose {
        let axis = Unit::new_unchecked(Vector3::from(self.axis));
        match self.kind {
            JointKind::Rigid => Pose::identity(),
            JointKind::Prismatic => Pose::from_translation(axis.into_inner() * q),
            JointKind::Revolute => Pose::about_axis(&axis, &Vector3::from(self.origin), q),
        }
    }
}

/// Everything needed to synthesize a demonstration of one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    /// Pose of the root part in the camera frame.
    pub base_pose: Pose,
    pub parts: Vec<PartSpec>,
    pub joints: Vec<JointSpec>,
    pub features_per_part: usize,
    /// Per-axis standard deviation of position noise, meters.
    pub noise_sigma_pos: f64,
    /// Scale of the normal perturbation angle, radians.
    pub noise_sigma_normal: f64,
    /// Probability that a tracked feature is missed in a given frame.
    pub dropout_prob: f64,
    /// Mean track length in frames; 0 keeps every track alive throughout.
    pub track_lifetime: f64,
    pub frame_rate: f64,
}

/// Normal-noise angle paired with 5 mm of position noise.
const NORMAL_NOISE_PER_METER: f64 = 0.035 / 0.005;

impl ObjectSpec {
    /// Sets position noise and scales normal noise alongside it.
    pub fn with_noise(mut self, sigma_pos: f64) -> Self {
        self.noise_sigma_pos = sigma_pos;
        self.noise_sigma_normal = sigma_pos * NORMAL_NOISE_PER_METER;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        let n = self.parts.len();
        if n == 0 {
            return invalid("object has no parts".into());
        }
        for (i, p) in self.parts.iter().enumerate() {
            if p.faces.is_empty() || p.faces.iter().any(|f| !(f.area() > 1e-9)) {
                return invalid(format!("part {i} ({}) needs faces with positive area", p.name));
            }
        }
        if self.features_per_part < 3 {
            return invalid(format!(
                "features_per_part = {} but at least 3 are needed",
                self.features_per_part
            ));
        }
        if !(self.noise_sigma_pos >= 0.0 && self.noise_sigma_normal >= 0.0) {
            return invalid("noise sigmas must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return invalid(format!("dropout_prob {} outside [0, 1)", self.dropout_prob));
        }
        if !(self.track_lifetime == 0.0 || self.track_lifetime >= 1.0) {
            return invalid(format!("track_lifetime {} must be 0 or ≥ 1", self.track_lifetime));
        }
        if !(self.frame_rate > 0.0) {
            return invalid(format!("frame_rate {} must be positive", self.frame_rate));
        }
        if self.joints.len() + 1 != n {
            return invalid(format!(
                "{} joints cannot form a tree over {} parts",
                self.joints.len(),
                n
            ));
        }
        let mut parent = vec![None; n];
        for j in &self.joints {
            if j.parent >= n || j.child >= n || j.parent == j.child {
                return invalid(format!("joint ({}, {}) is malformed", j.parent, j.child));
            }
            if j.kind != JointKind::Rigid && (Vector3::from(j.axis).norm() - 1.0).abs() > 1e-6 {
                return invalid(format!("joint ({}, {}) has a nonunit axis", j.parent, j.child));
            }
            if parent[j.child].replace(j.parent).is_some() {
                return invalid(format!("part {} has two parents", j.child));
            }
        }
        if parent[0].is_some() {
            return invalid("part 0 is the root and cannot be a child".into());
        }
        // Every part must reach the root without revisiting a part.
        for start in 1..n {
            let mut at = start;
            let mut steps = 0;
            while let Some(p) = parent[at] {
                at = p;
                steps += 1;
                if steps > n {
                    return invalid("joints form a cycle".into());
                }
            }
            if at != 0 {
                return invalid(format!("part {start} is not connected to the root"));
            }
        }
        Ok(())
    }

    /// Parts in an order where every parent precedes its children.
    pub(crate) fn topological_order(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut i = 0;
        while i < order.len() {
            let p = order[i];
            for j in self.joints.iter().filter(|j| j.parent == p) {
                order.push(j.child);
            }
            i += 1;
        }
        order
    }
}
