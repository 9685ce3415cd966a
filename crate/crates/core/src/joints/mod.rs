//! Joint models between two parts: fitting, likelihood, and BIC selection.
//!
//! A [`RelativePoseSequence`] holds `Δ^t` with `x_child = x_parent ⊕ Δ`,
//! expressed in anchored frames: each part's frame sits at its
//! reference-frame feature centroid with camera-aligned axes. Translations
//! and axis points below are therefore relative to the parent's anchor.

use std::cmp::Ordering;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{relative, rotation_vector, Pose};
use crate::posegraph::ClusterPoseSequence;

mod fit;

pub use fit::{fit_circle, fit_prismatic, fit_revolute, fit_rigid, Circle};

/// Linkage kinds, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Rigid,
    Prismatic,
    Revolute,
}

impl JointKind {
    pub const ALL: [JointKind; 3] = [JointKind::Rigid, JointKind::Prismatic, JointKind::Revolute];

    pub fn parameter_count(self) -> usize {
        match self {
            JointKind::Rigid => 6,
            JointKind::Prismatic => 8,
            JointKind::Revolute => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JointKind::Rigid => "rigid",
            JointKind::Prismatic => "prismatic",
            JointKind::Revolute => "revolute",
        }
    }
}

impl std::fmt::Display for JointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Isotropic Gaussian observation noise on the translation norm and the
/// rotation angle of pose residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_pos: f64,
    pub sigma_rot: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_pos: 0.01,
            sigma_rot: 0.087,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_pos > 0.0 && self.sigma_rot > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "noise sigmas must be positive, got {} and {}",
                self.sigma_pos, self.sigma_rot
            )))
        }
    }

    fn log_density(x: f64, sigma: f64) -> f64 {
        -0.5 * (std::f64::consts::TAU * sigma * sigma).ln() - x * x / (2.0 * sigma * sigma)
    }

    /// Log-likelihood of one residual with translation norm `dt` and angle `da`.
    pub fn log_likelihood(&self, dt: f64, da: f64) -> f64 {
        Self::log_density(dt, self.sigma_pos) + Self::log_density(da, self.sigma_rot)
    }

    fn cost(&self, r: &Pose) -> f64 {
        let dt = r.translation().norm() / self.sigma_pos;
        let da = r.angle() / self.sigma_rot;
        dt * dt + da * da
    }
}

/// Relative poses between two parts over their common frames.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativePoseSequence {
    pub parent: usize,
    pub child: usize,
    pub frames: Vec<u32>,
    pub deltas: Vec<Pose>,
}

impl RelativePoseSequence {
    pub fn new(parent: usize, child: usize, frames: Vec<u32>, deltas: Vec<Pose>) -> Self {
        RelativePoseSequence {
            parent,
            child,
            frames,
            deltas,
        }
    }

    /// `Δ^t = A_p⁻¹ ⊕ (x_p^t)⁻¹ ⊕ x_c^t ⊕ A_c` over frames where both
    /// parts have poses, `A` being translations to the anchors.
    pub fn from_sequences(parent: &ClusterPoseSequence, child: &ClusterPoseSequence) -> Self {
        let ap = Pose::from_translation(Vector3::from(parent.anchor));
        let ac = Pose::from_translation(Vector3::from(child.anchor));
        let ap_inv = ap.inverse();
        let mut frames = Vec::new();
        let mut deltas = Vec::new();
        for (f, xp) in &parent.poses {
            if let Some(xc) = child.poses.get(f) {
                frames.push(*f);
                deltas.push(ap_inv.compose(&relative(xc, xp)).compose(&ac));
            }
        }
        RelativePoseSequence::new(parent.cluster, child.cluster, frames, deltas)
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// The same relation seen from the other part.
    pub fn reversed(&self) -> Self {
        RelativePoseSequence::new(
            self.child,
            self.parent,
            self.frames.clone(),
            self.deltas.iter().map(Pose::inverse).collect(),
        )
    }
}

/// Model parameters. Directions are unit vectors; points are in the
/// parent's anchored frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JointParams {
    Rigid {
        offset: Pose,
    },
    /// `Δ(q) = translate(q·axis) ⊕ base`.
    Prismatic {
        base: Pose,
        axis: [f64; 3],
    },
    /// `Δ(q) = rotate(axis, center, q) ⊕ reference`.
    Revolute {
        axis: [f64; 3],
        center: [f64; 3],
        radius: f64,
        reference: Pose,
    },
}

/// A fitted linkage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub params: JointParams,
    pub parameter_count: usize,
    pub observations: usize,
    pub loglik: f64,
    pub bic: f64,
    /// Per-frame configuration, 0 at the first frame; empty for rigid.
    pub configurations: Vec<f64>,
    /// True when the data barely constrain the model (too little travel,
    /// or a circle radius no better determined than its size).
    pub degenerate: bool,
    pub noise: NoiseModel,
}

impl JointModel {
    pub fn kind(&self) -> JointKind {
        match self.params {
            JointParams::Rigid { .. } => JointKind::Rigid,
            JointParams::Prismatic { .. } => JointKind::Prismatic,
            JointParams::Revolute { .. } => JointKind::Revolute,
        }
    }

    /// Smallest and largest configuration seen while fitting.
    pub fn q_range(&self) -> Option<(f64, f64)> {
        if self.configurations.is_empty() {
            return None;
        }
        let lo = self.configurations.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.configurations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Predicted relative pose at configuration `q` (ignored for rigid).
    pub fn predict(&self, q: f64) -> Pose {
        match &self.params {
            JointParams::Rigid { offset } => *offset,
            JointParams::Prismatic { base, axis } => Pose::from_translation(Vector3::from(*axis) * q).compose(base),
            JointParams::Revolute {
                axis,
                center,
                reference,
                ..
            } => Pose::about_axis(&Unit::new_normalize(Vector3::from(*axis)), &Vector3::from(*center), q).compose(reference),
        }
    }

    /// `predicted(q)⁻¹ ⊕ observed`.
    pub fn residual(&self, observed: &Pose, q: f64) -> Pose {
        self.predict(q).inverse().compose(observed)
    }

    /// Configuration whose prediction best explains `observed`, weighting
    /// translation and angle by the model's noise.
    pub fn project(&self, observed: &Pose) -> f64 {
        self.project_from(observed, None)
    }

    /// As [`project`](Self::project), choosing among angles that differ by
    /// full turns the one closest to `guess`.
    pub(crate) fn project_near(&self, observed: &Pose, guess: f64) -> f64 {
        self.project_from(observed, Some(guess))
    }

    fn project_from(&self, observed: &Pose, guess: Option<f64>) -> f64 {
        match &self.params {
            JointParams::Rigid { .. } => 0.0,
            JointParams::Prismatic { base, axis } => {
                // Orientation does not depend on q; the translation term is
                // minimized in closed form.
                (observed.translation() - base.translation()).dot(&Vector3::from(*axis))
            }
            JointParams::Revolute {
                axis,
                center,
                reference,
                ..
            } => {
                let a = Vector3::from(*axis);
                let c = Vector3::from(*center);
                // Rotation-only optimum.
                let rot = observed.rotation() * reference.rotation().inverse();
                let mut q_rot = rotation_vector(&rot).dot(&a);
                if let Some(g) = guess {
                    q_rot += std::f64::consts::TAU * ((g - q_rot) / std::f64::consts::TAU).round();
                }
                // Translation-only optimum: angle between the reference and
                // observed anchor positions about the axis.
                let u = reference.translation() - c;
                let v = observed.translation() - c;
                let u = u - a * u.dot(&a);
                let v = v - a * v.dot(&a);
                let q_trans = if u.norm() > 1e-9 && v.norm() > 1e-9 {
                    let raw = a.dot(&u.cross(&v)).atan2(u.dot(&v));
                    raw + std::f64::consts::TAU * ((q_rot - raw) / std::f64::consts::TAU).round()
                } else {
                    q_rot
                };
                let cost = |q: f64| self.noise.cost(&self.residual(observed, q));
                let (lo, hi) = (q_rot.min(q_trans) - 1e-3, q_rot.max(q_trans) + 1e-3);
                golden_section(cost, lo, hi)
            }
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `Σ_t logN(‖Δt_t‖; 0, σ_pos) + logN(θ_t; 0, σ_rot)` over the residuals at
/// the model's stored configurations.
pub fn loglik(model: &JointModel, seq: &RelativePoseSequence, noise: &NoiseModel) -> f64 {
    seq.deltas
        .iter()
        .enumerate()
        .map(|(t, d)| {
            let q = model.configurations.get(t).copied().unwrap_or(0.0);
            let r = model.residual(d, q);
            noise.log_likelihood(r.translation().norm(), r.angle())
        })
        .sum()
}

/// `−2·loglik + p·ln n`.
pub fn bic(loglik: f64, parameter_count: usize, n: usize) -> f64 {
    -2.0 * loglik + parameter_count as f64 * (n as f64).ln()
}

/// Every candidate fit and the winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: JointModel,
    /// Rigid, prismatic, and revolute fits, in that order.
    pub candidates: Vec<JointModel>,
}

impl Selection {
    pub fn candidate(&self, kind: JointKind) -> &JointModel {
        &self.candidates[kind as usize]
    }
}

fn preference(a: &JointModel, b: &JointModel) -> Ordering {
    a.bic
        .total_cmp(&b.bic)
        .then(a.parameter_count.cmp(&b.parameter_count))
        .then(a.kind().cmp(&b.kind()))
}

/// Fits all three kinds and keeps the lowest BIC; ties go to fewer
/// parameters, then to the earlier kind.
pub fn select_model(seq: &RelativePoseSequence, noise: &NoiseModel) -> Result<Selection> {
    if seq.len() < 3 {
        return Err(Error::EmptyInput("joint selection needs at least 3 relative poses"));
    }
    let candidates = vec![fit_rigid(seq, noise)?, fit_prismatic(seq, noise)?, fit_revolute(seq, noise)?];
    let chosen = candidates
        .iter()
        .min_by(|a, b| preference(a, b))
        .cloned()
        .expect("three candidates");
    Ok(Selection { chosen, candidates })
}

/// Mean translation (meters) and angle (degrees) of the residuals at the
/// best configuration for each frame.
pub fn model_fit_error(model: &JointModel, seq: &RelativePoseSequence) -> (f64, f64) {
    if seq.is_empty() {
        return (0.0, 0.0);
    }
    let (mut dt, mut da) = (0.0, 0.0);
    for d in &seq.deltas {
        let r = model.residual(d, model.project(d));
        dt += r.translation().norm();
        da += r.angle().to_degrees();
    }
    let n = seq.len() as f64;
    (dt / n, da / n)
}

#[cfg(test)]
mod tests;
