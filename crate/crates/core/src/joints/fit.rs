use nalgebra::{Matrix3, SymmetricEigen, Unit, Vector3};

use super::{bic, loglik, JointModel, JointParams, NoiseModel, RelativePoseSequence};
use crate::error::{Error, Result};
use crate::geom::{mean_rotation, rotation_vector, Pose};

/// Minimum travel below which a prismatic fit is flagged, meters.
const MIN_TRAVEL: f64 = 1e-3;
/// Minimum rotation span below which a revolute fit is flagged, radians.
const MIN_SPAN: f64 = 5.0 * std::f64::consts::PI / 180.0;

fn finish(params: JointParams, configurations: Vec<f64>, degenerate: bool, seq: &RelativePoseSequence, noise: &NoiseModel) -> JointModel {
    let mut model = JointModel {
        parameter_count: match params {
            JointParams::Rigid { .. } => 6,
            JointParams::Prismatic { .. } => 8,
            JointParams::Revolute { .. } => 9,
        },
        params,
        observations: seq.len(),
        loglik: 0.0,
        bic: 0.0,
        configurations,
        degenerate,
        noise: *noise,
    };
    model.loglik = loglik(&model, seq, noise);
    model.bic = bic(model.loglik, model.parameter_count, seq.len());
    model
}

fn mean_pose(poses: impl Iterator<Item = Pose> + Clone) -> Result<Pose> {
    let rotations: Vec<_> = poses.clone().map(|p| *p.rotation()).collect();
    let n = rotations.len() as f64;
    let t = poses.fold(Vector3::zeros(), |acc, p| acc + p.translation()) / n;
    Ok(Pose::new(mean_rotation(&rotations)?, t))
}

/// Unit eigenvector of the largest eigenvalue of a symmetric matrix.
fn principal_direction(m: Matrix3<f64>) -> Vector3<f64> {
    let eig = SymmetricEigen::new(m);
    let i = eig.eigenvalues.imax();
    eig.eigenvectors.column(i).normalize()
}

/// Constant relative pose: mean rotation and mean translation.
pub fn fit_rigid(seq: &RelativePoseSequence, noise: &NoiseModel) -> Result<JointModel> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("rigid fit needs at least one relative pose"));
    }
    let offset = mean_pose(seq.deltas.iter().copied())?;
    Ok(finish(JointParams::Rigid { offset }, Vec::new(), false, seq, noise))
}

/// Constant orientation translating along the principal direction of the
/// translations. The axis points from the first toward the last frame's
/// translation.
pub fn fit_prismatic(seq: &RelativePoseSequence, noise: &NoiseModel) -> Result<JointModel> {
    if seq.len() < 3 {
        return Err(Error::EmptyInput("prismatic fit needs at least 3 relative poses"));
    }
    let ts: Vec<Vector3<f64>> = seq.deltas.iter().map(|d| *d.translation()).collect();
    let mean = ts.iter().sum::<Vector3<f64>>() / ts.len() as f64;
    let scatter = ts.iter().fold(Matrix3::zeros(), |acc, t| acc + (t - mean) * (t - mean).transpose());
    let mut axis = principal_direction(scatter);
    let first = ts[0];
    if (ts[ts.len() - 1] - first).dot(&axis) < 0.0 {
        axis = -axis;
    }
    let q: Vec<f64> = ts.iter().map(|t| (t - first).dot(&axis)).collect();
    let rotations: Vec<_> = seq.deltas.iter().map(|d| *d.rotation()).collect();
    let origin = ts.iter().zip(&q).map(|(t, q)| t - axis * *q).sum::<Vector3<f64>>() / ts.len() as f64;
    let base = Pose::new(mean_rotation(&rotations)?, origin);
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let params = JointParams::Prismatic {
        base,
        axis: axis.into(),
    };
    Ok(finish(params, q, hi - lo < MIN_TRAVEL, seq, noise))
}

/// Least-squares circle in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
    /// Standard error of the radius from the refinement's normal equations.
    pub radius_sigma: f64,
}

/// Algebraic (Kåsa) fit followed by one Gauss-Newton step on the geometric
/// distances. `None` when the points do not determine a circle.
pub fn fit_circle(points: &[[f64; 2]]) -> Option<Circle> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    // x² + y² + D x + E y + F = 0 on centered coordinates.
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let (x, y) = (p[0] - mx, p[1] - my);
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb += row * -(x * x + y * y);
    }
    let sol = ata.try_inverse().map(|inv| inv * atb)?;
    let (mut cx, mut cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    let mut r = r2.sqrt();

    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    let mut residuals = Vec::with_capacity(n);
    for p in points {
        let (dx, dy) = (p[0] - mx - cx, p[1] - my - cy);
        let d = (dx * dx + dy * dy).sqrt().max(1e-300);
        let j = Vector3::new(-dx / d, -dy / d, -1.0);
        let res = d - r;
        jtj += j * j.transpose();
        jtr += j * res;
        residuals.push(res);
    }
    let mut radius_sigma = 0.0;
    if let Some(inv) = jtj.try_inverse() {
        let step = -(inv * jtr);
        if step.iter().all(|s| s.is_finite()) && r + step[2] > 0.0 {
            cx += step[0];
            cy += step[1];
            r += step[2];
        }
        let ssr: f64 = points
            .iter()
            .map(|p| {
                let d = ((p[0] - mx - cx).powi(2) + (p[1] - my - cy).powi(2)).sqrt();
                (d - r).powi(2)
            })
            .sum();
        let dof = n.saturating_sub(3).max(1) as f64;
        radius_sigma = (ssr / dof * inv[(2, 2)]).max(0.0).sqrt();
    }
    Some(Circle {
        center: [cx + mx, cy + my],
        radius: r,
        radius_sigma,
    })
}

/// Rotation about a fixed axis followed by a constant attachment.
///
/// The axis is the principal direction of the rotation vectors of
/// `R_t R_0ᵀ`, signed so that the largest rotation is positive about it.
/// The anchor positions, projected onto the plane normal to the axis, give
/// the center by a circle fit, and their unwrapped angle about it gives the
/// initial configurations. Each configuration is then re-projected onto the
/// model and shifted so the first is 0.
pub fn fit_revolute(seq: &RelativePoseSequence, noise: &NoiseModel) -> Result<JointModel> {
    if seq.len() < 3 {
        return Err(Error::EmptyInput("revolute fit needs at least 3 relative poses"));
    }
    let r0_inv = seq.deltas[0].rotation().inverse();
    let vs: Vec<Vector3<f64>> = seq.deltas.iter().map(|d| rotation_vector(&(d.rotation() * r0_inv))).collect();
    let scatter = vs.iter().fold(Matrix3::zeros(), |acc, v| acc + v * v.transpose());
    let mut axis = principal_direction(scatter);
    let largest = vs
        .iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .copied()
        .unwrap_or_else(Vector3::zeros);
    if largest.dot(&axis) < 0.0 {
        axis = -axis;
    }
    let angles: Vec<f64> = vs.iter().map(|v| v.dot(&axis)).collect();
    let span = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - angles.iter().copied().fold(f64::INFINITY, f64::min);

    // Plane basis (u, w) with u × w = axis.
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = axis.cross(&helper).normalize();
    let w = axis.cross(&u);
    let ts: Vec<Vector3<f64>> = seq.deltas.iter().map(|d| *d.translation()).collect();
    let planar: Vec<[f64; 2]> = ts.iter().map(|t| [t.dot(&u), t.dot(&w)]).collect();
    let height = ts.iter().map(|t| t.dot(&axis)).sum::<f64>() / ts.len() as f64;
    let circle = fit_circle(&planar);

    let mut degenerate = span < MIN_SPAN;
    let (center, radius, mut q) = match circle {
        Some(c) if c.radius > 1e-9 => {
            degenerate |= c.radius_sigma > c.radius;
            let center = u * c.center[0] + w * c.center[1] + axis * height;
            let mut q = Vec::with_capacity(planar.len());
            let mut prev = 0.0;
            for (k, p) in planar.iter().enumerate() {
                let raw = (p[1] - c.center[1]).atan2(p[0] - c.center[0]);
                let value = if k == 0 {
                    raw
                } else {
                    raw + std::f64::consts::TAU * ((prev - raw) / std::f64::consts::TAU).round()
                };
                q.push(value);
                prev = value;
            }
            let q0 = q[0];
            q.iter_mut().for_each(|x| *x -= q0);
            (center, c.radius, q)
        }
        _ => {
            degenerate = true;
            (ts[0] - axis * (ts[0].dot(&axis) - height), 0.0, angles.clone())
        }
    };

    let unit_axis = Unit::new_unchecked(axis);
    let attachment = |q: &[f64]| {
        mean_pose(
            seq.deltas
                .iter()
                .zip(q)
                .map(|(d, q)| Pose::about_axis(&unit_axis, &center, *q).inverse().compose(d)),
        )
    };
    let reference = attachment(&q)?;
    let mut model = JointModel {
        params: JointParams::Revolute {
            axis: axis.into(),
            center: center.into(),
            radius,
            reference,
        },
        parameter_count: 9,
        observations: seq.len(),
        loglik: 0.0,
        bic: 0.0,
        configurations: Vec::new(),
        degenerate,
        noise: *noise,
    };
    for (k, d) in seq.deltas.iter().enumerate() {
        q[k] = model.project_near(d, q[k]);
    }
    let q0 = q[0];
    q.iter_mut().for_each(|x| *x -= q0);
    let reference = Pose::about_axis(&unit_axis, &center, q0).compose(&reference);
    // Effective radius: the attachment's distance from the axis.
    let offset = reference.translation() - center;
    let radius = if circle.is_some() { (offset - axis * offset.dot(&axis)).norm() } else { radius };
    model.params = JointParams::Revolute {
        axis: axis.into(),
        center: center.into(),
        radius,
        reference,
    };
    Ok(finish(model.params, q, degenerate, seq, noise))
}
