use std::collections::BTreeMap;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal, UnitSphere};

use super::{Demonstration, FeatureObservation, FeatureTrajectory, GroundTruth, JointTruth, ObjectSpec};
use crate::error::{Error, Result};
use crate::geom::Pose;

struct Track {
    part: usize,
    birth: usize,
    body_point: Vector3<f64>,
    body_normal: Vector3<f64>,
    observations: Vec<FeatureObservation>,
}

/// Synthesizes a demonstration of `spec` over `frames` frames.
///
/// Every part keeps `features_per_part` live tracks. A track is a point on
/// one of the part's faces carried by the part's ground-truth pose; it dies
/// after a geometrically distributed lifetime and is replaced by a fresh
/// track at a new point. Observations receive isotropic Gaussian position
/// noise, a random-axis rotation of the normal, and per-frame dropout.
pub fn generate(spec: &ObjectSpec, frames: usize, seed: u64) -> Result<Demonstration> {
    if frames < 10 {
        return Err(Error::InvalidSpec(format!("frames = {frames}, need at least 10")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let configurations: Vec<Vec<f64>> = spec
        .joints
        .iter()
        .map(|j| {
            (0..frames)
                .map(|f| j.motion.value(f as f64 / (frames - 1) as f64))
                .collect()
        })
        .collect();

    let mut part_poses: Vec<Vec<Pose>> = vec![Vec::with_capacity(frames); spec.parts.len()];
    for f in 0..frames {
        for &p in &spec.topological_order() {
            let pose = match spec.joints.iter().position(|j| j.child == p) {
                None => spec.base_pose,
                Some(ji) => {
                    let j = &spec.joints[ji];
                    part_poses[j.parent][f].compose(&j.transform(configurations[ji][f]))
                }
            };
            part_poses[p].push(pose);
        }
    }

    let death = if spec.track_lifetime > 0.0 {
        Some(Geometric::new(1.0 / spec.track_lifetime).map_err(|e| Error::InvalidSpec(e.to_string()))?)
    } else {
        None
    };

    let mut tracks = Vec::new();
    for (part_index, part) in spec.parts.iter().enumerate() {
        let areas: Vec<f64> = part.faces.iter().map(|f| f.area()).collect();
        let total_area: f64 = areas.iter().sum();
        for _slot in 0..spec.features_per_part {
            let mut birth = 0;
            while birth < frames {
                let lifetime = match &death {
                    Some(g) => 1 + g.sample(&mut rng) as usize,
                    None => frames,
                };
                let mut pick = rng.random::<f64>() * total_area;
                let mut face = &part.faces[part.faces.len() - 1];
                for (f, a) in part.faces.iter().zip(&areas) {
                    if pick < *a {
                        face = f;
                        break;
                    }
                    pick -= a;
                }
                let body_point = face.point(rng.random(), rng.random());
                let mut track = Track {
                    part: part_index,
                    birth,
                    body_point,
                    body_normal: face.normal(),
                    observations: Vec::new(),
                };
                let end = (birth + lifetime).min(frames);
                for frame in birth..end {
                    let dropped = rng.random::<f64>() < spec.dropout_prob;
                    let noise = Vector3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * spec.noise_sigma_pos;
                    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
                    let angle = (rng.sample::<f64, _>(StandardNormal) * spec.noise_sigma_normal).abs();
                    if dropped {
                        continue;
                    }
                    let pose = &part_poses[part_index][frame];
                    let position = pose.transform_point(&track.body_point) + noise;
                    let tilt = UnitQuaternion::from_axis_angle(
                        &Unit::new_normalize(Vector3::from(axis)),
                        angle,
                    );
                    let normal = (tilt * pose.rotate_vector(&track.body_normal)).normalize();
                    track.observations.push(FeatureObservation {
                        frame: frame as u32,
                        position,
                        normal,
                    });
                }
                tracks.push(track);
                birth = end;
            }
        }
    }

    tracks.retain(|t| t.observations.len() >= 2);
    // Ids follow birth order; ties are shuffled so that ids carry no part
    // information.
    tracks.shuffle(&mut rng);
    tracks.sort_by_key(|t| t.birth);

    let mut labels = BTreeMap::new();
    let trajectories: Vec<FeatureTrajectory> = tracks
        .into_iter()
        .enumerate()
        .map(|(id, t)| {
            labels.insert(id as u64, t.part);
            FeatureTrajectory {
                id: id as u64,
                observations: t.observations,
            }
        })
        .collect();

    let ground_truth = GroundTruth {
        object: spec.name.clone(),
        part_names: spec.parts.iter().map(|p| p.name.clone()).collect(),
        labels,
        part_poses,
        joints: spec
            .joints
            .iter()
            .zip(configurations)
            .map(|(j, q)| JointTruth {
                parent: j.parent,
                child: j.child,
                kind: j.kind,
                axis: j.axis,
                origin: j.origin,
                configurations: q,
            })
            .collect(),
    };

    Demonstration::new(spec.frame_rate, trajectories, Some(ground_truth))
}

/// Body-frame point behind a trajectory, recovered from noise-free ground truth.
#[cfg(test)]
pub(crate) fn body_point(gt: &GroundTruth, traj: &FeatureTrajectory) -> Vector3<f64> {
    let part = gt.labels[&traj.id];
    let o = &traj.observations[0];
    let pose: &Pose = &gt.part_poses[part][o.frame as usize];
    pose.inverse().transform_point(&o.position)
}
