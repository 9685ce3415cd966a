//! Feature-trajectory demonstrations: the data model, a synthetic generator
//! with ground truth, a catalog of household objects, and the on-disk format.

mod catalog;
mod generate;
mod io;

use std::collections::{BTreeMap, HashSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::joints::JointKind;

pub use catalog::{catalog_names, default_spec, default_specs};
pub use generate::generate;
pub use io::{gt_path, load, save, TRAJ_SCHEMA};
pub use spec::{Face, JointSpec, MotionProfile, ObjectSpec, PartSpec};

mod spec;

/// Default demonstration length in frames (30 s at 30 Hz).
pub const DEFAULT_FRAMES: usize = 900;

/// One observation of a tracked surface point.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureObservation {
    pub frame: u32,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
}

/// A tracked point: positions and normals over the frames in which it was seen.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrajectory {
    pub id: u64,
    pub observations: Vec<FeatureObservation>,
}

impl FeatureTrajectory {
    pub fn first_frame(&self) -> u32 {
        self.observations[0].frame
    }

    pub fn last_frame(&self) -> u32 {
        self.observations[self.observations.len() - 1].frame
    }

    pub fn at(&self, frame: u32) -> Option<&FeatureObservation> {
        self.observations
            .binary_search_by_key(&frame, |o| o.frame)
            .ok()
            .map(|i| &self.observations[i])
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.observations.len() < 2 {
            return Err(format!("trajectory {} has fewer than 2 observations", self.id));
        }
        for w in self.observations.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(format!(
                    "trajectory {}: frame {} does not increase after {}",
                    self.id, w[1].frame, w[0].frame
                ));
            }
        }
        for o in &self.observations {
            if (o.normal.norm() - 1.0).abs() > 1e-6 {
                return Err(format!(
                    "trajectory {} frame {}: normal is not unit length",
                    self.id, o.frame
                ));
            }
        }
        Ok(())
    }
}

/// Part labels, part poses and joint parameters behind a synthetic demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub object: String,
    pub part_names: Vec<String>,
    /// Trajectory id to part index.
    pub labels: BTreeMap<u64, usize>,
    /// World pose of every part at every frame, indexed `[part][frame]`.
    pub part_poses: Vec<Vec<Pose>>,
    pub joints: Vec<JointTruth>,
}

/// One ground-truth joint. `axis` and `origin` are expressed in the parent's
/// body frame; `configurations` holds q(t) for every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTruth {
    pub parent: usize,
    pub child: usize,
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub origin: [f64; 3],
    pub configurations: Vec<f64>,
}

impl GroundTruth {
    pub fn part_count(&self) -> usize {
        self.part_names.len()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let parts = self.part_count();
        if self.part_poses.len() != parts {
            return Err(format!(
                "{} pose sequences for {} parts",
                self.part_poses.len(),
                parts
            ));
        }
        if let Some((id, part)) = self.labels.iter().find(|(_, &p)| p >= parts) {
            return Err(format!("trajectory {id} labelled with unknown part {part}"));
        }
        for j in &self.joints {
            if j.parent >= parts || j.child >= parts {
                return Err(format!("joint ({}, {}) references an unknown part", j.parent, j.child));
            }
        }
        Ok(())
    }
}

/// A set of feature trajectories recorded at a fixed frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub frame_rate: f64,
    pub trajectories: Vec<FeatureTrajectory>,
    pub ground_truth: Option<GroundTruth>,
}

impl Demonstration {
    pub fn new(
        frame_rate: f64,
        trajectories: Vec<FeatureTrajectory>,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let demo = Demonstration {
            frame_rate,
            trajectories,
            ground_truth,
        };
        demo.validate().map_err(Error::InvalidSpec)?;
        Ok(demo)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(format!("frame rate {} must be positive", self.frame_rate));
        }
        let mut seen = HashSet::new();
        for t in &self.trajectories {
            if !seen.insert(t.id) {
                return Err(format!("duplicate id {}", t.id));
            }
            t.validate()?;
        }
        if let Some(gt) = &self.ground_truth {
            gt.validate()?;
        }
        Ok(())
    }

    /// One past the last observed frame.
    pub fn frame_count(&self) -> usize {
        self.trajectories
            .iter()
            .map(|t| t.last_frame() as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn trajectory(&self, id: u64) -> Option<&FeatureTrajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }
}
