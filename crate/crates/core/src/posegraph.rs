//! Per-cluster SE(3) motion: frame-to-frame alignment with inlier rejection,
//! strided long-range constraints, and a constant-velocity batch smoother.
//!
//! A cluster pose `x^t` maps positions at the reference frame to positions
//! at frame `t`, both in camera coordinates, so `x^ref` is the identity.
//! Measured deltas live in the same convention: `D` with `p^b ≈ D·p^a`
//! predicts `x^b ⊕ (x^a)⁻¹`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::ops::AddAssign;

use log::warn;
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demo::Demonstration;
use crate::error::{Error, Result};
use crate::geom::{align_point_sets, relative, Pose, Twist};
use crate::segment::ClusterAssignment;

/// Positions (and normals) of one cluster's features seen at one frame,
/// ordered by trajectory id.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterFrameSet {
    pub cluster: usize,
    pub frame: u32,
    pub ids: Vec<u64>,
    pub positions: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl ClusterFrameSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseGraphParams {
    /// Alignment residual below which a correspondence is an inlier, meters.
    pub inlier_threshold: f64,
    pub sparse_stride: u32,
    /// Velocity weight as a fraction of the median consecutive weight.
    pub velocity_ratio: f64,
    pub max_iterations: usize,
    pub ransac_iterations: usize,
}

impl Default for PoseGraphParams {
    fn default() -> Self {
        PoseGraphParams {
            inlier_threshold: 0.01,
            sparse_stride: 10,
            velocity_ratio: 0.1,
            max_iterations: 50,
            ransac_iterations: 64,
        }
    }
}

const MAX_INLIER_ROUNDS: usize = 20;
const MIN_RELATIVE_DECREASE: f64 = 1e-8;

/// Collects the frame sets of `cluster`, skipping frames where it has no
/// observed member.
pub fn frame_sets(demo: &Demonstration, assignment: &ClusterAssignment, cluster: usize) -> Vec<ClusterFrameSet> {
    let mut by_frame: BTreeMap<u32, ClusterFrameSet> = BTreeMap::new();
    let Some(members) = assignment.clusters.get(&cluster) else {
        return Vec::new();
    };
    let index: HashMap<u64, usize> = demo.trajectories.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    for id in members {
        let Some(&i) = index.get(id) else { continue };
        for o in &demo.trajectories[i].observations {
            let set = by_frame.entry(o.frame).or_insert_with(|| ClusterFrameSet {
                cluster,
                frame: o.frame,
                ids: Vec::new(),
                positions: Vec::new(),
                normals: Vec::new(),
            });
            set.ids.push(*id);
            set.positions.push(o.position);
            set.normals.push(o.normal);
        }
    }
    by_frame.into_values().collect()
}

/// A robust frame-to-frame motion estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaEstimate {
    /// Motion `D` with `curr ≈ D·prev`.
    pub delta: Pose,
    pub inliers: Vec<u64>,
}

fn correspondences(prev: &ClusterFrameSet, curr: &ClusterFrameSet) -> (Vec<u64>, Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let (mut i, mut j) = (0, 0);
    let (mut ids, mut src, mut dst) = (Vec::new(), Vec::new(), Vec::new());
    while i < prev.ids.len() && j < curr.ids.len() {
        match prev.ids[i].cmp(&curr.ids[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ids.push(prev.ids[i]);
                src.push(prev.positions[i]);
                dst.push(curr.positions[j]);
                i += 1;
                j += 1;
            }
        }
    }
    (ids, src, dst)
}

fn fit_subset(src: &[Vector3<f64>], dst: &[Vector3<f64>], subset: &[usize]) -> Result<Pose> {
    let s: Vec<_> = subset.iter().map(|&k| src[k]).collect();
    let d: Vec<_> = subset.iter().map(|&k| dst[k]).collect();
    align_point_sets(&s, &d, &vec![1.0; subset.len()])
}

fn inliers_of(pose: &Pose, src: &[Vector3<f64>], dst: &[Vector3<f64>], threshold: f64) -> Vec<usize> {
    (0..src.len())
        .filter(|&k| (pose.transform_point(&src[k]) - dst[k]).norm() < threshold)
        .collect()
}

/// Aligns the features shared by two frame sets.
///
/// The all-points fit is refined by alternating refits on the inliers and
/// reclassification until the inlier set stops changing. When that first
/// fit leaves more than half of the points outside the threshold, the
/// starting inlier set instead comes from the best of a fixed number of
/// random three-point samples drawn from `rng`.
pub fn estimate_delta<R: Rng>(
    prev: &ClusterFrameSet,
    curr: &ClusterFrameSet,
    threshold: f64,
    ransac_iterations: usize,
    rng: &mut R,
) -> Result<DeltaEstimate> {
    let (ids, src, dst) = correspondences(prev, curr);
    if ids.len() < 3 {
        return Err(Error::InsufficientCorrespondences { found: ids.len() });
    }
    let all: Vec<usize> = (0..ids.len()).collect();
    let mut pose = fit_subset(&src, &dst, &all)?;
    let mut inliers = inliers_of(&pose, &src, &dst, threshold);

    if 2 * inliers.len() < ids.len() {
        let mut best: Option<Vec<usize>> = None;
        for _ in 0..ransac_iterations {
            let picked = sample(rng, ids.len(), 3).into_vec();
            let Ok(candidate) = fit_subset(&src, &dst, &picked) else {
                continue;
            };
            let found = inliers_of(&candidate, &src, &dst, threshold);
            if best.as_ref().is_none_or(|b| found.len() > b.len()) {
                best = Some(found);
            }
        }
        if let Some(b) = best.filter(|b| b.len() > inliers.len()) {
            inliers = b;
        }
    }

    for _ in 0..MAX_INLIER_ROUNDS {
        if inliers.len() < 3 {
            break;
        }
        let Ok(refit) = fit_subset(&src, &dst, &inliers) else {
            break;
        };
        let next = inliers_of(&refit, &src, &dst, threshold);
        pose = refit;
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
    }
    if inliers.len() < 3 {
        // Nothing agrees with anything: keep the plain least-squares fit.
        pose = fit_subset(&src, &dst, &all)?;
        inliers = all;
    }
    Ok(DeltaEstimate {
        delta: pose,
        inliers: inliers.into_iter().map(|k| ids[k]).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Consecutive,
    Sparse,
    Velocity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseConstraint {
    pub kind: ConstraintKind,
    /// Two frames `(a, b)` for measured deltas, three `(t−1, t, t+1)` for velocity.
    pub frames: Vec<u32>,
    pub delta: Option<Pose>,
    pub weight: f64,
}

impl PoseConstraint {
    pub fn between(kind: ConstraintKind, a: u32, b: u32, delta: Pose, weight: f64) -> Self {
        PoseConstraint {
            kind,
            frames: vec![a, b],
            delta: Some(delta),
            weight,
        }
    }

    pub fn velocity(t: u32, weight: f64) -> Self {
        PoseConstraint {
            kind: ConstraintKind::Velocity,
            frames: vec![t - 1, t, t + 1],
            delta: None,
            weight,
        }
    }
}

/// Measured constraints over time-ordered frame sets.
///
/// Consecutive constraints join frames `t−1` and `t` when both are present;
/// sparse ones join `t − stride` and `t`. Each is weighted by its inlier
/// count. Every frame with both neighbors present gets a velocity term
/// weighted by `velocity_ratio` times the median consecutive weight.
/// Frame pairs that cannot be aligned are skipped.
pub fn build_constraints<R: Rng>(frames: &[ClusterFrameSet], params: &PoseGraphParams, rng: &mut R) -> Vec<PoseConstraint> {
    let by_frame: BTreeMap<u32, &ClusterFrameSet> = frames.iter().map(|f| (f.frame, f)).collect();
    let mut out = Vec::new();
    let mut consecutive_weights = Vec::new();
    let mut push = |kind, a: &ClusterFrameSet, b: &ClusterFrameSet, rng: &mut R, out: &mut Vec<PoseConstraint>| {
        if let Ok(est) = estimate_delta(a, b, params.inlier_threshold, params.ransac_iterations, rng) {
            let w = est.inliers.len() as f64;
            if kind == ConstraintKind::Consecutive {
                consecutive_weights.push(w);
            }
            out.push(PoseConstraint::between(kind, a.frame, b.frame, est.delta, w));
        }
    };
    for f in frames {
        if f.frame == 0 {
            continue;
        }
        if let Some(prev) = by_frame.get(&(f.frame - 1)) {
            push(ConstraintKind::Consecutive, prev, f, rng, &mut out);
        }
        if params.sparse_stride > 1 && f.frame >= params.sparse_stride {
            if let Some(prev) = by_frame.get(&(f.frame - params.sparse_stride)) {
                push(ConstraintKind::Sparse, prev, f, rng, &mut out);
            }
        }
    }
    if consecutive_weights.is_empty() || params.velocity_ratio <= 0.0 {
        return out;
    }
    consecutive_weights.sort_by(f64::total_cmp);
    let m = consecutive_weights.len();
    let median = if m % 2 == 1 {
        consecutive_weights[m / 2]
    } else {
        0.5 * (consecutive_weights[m / 2 - 1] + consecutive_weights[m / 2])
    };
    let wv = params.velocity_ratio * median;
    for f in frames {
        if f.frame > 0 && by_frame.contains_key(&(f.frame - 1)) && by_frame.contains_key(&(f.frame + 1)) {
            out.push(PoseConstraint::velocity(f.frame, wv));
        }
    }
    out
}

/// Smoothed motion of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoseSequence {
    pub cluster: usize,
    pub reference_frame: u32,
    pub poses: BTreeMap<u32, Pose>,
    /// Inliers of the alignment that reached each frame.
    pub inliers: BTreeMap<u32, usize>,
    /// Member trajectory ids.
    pub members: Vec<u64>,
    /// Centroid of the member features at the reference frame, camera
    /// coordinates. Joint fits measure translations at this point.
    pub anchor: [f64; 3],
}

impl ClusterPoseSequence {
    pub fn pose(&self, frame: u32) -> Option<&Pose> {
        self.poses.get(&frame)
    }

    /// Writes `frame,qw,qx,qy,qz,tx,ty,tz,inliers` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,qw,qx,qy,qz,tx,ty,tz,inliers")?;
        for (frame, pose) in &self.poses {
            let q = pose.quaternion_components();
            let t = pose.translation();
            writeln!(
                out,
                "{frame},{},{},{},{},{},{},{},{}",
                q[0],
                q[1],
                q[2],
                q[3],
                t.x,
                t.y,
                t.z,
                self.inliers.get(frame).copied().unwrap_or(0)
            )?;
        }
        Ok(())
    }
}

/// Initial poses obtained by chaining measured deltas outward from
/// `reference` in breadth-first order. Frames not connected to the
/// reference receive no pose.
pub fn chain(constraints: &[PoseConstraint], cluster: usize, reference: u32) -> ClusterPoseSequence {
    let mut adjacency: BTreeMap<u32, Vec<(u32, Pose, usize)>> = BTreeMap::new();
    for c in constraints {
        let Some(d) = c.delta else { continue };
        let (a, b) = (c.frames[0], c.frames[1]);
        let w = c.weight as usize;
        adjacency.entry(a).or_default().push((b, d, w));
        adjacency.entry(b).or_default().push((a, d.inverse(), w));
    }
    let mut poses = BTreeMap::from([(reference, Pose::identity())]);
    let mut inliers = BTreeMap::new();
    let mut queue = VecDeque::from([reference]);
    while let Some(f) = queue.pop_front() {
        let base = poses[&f];
        for (g, d, w) in adjacency.get(&f).into_iter().flatten() {
            if !poses.contains_key(g) {
                poses.insert(*g, d.compose(&base));
                inliers.insert(*g, *w);
                queue.push_back(*g);
            }
        }
    }
    ClusterPoseSequence {
        cluster,
        reference_frame: reference,
        poses,
        inliers,
        members: Vec::new(),
        anchor: [0.0; 3],
    }
}

fn twist_vector(t: &Twist) -> Vector6<f64> {
    Vector6::new(
        t.rotation.x,
        t.rotation.y,
        t.rotation.z,
        t.translation.x,
        t.translation.y,
        t.translation.z,
    )
}

fn vector_twist(v: &[f64]) -> Twist {
    Twist {
        rotation: Vector3::new(v[0], v[1], v[2]),
        translation: Vector3::new(v[3], v[4], v[5]),
    }
}

fn residual(c: &PoseConstraint, x: &[Pose]) -> Vector6<f64> {
    let r = match c.delta {
        Some(d) => d.inverse().compose(&x[1]).compose(&x[0].inverse()),
        None => relative(&x[0], &x[1]).inverse().compose(&relative(&x[1], &x[2])),
    };
    twist_vector(&r.log())
}

/// Weighted squared residual norm of all constraints whose frames have poses.
pub fn constraint_cost(constraints: &[PoseConstraint], seq: &ClusterPoseSequence) -> f64 {
    constraints
        .iter()
        .filter_map(|c| {
            let x: Option<Vec<Pose>> = c.frames.iter().map(|f| seq.poses.get(f).copied()).collect();
            x.map(|x| c.weight * residual(c, &x).norm_squared())
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimization {
    pub sequence: ClusterPoseSequence,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// False when the iteration limit was hit first.
    pub converged: bool,
}

/// Gauss-Newton over left tangent increments `x ← exp(δ) ⊕ x`, holding the
/// reference pose fixed. Each step is halved until the cost does not
/// increase, so the returned cost never exceeds the initial one.
pub fn optimize(constraints: &[PoseConstraint], initial: &ClusterPoseSequence, max_iterations: usize) -> Optimization {
    let frames: Vec<u32> = initial.poses.keys().copied().collect();
    let slot: HashMap<u32, usize> = frames.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    // Variable index per frame; the reference has none.
    let mut var = vec![None; frames.len()];
    let mut n = 0;
    for (i, f) in frames.iter().enumerate() {
        if *f != initial.reference_frame {
            var[i] = Some(n);
            n += 1;
        }
    }
    let active: Vec<(&PoseConstraint, Vec<usize>)> = constraints
        .iter()
        .filter_map(|c| {
            let s: Option<Vec<usize>> = c.frames.iter().map(|f| slot.get(f).copied()).collect();
            s.map(|s| (c, s))
        })
        .collect();

    let mut x: Vec<Pose> = frames.iter().map(|f| initial.poses[f]).collect();
    let cost_of = |x: &[Pose]| -> f64 {
        active
            .iter()
            .map(|(c, s)| {
                let p: Vec<Pose> = s.iter().map(|&i| x[i]).collect();
                c.weight * residual(c, &p).norm_squared()
            })
            .sum()
    };
    let initial_cost = cost_of(&x);
    let mut cost = initial_cost;
    let mut iterations = 0;
    let mut converged = n == 0 || cost == 0.0;
    const H: f64 = 1e-6;

    while !converged && iterations < max_iterations {
        iterations += 1;
        let dim = 6 * n;
        let mut blocks: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
        let mut g = DVector::zeros(dim);
        for (c, s) in &active {
            let p: Vec<Pose> = s.iter().map(|&i| x[i]).collect();
            let r = residual(c, &p);
            let mut jac: Vec<(usize, nalgebra::Matrix6<f64>)> = Vec::new();
            for (k, &i) in s.iter().enumerate() {
                let Some(v) = var[i] else { continue };
                let mut j = nalgebra::Matrix6::zeros();
                for d in 0..6 {
                    let mut e = [0.0; 6];
                    e[d] = H;
                    let mut plus = p.clone();
                    plus[k] = Pose::exp(&vector_twist(&e)).compose(&p[k]);
                    e[d] = -H;
                    let mut minus = p.clone();
                    minus[k] = Pose::exp(&vector_twist(&e)).compose(&p[k]);
                    let col = (residual(c, &plus) - residual(c, &minus)) / (2.0 * H);
                    j.set_column(d, &col);
                }
                jac.push((v, j));
            }
            for (a, ja) in &jac {
                let ga = ja.transpose() * r * c.weight;
                g.rows_mut(6 * a, 6).add_assign(&ga);
                for (b, jb) in &jac {
                    if b < a {
                        continue;
                    }
                    let block = ja.transpose() * jb * c.weight;
                    blocks
                        .entry((*a, *b))
                        .and_modify(|m| *m += &block)
                        .or_insert_with(|| DMatrix::from_iterator(6, 6, block.iter().copied()));
                }
            }
        }

        let mut coo = CooMatrix::new(dim, dim);
        for ((a, b), m) in &blocks {
            for r in 0..6 {
                for c in 0..6 {
                    let mut v = m[(r, c)];
                    if a == b && r == c {
                        v += 1e-9 * v.abs().max(1e-9);
                    }
                    coo.push(6 * a + r, 6 * b + c, v);
                    if a != b {
                        coo.push(6 * b + c, 6 * a + r, v);
                    }
                }
            }
        }
        let h = CscMatrix::from(&coo);
        let Ok(chol) = CscCholesky::factor(&h) else {
            warn!("cluster {}: normal equations are singular", initial.cluster);
            break;
        };
        let rhs = DMatrix::from_column_slice(dim, 1, (-&g).as_slice());
        let step = chol.solve(&rhs);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<Pose> = x
                .iter()
                .zip(&var)
                .map(|(p, v)| match v {
                    Some(v) => {
                        let d: Vec<f64> = (0..6).map(|k| alpha * step[(6 * v + k, 0)]).collect();
                        Pose::exp(&vector_twist(&d)).compose(p)
                    }
                    None => *p,
                })
                .collect();
            let c = cost_of(&trial);
            if c <= cost {
                accepted = Some((trial, c));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, new_cost)) = accepted else {
            converged = true;
            break;
        };
        let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        x = trial;
        cost = new_cost;
        if cost == 0.0 || decrease < MIN_RELATIVE_DECREASE {
            converged = true;
        }
    }
    if !converged {
        warn!(
            "cluster {}: pose graph stopped after {iterations} iterations without converging",
            initial.cluster
        );
    }

    let mut sequence = initial.clone();
    sequence.poses = frames.iter().copied().zip(x).collect();
    Optimization {
        sequence,
        initial_cost,
        final_cost: cost,
        iterations,
        converged,
    }
}

/// Runs frame sets → constraints → chaining → smoothing for every cluster.
///
/// The reference frame is the cluster's first frame with at least three
/// observed features. Clusters never reaching three features are dropped.
/// Each cluster draws its random samples from its own stream of `seed`, so
/// results do not depend on scheduling.
pub fn estimate_cluster_poses(
    demo: &Demonstration,
    assignment: &ClusterAssignment,
    params: &PoseGraphParams,
    seed: u64,
) -> Vec<ClusterPoseSequence> {
    let clusters: Vec<usize> = assignment.clusters.keys().copied().collect();
    clusters
        .par_iter()
        .filter_map(|&c| {
            let sets = frame_sets(demo, assignment, c);
            let Some(first) = sets.iter().find(|s| s.len() >= 3) else {
                warn!("cluster {c}: never has three features in one frame, dropped");
                return None;
            };
            let reference = first.frame;
            let first_len = first.len();
            // Work about the reference centroid: rotation errors then stay
            // decoupled from translations in the tangent coordinates.
            let centroid = first.positions.iter().sum::<Vector3<f64>>() / first_len as f64;
            let sets: Vec<ClusterFrameSet> = sets
                .into_iter()
                .map(|mut s| {
                    s.positions.iter_mut().for_each(|p| *p -= centroid);
                    s
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let constraints = build_constraints(&sets, params, &mut rng);
            let mut initial = chain(&constraints, c, reference);
            initial.inliers.insert(reference, first_len);
            initial.members = assignment.clusters[&c].clone();
            initial.anchor = centroid.into();
            let mut sequence = optimize(&constraints, &initial, params.max_iterations).sequence;
            let shift = Pose::from_translation(centroid);
            let back = shift.inverse();
            for x in sequence.poses.values_mut() {
                *x = shift.compose(x).compose(&back);
            }
            Some(sequence)
        })
        .collect()
}
