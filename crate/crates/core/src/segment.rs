//! Motion segmentation of feature trajectories.
//!
//! Two trajectories on the same rigid body keep a constant distance (and a
//! constant angle between their normals) over the frames they share. The
//! similarity of a pair is
//!
//! ```text
//! L(a, b) = (1/T) Σ_{t ∈ tₐ ∩ t_b} exp(−γ (d(a_t, b_t) − μ_d)²)
//! ```
//!
//! where `μ_d` is the mean of `d` over the `T` common frames. It is
//! evaluated once with the Euclidean distance between positions and once
//! with `1 − nₐ·n_b` between normals; the two are multiplied. Trajectories
//! are then grouped by DBSCAN over `1 − L`.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demo::{Demonstration, FeatureTrajectory};

/// How the positional and normal similarities are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Product,
    Positional,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Positional bandwidth, 1/m².
    pub gamma_pos: f64,
    /// Normal bandwidth, dimensionless.
    pub gamma_normal: f64,
    /// Pairs sharing fewer frames than this are left undefined.
    pub min_overlap: usize,
    pub combine: Combine,
}

/// `(1 / 2 cm)²`: the positional bandwidth, squared to match the squared
/// length in the exponent.
pub const DEFAULT_GAMMA_POS: f64 = 2500.0;

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            gamma_pos: DEFAULT_GAMMA_POS,
            gamma_normal: 1.0 / 15f64.to_radians().cos(),
            min_overlap: 10,
            combine: Combine::Product,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighborhood radius on `1 − L`.
    pub eps: f64,
    /// Neighbors (the point itself included) needed for a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.2, min_pts: 5 }
    }
}

/// Per-frame distances of a trajectory pair over their common frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PairStatistics {
    pub overlap: usize,
    pub mean_distance: f64,
    pub samples: Vec<f64>,
}

impl PairStatistics {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let overlap = samples.len();
        let mean_distance = if overlap == 0 {
            0.0
        } else {
            samples.iter().sum::<f64>() / overlap as f64
        };
        PairStatistics {
            overlap,
            mean_distance,
            samples,
        }
    }

    /// `(1/T) Σ exp(−γ (d − μ_d)²)`; `None` for an empty overlap.
    pub fn kernel(&self, gamma: f64) -> Option<f64> {
        if self.overlap == 0 {
            return None;
        }
        let sum: f64 = self
            .samples
            .iter()
            .map(|d| {
                let r = d - self.mean_distance;
                (-gamma * r * r).exp()
            })
            .sum();
        Some(sum / self.overlap as f64)
    }
}

/// Which per-frame distance a pair statistic is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// `‖pₐ − p_b‖`, meters.
    Position,
    /// `1 − nₐ·n_b`.
    Normal,
}

fn metric_value(metric: Metric, a: &crate::demo::FeatureObservation, b: &crate::demo::FeatureObservation) -> f64 {
    match metric {
        Metric::Position => (a.position - b.position).norm(),
        Metric::Normal => 1.0 - a.normal.dot(&b.normal),
    }
}

/// Distances over the frames both trajectories observe.
pub fn pair_statistics(a: &FeatureTrajectory, b: &FeatureTrajectory, metric: Metric) -> PairStatistics {
    let mut samples = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (oa, ob) = (&a.observations, &b.observations);
    while i < oa.len() && j < ob.len() {
        match oa[i].frame.cmp(&ob[j].frame) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                samples.push(metric_value(metric, &oa[i], &ob[j]));
                i += 1;
                j += 1;
            }
        }
    }
    PairStatistics::from_samples(samples)
}

/// Similarity of two trajectories in `(0, 1]`, or `None` when they share
/// fewer than `min_overlap` frames.
pub fn pair_similarity(a: &FeatureTrajectory, b: &FeatureTrajectory, params: &SimilarityParams) -> Option<f64> {
    let pos = pair_statistics(a, b, Metric::Position);
    if pos.overlap < params.min_overlap.max(1) {
        return None;
    }
    let positional = || pos.kernel(params.gamma_pos);
    let normal = || pair_statistics(a, b, Metric::Normal).kernel(params.gamma_normal);
    match params.combine {
        Combine::Positional => positional(),
        Combine::Normal => normal(),
        Combine::Product => Some(positional()? * normal()?),
    }
}

/// Symmetric similarity matrix over trajectories sorted by ascending id.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<u64>,
    values: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    /// Builds a matrix from row-major entries; the diagonal is forced to 1.
    ///
    /// Panics when `values` is not `ids.len()²` long.
    pub fn from_entries(ids: Vec<u64>, mut values: Vec<Option<f64>>) -> Self {
        let n = ids.len();
        assert_eq!(values.len(), n * n, "matrix must be square");
        for i in 0..n {
            values[i * n + i] = Some(1.0);
        }
        SimilarityMatrix { ids, values }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.ids.len() + j]
    }

    /// `1 − L`, infinite where undefined.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).map_or(f64::INFINITY, |l| 1.0 - l)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Writes the matrix as CSV with trajectory ids as header and first
    /// column; undefined entries are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "id")?;
        for id in &self.ids {
            write!(out, ",{id}")?;
        }
        writeln!(out)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(out, "{id}")?;
            for j in 0..self.len() {
                match self.get(i, j) {
                    Some(v) => write!(out, ",{v}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Pairwise similarities of every trajectory in the demonstration. Rows are
/// evaluated in parallel; each entry is a pure function of its pair.
pub fn similarity_matrix(demo: &Demonstration, params: &SimilarityParams) -> SimilarityMatrix {
    let mut order: Vec<&FeatureTrajectory> = demo.trajectories.iter().collect();
    order.sort_by_key(|t| t.id);
    let n = order.len();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if j > i { pair_similarity(order[i], order[j], params) } else { None })
                .collect()
        })
        .collect();
    let mut values = vec![None; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            values[i * n + j] = rows[i][j];
            values[j * n + i] = rows[i][j];
        }
    }
    SimilarityMatrix::from_entries(order.iter().map(|t| t.id).collect(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Noise,
    Cluster(usize),
}

/// Cluster membership of every trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<u64, Label>,
    pub clusters: BTreeMap<usize, Vec<u64>>,
}

impl ClusterAssignment {
    pub fn from_labels(labels: BTreeMap<u64, Label>) -> Self {
        let mut clusters: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (&id, label) in &labels {
            if let Label::Cluster(c) = label {
                clusters.entry(*c).or_default().push(id);
            }
        }
        ClusterAssignment { labels, clusters }
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.values().filter(|l| **l == Label::Noise).count()
    }

    /// Writes `trajectory_id,cluster` rows, with −1 for noise.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trajectory_id,cluster")?;
        for (id, label) in &self.labels {
            match label {
                Label::Cluster(c) => writeln!(out, "{id},{c}")?,
                Label::Noise => writeln!(out, "{id},-1")?,
            }
        }
        Ok(())
    }
}

/// DBSCAN over the distance `1 − L`, undefined pairs never being neighbors.
///
/// Points are visited in ascending trajectory id; clusters are numbered in
/// order of discovery, and a border point joins the first cluster that
/// reaches it.
pub fn cluster(matrix: &SimilarityMatrix, params: &DbscanParams) -> ClusterAssignment {
    let n = matrix.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| matrix.distance(i, j) <= params.eps).collect())
        .collect();
    let is_core = |i: usize| neighbors[i].len() >= params.min_pts;

    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut next = 0;
    for p in 0..n {
        if labels[p].is_some() {
            continue;
        }
        if !is_core(p) {
            labels[p] = Some(Label::Noise);
            continue;
        }
        let c = next;
        next += 1;
        labels[p] = Some(Label::Cluster(c));
        let mut queue: VecDeque<usize> = neighbors[p].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(Label::Cluster(_)) => continue,
                Some(Label::Noise) => labels[q] = Some(Label::Cluster(c)),
                None => {
                    labels[q] = Some(Label::Cluster(c));
                    if is_core(q) {
                        queue.extend(neighbors[q].iter().copied());
                    }
                }
            }
        }
    }

    ClusterAssignment::from_labels(
        matrix
            .ids()
            .iter()
            .zip(labels)
            .map(|(&id, l)| (id, l.unwrap_or(Label::Noise)))
            .collect(),
    )
}
