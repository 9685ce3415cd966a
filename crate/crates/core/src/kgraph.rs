//! Kinematic trees over clusters: structure selection by minimum spanning
//! tree over BIC costs, prediction, persistence, and evaluation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::demo::GroundTruth;
use crate::error::{Error, Result};
use crate::geom::{relative, Pose};
use crate::joints::{model_fit_error, select_model, JointKind, JointModel, JointParams, NoiseModel, RelativePoseSequence};
use crate::pipeline::LearnParams;
use crate::posegraph::ClusterPoseSequence;

/// An oriented tree edge: `x_child = x_parent ⊕ A_p ⊕ Δ(q) ⊕ A_c⁻¹`,
/// `A` being translations to the part anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub model: JointModel,
    /// BIC of the rigid, prismatic, and revolute fits.
    pub bic: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicGraph {
    pub object: String,
    pub root: usize,
    /// One part per cluster, ordered by cluster id.
    pub parts: Vec<ClusterPoseSequence>,
    /// Tree edges in breadth-first order from the root.
    pub edges: Vec<Edge>,
}

/// Model selection for one unordered pair of clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScore {
    pub a: usize,
    pub b: usize,
    pub kind: JointKind,
    pub cost: f64,
    pub bic: [f64; 3],
    pub frames: usize,
}

/// A graph together with the scores of every candidate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBuild {
    pub graph: KinematicGraph,
    pub pairs: Vec<PairScore>,
}

/// Kruskal's algorithm on `k` vertices. Edges `(a, b, cost)` are taken in
/// order of cost, then of `(min, max)` vertex pair, then of position.
/// Returns the indices of the chosen edges, or `None` when the graph is
/// disconnected.
pub fn minimum_spanning_tree(k: usize, edges: &[(usize, usize, f64)]) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let key = |i: usize| {
        let (a, b, _) = edges[i];
        (a.min(b), a.max(b))
    };
    order.sort_by(|&i, &j| edges[i].2.total_cmp(&edges[j].2).then(key(i).cmp(&key(j))).then(i.cmp(&j)));
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut chosen = Vec::new();
    for i in order {
        let (a, b, _) = edges[i];
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            chosen.push(i);
        }
    }
    (chosen.len() + 1 == k || k == 0).then_some(chosen)
}

/// Selects a joint model for every pair of clusters sharing at least three
/// posed frames, keeps the minimum spanning tree over their BIC, and
/// orients it away from the lowest cluster id. Tree edges whose
/// orientation differs from the scored `(lower, higher)` pair are refitted
/// in the tree direction.
pub fn build_graph(object: &str, sequences: &[ClusterPoseSequence], noise: &NoiseModel) -> Result<GraphBuild> {
    noise.validate()?;
    if sequences.is_empty() {
        return Err(Error::EmptyInput("no cluster pose sequences"));
    }
    let mut parts = sequences.to_vec();
    parts.sort_by_key(|p| p.cluster);
    let k = parts.len();
    if k == 1 {
        warn!("a single part: the kinematic graph has no edges");
    }

    let mut pairs = Vec::new();
    let mut models = BTreeMap::new();
    for i in 0..k {
        for j in i + 1..k {
            let seq = RelativePoseSequence::from_sequences(&parts[i], &parts[j]);
            if seq.len() < 3 {
                continue;
            }
            let sel = select_model(&seq, noise)?;
            let bic = [sel.candidates[0].bic, sel.candidates[1].bic, sel.candidates[2].bic];
            pairs.push(PairScore {
                a: parts[i].cluster,
                b: parts[j].cluster,
                kind: sel.chosen.kind(),
                cost: sel.chosen.bic,
                bic,
                frames: seq.len(),
            });
            models.insert((i, j), (sel.chosen, bic));
        }
    }

    let index: BTreeMap<usize, usize> = parts.iter().enumerate().map(|(i, p)| (p.cluster, i)).collect();
    let weighted: Vec<(usize, usize, f64)> = pairs.iter().map(|p| (index[&p.a], index[&p.b], p.cost)).collect();
    let tree = minimum_spanning_tree(k, &weighted).ok_or(Error::DisconnectedParts { parts: k })?;

    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for &e in &tree {
        let (a, b, _) = weighted[e];
        adjacent[a].insert(b);
        adjacent[b].insert(a);
    }
    let mut edges = Vec::new();
    let mut seen = vec![false; k];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(p) = queue.pop_front() {
        for &c in &adjacent[p] {
            if seen[c] {
                continue;
            }
            seen[c] = true;
            queue.push_back(c);
            let (model, bic) = if p < c {
                models[&(p, c)].clone()
            } else {
                let seq = RelativePoseSequence::from_sequences(&parts[p], &parts[c]);
                let sel = select_model(&seq, noise)?;
                let bic = [sel.candidates[0].bic, sel.candidates[1].bic, sel.candidates[2].bic];
                (sel.chosen, bic)
            };
            edges.push(Edge {
                parent: parts[p].cluster,
                child: parts[c].cluster,
                model,
                bic,
            });
        }
    }

    Ok(GraphBuild {
        graph: KinematicGraph {
            object: object.to_string(),
            root: parts[0].cluster,
            parts,
            edges,
        },
        pairs,
    })
}

fn anchor(p: &ClusterPoseSequence) -> Pose {
    Pose::from_translation(Vector3::from(p.anchor))
}

/// Poses predicted for every part.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub poses: BTreeMap<usize, Pose>,
    /// Edges whose configuration lies outside the range seen in training.
    pub extrapolated: Vec<(usize, usize)>,
}

impl KinematicGraph {
    pub fn part(&self, cluster: usize) -> Option<&ClusterPoseSequence> {
        self.parts.iter().find(|p| p.cluster == cluster)
    }

    /// Checks that the edges form a tree over the parts rooted at `root`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let ids: BTreeSet<usize> = self.parts.iter().map(|p| p.cluster).collect();
        if ids.len() != self.parts.len() {
            return Err("repeated part id".into());
        }
        if !ids.contains(&self.root) {
            return Err(format!("root {} is not a part", self.root));
        }
        if self.edges.len() + 1 != self.parts.len() {
            return Err(format!("{} edges cannot span {} parts", self.edges.len(), self.parts.len()));
        }
        let mut reached = BTreeSet::from([self.root]);
        for e in &self.edges {
            if !reached.contains(&e.parent) || !ids.contains(&e.child) || !reached.insert(e.child) {
                return Err(format!("edge ({}, {}) breaks the tree", e.parent, e.child));
            }
        }
        Ok(())
    }

    /// Root at `base_pose`, every child at its parent composed with the
    /// joint prediction. Non-rigid edges need a configuration.
    pub fn predict(&self, configurations: &BTreeMap<(usize, usize), f64>, base_pose: &Pose) -> Result<Prediction> {
        let mut poses = BTreeMap::from([(self.root, *base_pose)]);
        let mut extrapolated = Vec::new();
        for e in &self.edges {
            let q = match e.model.kind() {
                JointKind::Rigid => 0.0,
                _ => *configurations
                    .get(&(e.parent, e.child))
                    .ok_or(Error::MissingConfiguration(e.parent, e.child))?,
            };
            if let Some((lo, hi)) = e.model.q_range() {
                let slack = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
                if q < lo - slack || q > hi + slack {
                    extrapolated.push((e.parent, e.child));
                }
            }
            let (p, c) = (self.part(e.parent).expect("validated"), self.part(e.child).expect("validated"));
            let pose = poses[&e.parent]
                .compose(&anchor(p))
                .compose(&e.model.predict(q))
                .compose(&anchor(c).inverse());
            poses.insert(e.child, pose);
        }
        Ok(Prediction { poses, extrapolated })
    }

    /// Relative poses of an edge over the training frames.
    pub fn edge_sequence(&self, edge: &Edge) -> RelativePoseSequence {
        RelativePoseSequence::from_sequences(
            self.part(edge.parent).expect("edge parent"),
            self.part(edge.child).expect("edge child"),
        )
    }

    /// Axis direction and a point on it, camera coordinates at the parent's
    /// reference frame. `None` for rigid edges.
    pub fn edge_axis(&self, edge: &Edge) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let p = Vector3::from(self.part(edge.parent)?.anchor);
        match &edge.model.params {
            JointParams::Rigid { .. } => None,
            JointParams::Prismatic { base, axis } => Some((Vector3::from(*axis), base.translation() + p)),
            JointParams::Revolute { axis, center, .. } => Some((Vector3::from(*axis), Vector3::from(*center) + p)),
        }
    }
}

pub const DB_SCHEMA: u32 = 1;

/// Where a stored model came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub demo: String,
    pub frames: usize,
    pub seed: u64,
    pub params: LearnParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbEntry {
    pub graph: KinematicGraph,
    pub provenance: Provenance,
    /// Opaque slot for an appearance descriptor used by retrieval front-ends.
    #[serde(default)]
    pub appearance: Option<serde_json::Value>,
}

/// Learned models keyed by object id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelDatabase {
    pub objects: BTreeMap<String, DbEntry>,
}

#[derive(Serialize, Deserialize)]
struct DbFile {
    schema: u32,
    objects: BTreeMap<String, DbEntry>,
}

impl ModelDatabase {
    pub fn insert(&mut self, entry: DbEntry) -> Result<()> {
        let id = entry.graph.object.clone();
        if self.objects.contains_key(&id) {
            return Err(Error::DuplicateObject(id));
        }
        self.objects.insert(id, entry);
        Ok(())
    }

    pub fn get(&self, object: &str) -> Result<&DbEntry> {
        self.objects.get(object).ok_or_else(|| Error::UnknownObject(object.to_string()))
    }
}

pub fn save_db(db: &ModelDatabase, path: &Path) -> Result<()> {
    let file = DbFile {
        schema: DB_SCHEMA,
        objects: db.objects.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_db(path: &Path) -> Result<ModelDatabase> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    match value.get("schema").and_then(|s| s.as_u64()) {
        Some(s) if s == DB_SCHEMA as u64 => {}
        Some(s) => {
            return Err(Error::SchemaVersionMismatch {
                expected: DB_SCHEMA,
                found: s as u32,
            })
        }
        None => return Err(Error::parse(1, "model database lacks a schema version")),
    }
    let file: DbFile = serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    for (id, entry) in &file.objects {
        if *id != entry.graph.object {
            return Err(Error::parse(0, format!("entry '{id}' holds object '{}'", entry.graph.object)));
        }
        entry
            .graph
            .validate()
            .map_err(|m| Error::parse(0, format!("object '{id}': {m}")))?;
    }
    Ok(ModelDatabase { objects: file.objects })
}

/// Pose errors of one part against ground truth, measured at its anchor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartReport {
    pub part: usize,
    pub truth: usize,
    pub truth_name: String,
    pub frames: usize,
    pub mean_translation: f64,
    pub mean_rotation_deg: f64,
    pub rmse_translation: f64,
    pub rmse_rotation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeReport {
    pub parent: usize,
    pub child: usize,
    pub kind: JointKind,
    /// Kind of the ground-truth joint between the matched parts; rigid when
    /// both map to the same part, `None` when they are not adjacent.
    pub expected: Option<JointKind>,
    pub type_correct: bool,
    pub axis_angle_deg: Option<f64>,
    /// Distance from the fitted axis point to the true axis line (revolute).
    pub axis_offset: Option<f64>,
    pub fit_translation: f64,
    pub fit_rotation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub object: String,
    pub parts: Vec<PartReport>,
    pub edges: Vec<EdgeReport>,
    /// Trajectories whose cluster is matched to another ground-truth part.
    pub mislabels: usize,
    /// Ground-truth parts no cluster is matched to.
    pub missing_parts: usize,
    pub mean_translation: f64,
    pub mean_rotation_deg: f64,
    pub success: bool,
}

pub const SUCCESS_TRANSLATION: f64 = 0.10;
pub const SUCCESS_ROTATION_DEG: f64 = 25.0;

fn line_distance(point: &Vector3<f64>, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
    let v = point - origin;
    (v - dir * v.dot(dir)).norm()
}

/// Compares a learned graph with the generator's ground truth.
///
/// Each cluster is matched to the ground-truth part holding most of its
/// members; when several clusters match one part, the largest keeps it and
/// the others count as mislabeled. Part poses are compared with the true
/// motion since the part's reference frame. Success requires every
/// ground-truth part to be matched and mean errors below 10 cm and 25°.
pub fn evaluate(graph: &KinematicGraph, truth: &GroundTruth) -> Report {
    let mut matched: BTreeMap<usize, usize> = BTreeMap::new();
    let mut votes_of: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut mislabels = 0;
    for p in &graph.parts {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for id in &p.members {
            if let Some(l) = truth.labels.get(id) {
                *votes.entry(*l).or_default() += 1;
            }
        }
        let (label, count) = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, c)| (*l, *c))
            .unwrap_or((0, 0));
        mislabels += p.members.len() - count;
        matched.insert(p.cluster, label);
        votes_of.insert(p.cluster, (label, count));
    }
    // Duplicate matches: only the largest cluster keeps the part.
    let mut owner: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (cluster, (label, count)) in &votes_of {
        match owner.get(label) {
            Some((_, best)) if *best >= *count => mislabels += count,
            Some((other, best)) => {
                mislabels += best;
                let _ = other;
                owner.insert(*label, (*cluster, *count));
            }
            None => {
                owner.insert(*label, (*cluster, *count));
            }
        }
    }
    let missing_parts = (0..truth.part_count()).filter(|l| !owner.contains_key(l)).count();

    let mut parts = Vec::new();
    let (mut sum_t, mut sum_r, mut n_all) = (0.0, 0.0, 0usize);
    for p in &graph.parts {
        let label = matched[&p.cluster];
        let a = Vector3::from(p.anchor);
        let Some(g0) = truth.part_poses.get(label).and_then(|s| s.get(p.reference_frame as usize)) else {
            continue;
        };
        let g0_inv = g0.inverse();
        let (mut st, mut sr, mut st2, mut sr2, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (f, x) in &p.poses {
            let Some(g) = truth.part_poses[label].get(*f as usize) else { continue };
            let motion = g.compose(&g0_inv);
            let dt = (x.transform_point(&a) - motion.transform_point(&a)).norm();
            let dr = relative(x, &motion).angle().to_degrees();
            st += dt;
            sr += dr;
            st2 += dt * dt;
            sr2 += dr * dr;
            n += 1;
        }
        if n == 0 {
            continue;
        }
        sum_t += st;
        sum_r += sr;
        n_all += n;
        let nf = n as f64;
        parts.push(PartReport {
            part: p.cluster,
            truth: label,
            truth_name: truth.part_names.get(label).cloned().unwrap_or_default(),
            frames: n,
            mean_translation: st / nf,
            mean_rotation_deg: sr / nf,
            rmse_translation: (st2 / nf).sqrt(),
            rmse_rotation_deg: (sr2 / nf).sqrt(),
        });
    }

    let mut edges = Vec::new();
    for e in &graph.edges {
        let (lp, lc) = (matched[&e.parent], matched[&e.child]);
        let joint = truth
            .joints
            .iter()
            .find(|j| (j.parent, j.child) == (lp, lc) || (j.parent, j.child) == (lc, lp));
        let expected = if lp == lc {
            Some(JointKind::Rigid)
        } else {
            joint.map(|j| j.kind)
        };
        let kind = e.model.kind();
        let type_correct = expected == Some(kind);
        let (mut axis_angle_deg, mut axis_offset) = (None, None);
        if let (true, Some(j), Some((dir, point))) = (type_correct, joint, graph.edge_axis(e)) {
            let reference = graph.part(e.parent).map_or(0, |p| p.reference_frame) as usize;
            if let Some(g) = truth.part_poses.get(j.parent).and_then(|s| s.get(reference)) {
                let true_dir = g.rotate_vector(&Vector3::from(j.axis)).normalize();
                let true_origin = g.transform_point(&Vector3::from(j.origin));
                let cos = dir.normalize().dot(&true_dir).abs().min(1.0);
                axis_angle_deg = Some(cos.acos().to_degrees());
                if kind == JointKind::Revolute {
                    axis_offset = Some(line_distance(&point, &true_origin, &true_dir));
                }
            }
        }
        let (fit_translation, fit_rotation_deg) = model_fit_error(&e.model, &graph.edge_sequence(e));
        edges.push(EdgeReport {
            parent: e.parent,
            child: e.child,
            kind,
            expected,
            type_correct,
            axis_angle_deg,
            axis_offset,
            fit_translation,
            fit_rotation_deg,
        });
    }

    let n = n_all.max(1) as f64;
    let (mean_translation, mean_rotation_deg) = (sum_t / n, sum_r / n);
    Report {
        object: graph.object.clone(),
        parts,
        edges,
        mislabels,
        missing_parts,
        mean_translation,
        mean_rotation_deg,
        success: missing_parts == 0
            && n_all > 0
            && mean_translation < SUCCESS_TRANSLATION
            && mean_rotation_deg < SUCCESS_ROTATION_DEG,
    }
}
