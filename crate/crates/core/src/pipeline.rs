//! Demonstration to kinematic graph in one call.

use serde::{Deserialize, Serialize};

use crate::demo::Demonstration;
use crate::error::{Error, Result};
use crate::joints::NoiseModel;
use crate::kgraph::{build_graph, GraphBuild};
use crate::posegraph::{estimate_cluster_poses, ClusterPoseSequence, PoseGraphParams};
use crate::segment::{cluster, similarity_matrix, ClusterAssignment, DbscanParams, SimilarityMatrix, SimilarityParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnParams {
    pub similarity: SimilarityParams,
    pub dbscan: DbscanParams,
    pub posegraph: PoseGraphParams,
    pub noise: NoiseModel,
}

/// Every intermediate product of [`learn`].
#[derive(Clone, Debug)]
pub struct Learned {
    pub similarity: SimilarityMatrix,
    pub assignment: ClusterAssignment,
    pub sequences: Vec<ClusterPoseSequence>,
    pub build: GraphBuild,
}

/// Segments the demonstration, estimates a pose sequence per cluster and
/// selects the kinematic tree.
pub fn learn(object: &str, demo: &Demonstration, params: &LearnParams, seed: u64) -> Result<Learned> {
    params.noise.validate()?;
    let similarity = similarity_matrix(demo, &params.similarity);
    let assignment = cluster(&similarity, &params.dbscan);
    if assignment.cluster_count() < 2 {
        return Err(Error::TooFewClusters {
            found: assignment.cluster_count(),
        });
    }
    let sequences = estimate_cluster_poses(demo, &assignment, &params.posegraph, seed);
    if sequences.len() < 2 {
        return Err(Error::TooFewClusters { found: sequences.len() });
    }
    let build = build_graph(object, &sequences, &params.noise)?;
    Ok(Learned {
        similarity,
        assignment,
        sequences,
        build,
    })
}
