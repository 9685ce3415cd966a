//! Per-cluster pose error against ground truth for every catalog object.
//! Arguments: noise (m), frames, seed.

use std::time::Instant;

use artikin::demo::{catalog_names, default_spec, generate};
use artikin::posegraph::{estimate_cluster_poses, PoseGraphParams};
use artikin::segment::{cluster, similarity_matrix, DbscanParams, SimilarityParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).map_or(0.005, |s| s.parse().unwrap());
    let frames: usize = args.get(2).map_or(900, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(1, |s| s.parse().unwrap());
    let mut params = PoseGraphParams::default();
    if let Some(v) = args.get(4) { params.inlier_threshold = v.parse().unwrap(); }
    if let Some(v) = args.get(5) { params.sparse_stride = v.parse().unwrap(); }
    if let Some(v) = args.get(6) { params.velocity_ratio = v.parse().unwrap(); }
    if let Some(v) = args.get(7) { params.max_iterations = v.parse().unwrap(); }
    for name in catalog_names() {
        let spec = default_spec(name).unwrap().with_noise(noise);
        let demo = generate(&spec, frames, seed).unwrap();
        let gt = demo.ground_truth.as_ref().unwrap();
        let start = Instant::now();
        let m = similarity_matrix(&demo, &SimilarityParams::default());
        let t_sim = start.elapsed();
        let a = cluster(&m, &DbscanParams::default());
        let seqs = estimate_cluster_poses(&demo, &a, &params, seed);
        let t_all = start.elapsed();
        print!("{name:>10}: sim {:.2}s total {:.2}s |", t_sim.as_secs_f64(), t_all.as_secs_f64());
        for s in &seqs {
            let part = gt.labels[&s.members[0]];
            let t0 = s.reference_frame as usize;
            let g0 = gt.part_poses[part][t0];
            let pts: Vec<_> = s
                .members
                .iter()
                .filter_map(|id| demo.trajectory(*id).unwrap().at(t0 as u32).map(|o| o.position))
                .collect();
            let c = pts.iter().sum::<nalgebra::Vector3<f64>>() / pts.len() as f64;
            let (mut st, mut sa, mut mt, mut ma) = (0.0, 0.0, 0.0f64, 0.0f64);
            for (f, x) in &s.poses {
                let truth = gt.part_poses[part][*f as usize].compose(&g0.inverse());
                let dt = (x.transform_point(&c) - truth.transform_point(&c)).norm();
                let da = artikin::geom::relative(x, &truth).angle().to_degrees();
                st += dt;
                sa += da;
                mt = mt.max(dt);
                ma = ma.max(da);
            }
            let n = s.poses.len() as f64;
            print!(
                " part{part} n={} mean {:.2}cm/{:.2}° max {:.2}cm/{:.2}° |",
                s.poses.len(),
                100.0 * st / n,
                sa / n,
                100.0 * mt,
                ma
            );
        }
        println!();
    }
}
