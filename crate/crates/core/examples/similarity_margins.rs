//! Prints, for every catalog object, similarity margins between parts and
//! the DBSCAN outcome on a generated demonstration.

use artikin::demo::{catalog_names, default_spec, generate};
use artikin::segment::{cluster, pair_statistics, similarity_matrix, DbscanParams, Label, Metric, SimilarityParams};

fn main() {
    let noise: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.0);
    let frames: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(900);
    let seed: u64 = std::env::args().nth(3).and_then(|a| a.parse().ok()).unwrap_or(1);
    for name in catalog_names() {
        let spec = default_spec(name).unwrap().with_noise(noise);
        let demo = generate(&spec, frames, seed).unwrap();
        let gt = demo.ground_truth.as_ref().unwrap();
        let m = similarity_matrix(&demo, &SimilarityParams::default());
        let (mut within, mut cross) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut bad = 0;
        let mut bad_overlap = usize::MAX;
        let mut worst_long = f64::NEG_INFINITY;
        for i in 0..m.len() {
            for j in 0..i {
                let Some(l) = m.get(i, j) else { continue };
                let (a, b) = (m.ids()[i], m.ids()[j]);
                if gt.labels[&a] == gt.labels[&b] {
                    within = within.min(l);
                } else {
                    cross = cross.max(l);
                    let t = pair_statistics(demo.trajectory(a).unwrap(), demo.trajectory(b).unwrap(), Metric::Position).overlap;
                    if l >= 0.8 {
                        bad += 1;
                        bad_overlap = bad_overlap.min(t);
                    }
                    if t >= 100 {
                        worst_long = worst_long.max(l);
                    }
                }
            }
        }
        let a = cluster(&m, &DbscanParams::default());
        let mut mislabels = 0;
        for (cid, members) in &a.clusters {
            let mut counts = std::collections::BTreeMap::new();
            for id in members {
                *counts.entry(gt.labels[id]).or_insert(0) += 1;
            }
            let major = counts.values().max().unwrap();
            mislabels += members.len() - major;
            let _ = cid;
        }
        let noise_pts = a.labels.values().filter(|l| **l == Label::Noise).count();
        println!(
            "{name:>10}: n={} within≥{within:.4} cross≤{cross:.4} cross≥0.8: {bad} (min overlap {bad_overlap}) long-overlap cross≤{worst_long:.4} | clusters {} noise {noise_pts} mislabels {mislabels}",
            m.len(),
            a.cluster_count()
        );
    }
}
