//! Learns every catalog object from a generated demonstration and prints the
//! evaluation against ground truth.

use std::time::Instant;

use artikin::demo::{catalog_names, default_spec, generate};
use artikin::kgraph::evaluate;
use artikin::pipeline::{learn, LearnParams};

fn main() {
    let arg = |i: usize| std::env::args().nth(i);
    let noise: f64 = arg(1).and_then(|a| a.parse().ok()).unwrap_or(0.0);
    let frames: usize = arg(2).and_then(|a| a.parse().ok()).unwrap_or(900);
    let seed: u64 = arg(3).and_then(|a| a.parse().ok()).unwrap_or(1);
    let dropout: f64 = arg(4).and_then(|a| a.parse().ok()).unwrap_or(if noise == 0.0 { 0.0 } else { 0.02 });
    for name in catalog_names() {
        let mut spec = default_spec(name).unwrap().with_noise(noise);
        spec.dropout_prob = dropout;
        let demo = generate(&spec, frames, seed).unwrap();
        let start = Instant::now();
        let learned = match learn(name, &demo, &LearnParams::default(), seed) {
            Ok(l) => l,
            Err(e) => {
                println!("{name}: {e}");
                continue;
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let r = evaluate(&learned.build.graph, demo.ground_truth.as_ref().unwrap());
        println!(
            "{name}: {:.1}s mislabels {} missing {} mean {:.2} cm {:.2} deg success {}",
            elapsed,
            r.mislabels,
            r.missing_parts,
            r.mean_translation * 100.0,
            r.mean_rotation_deg,
            r.success
        );
        for e in &r.edges {
            let bic = learned.build.graph.edges.iter().find(|g| g.parent == e.parent && g.child == e.child).unwrap().bic;
            println!(
                "  ({},{}) {} expected {:?} axis {:?} deg offset {:?} m fit {:.3} cm {:.3} deg bic {:.1} {:.1} {:.1}",
                e.parent,
                e.child,
                e.kind,
                e.expected,
                e.axis_angle_deg,
                e.axis_offset,
                e.fit_translation * 100.0,
                e.fit_rotation_deg,
                bic[0],
                bic[1],
                bic[2]
            );
        }
    }
}
