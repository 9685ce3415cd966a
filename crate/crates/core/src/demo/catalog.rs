//! Built-in household objects. Coordinates are in the camera frame
//! (x forward, y left, z up), meters and radians.
//!
//! Tracks persist for the whole demonstration and every joint keeps moving
//! throughout: a pair of tracks that only shares a motionless stretch looks
//! rigid whatever parts it belongs to.
//!
//! Feature-bearing faces stay at least 10 cm from every joint axis: a point
//! on the hinge line barely moves relative to the other part, so its pair
//! similarities cannot separate the two bodies.

use super::{Face, JointSpec, MotionProfile, ObjectSpec, PartSpec};
use crate::geom::Pose;
use crate::joints::JointKind;

const NAMES: [&str; 7] = ["door", "drawer", "fridge", "laptop", "microwave", "chair", "monitor"];

pub fn catalog_names() -> &'static [&'static str] {
    &NAMES
}

/// The full catalog, in the order of [`catalog_names`].
pub fn default_specs() -> Vec<ObjectSpec> {
    NAMES.iter().filter_map(|n| default_spec(n)).collect()
}

fn part(name: &str, faces: Vec<Face>) -> PartSpec {
    PartSpec {
        name: name.into(),
        faces,
    }
}

fn joint(
    parent: usize,
    child: usize,
    kind: JointKind,
    axis: [f64; 3],
    origin: [f64; 3],
    motion: MotionProfile,
) -> JointSpec {
    JointSpec {
        parent,
        child,
        kind,
        axis,
        origin,
        motion,
    }
}

fn object(name: &str, parts: Vec<PartSpec>, joints: Vec<JointSpec>) -> ObjectSpec {
    ObjectSpec {
        name: name.into(),
        base_pose: Pose::identity(),
        parts,
        joints,
        features_per_part: 40,
        noise_sigma_pos: 0.0,
        noise_sigma_normal: 0.0,
        dropout_prob: 0.02,
        track_lifetime: 0.0,
        frame_rate: 30.0,
    }
    .with_noise(0.005)
}

/// Looks up a catalog object by name.
pub fn default_spec(name: &str) -> Option<ObjectSpec> {
    let deg = f64::to_radians;
    let spec = match name {
        // Hinged door in a wall, swinging away from the camera.
        "door" => object(
            "door",
            vec![
                part(
                    "wall",
                    vec![
                        Face::new([2.0, 0.3, 0.5], [0.0, 0.0, 1.0], [0.0, 0.8, 0.0]),
                        Face::new([2.0, 0.3, 1.6], [0.4, 0.0, 0.0], [0.0, 0.8, 0.0]),
                    ],
                ),
                part(
                    "panel",
                    vec![Face::new([2.0, -0.9, 0.5], [0.0, 0.0, 1.0], [0.0, 0.6, 0.0])],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Revolute,
                [0.0, 0.0, 1.0],
                [2.0, 0.0, 0.0],
                MotionProfile::Ramp {
                    from: 0.0,
                    to: deg(90.0),
                },
            )],
        ),
        // Drawer pulled 40 cm out of a cabinet toward the camera.
        "drawer" => object(
            "drawer",
            vec![
                part(
                    "cabinet",
                    vec![
                        Face::new([2.05, -0.4, 0.95], [0.55, 0.0, 0.0], [0.0, 0.8, 0.0]),
                        Face::new([2.05, 0.45, 0.3], [0.55, 0.0, 0.0], [0.0, 0.0, 0.65]),
                    ],
                ),
                part(
                    "drawer",
                    vec![
                        Face::new([1.6, -0.35, 0.3], [0.0, 0.0, 0.25], [0.0, 0.7, 0.0]),
                        Face::new([1.65, -0.3, 0.6], [0.35, 0.0, 0.0], [0.0, 0.6, 0.0]),
                    ],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Prismatic,
                [-1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
                MotionProfile::Ramp { from: 0.0, to: 0.4 },
            )],
        ),
        // Refrigerator door hinged on its right edge.
        "fridge" => object(
            "fridge",
            vec![
                part(
                    "body",
                    vec![
                        Face::new([2.1, -0.5, 0.2], [0.4, 0.0, 0.0], [0.0, 0.0, 1.5]),
                        Face::new([1.9, -0.1, 1.85], [0.6, 0.0, 0.0], [0.0, 0.45, 0.0]),
                    ],
                ),
                part(
                    "door",
                    vec![Face::new([1.8, -0.15, 0.3], [0.0, 0.0, 1.4], [0.0, 0.5, 0.0])],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Revolute,
                [0.0, 0.0, 1.0],
                [1.8, -0.45, 0.0],
                MotionProfile::Ramp {
                    from: 0.0,
                    to: deg(100.0),
                },
            )],
        ),
        // Laptop lid folding from upright toward the keyboard.
        "laptop" => object(
            "laptop",
            vec![
                part(
                    "base",
                    vec![Face::new([1.15, -0.17, 0.75], [0.2, 0.0, 0.0], [0.0, 0.34, 0.0])],
                ),
                part(
                    "lid",
                    vec![Face::new([1.5, -0.17, 0.85], [0.0, 0.0, 0.15], [0.0, 0.34, 0.0])],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Revolute,
                [0.0, 1.0, 0.0],
                [1.5, 0.0, 0.75],
                MotionProfile::Ramp {
                    from: 0.0,
                    to: deg(-75.0),
                },
            )],
        ),
        // Microwave door hinged on its left edge, swinging toward the camera.
        "microwave" => object(
            "microwave",
            vec![
                part(
                    "body",
                    vec![
                        Face::new([1.4, -0.3, 0.9], [0.0, 0.0, 0.25], [0.0, 0.12, 0.0]),
                        Face::new([1.55, -0.3, 1.2], [0.25, 0.0, 0.0], [0.0, 0.55, 0.0]),
                    ],
                ),
                part(
                    "door",
                    vec![Face::new([1.4, -0.15, 0.9], [0.0, 0.0, 0.25], [0.0, 0.25, 0.0])],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Revolute,
                [0.0, 0.0, 1.0],
                [1.4, 0.25, 0.0],
                MotionProfile::Ramp {
                    from: 0.0,
                    to: deg(-100.0),
                },
            )],
        ),
        // Office chair: the seat and backrest swivel on a rigid star base.
        "chair" => object(
            "chair",
            vec![
                part(
                    "base",
                    vec![
                        Face::new([1.1, -0.04, 0.1], [0.2, 0.0, 0.0], [0.0, 0.08, 0.0]),
                        Face::new([1.46, 0.2, 0.1], [0.08, 0.0, 0.0], [0.0, 0.2, 0.0]),
                        Face::new([1.46, -0.4, 0.1], [0.08, 0.0, 0.0], [0.0, 0.2, 0.0]),
                    ],
                ),
                part(
                    "seat",
                    vec![
                        Face::new([1.75, -0.22, 0.55], [0.0, 0.0, 0.4], [0.0, 0.44, 0.0]),
                        Face::new([1.2, -0.2, 0.48], [0.1, 0.0, 0.0], [0.0, 0.4, 0.0]),
                    ],
                ),
            ],
            vec![joint(
                0,
                1,
                JointKind::Revolute,
                [0.0, 0.0, 1.0],
                [1.5, 0.0, 0.0],
                MotionProfile::Sinusoid {
                    center: 0.0,
                    amplitude: deg(60.0),
                    cycles: 1.0,
                },
            )],
        ),
        // Desk-mounted monitor arm: the arm swivels about a vertical post
        // while the screen tilts about a horizontal axis at the arm's tip.
        "monitor" => object(
            "monitor",
            vec![
                part(
                    "desk",
                    vec![
                        Face::new([1.3, 0.3, 0.75], [0.7, 0.0, 0.0], [0.0, 0.4, 0.0]),
                        Face::new([1.3, -0.7, 0.75], [0.7, 0.0, 0.0], [0.0, 0.4, 0.0]),
                    ],
                ),
                part(
                    "arm",
                    vec![
                        Face::new([1.25, -0.05, 1.0], [0.3, 0.0, 0.0], [0.0, 0.1, 0.0]),
                        Face::new([1.25, 0.05, 0.92], [0.3, 0.0, 0.0], [0.0, 0.0, 0.08]),
                    ],
                ),
                part(
                    "screen",
                    vec![Face::new([0.95, -0.3, 1.0], [0.0, 0.0, 0.4], [0.0, 0.6, 0.0])],
                ),
            ],
            vec![
                joint(
                    0,
                    1,
                    JointKind::Revolute,
                    [0.0, 0.0, 1.0],
                    [1.8, 0.0, 0.0],
                    MotionProfile::Ramp {
                        from: 0.0,
                        to: deg(90.0),
                    },
                ),
                joint(
                    1,
                    2,
                    JointKind::Revolute,
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 0.9],
                    MotionProfile::Sinusoid {
                        center: 0.0,
                        amplitude: deg(35.0),
                        cycles: 1.0,
                    },
                ),
            ],
        ),
        _ => return None,
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_mirrors_object_classes() {
        let door = default_spec("door").unwrap();
        assert_eq!(door.parts.len(), 2);
        assert_eq!(door.joints.len(), 1);
        assert_eq!(door.joints[0].kind, JointKind::Revolute);
        let (lo, hi) = door.joints[0].motion.range();
        assert!(((hi - lo).to_degrees() - 90.0).abs() < 1e-9);

        let drawer = default_spec("drawer").unwrap();
        assert_eq!(drawer.parts.len(), 2);
        assert_eq!(drawer.joints[0].kind, JointKind::Prismatic);
        let (lo, hi) = drawer.joints[0].motion.range();
        assert!((hi - lo - 0.4).abs() < 1e-12);

        let monitor = default_spec("monitor").unwrap();
        assert_eq!(monitor.parts.len(), 3);
        assert_eq!(monitor.joints.len(), 2);

        assert!(default_spec("lamp").is_none());
        let all = default_specs();
        assert_eq!(all.len(), catalog_names().len());
        for spec in &all {
            spec.validate().unwrap();
        }
    }
}
