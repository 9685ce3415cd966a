use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::geom::Pose;

fn seq(deltas: Vec<Pose>) -> RelativePoseSequence {
    let frames = (0..deltas.len() as u32).collect();
    RelativePoseSequence::new(0, 1, frames, deltas)
}

fn sliding(n: usize, extent: f64, dir: Vector3<f64>, base: Pose) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let q = extent * i as f64 / (n - 1) as f64;
            Pose::from_translation(dir * q).compose(&base)
        })
        .collect()
}

fn swinging(n: usize, span: f64, axis: Vector3<f64>, point: Vector3<f64>, reference: Pose) -> Vec<Pose> {
    let axis = Unit::new_normalize(axis);
    (0..n)
        .map(|i| Pose::about_axis(&axis, &point, span * i as f64 / (n - 1) as f64).compose(&reference))
        .collect()
}

fn perturb(poses: &[Pose], sigma_t: f64, sigma_r: f64, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nt, nr) = (Normal::new(0.0, sigma_t).unwrap(), Normal::new(0.0, sigma_r).unwrap());
    poses
        .iter()
        .map(|p| {
            let t = Vector3::from_fn(|_, _| nt.sample(&mut rng));
            let r = Vector3::from_fn(|_, _| nr.sample(&mut rng));
            Pose::new(UnitQuaternion::from_scaled_axis(r), t).compose(p)
        })
        .collect()
}

fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
    let (dt, da) = a.distance(b);
    dt < tol && da < tol
}

#[test]
fn rigid_recovers_constant_offset() {
    let offset = Pose::new(UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3), Vector3::new(0.2, -0.1, 0.05));
    let s = seq(vec![offset; 10]);
    let m = fit_rigid(&s, &NoiseModel::default()).unwrap();
    match m.params {
        JointParams::Rigid { offset: o } => assert!(close(&o, &offset, 1e-12)),
        _ => unreachable!(),
    }
    assert_eq!(m.parameter_count, 6);
}

#[test]
fn rigid_translation_is_the_mean() {
    let s = seq(vec![Pose::identity(), Pose::from_translation(Vector3::new(0.02, 0.0, 0.0))]);
    let m = fit_rigid(&s, &NoiseModel::default()).unwrap();
    let JointParams::Rigid { offset } = m.params else { unreachable!() };
    assert!((offset.translation() - Vector3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
    assert!(offset.angle() < 1e-15);
}

#[test]
fn prismatic_recovers_line() {
    let base = Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4), Vector3::new(0.3, 0.1, -0.2));
    let s = seq(sliding(50, 0.4, Vector3::x(), base));
    let m = fit_prismatic(&s, &NoiseModel::default()).unwrap();
    let JointParams::Prismatic { axis, .. } = m.params else { unreachable!() };
    assert!((Vector3::from(axis) - Vector3::x()).norm() < 1e-9);
    let (lo, hi) = m.q_range().unwrap();
    assert!(lo.abs() < 1e-9 && (hi - 0.4).abs() < 1e-9);
    for (d, q) in s.deltas.iter().zip(&m.configurations) {
        assert!(close(&m.predict(*q), d, 1e-9));
    }
    assert!(!m.degenerate);
}

#[test]
fn prismatic_fit_commutes_with_rotation() {
    let base = Pose::from_translation(Vector3::new(0.1, 0.2, 0.3));
    let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
    let clean = sliding(30, 0.3, dir, base);
    let noisy = perturb(&clean, 0.003, 0.01, 4);
    let g = Pose::new(UnitQuaternion::from_euler_angles(0.7, -0.3, 1.1), Vector3::zeros());
    let rotated: Vec<Pose> = noisy.iter().map(|d| g.compose(d).compose(&g.inverse())).collect();
    let a = fit_prismatic(&seq(noisy), &NoiseModel::default()).unwrap();
    let b = fit_prismatic(&seq(rotated), &NoiseModel::default()).unwrap();
    let (JointParams::Prismatic { axis: ea, .. }, JointParams::Prismatic { axis: eb, .. }) = (&a.params, &b.params) else {
        unreachable!()
    };
    assert!((g.rotate_vector(&Vector3::from(*ea)) - Vector3::from(*eb)).norm() < 1e-9);
    for (qa, qb) in a.configurations.iter().zip(&b.configurations) {
        assert!((qa - qb).abs() < 1e-9);
    }
    assert!((a.loglik - b.loglik).abs() < 1e-6);
}

#[test]
fn revolute_recovers_quarter_circle() {
    let point = Vector3::new(0.0, 0.0, 0.0);
    let reference = Pose::from_translation(Vector3::new(0.5, 0.0, 0.1));
    let s = seq(swinging(40, 90f64.to_radians(), Vector3::z(), point, reference));
    let m = fit_revolute(&s, &NoiseModel::default()).unwrap();
    let JointParams::Revolute { axis, center, radius, .. } = m.params else { unreachable!() };
    assert!((Vector3::from(axis) - Vector3::z()).norm() < 1e-9);
    let c = Vector3::from(center);
    assert!((c.x.powi(2) + c.y.powi(2)).sqrt() < 1e-9);
    assert!((radius - 0.5).abs() < 1e-9);
    let (lo, hi) = m.q_range().unwrap();
    assert!(lo.abs() < 1e-9 && (hi - 90f64.to_radians()).abs() < 1e-9);
    for (d, q) in s.deltas.iter().zip(&m.configurations) {
        assert!(close(&m.predict(*q), d, 1e-9));
    }
}

/// Circumcircle of a triangle from the perpendicular-bisector formula.
fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([f64; 2], f64) {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    let sq = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
    let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
    let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
    ([ux, uy], ((a[0] - ux).powi(2) + (a[1] - uy).powi(2)).sqrt())
}

#[test]
fn circle_through_three_points_is_the_circumcircle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let p: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if area.abs() < 0.05 {
            continue;
        }
        let (center, radius) = circumcircle(p[0], p[1], p[2]);
        let fit = fit_circle(&p).unwrap();
        let tol = 1e-9 * (1.0 + radius);
        assert!((fit.center[0] - center[0]).abs() < tol && (fit.center[1] - center[1]).abs() < tol);
        assert!((fit.radius - radius).abs() < tol);
    }
}

#[test]
fn collinear_points_have_no_circle() {
    assert!(fit_circle(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_none());
    assert!(fit_circle(&[[0.0, 0.0], [1.0, 0.0]]).is_none());
}

#[test]
fn loglik_of_exact_fit_is_the_normalizer() {
    let noise = NoiseModel {
        sigma_pos: 0.01,
        sigma_rot: 0.1,
    };
    let s = seq(vec![Pose::identity(); 7]);
    let m = fit_rigid(&s, &noise).unwrap();
    let tau = std::f64::consts::TAU;
    let expected = -0.5 * 7.0 * ((tau * 1e-4).ln() + (tau * 1e-2).ln());
    assert!((m.loglik - expected).abs() < 1e-9);
    assert!((m.bic - (-2.0 * expected + 6.0 * 7f64.ln())).abs() < 1e-9);
}

#[test]
fn larger_residuals_lower_the_likelihood() {
    let noise = NoiseModel::default();
    let one = NoiseModel::log_likelihood(&noise, 0.01, 0.02);
    let two = NoiseModel::log_likelihood(&noise, 0.02, 0.04);
    assert!(two < one);
    assert!(noise.log_likelihood(0.0, 0.0) > one);
}

#[test]
fn invalid_noise_is_rejected() {
    for (p, r) in [(0.0, 0.1), (0.01, -1.0), (f64::NAN, 0.1)] {
        let noise = NoiseModel {
            sigma_pos: p,
            sigma_rot: r,
        };
        assert!(matches!(noise.validate(), Err(Error::InvalidSpec(_))));
    }
}

#[test]
fn rigid_explains_a_swing_far_worse_than_revolute() {
    let reference = Pose::from_translation(Vector3::new(0.4, 0.0, 0.0));
    let clean = swinging(300, 60f64.to_radians(), Vector3::z(), Vector3::zeros(), reference);
    let s = seq(perturb(&clean, 0.003, 0.01, 2));
    let noise = NoiseModel::default();
    let sel = select_model(&s, &noise).unwrap();
    assert_eq!(sel.chosen.kind(), JointKind::Revolute);
    let gap = sel.candidate(JointKind::Revolute).loglik - sel.candidate(JointKind::Rigid).loglik;
    assert!(gap > 100.0, "gap {gap}");
}

// Configurations are latent, so a joint absorbs one direction of noise per
// frame; pose noise well below the noise model keeps that under the penalty.
#[test]
fn static_pair_selects_rigid() {
    let offset = Pose::new(UnitQuaternion::from_euler_angles(0.2, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0));
    let s = seq(perturb(&vec![offset; 200], 0.001, 0.003, 5));
    let sel = select_model(&s, &NoiseModel::default()).unwrap();
    assert_eq!(sel.chosen.kind(), JointKind::Rigid);
}

#[test]
fn bic_preference_for_the_true_model_grows_with_data() {
    let base = Pose::from_translation(Vector3::new(0.1, 0.0, 0.0));
    let noise = NoiseModel::default();
    let mut margins = Vec::new();
    for n in [30, 100, 300] {
        let clean = sliding(n, 0.4, Vector3::x(), base);
        let s = seq(perturb(&clean, 0.005, 0.01, 11));
        let sel = select_model(&s, &noise).unwrap();
        assert_eq!(sel.chosen.kind(), JointKind::Prismatic, "n = {n}");
        let p = sel.candidate(JointKind::Prismatic).bic;
        let margin = sel.candidate(JointKind::Rigid).bic.min(sel.candidate(JointKind::Revolute).bic) - p;
        margins.push(margin);
    }
    assert!(margins.windows(2).all(|w| w[1] > w[0]), "{margins:?}");
}

#[test]
fn motionless_fits_are_flagged_and_add_nothing() {
    let offset = Pose::from_translation(Vector3::new(0.3, 0.1, 0.0));
    let s = seq(vec![offset; 20]);
    let noise = NoiseModel::default();
    let rigid = fit_rigid(&s, &noise).unwrap();
    let prismatic = fit_prismatic(&s, &noise).unwrap();
    let revolute = fit_revolute(&s, &noise).unwrap();
    assert!(prismatic.degenerate && revolute.degenerate && !rigid.degenerate);
    assert!((prismatic.loglik - rigid.loglik).abs() < 1e-9);
    assert!((revolute.loglik - rigid.loglik).abs() < 1e-9);
    assert_eq!(select_model(&s, &noise).unwrap().chosen.kind(), JointKind::Rigid);
}

#[test]
fn ties_go_to_fewer_parameters() {
    let mk = |kind: JointKind, bic: f64| JointModel {
        params: match kind {
            JointKind::Rigid => JointParams::Rigid {
                offset: Pose::identity(),
            },
            JointKind::Prismatic => JointParams::Prismatic {
                base: Pose::identity(),
                axis: [1.0, 0.0, 0.0],
            },
            JointKind::Revolute => JointParams::Revolute {
                axis: [0.0, 0.0, 1.0],
                center: [0.0; 3],
                radius: 1.0,
                reference: Pose::identity(),
            },
        },
        parameter_count: kind.parameter_count(),
        observations: 10,
        loglik: 0.0,
        bic,
        configurations: Vec::new(),
        degenerate: false,
        noise: NoiseModel::default(),
    };
    let mut models = vec![mk(JointKind::Revolute, 1.0), mk(JointKind::Prismatic, 1.0), mk(JointKind::Rigid, 1.0)];
    models.sort_by(preference);
    assert_eq!(models[0].kind(), JointKind::Rigid);
    let mut models = vec![mk(JointKind::Revolute, 1.0), mk(JointKind::Prismatic, 1.0)];
    models.sort_by(preference);
    assert_eq!(models[0].kind(), JointKind::Prismatic);
    let mut models = vec![mk(JointKind::Rigid, 2.0), mk(JointKind::Revolute, 1.0)];
    models.sort_by(preference);
    assert_eq!(models[0].kind(), JointKind::Revolute);
}

#[test]
fn fit_error_vanishes_on_exact_data() {
    let reference = Pose::new(UnitQuaternion::from_euler_angles(0.3, 0.0, 0.0), Vector3::new(0.3, 0.2, 0.0));
    let s = seq(swinging(25, 1.2, Vector3::new(0.0, 1.0, 1.0), Vector3::new(0.1, 0.0, 0.0), reference));
    let m = select_model(&s, &NoiseModel::default()).unwrap().chosen;
    let (dt, da) = model_fit_error(&m, &s);
    assert!(dt < 1e-9 && da < 1e-7, "{dt} {da}");
}

#[test]
fn projection_recovers_configurations() {
    let reference = Pose::from_translation(Vector3::new(0.5, 0.0, 0.0));
    let s = seq(swinging(20, 2.0, Vector3::z(), Vector3::zeros(), reference));
    let m = fit_revolute(&s, &NoiseModel::default()).unwrap();
    for q in [0.1, 0.7, 1.9] {
        assert!((m.project(&m.predict(q)) - q).abs() < 1e-6);
    }
    let p = fit_prismatic(&seq(sliding(10, 0.3, Vector3::y(), Pose::identity())), &NoiseModel::default()).unwrap();
    assert!((p.project(&p.predict(0.17)) - 0.17).abs() < 1e-12);
}

#[test]
fn reversed_swing_is_still_revolute() {
    let reference = Pose::from_translation(Vector3::new(0.4, 0.0, 0.0));
    let s = seq(swinging(50, 1.0, Vector3::x() + Vector3::z(), Vector3::new(0.0, 0.1, 0.0), reference));
    let sel = select_model(&s.reversed(), &NoiseModel::default()).unwrap();
    assert_eq!(sel.chosen.kind(), JointKind::Revolute);
    let (dt, da) = model_fit_error(&sel.chosen, &s.reversed());
    assert!(dt < 1e-9 && da < 1e-7);
}

#[test]
fn too_few_poses_are_refused() {
    let s = seq(vec![Pose::identity(); 2]);
    assert!(matches!(select_model(&s, &NoiseModel::default()), Err(Error::EmptyInput(_))));
}
