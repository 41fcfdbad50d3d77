mod common;

use std::f64::consts::PI;

use common::scenarios::*;
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajguard::cbf::{build_constraint, cbf_step, filter_velocity, CbfParams, LinearConstraint, StepStatus};
use trajguard::geometry::Shape;
use trajguard::kinematics::{Joint, JointKind, JointLimits, LinkGeometry, RobotModel};
use trajguard::pose::Pose;
use trajguard::qp::QpStatus;
use trajguard::scene::{PairKind, PlanningScene};
use trajguard::sim::rollout_kinematic;
use trajguard::tracker::{RolloutConfig, TrackingRun};

/// Constraints for the nearest pairs of a random setup at a perturbed start.
fn random_problem(seed: u64) -> (Vec<LinearConstraint>, DVector<f64>, CbfParams) {
    let s = random_setup(seed % 25);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Vec<f64> = s.q0.iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect();
    let (_, pairs) = s.scene.min_signed_distance(&s.model, &q).unwrap();
    let cbf = if seed.is_multiple_of(2) { s.cbf.clone() } else { s.cbf.clone().without_margin() };
    let constraints = pairs.iter().take(cbf.max_pairs).map(|p| build_constraint(&s.scene, &s.model, &q, p, &cbf).unwrap()).collect();
    let v_des = DVector::from_fn(q.len(), |_, _| rng.gen_range(-1.0..1.0));
    (constraints, v_des, cbf)
}

fn violation(constraints: &[LinearConstraint], v: &DVector<f64>, bound: f64) -> f64 {
    let rows = constraints.iter().map(|c| c.b - c.a.dot(v)).fold(0.0_f64, f64::max);
    rows.max(v.amax() - bound)
}

#[test]
fn filtered_velocity_is_feasible_and_minimal() {
    let mut checked = 0;
    for seed in 0..40 {
        let (constraints, v_des, cbf) = random_problem(seed);
        let (v, diag) = filter_velocity(&v_des, &constraints, &cbf).unwrap();
        if diag.status != QpStatus::Optimal {
            continue;
        }
        checked += 1;
        assert!(violation(&constraints, &v, cbf.q_dot_max) <= 1e-8, "seed {seed}");
        let best = (&v - &v_des).norm_squared();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..10_000 {
            let w = DVector::from_fn(v.len(), |_, _| rng.gen_range(-cbf.q_dot_max..cbf.q_dot_max));
            if violation(&constraints, &w, cbf.q_dot_max) <= 0.0 {
                assert!((&w - &v_des).norm_squared() >= best - 1e-8, "seed {seed}");
            }
        }
    }
    assert!(checked >= 20);
}

#[test]
fn example_gradient_row_is_normal_times_jacobian() {
    let s = example_one(0.01);
    let o = example_obstacle_center(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cbf = s.cbf.clone().without_margin();
    for _ in 0..50 {
        let q: Vec<f64> = EXAMPLE_START.iter().map(|x| x + rng.gen_range(-0.7..0.7)).collect();
        let (h, pairs) = s.scene.min_signed_distance(&s.model, &q).unwrap();
        let c = build_constraint(&s.scene, &s.model, &q, &pairs[0], &cbf).unwrap();
        let f = tool_center(&s.model, &q);
        let jac = s.model.point_jacobian(&q, 5, &Vector3::new(0.1, 0.0, 0.0)).unwrap();
        let want = ((f - o) / (f - o).norm()).transpose() * jac;
        assert!((c.a.transpose() - want).amax() <= 1e-9);
        assert!((c.b + cbf.alpha * h).abs() <= 1e-12);
        assert!((h - ((f - o).norm() - TOOL_RADIUS - EXAMPLE_OBSTACLE_RADIUS)).abs() <= 1e-9);
    }
}

#[test]
fn far_from_obstacles_the_step_is_pure_tracking() {
    let mut s = example_one(0.01);
    let far = Pose::from_translation(5.0, 5.0, 5.0);
    s.scene.set_pose("ball", far).unwrap();
    let v_des = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.0, 0.4, -0.1]);
    let out = cbf_step(&s.model, &s.scene, &EXAMPLE_START, &v_des, &s.cbf, 0.01).unwrap();
    assert_eq!(out.status, StepStatus::Optimal);
    assert_eq!(out.v_star, v_des);
    for (a, (b, v)) in out.q_next.iter().zip(EXAMPLE_START.iter().zip(v_des.iter())) {
        assert_eq!(*a, b + 0.01 * v);
    }
}

fn min_h(dt: f64) -> f64 {
    let s = example_one(dt);
    rollout_kinematic(&s.model, &s.scene, &s.reference, &s.q0, &s.cbf, &s.tracker, &s.config).unwrap().min_h()
}

#[test]
fn integrator_step_barely_moves_the_closest_approach() {
    let hs: Vec<f64> = [0.001, 0.002, 0.005, 0.01].iter().map(|&dt| min_h(dt)).collect();
    let spread = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - hs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-3, "min h over dt sweep {hs:?}");
    assert!(hs.iter().all(|h| *h >= 0.0));
}

/// Checks `(h_{k+1} − h_k)/dt ≥ −α h_k − eps` over steps that moved.
fn check_cbf_inequality(run: &TrackingRun, alpha: f64, dt: f64, eps: f64) -> usize {
    let mut checked = 0;
    for w in run.trace.windows(2) {
        if w[0].qp_status != "optimal" || !w[1].event.is_empty() {
            continue;
        }
        let rate = (w[1].h_min - w[0].h_min) / dt;
        assert!(rate >= -alpha * w[0].h_min - eps, "t = {}: rate {rate} vs {}", w[0].t, -alpha * w[0].h_min - eps);
        checked += 1;
    }
    checked
}

#[test]
fn barrier_inequality_holds_along_rollouts() {
    for seed in [1, 2, 4, 6, 8] {
        let s = random_setup(seed);
        let run = rollout_kinematic(&s.model, &s.scene, &s.reference, &s.q0, &s.cbf, &s.tracker, &s.config).unwrap();
        assert!(check_cbf_inequality(&run, s.cbf.alpha, s.config.dt, 1e-3) > 0);

        let bare = s.cbf.clone().without_margin();
        let run = rollout_kinematic(&s.model, &s.scene, &s.reference, &s.q0, &bare, &s.tracker, &s.config).unwrap();
        let eps = 2.0 * s.cbf.j_max.unwrap() * s.cbf.q_dot_max;
        check_cbf_inequality(&run, bare.alpha, s.config.dt, eps);
    }
}

/// Planar three-link arm whose last link can fold back onto the first.
fn folding_arm() -> RobotModel {
    let lim = JointLimits { lower: -PI, upper: PI, velocity: 1.0 };
    let revolute = |x: f64| Joint { kind: JointKind::Revolute, axis: Vector3::z(), origin: Pose::from_translation(x, 0.0, 0.0), limits: lim };
    let joints = vec![revolute(0.0), revolute(0.5), revolute(0.4)];
    let geometry = vec![
        LinkGeometry {
            link: 0,
            name: Some("upper".into()),
            shape: Shape::capsule(0.15, 0.04),
            origin: Pose::from_xyz_rpy([0.25, 0.0, 0.0], [0.0, PI / 2.0, 0.0]),
        },
        LinkGeometry { link: 2, name: Some("hand".into()), shape: Shape::sphere(0.05), origin: Pose::from_translation(0.3, 0.0, 0.0) },
    ];
    RobotModel::new(joints, geometry).unwrap()
}

#[test]
fn self_collision_pair_is_kept_safe() {
    let model = folding_arm();
    let scene = PlanningScene::new(vec![]).unwrap().with_robot(&model).unwrap();
    let pairs = scene.active_pairs();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].kind, PairKind::SelfCollision);

    let (start, goal) = ([0.0, 0.3, 0.3], [0.0, 2.6, 2.6]);
    let path_min = (0..=100)
        .map(|k| {
            let u = k as f64 / 100.0;
            let q: Vec<f64> = start.iter().zip(goal).map(|(a, b)| a + u * (b - a)).collect();
            scene.min_signed_distance(&model, &q).unwrap().0
        })
        .fold(f64::INFINITY, f64::min);
    assert!(path_min < 0.0, "reference should fold the hand through the upper arm");

    let cbf = CbfParams::new(20.0, 0.5).with_j_max(model.jacobian_norm_bound(2000, 0));
    let run =
        rollout_kinematic(&model, &scene, &straight_reference("fold", &start, &goal), &start, &cbf, &default_tracker(0.5), &RolloutConfig::new(0.01, 8.0))
            .unwrap();
    assert!(run.trace[0].h_min > 0.0);
    assert!(run.min_h() >= -1e-4, "min h {}", run.min_h());
    assert!(run.trace.iter().any(|r| r.nearest_pair == "hand|upper" || r.nearest_pair == "upper|hand"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtering_twice_changes_nothing(seed in 0u64..10_000) {
        let (constraints, v_des, cbf) = random_problem(seed);
        let (v, diag) = filter_velocity(&v_des, &constraints, &cbf).unwrap();
        prop_assume!(diag.status == QpStatus::Optimal);
        let (again, _) = filter_velocity(&v, &constraints, &cbf).unwrap();
        prop_assert!((again - v).amax() <= 1e-9);
    }
}
