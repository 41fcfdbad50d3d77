//! Robots, scenes and references shared by the rollout tests.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajguard::cbf::{cbf_step, CbfParams};
use trajguard::geometry::{signed_distance, Shape};
use trajguard::kinematics::{Joint, JointKind, JointLimits, LinkGeometry, RobotModel};
use trajguard::pose::Pose;
use trajguard::scene::{Obstacle, PlanningScene};
use trajguard::tracker::{desired_velocity, RolloutConfig, Saturation, TrackerParams, TrackerState, Trajectory, Waypoint};

pub const TOOL_RADIUS: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct Setup {
    pub model: RobotModel,
    pub scene: PlanningScene,
    pub reference: Trajectory,
    pub q0: Vec<f64>,
    pub cbf: CbfParams,
    pub tracker: TrackerParams,
    pub config: RolloutConfig,
}

fn limits(velocity: f64) -> JointLimits {
    JointLimits { lower: -PI, upper: PI, velocity }
}

fn revolute(axis: Vector3<f64>, origin: [f64; 3]) -> Joint {
    Joint { kind: JointKind::Revolute, axis, origin: Pose::from_translation(origin[0], origin[1], origin[2]), limits: limits(1.0) }
}

/// Six-joint arm (yaw, shoulder, elbow, wrist roll/pitch/roll) with a spherical
/// tool at the flange.
pub fn six_dof_arm() -> RobotModel {
    let joints = vec![
        revolute(Vector3::z(), [0.0, 0.0, 0.3]),
        revolute(Vector3::y(), [0.0, 0.0, 0.1]),
        revolute(Vector3::y(), [0.5, 0.0, 0.0]),
        revolute(Vector3::x(), [0.4, 0.0, 0.0]),
        revolute(Vector3::y(), [0.1, 0.0, 0.0]),
        revolute(Vector3::x(), [0.1, 0.0, 0.0]),
    ];
    let tool = LinkGeometry { link: 5, name: Some("tool".into()), shape: Shape::sphere(TOOL_RADIUS), origin: Pose::from_translation(0.1, 0.0, 0.0) };
    RobotModel::new(joints, vec![tool]).unwrap()
}

pub fn tool_center(model: &RobotModel, q: &[f64]) -> Vector3<f64> {
    model.forward_kinematics(q, 5, &Vector3::new(0.1, 0.0, 0.0)).unwrap()
}

pub fn straight_reference(behavior: &str, from: &[f64], to: &[f64]) -> Trajectory {
    Trajectory::new(behavior, vec![Waypoint { t: 0.0, q: from.to_vec() }, Waypoint { t: 2.0, q: to.to_vec() }]).unwrap()
}

pub fn default_tracker(v_sat: f64) -> TrackerParams {
    TrackerParams { kp: 2.0, epsilon: 0.02, v_sat: Some(Saturation::Uniform(v_sat)), ..TrackerParams::default() }
}

pub const EXAMPLE_START: [f64; 6] = [-0.6, 0.3, -0.5, 0.0, 0.4, 0.0];
pub const EXAMPLE_GOAL: [f64; 6] = [0.6, 0.3, -0.5, 0.0, 0.4, 0.0];
pub const EXAMPLE_OBSTACLE_RADIUS: f64 = 0.1;

/// Spherical tool sweeping through a spherical obstacle that sits on its
/// straight-line path, slightly below it.
pub fn example_one(dt: f64) -> Setup {
    let model = six_dof_arm();
    let mid: Vec<f64> = EXAMPLE_START.iter().zip(EXAMPLE_GOAL).map(|(a, b)| 0.5 * (a + b)).collect();
    let c = tool_center(&model, &mid) - Vector3::new(0.0, 0.0, 0.03);
    let ball = Obstacle { name: "ball".into(), shape: Shape::sphere(EXAMPLE_OBSTACLE_RADIUS), pose: Pose::from_translation(c.x, c.y, c.z), enabled: true };
    let scene = PlanningScene::new(vec![ball]).unwrap().with_robot(&model).unwrap();
    let cbf = CbfParams::new(40.0, 0.5).with_j_max(model.jacobian_norm_bound(2000, 0));
    Setup {
        reference: straight_reference("sweep", &EXAMPLE_START, &EXAMPLE_GOAL),
        q0: EXAMPLE_START.to_vec(),
        model,
        scene,
        cbf,
        tracker: default_tracker(0.5),
        config: RolloutConfig::new(dt, 12.0),
    }
}

pub fn example_obstacle_center(setup: &Setup) -> Vector3<f64> {
    setup.scene.obstacle("ball").unwrap().pose.translation()
}

fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    match rng.gen_range(0..4) {
        0 => Vector3::x(),
        1 => Vector3::y(),
        2 => Vector3::z(),
        _ => Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize(),
    }
}

/// Serial chain with `dof` revolute joints and collision bodies on the last
/// two links (adjacent, so no self pairs).
pub fn random_chain(rng: &mut ChaCha8Rng, dof: usize) -> RobotModel {
    let mut joints = vec![revolute(Vector3::z(), [0.0, 0.0, 0.2])];
    for _ in 1..dof {
        let len = rng.gen_range(0.15..0.45);
        joints.push(revolute(random_axis(rng), [len, 0.0, rng.gen_range(-0.05..0.05)]));
    }
    let tip = rng.gen_range(0.1..0.25);
    let mut geometry = vec![LinkGeometry {
        link: dof - 1,
        name: Some("tool".into()),
        shape: Shape::sphere(rng.gen_range(0.03..0.07)),
        origin: Pose::from_translation(tip, 0.0, 0.0),
    }];
    if dof >= 2 {
        geometry.push(LinkGeometry {
            link: dof - 2,
            name: Some("forearm".into()),
            shape: Shape::capsule(0.08, 0.03),
            origin: Pose::from_xyz_rpy([0.1, 0.0, 0.0], [0.0, PI / 2.0, 0.0]),
        });
    }
    RobotModel::new(joints, geometry).unwrap()
}

pub fn random_obstacle_shape(rng: &mut ChaCha8Rng) -> Shape {
    match rng.gen_range(0..4) {
        0 => Shape::sphere(rng.gen_range(0.04..0.12)),
        1 => Shape::capsule(rng.gen_range(0.03..0.1), rng.gen_range(0.03..0.08)),
        2 => Shape::cuboid(rng.gen_range(0.03..0.1), rng.gen_range(0.03..0.1), rng.gen_range(0.03..0.1)),
        _ => {
            let pts = (0..8)
                .map(|_| Vector3::new(rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08)))
                .chain([Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.1, 0.0), Vector3::new(0.0, 0.0, 0.1), Vector3::new(-0.05, -0.05, -0.05)])
                .collect();
            Shape::hull(pts).unwrap()
        }
    }
}

fn random_orientation(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(-PI..PI), rng.gen_range(-1.5..1.5), rng.gen_range(-PI..PI)]
}

fn clear_of(model: &RobotModel, qs: &[&[f64]], shape: &Shape, pose: &Pose, clearance: f64) -> bool {
    qs.iter().all(|q| {
        let frames = model.frames(q).unwrap();
        model.geometry().iter().all(|g| {
            let iso = Pose::from_isometry(&(frames.link(g.link) * g.origin.isometry()));
            signed_distance(&g.shape, &iso, shape, pose).is_ok_and(|r| r.signed_distance > clearance)
        })
    })
}

/// A chain of 2–6 joints, 1–36 obstacles, and a reference whose straight
/// joint-space path runs the tool through at least one obstacle. Start and goal
/// are collision-free.
pub fn random_setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dof = rng.gen_range(2..=6);
    let model = random_chain(&mut rng, dof);
    let obstacle_count = if seed.is_multiple_of(5) { 36 } else { rng.gen_range(1..=12) };
    loop {
        let start: Vec<f64> = (0..dof).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let goal: Vec<f64> = start.iter().map(|s| s + rng.gen_range(-1.2..1.2)).collect();
        let mid: Vec<f64> = start.iter().zip(&goal).map(|(a, b)| 0.5 * (a + b)).collect();
        let tool = model.geometry().iter().find(|g| g.name.as_deref() == Some("tool")).unwrap();
        let tool_mid = model.forward_kinematics(&mid, tool.link, &tool.origin.translation()).unwrap();

        let mut obstacles = Vec::new();
        let blocker = Shape::sphere(rng.gen_range(0.05..0.1));
        let blocker_pose = Pose::from_translation(tool_mid.x, tool_mid.y, tool_mid.z + rng.gen_range(-0.02..0.02));
        if !clear_of(&model, &[&start, &goal], &blocker, &blocker_pose, 0.08) {
            continue;
        }
        obstacles.push(Obstacle { name: "blocker".into(), shape: blocker, pose: blocker_pose, enabled: true });
        let mut attempts = 0;
        while obstacles.len() < obstacle_count && attempts < 2000 {
            attempts += 1;
            let shape = random_obstacle_shape(&mut rng);
            let reach = 1.2;
            let pose =
                Pose::from_xyz_rpy([rng.gen_range(-reach..reach), rng.gen_range(-reach..reach), rng.gen_range(-0.3..reach)], random_orientation(&mut rng));
            if clear_of(&model, &[&start, &goal], &shape, &pose, 0.05) {
                obstacles.push(Obstacle { name: format!("obs{:02}", obstacles.len()), shape, pose, enabled: true });
            }
        }
        let scene = PlanningScene::new(obstacles).unwrap().with_robot(&model).unwrap();
        let cbf = CbfParams::new(40.0, 0.5).with_j_max(model.jacobian_norm_bound(2000, seed));
        return Setup {
            reference: straight_reference("random", &start, &goal),
            q0: start,
            model,
            scene,
            cbf,
            tracker: default_tracker(0.5),
            config: RolloutConfig::new(0.01, 6.0),
        };
    }
}

/// Example arm in a field of `count` mixed obstacles kept clear of the
/// example start and goal.
pub fn cluttered_example(count: usize, seed: u64) -> Setup {
    let mut setup = example_one(0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obstacles = setup.scene.obstacles().to_vec();
    while obstacles.len() < count {
        let shape = random_obstacle_shape(&mut rng);
        let pose = Pose::from_xyz_rpy([rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(0.0..1.2)], random_orientation(&mut rng));
        if clear_of(&setup.model, &[&EXAMPLE_START, &EXAMPLE_GOAL], &shape, &pose, 0.1) {
            obstacles.push(Obstacle { name: format!("clutter{:02}", obstacles.len()), shape, pose, enabled: true });
        }
    }
    setup.scene = PlanningScene::new(obstacles).unwrap().with_robot(&setup.model).unwrap();
    setup
}

/// The filtered command at `q` on the first control step of `setup`.
pub fn first_command(setup: &Setup, q: &[f64]) -> Vec<f64> {
    let v_sat = setup.tracker.saturation(&setup.model).unwrap();
    let (v_des, _) = desired_velocity(&TrackerState::new(), &setup.reference, q, &setup.tracker, &v_sat, 0.0).unwrap();
    cbf_step(&setup.model, &setup.scene, q, &v_des, &setup.cbf, setup.config.dt).unwrap().v_star.iter().copied().collect()
}
