mod common;

use common::geometry::*;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajguard::geometry::{signed_distance, Shape};
use trajguard::pose::Pose;

#[test]
fn random_hull_pairs_match_support_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = fibonacci_sphere(4000);
    for i in 0..150 {
        let a = random_hull(&mut rng, 8);
        let b = random_hull(&mut rng, 8);
        let pa = random_pose(&mut rng, 0.8);
        let pb = random_pose(&mut rng, 0.8);
        let got = signed_distance(&a, &pa, &b, &pb).unwrap();
        let (want, _) = oracle_signed_distance(&SupportBody::from_shape(&a, &pa), &SupportBody::from_shape(&b, &pb), &grid);
        assert!((got.signed_distance - want).abs() <= 2e-3, "case {i}: got {} want {want}", got.signed_distance);
    }
}

#[test]
fn random_mixed_pairs_match_support_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = fibonacci_sphere(4000);
    for i in 0..150 {
        let a = random_shape(&mut rng);
        let b = random_shape(&mut rng);
        let pa = random_pose(&mut rng, 0.6);
        let pb = random_pose(&mut rng, 0.6);
        let got = signed_distance(&a, &pa, &b, &pb).unwrap();
        let (want, _) = oracle_signed_distance(&SupportBody::from_shape(&a, &pa), &SupportBody::from_shape(&b, &pb), &grid);
        let at_normal = separation(&SupportBody::from_shape(&a, &pa), &SupportBody::from_shape(&b, &pb), &got.normal);
        assert!((got.signed_distance - want).abs() <= 2e-3, "case {i} {a:?} {b:?}: got {} want {want} at normal {at_normal}", got.signed_distance);
    }
}

#[test]
fn separated_witnesses_are_optimal_against_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let a = random_hull(&mut rng, 8);
        let b = random_hull(&mut rng, 8);
        let pa = random_pose(&mut rng, 0.2);
        let pb = Pose::from_xyz_rpy([2.0, 0.3, -0.2], [0.1, 0.5, 0.9]);
        let got = signed_distance(&a, &pa, &b, &pb).unwrap();
        assert!(got.signed_distance > 0.0);
        assert!(((got.point_a - got.point_b).norm() - got.signed_distance).abs() <= 1e-6);
        let sa = SupportBody::from_shape(&a, &pa);
        let sb = SupportBody::from_shape(&b, &pb);
        for _ in 0..10_000 {
            let x = random_convex_combination(&mut rng, &sa.vertices);
            let y = random_convex_combination(&mut rng, &sb.vertices);
            assert!((x - y).norm() >= got.signed_distance - 1e-6);
        }
    }
}

fn random_convex_combination<R: Rng>(rng: &mut R, vs: &[Vector3<f64>]) -> Vector3<f64> {
    let w: Vec<f64> = vs.iter().map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let total: f64 = w.iter().sum();
    vs.iter().zip(&w).map(|(v, wi)| v * (*wi / total)).sum()
}

#[test]
fn moving_a_along_normal_increases_distance_by_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eps = 1e-4;
    for _ in 0..200 {
        let a = random_shape(&mut rng);
        let b = random_shape(&mut rng);
        let pa = random_pose(&mut rng, 0.6);
        let pb = random_pose(&mut rng, 0.6);
        let r = signed_distance(&a, &pa, &b, &pb).unwrap();
        let t = pa.translation() + r.normal * eps;
        let moved = Pose::from_xyz_rpy([t.x, t.y, t.z], pa.rpy());
        let r2 = signed_distance(&a, &moved, &b, &pb).unwrap();
        assert!((r2.signed_distance - r.signed_distance - eps).abs() <= 1e-5, "{} -> {}", r.signed_distance, r2.signed_distance);
    }
}

#[test]
fn signed_distance_is_one_lipschitz_in_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let a = random_shape(&mut rng);
        let b = random_shape(&mut rng);
        let pa = random_pose(&mut rng, 0.6);
        let pb = random_pose(&mut rng, 0.6);
        let r = signed_distance(&a, &pa, &b, &pb).unwrap().signed_distance;
        let dir = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let t = pa.translation() + dir * 0.05;
        let moved = Pose::from_xyz_rpy([t.x, t.y, t.z], pa.rpy());
        let r2 = signed_distance(&a, &moved, &b, &pb).unwrap().signed_distance;
        assert!((r2 - r).abs() <= dir.norm() * 0.05 + 1e-7);
    }
}

#[test]
fn capsule_pairs_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..500 {
        let (la, ra) = (rng.gen_range(0.05..0.5), rng.gen_range(0.02..0.2));
        let (lb, rb) = (rng.gen_range(0.05..0.5), rng.gen_range(0.02..0.2));
        let pa = random_pose(&mut rng, 0.5);
        let pb = random_pose(&mut rng, 0.5);
        let got = signed_distance(&Shape::capsule(la, ra), &pa, &Shape::capsule(lb, rb), &pb).unwrap();
        let ea = pa.transform_point(&Vector3::new(0.0, 0.0, la));
        let sa = pa.transform_point(&Vector3::new(0.0, 0.0, -la));
        let eb = pb.transform_point(&Vector3::new(0.0, 0.0, lb));
        let sb = pb.transform_point(&Vector3::new(0.0, 0.0, -lb));
        let want = segment_distance_oracle(sa, ea, sb, eb) - ra - rb;
        assert!((got.signed_distance - want).abs() <= 1e-9, "got {} want {want}", got.signed_distance);
    }
}
