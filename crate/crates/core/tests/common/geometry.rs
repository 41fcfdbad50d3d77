//! Signed distance through the max-min support formulation:
//! `sd = max_{|n|=1} ( min_{a∈A} n·a - max_{b∈B} n·b )`, searched over a dense
//! direction grid and refined locally. Supports are computed from world-space
//! vertex lists, independently of the library's shape code.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use trajguard::geometry::Shape;
use trajguard::pose::Pose;

type V3 = Vector3<f64>;

/// Convex body as vertices inflated by a radius, in world coordinates.
#[derive(Clone, Debug)]
pub struct SupportBody {
    pub vertices: Vec<V3>,
    pub radius: f64,
}

impl SupportBody {
    pub fn from_shape(shape: &Shape, pose: &Pose) -> Self {
        let iso = pose.isometry();
        let w = |v: V3| iso.transform_point(&Point3::from(v)).coords;
        match shape {
            Shape::Sphere { radius } => SupportBody { vertices: vec![w(V3::zeros())], radius: *radius },
            Shape::Capsule { half_length, radius } => {
                SupportBody { vertices: vec![w(V3::new(0.0, 0.0, -half_length)), w(V3::new(0.0, 0.0, *half_length))], radius: *radius }
            }
            Shape::Box { half_extents: h } => {
                let mut vs = Vec::new();
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            vs.push(w(V3::new(sx * h.x, sy * h.y, sz * h.z)));
                        }
                    }
                }
                SupportBody { vertices: vs, radius: 0.0 }
            }
            Shape::Hull { vertices } => SupportBody { vertices: vertices.iter().map(|v| w(*v)).collect(), radius: 0.0 },
        }
    }

    /// max over the body of `m · x`, for unit `m`.
    pub fn h(&self, m: &V3) -> f64 {
        self.vertices.iter().map(|v| v.dot(m)).fold(f64::NEG_INFINITY, f64::max) + self.radius
    }
}

/// `min_a n·a - max_b n·b`.
pub fn separation(a: &SupportBody, b: &SupportBody, n: &V3) -> f64 {
    -a.h(&-n) - b.h(n)
}

pub fn fibonacci_sphere(count: usize) -> Vec<V3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            V3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

fn tangent_basis(n: &V3) -> (V3, V3) {
    let t = if n.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let u = n.cross(&t).normalize();
    let v = n.cross(&u);
    (u, v)
}

fn refine(a: &SupportBody, b: &SupportBody, start: V3) -> (f64, V3) {
    // Compass search with a rotating stencil so that ridges of the piecewise
    // linear objective do not stall it.
    let mut n = start;
    let mut best = separation(a, b, &n);
    let mut step = 0.05;
    let mut phase = 0.0f64;
    let mut misses = 0;
    while step > 1e-10 {
        let (u, v) = tangent_basis(&n);
        let mut improved = false;
        for k in 0..16 {
            let ang = phase + k as f64 * std::f64::consts::PI / 8.0;
            let cand = (n + (u * ang.cos() + v * ang.sin()) * step).normalize();
            let s = separation(a, b, &cand);
            if s > best {
                best = s;
                n = cand;
                improved = true;
                break;
            }
        }
        phase += 0.618_033_988_7 * std::f64::consts::PI / 8.0;
        if improved {
            misses = 0;
        } else {
            misses += 1;
            if misses >= 3 {
                step *= 0.5;
                misses = 0;
            }
        }
    }
    (best, n)
}

/// Oracle signed distance and the maximising direction (from B toward A).
pub fn oracle_signed_distance(a: &SupportBody, b: &SupportBody, grid: &[V3]) -> (f64, V3) {
    let mut scored: Vec<(f64, V3)> = grid.iter().map(|n| (separation(a, b, n), *n)).collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    scored.iter().take(12).map(|(_, n)| refine(a, b, *n)).max_by(|x, y| x.0.total_cmp(&y.0)).unwrap()
}

pub fn random_shape<R: Rng>(rng: &mut R) -> Shape {
    match rng.gen_range(0..4) {
        0 => Shape::sphere(rng.gen_range(0.05..0.6)),
        1 => Shape::capsule(rng.gen_range(0.05..0.5), rng.gen_range(0.03..0.3)),
        2 => Shape::cuboid(rng.gen_range(0.05..0.6), rng.gen_range(0.05..0.6), rng.gen_range(0.05..0.6)),
        _ => random_hull(rng, 8),
    }
}

pub fn random_hull<R: Rng>(rng: &mut R, count: usize) -> Shape {
    loop {
        let vs: Vec<V3> = (0..count).map(|_| V3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        if let Ok(h) = Shape::hull(vs) {
            return h;
        }
    }
}

pub fn random_pose<R: Rng>(rng: &mut R, spread: f64) -> Pose {
    Pose::from_xyz_rpy(
        [rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)],
        [rng.gen_range(-3.1..3.1), rng.gen_range(-1.5..1.5), rng.gen_range(-3.1..3.1)],
    )
}

/// Exact closest points of two segments by exhaustive case analysis of the
/// bivariate quadratic: interior stationary point plus the four edges.
pub fn segment_distance_oracle(p1: V3, q1: V3, p2: V3, q2: V3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let f = |s: f64, t: f64| ((p1 + d1 * s) - (p2 + d2 * t)).norm();
    let mut best = f64::INFINITY;
    // edges: fix one parameter at 0/1, minimise the other on [0,1].
    for fixed in [0.0, 1.0] {
        let pt = p2 + d2 * fixed;
        let s = if d1.norm_squared() > 0.0 { ((pt - p1).dot(&d1) / d1.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min(f(s, fixed));
        let ps = p1 + d1 * fixed;
        let t = if d2.norm_squared() > 0.0 { ((ps - p2).dot(&d2) / d2.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min(f(fixed, t));
    }
    // interior: solve the 2x2 normal equations.
    let a11 = d1.dot(&d1);
    let a12 = -d1.dot(&d2);
    let a22 = d2.dot(&d2);
    let r = p1 - p2;
    let b1 = -d1.dot(&r);
    let b2 = d2.dot(&r);
    let det = a11 * a22 - a12 * a12;
    if det.abs() > 1e-14 {
        let s = (b1 * a22 - a12 * b2) / det;
        let t = (a11 * b2 - a12 * b1) / det;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            best = best.min(f(s, t));
        }
    }
    best
}
