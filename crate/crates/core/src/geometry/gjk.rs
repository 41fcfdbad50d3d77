//! Distance between polytope cores (Gilbert-Johnson-Keerthi).
//!
//! The simplex sub-problem is solved by enumerating the faces of the current
//! simplex: the closest point of a simplex to the origin is the orthogonal
//! projection onto the affine hull of the one face whose projection lands
//! strictly inside it, and every such projection is a point of the simplex,
//! so the minimum over faces with positive barycentric coordinates is exact.

use nalgebra::{Isometry3, Matrix2, Matrix3, Vector2, Vector3};

use super::shape::Core;

type V3 = Vector3<f64>;

/// A core placed in the world.
#[derive(Clone, Copy)]
pub(crate) struct Placed<'a> {
    pub core: Core<'a>,
    pub iso: &'a Isometry3<f64>,
}

impl Placed<'_> {
    pub fn support(&self, dir: &V3) -> V3 {
        let local = self.iso.rotation.inverse_transform_vector(dir);
        self.iso.rotation * self.core.support(&local) + self.iso.translation.vector
    }

    pub fn center(&self) -> V3 {
        self.iso.rotation * self.core.center() + self.iso.translation.vector
    }
}

/// Vertex of the Minkowski difference `A - B` together with the contributing points.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Vertex {
    pub w: V3,
    pub a: V3,
    pub b: V3,
}

pub(crate) fn support(a: &Placed, b: &Placed, dir: &V3) -> Vertex {
    let pa = a.support(dir);
    let pb = b.support(&-dir);
    Vertex { w: pa - pb, a: pa, b: pb }
}

#[derive(Debug)]
pub(crate) enum GjkOutcome {
    Separated {
        distance: f64,
        point_a: V3,
        point_b: V3,
    },
    /// The origin is inside (or on the boundary of) the Minkowski difference.
    Intersecting {
        simplex: Vec<Vertex>,
    },
}

#[derive(Debug)]
pub(crate) struct GjkFailure {
    pub distance: f64,
    pub point_a: V3,
    pub point_b: V3,
}

/// Below this fraction of the problem scale the cores are treated as touching.
const TOUCH_TOL: f64 = 1e-10;
const REL_TOL: f64 = 1e-13;

pub(crate) fn gjk(a: &Placed, b: &Placed, max_iter: usize) -> Result<GjkOutcome, GjkFailure> {
    let mut dir = a.center() - b.center();
    if dir.norm_squared() == 0.0 {
        dir = V3::x();
    }
    let first = support(a, b, &-dir);
    let scale = first.w.norm().max(dir.norm()).max(1e-3);
    let mut simplex = vec![first];
    let mut lambdas = vec![1.0];
    let mut v = first.w;

    for _ in 0..max_iter {
        let vv = v.norm_squared();
        if vv.sqrt() <= TOUCH_TOL * scale {
            return Ok(GjkOutcome::Intersecting { simplex });
        }
        let w = support(a, b, &-v);
        if vv - v.dot(&w.w) <= REL_TOL * vv.max(scale * scale * 1e-6) {
            return Ok(separated(&simplex, &lambdas, v));
        }
        if simplex.iter().any(|s| (s.w - w.w).norm_squared() <= 1e-24 * scale * scale) {
            return Ok(separated(&simplex, &lambdas, v));
        }
        simplex.push(w);
        let (next_v, keep, bary) = closest_on_simplex(&simplex);
        if keep.len() == 4 {
            return Ok(GjkOutcome::Intersecting { simplex });
        }
        if next_v.norm_squared() >= vv {
            // No progress: the previous estimate is as good as it gets.
            simplex.pop();
            return Ok(separated(&simplex, &lambdas, v));
        }
        simplex = keep.iter().map(|&i| simplex[i]).collect();
        lambdas = bary;
        v = next_v;
    }
    let (point_a, point_b) = witnesses(&simplex, &lambdas);
    Err(GjkFailure { distance: v.norm(), point_a, point_b })
}

fn separated(simplex: &[Vertex], lambdas: &[f64], v: V3) -> GjkOutcome {
    let (point_a, point_b) = witnesses(simplex, lambdas);
    GjkOutcome::Separated { distance: v.norm(), point_a, point_b }
}

pub(crate) fn witnesses(simplex: &[Vertex], lambdas: &[f64]) -> (V3, V3) {
    let mut pa = V3::zeros();
    let mut pb = V3::zeros();
    for (s, l) in simplex.iter().zip(lambdas) {
        pa += s.a * *l;
        pb += s.b * *l;
    }
    (pa, pb)
}

/// Closest point of the simplex to the origin: the point, the indices of the
/// supporting face, and the barycentric weights over that face.
pub(crate) fn closest_on_simplex(simplex: &[Vertex]) -> (V3, Vec<usize>, Vec<f64>) {
    let m = simplex.len();
    let mut best: Option<(f64, V3, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let pts: Vec<V3> = idx.iter().map(|&i| simplex[i].w).collect();
        let Some(bary) = affine_projection(&pts) else {
            continue;
        };
        if bary.iter().any(|&l| l <= 0.0) {
            continue;
        }
        let p: V3 = pts.iter().zip(&bary).map(|(q, l)| q * *l).sum();
        let d = p.norm_squared();
        // Prefer lower-dimensional faces on ties so the kept simplex stays small.
        let better = match &best {
            None => true,
            Some((bd, ..)) => d < *bd * (1.0 - 1e-12) || (d <= *bd && idx.len() < best.as_ref().unwrap().2.len()),
        };
        if better {
            best = Some((d, p, idx, bary));
        }
    }
    let (_, p, idx, bary) = best.expect("singleton faces always project inside");
    (p, idx, bary)
}

/// Barycentric coordinates of the origin's projection onto the affine hull of `pts`.
fn affine_projection(pts: &[V3]) -> Option<Vec<f64>> {
    let p0 = pts[0];
    match pts.len() {
        1 => Some(vec![1.0]),
        2 => {
            let e = pts[1] - p0;
            let ee = e.norm_squared();
            if ee <= 1e-30 * (1.0 + p0.norm_squared()) {
                return None;
            }
            let t = -p0.dot(&e) / ee;
            Some(vec![1.0 - t, t])
        }
        3 => {
            let e1 = pts[1] - p0;
            let e2 = pts[2] - p0;
            let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
            let det = g.determinant();
            if det <= 1e-14 * g[(0, 0)] * g[(1, 1)] || det <= 0.0 {
                return None;
            }
            let rhs = Vector2::new(-p0.dot(&e1), -p0.dot(&e2));
            let mu = g.try_inverse()? * rhs;
            Some(vec![1.0 - mu.x - mu.y, mu.x, mu.y])
        }
        4 => {
            let e = Matrix3::from_columns(&[pts[1] - p0, pts[2] - p0, pts[3] - p0]);
            let det = e.determinant();
            let scale = e.column(0).norm() * e.column(1).norm() * e.column(2).norm();
            if det.abs() <= 1e-12 * scale || scale == 0.0 {
                return None;
            }
            let mu = e.try_inverse()? * (-p0);
            Some(vec![1.0 - mu.x - mu.y - mu.z, mu.x, mu.y, mu.z])
        }
        _ => None,
    }
}
