//! Convex proximity queries.
//!
//! Every [`Shape`] is handled as a polytope core (point, segment, box, hull)
//! inflated by a radius. Signed distance commutes with inflation
//! (`sd(A ⊕ rA, B ⊕ rB) = sd(A, B) - rA - rB`, for separated and overlapping
//! bodies alike), so GJK and EPA only ever run on polytopes and spheres and
//! capsules get exact results. Pairs whose cores are both points or segments
//! skip the iterative solvers entirely.
//!
//! Normals point from body B toward body A, and witness points always satisfy
//! `normal · (point_a - point_b) = signed_distance`.

mod epa;
mod gjk;
mod shape;

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shape::{Shape, MAX_HULL_VERTICES};

use gjk::{GjkOutcome, Placed};

use crate::pose::Pose;

/// Iteration cap shared by GJK and EPA.
pub const DEFAULT_MAX_ITERATIONS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    /// Separation distance if positive, minus the penetration depth if negative.
    pub signed_distance: f64,
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    /// Unit vector from B toward A; moving A along it increases the distance.
    pub normal: Vector3<f64>,
}

impl DistanceResult {
    /// The same query with the bodies swapped.
    pub fn swapped(&self) -> Self {
        DistanceResult { signed_distance: self.signed_distance, point_a: self.point_b, point_b: self.point_a, normal: -self.normal }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    /// The iterative solver did not converge; `best` holds its last estimate,
    /// biased toward a smaller signed distance.
    #[error("{algorithm} failed: {reason} (best estimate {:.6})", best.signed_distance)]
    NumericalFailure { algorithm: &'static str, reason: &'static str, best: DistanceResult },
}

impl GeometryError {
    pub fn best_estimate(&self) -> &DistanceResult {
        match self {
            GeometryError::NumericalFailure { best, .. } => best,
        }
    }
}

/// Outcome of a pure distance query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GjkDistance {
    Separated(DistanceResult),
    /// The bodies touch or overlap; use [`epa_penetration`].
    Intersecting,
}

struct Query<'a> {
    a: Placed<'a>,
    b: Placed<'a>,
    ra: f64,
    rb: f64,
}

impl<'a> Query<'a> {
    fn new(shape_a: &'a Shape, iso_a: &'a Isometry3<f64>, shape_b: &'a Shape, iso_b: &'a Isometry3<f64>) -> Self {
        let (ca, ra) = shape_a.core();
        let (cb, rb) = shape_b.core();
        Query { a: Placed { core: ca, iso: iso_a }, b: Placed { core: cb, iso: iso_b }, ra, rb }
    }

    /// Inflates a core-level result (`core_sd` between the cores, witnesses on
    /// the cores, `normal` from B to A) to the full shapes.
    fn inflate(&self, core_sd: f64, ca: Vector3<f64>, cb: Vector3<f64>, normal: Vector3<f64>) -> DistanceResult {
        DistanceResult { signed_distance: core_sd - self.ra - self.rb, point_a: ca - normal * self.ra, point_b: cb + normal * self.rb, normal }
    }

    fn closed_form(&self) -> Option<DistanceResult> {
        let (a0, a1) = self.a.core.as_segment()?;
        let (b0, b1) = self.b.core.as_segment()?;
        let (ia, ib) = (self.a.iso, self.b.iso);
        let pa = (ia * nalgebra::Point3::from(a0)).coords;
        let qa = (ia * nalgebra::Point3::from(a1)).coords;
        let pb = (ib * nalgebra::Point3::from(b0)).coords;
        let qb = (ib * nalgebra::Point3::from(b1)).coords;
        let (ca, cb) = closest_points_segments(&pa, &qa, &pb, &qb);
        let diff = ca - cb;
        let dist = diff.norm();
        let normal = if dist > 1e-12 { diff / dist } else { fallback_normal(&(qa - pa), &(qb - pb), &(ia.translation.vector - ib.translation.vector)) };
        Some(self.inflate(dist, ca, cb, normal))
    }

    /// Core-level GJK; the inner `Err` carries the final simplex when the cores intersect.
    fn core_distance(&self) -> Result<Result<DistanceResult, Vec<gjk::Vertex>>, GeometryError> {
        match gjk::gjk(&self.a, &self.b, DEFAULT_MAX_ITERATIONS) {
            Ok(GjkOutcome::Separated { distance, point_a, point_b }) => {
                let normal = (point_a - point_b) / distance;
                Ok(Ok(self.inflate(distance, point_a, point_b, normal)))
            }
            Ok(GjkOutcome::Intersecting { simplex }) => Ok(Err(simplex)),
            Err(f) => {
                let diff = f.point_a - f.point_b;
                let normal = if f.distance > 0.0 { diff / diff.norm().max(f64::MIN_POSITIVE) } else { Vector3::x() };
                // A non-converged GJK estimate overstates the distance; report zero-core distance.
                let best = self.inflate(0.0, f.point_a, f.point_b, normal);
                Err(GeometryError::NumericalFailure { algorithm: "GJK", reason: "iteration limit reached", best })
            }
        }
    }

    fn core_penetration(&self, simplex: &[gjk::Vertex]) -> Result<DistanceResult, GeometryError> {
        match epa::epa(&self.a, &self.b, simplex, DEFAULT_MAX_ITERATIONS) {
            Ok(r) => Ok(self.inflate(-r.depth, r.point_a, r.point_b, -r.direction)),
            Err(f) => {
                let r = f.fallback;
                let best = self.inflate(-r.depth, r.point_a, r.point_b, -r.direction);
                Err(GeometryError::NumericalFailure { algorithm: "EPA", reason: f.reason, best })
            }
        }
    }

    fn signed_distance(&self) -> Result<DistanceResult, GeometryError> {
        if let Some(r) = self.closed_form() {
            return Ok(r);
        }
        match self.core_distance()? {
            Ok(r) => Ok(r),
            Err(simplex) => self.core_penetration(&simplex),
        }
    }
}

/// A unit normal for coincident closest points: perpendicular to both segments
/// when possible, otherwise along the offset between the body origins.
fn fallback_normal(da: &Vector3<f64>, db: &Vector3<f64>, offset: &Vector3<f64>) -> Vector3<f64> {
    let c = da.cross(db);
    if c.norm() > 1e-12 {
        let n = c.normalize();
        return if n.dot(offset) < 0.0 { -n } else { n };
    }
    let axis = if da.norm() > 1e-12 {
        *da
    } else if db.norm() > 1e-12 {
        *db
    } else {
        Vector3::zeros()
    };
    let mut cand = offset - axis * (axis.dot(offset) / axis.norm_squared().max(f64::MIN_POSITIVE));
    if cand.norm() <= 1e-12 {
        cand = if axis.norm() > 1e-12 { axis.cross(&Vector3::x()) } else { Vector3::x() };
        if cand.norm() <= 1e-12 {
            cand = axis.cross(&Vector3::y());
        }
    }
    cand.normalize()
}

/// Closest points between segments `[p1, q1]` and `[p2, q2]` (either may be degenerate).
pub fn closest_points_segments(p1: &Vector3<f64>, q1: &Vector3<f64>, p2: &Vector3<f64>, q2: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    const EPS: f64 = 1e-24;
    let (s, t);
    if a <= EPS && e <= EPS {
        return (*p1, *p2);
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

/// Separation distance between two convex bodies.
///
/// Returns [`GjkDistance::Intersecting`] when the bodies touch or overlap.
pub fn gjk_distance(shape_a: &Shape, pose_a: &Pose, shape_b: &Shape, pose_b: &Pose) -> Result<GjkDistance, GeometryError> {
    let q = Query::new(shape_a, pose_a.isometry(), shape_b, pose_b.isometry());
    let r = match q.closed_form() {
        Some(r) => r,
        None => match q.core_distance()? {
            Ok(r) => r,
            Err(_) => return Ok(GjkDistance::Intersecting),
        },
    };
    Ok(if r.signed_distance > 0.0 { GjkDistance::Separated(r) } else { GjkDistance::Intersecting })
}

/// Penetration query. The returned `signed_distance` is minus the length of
/// the smallest translation of A that separates the bodies, and `normal` is
/// the direction of that translation. Called on separated bodies it returns
/// their (positive) distance instead.
pub fn epa_penetration(shape_a: &Shape, pose_a: &Pose, shape_b: &Shape, pose_b: &Pose) -> Result<DistanceResult, GeometryError> {
    Query::new(shape_a, pose_a.isometry(), shape_b, pose_b.isometry()).signed_distance()
}

/// Signed distance between two convex bodies: distance when apart, minus
/// penetration depth when overlapping.
pub fn signed_distance(shape_a: &Shape, pose_a: &Pose, shape_b: &Shape, pose_b: &Pose) -> Result<DistanceResult, GeometryError> {
    signed_distance_iso(shape_a, pose_a.isometry(), shape_b, pose_b.isometry())
}

/// [`signed_distance`] on raw isometries, for callers that already composed link frames.
pub fn signed_distance_iso(shape_a: &Shape, iso_a: &Isometry3<f64>, shape_b: &Shape, iso_b: &Isometry3<f64>) -> Result<DistanceResult, GeometryError> {
    Query::new(shape_a, iso_a, shape_b, iso_b).signed_distance()
}
