use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{check_finite, Error, Result};

/// Convex collision geometry, expressed in its own local frame.
///
/// Capsules are aligned with the local z axis and centred on the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub enum Shape {
    Sphere { radius: f64 },
    Capsule { half_length: f64, radius: f64 },
    Box { half_extents: Vector3<f64> },
    Hull { vertices: Vec<Vector3<f64>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub(crate) enum ShapeRepr {
    Sphere { radius: f64 },
    Capsule { half_length: f64, radius: f64 },
    Box { half_extents: [f64; 3] },
    Hull { vertices: Vec<[f64; 3]> },
}

impl TryFrom<ShapeRepr> for Shape {
    type Error = Error;

    fn try_from(repr: ShapeRepr) -> Result<Self> {
        let shape = match repr {
            ShapeRepr::Sphere { radius } => Shape::Sphere { radius },
            ShapeRepr::Capsule { half_length, radius } => Shape::Capsule { half_length, radius },
            ShapeRepr::Box { half_extents } => Shape::Box { half_extents: Vector3::from(half_extents) },
            ShapeRepr::Hull { vertices } => Shape::Hull { vertices: vertices.into_iter().map(Vector3::from).collect() },
        };
        shape.validate()?;
        Ok(shape)
    }
}

impl From<Shape> for ShapeRepr {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Sphere { radius } => ShapeRepr::Sphere { radius },
            Shape::Capsule { half_length, radius } => ShapeRepr::Capsule { half_length, radius },
            Shape::Box { half_extents } => ShapeRepr::Box { half_extents: half_extents.into() },
            Shape::Hull { vertices } => ShapeRepr::Hull { vertices: vertices.into_iter().map(Into::into).collect() },
        }
    }
}

/// Hull vertex cap; keeps support-function scans bounded for untrusted input.
pub const MAX_HULL_VERTICES: usize = 4096;

fn positive(what: &str, v: f64) -> Result<()> {
    check_finite(what, v)?;
    if v <= 0.0 {
        return Err(Error::invalid(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

impl Shape {
    pub fn sphere(radius: f64) -> Self {
        Shape::Sphere { radius }
    }

    pub fn capsule(half_length: f64, radius: f64) -> Self {
        Shape::Capsule { half_length, radius }
    }

    pub fn cuboid(hx: f64, hy: f64, hz: f64) -> Self {
        Shape::Box { half_extents: Vector3::new(hx, hy, hz) }
    }

    pub fn hull(vertices: Vec<Vector3<f64>>) -> Result<Self> {
        let s = Shape::Hull { vertices };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Sphere { radius } => positive("sphere radius", *radius),
            Shape::Capsule { half_length, radius } => {
                positive("capsule half_length", *half_length)?;
                positive("capsule radius", *radius)
            }
            Shape::Box { half_extents } => half_extents.iter().try_for_each(|h| positive("box half extent", *h)),
            Shape::Hull { vertices } => {
                if vertices.len() < 4 || vertices.len() > MAX_HULL_VERTICES {
                    return Err(Error::invalid(format!("hull needs between 4 and {MAX_HULL_VERTICES} vertices, got {}", vertices.len())));
                }
                for v in vertices {
                    for c in v.iter() {
                        check_finite("hull vertex", *c)?;
                    }
                }
                if !spans_three_dimensions(vertices) {
                    return Err(Error::invalid("hull vertices are coplanar"));
                }
                Ok(())
            }
        }
    }

    /// Half-widths of the local axis-aligned bounding box, with its centre.
    pub fn local_aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Shape::Sphere { radius } => (Vector3::zeros(), Vector3::repeat(*radius)),
            Shape::Capsule { half_length, radius } => (Vector3::zeros(), Vector3::new(*radius, *radius, half_length + radius)),
            Shape::Box { half_extents } => (Vector3::zeros(), *half_extents),
            Shape::Hull { vertices } => {
                let mut lo = vertices[0];
                let mut hi = vertices[0];
                for v in vertices {
                    lo = lo.inf(v);
                    hi = hi.sup(v);
                }
                ((lo + hi) * 0.5, (hi - lo) * 0.5)
            }
        }
    }

    /// The eight corners of the local bounding box.
    pub fn local_aabb_corners(&self) -> [Vector3<f64>; 8] {
        let (c, h) = self.local_aabb();
        std::array::from_fn(|i| {
            let s = |bit: usize| if i & bit == 0 { -1.0 } else { 1.0 };
            c + Vector3::new(s(1) * h.x, s(2) * h.y, s(4) * h.z)
        })
    }

    /// Radius of a ball about the local origin that contains the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Sphere { radius } => *radius,
            Shape::Capsule { half_length, radius } => half_length + radius,
            Shape::Box { half_extents } => half_extents.norm(),
            Shape::Hull { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Splits the shape into a polytope core and an inflation radius: the
    /// shape is the Minkowski sum of the core and a ball of that radius.
    pub(crate) fn core(&self) -> (Core<'_>, f64) {
        match self {
            Shape::Sphere { radius } => (Core::Point, *radius),
            Shape::Capsule { half_length, radius } => (Core::Segment(*half_length), *radius),
            Shape::Box { half_extents } => (Core::Box(*half_extents), 0.0),
            Shape::Hull { vertices } => (Core::Hull(vertices), 0.0),
        }
    }
}

fn spans_three_dimensions(vertices: &[Vector3<f64>]) -> bool {
    let origin = vertices[0];
    let extent = vertices.iter().map(|v| (v - origin).norm()).fold(0.0, f64::max);
    if extent == 0.0 {
        return false;
    }
    let tol = 1e-9 * extent;
    let Some(a) = vertices.iter().map(|v| v - origin).find(|d| d.norm() > tol) else {
        return false;
    };
    let Some(normal) = vertices.iter().map(|v| a.cross(&(v - origin))).find(|n| n.norm() > tol * a.norm()) else {
        return false;
    };
    let normal = normal.normalize();
    vertices.iter().any(|v| normal.dot(&(v - origin)).abs() > tol)
}

/// Polytope part of a shape (points and segments are degenerate polytopes).
#[derive(Clone, Copy, Debug)]
pub(crate) enum Core<'a> {
    Point,
    /// Segment from `-h` to `+h` along local z.
    Segment(f64),
    Box(Vector3<f64>),
    Hull(&'a [Vector3<f64>]),
}

impl Core<'_> {
    /// Farthest core point along `dir` (local frame).
    pub(crate) fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Core::Point => Vector3::zeros(),
            Core::Segment(h) => Vector3::new(0.0, 0.0, if dir.z >= 0.0 { *h } else { -*h }),
            Core::Box(he) => {
                Vector3::new(if dir.x >= 0.0 { he.x } else { -he.x }, if dir.y >= 0.0 { he.y } else { -he.y }, if dir.z >= 0.0 { he.z } else { -he.z })
            }
            Core::Hull(vs) => {
                let mut best = vs[0];
                let mut best_dot = best.dot(dir);
                for v in &vs[1..] {
                    let d = v.dot(dir);
                    if d > best_dot {
                        best_dot = d;
                        best = *v;
                    }
                }
                best
            }
        }
    }

    /// A point in the relative interior of the core.
    pub(crate) fn center(&self) -> Vector3<f64> {
        match self {
            Core::Hull(vs) => vs.iter().sum::<Vector3<f64>>() / vs.len() as f64,
            _ => Vector3::zeros(),
        }
    }

    /// Endpoints for the cores that have a closed-form distance.
    pub(crate) fn as_segment(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        match self {
            Core::Point => Some((Vector3::zeros(), Vector3::zeros())),
            Core::Segment(h) => Some((Vector3::new(0.0, 0.0, -h), Vector3::new(0.0, 0.0, *h))),
            _ => None,
        }
    }
}
