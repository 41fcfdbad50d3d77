//! Penetration depth between intersecting polytope cores (expanding polytope).

use nalgebra::Vector3;

use super::gjk::{support, Placed, Vertex};

type V3 = Vector3<f64>;

#[derive(Debug)]
pub(crate) struct EpaResult {
    pub depth: f64,
    /// Outward normal of the Minkowski difference `A - B` at its closest boundary point.
    pub direction: V3,
    pub point_a: V3,
    pub point_b: V3,
}

#[derive(Debug)]
pub(crate) struct EpaFailure {
    /// Conservative (largest observed upper bound) depth estimate.
    pub fallback: EpaResult,
    pub reason: &'static str,
}

#[derive(Clone, Copy, Debug)]
struct Face {
    v: [usize; 3],
    normal: V3,
    dist: f64,
}

const SEARCH_DIRS: [[f64; 3]; 14] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
    [1.0, 1.0, 1.0],
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
];

pub(crate) fn epa(a: &Placed, b: &Placed, simplex: &[Vertex], max_iter: usize) -> Result<EpaResult, EpaFailure> {
    let mut pts: Vec<Vertex> = Vec::with_capacity(32);
    let scale = simplex.iter().map(|s| s.w.norm()).fold(1e-3, f64::max);
    let tol = 1e-10 * scale;

    for s in simplex {
        try_add_independent(&mut pts, *s, tol);
    }
    for d in SEARCH_DIRS {
        if pts.len() == 4 {
            break;
        }
        let d = V3::from(d);
        for dir in growth_directions(&pts, &d) {
            let s = support(a, b, &dir);
            if try_add_independent(&mut pts, s, tol) {
                break;
            }
        }
    }
    if pts.len() < 4 {
        return Err(failure_from_supports(a, b, "minkowski difference is not full-dimensional"));
    }

    let interior = pts.iter().map(|p| p.w).sum::<V3>() / 4.0;
    let mut faces: Vec<Face> = Vec::with_capacity(64);
    for tri in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        match make_face(&pts, tri, &interior) {
            Some(f) => faces.push(f),
            None => return Err(failure_from_supports(a, b, "degenerate initial tetrahedron")),
        }
    }

    let mut upper = f64::INFINITY;
    let mut upper_dir = V3::x();
    for _ in 0..max_iter {
        let face = *faces.iter().min_by(|x, y| x.dist.total_cmp(&y.dist)).expect("polytope has faces");
        let s = support(a, b, &face.normal);
        let reach = face.normal.dot(&s.w);
        if reach < upper {
            upper = reach;
            upper_dir = face.normal;
        }
        if reach - face.dist <= tol.max(1e-12 * reach.abs()) || pts.iter().any(|p| (p.w - s.w).norm() <= tol) {
            return Ok(result_on_face(&pts, &face));
        }
        let new_index = pts.len();
        pts.push(s);

        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut kept: Vec<Face> = Vec::with_capacity(faces.len() + 4);
        for f in &faces {
            let visible = f.normal.dot(&(s.w - pts[f.v[0]].w)) > tol;
            if visible {
                for (i, j) in [(f.v[0], f.v[1]), (f.v[1], f.v[2]), (f.v[2], f.v[0])] {
                    if let Some(pos) = horizon.iter().position(|&(p, q)| p == j && q == i) {
                        horizon.swap_remove(pos);
                    } else {
                        horizon.push((i, j));
                    }
                }
            } else {
                kept.push(*f);
            }
        }
        if horizon.is_empty() || kept.len() == faces.len() {
            // The support point did not see any face: numerically converged on `face`.
            pts.pop();
            return Ok(result_on_face(&pts, &face));
        }
        for (i, j) in horizon {
            match make_face(&pts, [i, j, new_index], &interior) {
                Some(f) => kept.push(f),
                None => return Err(EpaFailure { fallback: fallback(&pts, upper, upper_dir, a, b), reason: "degenerate face during expansion" }),
            }
        }
        faces = kept;
    }
    Err(EpaFailure { fallback: fallback(&pts, upper, upper_dir, a, b), reason: "iteration limit reached" })
}

fn growth_directions(pts: &[Vertex], d: &V3) -> Vec<V3> {
    match pts.len() {
        0 | 1 => vec![*d],
        2 => {
            let e = pts[1].w - pts[0].w;
            let perp = d.cross(&e);
            if perp.norm() > 1e-12 {
                vec![perp, -perp]
            } else {
                vec![]
            }
        }
        _ => {
            let n = (pts[1].w - pts[0].w).cross(&(pts[2].w - pts[0].w));
            vec![n, -n]
        }
    }
}

fn try_add_independent(pts: &mut Vec<Vertex>, s: Vertex, tol: f64) -> bool {
    let ok = match pts.len() {
        0 => true,
        1 => (s.w - pts[0].w).norm() > tol,
        2 => {
            let e = pts[1].w - pts[0].w;
            e.cross(&(s.w - pts[0].w)).norm() > tol * e.norm()
        }
        3 => {
            let n = (pts[1].w - pts[0].w).cross(&(pts[2].w - pts[0].w));
            n.norm() > 0.0 && (n.normalize().dot(&(s.w - pts[0].w))).abs() > tol
        }
        _ => false,
    };
    if ok {
        pts.push(s);
    }
    ok
}

fn make_face(pts: &[Vertex], v: [usize; 3], interior: &V3) -> Option<Face> {
    let (p0, p1, p2) = (pts[v[0]].w, pts[v[1]].w, pts[v[2]].w);
    let n = (p1 - p0).cross(&(p2 - p0));
    let len = n.norm();
    if len <= 1e-300 || !len.is_finite() {
        return None;
    }
    let mut normal = n / len;
    let mut v = v;
    if normal.dot(&(p0 - interior)) < 0.0 {
        normal = -normal;
        v.swap(1, 2);
    }
    Some(Face { v, normal, dist: normal.dot(&p0) })
}

fn result_on_face(pts: &[Vertex], face: &Face) -> EpaResult {
    let proj = face.normal * face.dist;
    let bary = triangle_barycentric(&proj, &pts[face.v[0]].w, &pts[face.v[1]].w, &pts[face.v[2]].w);
    let mut pa = V3::zeros();
    let mut pb = V3::zeros();
    for (k, l) in face.v.iter().zip(bary) {
        pa += pts[*k].a * l;
        pb += pts[*k].b * l;
    }
    EpaResult { depth: face.dist.max(0.0), direction: face.normal, point_a: pa, point_b: pb }
}

fn triangle_barycentric(p: &V3, a: &V3, b: &V3, c: &V3) -> [f64; 3] {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    if denom.abs() <= f64::MIN_POSITIVE {
        return [1.0, 0.0, 0.0];
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}

fn fallback(pts: &[Vertex], upper: f64, dir: V3, a: &Placed, b: &Placed) -> EpaResult {
    if !upper.is_finite() || pts.is_empty() {
        return failure_from_supports(a, b, "").fallback;
    }
    let s = support(a, b, &dir);
    EpaResult { depth: upper.max(0.0), direction: dir, point_a: s.b + dir * upper, point_b: s.b }
}

/// Smallest support value over a fixed direction set: an upper bound on the depth.
fn failure_from_supports(a: &Placed, b: &Placed, reason: &'static str) -> EpaFailure {
    let mut best: Option<(f64, V3, Vertex)> = None;
    for d in SEARCH_DIRS {
        let dir = V3::from(d).normalize();
        let s = support(a, b, &dir);
        let reach = dir.dot(&s.w);
        if best.as_ref().is_none_or(|(r, ..)| reach < *r) {
            best = Some((reach, dir, s));
        }
    }
    let (reach, dir, s) = best.expect("direction set is nonempty");
    EpaFailure { fallback: EpaResult { depth: reach.max(0.0), direction: dir, point_a: s.b + dir * reach.max(0.0), point_b: s.b }, reason }
}
