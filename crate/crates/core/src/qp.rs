//! Euclidean projection onto a polyhedron intersected with a box:
//!
//! ```text
//! minimize ‖v − target‖²  subject to  A v ≥ b,  |v_j| ≤ bound_j
//! ```
//!
//! Solved with the dual active-set method of Goldfarb and Idnani specialised
//! to an identity Hessian. The iterate starts at the unconstrained minimum and
//! the lowest-index violated row enters the working set, so runs are
//! deterministic. General rows come first, then for each bounded joint the
//! rows `v_j ≥ -bound_j` and `-v_j ≥ -bound_j`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    /// No point satisfies every row; the solution minimises total squared
    /// violation of the general rows while keeping the box.
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub v: DVector<f64>,
    pub status: QpStatus,
    /// Indices of general rows in the final working set.
    pub active: Vec<usize>,
    /// Joints whose bound is active, with `true` for the upper bound.
    pub active_bounds: Vec<(usize, bool)>,
    /// `a_i·v − b_i` for every general row.
    pub slacks: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    /// Rows with residual above `-feasibility_tol · (1 + |b_i|)` count as satisfied.
    pub feasibility_tol: f64,
    /// Working-set changes allowed; `None` scales with problem size.
    pub max_iterations: Option<usize>,
    /// Weight of the distance-to-target term in the infeasible fallback.
    pub relaxation_weight: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { feasibility_tol: 1e-11, max_iterations: None, relaxation_weight: 1e-6 }
    }
}

struct Rows {
    c: Vec<DVector<f64>>,
    d: Vec<f64>,
    /// For box rows, `(joint, is_upper)`.
    bound_of: Vec<Option<(usize, bool)>>,
}

fn assemble(a: &DMatrix<f64>, b: &DVector<f64>, bound: &[f64]) -> Rows {
    let n = a.ncols();
    let mut rows = Rows { c: Vec::new(), d: Vec::new(), bound_of: Vec::new() };
    for i in 0..a.nrows() {
        rows.c.push(a.row(i).transpose());
        rows.d.push(b[i]);
        rows.bound_of.push(None);
    }
    for (j, &u) in bound.iter().enumerate() {
        if !u.is_finite() {
            continue;
        }
        for (sign, upper) in [(1.0, false), (-1.0, true)] {
            let mut e = DVector::zeros(n);
            e[j] = sign;
            rows.c.push(e);
            rows.d.push(-u);
            rows.bound_of.push(Some((j, upper)));
        }
    }
    rows
}

enum Outcome {
    Optimal { x: DVector<f64>, active: Vec<usize>, iterations: usize },
    Infeasible { iterations: usize },
}

/// The dual active-set iteration proper.
fn dual_active_set(target: &DVector<f64>, rows: &Rows, tol: f64, max_iter: usize) -> Result<Outcome> {
    let mut x = target.clone();
    let mut act: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        let violated = (0..rows.c.len()).filter(|i| !act.contains(i)).find(|&i| rows.c[i].dot(&x) - rows.d[i] < -tol * (1.0 + rows.d[i].abs()));
        let Some(p) = violated else {
            return Ok(Outcome::Optimal { x, active: act, iterations });
        };
        let np = &rows.c[p];
        let mut up = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::Numerical(format!("QP did not converge within {max_iter} iterations")));
            }
            let (z, r) = step_directions(rows, &act, np);
            let zz = z.norm_squared();
            let s = np.dot(&x) - rows.d[p];
            let full = if zz > 1e-24 * np.norm_squared().max(1e-300) { -s / zz } else { f64::INFINITY };
            let mut partial = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = u[k] / rk;
                    if t < partial {
                        partial = t;
                        drop = Some(k);
                    }
                }
            }
            let t = full.min(partial);
            if !t.is_finite() {
                return Ok(Outcome::Infeasible { iterations });
            }
            for (k, rk) in r.iter().enumerate() {
                u[k] -= t * rk;
            }
            up += t;
            if full.is_finite() {
                x += &z * t;
            }
            if full <= partial {
                act.push(p);
                u.push(up);
                break;
            }
            let k = drop.expect("partial step has a blocking row");
            act.remove(k);
            u.remove(k);
        }
    }
}

/// Primal direction `z` (component of `np` orthogonal to the active normals)
/// and dual direction `r` (coefficients of `np` in the active normals).
fn step_directions(rows: &Rows, act: &[usize], np: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
    if act.is_empty() {
        return (np.clone(), Vec::new());
    }
    let n = np.len();
    let big_n = DMatrix::from_fn(n, act.len(), |i, k| rows.c[act[k]][i]);
    let gram = big_n.transpose() * &big_n;
    let rhs = big_n.transpose() * np;
    let r = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(act.len())),
    };
    let z = np - &big_n * &r;
    (z, r.iter().copied().collect())
}

fn default_iterations(rows: &Rows, n: usize) -> usize {
    10 * (rows.c.len() + n) + 100
}

/// Projects `target` onto `{v : a v ≥ b, |v_j| ≤ bound_j}`.
///
/// Infinite entries of `bound` leave that joint unbounded; the box must
/// contain the origin (`bound_j ≥ 0`). When the general rows conflict, the
/// returned point minimises their summed squared violation within the box,
/// with a small pull toward `target` to make it unique.
pub fn solve(target: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, bound: &[f64], opts: &QpOptions) -> Result<QpSolution> {
    let n = target.len();
    let m = a.nrows();
    if a.ncols() != n || b.len() != m || bound.len() != n {
        return Err(Error::invalid(format!("QP dimensions disagree: target {n}, rows {m}x{}, rhs {}, bounds {}", a.ncols(), b.len(), bound.len())));
    }
    if target.iter().chain(a.iter()).chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("QP data must be finite"));
    }
    if bound.iter().any(|&u| u.is_nan() || u < 0.0) {
        return Err(Error::invalid("QP bounds must be nonnegative"));
    }

    let rows = assemble(a, b, bound);
    let max_iter = opts.max_iterations.unwrap_or_else(|| default_iterations(&rows, n));
    match dual_active_set(target, &rows, opts.feasibility_tol, max_iter)? {
        Outcome::Optimal { x, active, iterations } => Ok(finish(x, QpStatus::Optimal, &rows, &active, m, iterations, a, b)),
        Outcome::Infeasible { iterations } => {
            let (x, extra) = relaxed(target, a, b, bound, opts)?;
            let active: Vec<usize> = (0..m).filter(|&i| (a.row(i).dot(&x.transpose()) - b[i]).abs() <= 1e-9 * (1.0 + b[i].abs())).collect();
            let mut sol = finish(x, QpStatus::Infeasible, &rows, &[], m, iterations + extra, a, b);
            sol.active = active;
            sol.active_bounds = (0..n)
                .filter(|&j| bound[j].is_finite() && (sol.v[j].abs() - bound[j]).abs() <= 1e-12 * (1.0 + bound[j]))
                .map(|j| (j, sol.v[j] > 0.0))
                .collect();
            Ok(sol)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(x: DVector<f64>, status: QpStatus, rows: &Rows, active: &[usize], m: usize, iterations: usize, a: &DMatrix<f64>, b: &DVector<f64>) -> QpSolution {
    let slacks = (0..m).map(|i| a.row(i).transpose().dot(&x) - b[i]).collect();
    let mut general: Vec<usize> = active.iter().copied().filter(|&i| i < m).collect();
    general.sort_unstable();
    let mut active_bounds: Vec<(usize, bool)> = active.iter().filter_map(|&i| rows.bound_of[i]).collect();
    active_bounds.sort_unstable();
    QpSolution { v: x, status, active: general, active_bounds, slacks, iterations }
}

/// Least-violation point: over `(v, s)` minimise `w‖v − target‖² + ‖s‖²`
/// subject to `a v + s ≥ b`, `s ≥ 0` and the box, in variables scaled so the
/// Hessian is the identity.
fn relaxed(target: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, bound: &[f64], opts: &QpOptions) -> Result<(DVector<f64>, usize)> {
    let n = target.len();
    let m = a.nrows();
    let w = opts.relaxation_weight.sqrt();
    let mut t = DVector::zeros(n + m);
    t.rows_mut(0, n).copy_from(&(target * w));
    let mut big_a = DMatrix::zeros(2 * m, n + m);
    let mut big_b = DVector::zeros(2 * m);
    for i in 0..m {
        for j in 0..n {
            big_a[(i, j)] = a[(i, j)] / w;
        }
        big_a[(i, n + i)] = 1.0;
        big_b[i] = b[i];
        big_a[(m + i, n + i)] = 1.0;
    }
    let mut big_bound: Vec<f64> = bound.iter().map(|u| u * w).collect();
    big_bound.extend(std::iter::repeat_n(f64::INFINITY, m));
    let rows = assemble(&big_a, &big_b, &big_bound);
    let max_iter = opts.max_iterations.unwrap_or_else(|| default_iterations(&rows, n + m));
    match dual_active_set(&t, &rows, opts.feasibility_tol, max_iter)? {
        Outcome::Optimal { x, iterations, .. } => Ok((x.rows(0, n) / w, iterations)),
        Outcome::Infeasible { .. } => Err(Error::Numerical("relaxed QP reported infeasible".into())),
    }
}
