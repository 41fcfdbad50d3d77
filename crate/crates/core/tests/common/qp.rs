//! Exhaustive active-set enumeration for small projection problems.
//!
//! For `min ‖v − t‖²` s.t. `c_i·v ≥ d_i`, a point is optimal iff it is the
//! projection of `t` onto `{c_i·v = d_i, i ∈ S}` for some linearly independent
//! `S` with nonnegative multipliers and every other row satisfied. The problem
//! is strictly convex, so the first such `S` found is the answer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub target: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub bound: Vec<f64>,
}

impl Instance {
    /// All rows including the box, as `(c, d)`.
    pub fn rows(&self) -> Vec<(DVector<f64>, f64)> {
        let n = self.target.len();
        let mut rows: Vec<(DVector<f64>, f64)> = (0..self.a.nrows()).map(|i| (self.a.row(i).transpose(), self.b[i])).collect();
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            rows.push((e.clone(), -self.bound[j]));
            rows.push((-e, -self.bound[j]));
        }
        rows
    }

    pub fn objective(&self, v: &DVector<f64>) -> f64 {
        (v - &self.target).norm_squared()
    }

    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        self.rows().iter().map(|(c, d)| d - c.dot(v)).fold(0.0_f64, f64::max)
    }
}

fn combinations(m: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..m {
            cur.push(i);
            if rec(i + 1, m, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(0, m, k, &mut Vec::new(), f)
}

/// The optimal point, or `None` when the instance is infeasible.
pub fn enumerate(inst: &Instance) -> Option<DVector<f64>> {
    let rows = inst.rows();
    let n = inst.target.len();
    let tol = 1e-9;
    let mut found = None;
    for k in 0..=n.min(rows.len()) {
        let done = combinations(rows.len(), k, &mut |set| {
            let v = if set.is_empty() {
                inst.target.clone()
            } else {
                let c = DMatrix::from_fn(n, set.len(), |i, s| rows[set[s]].0[i]);
                let gram = c.transpose() * &c;
                let Some(ch) = gram.clone().cholesky() else {
                    return false;
                };
                if gram.determinant().abs() < 1e-12 {
                    return false;
                }
                let rhs = DVector::from_iterator(set.len(), set.iter().map(|&i| rows[i].1)) - c.transpose() * &inst.target;
                let lambda = ch.solve(&rhs);
                if lambda.iter().any(|&l| l < -tol) {
                    return false;
                }
                &inst.target + c * lambda
            };
            if rows.iter().all(|(c, d)| c.dot(&v) - d >= -tol) {
                found = Some(v);
                true
            } else {
                false
            }
        });
        if done {
            break;
        }
    }
    found
}

/// Up to 6 variables and 8 rows. With `feasible`, the rows are built around
/// a point inside the box.
pub fn random_instance(rng: &mut ChaCha8Rng, feasible: bool) -> Instance {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=8);
    let bound: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
    let target = DVector::from_fn(n, |j, _| rng.gen_range(-2.5..2.5) * bound[j]);
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = if feasible {
        let inside = DVector::from_fn(n, |j, _| rng.gen_range(-1.0..1.0) * bound[j]);
        DVector::from_fn(m, |i, _| a.row(i).transpose().dot(&inside) - rng.gen_range(0.0..0.5))
    } else {
        DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.5))
    };
    Instance { target, a, b, bound }
}
