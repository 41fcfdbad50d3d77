//! Barrier-function velocity filter.
//!
//! Each checked pair with signed distance `h` contributes the row
//! `n̂ᵀ J_A v ≥ −α h + margin` (environment) or `n̂ᵀ (J_A − J_B) v ≥ −α h + margin`
//! (self), where `J_A`, `J_B` are point Jacobians at the witness points. The
//! margin `2·J_max·q̇_max` (doubled for self pairs) absorbs the gap between
//! `n̂ᵀJ_A` and the true gradient of `h` at nonsmooth configurations.

use nalgebra::{DMatrix, DVector, Matrix3xX};
use serde::{Deserialize, Serialize};

use crate::kinematics::{ChainFrames, RobotModel};
use crate::qp::{self, QpOptions, QpStatus};
use crate::scene::{BodyRef, PairDistance, PairKind, PairQuery, PlanningScene};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Uses the configuration-independent bound `J_max`.
    #[default]
    Global,
    /// Uses the spectral norms of the witness Jacobians at the current
    /// configuration. Less conservative, but not covered by the global bound.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfParams {
    /// Linear class-K gain [1/s].
    pub alpha: f64,
    #[serde(default = "yes")]
    pub robust_margin: bool,
    #[serde(default)]
    pub margin_mode: MarginMode,
    /// Jacobian norm bound; estimated from the model by [`CbfParams::resolve`] when absent.
    #[serde(default)]
    pub j_max: Option<f64>,
    /// Per-joint speed bound [rad/s or m/s], enforced as a box in the QP.
    pub q_dot_max: f64,
    /// Number of nearest pairs turned into constraints.
    #[serde(default = "default_max_pairs")]
    pub max_pairs: usize,
}

fn yes() -> bool {
    true
}

fn default_max_pairs() -> usize {
    10
}

impl CbfParams {
    pub fn new(alpha: f64, q_dot_max: f64) -> Self {
        CbfParams { alpha, robust_margin: true, margin_mode: MarginMode::Global, j_max: None, q_dot_max, max_pairs: default_max_pairs() }
    }

    pub fn without_margin(mut self) -> Self {
        self.robust_margin = false;
        self
    }

    pub fn with_j_max(mut self, j_max: f64) -> Self {
        self.j_max = Some(j_max);
        self
    }

    /// Fills in `j_max` from the model (default sampling) if it was not given,
    /// then validates.
    pub fn resolve(mut self, model: &RobotModel) -> Result<Self> {
        if self.j_max.is_none() {
            self.j_max = Some(model.jacobian_norm_bound(crate::kinematics::JacobianBoundConfig::default().sample_count, 0));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.q_dot_max > 0.0 && self.q_dot_max.is_finite()) {
            return Err(Error::Config(format!("q_dot_max must be positive, got {}", self.q_dot_max)));
        }
        if self.max_pairs == 0 {
            return Err(Error::Config("max_pairs must be at least 1".into()));
        }
        if let Some(j) = self.j_max {
            if !(j > 0.0 && j.is_finite()) {
                return Err(Error::Config(format!("j_max must be positive, got {j}")));
            }
        } else if self.robust_margin && self.margin_mode == MarginMode::Global {
            return Err(Error::Config("robust margin needs j_max".into()));
        }
        Ok(())
    }

    pub fn j_max_or_zero(&self) -> f64 {
        self.j_max.unwrap_or(0.0)
    }
}

/// `a·v ≥ b` for one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
    pub pair: PairQuery,
}

/// Builds the constraint row for one evaluated pair at the frames it was evaluated at.
pub fn build_constraint_at(scene: &PlanningScene, frames: &ChainFrames, pd: &PairDistance, params: &CbfParams) -> Result<LinearConstraint> {
    let r = &pd.result;
    if !r.signed_distance.is_finite() {
        return Err(Error::Numerical(format!("pair {} has no usable distance", scene.pair_name(&pd.pair))));
    }
    let bodies = scene.robot_bodies();
    let body_a = bodies.get(pd.pair.body_a).ok_or_else(|| Error::invalid("pair references a missing robot body"))?;
    let ja = frames.point_jacobian_world(body_a.link, &r.point_a);
    let (jac, factor, local_norm): (Matrix3xX<f64>, f64, f64) = match (pd.pair.kind, pd.pair.body_b) {
        (PairKind::Environment, _) => {
            let norm = crate::kinematics::spectral_norm(&ja);
            (ja, 2.0, norm)
        }
        (PairKind::SelfCollision, BodyRef::Robot(ib)) => {
            let body_b = bodies.get(ib).ok_or_else(|| Error::invalid("pair references a missing robot body"))?;
            let jb = frames.point_jacobian_world(body_b.link, &r.point_b);
            let norm = crate::kinematics::spectral_norm(&ja) + crate::kinematics::spectral_norm(&jb);
            (ja - jb, 4.0, norm)
        }
        (PairKind::SelfCollision, BodyRef::Obstacle(_)) => return Err(Error::invalid("self pair with an obstacle body")),
    };
    let a = (r.normal.transpose() * jac).transpose();
    let margin = if !params.robust_margin {
        0.0
    } else {
        match params.margin_mode {
            MarginMode::Global => factor * params.j_max_or_zero() * params.q_dot_max,
            // Self pairs already sum two norms.
            MarginMode::Local => 2.0 * local_norm * params.q_dot_max,
        }
    };
    Ok(LinearConstraint { a: DVector::from_column_slice(a.as_slice()), b: -params.alpha * r.signed_distance + margin, pair: pd.pair })
}

/// Builds the constraint row for `pd`, evaluated at configuration `q`.
pub fn build_constraint(scene: &PlanningScene, model: &RobotModel, q: &[f64], pd: &PairDistance, params: &CbfParams) -> Result<LinearConstraint> {
    let frames = model.frames(q)?;
    build_constraint_at(scene, &frames, pd, params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterDiagnostics {
    pub status: QpStatus,
    /// Indices into the constraint list of rows holding with equality.
    pub active: Vec<usize>,
    pub active_bounds: Vec<(usize, bool)>,
    /// `a·v* − b` per constraint.
    pub slacks: Vec<f64>,
    pub iterations: usize,
}

/// Minimal modification of `v_des` satisfying every constraint and the speed box.
///
/// An infeasible problem is not an error: the least-violation point is
/// returned with [`QpStatus::Infeasible`] and the caller must stop. A solver
/// failure is an error; the safe command in that case is zero velocity.
pub fn filter_velocity(v_des: &DVector<f64>, constraints: &[LinearConstraint], params: &CbfParams) -> Result<(DVector<f64>, FilterDiagnostics)> {
    let n = v_des.len();
    if let Some(c) = constraints.iter().find(|c| c.a.len() != n) {
        return Err(Error::invalid(format!("constraint has {} columns, expected {n}", c.a.len())));
    }
    let a = DMatrix::from_fn(constraints.len(), n, |i, j| constraints[i].a[j]);
    let b = DVector::from_iterator(constraints.len(), constraints.iter().map(|c| c.b));
    let sol = qp::solve(v_des, &a, &b, &vec![params.q_dot_max; n], &QpOptions::default())?;
    let diag = FilterDiagnostics { status: sol.status, active: sol.active, active_bounds: sol.active_bounds, slacks: sol.slacks, iterations: sol.iterations };
    Ok((sol.v, diag))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Optimal,
    /// Constraints conflict; the robot holds position.
    Infeasible,
    /// A geometry query among the nearest pairs failed; the robot holds position.
    GeometryFailure,
    /// The QP solver did not converge; the robot holds position.
    SolverFailure,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::GeometryFailure => "geometry_failure",
            StepStatus::SolverFailure => "solver_failure",
        }
    }

    pub fn holds(self) -> bool {
        self != StepStatus::Optimal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub q_next: Vec<f64>,
    /// The velocity applied over the step (zero when holding).
    pub v_star: DVector<f64>,
    /// Minimum signed distance at the start of the step.
    pub h_min: f64,
    /// Name of the nearest pair, if any pair is checked.
    pub nearest: Option<String>,
    pub status: StepStatus,
    pub diagnostics: Option<FilterDiagnostics>,
}

/// One explicit-Euler step of the filtered system.
pub fn cbf_step(model: &RobotModel, scene: &PlanningScene, q: &[f64], v_des: &DVector<f64>, params: &CbfParams, dt: f64) -> Result<StepOutcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    model.check_dimension(q)?;
    if v_des.len() != q.len() {
        return Err(Error::invalid(format!("v_des has length {}, expected {}", v_des.len(), q.len())));
    }
    let frames = model.frames(q)?;
    let (h_min, pairs) = scene.min_signed_distance_at(&frames);
    let nearest = pairs.first().map(|p| scene.pair_name(&p.pair));
    let hold = |status, diagnostics| StepOutcome { q_next: q.to_vec(), v_star: DVector::zeros(q.len()), h_min, nearest: nearest.clone(), status, diagnostics };

    let chosen = &pairs[..pairs.len().min(params.max_pairs)];
    if chosen.iter().any(|p| p.failed) {
        return Ok(hold(StepStatus::GeometryFailure, None));
    }
    let constraints = chosen.iter().map(|p| build_constraint_at(scene, &frames, p, params)).collect::<Result<Vec<_>>>()?;
    let (v, diag) = match filter_velocity(v_des, &constraints, params) {
        Ok(x) => x,
        Err(Error::Numerical(msg)) => {
            log::warn!("QP failure, holding: {msg}");
            return Ok(hold(StepStatus::SolverFailure, None));
        }
        Err(e) => return Err(e),
    };
    if diag.status == QpStatus::Infeasible {
        return Ok(hold(StepStatus::Infeasible, Some(diag)));
    }
    let q_next = q.iter().zip(v.iter()).map(|(qi, vi)| qi + dt * vi).collect();
    Ok(StepOutcome { q_next, v_star: v, h_min, nearest, status: StepStatus::Optimal, diagnostics: Some(diag) })
}
