//! Closed-loop rollouts and the checks that go with them.
//!
//! The dynamic rollout replaces the joint-level dynamics by a velocity
//! tracking-error contract `‖ė(t)‖ ≤ M e^{−λt} ‖ė₀‖`, `ė = q̇ − v*`, which is
//! all the full-order safety argument uses. With `C = C_h M ‖ė₀‖ / (λ − α)`
//! and `C_h = J_max`, a start satisfying `h(q₀) ≥ C` keeps
//! `h(q(t)) ≥ y(t) = (h(q₀) − C) e^{−αt} + C e^{−λt}`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cbf::CbfParams;
use crate::kinematics::RobotModel;
use crate::scene::{BodyRef, PairKind, PlanningScene};
use crate::tracker::{rollout, Plant, RolloutConfig, RolloutInputs, TrackerParams, TrackingRun, Trajectory};
use crate::{Error, Result};

/// Kinematic rollout (`q̇ = v*`).
pub fn rollout_kinematic(
    model: &RobotModel,
    scene: &PlanningScene,
    reference: &Trajectory,
    q0: &[f64],
    cbf: &CbfParams,
    tracker: &TrackerParams,
    config: &RolloutConfig,
) -> Result<TrackingRun> {
    crate::tracker::run_filtered_tracking(model, scene, reference, q0, cbf, tracker, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    /// The error decays as `ė(t) = e^{−λt} ė₀` regardless of how `v*` moves (M = 1 exactly).
    #[default]
    FirstOrderError,
    /// Joint velocity is a state driven by `q̈ = −λ (q̇ − v*)`; the error jumps
    /// whenever the filtered command does.
    DoubleIntegratorP,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingPlant {
    /// Error decay rate [1/s].
    pub lambda: f64,
    /// Overshoot constant `M ≥ 1`.
    #[serde(default = "one")]
    pub m_const: f64,
    #[serde(default)]
    pub mode: PlantMode,
}

fn one() -> f64 {
    1.0
}

impl TrackingPlant {
    pub fn new(lambda: f64, mode: PlantMode) -> Self {
        TrackingPlant { lambda, m_const: 1.0, mode }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("plant lambda must be positive, got {}", self.lambda)));
        }
        if !(self.m_const >= 1.0 && self.m_const.is_finite()) {
            return Err(Error::Config(format!("plant m_const must be at least 1, got {}", self.m_const)));
        }
        Ok(())
    }
}

struct ErrorPlant {
    lambda: f64,
    mode: PlantMode,
    /// Joint velocity (double-integrator mode) or the initial velocity until the first step.
    q_dot: DVector<f64>,
    /// Tracking error at the start of the next step (first-order mode).
    error: Option<DVector<f64>>,
    /// `‖ė‖` at the start of every step.
    error_norms: Vec<f64>,
}

impl Plant for ErrorPlant {
    fn step(&mut self, q: &[f64], v_star: &DVector<f64>, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let e = match (self.mode, &self.error) {
            (PlantMode::FirstOrderError, Some(e)) => e.clone(),
            _ => &self.q_dot - v_star,
        };
        self.error_norms.push(e.norm());
        let decay = (-self.lambda * dt).exp();
        // Exact integral of v* + e·exp(−λτ) over the step.
        let gain = -(-self.lambda * dt).exp_m1() / self.lambda;
        let applied: Vec<f64> = (v_star + &e).iter().copied().collect();
        let q_next = q.iter().enumerate().map(|(j, x)| x + dt * v_star[j] + gain * e[j]).collect();
        let e_next = &e * decay;
        self.q_dot = v_star + &e_next;
        self.error = Some(e_next);
        (applied, q_next)
    }
}

/// The comparison function `y(t) = (h₀ − C) e^{−αt} + C e^{−λt}`.
pub fn comparison_function(h0: f64, c: f64, alpha: f64, lambda: f64, t: f64) -> f64 {
    (h0 - c) * (-alpha * t).exp() + c * (-lambda * t).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyCertificate {
    /// Gradient bound of `h`, taken as `J_max`.
    pub c_h: f64,
    pub m_const: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// `‖ė₀‖`; in double-integrator mode the largest error seen at any step.
    pub error_norm: f64,
    /// `C = C_h M ‖ė₀‖ / (λ − α)`.
    pub margin: f64,
    pub h0: f64,
    /// `h(q₀) − margin ≥ 0`.
    pub s_m_member: bool,
    pub min_h_observed: f64,
    /// `min_k (h(q_k) − y(t_k))` over steps without scene events.
    pub worst_comparison_gap: f64,
    /// Largest `‖ė(t_k)‖ − M e^{−λ t_k} ‖ė₀‖` seen.
    pub contract_excess: f64,
    /// Steps excluded from the comparison because a scene event fired there.
    pub excluded_steps: Vec<usize>,
}

impl SafetyCertificate {
    /// True when the start is in the certified set and the comparison bound
    /// held to within `tol`. Outside the set nothing is claimed and this is false.
    pub fn holds(&self, tol: f64) -> bool {
        self.s_m_member && self.worst_comparison_gap >= -tol
    }
}

/// Rollout with the tracking-error plant, plus the certificate.
///
/// Requires `plant.lambda > cbf.alpha` and a resolved `j_max`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_dynamic(
    model: &RobotModel,
    scene: &PlanningScene,
    reference: &Trajectory,
    q0: &[f64],
    q_dot0: &[f64],
    plant: &TrackingPlant,
    cbf: &CbfParams,
    tracker: &TrackerParams,
    config: &RolloutConfig,
) -> Result<(TrackingRun, SafetyCertificate)> {
    plant.validate()?;
    if plant.lambda <= cbf.alpha {
        return Err(Error::Config(format!("plant lambda {} must exceed cbf alpha {}", plant.lambda, cbf.alpha)));
    }
    let c_h = cbf.j_max.ok_or_else(|| Error::Config("certificate needs j_max".into()))?;
    if q_dot0.len() != model.dof() {
        return Err(Error::invalid(format!("q_dot0 has length {}, expected {}", q_dot0.len(), model.dof())));
    }
    let mut p = ErrorPlant { lambda: plant.lambda, mode: plant.mode, q_dot: DVector::from_column_slice(q_dot0), error: None, error_norms: Vec::new() };
    let inputs = RolloutInputs { model, scene, reference, q0, cbf, tracker, config };
    let run = rollout(&inputs, &mut p)?;

    let e0 = match plant.mode {
        PlantMode::FirstOrderError => p.error_norms.first().copied().unwrap_or(0.0),
        PlantMode::DoubleIntegratorP => p.error_norms.iter().copied().fold(0.0, f64::max),
    };
    let margin = c_h * plant.m_const * e0 / (plant.lambda - cbf.alpha);
    let h0 = run.trace[0].h_min;
    let mut worst = f64::INFINITY;
    for (k, row) in run.trace.iter().enumerate() {
        if run.event_steps.contains(&k) {
            continue;
        }
        worst = worst.min(row.h_min - comparison_function(h0, margin, cbf.alpha, plant.lambda, row.t));
    }
    let contract_excess =
        p.error_norms.iter().zip(&run.trace).map(|(e, row)| e - plant.m_const * (-plant.lambda * row.t).exp() * e0).fold(f64::NEG_INFINITY, f64::max);
    let cert = SafetyCertificate {
        c_h,
        m_const: plant.m_const,
        lambda: plant.lambda,
        alpha: cbf.alpha,
        error_norm: e0,
        margin,
        h0,
        s_m_member: h0 - margin >= 0.0,
        min_h_observed: run.min_h(),
        worst_comparison_gap: worst,
        contract_excess,
        excluded_steps: run.event_steps.clone(),
    };
    Ok((run, cert))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceStats {
    pub samples: usize,
    /// Largest finite-difference `‖∂h/∂q‖₂`.
    pub max_gradient_norm: f64,
    /// Largest `‖∂h/∂q − n̂ᵀJ‖₂`.
    pub max_disturbance_norm: f64,
    /// Samples where `h` is infinite (no pairs) or a query failed.
    pub skipped: usize,
    /// Per-sample `(‖∂h/∂q‖, ‖δ‖)`.
    pub per_sample: Vec<(f64, f64)>,
}

/// Compares the central-difference gradient of `h = min_signed_distance`
/// with the witness-point row `n̂ᵀJ_A` (or `n̂ᵀ(J_A − J_B)` for self pairs)
/// of the nearest pair at each sample.
pub fn gradient_disturbance_probe(model: &RobotModel, scene: &PlanningScene, q_samples: &[Vec<f64>], step: f64) -> Result<DisturbanceStats> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut stats = DisturbanceStats { samples: 0, max_gradient_norm: 0.0, max_disturbance_norm: 0.0, skipped: 0, per_sample: Vec::new() };
    let n = model.dof();
    for q in q_samples {
        let frames = model.frames(q)?;
        let (h, pairs) = scene.min_signed_distance_at(&frames);
        let Some(near) = pairs.first().filter(|p| !p.failed && h.is_finite()) else {
            stats.skipped += 1;
            continue;
        };
        let r = &near.result;
        let link_a = scene.robot_bodies()[near.pair.body_a].link;
        let mut jac = frames.point_jacobian_world(link_a, &r.point_a);
        if let (PairKind::SelfCollision, BodyRef::Robot(ib)) = (near.pair.kind, near.pair.body_b) {
            jac -= frames.point_jacobian_world(scene.robot_bodies()[ib].link, &r.point_b);
        }
        let row = jac.transpose() * r.normal;
        let mut grad = DVector::zeros(n);
        let mut ok = true;
        for j in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += step;
            qm[j] -= step;
            let hp = scene.min_signed_distance(model, &qp)?.0;
            let hm = scene.min_signed_distance(model, &qm)?.0;
            if !(hp.is_finite() && hm.is_finite()) {
                ok = false;
                break;
            }
            grad[j] = (hp - hm) / (2.0 * step);
        }
        if !ok {
            stats.skipped += 1;
            continue;
        }
        let g = grad.norm();
        let d = (&grad - &row).norm();
        stats.samples += 1;
        stats.max_gradient_norm = stats.max_gradient_norm.max(g);
        stats.max_disturbance_norm = stats.max_disturbance_norm.max(d);
        stats.per_sample.push((g, d));
    }
    Ok(stats)
}
