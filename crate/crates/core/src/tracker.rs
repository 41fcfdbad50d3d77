//! Waypoint tracking through the safety filter.
//!
//! The desired velocity is a saturated proportional law toward the current
//! waypoint. A waypoint is passed when the robot comes within `epsilon` of it,
//! or when the distance to it has not shrunk for `stall_timeout` seconds. The
//! last waypoint is never skipped.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cbf::{cbf_step, CbfParams, StepStatus};
use crate::kinematics::RobotModel;
use crate::pose::Pose;
use crate::scene::PlanningScene;
use crate::trace::TraceRow;
use crate::{check_finite, Error, Result};

/// Waypoint cap for untrusted trajectory files.
pub const MAX_WAYPOINTS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr", into = "TrajectoryRepr")]
pub struct Trajectory {
    behavior: String,
    waypoints: Vec<Waypoint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRepr {
    #[serde(default)]
    behavior: String,
    waypoints: Vec<Waypoint>,
}

impl TryFrom<TrajectoryRepr> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRepr) -> Result<Self> {
        Trajectory::new(r.behavior, r.waypoints)
    }
}

impl From<Trajectory> for TrajectoryRepr {
    fn from(t: Trajectory) -> Self {
        TrajectoryRepr { behavior: t.behavior, waypoints: t.waypoints }
    }
}

impl Trajectory {
    /// Requires at least one waypoint, equal widths, finite values and
    /// strictly increasing times.
    pub fn new(behavior: impl Into<String>, waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::invalid("trajectory has no waypoints"));
        }
        if waypoints.len() > MAX_WAYPOINTS {
            return Err(Error::invalid(format!("trajectory has more than {MAX_WAYPOINTS} waypoints")));
        }
        let n = waypoints[0].q.len();
        for (i, w) in waypoints.iter().enumerate() {
            if w.q.len() != n {
                return Err(Error::invalid(format!("waypoint {i} has {} joints, expected {n}", w.q.len())));
            }
            check_finite("waypoint time", w.t)?;
            for &x in &w.q {
                check_finite("waypoint position", x)?;
            }
            if i > 0 && w.t <= waypoints[i - 1].t {
                return Err(Error::invalid(format!("waypoint {i} time {} does not increase", w.t)));
            }
        }
        Ok(Trajectory { behavior: behavior.into(), waypoints })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads rows `t, q_1..q_n` with a header line.
    pub fn from_csv_str(behavior: impl Into<String>, s: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(s.as_bytes());
        let width = r.headers()?.len();
        if width < 2 {
            return Err(Error::parse("trajectory CSV needs a time column and at least one joint"));
        }
        let mut waypoints = Vec::new();
        for (i, rec) in r.records().enumerate() {
            if i >= MAX_WAYPOINTS {
                return Err(Error::invalid(format!("trajectory has more than {MAX_WAYPOINTS} waypoints")));
            }
            let rec = rec.map_err(|e| Error::parse_entry(i, e))?;
            let vals = rec.iter().map(|f| f.parse::<f64>().map_err(|e| Error::parse_entry(i, format!("{f:?}: {e}")))).collect::<Result<Vec<_>>>()?;
            waypoints.push(Waypoint { t: vals[0], q: vals[1..].to_vec() });
        }
        Trajectory::new(behavior, waypoints)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dof()).map(|i| format!("q_{i}")));
        w.write_record(&header)?;
        for wp in &self.waypoints {
            let mut rec = vec![wp.t.to_string()];
            rec.extend(wp.q.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(Error::parse)
    }

    pub fn behavior(&self) -> &str {
        &self.behavior
    }

    pub fn set_behavior(&mut self, behavior: impl Into<String>) {
        self.behavior = behavior.into();
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn dof(&self) -> usize {
        self.waypoints[0].q.len()
    }

    pub fn first(&self) -> &[f64] {
        &self.waypoints[0].q
    }

    pub fn last(&self) -> &[f64] {
        &self.waypoints[self.waypoints.len() - 1].q
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-joint saturation: one value for all joints or one per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Saturation {
    Uniform(f64),
    PerJoint(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Proportional gain [1/s].
    pub kp: f64,
    /// Waypoint advance radius [rad].
    pub epsilon: f64,
    /// Defaults to the joint velocity limits.
    pub v_sat: Option<Saturation>,
    /// Seconds without progress before an intermediate waypoint is skipped.
    pub stall_timeout: f64,
    /// Minimum decrease rate of the distance to the current waypoint that counts as progress.
    pub progress_rate: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { kp: 2.0, epsilon: 0.02, v_sat: None, stall_timeout: 2.0, progress_rate: 1e-4 }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("kp", self.kp), ("epsilon", self.epsilon), ("stall_timeout", self.stall_timeout), ("progress_rate", self.progress_rate)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("tracker {name} must be positive, got {x}")));
            }
        }
        match &self.v_sat {
            Some(Saturation::Uniform(x)) if !(*x > 0.0) => Err(Error::Config("v_sat must be positive".into())),
            Some(Saturation::PerJoint(v)) if v.iter().any(|x| !(*x > 0.0)) => Err(Error::Config("v_sat must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn saturation(&self, model: &RobotModel) -> Result<Vec<f64>> {
        match &self.v_sat {
            None => Ok(model.velocity_limits()),
            Some(Saturation::Uniform(x)) => Ok(vec![*x; model.dof()]),
            Some(Saturation::PerJoint(v)) if v.len() == model.dof() => Ok(v.clone()),
            Some(Saturation::PerJoint(v)) => Err(Error::Config(format!("v_sat has {} entries for {} joints", v.len(), model.dof()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub index: usize,
    pub stall_clock: f64,
    last_distance: Option<f64>,
    /// Waypoints passed by stall rather than by reaching them.
    pub skipped: Vec<usize>,
}

impl Default for TrackerState {
    fn default() -> Self {
        TrackerState::new()
    }
}

impl TrackerState {
    pub fn new() -> Self {
        TrackerState { index: 0, stall_clock: 0.0, last_distance: None, skipped: Vec::new() }
    }

    fn advance(&mut self) {
        self.index += 1;
        self.stall_clock = 0.0;
        self.last_distance = None;
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Desired velocity at `q` and the state after the call. `dt` is the time
/// since the previous call and feeds the stall clock.
pub fn desired_velocity(
    state: &TrackerState,
    traj: &Trajectory,
    q: &[f64],
    params: &TrackerParams,
    v_sat: &[f64],
    dt: f64,
) -> Result<(DVector<f64>, TrackerState)> {
    if q.len() != traj.dof() || v_sat.len() != q.len() {
        return Err(Error::invalid(format!("tracker got {} joints, trajectory has {}", q.len(), traj.dof())));
    }
    let last = traj.len() - 1;
    let mut s = state.clone();
    s.index = s.index.min(last);
    loop {
        if s.index == last {
            break;
        }
        if distance(&traj.waypoints[s.index].q, q) < params.epsilon {
            s.advance();
        } else if s.stall_clock > params.stall_timeout {
            log::info!("skipping waypoint {} after {:.3} s without progress", s.index, s.stall_clock);
            s.skipped.push(s.index);
            s.advance();
        } else {
            break;
        }
    }
    let goal = &traj.waypoints[s.index].q;
    let d = distance(goal, q);
    match s.last_distance {
        Some(prev) if prev - d >= params.progress_rate * dt => s.stall_clock = 0.0,
        Some(_) => s.stall_clock += dt,
        None => {}
    }
    s.last_distance = Some(d);
    let v = DVector::from_iterator(q.len(), goal.iter().zip(q).zip(v_sat).map(|((g, x), sat)| (params.kp * (g - x)).clamp(-sat, *sat)));
    Ok((v, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum EventAction {
    Enable,
    Disable,
    Move { pose: Pose },
}

/// A scripted scene change, applied at the first step with time ≥ `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub t: f64,
    pub obstacle: String,
    #[serde(flatten)]
    pub action: EventAction,
}

impl SceneEvent {
    pub fn label(&self) -> String {
        let verb = match self.action {
            EventAction::Enable => "enable",
            EventAction::Disable => "disable",
            EventAction::Move { .. } => "move",
        };
        format!("{verb}:{}", self.obstacle)
    }

    pub fn apply(&self, scene: &mut PlanningScene) -> Result<()> {
        match &self.action {
            EventAction::Enable => scene.set_enabled(&self.obstacle, true),
            EventAction::Disable => scene.set_enabled(&self.obstacle, false),
            EventAction::Move { pose } => scene.set_pose(&self.obstacle, pose.clone()),
        }
    }
}

pub fn check_events(events: &[SceneEvent]) -> Result<()> {
    for (i, e) in events.iter().enumerate() {
        check_finite("event time", e.t)?;
        if i > 0 && e.t < events[i - 1].t {
            return Err(Error::invalid(format!("event {i} is out of time order")));
        }
    }
    Ok(())
}

/// Rollout settings shared by the kinematic and dynamic runners.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutConfig {
    pub dt: f64,
    pub t_max: f64,
    pub events: Vec<SceneEvent>,
}

impl RolloutConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        RolloutConfig { dt, t_max, events: Vec::new() }
    }

    pub fn with_events(mut self, events: Vec<SceneEvent>) -> Self {
        self.events = events;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::invalid(format!("t_max must be nonnegative, got {}", self.t_max)));
        }
        check_events(&self.events)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingRun {
    /// Positions at every step, stamped at multiples of `dt`.
    pub trajectory: Trajectory,
    pub trace: Vec<TraceRow>,
    /// The last waypoint was reached within `epsilon`.
    pub converged: bool,
    /// Intermediate waypoints passed by stall.
    pub skipped: Vec<usize>,
    /// Trace indices at which scene events fired.
    pub event_steps: Vec<usize>,
}

impl TrackingRun {
    pub fn min_h(&self) -> f64 {
        self.trace.iter().map(|r| r.h_min).fold(f64::INFINITY, f64::min)
    }
}

/// How positions advance given the filtered command.
pub(crate) trait Plant {
    /// Advances from `q` over `dt` with `v_star` commanded (already zeroed if
    /// the filter chose to hold). Returns the joint velocity at the start of
    /// the step and the next position.
    fn step(&mut self, q: &[f64], v_star: &DVector<f64>, dt: f64) -> (Vec<f64>, Vec<f64>);
}

struct Kinematic;

impl Plant for Kinematic {
    fn step(&mut self, q: &[f64], v_star: &DVector<f64>, dt: f64) -> (Vec<f64>, Vec<f64>) {
        (v_star.iter().copied().collect(), q.iter().zip(v_star.iter()).map(|(x, v)| x + dt * v).collect())
    }
}

pub(crate) struct RolloutInputs<'a> {
    pub model: &'a RobotModel,
    pub scene: &'a PlanningScene,
    pub reference: &'a Trajectory,
    pub q0: &'a [f64],
    pub cbf: &'a CbfParams,
    pub tracker: &'a TrackerParams,
    pub config: &'a RolloutConfig,
}

pub(crate) fn rollout<P: Plant>(inp: &RolloutInputs, plant: &mut P) -> Result<TrackingRun> {
    let RolloutInputs { model, reference, q0, cbf, tracker, config, .. } = *inp;
    config.validate()?;
    cbf.validate()?;
    tracker.validate()?;
    model.check_dimension(q0)?;
    if reference.dof() != model.dof() {
        return Err(Error::invalid(format!("reference has {} joints, model has {}", reference.dof(), model.dof())));
    }
    let v_sat = tracker.saturation(model)?;
    let mut scene = inp.scene.clone();
    let goal = reference.last();
    let dt = config.dt;

    let mut q = q0.to_vec();
    let mut state = TrackerState::new();
    let mut trace = Vec::new();
    let mut waypoints = Vec::new();
    let mut event_steps = Vec::new();
    let mut next_event = 0;
    let converged;
    let mut k: u64 = 0;

    loop {
        let t = k as f64 * dt;
        let mut labels = Vec::new();
        while next_event < config.events.len() && config.events[next_event].t <= t + 1e-9 * dt {
            let e = &config.events[next_event];
            e.apply(&mut scene)?;
            labels.push(e.label());
            next_event += 1;
        }
        if !labels.is_empty() {
            event_steps.push(trace.len());
        }
        waypoints.push(Waypoint { t, q: q.clone() });

        let (v_des, next_state) = desired_velocity(&state, reference, &q, tracker, &v_sat, if k == 0 { 0.0 } else { dt })?;
        state = next_state;
        let at_goal = state.index == reference.len() - 1 && distance(goal, &q) < tracker.epsilon;
        if at_goal || t + dt > config.t_max + 1e-9 * dt {
            converged = at_goal;
            let (h_min, pairs) = scene.min_signed_distance(model, &q)?;
            trace.push(TraceRow {
                t,
                q: q.clone(),
                v: vec![0.0; q.len()],
                h_min,
                nearest_pair: pairs.first().map(|p| scene.pair_name(&p.pair)).unwrap_or_default(),
                qp_status: if at_goal { "converged" } else { "timeout" }.into(),
                event: labels.join(";"),
            });
            break;
        }

        let step = cbf_step(model, &scene, &q, &v_des, cbf, dt)?;
        let (applied, q_next) = plant.step(&q, &step.v_star, dt);
        trace.push(TraceRow {
            t,
            q: q.clone(),
            v: applied,
            h_min: step.h_min,
            nearest_pair: step.nearest.clone().unwrap_or_default(),
            qp_status: step.status.as_str().into(),
            event: labels.join(";"),
        });
        if step.status == StepStatus::GeometryFailure {
            log::warn!("geometry failure at t = {t}");
        }
        q = q_next;
        k += 1;
    }

    Ok(TrackingRun { trajectory: Trajectory::new(reference.behavior(), waypoints)?, trace, converged, skipped: state.skipped, event_steps })
}

/// Tracks `reference` from `q0` through the safety filter with `q̇ = v*`,
/// until the last waypoint is reached within `epsilon` or `t_max` elapses.
pub fn run_filtered_tracking(
    model: &RobotModel,
    scene: &PlanningScene,
    reference: &Trajectory,
    q0: &[f64],
    cbf: &CbfParams,
    tracker: &TrackerParams,
    config: &RolloutConfig,
) -> Result<TrackingRun> {
    let inputs = RolloutInputs { model, scene, reference, q0, cbf, tracker, config };
    rollout(&inputs, &mut Kinematic)
}
