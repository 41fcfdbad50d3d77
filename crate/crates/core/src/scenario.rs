//! Scenario files: everything needed to reproduce one filtered run.
//!
//! ```json
//! {
//!   "robot": "arm.json",
//!   "scene": "kitchen.json",
//!   "reference": "pick.csv",
//!   "behavior": "pick",
//!   "cbf": { "alpha": 20, "q_dot_max": 0.5 },
//!   "tracker": { "kp": 2 },
//!   "plant": { "lambda": 80 },
//!   "events": [ { "t": 1.0, "obstacle": "basket", "action": "disable" } ],
//!   "dt": 0.01, "t_max": 10, "seed": 7
//! }
//! ```
//!
//! `robot`, `scene` and `reference` are either paths (relative to the
//! scenario file) or inline objects. A `plant` block selects the dynamic
//! rollout. `q0` defaults to the first reference waypoint.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cache::CachePolicy;
use crate::cbf::CbfParams;
use crate::kinematics::{JacobianBoundConfig, RobotModel};
use crate::scene::PlanningScene;
use crate::sim::{rollout_dynamic, rollout_kinematic, SafetyCertificate, TrackingPlant};
use crate::tracker::{check_events, RolloutConfig, SceneEvent, TrackerParams, TrackingRun, Trajectory};
use crate::{check_finite, Error, Result};

/// Allowed `h` undershoot before a run counts as unsafe [m].
pub const INVARIANCE_TOLERANCE: f64 = 1e-4;

/// A file reference or an inline value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(String),
    Inline(T),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub robot: Source<RobotModel>,
    pub scene: Source<PlanningScene>,
    #[serde(default)]
    pub reference: Option<Source<Trajectory>>,
    #[serde(default)]
    pub behavior: Option<String>,
    pub cbf: CbfParams,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub plant: Option<TrackingPlant>,
    #[serde(default)]
    pub policy: Option<CachePolicy>,
    #[serde(default)]
    pub events: Vec<SceneEvent>,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub q_dot0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_dt() -> f64 {
    0.01
}

fn default_t_max() -> f64 {
    30.0
}

/// A scenario with every file read and every parameter checked.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub model: RobotModel,
    /// Scene with the robot's bodies bound.
    pub scene: PlanningScene,
    pub reference: Option<Trajectory>,
    pub behavior: String,
    /// `j_max` is always filled in.
    pub cbf: CbfParams,
    pub tracker: TrackerParams,
    pub plant: Option<TrackingPlant>,
    pub policy: Option<CachePolicy>,
    pub q0: Vec<f64>,
    pub q_dot0: Vec<f64>,
    pub seed: u64,
    pub config: RolloutConfig,
    /// Files read while loading, for the run manifest.
    pub inputs: Vec<PathBuf>,
}

fn read_source<T: DeserializeOwned + Clone>(src: &Source<T>, base: &Path, inputs: &mut Vec<PathBuf>, what: &str) -> Result<T> {
    match src {
        Source::Inline(v) => Ok(v.clone()),
        Source::Path(p) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
            inputs.push(path);
            serde_json::from_str(&text).map_err(|e| Error::parse(format!("{what} {p}: {e}")))
        }
    }
}

fn read_reference(src: &Source<Trajectory>, base: &Path, behavior: &str, inputs: &mut Vec<PathBuf>) -> Result<Trajectory> {
    match src {
        Source::Path(p) if p.ends_with(".csv") => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read reference {}: {e}", path.display())))?;
            inputs.push(path);
            Trajectory::from_csv_str(behavior, &text)
        }
        other => {
            let mut t = read_source(other, base, inputs, "reference")?;
            if t.behavior().is_empty() {
                t.set_behavior(behavior);
            }
            Ok(t)
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut s = Scenario::from_json_str(&text, base)?;
        s.inputs.insert(0, path.to_path_buf());
        Ok(s)
    }

    /// Parses scenario JSON, resolving relative paths against `base`.
    pub fn from_json_str(text: &str, base: &Path) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        Scenario::from_spec(spec, base)
    }

    pub fn from_spec(spec: ScenarioSpec, base: &Path) -> Result<Self> {
        let mut inputs = Vec::new();
        let model: RobotModel = read_source(&spec.robot, base, &mut inputs, "robot")?;
        let scene: PlanningScene = read_source(&spec.scene, base, &mut inputs, "scene")?;
        let scene = scene.with_robot(&model)?;
        let behavior = spec.behavior.clone().unwrap_or_default();
        let reference = spec.reference.as_ref().map(|r| read_reference(r, base, &behavior, &mut inputs)).transpose()?;
        let behavior = if behavior.is_empty() { reference.as_ref().map(|r| r.behavior().to_owned()).unwrap_or_default() } else { behavior };
        if reference.is_none() && behavior.is_empty() {
            return Err(Error::Config("scenario needs a reference trajectory or a behavior tag".into()));
        }
        if let Some(r) = &reference {
            if r.dof() != model.dof() {
                return Err(Error::Config(format!("reference has {} joints, robot has {}", r.dof(), model.dof())));
            }
        }

        let mut cbf = spec.cbf.clone();
        if cbf.j_max.is_none() {
            cbf.j_max = Some(model.jacobian_norm_bound(JacobianBoundConfig::default().sample_count, spec.seed));
        }
        cbf.validate()?;
        spec.tracker.validate()?;
        spec.tracker.saturation(&model)?;
        if let Some(p) = &spec.plant {
            p.validate()?;
        }
        if let Some(p) = &spec.policy {
            p.validate()?;
        }
        check_events(&spec.events)?;
        for e in &spec.events {
            if scene.obstacle(&e.obstacle).is_none() {
                return Err(Error::Config(format!("event names unknown obstacle {:?}", e.obstacle)));
            }
        }
        check_finite("dt", spec.dt)?;
        check_finite("t_max", spec.t_max)?;
        if !(spec.dt > 0.0) || spec.t_max < 0.0 {
            return Err(Error::Config("dt must be positive and t_max nonnegative".into()));
        }
        if spec.t_max / spec.dt > 1e8 {
            return Err(Error::Config("t_max / dt exceeds 1e8 steps".into()));
        }

        let q0 = match (&spec.q0, &reference) {
            (Some(q), _) => q.clone(),
            (None, Some(r)) => r.first().to_vec(),
            (None, None) => return Err(Error::Config("q0 is required without a reference".into())),
        };
        model.check_dimension(&q0)?;
        let q_dot0 = spec.q_dot0.clone().unwrap_or_else(|| vec![0.0; model.dof()]);
        model.check_dimension(&q_dot0)?;

        Ok(Scenario {
            model,
            scene,
            reference,
            behavior,
            cbf,
            tracker: spec.tracker,
            plant: spec.plant,
            policy: spec.policy,
            q0,
            q_dot0,
            seed: spec.seed,
            config: RolloutConfig::new(spec.dt, spec.t_max).with_events(spec.events),
            inputs,
        })
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    /// Runs the rollout the scenario describes.
    pub fn run(&self) -> Result<ScenarioRun> {
        let reference = self.reference.as_ref().ok_or_else(|| Error::Config("scenario has no reference trajectory".into()))?;
        self.run_reference(reference)
    }

    pub fn run_reference(&self, reference: &Trajectory) -> Result<ScenarioRun> {
        let (run, certificate) = match &self.plant {
            None => (rollout_kinematic(&self.model, &self.scene, reference, &self.q0, &self.cbf, &self.tracker, &self.config)?, None),
            Some(p) => {
                let (run, cert) = rollout_dynamic(&self.model, &self.scene, reference, &self.q0, &self.q_dot0, p, &self.cbf, &self.tracker, &self.config)?;
                (run, Some(cert))
            }
        };
        Ok(ScenarioRun::new(run, certificate))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRun {
    pub run: TrackingRun,
    pub certificate: Option<SafetyCertificate>,
    /// `h` at the first step.
    pub h0: f64,
    /// Minimum `h` over steps without scene events.
    pub min_h: f64,
    /// The run started safe and stayed within [`INVARIANCE_TOLERANCE`], or started unsafe.
    pub invariance_held: bool,
}

impl ScenarioRun {
    fn new(run: TrackingRun, certificate: Option<SafetyCertificate>) -> Self {
        let h0 = run.trace.first().map_or(f64::INFINITY, |r| r.h_min);
        let min_h = run.trace.iter().enumerate().filter(|(k, _)| !run.event_steps.contains(k)).map(|(_, r)| r.h_min).fold(f64::INFINITY, f64::min);
        let invariance_held = h0 < 0.0 || min_h >= -INVARIANCE_TOLERANCE;
        ScenarioRun { run, certificate, h0, min_h, invariance_held }
    }

    pub fn success(&self) -> bool {
        self.run.converged && self.invariance_held
    }
}
