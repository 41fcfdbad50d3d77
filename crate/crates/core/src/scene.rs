//! Planning scenes: world obstacles, robot collision bodies, and the
//! allowed-collision matrix.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::geometry::{signed_distance_iso, DistanceResult, Shape};
use crate::kinematics::{ChainFrames, RobotModel};
use crate::pose::Pose;
use crate::{Error, Result};

/// Obstacle count cap for untrusted scene files.
pub const MAX_OBSTACLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub name: String,
    pub shape: Shape,
    #[serde(default)]
    pub pose: Pose,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

/// A collision body attached to a robot link.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotBody {
    pub name: String,
    pub link: usize,
    pub shape: Shape,
    pub origin: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Environment,
    #[serde(rename = "self")]
    SelfCollision,
}

/// Second body of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BodyRef {
    Obstacle(usize),
    Robot(usize),
}

/// A pair to be checked. `body_a` always indexes [`PlanningScene::robot_bodies`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairQuery {
    pub kind: PairKind,
    pub body_a: usize,
    pub body_b: BodyRef,
}

/// Obstacles, robot bodies, and the pairs exempt from checking.
///
/// Scene files carry only obstacles, allowed pairs and metadata; robot bodies
/// are bound from a [`RobotModel`] with [`PlanningScene::with_robot`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct PlanningScene {
    obstacles: Vec<Obstacle>,
    robot_bodies: Vec<RobotBody>,
    allowed_pairs: BTreeSet<(String, String)>,
    allow_adjacent: bool,
    metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRepr {
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    #[serde(default)]
    allowed_pairs: Vec<(String, String)>,
    #[serde(default = "enabled_default")]
    allow_adjacent: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

impl TryFrom<SceneRepr> for PlanningScene {
    type Error = Error;

    fn try_from(r: SceneRepr) -> Result<Self> {
        let mut scene = PlanningScene::new(r.obstacles)?;
        for (a, b) in r.allowed_pairs {
            scene.allowed_pairs.insert(ordered(a, b));
        }
        scene.allow_adjacent = r.allow_adjacent;
        scene.metadata = r.metadata;
        Ok(scene)
    }
}

impl From<PlanningScene> for SceneRepr {
    fn from(s: PlanningScene) -> Self {
        SceneRepr { obstacles: s.obstacles, allowed_pairs: s.allowed_pairs.into_iter().collect(), allow_adjacent: s.allow_adjacent, metadata: s.metadata }
    }
}

fn ordered(a: String, b: String) -> (String, String) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Distance of one active pair at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistance {
    pub pair: PairQuery,
    pub result: DistanceResult,
    /// The geometry query failed; `result` holds its best estimate and
    /// `result.signed_distance` is forced to `-inf`.
    pub failed: bool,
}

/// Options for [`PlanningScene::difference`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneMetric {
    /// Metres per radian of rotation.
    pub rotation_weight: f64,
    /// Contribution of an obstacle present in only one scene (or whose shape
    /// changed), and the cap on any single obstacle's term.
    pub missing_penalty: f64,
}

impl Default for SceneMetric {
    fn default() -> Self {
        SceneMetric { rotation_weight: 0.5, missing_penalty: 10.0 }
    }
}

impl PlanningScene {
    pub fn new(obstacles: Vec<Obstacle>) -> Result<Self> {
        if obstacles.len() > MAX_OBSTACLES {
            return Err(Error::invalid(format!("scene has more than {MAX_OBSTACLES} obstacles")));
        }
        let mut seen = BTreeSet::new();
        for o in &obstacles {
            if !seen.insert(o.name.as_str()) {
                return Err(Error::invalid(format!("duplicate obstacle name {:?}", o.name)));
            }
        }
        Ok(PlanningScene { obstacles, robot_bodies: Vec::new(), allowed_pairs: BTreeSet::new(), allow_adjacent: true, metadata: BTreeMap::new() })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Binds the collision bodies of `model`. Allowed pairs must then name
    /// existing bodies.
    pub fn with_robot(mut self, model: &RobotModel) -> Result<Self> {
        self.robot_bodies = model
            .geometry()
            .iter()
            .enumerate()
            .map(|(k, g)| RobotBody { name: model.body_name(k), link: g.link, shape: g.shape.clone(), origin: g.origin.clone() })
            .collect();
        let mut names = BTreeSet::new();
        for name in self.robot_bodies.iter().map(|b| &b.name).chain(self.obstacles.iter().map(|o| &o.name)) {
            if !names.insert(name.as_str()) {
                return Err(Error::invalid(format!("body name {name:?} is used twice")));
            }
        }
        for (a, b) in &self.allowed_pairs {
            for n in [a, b] {
                if !names.contains(n.as_str()) {
                    return Err(Error::invalid(format!("allowed pair references unknown body {n:?}")));
                }
            }
        }
        Ok(self)
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn robot_bodies(&self) -> &[RobotBody] {
        &self.robot_bodies
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn obstacle(&self, name: &str) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.name == name)
    }

    pub fn obstacle_mut(&mut self, name: &str) -> Option<&mut Obstacle> {
        self.obstacles.iter_mut().find(|o| o.name == name)
    }

    pub fn set_enabled(&mut self, name: &str, enabled: bool) -> Result<()> {
        let o = self.obstacle_mut(name).ok_or_else(|| Error::invalid(format!("no obstacle named {name:?}")))?;
        o.enabled = enabled;
        Ok(())
    }

    pub fn set_pose(&mut self, name: &str, pose: Pose) -> Result<()> {
        let o = self.obstacle_mut(name).ok_or_else(|| Error::invalid(format!("no obstacle named {name:?}")))?;
        o.pose = pose;
        Ok(())
    }

    pub fn allow_pair(&mut self, a: &str, b: &str) {
        self.allowed_pairs.insert(ordered(a.to_owned(), b.to_owned()));
    }

    pub fn set_allow_adjacent(&mut self, allow: bool) {
        self.allow_adjacent = allow;
    }

    pub fn is_allowed(&self, a: &str, b: &str) -> bool {
        self.allowed_pairs.contains(&ordered(a.to_owned(), b.to_owned()))
    }

    pub fn body_name(&self, r: BodyRef) -> &str {
        match r {
            BodyRef::Obstacle(i) => &self.obstacles[i].name,
            BodyRef::Robot(i) => &self.robot_bodies[i].name,
        }
    }

    pub fn pair_name(&self, p: &PairQuery) -> String {
        format!("{}|{}", self.robot_bodies[p.body_a].name, self.body_name(p.body_b))
    }

    /// Pairs to check: environment pairs first, then self pairs, each group
    /// ordered by body names. Disabled obstacles and allowed pairs are skipped;
    /// bodies on the same link never form a pair, and bodies on adjacent links
    /// only when adjacency exemption is turned off.
    pub fn active_pairs(&self) -> Vec<PairQuery> {
        let mut env: Vec<(&str, &str, PairQuery)> = Vec::new();
        for (ia, a) in self.robot_bodies.iter().enumerate() {
            for (ib, o) in self.obstacles.iter().enumerate() {
                if o.enabled && !self.is_allowed(&a.name, &o.name) {
                    env.push((&a.name, &o.name, PairQuery { kind: PairKind::Environment, body_a: ia, body_b: BodyRef::Obstacle(ib) }));
                }
            }
        }
        let mut own: Vec<(&str, &str, PairQuery)> = Vec::new();
        for (ia, a) in self.robot_bodies.iter().enumerate() {
            for (ib, b) in self.robot_bodies.iter().enumerate() {
                // Lower link first, so the pair is listed once.
                if a.link >= b.link || (self.allow_adjacent && b.link == a.link + 1) || self.is_allowed(&a.name, &b.name) {
                    continue;
                }
                own.push((&a.name, &b.name, PairQuery { kind: PairKind::SelfCollision, body_a: ia, body_b: BodyRef::Robot(ib) }));
            }
        }
        env.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        own.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        env.into_iter().chain(own).map(|(_, _, p)| p).collect()
    }

    fn body_isometry(&self, frames: &ChainFrames, r: BodyRef) -> (Isometry3<f64>, &Shape) {
        match r {
            BodyRef::Obstacle(i) => (*self.obstacles[i].pose.isometry(), &self.obstacles[i].shape),
            BodyRef::Robot(i) => {
                let b = &self.robot_bodies[i];
                (frames.link(b.link) * b.origin.isometry(), &b.shape)
            }
        }
    }

    /// Signed distance of one pair at the given link frames.
    pub fn pair_distance(&self, frames: &ChainFrames, pair: &PairQuery) -> PairDistance {
        let (iso_a, shape_a) = self.body_isometry(frames, BodyRef::Robot(pair.body_a));
        let (iso_b, shape_b) = self.body_isometry(frames, pair.body_b);
        match signed_distance_iso(shape_a, &iso_a, shape_b, &iso_b) {
            Ok(result) => PairDistance { pair: *pair, result, failed: false },
            Err(e) => {
                log::warn!("{}: {e}", self.pair_name(pair));
                let mut result = *e.best_estimate();
                result.signed_distance = f64::NEG_INFINITY;
                PairDistance { pair: *pair, result, failed: true }
            }
        }
    }

    /// Minimum signed distance over all active pairs at `q`, with every
    /// pair's result sorted ascending (ties keep pair order). The minimum of
    /// an empty pair set is `+inf`.
    pub fn min_signed_distance(&self, model: &RobotModel, q: &[f64]) -> Result<(f64, Vec<PairDistance>)> {
        let frames = model.frames(q)?;
        Ok(self.min_signed_distance_at(&frames))
    }

    pub fn min_signed_distance_at(&self, frames: &ChainFrames) -> (f64, Vec<PairDistance>) {
        let mut all: Vec<PairDistance> = self.active_pairs().iter().map(|p| self.pair_distance(frames, p)).collect();
        all.sort_by(|x, y| x.result.signed_distance.total_cmp(&y.result.signed_distance));
        let min = all.first().map_or(f64::INFINITY, |p| p.result.signed_distance);
        (min, all)
    }

    /// Scene difference: summed over obstacle names, translation distance plus
    /// weighted rotation angle, each term capped at `missing_penalty`. An
    /// obstacle that is disabled or absent on one side, or whose shape differs,
    /// contributes the full penalty.
    pub fn difference(&self, other: &PlanningScene, metric: &SceneMetric) -> f64 {
        let live =
            |s: &PlanningScene| -> BTreeMap<String, Obstacle> { s.obstacles.iter().filter(|o| o.enabled).map(|o| (o.name.clone(), o.clone())).collect() };
        let a = live(self);
        let b = live(other);
        let names: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
        names
            .into_iter()
            .map(|n| match (a.get(n), b.get(n)) {
                (Some(x), Some(y)) if x.shape == y.shape => {
                    let d = x.pose.translation_distance(&y.pose) + metric.rotation_weight * x.pose.geodesic_angle(&y.pose);
                    d.min(metric.missing_penalty)
                }
                _ => metric.missing_penalty,
            })
            .sum()
    }
}

/// Free-function form of [`PlanningScene::difference`] with default weights.
pub fn scene_difference(a: &PlanningScene, b: &PlanningScene) -> f64 {
    a.difference(b, &SceneMetric::default())
}
