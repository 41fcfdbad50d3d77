//! Trajectory cache with suitability-based dispatch.
//!
//! Each entry stores a behavior tag, the scene it was planned in, and the
//! trajectory. A request scores every entry with the same tag by
//! `T = ‖first waypoint − q‖₂ + scene difference` and then:
//!
//! * the first entry (in insertion order) with `T < t1` is filtered at once;
//! * otherwise the best entry is filtered if `T_min < t2`,
//! * filtered and the result stored if `T_min < t3`,
//! * and the planner fallback runs (result stored) if `T_min ≥ t3` or no entry matches.
//!
//! Ties in `T_min` go to the earliest entry. A filter run that does not reach
//! the goal escalates to the fallback.

use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::cbf::CbfParams;
use crate::kinematics::RobotModel;
use crate::scene::{PlanningScene, SceneMetric};
use crate::tracker::{run_filtered_tracking, RolloutConfig, TrackerParams, Trajectory};
use crate::{Error, Result};

/// Entry cap for untrusted cache files.
pub const MAX_FILE_ENTRIES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachePolicy {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    #[serde(default = "default_max_entries")]
    pub max_entries: usize,
    #[serde(default)]
    pub metric: SceneMetric,
}

fn default_max_entries() -> usize {
    500
}

impl CachePolicy {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        let p = CachePolicy { t1, t2, t3, max_entries: default_max_entries(), metric: SceneMetric::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 <= self.t1 && self.t1 <= self.t2 && self.t2 <= self.t3 && self.t3.is_finite();
        if !ordered {
            return Err(Error::Config(format!("thresholds must satisfy 0 ≤ t1 ≤ t2 ≤ t3, got {} {} {}", self.t1, self.t2, self.t3)));
        }
        if self.max_entries == 0 {
            return Err(Error::Config("max_entries must be at least 1".into()));
        }
        let m = &self.metric;
        if !(m.rotation_weight >= 0.0 && m.rotation_weight.is_finite() && m.missing_penalty >= 0.0 && m.missing_penalty.is_finite()) {
            return Err(Error::Config("scene metric weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachedBehavior {
    pub behavior: String,
    pub scene: PlanningScene,
    pub trajectory: Trajectory,
    /// Insertion stamp, increasing within a cache.
    pub created_at: u64,
}

impl CachedBehavior {
    fn validate(&self) -> Result<()> {
        if self.behavior.is_empty() {
            return Err(Error::invalid("cached behavior tag is empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cache {
    pub policy: CachePolicy,
    entries: Vec<CachedBehavior>,
    next_stamp: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile<E> {
    policy: CachePolicy,
    entries: Vec<E>,
}

/// `T = ‖C_X0 − q‖₂ + scene_difference(entry scene, scene)`.
pub fn suitability(entry: &CachedBehavior, scene: &PlanningScene, q: &[f64], metric: &SceneMetric) -> Result<f64> {
    let start = entry.trajectory.first();
    if start.len() != q.len() {
        return Err(Error::invalid(format!("state has {} joints, cached trajectory has {}", q.len(), start.len())));
    }
    let dq = start.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(dq + entry.scene.difference(scene, metric))
}

impl Cache {
    pub fn new(policy: CachePolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Cache { policy, entries: Vec::new(), next_stamp: 0 })
    }

    pub fn entries(&self) -> &[CachedBehavior] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry, evicting the oldest beyond `max_entries`.
    pub fn insert(&mut self, behavior: &str, scene: PlanningScene, mut trajectory: Trajectory) -> Result<()> {
        if behavior.is_empty() {
            return Err(Error::invalid("behavior tag is empty"));
        }
        trajectory.set_behavior(behavior);
        self.entries.push(CachedBehavior { behavior: behavior.to_owned(), scene, trajectory, created_at: self.next_stamp });
        self.next_stamp += 1;
        while self.entries.len() > self.policy.max_entries {
            let old = self.entries.remove(0);
            log::info!("evicting cached {:?} (stamp {})", old.behavior, old.created_at);
        }
        Ok(())
    }

    /// Scores of all entries tagged `behavior`, as `(entry index, T)`.
    pub fn scores(&self, behavior: &str, scene: &PlanningScene, q: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.entries.iter().enumerate().filter(|(_, e)| e.behavior == behavior).map(|(i, e)| Ok((i, suitability(e, scene, q, &self.policy.metric)?))).collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CacheFile { policy: self.policy.clone(), entries: self.entries.clone() })?)
    }

    /// Parses a cache file; a malformed entry is reported with its index.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: CacheFile<serde_json::Value> = serde_json::from_str(s)?;
        raw.policy.validate()?;
        if raw.entries.len() > MAX_FILE_ENTRIES {
            return Err(Error::invalid(format!("cache file has more than {MAX_FILE_ENTRIES} entries")));
        }
        let mut entries = Vec::with_capacity(raw.entries.len());
        for (i, v) in raw.entries.into_iter().enumerate() {
            let e: CachedBehavior = serde_json::from_value(v).map_err(|e| Error::parse_entry(i, e))?;
            e.validate().map_err(|e| Error::parse_entry(i, e))?;
            if let Some(prev) = entries.last().map(|p: &CachedBehavior| p.created_at) {
                if e.created_at <= prev {
                    return Err(Error::parse_entry(i, "created_at must increase"));
                }
            }
            entries.push(e);
        }
        let next_stamp = entries.last().map_or(0, |e| e.created_at + 1);
        Ok(Cache { policy: raw.policy, entries, next_stamp })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Cache::from_json_str(&std::fs::read_to_string(path)?)
    }
}

pub fn save_cache(cache: &Cache, path: &Path) -> Result<()> {
    cache.save(path)
}

pub fn load_cache(path: &Path) -> Result<Cache> {
    Cache::load(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    EarlyHit,
    Filtered,
    FilteredAndCached,
    Replanned,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::EarlyHit => "early_hit",
            Decision::Filtered => "filtered",
            Decision::FilteredAndCached => "filtered_and_cached",
            Decision::Replanned => "replanned",
        }
    }
}

/// What the scores say to do, before anything runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// `None` means plan from scratch.
    pub entry: Option<usize>,
    pub decision: Decision,
    /// Number of entries scored.
    pub probes: usize,
    /// `(entry index, T)` for every scored entry.
    pub scores: Vec<(usize, f64)>,
}

pub fn select(cache: &Cache, behavior: &str, scene: &PlanningScene, q: &[f64], policy: &CachePolicy) -> Result<Selection> {
    policy.validate()?;
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in cache.entries.iter().enumerate() {
        if e.behavior != behavior {
            continue;
        }
        let t = suitability(e, scene, q, &policy.metric)?;
        scores.push((i, t));
        if t < policy.t1 {
            return Ok(Selection { entry: Some(i), decision: Decision::EarlyHit, probes: scores.len(), scores });
        }
        if best.is_none_or(|(_, b)| t < b) {
            best = Some((i, t));
        }
    }
    let (entry, decision) = match best {
        Some((i, t)) if t < policy.t2 => (Some(i), Decision::Filtered),
        Some((i, t)) if t < policy.t3 => (Some(i), Decision::FilteredAndCached),
        _ => (None, Decision::Replanned),
    };
    Ok(Selection { entry, decision, probes: scores.len(), scores })
}

/// Filters a cached entry in the current scene from a start state.
pub type FilterFn<'a> = dyn FnMut(&CachedBehavior, &PlanningScene, &[f64]) -> Result<FilterResult> + 'a;

/// Plans from scratch; stands in for the external motion planner.
pub type FallbackFn<'a> = dyn FnMut(&PlanningScene, &[f64]) -> Result<Trajectory> + 'a;

/// Result of filtering a cached reference in the current scene.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterResult {
    pub trajectory: Trajectory,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub decision: Decision,
    /// The decision the scores alone led to (differs when a filter run escalated).
    pub selection: Selection,
    pub escalated: bool,
}

fn execute(
    cache: &Cache,
    sel: &Selection,
    scene: &PlanningScene,
    q: &[f64],
    filter: &mut FilterFn,
    fallback: &mut FallbackFn,
) -> Result<(Trajectory, Decision, bool)> {
    if let Some(i) = sel.entry {
        let r = filter(&cache.entries[i], scene, q)?;
        if r.converged {
            return Ok((r.trajectory, sel.decision, false));
        }
        log::warn!("filtering cached entry {i} did not reach the goal, replanning");
    }
    let traj = fallback(scene, q)?;
    Ok((traj, Decision::Replanned, sel.entry.is_some()))
}

fn stores(decision: Decision) -> bool {
    matches!(decision, Decision::FilteredAndCached | Decision::Replanned)
}

/// Runs the dispatch and updates the cache.
pub fn plan_or_filter(
    cache: &mut Cache,
    behavior: &str,
    scene: &PlanningScene,
    q: &[f64],
    policy: &CachePolicy,
    filter: &mut FilterFn,
    fallback: &mut FallbackFn,
) -> Result<PlanOutcome> {
    let selection = select(cache, behavior, scene, q, policy)?;
    let (trajectory, decision, escalated) = execute(cache, &selection, scene, q, filter, fallback)?;
    if stores(decision) {
        cache.insert(behavior, scene.clone(), trajectory.clone())?;
    }
    Ok(PlanOutcome { trajectory, decision, selection, escalated })
}

/// A filter closure that tracks the cached trajectory through the safety
/// filter, starting from the requested state.
pub fn rollout_filter<'a>(
    model: &'a RobotModel,
    cbf: &'a CbfParams,
    tracker: &'a TrackerParams,
    config: &'a RolloutConfig,
) -> impl FnMut(&CachedBehavior, &PlanningScene, &[f64]) -> Result<FilterResult> + 'a {
    move |entry, scene, q| {
        let scene = scene.clone().with_robot(model)?;
        let run = run_filtered_tracking(model, &scene, &entry.trajectory, q, cbf, tracker, config)?;
        Ok(FilterResult { trajectory: run.trajectory, converged: run.converged })
    }
}

/// A cache behind a lock: lookups share a read lock, the insert takes the
/// write lock, and filtering runs with no lock held.
#[derive(Clone, Debug)]
pub struct SharedCache {
    inner: Arc<RwLock<Cache>>,
}

impl SharedCache {
    pub fn new(cache: Cache) -> Self {
        SharedCache { inner: Arc::new(RwLock::new(cache)) }
    }

    pub fn snapshot(&self) -> Cache {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plan_or_filter(&self, behavior: &str, scene: &PlanningScene, q: &[f64], filter: &mut FilterFn, fallback: &mut FallbackFn) -> Result<PlanOutcome> {
        let (selection, entry) = {
            let guard = self.inner.read().unwrap_or_else(|p| p.into_inner());
            let policy = guard.policy.clone();
            let sel = select(&guard, behavior, scene, q, &policy)?;
            let entry = sel.entry.map(|i| guard.entries[i].clone());
            (sel, entry)
        };
        let (trajectory, decision, escalated) = {
            // Run against a one-entry view so no lock is held while filtering.
            let view = Cache { policy: self.snapshot_policy(), entries: entry.into_iter().collect(), next_stamp: 0 };
            let local = Selection { entry: selection.entry.map(|_| 0), ..selection.clone() };
            execute(&view, &local, scene, q, filter, fallback)?
        };
        if stores(decision) {
            self.inner.write().unwrap_or_else(|p| p.into_inner()).insert(behavior, scene.clone(), trajectory.clone())?;
        }
        Ok(PlanOutcome { trajectory, decision, selection, escalated })
    }

    fn snapshot_policy(&self) -> CachePolicy {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).policy.clone()
    }
}
