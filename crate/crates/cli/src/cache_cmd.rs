use std::path::Path;
use std::process::{Command, Stdio};

use serde_json::json;
use trajguard::cache::{plan_or_filter, rollout_filter, select, Cache, CachePolicy};
use trajguard::scenario::Scenario;
use trajguard::scene::PlanningScene;
use trajguard::tracker::Trajectory;
use trajguard::Error;

use crate::io::{self, Failure, EXIT_ERROR, EXIT_NO_MATCH};

const DEFAULT_THRESHOLDS: [f64; 3] = [0.05, 0.2, 0.5];

fn load(path: &Path) -> Result<Cache, Failure> {
    if !path.exists() {
        return Err(Failure::new(EXIT_ERROR, "io", format!("cache file {} does not exist", path.display())));
    }
    Ok(Cache::load(path)?)
}

/// Loads `path`, or starts an empty cache with `policy` if there is no file yet.
fn load_or_new(path: &Path, policy: impl FnOnce() -> trajguard::Result<CachePolicy>) -> Result<Cache, Failure> {
    if path.exists() {
        load(path)
    } else {
        Ok(Cache::new(policy()?)?)
    }
}

pub fn query(cache: &Path, behavior: &str, scene: &Path, state: &Path) -> Result<(), Failure> {
    let cache = load(cache)?;
    let scene = io::read_scene(scene)?;
    let q = io::read_state(state)?;
    let scores = cache.scores(behavior, &scene, &q)?;
    let sel = select(&cache, behavior, &scene, &q, &cache.policy)?;
    let report = json!({
        "behavior": behavior,
        "scores": scores.iter().map(|(i, t)| json!({ "entry": i, "score": t })).collect::<Vec<_>>(),
        "decision": sel.decision.as_str(),
        "entry": sel.entry,
        "probes": sel.probes,
    });
    println!("{report}");
    Ok(())
}

pub fn insert(cache_path: &Path, behavior: &str, scene: &Path, trajectory: &Path, thresholds: Option<&[f64]>) -> Result<(), Failure> {
    let t = thresholds.unwrap_or(&DEFAULT_THRESHOLDS);
    let mut cache = load_or_new(cache_path, || CachePolicy::new(t[0], t[1], t[2]))?;
    let scene = io::read_scene(scene)?;
    let traj = io::read_trajectory(trajectory, behavior)?;
    cache.insert(behavior, scene, traj)?;
    cache.save(cache_path)?;
    println!("{}", json!({ "inserted": behavior, "size": cache.len() }));
    Ok(())
}

pub struct RunArgs<'a> {
    pub cache: &'a Path,
    pub behavior: &'a str,
    pub scene: &'a Path,
    pub state: &'a Path,
    pub scenario: &'a Path,
    pub fallback_cmd: Option<&'a str>,
}

/// Runs the planner command through the shell. It gets the request in the
/// environment and prints either trajectory JSON or the path of a trajectory
/// file on stdout.
fn run_fallback(cmd: &str, args: &RunArgs, dof: usize) -> trajguard::Result<Trajectory> {
    let out = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .env("TRAJGUARD_BEHAVIOR", args.behavior)
        .env("TRAJGUARD_SCENE", args.scene)
        .env("TRAJGUARD_STATE", args.state)
        .stdin(Stdio::null())
        .stderr(Stdio::inherit())
        .output()
        .map_err(|e| Error::Fallback(format!("cannot start {cmd:?}: {e}")))?;
    if !out.status.success() {
        return Err(Error::Fallback(format!("{cmd:?} exited with {}", out.status)));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let text = stdout.trim();
    let traj = if text.starts_with('{') { io::parse_trajectory(text, false, args.behavior) } else { io::read_trajectory(Path::new(text), args.behavior) }
        .map_err(|f| Error::Fallback(f.message))?;
    if traj.dof() != dof {
        return Err(Error::Fallback(format!("planner returned {} joints, robot has {dof}", traj.dof())));
    }
    Ok(traj)
}

pub fn run(args: &RunArgs, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = Scenario::load(args.scenario)?;
    let mut cache = load_or_new(args.cache, || match &scenario.policy {
        Some(p) => Ok(p.clone()),
        None => CachePolicy::new(DEFAULT_THRESHOLDS[0], DEFAULT_THRESHOLDS[1], DEFAULT_THRESHOLDS[2]),
    })?;
    let scene: PlanningScene = io::read_scene(args.scene)?;
    let q = io::read_state(args.state)?;
    scenario.model.check_dimension(&q)?;

    let mut filter = rollout_filter(&scenario.model, &scenario.cbf, &scenario.tracker, &scenario.config);
    let mut wanted_fallback = false;
    let mut fallback = |_: &PlanningScene, _: &[f64]| match args.fallback_cmd {
        Some(cmd) => run_fallback(cmd, args, scenario.dof()),
        None => {
            wanted_fallback = true;
            Err(Error::Fallback("no fallback command given".into()))
        }
    };
    let policy = cache.policy.clone();
    let outcome = match plan_or_filter(&mut cache, args.behavior, &scene, &q, &policy, &mut filter, &mut fallback) {
        Ok(o) => o,
        Err(e) if wanted_fallback => {
            let why = if cache.entries().iter().any(|c| c.behavior == args.behavior) { "no entry within t3 or filtering failed" } else { "no cached entry" };
            return Err(Failure::new(EXIT_NO_MATCH, "no_match", format!("{why} for behavior {:?} and no --fallback-cmd: {e}", args.behavior)));
        }
        Err(e) => return Err(e.into()),
    };
    cache.save(args.cache)?;
    if let Some(path) = out {
        io::write(path, &outcome.trajectory.to_json_string()?)?;
    }
    let report = json!({
        "behavior": args.behavior,
        "decision": outcome.decision.as_str(),
        "selected": outcome.selection.decision.as_str(),
        "entry": outcome.selection.entry,
        "probes": outcome.selection.probes,
        "escalated": outcome.escalated,
        "waypoints": outcome.trajectory.len(),
        "cache_size": cache.len(),
    });
    println!("{report}");
    Ok(())
}
