//! Checks shared by the fuzz targets and by the seed-replay test in the core
//! crate. Each one must not panic on any input; whatever parses must survive
//! its own serialization unchanged.

use std::path::Path;

use trajguard::cache::Cache;
use trajguard::kinematics::RobotModel;
use trajguard::pose::Pose;
use trajguard::scenario::{Scenario, ScenarioSpec, Source};
use trajguard::scene::PlanningScene;
use trajguard::trace::{read_csv, to_csv_string};
use trajguard::tracker::Trajectory;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn scene_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(scene) = PlanningScene::from_json_str(s) {
        let again = PlanningScene::from_json_str(&serde_json::to_string(&scene).unwrap()).expect("serialized scene rejected");
        assert_eq!(again, scene);
    }
}

pub fn robot_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(model) = RobotModel::from_json_str(s) {
        let again = RobotModel::from_json_str(&serde_json::to_string(&model).unwrap()).expect("serialized robot rejected");
        assert_eq!(again, model);
        let q = vec![0.0; model.dof()];
        if model.within_limits(&q) {
            let _ = model.frames(&q);
        }
    }
}

pub fn trajectory_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(t) = Trajectory::from_json_str(s) {
        assert_eq!(Trajectory::from_json_str(&t.to_json_string().unwrap()).unwrap(), t);
    }
}

pub fn trajectory_csv(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(t) = Trajectory::from_csv_str("fuzz", s) {
        assert_eq!(Trajectory::from_csv_str("fuzz", &t.to_csv_string().unwrap()).unwrap(), t);
    }
}

pub fn trace_csv(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(rows) = read_csv(s) {
        let Some(first) = rows.first() else { return };
        // Compare as text: a logged NaN would defeat `==` on the rows.
        let once = to_csv_string(&rows, first.q.len()).unwrap();
        let twice = to_csv_string(&read_csv(&once).unwrap(), first.q.len()).unwrap();
        assert_eq!(once, twice);
    }
}

pub fn cache_file(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(cache) = Cache::from_json_str(s) {
        assert_eq!(Cache::from_json_str(&cache.to_json_string().unwrap()).unwrap(), cache);
    }
}

/// Inline scenarios only, so the fuzzer cannot make the loader read files.
pub fn scenario_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(spec) = serde_json::from_str::<ScenarioSpec>(s) else { return };
    let inline = matches!(spec.robot, Source::Inline(_)) && matches!(spec.scene, Source::Inline(_)) && !matches!(spec.reference, Some(Source::Path(_)));
    if inline {
        let _ = Scenario::from_spec(spec, Path::new("/nonexistent"));
    }
}

pub fn pose_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(p) = serde_json::from_str::<Pose>(s) {
        assert!(p.translation().iter().all(|x| x.is_finite()));
        assert_eq!(p.geodesic_angle(&p), 0.0);
        assert_eq!(serde_json::from_str::<Pose>(&serde_json::to_string(&p).unwrap()).unwrap(), p);
    }
}
