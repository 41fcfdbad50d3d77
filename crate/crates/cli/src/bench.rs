use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use trajguard::cbf::cbf_step;
use trajguard::scenario::Scenario;
use trajguard::tracker::{desired_velocity, TrackerState, TrackingRun, Trajectory};

use crate::io::{self, Failure};

/// Nearest-rank summary in milliseconds, `null` when there are no samples.
fn summary(samples_s: &mut [f64]) -> Value {
    if samples_s.is_empty() {
        return Value::Null;
    }
    samples_s.sort_by(f64::total_cmp);
    let n = samples_s.len();
    let rank = |p: f64| samples_s[((p * n as f64).ceil() as usize).clamp(1, n) - 1] * 1e3;
    json!({
        "count": n,
        "mean": 1e3 * samples_s.iter().sum::<f64>() / n as f64,
        "p50": rank(0.5),
        "p99": rank(0.99),
        "max": samples_s[n - 1] * 1e3,
    })
}

/// Re-issues every filter call of `run` and times each one on its own.
fn time_steps(s: &Scenario, reference: &Trajectory, run: &TrackingRun, out: &mut Vec<f64>) -> trajguard::Result<()> {
    let v_sat = s.tracker.saturation(&s.model)?;
    let dt = s.config.dt;
    let mut scene = s.scene.clone();
    let mut state = TrackerState::new();
    let mut next_event = 0;
    // The last row is the converged/timeout marker, not a filter call.
    for (k, row) in run.trace.iter().enumerate().take(run.trace.len().saturating_sub(1)) {
        while next_event < s.config.events.len() && s.config.events[next_event].t <= row.t + 1e-9 * dt {
            s.config.events[next_event].apply(&mut scene)?;
            next_event += 1;
        }
        let (v_des, next) = desired_velocity(&state, reference, &row.q, &s.tracker, &v_sat, if k == 0 { 0.0 } else { dt })?;
        state = next;
        let start = Instant::now();
        let step = cbf_step(&s.model, &scene, &row.q, &v_des, &s.cbf, dt)?;
        out.push(start.elapsed().as_secs_f64());
        std::hint::black_box(step);
    }
    Ok(())
}

pub fn run(scenario_path: &Path, iters: usize, out: Option<&Path>) -> Result<(), Failure> {
    let s = Scenario::load(scenario_path)?;
    let reference = s.reference.as_ref().ok_or_else(|| Failure::from(trajguard::Error::Config("scenario has no reference trajectory".into())))?;
    let mut behavior = Vec::with_capacity(iters);
    let mut steps = Vec::new();
    let mut last = None;
    for _ in 0..iters {
        let start = Instant::now();
        let r = s.run_reference(reference)?;
        behavior.push(start.elapsed().as_secs_f64());
        time_steps(&s, reference, &r.run, &mut steps)?;
        last = Some(r);
    }
    let report = json!({
        "iterations": iters,
        "obstacles": s.scene.obstacles().len(),
        "steps_per_run": last.as_ref().map(|r| r.run.trace.len()),
        "converged": last.as_ref().map(|r| r.run.converged),
        "step_ms": summary(&mut steps),
        "behavior_ms": summary(&mut behavior),
    });
    if let Some(path) = out {
        io::write_json(path, &report)?;
    }
    println!("{report}");
    Ok(())
}
