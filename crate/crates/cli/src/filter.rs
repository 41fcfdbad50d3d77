use std::path::Path;

use serde_json::json;
use trajguard::scenario::{Scenario, INVARIANCE_TOLERANCE};
use trajguard::trace::to_csv_string;

use crate::io::{self, Failure, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_UNSAFE};

/// Input files with their digests, and one hash over all of them.
fn input_digests(scenario: &Scenario) -> Result<(Vec<serde_json::Value>, String), Failure> {
    let base = scenario.inputs.first().and_then(|p| p.parent()).unwrap_or(Path::new(""));
    let mut all = Vec::new();
    let mut listed = Vec::new();
    for path in &scenario.inputs {
        let bytes = std::fs::read(path).map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot read {}: {e}", path.display())))?;
        all.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        all.extend_from_slice(&bytes);
        let shown = path.strip_prefix(base).unwrap_or(path);
        listed.push(json!({ "path": shown.display().to_string(), "sha256": io::sha256_hex(&bytes) }));
    }
    Ok((listed, io::sha256_hex(&all)))
}

pub fn run(scenario_path: &Path, out: &Path) -> Result<(), Failure> {
    let scenario = Scenario::load(scenario_path)?;
    let result = scenario.run()?;
    std::fs::create_dir_all(out).map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot create {}: {e}", out.display())))?;

    io::write(&out.join("trace.csv"), &to_csv_string(&result.run.trace, scenario.dof())?)?;
    io::write(&out.join("trajectory.json"), &result.run.trajectory.to_json_string()?)?;

    let (inputs, config_hash) = input_digests(&scenario)?;
    let manifest = json!({
        "tool": "trajguard",
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "config_hash": config_hash,
        "seed": scenario.seed,
        "dt": scenario.config.dt,
        "t_max": scenario.config.t_max,
        "alpha": scenario.cbf.alpha,
        "j_max": scenario.cbf.j_max,
        "behavior": scenario.behavior,
        "result": {
            "converged": result.run.converged,
            "invariance_held": result.invariance_held,
            "tolerance": INVARIANCE_TOLERANCE,
            "h0": result.h0,
            "min_h": result.min_h,
            "steps": result.run.trace.len(),
            "skipped_waypoints": result.run.skipped,
            "event_steps": result.run.event_steps,
        },
        "certificate": result.certificate,
        "outputs": ["trace.csv", "trajectory.json"],
    });
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "{}",
        json!({ "converged": result.run.converged, "invariance_held": result.invariance_held, "min_h": result.min_h, "steps": result.run.trace.len() })
    );

    if !result.run.converged {
        return Err(Failure::new(EXIT_NOT_CONVERGED, "not_converged", format!("goal not reached within t_max = {} s", scenario.config.t_max)));
    }
    if !result.invariance_held {
        return Err(Failure::new(EXIT_UNSAFE, "invariance_violated", format!("min h {} below -{INVARIANCE_TOLERANCE}", result.min_h)));
    }
    // Outside S_M the certificate claims nothing, so only a certified start can fail it.
    if let Some(c) = result.certificate.as_ref().filter(|c| c.s_m_member && !c.holds(INVARIANCE_TOLERANCE)) {
        return Err(Failure::new(EXIT_UNSAFE, "certificate_violated", format!("h fell {} below the comparison function", -c.worst_comparison_gap)));
    }
    Ok(())
}
