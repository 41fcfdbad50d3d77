//! File helpers and the failure type shared by the subcommands.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use trajguard::scene::PlanningScene;
use trajguard::tracker::Trajectory;
use trajguard::Error;

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_NO_MATCH: u8 = 3;
pub const EXIT_UNSAFE: u8 = 4;

/// A nonzero exit with a machine-readable reason.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code, kind, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "exit_code": self.code, "message": self.message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Geometry(_) => "geometry",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Fallback(_) => "fallback",
            Error::Io(_) => "io",
        };
        Failure::new(EXIT_ERROR, kind, e.to_string())
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_ERROR, "io", format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(EXIT_ERROR, "io", e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

pub fn read_scene(path: &Path) -> Result<PlanningScene, Failure> {
    Ok(PlanningScene::from_json_str(&read(path)?)?)
}

pub fn read_state(path: &Path) -> Result<Vec<f64>, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::new(EXIT_ERROR, "parse", format!("state {}: {e}", path.display())))
}

/// Reads a trajectory as CSV if the extension says so, JSON otherwise.
pub fn read_trajectory(path: &Path, behavior: &str) -> Result<Trajectory, Failure> {
    parse_trajectory(&read(path)?, path.extension().is_some_and(|e| e == "csv"), behavior)
}

pub fn parse_trajectory(text: &str, csv: bool, behavior: &str) -> Result<Trajectory, Failure> {
    let mut t = if csv { Trajectory::from_csv_str(behavior, text)? } else { Trajectory::from_json_str(text)? };
    t.set_behavior(behavior);
    Ok(t)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
