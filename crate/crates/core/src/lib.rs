//! Safety filtering of precomputed manipulator trajectories.
//!
//! A cached joint trajectory is replayed through a velocity-level control
//! barrier function (CBF) quadratic program whose constraints come from
//! signed-distance queries between the robot's collision bodies and the
//! current planning scene. The [`cache`] module decides, per request, whether
//! a stored trajectory can be filtered or whether a planner must be invoked.
//!
//! Layout:
//!
//! * [`pose`], [`kinematics`] - rigid placements, forward kinematics and point Jacobians.
//! * [`geometry`] - convex shapes and the GJK/EPA signed-distance kernel.
//! * [`scene`] - obstacles, allowed-collision matrix, pair enumeration.
//! * [`qp`], [`cbf`] - the active-set QP and the safety filter built on it.
//! * [`tracker`] - waypoint tracking and filtered rollouts.
//! * [`cache`] - the trajectory cache and the filter-or-replan dispatch.
//! * [`sim`] - kinematic and full-order rollouts with safety certificates.
//! * [`scenario`], [`trace`] - file formats used by the command-line tool.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod cbf;
mod error;
pub mod geometry;
pub mod kinematics;
pub mod pose;
pub mod qp;
pub mod scenario;
pub mod scene;
pub mod sim;
pub mod trace;
pub mod tracker;

pub use error::{Error, Result};

/// Largest coordinate magnitude accepted from input files, in metres (or radians).
pub const MAX_INPUT_MAGNITUDE: f64 = 1.0e6;

pub(crate) fn check_finite(what: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value.abs() > MAX_INPUT_MAGNITUDE {
        return Err(Error::invalid(format!("{what} must be finite and at most {MAX_INPUT_MAGNITUDE} in magnitude, got {value}")));
    }
    Ok(value)
}
