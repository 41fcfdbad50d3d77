//! Rigid placements.
//!
//! A [`Pose`] is stored the way it is written in input files (translation plus
//! roll/pitch/yaw) so that files round-trip exactly; the isometry is derived
//! once at construction.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{check_finite, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PoseRepr {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

/// Rigid transform: rotation (from fixed-axis roll, pitch, yaw) followed by translation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    repr: PoseRepr,
    iso: Isometry3<f64>,
}

impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;

    fn try_from(repr: PoseRepr) -> Result<Self> {
        for v in repr.xyz.iter().chain(repr.rpy.iter()) {
            check_finite("pose component", *v)?;
        }
        Ok(Self::build(repr))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        p.repr
    }
}

impl Pose {
    fn build(repr: PoseRepr) -> Self {
        let [x, y, z] = repr.xyz;
        let [r, p, yaw] = repr.rpy;
        let iso = Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, yaw));
        Pose { repr, iso }
    }

    pub fn identity() -> Self {
        Self::build(PoseRepr::default())
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::build(PoseRepr { xyz, rpy })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_xyz_rpy([x, y, z], [0.0; 3])
    }

    /// Builds a pose from an arbitrary isometry. The stored roll/pitch/yaw are
    /// recovered from the rotation, so the result compares equal only to poses
    /// built the same way.
    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (r, p, y) = iso.rotation.euler_angles();
        let t = iso.translation.vector;
        let mut pose = Self::from_xyz_rpy([t.x, t.y, t.z], [r, p, y]);
        pose.iso = *iso;
        pose
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.repr.xyz
    }

    pub fn rpy(&self) -> [f64; 3] {
        self.repr.rpy
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.iso.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.iso.translation.vector
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.iso.transform_point(&Point3::from(*p)).coords
    }

    /// Rotation angle of `self⁻¹ · other`, in `[0, π]`.
    ///
    /// For unit quaternions `|q₁ − q₂| = 2 sin(θ/4)` and `|q₁ + q₂| = 2 cos(θ/4)`;
    /// this form is exactly zero for equal rotations, unlike `acos`.
    pub fn geodesic_angle(&self, other: &Pose) -> f64 {
        let a = self.iso.rotation.coords;
        let mut b = other.iso.rotation.coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        4.0 * (a - b).norm().atan2((a + b).norm())
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation() - other.translation()).norm()
    }
}
