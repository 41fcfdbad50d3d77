//! Serial-chain forward kinematics and point Jacobians.
//!
//! Link `i` is the child of joint `i`; link 0 is the first moving link. A
//! joint's frame is its parent link frame composed with the joint's fixed
//! origin, followed by the joint motion (rotation about, or translation
//! along, the joint axis expressed in that frame).

use nalgebra::{Isometry3, Matrix3, Matrix3xX, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Shape;
use crate::pose::Pose;
use crate::{check_finite, Error, Result};

/// Joint count cap for untrusted model files.
pub const MAX_JOINTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    /// Velocity bound, rad/s or m/s.
    pub velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    #[serde(rename = "type")]
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    #[serde(default)]
    pub origin: Pose,
    pub limits: JointLimits,
}

/// A collision body rigidly attached to a link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    pub link: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub shape: Shape,
    #[serde(default)]
    pub origin: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotModelRepr", into = "RobotModelRepr")]
pub struct RobotModel {
    joints: Vec<Joint>,
    geometry: Vec<LinkGeometry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotModelRepr {
    joints: Vec<Joint>,
    #[serde(default)]
    geometry: Vec<LinkGeometry>,
}

impl TryFrom<RobotModelRepr> for RobotModel {
    type Error = Error;

    fn try_from(r: RobotModelRepr) -> Result<Self> {
        RobotModel::new(r.joints, r.geometry)
    }
}

impl From<RobotModel> for RobotModelRepr {
    fn from(m: RobotModel) -> Self {
        RobotModelRepr { joints: m.joints, geometry: m.geometry }
    }
}

/// Joint positions and, optionally, velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointState {
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_dot: Option<Vec<f64>>,
}

impl JointState {
    pub fn new(q: Vec<f64>) -> Self {
        JointState { q, q_dot: None }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let state: JointState = serde_json::from_str(s)?;
        for v in state.q.iter().chain(state.q_dot.iter().flatten()) {
            check_finite("joint state", *v)?;
        }
        if let Some(qd) = &state.q_dot {
            if qd.len() != state.q.len() {
                return Err(Error::invalid("q_dot length differs from q length"));
            }
        }
        Ok(state)
    }
}

/// World frames of every link at one configuration.
#[derive(Clone, Debug)]
pub struct ChainFrames {
    links: Vec<Isometry3<f64>>,
    /// World joint axes and origins, used for Jacobian columns.
    axes: Vec<Vector3<f64>>,
    kinds: Vec<JointKind>,
}

impl ChainFrames {
    pub fn link(&self, i: usize) -> &Isometry3<f64> {
        &self.links[i]
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian_world(&self, link: usize, point: &Vector3<f64>) -> Matrix3xX<f64> {
        let n = self.links.len();
        let mut j = Matrix3xX::zeros(n);
        for k in 0..=link.min(n.saturating_sub(1)) {
            let axis = self.axes[k];
            let col = match self.kinds[k] {
                JointKind::Revolute => axis.cross(&(point - self.links[k].translation.vector)),
                JointKind::Prismatic => axis,
            };
            j.set_column(k, &col);
        }
        j
    }
}

impl RobotModel {
    pub fn new(joints: Vec<Joint>, geometry: Vec<LinkGeometry>) -> Result<Self> {
        if joints.is_empty() || joints.len() > MAX_JOINTS {
            return Err(Error::invalid(format!("a chain needs between 1 and {MAX_JOINTS} joints, got {}", joints.len())));
        }
        let mut joints = joints;
        for (i, j) in joints.iter_mut().enumerate() {
            for c in j.axis.iter() {
                check_finite("joint axis", *c)?;
            }
            let norm = j.axis.norm();
            if norm < 1e-6 {
                return Err(Error::invalid(format!("joint {i} has a zero axis")));
            }
            j.axis /= norm;
            let l = &j.limits;
            check_finite("joint lower limit", l.lower)?;
            check_finite("joint upper limit", l.upper)?;
            check_finite("joint velocity limit", l.velocity)?;
            if l.lower > l.upper {
                return Err(Error::invalid(format!("joint {i} has lower limit above upper limit")));
            }
            if l.velocity <= 0.0 {
                return Err(Error::invalid(format!("joint {i} velocity bound must be positive")));
            }
        }
        for (k, g) in geometry.iter().enumerate() {
            if g.link >= joints.len() {
                return Err(Error::invalid(format!("geometry {k} references missing link {}", g.link)));
            }
        }
        Ok(RobotModel { joints, geometry })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn geometry(&self) -> &[LinkGeometry] {
        &self.geometry
    }

    /// Name of geometry entry `k`; unnamed entries get `link<i>/<k>`.
    pub fn body_name(&self, k: usize) -> String {
        let g = &self.geometry[k];
        g.name.clone().unwrap_or_else(|| format!("link{}/{}", g.link, k))
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.limits.velocity).collect()
    }

    pub fn check_dimension(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::invalid(format!("expected {} joint values, got {}", self.dof(), q.len())));
        }
        Ok(())
    }

    fn check_link(&self, link: usize) -> Result<()> {
        if link >= self.dof() {
            return Err(Error::invalid(format!("link index {link} out of range for {} links", self.dof())));
        }
        Ok(())
    }

    /// Whether every joint value lies within its limits.
    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter().zip(&self.joints).all(|(v, j)| *v >= j.limits.lower && *v <= j.limits.upper)
    }

    pub fn frames(&self, q: &[f64]) -> Result<ChainFrames> {
        self.check_dimension(q)?;
        if !self.within_limits(q) {
            log::trace!("configuration outside joint limits: {q:?}");
        }
        let n = self.dof();
        let mut links = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut parent = Isometry3::identity();
        for (j, &qi) in self.joints.iter().zip(q) {
            let joint_frame = parent * j.origin.isometry();
            let motion = match j.kind {
                JointKind::Revolute => Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&Unit::new_unchecked(j.axis), qi)),
                JointKind::Prismatic => Isometry3::from_parts(Translation3::from(j.axis * qi), UnitQuaternion::identity()),
            };
            axes.push(joint_frame.rotation * j.axis);
            parent = joint_frame * motion;
            links.push(parent);
        }
        Ok(ChainFrames { links, axes, kinds: self.joints.iter().map(|j| j.kind).collect() })
    }

    /// World position of `local_point` fixed in link `link`.
    pub fn forward_kinematics(&self, q: &[f64], link: usize, local_point: &Vector3<f64>) -> Result<Vector3<f64>> {
        self.check_link(link)?;
        let frames = self.frames(q)?;
        Ok(frames.link(link).transform_point(&Point3::from(*local_point)).coords)
    }

    /// Positional Jacobian (3 × n) of `local_point` fixed in link `link`.
    pub fn point_jacobian(&self, q: &[f64], link: usize, local_point: &Vector3<f64>) -> Result<Matrix3xX<f64>> {
        self.check_link(link)?;
        let frames = self.frames(q)?;
        let p = frames.link(link).transform_point(&Point3::from(*local_point)).coords;
        Ok(frames.point_jacobian_world(link, &p))
    }

    /// Points whose Jacobian norms bound that of every point on the robot's
    /// bodies: the corners of each body's bounding box. The Jacobian is affine
    /// in the point, so its spectral norm is convex and peaks at a corner.
    /// A model without geometry uses the origin of its last link.
    pub fn probe_points(&self) -> Vec<(usize, Vector3<f64>)> {
        if self.geometry.is_empty() {
            return vec![(self.dof() - 1, Vector3::zeros())];
        }
        self.geometry.iter().flat_map(|g| g.shape.local_aabb_corners().into_iter().map(move |c| (g.link, g.origin.transform_point(&c)))).collect()
    }

    /// Sampled estimate of the largest point-Jacobian spectral norm over the
    /// joint-limit box, inflated by the default safety factor.
    pub fn jacobian_norm_bound(&self, sample_count: usize, seed: u64) -> f64 {
        let cfg = JacobianBoundConfig { sample_count, seed, ..Default::default() };
        self.jacobian_norm_bound_with(&cfg, &self.probe_points())
    }

    pub fn jacobian_norm_bound_with(&self, cfg: &JacobianBoundConfig, points: &[(usize, Vector3<f64>)]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut q = vec![0.0; self.dof()];
        let mut best: f64 = 0.0;
        for _ in 0..cfg.sample_count.max(1) {
            for (qi, j) in q.iter_mut().zip(&self.joints) {
                *qi = if j.limits.upper > j.limits.lower { rng.gen_range(j.limits.lower..=j.limits.upper) } else { j.limits.lower };
            }
            let frames = self.frames(&q).expect("sample has model dimension");
            for (link, local) in points {
                let p = frames.link(*link).transform_point(&Point3::from(*local)).coords;
                best = best.max(spectral_norm(&frames.point_jacobian_world(*link, &p)));
            }
        }
        best * cfg.safety_factor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianBoundConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub safety_factor: f64,
}

impl Default for JacobianBoundConfig {
    fn default() -> Self {
        JacobianBoundConfig { sample_count: 2000, seed: 0, safety_factor: 1.25 }
    }
}

/// Largest singular value of a 3 × n matrix.
pub fn spectral_norm(j: &Matrix3xX<f64>) -> f64 {
    let g: Matrix3<f64> = j * j.transpose();
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}
