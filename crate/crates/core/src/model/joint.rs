//! Joint models.
//!
//! Every joint carries a fixed offset (parent body frame to joint frame)
//! followed by the joint motion. Motion subspaces are expressed in the
//! successor (body) frame. Spherical and free joints use body-frame
//! velocities as generalized speeds, so their subspaces are constant.

use nalgebra::{DMatrix, Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{cross_motion, skew, SpatialTransform};

/// Fixed placement of a joint frame in its parent body frame.
///
/// Orientation is roll-pitch-yaw (`R = Rz(yaw)·Ry(pitch)·Rx(roll)`), in rad;
/// position in m.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Offset {
    pub fn translation(xyz: [f64; 3]) -> Self {
        Self { xyz, rpy: [0.0; 3] }
    }

    pub fn is_identity(&self) -> bool {
        self.xyz == [0.0; 3] && self.rpy == [0.0; 3]
    }

    pub fn transform(&self) -> SpatialTransform {
        let r = Rotation3::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]);
        SpatialTransform::from_pose(r.matrix(), &Vector3::from(self.xyz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointKind {
    Revolute {
        axis: Vector3<f64>,
    },
    Prismatic {
        axis: Vector3<f64>,
    },
    Helical {
        axis: Vector3<f64>,
        pitch: f64,
    },
    /// Orientation as a unit quaternion `[w, x, y, z]`; speeds are the body angular velocity.
    Spherical,
    /// Cartesian translation `[x, y, z]` without rotation.
    Translation,
    /// `[w, x, y, z, p_x, p_y, p_z]`; speeds are the body twist `[ω; v]`.
    Free,
}

impl JointKind {
    pub fn name(&self) -> &'static str {
        match self {
            JointKind::Revolute { .. } => "revolute",
            JointKind::Prismatic { .. } => "prismatic",
            JointKind::Helical { .. } => "helical",
            JointKind::Spherical => "spherical",
            JointKind::Translation => "translation",
            JointKind::Free => "free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointModel {
    pub kind: JointKind,
    pub offset: Offset,
}

pub(crate) fn quat_from_slice(q: &[f64]) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]))
}

fn quat_to_slice(q: &UnitQuaternion<f64>, out: &mut [f64]) {
    out[0] = q.w;
    out[1] = q.i;
    out[2] = q.j;
    out[3] = q.k;
}

/// `exp(ω×)` as a unit quaternion.
fn quat_exp(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*w)
}

/// Left Jacobian `V(ω)` of SO(3), so that `exp([ω; v]^) = [exp(ω×), V(ω) v]`.
fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let th = w.norm();
    let k = skew(w);
    if th < 1e-6 {
        Matrix3::identity() + k * 0.5 + k * k / 6.0
    } else {
        let th2 = th * th;
        Matrix3::identity() + k * ((1.0 - th.cos()) / th2) + k * k * ((th - th.sin()) / (th2 * th))
    }
}

impl JointModel {
    pub fn new(kind: JointKind) -> Self {
        Self { kind, offset: Offset::default() }
    }

    pub fn with_offset(mut self, offset: Offset) -> Self {
        self.offset = offset;
        self
    }

    pub fn revolute(axis: Vector3<f64>) -> Self {
        Self::new(JointKind::Revolute { axis: axis.normalize() })
    }

    pub fn prismatic(axis: Vector3<f64>) -> Self {
        Self::new(JointKind::Prismatic { axis: axis.normalize() })
    }

    pub fn helical(axis: Vector3<f64>, pitch: f64) -> Self {
        Self::new(JointKind::Helical { axis: axis.normalize(), pitch })
    }

    /// Configuration dimension.
    pub fn nq(&self) -> usize {
        match self.kind {
            JointKind::Revolute { .. } | JointKind::Prismatic { .. } | JointKind::Helical { .. } => 1,
            JointKind::Spherical => 4,
            JointKind::Translation => 3,
            JointKind::Free => 7,
        }
    }

    /// Number of generalized speeds.
    pub fn nv(&self) -> usize {
        match self.kind {
            JointKind::Revolute { .. } | JointKind::Prismatic { .. } | JointKind::Helical { .. } => 1,
            JointKind::Spherical | JointKind::Translation => 3,
            JointKind::Free => 6,
        }
    }

    /// True when the generalized speeds are coordinate derivatives.
    pub fn is_coordinate(&self) -> bool {
        !matches!(self.kind, JointKind::Spherical | JointKind::Free)
    }

    pub fn neutral(&self) -> Vec<f64> {
        match self.kind {
            JointKind::Spherical => vec![1.0, 0.0, 0.0, 0.0],
            JointKind::Free => vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            _ => vec![0.0; self.nq()],
        }
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.nq() {
            return Err(Error::InvalidConfig(format!("{} joint expects {} configuration values, got {}", self.kind.name(), self.nq(), q.len())));
        }
        Ok(())
    }

    /// Joint motion transform `X_J(q)` (joint frame to body frame).
    pub fn motion_transform(&self, q: &[f64]) -> Result<SpatialTransform> {
        self.check_q(q)?;
        Ok(match self.kind {
            JointKind::Revolute { axis } => SpatialTransform::rotation(&axis, q[0]),
            JointKind::Prismatic { axis } => SpatialTransform::translation(&(axis * q[0])),
            JointKind::Helical { axis, pitch } => {
                let r = SpatialTransform::rotation(&axis, q[0]);
                SpatialTransform::new(r.rot, axis * (pitch * q[0]))
            }
            JointKind::Spherical => {
                let r = quat_from_slice(q).to_rotation_matrix();
                SpatialTransform::from_pose(r.matrix(), &Vector3::zeros())
            }
            JointKind::Translation => SpatialTransform::translation(&Vector3::new(q[0], q[1], q[2])),
            JointKind::Free => {
                let r = quat_from_slice(&q[..4]).to_rotation_matrix();
                SpatialTransform::from_pose(r.matrix(), &Vector3::new(q[4], q[5], q[6]))
            }
        })
    }

    /// `ⁱX_{p(i)} = X_J(q) · X_T`.
    pub fn joint_transform(&self, q: &[f64]) -> Result<SpatialTransform> {
        Ok(self.motion_transform(q)?.compose(&self.offset.transform()))
    }

    /// Motion subspace `Φ` (6 × nv) in the body frame.
    pub fn motion_subspace(&self) -> DMatrix<f64> {
        let col = |top: Vector3<f64>, bot: Vector3<f64>| DMatrix::from_column_slice(6, 1, Vector6::new(top.x, top.y, top.z, bot.x, bot.y, bot.z).as_slice());
        match self.kind {
            JointKind::Revolute { axis } => col(axis, Vector3::zeros()),
            JointKind::Prismatic { axis } => col(Vector3::zeros(), axis),
            JointKind::Helical { axis, pitch } => col(axis, axis * pitch),
            JointKind::Spherical => {
                let mut m = DMatrix::zeros(6, 3);
                m.view_mut((0, 0), (3, 3)).fill_with_identity();
                m
            }
            JointKind::Translation => {
                let mut m = DMatrix::zeros(6, 3);
                m.view_mut((3, 0), (3, 3)).fill_with_identity();
                m
            }
            JointKind::Free => DMatrix::identity(6, 6),
        }
    }

    /// `Φ̊`, the local-coordinate rate of the motion subspace. Zero for
    /// every built-in joint.
    pub fn motion_subspace_ring(&self) -> DMatrix<f64> {
        DMatrix::zeros(6, self.nv())
    }

    /// Configuration rate `q̇` for speeds `v` (quaternions as `½ q ⊗ (0, ω)`).
    pub fn config_rate(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        match self.kind {
            JointKind::Spherical => quat_rate(q, &Vector3::new(v[0], v[1], v[2]), out),
            JointKind::Free => {
                quat_rate(&q[..4], &Vector3::new(v[0], v[1], v[2]), &mut out[..4]);
                let r = quat_from_slice(&q[..4]);
                let pd = r * Vector3::new(v[3], v[4], v[5]);
                out[4..7].copy_from_slice(pd.as_slice());
            }
            _ => out.copy_from_slice(v),
        }
    }

    /// `q ⊕ v·dt` along the exponential map (exact for constant speeds).
    pub fn integrate(&self, q: &[f64], v: &[f64], dt: f64, out: &mut [f64]) {
        match self.kind {
            JointKind::Spherical => {
                let w = Vector3::new(v[0], v[1], v[2]) * dt;
                quat_to_slice(&(quat_from_slice(q) * quat_exp(&w)), out);
            }
            JointKind::Free => {
                let w = Vector3::new(v[0], v[1], v[2]) * dt;
                let lin = Vector3::new(v[3], v[4], v[5]) * dt;
                let r0 = quat_from_slice(&q[..4]);
                let p = Vector3::new(q[4], q[5], q[6]) + r0 * (so3_left_jacobian(&w) * lin);
                quat_to_slice(&(r0 * quat_exp(&w)), &mut out[..4]);
                out[4..7].copy_from_slice(p.as_slice());
            }
            _ => {
                for (o, (qi, vi)) in out.iter_mut().zip(q.iter().zip(v)) {
                    *o = qi + vi * dt;
                }
            }
        }
    }

    /// Rate of the exponential coordinates `u` whose image `q ⊕ u` moves
    /// with speeds `xi`: `u̇ = ξ + ½[u, ξ] + ¹⁄₁₂[u, [u, ξ]]`, truncated at
    /// the order a four-stage Runge-Kutta step needs.
    pub fn local_rate(&self, u: &[f64], xi: &[f64], out: &mut [f64]) {
        match self.kind {
            JointKind::Spherical => {
                let (u, x) = (Vector3::from_column_slice(u), Vector3::from_column_slice(xi));
                let b = u.cross(&x);
                out.copy_from_slice((x + b * 0.5 + u.cross(&b) / 12.0).as_slice());
            }
            JointKind::Free => {
                let (u, x) = (Vector6::from_column_slice(u), Vector6::from_column_slice(xi));
                let ad = cross_motion(&u);
                let b = ad * x;
                out.copy_from_slice((x + b * 0.5 + ad * b / 12.0).as_slice());
            }
            _ => out.copy_from_slice(xi),
        }
    }

    /// Rescales quaternion blocks to unit norm.
    pub fn normalize(&self, q: &mut [f64]) {
        if matches!(self.kind, JointKind::Spherical | JointKind::Free) {
            let n = q[..4].iter().map(|x| x * x).sum::<f64>().sqrt();
            q[..4].iter_mut().for_each(|x| *x /= n);
        }
    }

    /// Deviation of quaternion blocks from unit norm (0 for other joints).
    pub fn quaternion_norm_error(&self, q: &[f64]) -> f64 {
        if matches!(self.kind, JointKind::Spherical | JointKind::Free) {
            (q[..4].iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()
        } else {
            0.0
        }
    }
}

fn quat_rate(q: &[f64], w: &Vector3<f64>, out: &mut [f64]) {
    let qq = Quaternion::new(q[0], q[1], q[2], q[3]);
    let d = qq * Quaternion::from_imag(*w) * 0.5;
    out[0] = d.w;
    out[1] = d.i;
    out[2] = d.j;
    out[3] = d.k;
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn revolute_at_zero_is_offset() {
        let off = Offset { xyz: [0.1, 0.2, 0.3], rpy: [0.3, -0.1, 0.2] };
        let j = JointModel::revolute(Vector3::z()).with_offset(off);
        let x = j.joint_transform(&[0.0]).unwrap();
        assert!((x.to_matrix() - off.transform().to_matrix()).amax() < 1e-15);
    }

    #[test]
    fn prismatic_unit_translation() {
        let j = JointModel::prismatic(Vector3::x());
        let x = j.joint_transform(&[1.0]).unwrap();
        assert!((x.trans - Vector3::x()).amax() < 1e-15);
        assert!((x.rot - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn revolute_composition() {
        let j = JointModel::revolute(Vector3::z());
        let half = j.motion_transform(&[PI / 2.0]).unwrap();
        let full = j.motion_transform(&[PI]).unwrap();
        assert!((half.compose(&half).to_matrix() - full.to_matrix()).amax() < 1e-12);
    }

    #[test]
    fn subspaces() {
        let r = JointModel::revolute(Vector3::z()).motion_subspace();
        assert_eq!(r.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(JointModel::new(JointKind::Free).motion_subspace(), DMatrix::identity(6, 6));
        assert_eq!(JointModel::new(JointKind::Free).motion_subspace_ring(), DMatrix::zeros(6, 6));
    }

    #[test]
    fn wrong_config_dimension() {
        assert!(JointModel::new(JointKind::Spherical).joint_transform(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn free_half_turn() {
        let j = JointModel::new(JointKind::Free);
        let dt = 0.01;
        let v = [0.0, 0.0, PI / dt, 0.0, 0.0, 0.0];
        let mut out = [0.0; 7];
        j.integrate(&j.neutral(), &v, dt, &mut out);
        let expect = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI);
        assert!((out[0] - expect.w).abs() < 1e-12);
        assert!((out[3] - expect.k).abs() < 1e-12);
        assert!(out[4..].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_speed_leaves_state() {
        let j = JointModel::new(JointKind::Free);
        let q = [0.5, 0.5, 0.5, 0.5, 1.0, 2.0, 3.0];
        let mut out = [0.0; 7];
        j.integrate(&q, &[0.0; 6], 0.1, &mut out);
        assert_eq!(out, q);
    }

    #[test]
    fn free_exponential_matches_body_twist() {
        // Finite difference of the pose along the exponential map recovers the body twist.
        let j = JointModel::new(JointKind::Free);
        let q0 = [0.9, 0.1, -0.3, 0.2, 0.4, -0.5, 0.6];
        let mut q = q0;
        j.normalize(&mut q);
        let v = [0.3, -0.7, 0.2, 1.0, 0.5, -0.4];
        let h = 1e-6;
        let (mut qp, mut qm) = ([0.0; 7], [0.0; 7]);
        j.integrate(&q, &v, h, &mut qp);
        j.integrate(&q, &v, -h, &mut qm);
        let mut rate = [0.0; 7];
        j.config_rate(&q, &v, &mut rate);
        for k in 0..7 {
            assert!(((qp[k] - qm[k]) / (2.0 * h) - rate[k]).abs() < 1e-8);
        }
    }
}
