//! Cluster joints for constraint embedding.
//!
//! A cluster groups bodies that close a local loop. Inside the cluster the
//! bodies form a small spanning tree of one-DoF joints whose coordinates
//! follow a linear transmission `y = G q̄` of the cluster coordinates `q̄`.
//! Geared pairs and belt-driven links are both of this form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::joint::JointModel;
use crate::spatial::{cross_motion, MotionVector, SpatialTransform};
use crate::tensor::Tensor3;

/// Where a cluster body attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyLink {
    /// Attached to the inertial frame.
    World,
    /// Attached to body `b` (local index) of the parent cluster.
    External(usize),
    /// Attached to an earlier body (local index) of the same cluster.
    Internal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterJoint {
    /// One body with an ordinary joint.
    Single(JointModel),
    /// Several one-DoF joints driven through `y = G q̄`.
    Transmission { joints: Vec<JointModel>, ratio: DMatrix<f64> },
}

fn mv(m: &DMatrix<f64>, row: usize, col: usize) -> MotionVector {
    MotionVector::from_iterator(m.view((row, col), (6, 1)).iter().copied())
}

impl ClusterJoint {
    pub fn nq(&self) -> usize {
        match self {
            ClusterJoint::Single(j) => j.nq(),
            ClusterJoint::Transmission { ratio, .. } => ratio.ncols(),
        }
    }

    pub fn nv(&self) -> usize {
        match self {
            ClusterJoint::Single(j) => j.nv(),
            ClusterJoint::Transmission { ratio, .. } => ratio.ncols(),
        }
    }

    pub fn nbodies(&self) -> usize {
        match self {
            ClusterJoint::Single(_) => 1,
            ClusterJoint::Transmission { joints, .. } => joints.len(),
        }
    }

    /// Per-body joint transforms `X_J(y_b)·X_T` for configuration `q̄`.
    pub fn body_transforms(&self, q: &[f64]) -> Result<Vec<SpatialTransform>> {
        match self {
            ClusterJoint::Single(j) => Ok(vec![j.joint_transform(q)?]),
            ClusterJoint::Transmission { joints, ratio } => {
                if q.len() != ratio.ncols() {
                    return Err(Error::InvalidConfig(format!("cluster expects {} coordinates, got {}", ratio.ncols(), q.len())));
                }
                let y = ratio * DVector::from_column_slice(q);
                joints.iter().zip(y.iter()).map(|(j, yb)| j.joint_transform(&[*yb])).collect()
            }
        }
    }

    /// Block-row structure of `ᵏX_{p(k)}`: for each body, the parent-cluster
    /// block it reads from and the transform applied.
    pub fn transform_rows(&self, links: &[BodyLink], q: &[f64]) -> Result<Vec<(usize, SpatialTransform)>> {
        let xs = self.body_transforms(q)?;
        let mut rows: Vec<(usize, SpatialTransform)> = Vec::with_capacity(xs.len());
        for (r, x) in xs.iter().enumerate() {
            let row = match links[r] {
                BodyLink::World => (0, *x),
                BodyLink::External(c) => (c, *x),
                BodyLink::Internal(s) => (rows[s].0, x.compose(&rows[s].1)),
            };
            rows.push(row);
        }
        Ok(rows)
    }

    /// Dense `ᵏX_{p(k)}` of size (6n_k)×(6n_parent).
    pub fn transform(&self, links: &[BodyLink], parent_bodies: usize, q: &[f64]) -> Result<DMatrix<f64>> {
        let rows = self.transform_rows(links, q)?;
        let mut x = DMatrix::zeros(6 * rows.len(), 6 * parent_bodies);
        for (r, (c, t)) in rows.iter().enumerate() {
            x.view_mut((6 * r, 6 * c), (6, 6)).copy_from(&t.to_matrix());
        }
        Ok(x)
    }

    /// Stacked mode matrix `Φ_k(q̄)` of size (6n_k)×n̄_v.
    pub fn motion_subspace(&self, links: &[BodyLink], q: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            ClusterJoint::Single(j) => Ok(j.motion_subspace()),
            ClusterJoint::Transmission { joints, ratio } => {
                let xs = self.body_transforms(q)?;
                let d = ratio.ncols();
                let mut phi = DMatrix::zeros(6 * joints.len(), d);
                for (r, j) in joints.iter().enumerate() {
                    let s = mv(&j.motion_subspace(), 0, 0);
                    for c in 0..d {
                        let mut col = s * ratio[(r, c)];
                        if let BodyLink::Internal(p) = links[r] {
                            col += xs[r].apply_motion(&mv(&phi, 6 * p, c));
                        }
                        phi.view_mut((6 * r, c), (6, 1)).copy_from(&col);
                    }
                }
                Ok(phi)
            }
        }
    }

    /// `Φ̊_k(q̄, v̄)`: rate of the entries of `Φ_k` when `q̄̇ = v̄`.
    pub fn motion_subspace_ring(&self, links: &[BodyLink], q: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            ClusterJoint::Single(j) => Ok(j.motion_subspace_ring()),
            ClusterJoint::Transmission { joints, ratio } => {
                let xs = self.body_transforms(q)?;
                let phi = self.motion_subspace(links, q)?;
                let ydot = ratio * DVector::from_column_slice(v);
                let d = ratio.ncols();
                let mut ring = DMatrix::zeros(6 * joints.len(), d);
                for (r, j) in joints.iter().enumerate() {
                    let BodyLink::Internal(p) = links[r] else { continue };
                    // d/dt X_r = −((S_r ẏ_r)×) X_r for a one-DoF joint
                    let rel = mv(&j.motion_subspace(), 0, 0) * ydot[r];
                    let rel_x = cross_motion(&rel);
                    for c in 0..d {
                        let moved = xs[r].apply_motion(&mv(&phi, 6 * p, c));
                        let col = xs[r].apply_motion(&mv(&ring, 6 * p, c)) - rel_x * moved;
                        ring.view_mut((6 * r, c), (6, 1)).copy_from(&col);
                    }
                }
                Ok(ring)
            }
        }
    }

    /// `𝒟_k = (∂Φ̊_k/∂v̄_k)ᵀ²³`: page `c` column `e` holds column `c` of
    /// `Φ̊_k(q̄, e_e)`.
    pub fn ring_derivative(&self, links: &[BodyLink], q: &[f64]) -> Result<Tensor3> {
        let d = self.nv();
        let n = 6 * self.nbodies();
        let mut t = Tensor3::zeros(n, d, d);
        if matches!(self, ClusterJoint::Single(_)) {
            return Ok(t);
        }
        for e in 0..d {
            let mut unit = vec![0.0; d];
            unit[e] = 1.0;
            let ring = self.motion_subspace_ring(links, q, &unit)?;
            for c in 0..d {
                for a in 0..n {
                    t.set(a, e, c, ring[(a, c)]);
                }
            }
        }
        Ok(t)
    }
}
