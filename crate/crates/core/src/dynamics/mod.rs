//! Recursive dynamics over the cluster tree.
//!
//! Every cluster carries stacked quantities: the velocity `𝗏_k` holds one
//! twist per body, `Φ_k` maps cluster speeds to relative body twists and
//! `ᵏX_{p(k)}` has one transform per block row. Root clusters read from a
//! single world block whose velocity is zero and whose acceleration is the
//! negated gravity.

mod coriolis;

pub use coriolis::{
    coriolis_star, coriolis_transpose_times_v, coriolis_via_derivative, maximal_factorization, project_factorization, skew_perturbation,
    spanning_tree_factorization, stacked_jacobians, FactorizationResult, Method,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::spatial::{stacked_cross_force, stacked_cross_motion, SpatialTransform};

/// Per-cluster kinematic quantities.
#[derive(Debug, Clone)]
pub struct ClusterKinematics {
    /// `ᵏX_{p(k)}`, (6n_k)×(6n_{p(k)}).
    pub x_parent: DMatrix<f64>,
    /// Stacked body twists `𝗏_k`.
    pub v: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub ring: DMatrix<f64>,
    /// `Φ̇_k = (𝗏_k×)Φ_k + Φ̊_k`.
    pub phi_dot: DMatrix<f64>,
    /// Stacked accelerations, when requested.
    pub a: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct KinematicsCache {
    pub clusters: Vec<ClusterKinematics>,
    /// `ᵇX_0` per body.
    pub x_world: Vec<SpatialTransform>,
}

impl KinematicsCache {
    /// Velocity of the blocks that cluster `k` reads from.
    pub fn parent_velocity(&self, model: &Model, k: usize) -> DVector<f64> {
        match model.clusters()[k].parent {
            Some(p) => self.clusters[p].v.clone(),
            None => DVector::zeros(6),
        }
    }

    /// Twist of body `b` in its own frame.
    pub fn body_velocity(&self, model: &Model, b: usize) -> DVector<f64> {
        let (k, l) = model.body_cluster(b);
        self.clusters[k].v.rows(6 * l, 6).into_owned()
    }
}

fn check_len(what: &str, x: &DVector<f64>, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::InvalidConfig(format!("{what} has length {}, expected {n}", x.len())));
    }
    Ok(())
}

/// Forward sweep: transforms, stacked twists, `Φ`, `Φ̊`, `Φ̇` and
/// optionally accelerations (`accel` holds `v̄̇`; gravity enters through the
/// root acceleration when `with_gravity`).
pub fn forward_kinematics_full(model: &Model, q: &DVector<f64>, v: &DVector<f64>, accel: Option<(&DVector<f64>, bool)>) -> Result<KinematicsCache> {
    model.check_state(q, v)?;
    if let Some((vd, _)) = accel {
        check_len("acceleration", vd, model.nv())?;
    }
    let a_root = match accel {
        Some((_, true)) => -model.gravity(),
        _ => nalgebra::Vector6::zeros(),
    };
    let mut out: Vec<ClusterKinematics> = Vec::with_capacity(model.nclusters());
    for (k, c) in model.clusters().iter().enumerate() {
        let qk = model.cluster_q(k, q.as_slice());
        let vk = DVector::from_column_slice(model.cluster_v(k, v.as_slice()));
        let x_parent = c.joint.transform(&c.links, model.parent_blocks(k), qk)?;
        let phi = c.joint.motion_subspace(&c.links, qk)?;
        let ring = c.joint.motion_subspace_ring(&c.links, qk, vk.as_slice())?;
        let (vp, ap) = match c.parent {
            Some(p) => (out[p].v.clone(), out[p].a.clone().unwrap_or_else(|| DVector::zeros(out[p].v.len()))),
            None => (DVector::zeros(6), DVector::from_column_slice(a_root.as_slice())),
        };
        let vel = &x_parent * vp + &phi * &vk;
        let phi_dot = stacked_cross_motion(&vel) * &phi + &ring;
        let a = accel.map(|(vd, _)| {
            let vdk = DVector::from_column_slice(model.cluster_v(k, vd.as_slice()));
            &x_parent * ap + &phi * vdk + &phi_dot * &vk
        });
        out.push(ClusterKinematics { x_parent, v: vel, phi, ring, phi_dot, a });
    }
    let x_world = model.body_world_transforms(q)?;
    Ok(KinematicsCache { clusters: out, x_world })
}

pub fn forward_kinematics(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<KinematicsCache> {
    forward_kinematics_full(model, q, v, None)
}

fn block_range(model: &Model, k: usize) -> std::ops::Range<usize> {
    let c = &model.clusters()[k];
    c.v_offset..c.v_offset + c.nv()
}

/// Joint-space inertia by the composite-rigid-body recursion.
pub fn mass_matrix(model: &Model, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let zero = DVector::zeros(model.nv());
    let kin = forward_kinematics(model, q, &zero)?;
    let mut ic: Vec<DMatrix<f64>> = (0..model.nclusters()).map(|k| model.cluster_inertia(k)).collect();
    let mut h = DMatrix::zeros(model.nv(), model.nv());
    for j in (0..model.nclusters()).rev() {
        let rj = block_range(model, j);
        let mut f = &ic[j] * &kin.clusters[j].phi;
        h.view_mut((rj.start, rj.start), (rj.len(), rj.len())).copy_from(&(kin.clusters[j].phi.transpose() * &f));
        let mut i = j;
        while let Some(p) = model.clusters()[i].parent {
            f = kin.clusters[i].x_parent.transpose() * f;
            i = p;
            let ri = block_range(model, i);
            let hij = kin.clusters[i].phi.transpose() * &f;
            h.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&hij);
            h.view_mut((rj.start, ri.start), (rj.len(), ri.len())).copy_from(&hij.transpose());
        }
        if let Some(p) = model.clusters()[j].parent {
            let x = &kin.clusters[j].x_parent;
            let moved = x.transpose() * &ic[j] * x;
            ic[p] += moved;
        }
    }
    Ok(h)
}

/// Inverse dynamics `τ = H v̄̇ + c(q, v̄) [+ g(q)]`.
pub fn rnea(model: &Model, q: &DVector<f64>, v: &DVector<f64>, vdot: &DVector<f64>, with_gravity: bool) -> Result<DVector<f64>> {
    let kin = forward_kinematics_full(model, q, v, Some((vdot, with_gravity)))?;
    let mut f: Vec<DVector<f64>> = kin
        .clusters
        .iter()
        .enumerate()
        .map(|(k, ck)| {
            let i = model.cluster_inertia(k);
            let a = ck.a.as_ref().expect("accelerations requested");
            &i * a + stacked_cross_force(&ck.v) * (&i * &ck.v)
        })
        .collect();
    let mut tau = DVector::zeros(model.nv());
    for k in (0..model.nclusters()).rev() {
        let r = block_range(model, k);
        tau.rows_mut(r.start, r.len()).copy_from(&(kin.clusters[k].phi.transpose() * &f[k]));
        if let Some(p) = model.clusters()[k].parent {
            let up = kin.clusters[k].x_parent.transpose() * &f[k];
            f[p] += up;
        }
    }
    Ok(tau)
}

/// Generalized gravity `g(q)`.
pub fn gravity_torque(model: &Model, q: &DVector<f64>) -> Result<DVector<f64>> {
    let z = DVector::zeros(model.nv());
    rnea(model, q, &z, &z, true)
}

/// Kinetic energy `½ v̄ᵀ H v̄`, summed over bodies.
pub fn kinetic_energy(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let kin = forward_kinematics(model, q, v)?;
    Ok(kin.clusters.iter().enumerate().map(|(k, c)| 0.5 * c.v.dot(&(model.cluster_inertia(k) * &c.v))).sum())
}

/// Gravitational potential energy `−Σ_b g·(m_b r_b + E_bᵀ h_b)`, zero at the world origin.
pub fn potential_energy(model: &Model, q: &DVector<f64>) -> Result<f64> {
    let xw = model.body_world_transforms(q)?;
    let g = model.gravity().fixed_rows::<3>(3).into_owned();
    Ok(xw
        .iter()
        .enumerate()
        .map(|(b, x)| {
            let i = model.body_inertia(b);
            -(i.mass * g.dot(&x.trans) + (x.rot * g).dot(&i.h))
        })
        .sum())
}

/// Forward dynamics `v̄̇ = H⁻¹(τ − c − g)` by Cholesky.
pub fn forward_dynamics(model: &Model, q: &DVector<f64>, v: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("torque", tau, model.nv())?;
    let h = mass_matrix(model, q)?;
    let bias = rnea(model, q, v, &DVector::zeros(model.nv()), true)?;
    let chol = h.cholesky().ok_or_else(|| Error::Precondition("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&(tau - bias)))
}
