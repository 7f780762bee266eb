//! Coriolis factorizations.

use nalgebra::{DMatrix, DVector};

use super::{block_range, forward_kinematics, mass_matrix, rnea, KinematicsCache};
use crate::error::{Error, Result};
use crate::model::{ClusterJoint, Model};
use crate::spatial::{coriolis_star_matrix, cross_motion, stacked_coriolis_b, stacked_cross_motion, MotionVector};

/// How a factorization was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Recursive cluster sweep.
    Recursive,
    /// Projection of a factorization in other coordinates.
    Projected,
    /// Velocity derivative of the bias plus a structure-constant correction.
    Derivative,
}

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub method: Method,
}

/// Torsion-free Coriolis matrix `C̄*` and mass matrix `H̄` in one forward
/// and one backward sweep.
pub fn coriolis_star(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<FactorizationResult> {
    let kin = forward_kinematics(model, q, v)?;
    Ok(coriolis_from_kinematics(model, &kin))
}

pub(crate) fn coriolis_from_kinematics(model: &Model, kin: &KinematicsCache) -> FactorizationResult {
    let nc = model.nclusters();
    let m = model.nv();
    let mut ic: Vec<DMatrix<f64>> = (0..nc).map(|k| model.cluster_inertia(k)).collect();
    let mut bc: Vec<DMatrix<f64>> = (0..nc).map(|k| stacked_coriolis_b(&ic[k], &kin.clusters[k].v)).collect();
    let mut h = DMatrix::zeros(m, m);
    let mut c = DMatrix::zeros(m, m);
    for j in (0..nc).rev() {
        let kj = &kin.clusters[j];
        let rj = block_range(model, j);
        let mut f1 = &ic[j] * &kj.phi_dot + &bc[j] * &kj.phi;
        let mut f2 = &ic[j] * &kj.phi;
        let mut f3 = bc[j].tr_mul(&kj.phi);
        c.view_mut((rj.start, rj.start), (rj.len(), rj.len())).copy_from(&kj.phi.tr_mul(&f1));
        h.view_mut((rj.start, rj.start), (rj.len(), rj.len())).copy_from(&kj.phi.tr_mul(&f2));
        let mut i = j;
        while let Some(p) = model.clusters()[i].parent {
            let x = &kin.clusters[i].x_parent;
            f1 = x.tr_mul(&f1);
            f2 = x.tr_mul(&f2);
            f3 = x.tr_mul(&f3);
            i = p;
            let ki = &kin.clusters[i];
            let ri = block_range(model, i);
            c.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&ki.phi.tr_mul(&f1));
            let cji = ki.phi_dot.tr_mul(&f2) + ki.phi.tr_mul(&f3);
            c.view_mut((rj.start, ri.start), (rj.len(), ri.len())).copy_from(&cji.transpose());
            let hij = ki.phi.tr_mul(&f2);
            h.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&hij);
            h.view_mut((rj.start, ri.start), (rj.len(), ri.len())).copy_from(&hij.transpose());
        }
        if let Some(p) = model.clusters()[j].parent {
            let x = &kj.x_parent;
            let di = x.tr_mul(&ic[j]) * x;
            let db = x.tr_mul(&bc[j]) * x;
            ic[p] += di;
            bc[p] += db;
        }
    }
    FactorizationResult { h, c, method: Method::Recursive }
}

/// `C̄*ᵀ v̄` without forming `C̄*`: `Φ̇_iᵀ Σ_{j⪰i} Xᵀ 𝗜_j 𝗏_j`.
pub fn coriolis_transpose_times_v(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let kin = forward_kinematics(model, q, v)?;
    let mut hc: Vec<DVector<f64>> = kin.clusters.iter().enumerate().map(|(k, ck)| model.cluster_inertia(k) * &ck.v).collect();
    let mut out = DVector::zeros(model.nv());
    for k in (0..model.nclusters()).rev() {
        let r = block_range(model, k);
        out.rows_mut(r.start, r.len()).copy_from(&kin.clusters[k].phi_dot.tr_mul(&hc[k]));
        if let Some(p) = model.clusters()[k].parent {
            let up = kin.clusters[k].x_parent.tr_mul(&hc[k]);
            hc[p] += up;
        }
    }
    Ok(out)
}

/// `(H̄, C̄) = (AᵀHA, AᵀCA + AᵀHȦ)`.
pub fn project_factorization(c: &DMatrix<f64>, h: &DMatrix<f64>, a: &DMatrix<f64>, a_dot: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if c.shape() != (n, n) || h.shape() != (n, n) || a_dot.shape() != a.shape() {
        return Err(Error::Shape(format!("C {:?}, H {:?}, A {:?}, Ȧ {:?}", c.shape(), h.shape(), a.shape(), a_dot.shape())));
    }
    let ha = h * a;
    Ok((a.tr_mul(&ha), a.tr_mul(&(c * a)) + a.tr_mul(&(h * a_dot))))
}

/// Stacked body Jacobians `A` (body twists `= A v̄`) and their rates `Ȧ`,
/// both in body coordinates, rows ordered by body index.
pub fn stacked_jacobians(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let kin = forward_kinematics(model, q, v)?;
    let m = model.nv();
    let mut blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::with_capacity(model.nclusters());
    for (k, ck) in kin.clusters.iter().enumerate() {
        let rk = block_range(model, k);
        let rows = ck.v.len();
        let (mut a, mut ad) = match model.clusters()[k].parent {
            Some(p) => {
                let (ap, adp) = &blocks[p];
                let vp = &kin.clusters[p].v;
                // d/dt ᵏX_p = ᵏX_p(𝗏_p×) − (𝗏_k×)ᵏX_p
                let xdot = &ck.x_parent * stacked_cross_motion(vp) - stacked_cross_motion(&ck.v) * &ck.x_parent;
                (&ck.x_parent * ap, &ck.x_parent * adp + xdot * ap)
            }
            None => (DMatrix::zeros(rows, m), DMatrix::zeros(rows, m)),
        };
        a.view_mut((0, rk.start), (rows, rk.len())).copy_from(&ck.phi);
        ad.view_mut((0, rk.start), (rows, rk.len())).copy_from(&ck.ring);
        blocks.push((a, ad));
    }
    let n = model.n_maximal();
    let mut a = DMatrix::zeros(n, m);
    let mut ad = DMatrix::zeros(n, m);
    for (k, c) in model.clusters().iter().enumerate() {
        for (l, &b) in c.bodies.iter().enumerate() {
            a.view_mut((6 * b, 0), (6, m)).copy_from(&blocks[k].0.view((6 * l, 0), (6, m)));
            ad.view_mut((6 * b, 0), (6, m)).copy_from(&blocks[k].1.view((6 * l, 0), (6, m)));
        }
    }
    Ok((a, ad))
}

/// Maximal-coordinate factorization: block-diagonal body inertias and
/// body-level Christoffel-consistent factorizations, rows ordered by body.
pub fn maximal_factorization(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let kin = forward_kinematics(model, q, v)?;
    let n = model.n_maximal();
    let mut h = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    for b in 0..model.nbodies() {
        let i = model.body_inertia(b).to_matrix();
        let vb = MotionVector::from_column_slice(kin.body_velocity(model, b).as_slice());
        h.view_mut((6 * b, 6 * b), (6, 6)).copy_from(&i);
        c.view_mut((6 * b, 6 * b), (6, 6)).copy_from(&coriolis_star_matrix(&i, &vb));
    }
    Ok((h, c))
}

/// Factorization of a clustered model obtained by running the recursion on
/// its spanning tree and projecting through the transmission map.
pub fn spanning_tree_factorization(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<FactorizationResult> {
    let st = model.spanning_tree()?;
    let qs = model.spanning_config(&st.model, q);
    let vs = &st.velocity_map * v;
    let span = coriolis_star(&st.model, &qs, &vs)?;
    let zero = DMatrix::zeros(st.velocity_map.nrows(), st.velocity_map.ncols());
    let (h, c) = project_factorization(&span.c, &span.h, &st.velocity_map, &zero)?;
    Ok(FactorizationResult { h, c, method: Method::Projected })
}

/// Dual basis `Ψ` with `ΨᵀΦ = 1`, from an orthogonal completion of `Φ`.
fn dual_basis(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, d) = phi.shape();
    let qr = phi.clone().qr();
    // full Q: complete the thin factor with the Householder reflections applied to unit vectors
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, d)).copy_from(phi);
    let q_full = {
        let mut e = DMatrix::identity(n, n);
        qr.q_tr_mul(&mut e);
        e.transpose()
    };
    full.view_mut((0, d), (n, n - d)).copy_from(&q_full.view((0, d), (n, n - d)));
    let inv = full.try_inverse().ok_or_else(|| Error::Precondition("motion subspace is rank deficient".into()))?;
    Ok(inv.transpose().columns(0, d).into_owned())
}

/// `C̄* = ½[∂(C̄v̄)/∂v̄ + H̄ K]` with the velocity Jacobian of the bias by
/// central differences and `K = blockdiag(Ψ_iᵀ((Φ_i v̄_i)×)Φ_i)`.
pub fn coriolis_via_derivative(model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<FactorizationResult> {
    if !model.is_open_chain() {
        return Err(Error::Precondition("derivative construction needs a model without clusters".into()));
    }
    let kin = forward_kinematics(model, q, v)?;
    if kin.clusters.iter().any(|c| c.ring.amax() != 0.0) {
        return Err(Error::Precondition("derivative construction needs constant motion subspaces".into()));
    }
    let m = model.nv();
    let zero = DVector::zeros(m);
    // the bias is quadratic in v̄, so central differences are exact up to rounding
    let step = 1e-3 * (1.0 + v.amax());
    let mut jac = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[j] += step;
        vm[j] -= step;
        let d = (rnea(model, q, &vp, &zero, false)? - rnea(model, q, &vm, &zero, false)?) / (2.0 * step);
        jac.set_column(j, &d);
    }
    let mut kmat = DMatrix::zeros(m, m);
    for (k, ck) in kin.clusters.iter().enumerate() {
        let ClusterJoint::Single(_) = model.clusters()[k].joint else { unreachable!() };
        let r = block_range(model, k);
        let vk = DVector::from_column_slice(model.cluster_v(k, v.as_slice()));
        let rel = MotionVector::from_column_slice((&ck.phi * vk).as_slice());
        let psi = dual_basis(&ck.phi)?;
        let blk = psi.tr_mul(&(DMatrix::from_column_slice(6, 6, cross_motion(&rel).as_slice()) * &ck.phi));
        kmat.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&blk);
    }
    let h = mass_matrix(model, q)?;
    let c = (jac + &h * kmat) * 0.5;
    Ok(FactorizationResult { h, c, method: Method::Derivative })
}

/// Skew perturbation `S(v̄)_{ik} = Σ β ε_{ijk} v̄ʲ` from weighted index
/// triples, with `ε` the alternating 3-form on each triple. `S` is skew and
/// `S v̄ = 0`, so adding it to a factorization keeps both the skew property
/// and `C v̄`.
pub fn skew_perturbation(v: &DVector<f64>, triples: &[([usize; 3], f64)]) -> Result<DMatrix<f64>> {
    let m = v.len();
    let mut s = DMatrix::zeros(m, m);
    for &([a, b, c], beta) in triples {
        if a >= m || b >= m || c >= m || a == b || b == c || a == c {
            return Err(Error::Shape(format!("triple ({a}, {b}, {c}) is not three distinct indices below {m}")));
        }
        // even permutations of (a, b, c) carry +1
        for (i, j, k, sign) in [(a, b, c, 1.0), (b, c, a, 1.0), (c, a, b, 1.0), (a, c, b, -1.0), (c, b, a, -1.0), (b, a, c, -1.0)] {
            s[(i, k)] += sign * beta * v[j];
        }
    }
    Ok(s)
}
