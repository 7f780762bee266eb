//! Generalized Christoffel symbols `Γ̄*_{ijk}` stored with `i` on rows,
//! `j` on columns and `k` on pages, so that `C̄*_{ik} = Σ_j Γ̄*_{ijk} v̄ʲ`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{coriolis_star, forward_kinematics, mass_matrix};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::spatial::{cross_motion, stacked_coriolis_b, MotionVector};
use crate::tensor::{Tensor3, Transpose};

/// `𝗕(𝗜, V)`: page `c` holds `𝗕(𝗜, V e_c)`.
pub fn coriolis_b_tensor(inertia: &DMatrix<f64>, v: &DMatrix<f64>) -> Tensor3 {
    let pages: Vec<DMatrix<f64>> = v.column_iter().map(|c| stacked_coriolis_b(inertia, &c.into_owned())).collect();
    Tensor3::from_pages(&pages).expect("pages share one shape")
}

/// One unit-velocity evaluation of the Coriolis matrix per speed:
/// column `j` of the tensor is `C̄*(q, e_j)`.
pub fn christoffel_sweep(model: &Model, q: &DVector<f64>) -> Result<Tensor3> {
    let m = model.nv();
    let mut gamma = Tensor3::zeros(m, m, m);
    let mut e = DVector::zeros(m);
    for j in 0..m {
        e[j] = 1.0;
        let c = coriolis_star(model, q, &e)?.c;
        for k in 0..m {
            for i in 0..m {
                gamma.set(i, j, k, c[(i, k)]);
            }
        }
        e[j] = 0.0;
    }
    Ok(gamma)
}

/// Tensor recursion over the cluster tree, `O(N d²)` for a fixed cluster
/// library.
pub fn christoffel_fast(model: &Model, q: &DVector<f64>) -> Result<Tensor3> {
    let nc = model.nclusters();
    let m = model.nv();
    let kin = forward_kinematics(model, q, &DVector::zeros(m))?;
    let mut ic: Vec<DMatrix<f64>> = (0..nc).map(|k| model.cluster_inertia(k)).collect();
    let ring_d: Vec<Tensor3> =
        model.clusters().iter().enumerate().map(|(k, c)| c.joint.ring_derivative(&c.links, model.cluster_q(k, q.as_slice()))).collect::<Result<_>>()?;
    let off: Vec<usize> = model.clusters().iter().map(|c| c.v_offset).collect();
    let phi = |k: usize| &kin.clusters[k].phi;
    let xp = |k: usize| &kin.clusters[k].x_parent;
    let parent = |k: usize| model.clusters()[k].parent;

    let mut gamma = Tensor3::zeros(m, m, m);
    for k in (0..nc).rev() {
        let mut b = coriolis_b_tensor(&ic[k], phi(k));
        let mut f3 = Tensor3::left_mul(&ic[k], &ring_d[k])?;
        let mut f4 = &ic[k] * phi(k);
        let mut j = k;
        loop {
            let mut f1 = Tensor3::right_mul(&b, phi(j))?;
            let mut f2 = Tensor3::right_mul(&b.transpose(Transpose::T12), phi(j))?;
            let mut i = j;
            loop {
                let a1 = Tensor3::left_mul_transpose(phi(i), &f1)?;
                let a2 = Tensor3::left_mul_transpose(phi(i), &f2)?.transpose(Transpose::T12);
                let a3 = -a2.transpose(Transpose::T13);
                gamma.set_block(off[i], off[j], off[k], &a1);
                gamma.set_block(off[i], off[k], off[j], &a1.transpose(Transpose::T23));
                gamma.set_block(off[j], off[i], off[k], &a2);
                gamma.set_block(off[j], off[k], off[i], &a2.transpose(Transpose::T23));
                gamma.set_block(off[k], off[i], off[j], &a3);
                gamma.set_block(off[k], off[j], off[i], &a3.transpose(Transpose::T23));
                if i == j {
                    let corr = Tensor3::left_mul_transpose(&f4, &ring_d[i])?;
                    gamma.set_block(off[k], off[i], off[i], &(&a3 + &corr));
                }
                if j == k {
                    let corr = Tensor3::left_mul_transpose(phi(i), &f3)?;
                    gamma.set_block(off[i], off[j], off[j], &(&a1 + &corr));
                }
                let Some(p) = parent(i) else { break };
                if j == k {
                    f3 = Tensor3::left_mul_transpose(xp(i), &f3)?;
                }
                f1 = Tensor3::left_mul_transpose(xp(i), &f1)?;
                f2 = Tensor3::left_mul_transpose(xp(i), &f2)?;
                i = p;
            }
            let Some(p) = parent(j) else { break };
            b = Tensor3::right_mul(&Tensor3::left_mul_transpose(xp(j), &b)?, xp(j))?;
            f4 = xp(j).tr_mul(&f4);
            j = p;
        }
        if let Some(p) = parent(k) {
            let moved = xp(k).tr_mul(&ic[k]) * xp(k);
            ic[p] += moved;
        }
    }
    Ok(gamma)
}

/// Structure constants lowered by the metric, `s_ijk = H̄_iℓ sˡ_jk`, where
/// `[X_j, X_k] = sˡ_jk X_ℓ` for the basis fields of the generalized speeds.
/// Only speeds of the same joint can fail to commute; for a joint with
/// constant subspace `Φ` and dual basis `Ψ`, `s_jk = Ψᵀ((Φe_j)×(Φe_k))`.
pub fn structure_constants(model: &Model, q: &DVector<f64>) -> Result<Tensor3> {
    if !model.is_open_chain() {
        return Err(Error::Precondition("structure constants are only available without clusters".into()));
    }
    let m = model.nv();
    let h = mass_matrix(model, q)?;
    let mut lower = Tensor3::zeros(m, m, m);
    for c in model.clusters() {
        let crate::model::ClusterJoint::Single(joint) = &c.joint else { unreachable!() };
        let phi = joint.motion_subspace();
        let d = phi.ncols();
        if d < 2 {
            continue;
        }
        // left inverse; brackets of a constant subspace stay inside it
        let left = (phi.tr_mul(&phi)).try_inverse().ok_or_else(|| Error::Precondition("rank-deficient motion subspace".into()))? * phi.transpose();
        for a in 0..d {
            let pa = MotionVector::from_column_slice(phi.column(a).as_slice());
            for b in 0..d {
                let pb = MotionVector::from_column_slice(phi.column(b).as_slice());
                let bracket = DVector::from_column_slice((cross_motion(&pa) * pb).as_slice());
                let coeffs = &left * bracket;
                for l in 0..d {
                    lower.set(c.v_offset + l, c.v_offset + a, c.v_offset + b, coeffs[l]);
                }
            }
        }
    }
    // s_ijk = Σ_ℓ H_iℓ sˡ_jk
    Tensor3::left_mul(&h, &lower)
}

/// Residuals of the two tensor identities used by the recursion:
/// `𝗕(𝗜,V)ᵀ¹² W = (−𝗕(𝗜,W)ᵀ¹² V)ᵀ²³` and
/// `𝗕(𝗜,V) W = (𝗕(𝗜,W) V + 𝗜 (W×) V)ᵀ²³`.
#[derive(Debug, Clone, Copy)]
pub struct BTensorChecks {
    pub transpose_identity: f64,
    pub product_identity: f64,
}

pub fn b_tensor_identities(inertia: &DMatrix<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<BTensorChecks> {
    let n = inertia.nrows();
    if inertia.ncols() != n || v.nrows() != n || w.nrows() != n || !n.is_multiple_of(6) {
        return Err(Error::Shape(format!("I {:?}, V {:?}, W {:?}", inertia.shape(), v.shape(), w.shape())));
    }
    let bv = coriolis_b_tensor(inertia, v);
    let bw = coriolis_b_tensor(inertia, w);
    let lhs1 = Tensor3::right_mul(&bv.transpose(Transpose::T12), w)?;
    let rhs1 = (-Tensor3::right_mul(&bw.transpose(Transpose::T12), v)?).transpose(Transpose::T23);
    let lhs2 = Tensor3::right_mul(&bv, w)?;
    let iwv = Tensor3::right_mul(&Tensor3::left_mul(inertia, &Tensor3::cross_pages(w))?, v)?;
    let rhs2 = (&Tensor3::right_mul(&bw, v)? + &iwv).transpose(Transpose::T23);
    Ok(BTensorChecks { transpose_identity: lhs1.max_abs_diff(&rhs1), product_identity: lhs2.max_abs_diff(&rhs2) })
}
