//! Brute-force references for the test suite.
//!
//! These routines only use the model, `mass_matrix` and world poses, never
//! the recursive Coriolis or Christoffel code they are used to check.

mod generators;
mod suite;

pub use generators::{balanced_binary_tree, random_inertia, random_open_chain, random_state, random_velocity};
pub use suite::{validate_model, ResidualRow, ValidationReport};

use nalgebra::{DMatrix, DVector, Vector6};

use crate::dynamics::mass_matrix;
use crate::error::{Error, Result};
use crate::model::{ConfigState, Model};
use crate::spatial::vee;
use crate::tensor::Tensor3;

pub const DEFAULT_STEP: f64 = 1e-6;

/// A configuration moved along the flow of constant speeds `v̄`.
#[derive(Debug, Clone)]
pub struct FlowPerturbation {
    pub base: ConfigState,
    pub direction: DVector<f64>,
    pub step: f64,
}

impl FlowPerturbation {
    pub fn new(model: &Model, q: &DVector<f64>, direction: &DVector<f64>, step: f64) -> Self {
        let base = ConfigState { q: q.clone(), v: DVector::zeros(model.nv()) };
        Self { base, direction: direction.clone(), step }
    }

    /// `q ⊕ s·h·v̄` through the exponential map.
    pub fn at(&self, model: &Model, s: f64) -> DVector<f64> {
        model.integrate_config(&self.base.q, &self.direction, s * self.step)
    }

    /// Central difference of `f` along the flow.
    pub fn central<F>(&self, model: &Model, mut f: F) -> Result<DMatrix<f64>>
    where
        F: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
    {
        let plus = f(&self.at(model, 1.0))?;
        let minus = f(&self.at(model, -1.0))?;
        Ok((plus - minus) / (2.0 * self.step))
    }
}

/// `Ḣ` along the flow: `(H(q ⊕ h v̄) − H(q ⊖ h v̄)) / 2h`.
pub fn fd_mass_matrix_rate(model: &Model, q: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidConfig(format!("step must be positive, got {h}")));
    }
    FlowPerturbation::new(model, q, v, h).central(model, |qq| mass_matrix(model, qq))
}

/// Richardson extrapolation of two central differences (`h` and `h/2`).
pub fn fd_mass_matrix_rate_richardson(model: &Model, q: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let coarse = fd_mass_matrix_rate(model, q, v, h)?;
    let fine = fd_mass_matrix_rate(model, q, v, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Coordinate Christoffel symbols of the first kind,
/// `Γ_ijk = ½(∂_k H_ij + ∂_j H_ik − ∂_i H_jk)`, from central differences.
pub fn fd_christoffel_coordinates(model: &Model, q: &DVector<f64>, h: f64) -> Result<Tensor3> {
    if !model.uses_coordinates() {
        return Err(Error::Precondition("coordinate Christoffel symbols need coordinate joints only".into()));
    }
    let m = model.nv();
    let mut dh = Vec::with_capacity(m);
    for k in 0..m {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        dh.push((mass_matrix(model, &qp)? - mass_matrix(model, &qm)?) / (2.0 * h));
    }
    Ok(Tensor3::from_fn(m, m, m, |i, j, k| 0.5 * (dh[k][(i, j)] + dh[j][(i, k)] - dh[i][(j, k)])))
}

/// Largest entry of `M + Mᵀ`.
pub fn skew_check(m: &DMatrix<f64>) -> f64 {
    (m + m.transpose()).amax()
}

/// `‖Ḣ − C − Cᵀ‖∞ / (1 + ‖Ḣ‖∞)` using a finite-difference `Ḣ`. Falls back
/// to Richardson extrapolation when the plain estimate lands within a
/// factor ten of `tol`.
pub fn skew_residual(model: &Model, q: &DVector<f64>, v: &DVector<f64>, c: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let eval = |hdot: DMatrix<f64>| (&hdot - c - c.transpose()).amax() / (1.0 + hdot.amax());
    let r = eval(fd_mass_matrix_rate(model, q, v, DEFAULT_STEP)?);
    if r > 0.1 * tol {
        return Ok(r.min(eval(fd_mass_matrix_rate_richardson(model, q, v, 1e-4)?)));
    }
    Ok(r)
}

/// Body twists `[ω; v]` in body coordinates from finite differences of
/// world poses along the flow.
pub fn fd_body_twists(model: &Model, q: &DVector<f64>, v: &DVector<f64>, h: f64) -> Result<Vec<Vector6<f64>>> {
    let flow = FlowPerturbation::new(model, q, v, h);
    let x0 = model.body_world_transforms(q)?;
    let xp = model.body_world_transforms(&flow.at(model, 1.0))?;
    let xm = model.body_world_transforms(&flow.at(model, -1.0))?;
    Ok((0..model.nbodies())
        .map(|b| {
            let e_dot = (xp[b].rot - xm[b].rot) / (2.0 * h);
            let r_dot = (xp[b].trans - xm[b].trans) / (2.0 * h);
            // (ω×) = −Ė Eᵀ; the origin velocity is E ṙ
            let w = vee(&(-(e_dot * x0[b].rot.transpose())));
            let lin = x0[b].rot * r_dot;
            Vector6::new(w.x, w.y, w.z, lin.x, lin.y, lin.z)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled_model;

    #[test]
    fn zero_direction_gives_zero_rate() {
        let m = bundled_model("arm6").unwrap();
        let q = DVector::from_fn(6, |i, _| 0.1 * i as f64);
        assert_eq!(fd_mass_matrix_rate(&m, &q, &DVector::zeros(6), 1e-6).unwrap().amax(), 0.0);
        assert!(fd_mass_matrix_rate(&m, &q, &DVector::zeros(6), 0.0).is_err());
    }

    #[test]
    fn constant_inertia_models_have_zero_rate() {
        for name in ["point_mass", "pendulum"] {
            let m = bundled_model(name).unwrap();
            let q = DVector::from_element(m.nq(), 0.4);
            let v = DVector::from_element(m.nv(), 1.3);
            assert!(fd_mass_matrix_rate(&m, &q, &v, 1e-6).unwrap().amax() < 1e-9, "{name}");
            assert!(fd_christoffel_coordinates(&m, &q, 1e-6).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn pendulum_inertia_about_pivot() {
        let m = bundled_model("pendulum").unwrap();
        let h = mass_matrix(&m, &DVector::from_element(1, 0.7)).unwrap();
        assert!((h[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
    }

    /// Planar arm with unit links: `H_11 = a + 2b cos q₂`, `H_12 = c + b cos q₂`,
    /// `H_22 = c`, so `Γ_112 = Γ_121 = −b sin q₂`, `Γ_122 = −b sin q₂`,
    /// `Γ_211 = b sin q₂` and the rest vanish.
    #[test]
    fn planar_two_link_closed_form() {
        let m = bundled_model("planar2r").unwrap();
        let body = m.body_inertia(1);
        let b = body.h.x; // m₂ · l₁ · c₂ with l₁ = 1
        for q2 in [-1.1, 0.0, 0.4, 2.0] {
            let q = DVector::from_vec(vec![0.3, q2]);
            let g = fd_christoffel_coordinates(&m, &q, 1e-6).unwrap();
            let s = b * f64::sin(q2);
            let expect = |i: usize, j: usize, k: usize| match (i, j, k) {
                (0, 0, 1) | (0, 1, 0) | (0, 1, 1) => -s,
                (1, 0, 0) => s,
                _ => 0.0,
            };
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert!((g.get(i, j, k) - expect(i, j, k)).abs() < 1e-7, "({i},{j},{k}) at q2={q2}");
                        assert!((g.get(i, j, k) - g.get(i, k, j)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_oracle_rejects_quaternion_joints() {
        let m = bundled_model("free_tree").unwrap();
        assert!(fd_christoffel_coordinates(&m, &m.neutral_config(), 1e-6).is_err());
    }

    #[test]
    fn skew_check_basics() {
        assert_eq!(skew_check(&DMatrix::zeros(3, 3)), 0.0);
        let a = DMatrix::from_fn(4, 4, |i, j| (i as f64 * 1.7 - j as f64).sin());
        assert!(skew_check(&(&a - a.transpose())) < 1e-15);
    }
}
