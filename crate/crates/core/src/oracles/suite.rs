//! Cross-checks of every factorization path against the brute-force
//! references, as run by `validate`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fd_christoffel_coordinates, random_state, random_velocity, skew_residual, DEFAULT_STEP};
use crate::adaptive::{adaptive_terms, regressor_bundle};
use crate::christoffel::{christoffel_fast, christoffel_sweep, structure_constants};
use crate::dynamics::{
    coriolis_star, coriolis_transpose_times_v, coriolis_via_derivative, gravity_torque, mass_matrix, maximal_factorization, project_factorization, rnea,
    spanning_tree_factorization, stacked_jacobians,
};
use crate::error::Result;
use crate::model::Model;
use crate::tensor::Transpose;

/// Worst residual of one check over all sampled states.
#[derive(Debug, Clone)]
pub struct ResidualRow {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
}

impl ResidualRow {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub model: String,
    pub samples: usize,
    pub rows: Vec<ResidualRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(ResidualRow::passed)
    }

    /// `check,residual,tolerance,status`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,residual,tolerance,status\n");
        for r in &self.rows {
            out += &format!("{},{:.3e},{:.1e},{}\n", r.name, r.residual, r.tolerance, if r.passed() { "pass" } else { "FAIL" });
        }
        out
    }
}

fn rel_mat(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).amax() / (1.0 + reference.amax())
}

fn rel_vec(a: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (a - reference).amax() / (1.0 + reference.amax())
}

struct Collector(Vec<ResidualRow>);

impl Collector {
    fn record(&mut self, name: &'static str, tolerance: f64, residual: f64) {
        match self.0.iter_mut().find(|r| r.name == name) {
            // NaN must not be swallowed by max
            Some(r) => r.residual = if residual.is_nan() || r.residual.is_nan() { f64::NAN } else { r.residual.max(residual) },
            None => self.0.push(ResidualRow { name, residual, tolerance }),
        }
    }
}

/// Runs every applicable check on `samples` seeded random states.
pub fn validate_model(model: &Model, samples: usize, seed: u64) -> Result<ValidationReport> {
    let mut rows = Collector(Vec::new());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = model.uses_coordinates();
    let open = model.is_open_chain();
    for k in 0..samples {
        let st = random_state(model, seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
        let (q, v) = (&st.q, &st.v);
        let star = coriolis_star(model, q, v)?;
        let h = mass_matrix(model, q)?;
        rows.record("mass_matrix_recursions_agree", 1e-12, rel_mat(&star.h, &h));

        let (a, a_dot) = stacked_jacobians(model, q, v)?;
        let (hm, cm) = maximal_factorization(model, q, v)?;
        let (hp, cp) = project_factorization(&cm, &hm, &a, &a_dot)?;
        rows.record("mass_matrix_vs_projected_bodies", 1e-11, rel_mat(&hp, &h));
        rows.record("projection_of_body_factorizations", 1e-11, rel_mat(&cp, &star.c));
        if !open {
            let span = spanning_tree_factorization(model, q, v)?;
            rows.record("projection_of_spanning_tree", 1e-11, rel_mat(&span.c, &star.c));
        }

        rows.record("skew_property_fd", 1e-4, skew_residual(model, q, v, &star.c, 1e-4)?);
        let bias = rnea(model, q, v, &DVector::zeros(model.nv()), false)?;
        rows.record("coriolis_times_v_vs_rnea", 1e-10, rel_vec(&(&star.c * v), &bias));
        rows.record("coriolis_transpose_times_v", 1e-10, rel_vec(&coriolis_transpose_times_v(model, q, v)?, &(star.c.transpose() * v)));

        let fast = christoffel_fast(model, q)?;
        let sweep = christoffel_sweep(model, q)?;
        rows.record("christoffel_fast_vs_sweep", 1e-11, fast.max_abs_diff(&sweep) / (1.0 + sweep.max_abs()));
        rows.record("christoffel_contraction", 1e-11, rel_mat(&fast.contract_columns(v.as_slice()), &star.c));
        if coords {
            let fd = fd_christoffel_coordinates(model, q, DEFAULT_STEP)?;
            rows.record("christoffel_vs_fd_coordinates", 1e-5, fast.max_abs_diff(&fd));
        }
        if open {
            let s = structure_constants(model, q)?;
            let anti = &fast + &(-fast.transpose(Transpose::T23));
            rows.record("antisymmetric_part_structure_constants", 1e-10, anti.max_abs_diff(&s) / (1.0 + s.max_abs()));
            let der = coriolis_via_derivative(model, q, v)?;
            rows.record("derivative_method", 1e-5, rel_mat(&der.c, &star.c));
        }

        let vr = random_velocity(model, &mut rng);
        let vr_dot = random_velocity(model, &mut rng);
        let theta = model.theta();
        let rb = regressor_bundle(model, q, v, &vr, &vr_dot)?;
        let g = gravity_torque(model, q)?;
        let full = &h * &vr_dot + &star.c * &vr + &g;
        let t = DVector::from_element(1, 0.5 * v.dot(&(&h * v)));
        let pw = DVector::from_element(1, v.dot(&g));
        let worst = [
            rel_vec(&(&rb.y * &theta), &full),
            rel_vec(&(&rb.y_p * &theta), &(&h * v)),
            rel_vec(&(&rb.y_g * &theta), &g),
            rel_vec(&(&rb.y_c * &theta), &(star.c.transpose() * v)),
            rel_vec(&(&rb.y_t * &theta), &t),
            rel_vec(&(&rb.y_vdot * &theta), &pw),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        rows.record("regressor_identities", 1e-10, worst);
        let kd = DMatrix::identity(model.nv(), model.nv());
        let (tau, yts) = adaptive_terms(model, q, v, &vr, &vr_dot, &theta, &kd)?;
        let s = v - &vr;
        let dense_tau = &rb.y * &theta - &s;
        rows.record("adaptive_recursion_vs_dense", 1e-11, rel_vec(&tau, &dense_tau).max(rel_vec(&yts, &rb.y.tr_mul(&s))));
    }
    Ok(ValidationReport { model: model.name.clone(), samples, rows: rows.0 })
}
