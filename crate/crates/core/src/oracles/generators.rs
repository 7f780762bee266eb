//! Seeded fixtures. The same seed always produces bit-identical output.

use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Body, ConfigState, JointModel, Model, Offset, DEFAULT_GRAVITY};
use crate::spatial::{InertialParams, SpatialInertia};

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A physically valid body: positive mass and a positive definite
/// second moment about the centre of mass.
pub fn random_inertia(rng: &mut ChaCha8Rng) -> InertialParams {
    let mass = rng.random_range(0.5..2.0);
    let c = Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
    let a = Matrix3::from_fn(|_, _| rng.random_range(-0.2..0.2));
    let sigma = (a * a.transpose() + Matrix3::identity() * 0.01) * mass;
    let i_com = Matrix3::identity() * sigma.trace() - sigma;
    SpatialInertia::from_mass_com_inertia(mass, &c, &i_com).to_params()
}

fn random_offset(rng: &mut ChaCha8Rng) -> Offset {
    Offset { xyz: std::array::from_fn(|_| rng.random_range(-0.5..0.5)), rpy: std::array::from_fn(|_| rng.random_range(-1.0..1.0)) }
}

fn random_joint(rng: &mut ChaCha8Rng) -> JointModel {
    let axis = unit_vector(rng);
    let j = match rng.random_range(0..10) {
        0..=6 => JointModel::revolute(axis),
        7 | 8 => JointModel::prismatic(axis),
        _ => JointModel::helical(axis, rng.random_range(-0.2..0.2)),
    };
    j.with_offset(random_offset(rng))
}

fn build(name: String, parents: impl Iterator<Item = Option<usize>>, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bodies = parents
        .enumerate()
        .map(|(i, parent)| Body { name: format!("b{}", i + 1), parent, joint: random_joint(&mut rng), inertia: random_inertia(&mut rng) })
        .collect();
    Model::new(name, bodies, Vec::new(), Vector6::from_row_slice(&DEFAULT_GRAVITY))
}

/// Serial chain of `n` one-DoF joints with random axes, offsets and inertias.
pub fn random_open_chain(n: usize, seed: u64) -> Result<Model> {
    build(format!("chain{n}"), (0..n).map(|i| i.checked_sub(1)), seed)
}

/// Balanced binary tree: body `i` (1-based) hangs from body `⌊i/2⌋`.
pub fn balanced_binary_tree(n: usize, seed: u64) -> Result<Model> {
    build(format!("tree{n}"), (1..=n).map(|i| (i / 2).checked_sub(1)), seed)
}

pub fn random_velocity(model: &Model, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(model.nv(), |_, _| rng.random_range(-1.0..1.0))
}

/// Random configuration (reached from neutral along the exponential map,
/// so quaternions stay unit) and random speeds.
pub fn random_state(model: &Model, seed: u64) -> ConfigState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let push = DVector::from_fn(model.nv(), |_, _| rng.random_range(-2.0..2.0));
    let q = model.integrate_config(&model.neutral_config(), &push, 1.0);
    let v = random_velocity(model, &mut rng);
    ConfigState { q, v }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = random_open_chain(7, 3).unwrap();
        let b = random_open_chain(7, 3).unwrap();
        assert_eq!(a, b);
        let sa = random_state(&a, 11);
        let sb = random_state(&b, 11);
        assert_eq!(sa.q.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), sb.q.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_ne!(random_open_chain(7, 4).unwrap(), a);
    }

    #[test]
    fn generated_models_validate_and_are_physical() {
        let t = balanced_binary_tree(15, 1).unwrap();
        assert_eq!(t.parent_array()[..7], [0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(t.depth(), 4);
        for b in 0..t.nbodies() {
            assert!(t.body_inertia(b).is_physically_consistent(0.0));
        }
        let json = crate::model::model_to_json(&t).unwrap();
        assert_eq!(crate::model::model_from_json(&json).unwrap(), t);
    }
}
