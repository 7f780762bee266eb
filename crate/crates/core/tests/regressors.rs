use coriolis_core::adaptive::{direct_adaptive_step, filtered_energy_residual, filtered_momentum_residual, regressor_bundle, AdaptiveState, Trajectory};
use coriolis_core::dynamics::{coriolis_star, coriolis_transpose_times_v, forward_dynamics, gravity_torque, mass_matrix};
use coriolis_core::model::{bundled_model, bundled_names, Model};
use coriolis_core::oracles::{random_inertia, random_state, random_velocity};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn scrambled(model: &Model, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(10 * model.nbodies(), (0..model.nbodies()).flat_map(|_| random_inertia(&mut rng).0))
}

#[test]
fn six_identities_on_every_bundled_model() {
    for name in bundled_names() {
        let m = bundled_model(name).unwrap();
        let theta = m.theta();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..10 {
            let s = random_state(&m, seed);
            let vr = random_velocity(&m, &mut rng);
            let vrd = random_velocity(&m, &mut rng);
            let rb = regressor_bundle(&m, &s.q, &s.v, &vr, &vrd).unwrap();
            let h = mass_matrix(&m, &s.q).unwrap();
            let c = coriolis_star(&m, &s.q, &s.v).unwrap().c;
            let g = gravity_torque(&m, &s.q).unwrap();
            let full = &h * &vrd + &c * &vr + &g;
            assert!(rel(&(&rb.y * &theta), &full) < 1e-10, "{name} Y");
            assert!(rel(&(&rb.y_p * &theta), &(&h * &s.v)) < 1e-10, "{name} Y_p");
            assert!(rel(&(&rb.y_g * &theta), &g) < 1e-10, "{name} Y_g");
            let ctv = coriolis_transpose_times_v(&m, &s.q, &s.v).unwrap();
            assert!(rel(&(&rb.y_c * &theta), &(c.transpose() * &s.v)) < 1e-10, "{name} Y_c");
            assert!(rel(&ctv, &(c.transpose() * &s.v)) < 1e-10);
            let t = 0.5 * s.v.dot(&(&h * &s.v));
            assert!(((&rb.y_t * &theta)[0] - t).abs() < 1e-10 * (1.0 + t.abs()), "{name} Y_T");
            let p = s.v.dot(&g);
            assert!(((&rb.y_vdot * &theta)[0] - p).abs() < 1e-10 * (1.0 + p.abs()), "{name} Y_V");
        }
    }
}

#[test]
fn identities_hold_for_arbitrary_parameters() {
    // Y does not depend on θ, so it must reproduce the dynamics of any model
    let base = bundled_model("free_tree").unwrap();
    let theta = scrambled(&base, 3);
    let m = base.with_theta(&theta).unwrap();
    let s = random_state(&m, 8);
    let rb = regressor_bundle(&base, &s.q, &s.v, &s.v, &s.v).unwrap();
    let h = mass_matrix(&m, &s.q).unwrap();
    let c = coriolis_star(&m, &s.q, &s.v).unwrap().c;
    let expected = &h * &s.v + &c * &s.v + gravity_torque(&m, &s.q).unwrap();
    assert!(rel(&(&rb.y * &theta), &expected) < 1e-10);
}

#[test]
fn regressor_is_block_upper_triangular_over_the_tree() {
    let m = bundled_model("tree4").unwrap();
    let s = random_state(&m, 2);
    let rb = regressor_bundle(&m, &s.q, &s.v, &s.v, &s.v).unwrap();
    for (k, ck) in m.clusters().iter().enumerate() {
        for (j, cj) in m.clusters().iter().enumerate() {
            let related = k == j || m.is_ancestor(k, j);
            for &b in &cj.bodies {
                let blk = rb.y.view((ck.v_offset, 10 * b), (ck.nv(), 10));
                if !related {
                    assert_eq!(blk.amax(), 0.0, "cluster {k} body {b}");
                }
            }
        }
    }
}

#[test]
fn recursive_step_equals_dense_evaluation() {
    for name in ["arm6", "free_tree", "geared_pair", "belt_two_link"] {
        let m = bundled_model(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta_hat = scrambled(&m, 9);
        let a = DMatrix::from_fn(m.nv(), m.nv(), |i, j| ((i * 7 + j * 3) as f64).sin());
        let kd = &a * a.transpose() + DMatrix::identity(m.nv(), m.nv());
        let st = AdaptiveState::new(&m, theta_hat.clone(), kd.clone(), 2.0).unwrap();
        for seed in 0..5 {
            let s = random_state(&m, seed);
            let vr = random_velocity(&m, &mut rng);
            let vrd = random_velocity(&m, &mut rng);
            let (tau, yts) = direct_adaptive_step(&m, &s.q, &s.v, &vr, &vrd, &st).unwrap();
            let y = regressor_bundle(&m, &s.q, &s.v, &vr, &vrd).unwrap().y;
            let sv = &s.v - &vr;
            let tau_dense = &y * &theta_hat - &kd * &sv;
            assert!((&tau - &tau_dense).amax() < 1e-11 * (1.0 + tau.amax()), "{name} τ");
            let yts_dense = y.transpose() * &sv;
            assert!((&yts - &yts_dense).amax() < 1e-11 * (1.0 + yts.amax()), "{name} Yᵀs");
        }
    }
}

fn rollout(m: &Model, steps: usize, dt: f64) -> Trajectory {
    let mut s = random_state(m, 4);
    let mut traj = Trajectory { t: vec![], q: vec![], v: vec![], tau: vec![] };
    for n in 0..=steps {
        let t = n as f64 * dt;
        let tau = DVector::from_fn(m.nv(), |i, _| (t * (1.0 + i as f64)).sin());
        traj.t.push(t);
        traj.q.push(s.q.clone());
        traj.v.push(s.v.clone());
        traj.tau.push(tau.clone());
        if n == steps {
            break;
        }
        // RK4 on (q, v) with the torque held piecewise smooth
        let f = |q: &DVector<f64>, v: &DVector<f64>, t: f64| {
            let tau = DVector::from_fn(m.nv(), |i, _| (t * (1.0 + i as f64)).sin());
            forward_dynamics(m, q, v, &tau).unwrap()
        };
        let k1 = (s.v.clone(), f(&s.q, &s.v, t));
        let q2 = m.integrate_config(&s.q, &k1.0, 0.5 * dt);
        let v2 = &s.v + &k1.1 * (0.5 * dt);
        let k2 = (v2.clone(), f(&q2, &v2, t + 0.5 * dt));
        let q3 = m.integrate_config(&s.q, &k2.0, 0.5 * dt);
        let v3 = &s.v + &k2.1 * (0.5 * dt);
        let k3 = (v3.clone(), f(&q3, &v3, t + 0.5 * dt));
        let q4 = m.integrate_config(&s.q, &k3.0, dt);
        let v4 = &s.v + &k3.1 * dt;
        let k4 = (v4.clone(), f(&q4, &v4, t + dt));
        let vbar = (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) / 6.0;
        s.q = m.integrate_config(&s.q, &vbar, dt);
        s.v = &s.v + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (dt / 6.0);
    }
    traj
}

fn worst(r: &[DVector<f64>]) -> f64 {
    r.iter().map(|x| x.amax()).fold(0.0, f64::max)
}

#[test]
fn filtered_residuals_vanish_on_true_parameters() {
    for name in ["planar2r", "arm6"] {
        let m = bundled_model(name).unwrap();
        let theta = m.theta();
        let coarse = rollout(&m, 1000, 1e-3);
        let fine = rollout(&m, 2000, 5e-4);
        // λ·max|Hv| sets the size of every filtered term
        let scale = 10.0 * coarse.q.iter().zip(&coarse.v).map(|(q, v)| (mass_matrix(&m, q).unwrap() * v).amax()).fold(1.0, f64::max);
        for energy in [false, true] {
            let run = |traj: &Trajectory, th: &DVector<f64>| {
                let r = if energy { filtered_energy_residual(&m, traj, th, 10.0) } else { filtered_momentum_residual(&m, traj, th, 10.0) };
                worst(&r.unwrap().residual)
            };
            let (e1, e2) = (run(&coarse, &theta), run(&fine, &theta));
            let scale = if energy { scale * coarse.v.iter().map(|v| v.amax()).fold(1.0, f64::max) } else { scale };
            assert!(e1 < 1e-4 * scale, "{name} energy={energy}: {e1} vs scale {scale}");
            // trapezoidal filtering is second order in the sample spacing
            assert!(e1 / e2 > 3.5, "{name} energy={energy}: {e1} -> {e2}");
            let off = run(&coarse, &(&theta * 1.3));
            assert!(off > 100.0 * e1, "{name} energy={energy}: {off} vs {e1}");
        }
    }
}

#[test]
fn streaming_filter_matches_batch() {
    let m = bundled_model("planar2r").unwrap();
    let traj = rollout(&m, 300, 1e-3);
    let batch = filtered_momentum_residual(&m, &traj, &m.theta(), 10.0).unwrap();
    let mut st = AdaptiveState::new(&m, m.theta(), DMatrix::identity(2, 2), 1.0).unwrap();
    for n in 0..traj.t.len() {
        let r = st.momentum.push(&m, &traj.q[n], &traj.v[n], &traj.tau[n], 1e-3).unwrap();
        assert!((&r - &batch.residual[n]).amax() < 1e-10, "sample {n}");
    }
}
