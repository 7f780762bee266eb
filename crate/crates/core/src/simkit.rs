//! Closed-loop simulation: fixed-step RK4, the passivity-based tracking
//! controller with a selectable Coriolis factorization, and the point-mass
//! torsion experiment.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::adaptive::{adaptive_terms, regressor_bundle};
use crate::dynamics::{coriolis_star, forward_dynamics, kinetic_energy, mass_matrix, potential_energy};
use crate::error::{Error, Result};
use crate::model::{bundled_model, ConfigState, Model};
use crate::oracles::fd_mass_matrix_rate;
use crate::spatial::skew;

/// Desired position, velocity and acceleration at one instant.
#[derive(Debug, Clone)]
pub struct ReferenceSample {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

type ReferenceFn = dyn Fn(f64) -> ReferenceSample + Send + Sync;

/// `q_d(t)` with its derivatives and the position-error gain `Λ`.
#[derive(Clone)]
pub struct TrackingReference {
    pub lambda: f64,
    trajectory: Arc<ReferenceFn>,
}

impl fmt::Debug for TrackingReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrackingReference").field("lambda", &self.lambda).finish_non_exhaustive()
    }
}

impl TrackingReference {
    pub fn new(lambda: f64, trajectory: impl Fn(f64) -> ReferenceSample + Send + Sync + 'static) -> Self {
        Self { lambda, trajectory: Arc::new(trajectory) }
    }

    /// `q_d(t) = [t + sin t, 0, 0]`.
    pub fn point_mass_line(lambda: f64) -> Self {
        Self::new(lambda, |t| ReferenceSample {
            q: DVector::from_vec(vec![t + t.sin(), 0.0, 0.0]),
            qd: DVector::from_vec(vec![1.0 + t.cos(), 0.0, 0.0]),
            qdd: DVector::from_vec(vec![-t.sin(), 0.0, 0.0]),
        })
    }

    /// Regulation to a fixed configuration.
    pub fn hold(q: DVector<f64>, lambda: f64) -> Self {
        let n = q.len();
        Self::new(lambda, move |_| ReferenceSample { q: q.clone(), qd: DVector::zeros(n), qdd: DVector::zeros(n) })
    }

    /// `q_d,i(t) = c_i + a sin(ω t + i)`, one phase per coordinate.
    pub fn sinusoid(center: DVector<f64>, amplitude: f64, omega: f64, lambda: f64) -> Self {
        Self::new(lambda, move |t| {
            let ph = |i: usize| omega * t + i as f64;
            ReferenceSample {
                q: DVector::from_fn(center.len(), |i, _| center[i] + amplitude * ph(i).sin()),
                qd: DVector::from_fn(center.len(), |i, _| amplitude * omega * ph(i).cos()),
                qdd: DVector::from_fn(center.len(), |i, _| -amplitude * omega * omega * ph(i).sin()),
            }
        })
    }

    pub fn at(&self, t: f64) -> ReferenceSample {
        (self.trajectory)(t)
    }
}

/// `s = v̄ − v_r`, with `v_r = q̇_d − Λe` and `v̄̇_r = q̈_d − Λ(v̄ − q̇_d)`.
/// Requires coordinate speeds (`v̄ = q̇`). Returns `(s, v_r, v̄̇_r)`.
pub fn sliding_variable(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    reference: &TrackingReference,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if !model.uses_coordinates() {
        return Err(Error::Precondition("tracking errors need coordinate joints".into()));
    }
    let r = reference.at(t);
    if r.q.len() != model.nq() {
        return Err(Error::Shape(format!("reference has {} coordinates, model {}", r.q.len(), model.nq())));
    }
    let vr = &r.qd - (q - &r.q) * reference.lambda;
    let vr_dot = &r.qdd - (v - &r.qd) * reference.lambda;
    Ok((v - &vr, vr, vr_dot))
}

type CoriolisFn = dyn Fn(&Model, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type BetaFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Which Coriolis matrix the controller uses.
#[derive(Clone)]
pub enum FactorizationChoice {
    /// `C̄*` through the recursive adaptive law.
    TorsionFree,
    /// `C = β(q)(v×)` for a three-speed model with `Ḣ = 0`.
    Torsioned(Arc<BetaFn>),
    Custom {
        tag: String,
        c: Arc<CoriolisFn>,
    },
}

impl fmt::Debug for FactorizationChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FactorizationChoice {
    pub fn constant_beta(beta: f64) -> Self {
        Self::Torsioned(Arc::new(move |_| beta))
    }

    pub fn tag(&self) -> String {
        match self {
            Self::TorsionFree => "star".into(),
            Self::Torsioned(b) => format!("beta={}", b(&DVector::zeros(3))),
            Self::Custom { tag, .. } => tag.clone(),
        }
    }

    /// The chosen `C(q, v̄)` as a dense matrix.
    pub fn matrix(&self, model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            Self::TorsionFree => Ok(coriolis_star(model, q, v)?.c),
            Self::Torsioned(beta) => {
                if model.nv() != 3 {
                    return Err(Error::Precondition("β(q)(v×) needs exactly three speeds".into()));
                }
                let w = skew(&Vector3::new(v[0], v[1], v[2])) * beta(q);
                Ok(DMatrix::from_column_slice(3, 3, w.as_slice()))
            }
            Self::Custom { c, .. } => Ok(c(model, q, v)),
        }
    }

    /// Checks `Ḣ = C + Cᵀ` and `C v̄ = C̄* v̄` at one state.
    pub fn check(&self, model: &Model, q: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        if matches!(self, Self::TorsionFree) {
            return Ok(());
        }
        let c = self.matrix(model, q, v)?;
        let hdot = fd_mass_matrix_rate(model, q, v, 1e-6)?;
        let skew_err = (&hdot - &c - c.transpose()).amax();
        let star = coriolis_star(model, q, v)?.c;
        let fact_err = (&c * v - star * v).amax();
        let tol = 1e-6 * (1.0 + hdot.amax() + c.amax() * v.amax());
        if skew_err > tol || fact_err > tol {
            return Err(Error::Validation(format!(
                "factorization {} fails at this state: skew residual {skew_err:.3e}, Cv residual {fact_err:.3e}",
                self.tag()
            )));
        }
        Ok(())
    }
}

/// Whether the controller is evaluated at each RK4 stage or held over the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlHold {
    #[default]
    PerStage,
    ZeroOrder,
}

/// Certainty-equivalence tracking controller, optionally adaptive.
#[derive(Debug, Clone)]
pub struct PassivityController {
    pub reference: TrackingReference,
    pub theta_hat: DVector<f64>,
    pub kd: DMatrix<f64>,
    pub factorization: FactorizationChoice,
    /// Diagonal adaptation gain; `None` keeps `θ̂` fixed.
    pub adaptation: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub enum Controller {
    Unforced,
    Passivity(PassivityController),
}

impl Controller {
    fn tag(&self) -> String {
        match self {
            Self::Unforced => "unforced".into(),
            Self::Passivity(p) => p.factorization.tag(),
        }
    }
}

/// Regressor whose product with `θ` gives the model-based part of the law
/// for the given choice. With the torsion-free choice it covers the
/// Coriolis term; otherwise `C` is treated as known and left out.
pub fn control_regressor(
    model: &Model,
    choice: &FactorizationChoice,
    q: &DVector<f64>,
    v: &DVector<f64>,
    vr: &DVector<f64>,
    vr_dot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let vr_used = match choice {
        FactorizationChoice::TorsionFree => vr.clone(),
        _ => DVector::zeros(model.nv()),
    };
    Ok(regressor_bundle(model, q, v, &vr_used, vr_dot)?.y)
}

/// `τ = Ĥ v̄̇_r + Ĉ v_r + ĝ − K_D s`. Returns `(τ, Yᵀs, s)`.
pub fn passivity_controller(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    ctrl: &PassivityController,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    control_law(model, q, v, t, ctrl, true)
}

fn control_law(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    ctrl: &PassivityController,
    check: bool,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let (s, vr, vr_dot) = sliding_variable(model, q, v, &ctrl.reference, t)?;
    match &ctrl.factorization {
        FactorizationChoice::TorsionFree => {
            let (tau, yts) = adaptive_terms(model, q, v, &vr, &vr_dot, &ctrl.theta_hat, &ctrl.kd)?;
            Ok((tau, yts, s))
        }
        choice => {
            if check {
                choice.check(model, q, v)?;
            }
            let y = control_regressor(model, choice, q, v, &vr, &vr_dot)?;
            let c = choice.matrix(model, q, v)?;
            let tau = &y * &ctrl.theta_hat + c * &vr - &ctrl.kd * &s;
            Ok((tau, y.tr_mul(&s), s))
        }
    }
}

/// Step size, horizon and bookkeeping for [`simulate`].
#[derive(Debug, Clone)]
pub struct SimSettings {
    pub dt: f64,
    pub t_final: f64,
    pub hold: ControlHold,
    pub seed: Option<u64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { dt: 1e-3, t_final: 20.0, hold: ControlHold::PerStage, seed: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunMeta {
    pub factorization: String,
    pub lambda: f64,
    pub kd: DMatrix<f64>,
    pub theta_hat0: DVector<f64>,
    pub adaptive: bool,
    pub dt: f64,
    pub seed: Option<u64>,
}

/// One row per step, starting at `t = 0`. `s` equals `v̄` and `V` equals the
/// kinetic energy for unforced runs.
#[derive(Debug, Clone)]
pub struct SimLog {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
    pub lyapunov: Vec<f64>,
    pub theta_hat: Vec<DVector<f64>>,
    pub meta: RunMeta,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Columns `t[s], q1.., v1.., s1.., tau1.., V[J]` and, for adaptive runs,
    /// `theta1..`. Indices are 1-based; `q` and `v` follow the model's joint
    /// ordering in SI units (m, rad, m/s, rad/s).
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let Some(q0) = self.q.first() else { return Ok(()) };
        let (nq, nv) = (q0.len(), self.v[0].len());
        let mut head = vec!["t[s]".to_string()];
        head.extend((1..=nq).map(|i| format!("q{i}")));
        for p in ["v", "s", "tau"] {
            head.extend((1..=nv).map(|i| format!("{p}{i}")));
        }
        head.push("V[J]".into());
        if self.meta.adaptive {
            head.extend((1..=self.theta_hat[0].len()).map(|i| format!("theta{i}")));
        }
        writeln!(out, "{}", head.join(","))?;
        for n in 0..self.len() {
            let mut row = vec![self.t[n]];
            for x in [&self.q[n], &self.v[n], &self.s[n], &self.tau[n]] {
                row.extend(x.iter());
            }
            row.push(self.lyapunov[n]);
            if self.meta.adaptive {
                row.extend(self.theta_hat[n].iter());
            }
            writeln!(out, "{}", row.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(","))?;
        }
        Ok(())
    }
}

fn inverse_gain(ctrl: &PassivityController, n: usize) -> DVector<f64> {
    match &ctrl.adaptation {
        Some(g) => g.map(|x| 1.0 / x),
        None => DVector::from_element(n, 1.0),
    }
}

/// `V = ½ sᵀHs + ½ θ̃ᵀΓ⁻¹θ̃` with `θ̃ = θ̂ − θ`.
fn lyapunov_value(model: &Model, q: &DVector<f64>, s: &DVector<f64>, theta_err: &DVector<f64>, gamma_inv: &DVector<f64>) -> Result<f64> {
    let h = mass_matrix(model, q)?;
    Ok(0.5 * s.dot(&(h * s)) + 0.5 * theta_err.dot(&theta_err.component_mul(gamma_inv)))
}

/// Configuration rate, acceleration and parameter rate of one RK stage.
type StageRates = (DVector<f64>, DVector<f64>, DVector<f64>);

struct Eval {
    tau: DVector<f64>,
    theta_rate: DVector<f64>,
    s: DVector<f64>,
}

fn evaluate(model: &Model, controller: &Controller, q: &DVector<f64>, v: &DVector<f64>, theta_hat: &DVector<f64>, t: f64, check: bool) -> Result<Eval> {
    match controller {
        Controller::Unforced => Ok(Eval { tau: DVector::zeros(model.nv()), theta_rate: DVector::zeros(0), s: v.clone() }),
        Controller::Passivity(p) => {
            let mut ctrl = p.clone();
            ctrl.theta_hat = theta_hat.clone();
            let (tau, yts, s) = control_law(model, q, v, t, &ctrl, check)?;
            let theta_rate = match &p.adaptation {
                Some(g) => -g.component_mul(&yts),
                None => DVector::zeros(theta_hat.len()),
            };
            Ok(Eval { tau, theta_rate, s })
        }
    }
}

fn finite(x: &DVector<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Fixed-step RK4 closed loop. The true plant is `model`; the controller
/// only sees its own estimate `θ̂`.
pub fn simulate(model: &Model, controller: &Controller, initial: &ConfigState, settings: &SimSettings) -> Result<SimLog> {
    let dt = settings.dt;
    if !(dt > 0.0) || !(settings.t_final >= 0.0) {
        return Err(Error::InvalidConfig(format!("need dt > 0 and t_final ≥ 0, got dt = {dt}, t_final = {}", settings.t_final)));
    }
    model.check_state(&initial.q, &initial.v)?;
    let steps = (settings.t_final / dt).round() as usize;
    let theta = model.theta();
    let (mut th, gamma_inv, meta) = match controller {
        Controller::Unforced => (
            DVector::zeros(0),
            DVector::zeros(0),
            RunMeta {
                factorization: controller.tag(),
                lambda: 0.0,
                kd: DMatrix::zeros(0, 0),
                theta_hat0: DVector::zeros(0),
                adaptive: false,
                dt,
                seed: settings.seed,
            },
        ),
        Controller::Passivity(p) => {
            if p.theta_hat.len() != theta.len() || p.kd.shape() != (model.nv(), model.nv()) {
                return Err(Error::Shape("controller gains do not match the model".into()));
            }
            if p.adaptation.as_ref().is_some_and(|g| g.len() != theta.len() || g.iter().any(|&x| !(x > 0.0))) {
                return Err(Error::InvalidConfig("adaptation gain must be positive with one entry per parameter".into()));
            }
            (
                p.theta_hat.clone(),
                inverse_gain(p, theta.len()),
                RunMeta {
                    factorization: controller.tag(),
                    lambda: p.reference.lambda,
                    kd: p.kd.clone(),
                    theta_hat0: p.theta_hat.clone(),
                    adaptive: p.adaptation.is_some(),
                    dt,
                    seed: settings.seed,
                },
            )
        }
    };
    let adaptive = meta.adaptive;
    let v_of = |q: &DVector<f64>, s: &DVector<f64>, th: &DVector<f64>| -> Result<f64> {
        match controller {
            Controller::Unforced => Ok(0.5 * s.dot(&(mass_matrix(model, q)? * s))),
            Controller::Passivity(_) => lyapunov_value(model, q, s, &(th - &theta), &gamma_inv),
        }
    };
    let mut log = SimLog { t: Vec::with_capacity(steps + 1), q: vec![], v: vec![], s: vec![], tau: vec![], lyapunov: vec![], theta_hat: vec![], meta };
    let (mut q, mut v) = (initial.q.clone(), initial.v.clone());
    for n in 0..=steps {
        let t = n as f64 * dt;
        // the factorization is validated once per step, at the logged state
        let e0 = evaluate(model, controller, &q, &v, &th, t, true)?;
        if !finite(&e0.tau) || !finite(&q) || !finite(&v) {
            return Err(Error::Diverged { t, detail: format!("non-finite state or torque (|v| = {:.3e})", v.amax()) });
        }
        log.t.push(t);
        log.lyapunov.push(v_of(&q, &e0.s, &th)?);
        log.q.push(q.clone());
        log.v.push(v.clone());
        log.s.push(e0.s.clone());
        log.tau.push(e0.tau.clone());
        if adaptive {
            log.theta_hat.push(th.clone());
        }
        if n == steps {
            break;
        }
        let held = (e0.tau.clone(), e0.theta_rate.clone());
        let stage = |qs: &DVector<f64>, vs: &DVector<f64>, ths: &DVector<f64>, ts: f64, first: bool| -> Result<StageRates> {
            if !finite(qs) || !finite(vs) || !finite(ths) {
                return Err(Error::Diverged { t: ts, detail: "non-finite stage state".into() });
            }
            let (tau, rate) = if first || settings.hold == ControlHold::ZeroOrder {
                if first {
                    (e0.tau.clone(), e0.theta_rate.clone())
                } else {
                    held.clone()
                }
            } else {
                let e = evaluate(model, controller, qs, vs, ths, ts, false)?;
                (e.tau, e.theta_rate)
            };
            let acc = forward_dynamics(model, qs, vs, &tau)?;
            Ok((vs.clone(), acc, rate))
        };
        // Runge-Kutta-Munthe-Kaas: stages live in exponential coordinates
        // `u` around `q`, so rotations keep fourth order
        let k1 = stage(&q, &v, &th, t, true)?;
        let mut ks = vec![k1];
        let mut us = vec![ks[0].0.clone()];
        for c in [0.5, 0.5, 1.0] {
            let (prev, urate) = (ks.last().expect("non-empty"), us.last().expect("non-empty"));
            let u = urate * (c * dt);
            let qs = model.integrate_config(&q, &u, 1.0);
            let vs = &v + &prev.1 * (c * dt);
            let ths = if adaptive { &th + &prev.2 * (c * dt) } else { th.clone() };
            let k = stage(&qs, &vs, &ths, t + c * dt, false)?;
            us.push(model.local_rate(&u, &k.0));
            ks.push(k);
        }
        let avg = |f: &dyn Fn(&StageRates) -> &DVector<f64>| -> DVector<f64> { (f(&ks[0]) + f(&ks[1]) * 2.0 + f(&ks[2]) * 2.0 + f(&ks[3])) / 6.0 };
        let ubar = (&us[0] + &us[1] * 2.0 + &us[2] * 2.0 + &us[3]) / 6.0;
        let acc = avg(&|k| &k.1);
        q = model.integrate_config(&q, &ubar, dt);
        model.normalize_config(&mut q);
        v += acc * dt;
        if adaptive {
            th += avg(&|k| &k.2) * dt;
        }
    }
    Ok(log)
}

/// `V(t)` and the right-hand side `−sᵀK_D s + sᵀYθ̃ + θ̃ᵀΓ⁻¹θ̂̇` per sample.
#[derive(Debug, Clone)]
pub struct LyapunovSeries {
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
}

impl LyapunovSeries {
    /// Largest gap between the central difference of `V` and the formula.
    pub fn derivative_residual(&self, dt: f64) -> f64 {
        (1..self.v.len().saturating_sub(1)).map(|n| ((self.v[n + 1] - self.v[n - 1]) / (2.0 * dt) - self.vdot[n]).abs()).fold(0.0, f64::max)
    }

    /// Largest increase between consecutive samples.
    pub fn max_increase(&self) -> f64 {
        self.v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn lyapunov_series(log: &SimLog, model: &Model, controller: &PassivityController) -> Result<LyapunovSeries> {
    let theta = model.theta();
    let gamma_inv = inverse_gain(controller, theta.len());
    let mut out = LyapunovSeries { v: Vec::with_capacity(log.len()), vdot: Vec::with_capacity(log.len()) };
    for n in 0..log.len() {
        let (q, v, t) = (&log.q[n], &log.v[n], log.t[n]);
        let th = if log.meta.adaptive { log.theta_hat[n].clone() } else { controller.theta_hat.clone() };
        let err = &th - &theta;
        let (s, vr, vr_dot) = sliding_variable(model, q, v, &controller.reference, t)?;
        let y = control_regressor(model, &controller.factorization, q, v, &vr, &vr_dot)?;
        let rate = match &controller.adaptation {
            Some(g) => -g.component_mul(&y.tr_mul(&s)),
            None => DVector::zeros(th.len()),
        };
        out.v.push(lyapunov_value(model, q, &s, &err, &gamma_inv)?);
        out.vdot.push(-s.dot(&(&controller.kd * &s)) + s.dot(&(&y * &err)) + err.dot(&rate.component_mul(&gamma_inv)));
    }
    Ok(out)
}

/// Fraction of signal energy above `cutoff_hz`, summed over components,
/// after removing each component's mean.
pub fn high_frequency_fraction(samples: &[DVector<f64>], dt: f64, cutoff_hz: f64) -> Result<f64> {
    let n = samples.len();
    if n < 4 || !(dt > 0.0) {
        return Err(Error::InvalidConfig("spectrum needs at least four samples and dt > 0".into()));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let (mut high, mut total) = (0.0, 0.0);
    for c in 0..samples[0].len() {
        let mean = samples.iter().map(|x| x[c]).sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|x| Complex::new(x[c] - mean, 0.0)).collect();
        fft.process(&mut buf);
        for (k, z) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
            let e = z.norm_sqr();
            total += e;
            if k as f64 / (n as f64 * dt) > cutoff_hz {
                high += e;
            }
        }
    }
    Ok(if total > 0.0 { high / total } else { 0.0 })
}

/// `T + V` along a log.
pub fn energy_series(model: &Model, log: &SimLog) -> Result<Vec<f64>> {
    log.q.iter().zip(&log.v).map(|(q, v)| Ok(kinetic_energy(model, q, v)? + potential_energy(model, q)?)).collect()
}

/// Settings of the point-mass torsion experiment.
#[derive(Debug, Clone)]
pub struct PointMassSetup {
    pub mass_estimate: f64,
    pub lambda: f64,
    pub kd: f64,
    /// `β` in `C = β(v×)`; zero selects the torsion-free law.
    pub beta: f64,
    pub adaptation: Option<f64>,
    pub settings: SimSettings,
}

impl Default for PointMassSetup {
    fn default() -> Self {
        Self { mass_estimate: 0.9, lambda: 1.0, kd: 1.0, beta: 0.0, adaptation: None, settings: SimSettings::default() }
    }
}

/// Unit point mass without gravity, starting at rest at the origin with
/// unit velocity along `+y`.
pub fn point_mass_plant() -> Model {
    let mut m = bundled_model("point_mass").expect("bundled");
    m.set_gravity(Vector6::zeros());
    m
}

pub fn point_mass_controller(setup: &PointMassSetup) -> PassivityController {
    let mut theta_hat = DVector::zeros(10);
    theta_hat[0] = setup.mass_estimate;
    PassivityController {
        reference: TrackingReference::point_mass_line(setup.lambda),
        theta_hat,
        kd: DMatrix::identity(3, 3) * setup.kd,
        factorization: if setup.beta == 0.0 { FactorizationChoice::TorsionFree } else { FactorizationChoice::constant_beta(setup.beta) },
        adaptation: setup.adaptation.map(|g| DVector::from_element(10, g)),
    }
}

pub fn run_point_mass(setup: &PointMassSetup) -> Result<SimLog> {
    let plant = point_mass_plant();
    let initial = ConfigState { q: DVector::zeros(3), v: DVector::from_vec(vec![0.0, 1.0, 0.0]) };
    simulate(&plant, &Controller::Passivity(point_mass_controller(setup)), &initial, &setup.settings)
}

/// Summary numbers comparing the torsion-free and torsioned runs.
#[derive(Debug, Clone)]
pub struct PointMassReport {
    pub free: SimLog,
    pub torsioned: SimLog,
    /// High-frequency fraction of `v̄` above 1 Hz.
    pub hf_free: f64,
    pub hf_torsioned: f64,
    /// `max |V_free − V_torsioned| / max V_free`.
    pub lyapunov_gap: f64,
    /// Largest `‖e‖` over the last quarter of the horizon.
    pub tail_error_free: f64,
    pub tail_error_torsioned: f64,
    pub rms_error_free: f64,
    pub rms_error_torsioned: f64,
}

fn tracking_errors(log: &SimLog, reference: &TrackingReference) -> Vec<f64> {
    log.t.iter().zip(&log.q).map(|(&t, q)| (q - reference.at(t).q).norm()).collect()
}

/// Both cases of the experiment with a fixed estimate; they run in
/// parallel when more than one worker thread is allowed.
pub fn point_mass_experiment(beta: f64, settings: &SimSettings) -> Result<PointMassReport> {
    let free_setup = PointMassSetup { settings: settings.clone(), ..Default::default() };
    let tors_setup = PointMassSetup { beta, settings: settings.clone(), ..Default::default() };
    let (free, torsioned) = if worker_threads() > 1 {
        std::thread::scope(|sc| {
            let h = sc.spawn(|| run_point_mass(&tors_setup));
            let f = run_point_mass(&free_setup);
            (f, h.join().expect("simulation thread panicked"))
        })
    } else {
        (run_point_mass(&free_setup), run_point_mass(&tors_setup))
    };
    let (free, torsioned) = (free?, torsioned?);
    let dt = settings.dt;
    let reference = TrackingReference::point_mass_line(1.0);
    let tail = |e: &[f64]| e[3 * e.len() / 4..].iter().copied().fold(0.0, f64::max);
    let rms = |e: &[f64]| (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
    let (ef, et) = (tracking_errors(&free, &reference), tracking_errors(&torsioned, &reference));
    let vmax = free.lyapunov.iter().copied().fold(0.0, f64::max);
    let gap = free.lyapunov.iter().zip(&torsioned.lyapunov).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(PointMassReport {
        hf_free: high_frequency_fraction(&free.v, dt, 1.0)?,
        hf_torsioned: high_frequency_fraction(&torsioned.v, dt, 1.0)?,
        lyapunov_gap: gap / vmax.max(f64::MIN_POSITIVE),
        tail_error_free: tail(&ef),
        tail_error_torsioned: tail(&et),
        rms_error_free: rms(&ef),
        rms_error_torsioned: rms(&et),
        free,
        torsioned,
    })
}

/// Worker cap from `CORIOLIS_KIT_THREADS`, defaulting to the available
/// parallelism.
pub fn worker_threads() -> usize {
    std::env::var("CORIOLIS_KIT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_reference_state_has_zero_sliding_variable() {
        let m = point_mass_plant();
        let r = TrackingReference::point_mass_line(1.0);
        let x = r.at(0.7);
        let (s, vr, _) = sliding_variable(&m, &x.q, &x.qd, &r, 0.7).unwrap();
        assert!(s.amax() < 1e-15);
        assert!((vr - x.qd).amax() < 1e-15);
    }

    #[test]
    fn zero_gain_sliding_variable() {
        let m = point_mass_plant();
        let r = TrackingReference::point_mass_line(0.0);
        let q = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let v = DVector::from_vec(vec![0.5, 0.2, -0.1]);
        let (s, _, _) = sliding_variable(&m, &q, &v, &r, 1.3).unwrap();
        assert!((s - (&v - r.at(1.3).qd)).amax() < 1e-15);
    }

    #[test]
    fn torsioned_law_differs_by_the_cross_product_term() {
        let m = point_mass_plant();
        let base = point_mass_controller(&PointMassSetup::default());
        let tors = point_mass_controller(&PointMassSetup { beta: -5.0, ..Default::default() });
        let q = DVector::from_vec(vec![0.1, 0.4, -0.3]);
        let v = DVector::from_vec(vec![0.3, 1.0, -0.6]);
        let (t0, _, _) = passivity_controller(&m, &q, &v, 0.4, &base).unwrap();
        let (t1, _, _) = passivity_controller(&m, &q, &v, 0.4, &tors).unwrap();
        let (_, vr, vr_dot) = sliding_variable(&m, &q, &v, &base.reference, 0.4).unwrap();
        let v3 = Vector3::new(v[0], v[1], v[2]);
        let expect = v3.cross(&Vector3::new(vr[0], vr[1], vr[2])) * -5.0;
        assert!(((&t1 - &t0) - DVector::from_column_slice(expect.as_slice())).amax() < 1e-14);
        // the C = 0 law for a point mass
        let s = &v - &vr;
        assert!((t0 - (vr_dot * 0.9 - s)).amax() < 1e-14);
    }

    #[test]
    fn non_skew_custom_choice_is_rejected() {
        let m = point_mass_plant();
        let mut ctrl = point_mass_controller(&PointMassSetup::default());
        ctrl.factorization = FactorizationChoice::Custom { tag: "sym".into(), c: Arc::new(|_, _, v| DMatrix::identity(3, 3) * v.norm()) };
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!(matches!(passivity_controller(&m, &DVector::zeros(3), &v, 0.0, &ctrl), Err(Error::Validation(_))));
    }

    #[test]
    fn perfect_model_on_reference_equals_inverse_dynamics() {
        let m = bundled_model("planar2r").unwrap();
        let r = TrackingReference::sinusoid(DVector::from_vec(vec![0.2, -0.3]), 0.5, 1.3, 2.0);
        let ctrl = PassivityController {
            reference: r.clone(),
            theta_hat: m.theta(),
            kd: DMatrix::identity(2, 2) * 3.0,
            factorization: FactorizationChoice::TorsionFree,
            adaptation: None,
        };
        let x = r.at(0.8);
        let (tau, _, _) = passivity_controller(&m, &x.q, &x.qd, 0.8, &ctrl).unwrap();
        let id = crate::dynamics::rnea(&m, &x.q, &x.qd, &x.qdd, true).unwrap();
        assert!((tau - id).amax() < 1e-12);
    }

    #[test]
    fn spectrum_separates_slow_and_fast_signals() {
        let dt = 1e-3;
        let slow: Vec<_> = (0..4000).map(|n| DVector::from_element(1, (0.25 * std::f64::consts::TAU * n as f64 * dt).sin())).collect();
        let fast: Vec<_> = (0..4000).map(|n| DVector::from_element(1, (5.0 * std::f64::consts::TAU * n as f64 * dt).sin())).collect();
        assert!(high_frequency_fraction(&slow, dt, 1.0).unwrap() < 1e-3);
        assert!(high_frequency_fraction(&fast, dt, 1.0).unwrap() > 0.999);
        assert_eq!(high_frequency_fraction(&vec![DVector::from_element(1, 2.0); 8], dt, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_step_rejected() {
        let m = point_mass_plant();
        let s = SimSettings { dt: 0.0, ..Default::default() };
        assert!(simulate(&m, &Controller::Unforced, &m.neutral_state(), &s).is_err());
    }
}
