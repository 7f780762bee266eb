//! Adaptive-control support: Slotine-Li direct adaptation, regressors and
//! filtered identification residuals.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3, Vector6};

use crate::dynamics::forward_kinematics;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::spatial::{cross_force_dual, cross_motion, skew, stacked_coriolis_b, InertialParams, MotionVector, SpatialInertia};

/// Filter pole used when none is given, in rad/s.
pub const DEFAULT_FILTER_POLE: f64 = 10.0;

/// `Y_I(x)` with `𝐈(θ) x = Y_I(x) θ`.
fn inertia_regressor(x: &MotionVector) -> SMatrix<f64, 6, 10> {
    let (w, u) = (Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]));
    let mut y = SMatrix::<f64, 6, 10>::zeros();
    y.fixed_view_mut::<3, 1>(3, 0).copy_from(&u);
    y.fixed_view_mut::<3, 3>(0, 1).copy_from(&-skew(&u));
    y.fixed_view_mut::<3, 3>(3, 1).copy_from(&skew(&w));
    // Ī columns ordered xx, yy, zz, xy, xz, yz
    let cols = [[w.x, 0.0, 0.0], [0.0, w.y, 0.0], [0.0, 0.0, w.z], [w.y, w.x, 0.0], [w.z, 0.0, w.x], [0.0, w.z, w.y]];
    for (c, col) in cols.iter().enumerate() {
        y.fixed_view_mut::<3, 1>(0, 4 + c).copy_from_slice(col);
    }
    y
}

/// `𝒴(a, v, w) = ∂/∂θ [𝐈(θ) a + 𝐁(𝐈(θ), v) w]`, a 6×10 matrix, using
/// `𝐁 w = ½[(v×*)𝐈w + (w×*)𝐈v − 𝐈(v×w)]`.
pub fn body_regressor(a: &MotionVector, v: &MotionVector, w: &MotionVector) -> DMatrix<f64> {
    let vw = cross_motion(v) * w;
    let y = inertia_regressor(a) + (cross_force_dual(v) * inertia_regressor(w) + cross_force_dual(w) * inertia_regressor(v) - inertia_regressor(&vw)) * 0.5;
    DMatrix::from_column_slice(6, 10, y.as_slice())
}

fn block(x: &DVector<f64>, b: usize) -> Vector6<f64> {
    Vector6::from_column_slice(x.rows(6 * b, 6).as_slice())
}

/// Block-diagonal stack of body regressors for stacked cluster quantities.
pub fn cluster_regressor(a: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len() / 6;
    let mut y = DMatrix::zeros(6 * n, 10 * n);
    for b in 0..n {
        y.view_mut((6 * b, 10 * b), (6, 10)).copy_from(&body_regressor(&block(a, b), &block(v, b), &block(w, b)));
    }
    y
}

/// Gains and estimates of the direct adaptive controller.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub theta_hat: DVector<f64>,
    /// Symmetric positive definite damping `K_D`.
    pub kd: DMatrix<f64>,
    /// Position-error gain `Λ` in `v_r = q̇_d − Λ e`.
    pub lambda: f64,
    /// Filter pole `λ` for the identification residuals.
    pub filter_pole: f64,
    /// Diagonal adaptation gain (the plain law uses all ones).
    pub adaptation_gain: DVector<f64>,
    pub momentum: MomentumFilter,
}

impl AdaptiveState {
    pub fn new(model: &Model, theta_hat: DVector<f64>, kd: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let np = 10 * model.nbodies();
        if theta_hat.len() != np {
            return Err(Error::Shape(format!("θ̂ has {} entries, expected {np}", theta_hat.len())));
        }
        if kd.shape() != (model.nv(), model.nv()) {
            return Err(Error::Shape(format!("K_D is {:?}, expected {}×{}", kd.shape(), model.nv(), model.nv())));
        }
        if (&kd - kd.transpose()).amax() > 1e-12 * (1.0 + kd.amax()) || kd.clone().cholesky().is_none() {
            return Err(Error::InvalidConfig("K_D must be symmetric positive definite".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("Λ must be positive, got {lambda}")));
        }
        Ok(Self {
            theta_hat,
            kd,
            lambda,
            filter_pole: DEFAULT_FILTER_POLE,
            adaptation_gain: DVector::from_element(np, 1.0),
            momentum: MomentumFilter::new(DEFAULT_FILTER_POLE, model.nv())?,
        })
    }

    /// `θ̂̇ = −Γ Yᵀs`.
    pub fn parameter_rate(&self, yts: &DVector<f64>) -> DVector<f64> {
        -self.adaptation_gain.component_mul(yts)
    }
}

/// Columns of `θ` that belong to the bodies of a cluster.
fn param_columns(model: &Model, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    model.clusters()[k].bodies.iter().enumerate().map(|(l, &b)| (10 * l, 10 * b))
}

struct ReferenceSweep {
    v: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
    a: Vec<DVector<f64>>,
    ag: Vec<DVector<f64>>,
    phi_dot: Vec<DMatrix<f64>>,
}

fn reference_sweep(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    vr: &DVector<f64>,
    vr_dot: &DVector<f64>,
) -> Result<(crate::dynamics::KinematicsCache, ReferenceSweep)> {
    for (what, x) in [("reference velocity", vr), ("reference acceleration", vr_dot)] {
        if x.len() != model.nv() {
            return Err(Error::InvalidConfig(format!("{what} has length {}, expected {}", x.len(), model.nv())));
        }
    }
    let kin = forward_kinematics(model, q, v)?;
    let nc = model.nclusters();
    let mut s = ReferenceSweep {
        v: Vec::with_capacity(nc),
        w: Vec::with_capacity(nc),
        a: Vec::with_capacity(nc),
        ag: Vec::with_capacity(nc),
        phi_dot: Vec::with_capacity(nc),
    };
    let a0 = DVector::from_column_slice((-model.gravity()).as_slice());
    for (k, c) in model.clusters().iter().enumerate() {
        let ck = &kin.clusters[k];
        let (wp, ap, agp) = match c.parent {
            Some(p) => (s.w[p].clone(), s.a[p].clone(), s.ag[p].clone()),
            None => (DVector::zeros(6), a0.clone(), a0.clone()),
        };
        let vrk = DVector::from_column_slice(model.cluster_v(k, vr.as_slice()));
        let vrdk = DVector::from_column_slice(model.cluster_v(k, vr_dot.as_slice()));
        s.w.push(&ck.x_parent * wp + &ck.phi * &vrk);
        s.a.push(&ck.x_parent * ap + &ck.phi_dot * &vrk + &ck.phi * vrdk);
        s.ag.push(&ck.x_parent * agp);
        s.v.push(ck.v.clone());
        s.phi_dot.push(ck.phi_dot.clone());
    }
    Ok((kin, s))
}

/// Direct adaptive control step without forming `Y`: returns
/// `τ = Ŷθ̂ − K_D s` and `Yᵀs` with `s = v̄ − v_r`.
pub fn direct_adaptive_step(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    vr: &DVector<f64>,
    vr_dot: &DVector<f64>,
    state: &AdaptiveState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    adaptive_terms(model, q, v, vr, vr_dot, &state.theta_hat, &state.kd)
}

/// [`direct_adaptive_step`] with the estimate and damping passed directly.
pub fn adaptive_terms(
    model: &Model,
    q: &DVector<f64>,
    v: &DVector<f64>,
    vr: &DVector<f64>,
    vr_dot: &DVector<f64>,
    theta_hat: &DVector<f64>,
    kd: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if theta_hat.len() != 10 * model.nbodies() || kd.shape() != (model.nv(), model.nv()) {
        return Err(Error::Shape(format!("θ̂ {} entries, K_D {:?}", theta_hat.len(), kd.shape())));
    }
    let (kin, sw) = reference_sweep(model, q, v, vr, vr_dot)?;
    let nc = model.nclusters();
    let mut f = Vec::with_capacity(nc);
    let mut yts = DVector::zeros(10 * model.nbodies());
    for k in 0..nc {
        let c = &model.clusters()[k];
        let mut inertia = DMatrix::zeros(6 * c.nbodies(), 6 * c.nbodies());
        for (l, &b) in c.bodies.iter().enumerate() {
            let th = InertialParams(std::array::from_fn(|p| theta_hat[10 * b + p]));
            inertia.view_mut((6 * l, 6 * l), (6, 6)).copy_from(&SpatialInertia::from_params(&th).to_matrix());
        }
        f.push(&inertia * &sw.a[k] + stacked_coriolis_b(&inertia, &sw.v[k]) * &sw.w[k]);
        let y = cluster_regressor(&sw.a[k], &sw.v[k], &sw.w[k]);
        let part = y.tr_mul(&(&sw.v[k] - &sw.w[k]));
        for (local, global) in param_columns(model, k) {
            yts.rows_mut(global, 10).copy_from(&part.rows(local, 10));
        }
    }
    let mut tau = DVector::zeros(model.nv());
    for k in (0..nc).rev() {
        let c = &model.clusters()[k];
        tau.rows_mut(c.v_offset, c.nv()).copy_from(&kin.clusters[k].phi.tr_mul(&f[k]));
        if let Some(p) = c.parent {
            let up = kin.clusters[k].x_parent.tr_mul(&f[k]);
            f[p] += up;
        }
    }
    let s = v - vr;
    Ok((tau - kd * s, yts))
}

/// The regressor family, all linear in `θ ∈ ℝ^{10 N_B}`.
#[derive(Debug, Clone)]
pub struct RegressorBundle {
    /// `Yθ = H v̄̇_r + C̄*(q, v̄) v_r + g`.
    pub y: DMatrix<f64>,
    /// `Y_p θ = H v̄`.
    pub y_p: DMatrix<f64>,
    /// `Y_g θ = g`.
    pub y_g: DMatrix<f64>,
    /// `Y_c θ = C̄*ᵀ v̄`.
    pub y_c: DMatrix<f64>,
    /// `Y_T θ = ½ v̄ᵀ H v̄`.
    pub y_t: DMatrix<f64>,
    /// `Y_V̇ θ = v̄ᵀ g`.
    pub y_vdot: DMatrix<f64>,
}

pub fn regressor_bundle(model: &Model, q: &DVector<f64>, v: &DVector<f64>, vr: &DVector<f64>, vr_dot: &DVector<f64>) -> Result<RegressorBundle> {
    let (kin, sw) = reference_sweep(model, q, v, vr, vr_dot)?;
    let (m, np) = (model.nv(), 10 * model.nbodies());
    let mut out = RegressorBundle {
        y: DMatrix::zeros(m, np),
        y_p: DMatrix::zeros(m, np),
        y_g: DMatrix::zeros(m, np),
        y_c: DMatrix::zeros(m, np),
        y_t: DMatrix::zeros(1, np),
        y_vdot: DMatrix::zeros(1, np),
    };
    let nc = model.nclusters();
    for j in (0..nc).rev() {
        let zeros = DVector::zeros(sw.v[j].len());
        let mut fj = cluster_regressor(&sw.a[j], &sw.v[j], &sw.w[j]);
        let mut hj = cluster_regressor(&sw.v[j], &zeros, &zeros);
        let mut gj = cluster_regressor(&sw.ag[j], &zeros, &zeros);
        let yt = hj.tr_mul(&sw.v[j]) * 0.5;
        let yv = gj.tr_mul(&sw.v[j]);
        for (local, global) in param_columns(model, j) {
            out.y_t.view_mut((0, global), (1, 10)).copy_from(&yt.rows(local, 10).transpose());
            out.y_vdot.view_mut((0, global), (1, 10)).copy_from(&yv.rows(local, 10).transpose());
        }
        let mut i = j;
        loop {
            let ci = &model.clusters()[i];
            let phi = &kin.clusters[i].phi;
            let blocks =
                [(phi.tr_mul(&fj), &mut out.y), (phi.tr_mul(&hj), &mut out.y_p), (sw.phi_dot[i].tr_mul(&hj), &mut out.y_c), (phi.tr_mul(&gj), &mut out.y_g)];
            for (blk, target) in blocks {
                for (local, global) in param_columns(model, j) {
                    target.view_mut((ci.v_offset, global), (ci.nv(), 10)).copy_from(&blk.columns(local, 10));
                }
            }
            let Some(p) = ci.parent else { break };
            let x = &kin.clusters[i].x_parent;
            fj = x.tr_mul(&fj);
            hj = x.tr_mul(&hj);
            gj = x.tr_mul(&gj);
            i = p;
        }
    }
    Ok(out)
}

/// Output of `λ/(s+λ)` applied to a sampled signal: trapezoidal convolution
/// with the exact exponential kernel,
/// `F_{n+1} = e^{−λΔt} F_n + ½Δt λ (e^{−λΔt} x_n + x_{n+1})`.
#[derive(Debug, Clone)]
pub struct LowPass<T> {
    decay: f64,
    half_gain: f64,
    state: Option<(T, T)>,
}

impl<T> LowPass<T>
where
    T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    pub fn new(pole: f64, dt: f64) -> Self {
        Self { decay: (-pole * dt).exp(), half_gain: 0.5 * dt * pole, state: None }
    }

    /// Feeds the next sample and returns the filtered value at its time.
    pub fn push(&mut self, x: T) -> T {
        let out = match self.state.take() {
            None => x.clone() * 0.0,
            Some((f, prev)) => f * self.decay + (prev * self.decay + x.clone()) * self.half_gain,
        };
        self.state = Some((out.clone(), x));
        out
    }
}

/// Streaming filtered-momentum residual
/// `e = λp − w(t)p(0) − filt(λp + Cᵀv − g) − filt(τ)` with `w(t) = λe^{−λt}`,
/// evaluated with the model's own parameters. The residual vanishes (up to
/// integration error) when the model is exact.
#[derive(Debug, Clone)]
pub struct MomentumFilter {
    pub pole: f64,
    nv: usize,
    dt: Option<f64>,
    t: f64,
    p0: Option<DVector<f64>>,
    filt_tau: Option<LowPass<DVector<f64>>>,
    filt_rhs: Option<LowPass<DVector<f64>>>,
}

impl MomentumFilter {
    pub fn new(pole: f64, nv: usize) -> Result<Self> {
        if !(pole > 0.0) {
            return Err(Error::InvalidConfig(format!("filter pole must be positive, got {pole}")));
        }
        Ok(Self { pole, nv, dt: None, t: 0.0, p0: None, filt_tau: None, filt_rhs: None })
    }

    pub fn reset(&mut self) {
        *self = Self { pole: self.pole, nv: self.nv, dt: None, t: 0.0, p0: None, filt_tau: None, filt_rhs: None };
    }

    /// Feeds one sample spaced `dt` after the previous one.
    pub fn push(&mut self, model: &Model, q: &DVector<f64>, v: &DVector<f64>, tau: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        let dt0 = *self.dt.get_or_insert(dt);
        if (dt - dt0).abs() > 1e-9 * dt0 {
            return Err(Error::NonUniformSampling(format!("step {dt} differs from {dt0}")));
        }
        let lam = self.pole;
        let p = crate::dynamics::mass_matrix(model, q)? * v;
        let ctv = crate::dynamics::coriolis_transpose_times_v(model, q, v)?;
        let g = crate::dynamics::gravity_torque(model, q)?;
        let rhs = &p * lam + ctv - g;
        if self.p0.is_none() {
            self.p0 = Some(p.clone());
            self.filt_tau = Some(LowPass::new(lam, dt0));
            self.filt_rhs = Some(LowPass::new(lam, dt0));
        } else {
            self.t += dt0;
        }
        let ft = self.filt_tau.as_mut().expect("initialised").push(tau.clone());
        let fr = self.filt_rhs.as_mut().expect("initialised").push(rhs);
        let w = lam * (-lam * self.t).exp();
        Ok(p * lam - self.p0.as_ref().expect("initialised") * w - fr - ft)
    }
}

/// A uniformly sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub tau: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Sample spacing, after checking the samples are uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        let n = self.t.len();
        if n < 2 || self.q.len() != n || self.v.len() != n || self.tau.len() != n {
            return Err(Error::Shape("trajectory needs at least two samples with matching columns".into()));
        }
        let dt = self.t[1] - self.t[0];
        if !(dt > 0.0) {
            return Err(Error::NonUniformSampling("time must increase".into()));
        }
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::NonUniformSampling(format!("step {} at t = {} differs from {dt}", w[1] - w[0], w[0])));
            }
        }
        Ok(dt)
    }
}

/// Filtered identification residuals along a trajectory.
#[derive(Debug, Clone)]
pub struct FilteredResidual {
    /// Residual evaluated at `θ̂`, per sample.
    pub residual: Vec<DVector<f64>>,
    /// Filtered regressor `W_n`, so that `residual_n = W_n θ̂ − filt(τ)_n`.
    pub regressor: Vec<DMatrix<f64>>,
    /// `filt(τ)` (or `filt(vᵀτ)` for the energy form).
    pub filtered_input: Vec<DVector<f64>>,
}

/// Momentum form: `W = λY_p − w(t) Y_p(0) − filt(λY_p + Y_c − Y_g)`.
pub fn filtered_momentum_residual(model: &Model, traj: &Trajectory, theta_hat: &DVector<f64>, pole: f64) -> Result<FilteredResidual> {
    filtered_residual(model, traj, theta_hat, pole, false)
}

/// Energy form: `W = λY_T − w(t) Y_T(0) − filt(λY_T − Y_V̇)` against `filt(vᵀτ)`.
pub fn filtered_energy_residual(model: &Model, traj: &Trajectory, theta_hat: &DVector<f64>, pole: f64) -> Result<FilteredResidual> {
    filtered_residual(model, traj, theta_hat, pole, true)
}

fn filtered_residual(model: &Model, traj: &Trajectory, theta_hat: &DVector<f64>, pole: f64, energy: bool) -> Result<FilteredResidual> {
    let dt = traj.uniform_step()?;
    if !(pole > 0.0) {
        return Err(Error::InvalidConfig(format!("filter pole must be positive, got {pole}")));
    }
    if theta_hat.len() != 10 * model.nbodies() {
        return Err(Error::Shape(format!("θ̂ has {} entries, expected {}", theta_hat.len(), 10 * model.nbodies())));
    }
    let mut f_in = LowPass::<DVector<f64>>::new(pole, dt);
    let mut f_reg = LowPass::<DMatrix<f64>>::new(pole, dt);
    let mut first: Option<DMatrix<f64>> = None;
    let mut out = FilteredResidual { residual: Vec::new(), regressor: Vec::new(), filtered_input: Vec::new() };
    let zero = DVector::zeros(model.nv());
    for n in 0..traj.t.len() {
        let (q, v, tau) = (&traj.q[n], &traj.v[n], &traj.tau[n]);
        let rb = regressor_bundle(model, q, v, &zero, &zero)?;
        let (state_reg, input, rhs_reg) = if energy {
            let input = DVector::from_element(1, v.dot(tau));
            (rb.y_t.clone(), input, &rb.y_t * pole - &rb.y_vdot)
        } else {
            (rb.y_p.clone(), tau.clone(), &rb.y_p * pole + &rb.y_c - &rb.y_g)
        };
        let y0 = first.get_or_insert_with(|| state_reg.clone()).clone();
        let t = traj.t[n] - traj.t[0];
        let w = pole * (-pole * t).exp();
        let filt_rhs = f_reg.push(rhs_reg);
        let reg = state_reg * pole - y0 * w - filt_rhs;
        let fi = f_in.push(input);
        out.residual.push(&reg * theta_hat - &fi);
        out.regressor.push(reg);
        out.filtered_input.push(fi);
    }
    Ok(out)
}
