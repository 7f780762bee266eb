use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use coriolis_core::adaptive::{filtered_energy_residual, filtered_momentum_residual, regressor_bundle, FilteredResidual};
use coriolis_core::bench::{run_bench, scaling_report, write_bench_csv, BenchSettings, Family};
use coriolis_core::christoffel::{christoffel_fast, christoffel_sweep};
use coriolis_core::dynamics::{
    coriolis_star, coriolis_via_derivative, maximal_factorization, project_factorization, spanning_tree_factorization, stacked_jacobians,
};
use coriolis_core::model::ConfigState;
use coriolis_core::oracles::{fd_christoffel_coordinates, validate_model, DEFAULT_STEP};
use coriolis_core::simkit::{
    simulate as run_simulation, worker_threads, ControlHold, Controller, FactorizationChoice, PassivityController, SimSettings, TrackingReference,
};
use coriolis_core::Error as CoreError;
use nalgebra::{DMatrix, DVector, Vector6};

use crate::{inputs, ChristoffelAlgorithm, Common, ControllerKind, CoriolisMethod, FamilyArg, Format, IdentifyForm, ReferenceKind, StateArgs};

/// Exit status 1 for failed checks, 2 for anything the caller got wrong.
pub enum Failure {
    Validation(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let failed_check = e
            .chain()
            .any(|c| matches!(c.downcast_ref::<CoreError>(), Some(CoreError::Validation(_) | CoreError::FactorizationCheck(_) | CoreError::Diverged { .. })));
        if failed_check {
            Self::Validation(e)
        } else {
            Self::Usage(e)
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        anyhow::Error::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Usage(e.into())
    }
}

type Outcome = Result<(), Failure>;

const PARAM_NAMES: [&str; 10] =
    ["m[kg]", "hx[kg*m]", "hy[kg*m]", "hz[kg*m]", "Ixx[kg*m^2]", "Iyy[kg*m^2]", "Izz[kg*m^2]", "Ixy[kg*m^2]", "Ixz[kg*m^2]", "Iyz[kg*m^2]"];

fn csv_only(c: &Common) {
    match c.format {
        Format::Csv => {}
    }
}

pub fn coriolis(c: &Common, args: &StateArgs, method: CoriolisMethod) -> Outcome {
    csv_only(c);
    let model = inputs::model(&args.model)?;
    let ConfigState { q, v } = inputs::state(&model, args, c.seed)?.state;
    let (h, cm) = match method {
        CoriolisMethod::Recursive => {
            let r = coriolis_star(&model, &q, &v)?;
            (r.h, r.c)
        }
        CoriolisMethod::Projected => {
            let (a, a_dot) = stacked_jacobians(&model, &q, &v)?;
            let (hm, cm) = maximal_factorization(&model, &q, &v)?;
            project_factorization(&cm, &hm, &a, &a_dot)?
        }
        CoriolisMethod::SpanningTree => {
            let r = spanning_tree_factorization(&model, &q, &v)?;
            (r.h, r.c)
        }
        CoriolisMethod::Derivative => {
            let r = coriolis_via_derivative(&model, &q, &v)?;
            (r.h, r.c)
        }
    };
    let mut out = inputs::sink(c)?;
    writeln!(out, "i[1-based],k[1-based],H_ik[SI],C_ik[SI;Coriolis force_i=sum_k C_ik*v_k]")?;
    for i in 0..h.nrows() {
        for k in 0..h.ncols() {
            writeln!(out, "{},{},{:.15e},{:.15e}", i + 1, k + 1, h[(i, k)], cm[(i, k)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn christoffel(c: &Common, args: &StateArgs, algorithm: ChristoffelAlgorithm) -> Outcome {
    csv_only(c);
    let model = inputs::model(&args.model)?;
    let q = inputs::state(&model, args, c.seed)?.state.q;
    let gamma = match algorithm {
        ChristoffelAlgorithm::Fast => christoffel_fast(&model, &q)?,
        ChristoffelAlgorithm::Sweep => christoffel_sweep(&model, &q)?,
        ChristoffelAlgorithm::Fd => {
            if !model.uses_coordinates() {
                return Err(Failure::Usage(anyhow!("--algorithm fd needs a model whose speeds are coordinate rates")));
            }
            fd_christoffel_coordinates(&model, &q, DEFAULT_STEP)?
        }
    };
    let (n, _, _) = gamma.dims();
    let mut out = inputs::sink(c)?;
    writeln!(out, "i[1-based],j[1-based],k[1-based],Gamma_ijk[SI;C_ik=sum_j Gamma_ijk*v_j]")?;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                writeln!(out, "{},{},{},{:.15e}", i + 1, j + 1, k + 1, gamma.get(i, j, k))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn regressors(c: &Common, args: &StateArgs, which: &str) -> Outcome {
    csv_only(c);
    let model = inputs::model(&args.model)?;
    let loaded = inputs::state(&model, args, c.seed)?;
    let ConfigState { q, v } = loaded.state;
    let vr = loaded.vr.unwrap_or_else(|| v.clone());
    let vr_dot = loaded.vr_dot.unwrap_or_else(|| DVector::zeros(model.nv()));
    let rb = regressor_bundle(&model, &q, &v, &vr, &vr_dot)?;
    let all = [("y", &rb.y), ("p", &rb.y_p), ("g", &rb.y_g), ("c", &rb.y_c), ("t", &rb.y_t), ("vdot", &rb.y_vdot)];
    let picked: Vec<_> = if which == "all" {
        all.to_vec()
    } else {
        which
            .split(',')
            .map(|w| all.iter().find(|(n, _)| *n == w.trim()).copied().ok_or_else(|| anyhow!("unknown regressor '{w}' (y, p, g, c, t, vdot, all)")))
            .collect::<anyhow::Result<_>>()?
    };
    let mut out = inputs::sink(c)?;
    writeln!(out, "regressor,row[1-based],body[1-based],param,value[SI]")?;
    for (name, y) in picked {
        for r in 0..y.nrows() {
            for p in 0..y.ncols() {
                writeln!(out, "{name},{},{},{},{:.15e}", r + 1, p / 10 + 1, PARAM_NAMES[p % 10], y[(r, p)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Least squares on `W θ = filt(input)`. Directions the data cannot see keep
/// the model file's values.
pub fn identify(c: &Common, model_spec: &str, path: &Path, form: IdentifyForm, pole: f64) -> Outcome {
    csv_only(c);
    let model = inputs::model(model_spec)?;
    let traj = inputs::trajectory(&model, path)?;
    let prior = model.theta();
    let fr: FilteredResidual = match form {
        IdentifyForm::Momentum => filtered_momentum_residual(&model, &traj, &prior, pole)?,
        IdentifyForm::Energy => filtered_energy_residual(&model, &traj, &prior, pole)?,
    };
    let p = prior.len();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (w, f) in fr.regressor.iter().zip(&fr.filtered_input) {
        a += w.tr_mul(w);
        b += w.tr_mul(f);
    }
    let svd = a.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let step = svd.solve(&(&b - &a * &prior), eps).map_err(|e| anyhow!("least squares failed: {e}"))?;
    let estimate = &prior + step;
    let rms = |th: &DVector<f64>| {
        let (sum, count) = fr.regressor.iter().zip(&fr.filtered_input).fold((0.0, 0usize), |(s, n), (w, f)| (s + (w * th - f).norm_squared(), n + f.len()));
        (sum / count.max(1) as f64).sqrt()
    };
    eprintln!("samples {}, identifiable directions {rank} of {p}, rms residual {:.3e} -> {:.3e}", traj.t.len(), rms(&prior), rms(&estimate));
    let mut out = inputs::sink(c)?;
    writeln!(out, "param[1-based],body[1-based],name,estimate,model_value")?;
    for k in 0..p {
        writeln!(out, "{},{},{},{:.12e},{:.12e}", k + 1, k / 10 + 1, PARAM_NAMES[k % 10], estimate[k], prior[k])?;
    }
    out.flush()?;
    Ok(())
}

pub struct SimulateArgs {
    pub controller: ControllerKind,
    pub factorization: String,
    pub reference: Option<ReferenceKind>,
    pub lambda: f64,
    pub kd: f64,
    pub theta_hat_scale: f64,
    pub gamma: f64,
    pub dt: f64,
    pub tfinal: f64,
    pub zero_order_hold: bool,
    pub no_gravity: bool,
}

fn factorization(spec: &str) -> anyhow::Result<FactorizationChoice> {
    if spec == "star" {
        return Ok(FactorizationChoice::TorsionFree);
    }
    let beta = spec.strip_prefix("beta=").ok_or_else(|| anyhow!("--factorization takes 'star' or 'beta=<val>', got '{spec}'"))?;
    let beta: f64 = beta.parse().with_context(|| format!("'{beta}' is not a number"))?;
    Ok(FactorizationChoice::constant_beta(beta))
}

pub fn simulate(c: &Common, args: &StateArgs, s: &SimulateArgs) -> Outcome {
    csv_only(c);
    let mut model = inputs::model(&args.model)?;
    if s.no_gravity {
        model.set_gravity(Vector6::zeros());
    }
    let initial = inputs::state(&model, args, c.seed)?.state;
    let controller = match s.controller {
        ControllerKind::Unforced => Controller::Unforced,
        kind => {
            if !(s.lambda >= 0.0 && s.kd > 0.0 && s.gamma > 0.0) {
                return Err(Failure::Usage(anyhow!("need --lambda ≥ 0, --kd > 0 and --gamma > 0")));
            }
            let three = model.nq() == 3 && model.nv() == 3;
            let reference = match s.reference.unwrap_or(if three { ReferenceKind::Line } else { ReferenceKind::Sine }) {
                ReferenceKind::Line if three => TrackingReference::point_mass_line(s.lambda),
                ReferenceKind::Line => return Err(Failure::Usage(anyhow!("--reference line needs a three-coordinate model"))),
                ReferenceKind::Hold => TrackingReference::hold(initial.q.clone(), s.lambda),
                ReferenceKind::Sine => TrackingReference::sinusoid(initial.q.clone(), 0.5, 1.0, s.lambda),
            };
            let theta = model.theta();
            Controller::Passivity(PassivityController {
                reference,
                theta_hat: &theta * s.theta_hat_scale,
                kd: DMatrix::identity(model.nv(), model.nv()) * s.kd,
                factorization: factorization(&s.factorization)?,
                adaptation: matches!(kind, ControllerKind::Adaptive).then(|| DVector::from_element(theta.len(), s.gamma)),
            })
        }
    };
    let settings = SimSettings {
        dt: s.dt,
        t_final: s.tfinal,
        hold: if s.zero_order_hold { ControlHold::ZeroOrder } else { ControlHold::PerStage },
        seed: args.random.then_some(c.seed),
    };
    let log = run_simulation(&model, &controller, &initial, &settings)?;
    if let (Some(first), Some(last)) = (log.lyapunov.first(), log.lyapunov.last()) {
        eprintln!("{} samples, V {first:.6e} -> {last:.6e}, final |s| {:.3e}", log.len(), log.s.last().map_or(0.0, |x| x.norm()));
    }
    let mut out = inputs::sink(c)?;
    log.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn bench(c: &Common, family: FamilyArg, sizes: &[usize], reps: usize) -> Outcome {
    csv_only(c);
    if reps == 0 {
        return Err(Failure::Usage(anyhow!("--reps must be positive")));
    }
    let family = match family {
        FamilyArg::Chain => Family::Chain,
        FamilyArg::Tree => Family::Tree,
    };
    let settings = BenchSettings { family, sizes: sizes.to_vec(), reps, seed: c.seed, ..Default::default() };
    let rows = run_bench(&settings, worker_threads())?;
    if rows.len() >= 2 {
        let r = scaling_report(&rows)?;
        eprintln!(
            "log-log slopes: coriolis vs N*depth {:.2} (R2 {:.3}), fast vs N {:.2}, sweep vs N {:.2}; speedup increasing: {}",
            r.coriolis_vs_nd.slope, r.coriolis_vs_nd.r2, r.fast_vs_n.slope, r.sweep_vs_n.slope, r.speedup_increasing
        );
    }
    let mut out = inputs::sink(c)?;
    write_bench_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn validate(c: &Common, model_spec: &str, samples: usize) -> Outcome {
    csv_only(c);
    if samples == 0 {
        return Err(Failure::Usage(anyhow!("--samples must be positive")));
    }
    let model = inputs::model(model_spec)?;
    let report = validate_model(&model, samples, c.seed)?;
    let mut out = inputs::sink(c)?;
    out.write_all(report.to_csv().as_bytes())?;
    out.flush()?;
    if !report.passed() {
        let failed: Vec<_> = report.rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
        return Err(Failure::Validation(anyhow!("{}: failed {}", report.model, failed.join(", "))));
    }
    Ok(())
}
