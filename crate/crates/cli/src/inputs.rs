//! Model, state and trajectory loading, and output sinks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use coriolis_core::adaptive::Trajectory;
use coriolis_core::model::{bundled_model, load_model, ConfigState, Model};
use coriolis_core::oracles::random_state;
use nalgebra::DVector;
use serde::Deserialize;

use crate::{Common, StateArgs};

/// A path wins over a bundled name of the same spelling.
pub fn model(spec: &str) -> Result<Model> {
    let path = Path::new(spec);
    if path.is_file() {
        return load_model(path).with_context(|| format!("loading {spec}"));
    }
    bundled_model(spec).map_err(|e| anyhow!("'{spec}' is neither a readable file nor a bundled model: {e}"))
}

#[derive(Deserialize)]
struct StateDoc {
    q: Vec<f64>,
    v: Vec<f64>,
    #[serde(default)]
    vr: Option<Vec<f64>>,
    #[serde(default)]
    vr_dot: Option<Vec<f64>>,
}

/// State plus the optional reference speed and acceleration.
pub struct LoadedState {
    pub state: ConfigState,
    pub vr: Option<DVector<f64>>,
    pub vr_dot: Option<DVector<f64>>,
}

pub fn state(model: &Model, args: &StateArgs, seed: u64) -> Result<LoadedState> {
    let loaded = match (&args.state, args.random) {
        (_, true) => LoadedState { state: random_state(model, seed), vr: None, vr_dot: None },
        (None, false) => LoadedState { state: model.neutral_state(), vr: None, vr_dot: None },
        (Some(s), false) if s == "zero" => LoadedState { state: model.neutral_state(), vr: None, vr_dot: None },
        (Some(s), false) => {
            let text =
                if s.trim_start().starts_with('{') { s.clone() } else { std::fs::read_to_string(s).with_context(|| format!("reading state file {s}"))? };
            let doc: StateDoc = serde_json::from_str(&text).context("state JSON must look like {\"q\": [..], \"v\": [..]}")?;
            let nv = model.nv();
            let opt = |x: Option<Vec<f64>>, what: &str| -> Result<Option<DVector<f64>>> {
                match x {
                    Some(x) if x.len() != nv => bail!("{what} has {} entries, model has {nv} speeds", x.len()),
                    other => Ok(other.map(DVector::from_vec)),
                }
            };
            LoadedState {
                state: ConfigState { q: DVector::from_vec(doc.q), v: DVector::from_vec(doc.v) },
                vr: opt(doc.vr, "vr")?,
                vr_dot: opt(doc.vr_dot, "vr_dot")?,
            }
        }
    };
    model.check_state(&loaded.state.q, &loaded.state.v)?;
    Ok(loaded)
}

pub fn sink(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Header names without a trailing `[unit]`.
fn bare(name: &str) -> &str {
    name.split('[').next().unwrap_or(name).trim()
}

/// Reads columns `t, q1.., v1.., tau1..`; other columns are ignored.
pub fn trajectory(model: &Model, path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let head: Vec<String> = rdr.headers()?.iter().map(|h| bare(h).to_string()).collect();
    let col = |name: &str| head.iter().position(|h| h == name).ok_or_else(|| anyhow!("{} lacks column '{name}'", path.display()));
    let pick = |prefix: &str, n: usize| (1..=n).map(|i| col(&format!("{prefix}{i}"))).collect::<Result<Vec<_>>>();
    let (t_col, q_cols, v_cols, tau_cols) = (col("t")?, pick("q", model.nq())?, pick("v", model.nv())?, pick("tau", model.nv())?);
    let mut traj = Trajectory { t: vec![], q: vec![], v: vec![], tau: vec![] };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            let field = rec.get(c).ok_or_else(|| anyhow!("row {} is short", line + 2))?;
            field.trim().parse().with_context(|| format!("row {}: '{field}' is not a number", line + 2))
        };
        let vec = |cols: &[usize]| cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>().map(DVector::from_vec);
        traj.t.push(num(t_col)?);
        traj.q.push(vec(&q_cols)?);
        traj.v.push(vec(&v_cols)?);
        traj.tau.push(vec(&tau_cols)?);
    }
    Ok(traj)
}
