//! Timing harness for the recursive algorithms on generated trees.

use std::io::Write;
use std::time::Instant;

use crate::christoffel::{christoffel_fast, christoffel_sweep};
use crate::dynamics::coriolis_star;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::oracles::{balanced_binary_tree, random_open_chain, random_state};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Chain,
    Tree,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "tree" => Ok(Self::Tree),
            other => Err(Error::InvalidConfig(format!("unknown family '{other}' (chain, tree)"))),
        }
    }
}

impl Family {
    pub fn build(self, n: usize, seed: u64) -> Result<Model> {
        match self {
            Self::Chain => random_open_chain(n, seed),
            Self::Tree => balanced_binary_tree(n, seed),
        }
    }
}

/// Best-of-repetitions wall-clock seconds per call for one model size.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: usize,
    pub depth: usize,
    pub coriolis: f64,
    pub fast: f64,
    pub sweep: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.sweep / self.fast
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig("log-log fit needs ≥ 2 positive pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept: my - slope * mx, r2 })
}

fn seconds<F: FnMut() -> Result<()>>(inner: usize, f: &mut F) -> Result<f64> {
    let t0 = Instant::now();
    for _ in 0..inner {
        f()?;
    }
    Ok(t0.elapsed().as_secs_f64() / inner as f64)
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Lower bound on the duration of one timed sample.
    pub min_sample: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { family: Family::Tree, sizes: vec![32, 64, 128, 256], reps: 7, seed: 0, min_sample: 0.01 }
    }
}

type Job<'a> = Box<dyn FnMut() -> Result<()> + 'a>;

/// Rounds of interleaved samples: every round times each size once and a
/// size keeps its fastest sample. Scheduler noise only ever adds time, and
/// interleaving spreads a slow spell across sizes instead of one.
fn bench_sizes(settings: &BenchSettings, sizes: &[usize]) -> Result<Vec<BenchRow>> {
    let mut cases = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let model = settings.family.build(n, settings.seed)?;
        let state = random_state(&model, settings.seed);
        cases.push((n, model, state));
    }
    let mut jobs: Vec<[(Job, usize); 3]> = Vec::with_capacity(cases.len());
    for (_, model, s) in &cases {
        let mut set: [Job; 3] = [
            Box::new(move || coriolis_star(model, &s.q, &s.v).map(drop)),
            Box::new(move || christoffel_fast(model, &s.q).map(drop)),
            Box::new(move || christoffel_sweep(model, &s.q).map(drop)),
        ];
        let mut inner = [1; 3];
        for (k, job) in set.iter_mut().enumerate() {
            let once = seconds(1, job)?;
            inner[k] = ((settings.min_sample / once.max(1e-9)).ceil() as usize).clamp(1, 10_000);
        }
        let [a, b, c] = set;
        jobs.push([(a, inner[0]), (b, inner[1]), (c, inner[2])]);
    }
    let mut best = vec![[f64::INFINITY; 3]; cases.len()];
    for _ in 0..settings.reps.max(1) {
        for (i, set) in jobs.iter_mut().enumerate() {
            for (k, (job, inner)) in set.iter_mut().enumerate() {
                best[i][k] = best[i][k].min(seconds(*inner, job)?);
            }
        }
    }
    Ok(cases.iter().zip(best).map(|((n, model, _), [coriolis, fast, sweep])| BenchRow { n: *n, depth: model.depth(), coriolis, fast, sweep }).collect())
}

/// Times `coriolis_star`, `christoffel_fast` and `christoffel_sweep` per
/// size. Sizes are split over up to `threads` workers; every measurement
/// itself is single-threaded.
pub fn run_bench(settings: &BenchSettings, threads: usize) -> Result<Vec<BenchRow>> {
    if settings.sizes.is_empty() || settings.sizes.contains(&0) {
        return Err(Error::InvalidConfig("sizes must be positive".into()));
    }
    if threads <= 1 {
        return bench_sizes(settings, &settings.sizes);
    }
    let chunks: Vec<Vec<usize>> = (0..threads).map(|w| settings.sizes.iter().copied().skip(w).step_by(threads).collect()).collect();
    let mut rows: Vec<BenchRow> = std::thread::scope(|sc| {
        let handles: Vec<_> = chunks.iter().map(|c| sc.spawn(move || bench_sizes(settings, c))).collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

/// Scaling summary: the Coriolis recursion against `N·d`, and the two
/// Christoffel routines against `N`.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub coriolis_vs_nd: LogLogFit,
    pub fast_vs_n: LogLogFit,
    pub sweep_vs_n: LogLogFit,
    /// `sweep / fast` strictly increases with `N`.
    pub speedup_increasing: bool,
}

pub fn scaling_report(rows: &[BenchRow]) -> Result<ScalingReport> {
    let nd: Vec<f64> = rows.iter().map(|r| (r.n * r.depth) as f64).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let pick = |f: fn(&BenchRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    Ok(ScalingReport {
        coriolis_vs_nd: loglog_fit(&nd, &pick(|r| r.coriolis))?,
        fast_vs_n: loglog_fit(&n, &pick(|r| r.fast))?,
        sweep_vs_n: loglog_fit(&n, &pick(|r| r.sweep))?,
        speedup_increasing: rows.windows(2).all(|w| w[1].speedup() > w[0].speedup()),
    })
}

/// `n,depth,coriolis_s,christoffel_fast_s,christoffel_sweep_s,sweep_over_fast`.
pub fn write_bench_csv(rows: &[BenchRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "n,depth,coriolis_s,christoffel_fast_s,christoffel_sweep_s,sweep_over_fast")?;
    for r in rows {
        writeln!(out, "{},{},{:.6e},{:.6e},{:.6e},{:.4}", r.n, r.depth, r.coriolis, r.fast, r.sweep, r.speedup())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!(loglog_fit(&[1.0], &[1.0]).is_err());
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn tiny_bench_runs() {
        let s = BenchSettings { family: Family::Chain, sizes: vec![2, 4], reps: 1, seed: 1, min_sample: 0.0 };
        let rows = run_bench(&s, 2).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![2, 4]);
        assert!(rows.iter().all(|r| r.coriolis > 0.0 && r.fast > 0.0 && r.sweep > 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert!("ring".parse::<Family>().is_err());
    }
}
