//! `coriolis-kit`: command-line access to the Coriolis, Christoffel and
//! regressor routines.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

const EXAMPLES: &str = "\
Examples:
  coriolis-kit coriolis --model arm6 --random --seed 3
  coriolis-kit christoffel --model planar2r --state zero --algorithm sweep
  coriolis-kit regressors --model pendulum --state state.json --which p,g
  coriolis-kit identify --model planar2r --trajectory run.csv --form energy
  coriolis-kit simulate --model point_mass --no-gravity --state '{\"q\":[0,0,0],\"v\":[0,1,0]}' --theta-hat-scale 0.9 --factorization beta=-5 --out run.csv
  coriolis-kit bench --family tree --sizes 8,16,32,64
  coriolis-kit validate --model arm6.json

Models are bundled names (point_mass, pendulum, planar2r, arm6, free_tree,
tree4, geared_pair, belt_two_link) or paths to model JSON files.
CORIOLIS_KIT_THREADS caps the number of worker threads.
Exit status: 0 success, 1 validation failure, 2 usage error.";

#[derive(Parser)]
#[command(name = "coriolis-kit", version, about = "Coriolis factorizations, Christoffel symbols and adaptive-control regressors for rigid-body models", after_help = EXAMPLES)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Seed for random states and generated models.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
}

/// Where the evaluation state comes from.
#[derive(Args, Clone)]
pub struct StateArgs {
    /// Model name or JSON path.
    #[arg(long)]
    model: String,
    /// `zero`, a JSON file `{"q": [..], "v": [..]}`, or that JSON inline.
    #[arg(long, conflicts_with = "random")]
    state: Option<String>,
    /// Draw a random state from `--seed`.
    #[arg(long)]
    random: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CoriolisMethod {
    Recursive,
    Projected,
    SpanningTree,
    Derivative,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ChristoffelAlgorithm {
    Fast,
    Sweep,
    Fd,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum IdentifyForm {
    Momentum,
    Energy,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ControllerKind {
    Passivity,
    Adaptive,
    Unforced,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ReferenceKind {
    Line,
    Hold,
    Sine,
}

#[derive(Subcommand)]
enum Command {
    /// Mass matrix and Coriolis matrix at one state.
    #[command(after_help = "Example:\n  coriolis-kit coriolis --model arm6 --random --seed 3")]
    Coriolis {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value_t = CoriolisMethod::Recursive)]
        method: CoriolisMethod,
    },
    /// Christoffel symbols of the torsion-free factorization at one configuration.
    #[command(after_help = "Example:\n  coriolis-kit christoffel --model planar2r --state zero --algorithm sweep")]
    Christoffel {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value_t = ChristoffelAlgorithm::Fast)]
        algorithm: ChristoffelAlgorithm,
    },
    /// Regressor matrices. The state file may also carry `vr` and `vr_dot`
    /// (defaults: `vr = v`, `vr_dot = 0`).
    #[command(after_help = "Example:\n  coriolis-kit regressors --model pendulum --state state.json --which p,g")]
    Regressors {
        #[command(flatten)]
        state: StateArgs,
        /// Comma list from y, p, g, c, t, vdot, or `all`.
        #[arg(long, default_value = "all")]
        which: String,
    },
    /// Least-squares parameter estimate from a logged trajectory, using the
    /// filtered momentum or energy relation.
    #[command(after_help = "Example:\n  coriolis-kit identify --model planar2r --trajectory run.csv --form energy")]
    Identify {
        #[arg(long)]
        model: String,
        /// CSV with columns t, q1.., v1.., tau1.. (as written by `simulate`).
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value_t = IdentifyForm::Momentum)]
        form: IdentifyForm,
        /// Pole of the first-order filter, 1/s.
        #[arg(long, default_value_t = coriolis_core::adaptive::DEFAULT_FILTER_POLE)]
        pole: f64,
    },
    /// Closed-loop simulation with the passivity-based tracking controller.
    #[command(
        after_help = "Example:\n  coriolis-kit simulate --model point_mass --no-gravity --state '{\"q\":[0,0,0],\"v\":[0,1,0]}' --theta-hat-scale 0.9 --factorization beta=-5 --out run.csv"
    )]
    Simulate {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value_t = ControllerKind::Passivity)]
        controller: ControllerKind,
        /// `star` for the torsion-free law or `beta=<val>` for C = β(v×) on three-speed models.
        #[arg(long, default_value = "star")]
        factorization: String,
        /// Reference; defaults to `line` on three-speed models and `sine` otherwise.
        #[arg(long, value_enum)]
        reference: Option<ReferenceKind>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        kd: f64,
        /// Estimate used by the controller, as a multiple of the true parameters.
        #[arg(long, default_value_t = 1.0)]
        theta_hat_scale: f64,
        /// Adaptation gain for `--controller adaptive`.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 20.0)]
        tfinal: f64,
        /// Hold the torque over each step instead of re-evaluating per stage.
        #[arg(long)]
        zero_order_hold: bool,
        /// Drop gravity from the plant.
        #[arg(long)]
        no_gravity: bool,
    },
    /// Timings of the recursive algorithms on generated models.
    #[command(after_help = "Example:\n  coriolis-kit bench --family tree --sizes 8,16,32,64")]
    Bench {
        #[arg(long, value_enum, default_value_t = FamilyArg::Tree)]
        family: FamilyArg,
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Cross-checks every factorization path on random states.
    #[command(after_help = "Example:\n  coriolis-kit validate --model arm6.json")]
    Validate {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Chain,
    Tree,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match cli.command {
        Command::Coriolis { state, method } => commands::coriolis(c, &state, method),
        Command::Christoffel { state, algorithm } => commands::christoffel(c, &state, algorithm),
        Command::Regressors { state, which } => commands::regressors(c, &state, &which),
        Command::Identify { model, trajectory, form, pole } => commands::identify(c, &model, &trajectory, form, pole),
        Command::Simulate { state, controller, factorization, reference, lambda, kd, theta_hat_scale, gamma, dt, tfinal, zero_order_hold, no_gravity } => {
            commands::simulate(
                c,
                &state,
                &commands::SimulateArgs { controller, factorization, reference, lambda, kd, theta_hat_scale, gamma, dt, tfinal, zero_order_hold, no_gravity },
            )
        }
        Command::Bench { family, sizes, reps } => commands::bench(c, family, &sizes, reps),
        Command::Validate { model, samples } => commands::validate(c, &model, samples),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
