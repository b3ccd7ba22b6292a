//! `msoe`: simulate multi-state cohorts, fit occurrence/exposure and
//! regularised intensity estimates, and run the Monte-Carlo studies.
//!
//! Exit status is 0 on success, 1 for usage or validation errors and 2 for
//! failures while running. Written files are listed on stdout; logging goes
//! to stderr and is controlled by `MSOE_LOG` (e.g. `MSOE_LOG=debug`).

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "msoe", version, about = "Occurrence/exposure estimation for censored multi-state processes")]
#[command(after_long_help = CONFIG_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file (TOML); see `msoe --help` for every key.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Directory receiving CSV outputs and manifest.json.
    #[arg(long, short, default_value = "out")]
    pub out_dir: PathBuf,
    /// Use the larger cohort sizes of the published study where they differ.
    #[arg(long)]
    pub paper_scale: bool,
    /// Overrides simulation.master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Event-history CSV (`id,time,from,to`) to fit instead of simulating.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a cohort and write events.csv.
    Simulate(Common),
    /// Fit the method named in [estimation] (oe, lasso or tree).
    Estimate(DataArgs),
    /// Bias/variance of the estimate at t0 across bin counts.
    Sweep(Common),
    /// Distribution of the normalised estimate across bin counts.
    Clt(Common),
    /// Correlation of estimates at two distinct time points.
    Independence(Common),
    /// Moments of single-subject occurrence and exposure in one bin.
    LemmaCheck(Common),
    /// Time-by-duration fit of the semi-Markov model with truth and sections.
    Surface(Common),
    /// Fused-lasso fit, or path when estimation.lambdas is set.
    Lasso(DataArgs),
    /// Poisson deviance regression tree.
    Tree(DataArgs),
    /// Sections `t - u = d` through a time-by-duration fit.
    Slice(DataArgs),
}

const CONFIG_HELP: &str = "\
CONFIGURATION (TOML, unknown keys are errors)
  [model]        kind = \"markov\" | \"semi_markov\"; states = [..]; absorbing = [..] (default [])
  [[model.transition]]  from, to, rate = expression in t (and u for semi_markov)
                 functions: exp log sin cos; operators + - * / and parentheses
  [simulation]   n, horizon, initial_state, master_seed (required)
                 window = 1.0 (thinning window length)
  [simulation.censoring]  law = \"uniform\" (lo, hi) | \"fixed\" (r) | \"none\" (horizon)
  [grid]         t0 = 0, t_max, bins; optional [grid.duration] u_max, bins
  [estimation]   method = \"oe\" | \"lasso\" | \"tree\" (default oe); level = 0.95
                 interval_scale = \"raw\" | \"log\" (default raw); transition = \"a->b\"
                 lambda or lambdas = [..]; tol = 1e-10
                 [estimation.tree] max_depth = 4, min_exposure = 1.0, min_gain = 0.0
                 [[estimation.slices]] transition, d
  [experiment]   overrides for the studies; unset keys take these defaults:
                 transition = \"1->2\", t0 = 20, t_max = horizon
                 sweep: n = 500, reps = 1000, meshes = [5,10,15,20,30,40,60,80]
                 clt: n = 500, reps = 1000, meshes = [5,15,75]
                 independence: n = 500, reps = 2000, m = 15, s = 15, t = 25, u unset, level = 0.95
                 lemma-check: n = 200000, t = 20, delta = 0.25, u and delta_u unset
                 surface: n = 20000 (100000 with --paper-scale), mesh = 2, t_max = horizon

ENVIRONMENT
  MSOE_LOG       log filter for stderr (error, warn, info, debug, trace)";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSOE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
