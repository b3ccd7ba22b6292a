use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use msoe_core::experiments::{
    bias_variance_sweep, clt_study, independence_check, section, semimarkov_surface, truth_curves,
    variance_lemma_check, CltConfig, IndependenceConfig, LemmaConfig, Scenario, SliceSpec, SurfaceConfig,
    SweepConfig, TransitionRef,
};
use msoe_core::intensity::IntensityModel;
use msoe_core::io::config::{ExperimentSection, SliceSection};
use msoe_core::io::output::write_tree_leaves;
use msoe_core::io::{
    ingest_events, parse_transition, write_clt, write_events, write_independence, write_lasso_path_summary,
    write_lemma, write_oe_table, write_rate_fit, write_slice, write_surface_truth, write_sweep, write_truth,
    AppConfig, FitTag, Manifest,
};
use msoe_core::oe::{aggregate_1d, aggregate_2d, oe_rates, GridSpec, Layout, Method, OETable};
use msoe_core::regularized::lasso::DEFAULT_TOL;
use msoe_core::regularized::{lasso_path, lasso_to_ratefit, tree_fit, tree_to_ratefit, TreeParams};
use msoe_core::sim::{simulate_cohort, Trajectory};

use crate::error::{invalid, CliError};
use crate::output::OutDir;
use crate::{Command, Common, DataArgs};

const DEFAULT_TRANSITION: &str = "1->2";
const DEFAULT_T0: f64 = 20.0;
const SWEEP_MESHES: [usize; 8] = [5, 10, 15, 20, 30, 40, 60, 80];
const CLT_MESHES: [usize; 3] = [5, 15, 75];
const SURFACE_N: usize = 20_000;
const SURFACE_N_PAPER: usize = 100_000;

pub fn run(command: Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::Estimate(d) => estimate(&d, None),
        Command::Lasso(d) => estimate(&d, Some(Method::Lasso)),
        Command::Tree(d) => estimate(&d, Some(Method::Tree)),
        Command::Slice(d) => slice(&d),
        Command::Sweep(c) => sweep(&c),
        Command::Clt(c) => clt(&c),
        Command::Independence(c) => independence(&c),
        Command::LemmaCheck(c) => lemma(&c),
        Command::Surface(c) => surface(&c),
    }
}

/// Loaded configuration with the seed override applied, plus its output
/// directory.
struct Run {
    cfg: AppConfig,
    out: OutDir,
    manifest: Manifest,
}

impl Run {
    fn start(name: &str, common: &Common) -> Result<Self, CliError> {
        let mut cfg = AppConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            let sim = cfg.simulation.as_mut().ok_or_else(|| invalid("--seed needs a [simulation] section"))?;
            sim.master_seed = seed;
        }
        let manifest = Manifest::new(name, Some((&cfg.path, &cfg.source)), cfg.master_seed(), common.paper_scale);
        let out = OutDir::create(&common.out_dir)?;
        log::info!("{name}: config {}", cfg.path.display());
        Ok(Run { cfg, out, manifest })
    }

    fn finish(self) -> Result<Vec<PathBuf>, CliError> {
        self.out.finish(self.manifest)
    }

    fn seed(&self) -> Result<u64, CliError> {
        Ok(self.cfg.simulation()?.master_seed)
    }

    fn experiment(&self) -> ExperimentSection {
        self.cfg.experiment()
    }

    fn transition(&self) -> Result<TransitionRef, CliError> {
        let text = self.experiment().transition.unwrap_or_else(|| DEFAULT_TRANSITION.to_string());
        parse_transition(&text).ok_or_else(|| invalid(format!("bad transition {text:?}")))
    }
}

fn simulate(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("simulate", common)?;
    let sim = run.cfg.sim_config()?;
    let cohort = simulate_cohort(&sim)?;
    log::info!("simulated {} subjects", cohort.len());
    write_events(&cohort, sim.model.states(), run.out.file("events.csv")?)?;
    run.finish()
}

struct Data {
    cohort: Vec<Trajectory>,
    layout: Layout,
    model: Option<IntensityModel>,
    simulated: bool,
}

fn load_data(cfg: &AppConfig, events: Option<&Path>) -> Result<Data, CliError> {
    let model = cfg.model.as_ref().map(|_| cfg.model()).transpose()?;
    match events {
        Some(path) => {
            let file = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let states = model.as_ref().map(|m| m.states().to_vec());
            let history = ingest_events(BufReader::new(file), states.as_deref())?;
            log::info!("read {} subjects from {}", history.trajectories.len(), path.display());
            let layout = match &model {
                Some(m) => Layout::from_model(m),
                None => Layout::discover(history.states, &history.trajectories),
            };
            Ok(Data { cohort: history.trajectories, layout, model, simulated: false })
        }
        None => {
            let sim = cfg.sim_config()?;
            let cohort = simulate_cohort(&sim)?;
            log::info!("simulated {} subjects", cohort.len());
            Ok(Data { cohort, layout: Layout::from_model(&sim.model), model: Some(sim.model), simulated: true })
        }
    }
}

fn aggregate(data: &Data, grid: GridSpec) -> Result<OETable, CliError> {
    Ok(match grid {
        GridSpec::Time(g) => aggregate_1d(&data.cohort, g, &data.layout)?,
        GridSpec::TimeDuration(g) => aggregate_2d(&data.cohort, g, &data.layout)?,
    })
}

/// Index of the configured transition, or the only one when unset.
fn chosen_transition(layout: &Layout, name: Option<&str>) -> Result<usize, CliError> {
    match name {
        Some(text) => {
            let tr = parse_transition(text).ok_or_else(|| invalid(format!("bad transition {text:?}")))?;
            layout.find(&tr.from, &tr.to).ok_or_else(|| invalid(format!("no transition {text} in the data")))
        }
        None if layout.transitions.len() == 1 => Ok(0),
        None => Err(invalid("estimation.transition must name one transition for regularised fits")),
    }
}

fn estimate(args: &DataArgs, forced: Option<Method>) -> Result<Vec<PathBuf>, CliError> {
    let est_name = forced.map_or("estimate", Method::as_str);
    let mut run = Run::start(est_name, &args.common)?;
    let est = run.cfg.estimation();
    let method = forced.unwrap_or(est.method);
    let grid = run.cfg.grid_spec()?;
    let data = load_data(&run.cfg, args.events.as_deref())?;
    let table = aggregate(&data, grid)?;
    write_oe_table(&table, run.out.file("oe_table.csv")?)?;

    if method == Method::Oe {
        let fit = oe_rates(&table, est.level, est.interval_scale)?;
        write_rate_fit(&fit, FitTag::Plain, run.out.file("fit.csv")?)?;
        if let (true, Some(model), GridSpec::Time(g)) = (data.simulated, &data.model, grid) {
            write_truth(&truth_curves(model, &g), run.out.file("truth.csv")?)?;
        }
        return run.finish();
    }

    let GridSpec::Time(time) = grid else {
        return Err(invalid("lasso and tree fits need a time-only grid"));
    };
    let idx = chosen_transition(&data.layout, est.transition.as_deref())?;
    let label = data.layout.transition_label(idx);
    let o = table.occurrences(idx).to_vec();
    let e: Vec<f64> = (0..time.bins()).map(|b| table.transition_exposure(idx, b)).collect();

    if method == Method::Lasso {
        let lambdas = match (&est.lambdas, est.lambda) {
            (Some(l), _) => l.clone(),
            (None, Some(l)) => vec![l],
            (None, None) => return Err(invalid("lasso needs estimation.lambda or estimation.lambdas")),
        };
        let path = lasso_path(&o, &e, &lambdas, est.tol.unwrap_or(DEFAULT_TOL))?;
        for (i, fit) in path.iter().enumerate() {
            if !fit.converged {
                log::warn!("lambda {}: optimality gap {:.3e} after {} iterations", fit.lambda, fit.optimality_gap, fit.iterations);
            }
            let rf = lasso_to_ratefit(fit, &e, time, &label, est.level)?;
            write_rate_fit(&rf, FitTag::Lasso(fit.lambda), run.out.file(&format!("lasso_fit_{i:03}.csv"))?)?;
        }
        write_lasso_path_summary(&path, run.out.file("lasso_path.csv")?)?;
    } else {
        let params = est.tree.as_ref().map(TreeParams::from).unwrap_or_default();
        let tree = tree_fit(&o, &e, params)?;
        let rf = tree_to_ratefit(&tree, time, &label, est.level)?;
        write_rate_fit(&rf, FitTag::Tree(&tree), run.out.file("tree_fit.csv")?)?;
        write_tree_leaves(&tree, &time, run.out.file("tree_leaves.csv")?)?;
    }
    run.finish()
}

fn file_stem(label: &str) -> String {
    label.replace("->", "_").chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect()
}

fn slice_file(transition: &str, d: f64) -> String {
    format!("slice_{}_d{}.csv", file_stem(transition), d)
}

fn slice_specs(sections: &Option<Vec<SliceSection>>) -> Result<Option<Vec<SliceSpec>>, CliError> {
    let Some(list) = sections else { return Ok(None) };
    list.iter()
        .map(|s| {
            let transition =
                parse_transition(&s.transition).ok_or_else(|| invalid(format!("bad transition {:?}", s.transition)))?;
            Ok(SliceSpec { transition, d: s.d })
        })
        .collect::<Result<Vec<_>, CliError>>()
        .map(Some)
}

fn slice(args: &DataArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("slice", &args.common)?;
    let est = run.cfg.estimation();
    let grid = run.cfg.grid_spec()?;
    if grid.duration().is_none() {
        return Err(invalid("slice needs a [grid.duration] block"));
    }
    let specs = slice_specs(&est.slices)?.ok_or_else(|| invalid("slice needs [[estimation.slices]] entries"))?;
    let data = load_data(&run.cfg, args.events.as_deref())?;
    let table = aggregate(&data, grid)?;
    let fit = oe_rates(&table, est.level, est.interval_scale)?;
    write_rate_fit(&fit, FitTag::Plain, run.out.file("fit.csv")?)?;
    for spec in &specs {
        let idx = data
            .layout
            .find(&spec.transition.from, &spec.transition.to)
            .ok_or_else(|| invalid(format!("no transition {} in the data", spec.transition.label())))?;
        let (from, to) = data.layout.transitions[idx];
        let truth = data.model.as_ref().and_then(|m| m.transition(from, to)).map(|t| &t.expr);
        let s = section(&table, &fit, idx, spec.d, truth)?;
        write_slice(&s, run.out.file(&slice_file(&s.transition, s.d))?)?;
    }
    run.finish()
}

fn scenario_with_span(run: &Run) -> Result<(Scenario, f64), CliError> {
    let scenario = run.cfg.scenario()?;
    let span = run.experiment().t_max.unwrap_or(scenario.horizon);
    Ok((scenario, span))
}

fn sweep(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("sweep", common)?;
    let (scenario, span) = scenario_with_span(&run)?;
    let e = run.experiment();
    let cfg = SweepConfig {
        scenario,
        transition: run.transition()?,
        n: e.n.unwrap_or(500),
        reps: e.reps.unwrap_or(1000),
        meshes: e.meshes.clone().unwrap_or_else(|| SWEEP_MESHES.to_vec()),
        t0: e.t0.unwrap_or(DEFAULT_T0),
        grid_t0: 0.0,
        grid_t_max: span,
        master_seed: run.seed()?,
    };
    let rows = bias_variance_sweep(&cfg)?;
    write_sweep(&rows, run.out.file("sweep.csv")?)?;
    run.finish()
}

fn clt(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("clt", common)?;
    let (scenario, span) = scenario_with_span(&run)?;
    let e = run.experiment();
    let cfg = CltConfig {
        scenario,
        transition: run.transition()?,
        n: e.n.unwrap_or(500),
        reps: e.reps.unwrap_or(1000),
        meshes: e.meshes.clone().unwrap_or_else(|| CLT_MESHES.to_vec()),
        t0: e.t0.unwrap_or(DEFAULT_T0),
        grid_t0: 0.0,
        grid_t_max: span,
        master_seed: run.seed()?,
    };
    let samples = clt_study(&cfg)?;
    let z = run.out.file("clt_z.csv")?;
    let summary = run.out.file("clt_summary.csv")?;
    write_clt(&samples, z, summary)?;
    run.finish()
}

fn independence(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("independence", common)?;
    let (scenario, span) = scenario_with_span(&run)?;
    let e = run.experiment();
    let cfg = IndependenceConfig {
        scenario,
        transition: run.transition()?,
        n: e.n.unwrap_or(500),
        reps: e.reps.unwrap_or(2000),
        m: e.m.unwrap_or(15),
        s: e.s.unwrap_or(15.0),
        t: e.t.unwrap_or(25.0),
        u: e.u,
        grid_t_max: span,
        level: e.level.unwrap_or(0.95),
        master_seed: run.seed()?,
    };
    let result = independence_check(&cfg)?;
    write_independence(&[result], run.out.file("independence.csv")?)?;
    run.finish()
}

fn lemma(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("lemma-check", common)?;
    let scenario = run.cfg.scenario()?;
    let e = run.experiment();
    let duration = match (e.u, e.delta_u) {
        (Some(u), Some(du)) => Some((u, du)),
        (None, None) => None,
        _ => return Err(invalid("experiment.u and experiment.delta_u must be set together")),
    };
    let cfg = LemmaConfig {
        scenario,
        transition: run.transition()?,
        n: e.n.unwrap_or(200_000),
        t: e.t.unwrap_or(DEFAULT_T0),
        delta: e.delta.unwrap_or(0.25),
        duration,
        master_seed: run.seed()?,
    };
    let report = variance_lemma_check(&cfg)?;
    write_lemma(&report, run.out.file("lemma.csv")?)?;
    run.finish()
}

fn surface(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start("surface", common)?;
    let (scenario, span) = scenario_with_span(&run)?;
    let e = run.experiment();
    let est = run.cfg.estimation();
    let default_n = if common.paper_scale { SURFACE_N_PAPER } else { SURFACE_N };
    let cfg = SurfaceConfig {
        scenario,
        n: e.n.unwrap_or(default_n),
        t_max: span,
        mesh: e.mesh.unwrap_or(2.0),
        level: est.level,
        scale: est.interval_scale,
        slices: slice_specs(&est.slices)?.unwrap_or_else(SurfaceConfig::default_slices),
        master_seed: run.seed()?,
    };
    let result = semimarkov_surface(&cfg)?;
    write_rate_fit(&result.fit, FitTag::Plain, run.out.file("surface_fit.csv")?)?;
    write_surface_truth(&result.truth, run.out.file("surface_truth.csv")?)?;
    for s in &result.slices {
        write_slice(s, run.out.file(&slice_file(&s.transition, s.d))?)?;
    }
    run.finish()
}
